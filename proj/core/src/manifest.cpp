#include "sslseg/manifest.hpp"

#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "sslseg/data.hpp"

namespace sslseg {

const char* split_name(Split s) {
    switch (s) {
        case Split::pretrain: return "pretrain";
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& s) {
    for (Split v : {Split::pretrain, Split::train, Split::val, Split::test})
        if (s == split_name(v)) return v;
    throw FormatError(FormatError::Kind::bad_header, "unknown split name: " + s);
}

std::vector<ManifestEntry> DatasetManifest::split_entries(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.split == s) out.push_back(e);
    return out;
}

void DatasetManifest::validate() const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
        if (!ids.insert(e.subject_id).second)
            throw FormatError(FormatError::Kind::bad_header,
                              "duplicate subject id: " + e.subject_id);
        if (e.split != Split::pretrain && e.label_path.empty())
            throw FormatError(FormatError::Kind::bad_header,
                              "subject " + e.subject_id + " in split " + split_name(e.split) +
                                  " has no labels");
    }
}

DatasetManifest split_manifest(const std::vector<ManifestEntry>& subjects,
                               const std::array<int, 3>& counts, uint64_t seed) {
    std::vector<size_t> labeled, unlabeled;
    for (size_t i = 0; i < subjects.size(); ++i)
        (subjects[i].label_path.empty() ? unlabeled : labeled).push_back(i);

    const int need = counts[0] + counts[1] + counts[2];
    if (need > static_cast<int>(labeled.size()))
        throw ConfigError("split_manifest: requested " + std::to_string(need) +
                          " labeled subjects, only " + std::to_string(labeled.size()) +
                          " available");

    Rng rng = Rng::stream(seed, 0x73706c6974ull);  // split stream
    rng.shuffle(labeled);

    DatasetManifest m;
    m.seed = seed;
    m.entries = subjects;
    size_t at = 0;
    const Split order[3] = {Split::train, Split::val, Split::test};
    for (int s = 0; s < 3; ++s)
        for (int k = 0; k < counts[static_cast<size_t>(s)]; ++k)
            m.entries[labeled[at++]].split = order[s];
    for (; at < labeled.size(); ++at) m.entries[labeled[at]].split = Split::pretrain;
    for (size_t i : unlabeled) m.entries[i].split = Split::pretrain;
    m.validate();
    return m;
}

namespace {
constexpr const char* kManifestMagic = "SSLMANIFEST1";
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    m.validate();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + tmp.string());
        f << kManifestMagic << "\n";
        f << "meta seed " << m.seed << "\n";
        for (const auto& [k, v] : m.generation) f << "meta " << k << " " << v << "\n";
        for (const auto& e : m.entries)
            f << e.subject_id << "\t" << e.volume_path << "\t"
              << (e.label_path.empty() ? "-" : e.label_path) << "\t" << split_name(e.split) << "\n";
        if (!f) throw FormatError(FormatError::Kind::io, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(f, line))
        throw FormatError(FormatError::Kind::truncated, "empty manifest " + path.string());
    if (line != kManifestMagic)
        throw FormatError(FormatError::Kind::bad_magic,
                          "bad magic '" + line + "' in " + path.string());
    DatasetManifest m;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line.rfind("meta ", 0) == 0) {
            std::istringstream ls(line.substr(5));
            std::string key, value;
            ls >> key >> value;
            if (key == "seed")
                m.seed = std::stoull(value);
            else
                m.generation[key] = value;
            continue;
        }
        ManifestEntry e;
        std::istringstream ls(line);
        std::string label, split;
        if (!(std::getline(ls, e.subject_id, '\t') && std::getline(ls, e.volume_path, '\t') &&
              std::getline(ls, label, '\t') && std::getline(ls, split)))
            throw FormatError(FormatError::Kind::bad_header, "malformed record: " + line);
        e.label_path = label == "-" ? "" : label;
        e.split = split_from_name(split);
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

}  // namespace sslseg
