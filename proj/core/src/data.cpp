#include "sslseg/data.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "SSLVOL1 readers/writers assume a little-endian host");

namespace sslseg {

std::vector<float> normalize_unit(std::span<const float> raw) {
    if (raw.empty()) throw FormatError(FormatError::Kind::dim_mismatch, "normalize_unit: empty volume");
    float lo = raw[0], hi = raw[0];
    for (float v : raw) {
        if (!std::isfinite(v))
            throw NumericError("normalize_unit: non-finite input value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<float> out(raw.size());
    if (lo == hi) {
        std::cerr << "sslseg: normalize_unit on a constant volume, mapping to zeros\n";
        return out;
    }
    const float inv = 1.0f / (hi - lo);
    for (size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) * inv;
    return out;
}

namespace {

constexpr const char* kVolumeMagic = "SSLVOL1";

void check_subject_id(const std::string& id) {
    if (id.empty()) throw FormatError(FormatError::Kind::bad_header, "empty subject id");
    for (char c : id)
        if (std::isspace(static_cast<unsigned char>(c)))
            throw FormatError(FormatError::Kind::bad_header,
                              "subject id may not contain whitespace: '" + id + "'");
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& path) {
    check_subject_id(v.subject_id);
    const int64_t n = static_cast<int64_t>(v.slices) * v.height * v.width;
    if (static_cast<int64_t>(v.voxels.size()) != n)
        throw FormatError(FormatError::Kind::dim_mismatch,
                          "save_volume: voxel count does not match dims");
    if (v.has_labels() && static_cast<int64_t>(v.labels.size()) != n)
        throw FormatError(FormatError::Kind::dim_mismatch,
                          "save_volume: label count does not match dims");

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + tmp.string());
        f << kVolumeMagic << " subject=" << v.subject_id << " dims=" << v.slices << "x" << v.height
          << "x" << v.width << " dtype=f32 labels=" << (v.has_labels() ? 1 : 0) << "\n";
        f.write(reinterpret_cast<const char*>(v.voxels.data()),
                static_cast<std::streamsize>(sizeof(float) * v.voxels.size()));
        if (v.has_labels())
            f.write(reinterpret_cast<const char*>(v.labels.data()),
                    static_cast<std::streamsize>(v.labels.size()));
        if (!f) throw FormatError(FormatError::Kind::io, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Volume load_volume(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());

    std::string header;
    if (!std::getline(f, header))
        throw FormatError(FormatError::Kind::truncated, "missing header in " + path.string());

    std::istringstream hs(header);
    std::string magic;
    hs >> magic;
    if (magic != kVolumeMagic)
        throw FormatError(FormatError::Kind::bad_magic,
                          "bad magic '" + magic + "' in " + path.string());

    Volume v;
    int labels_flag = -1;
    std::string field;
    while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos)
            throw FormatError(FormatError::Kind::bad_header, "malformed header field: " + field);
        const std::string key = field.substr(0, eq);
        const std::string val = field.substr(eq + 1);
        if (key == "subject") {
            v.subject_id = val;
        } else if (key == "dims") {
            if (std::sscanf(val.c_str(), "%dx%dx%d", &v.slices, &v.height, &v.width) != 3)
                throw FormatError(FormatError::Kind::bad_header, "malformed dims: " + val);
        } else if (key == "dtype") {
            if (val != "f32")
                throw FormatError(FormatError::Kind::bad_header, "unsupported dtype: " + val);
        } else if (key == "labels") {
            labels_flag = val == "1" ? 1 : val == "0" ? 0 : -1;
            if (labels_flag < 0)
                throw FormatError(FormatError::Kind::bad_header, "malformed labels flag: " + val);
        }
    }
    if (v.subject_id.empty() || v.slices <= 0 || v.height <= 0 || v.width <= 0 || labels_flag < 0)
        throw FormatError(FormatError::Kind::bad_header, "incomplete header: " + header);

    const int64_t n = static_cast<int64_t>(v.slices) * v.height * v.width;
    v.voxels.resize(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(v.voxels.data()),
           static_cast<std::streamsize>(sizeof(float) * v.voxels.size()));
    if (f.gcount() != static_cast<std::streamsize>(sizeof(float) * v.voxels.size()))
        throw FormatError(FormatError::Kind::truncated,
                          "voxel payload shorter than dims declare in " + path.string());
    if (labels_flag == 1) {
        v.labels.resize(static_cast<size_t>(n));
        f.read(reinterpret_cast<char*>(v.labels.data()),
               static_cast<std::streamsize>(v.labels.size()));
        if (f.gcount() != static_cast<std::streamsize>(v.labels.size()))
            throw FormatError(FormatError::Kind::truncated,
                              "label payload shorter than dims declare in " + path.string());
    }
    // anything left over means the header under-declares the payload
    char extra;
    if (f.read(&extra, 1); f.gcount() != 0)
        throw FormatError(FormatError::Kind::dim_mismatch,
                          "payload longer than dims declare in " + path.string());
    return v;
}

}  // namespace sslseg
