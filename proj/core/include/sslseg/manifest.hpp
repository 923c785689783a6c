#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sslseg/common.hpp"

namespace sslseg {

enum class Split { pretrain, train, val, test };

const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct ManifestEntry {
    std::string subject_id;
    std::string volume_path;
    std::string label_path;  // empty when unlabeled
    Split split = Split::pretrain;
};

/// Index of every volume an experiment touches. Splits are disjoint at the
/// subject level and every train/val/test entry must carry labels.
struct DatasetManifest {
    uint64_t seed = 0;
    std::map<std::string, std::string> generation;  // provenance key=value pairs
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split_entries(Split s) const;
    void validate() const;
};

/// Assigns `counts` = {train, val, test} labeled subjects by seeded shuffle;
/// remaining labeled subjects and all unlabeled ones land in the pretrain
/// pool. Throws on over-subscription.
DatasetManifest split_manifest(const std::vector<ManifestEntry>& subjects,
                               const std::array<int, 3>& counts, uint64_t seed);

/// Text format: magic line "SSLMANIFEST1", optional "meta key value" lines,
/// then one tab-separated record per entry: id, volume path, label path or
/// "-", split name.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace sslseg
