#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sslseg/contrastive.hpp"
#include "sslseg/augment.hpp"
#include "sslseg/phantom.hpp"
#include "sslseg/regression.hpp"
#include "sslseg/schedule.hpp"
#include "sslseg/unet.hpp"

namespace sslseg {

/// Key=value sections, INI style:
///   [section]
///   key = value      # trailing comments allowed
/// Lookups use dotted names ("finetune.epochs").
class ConfigFile {
public:
    ConfigFile() = default;
    static ConfigFile parse_file(const std::filesystem::path& path);
    static ConfigFile parse_string(const std::string& text);

    bool has(const std::string& dotted) const;
    std::string get_string(const std::string& dotted, const std::string& fallback) const;
    int get_int(const std::string& dotted, int fallback) const;
    uint64_t get_u64(const std::string& dotted, uint64_t fallback) const;
    double get_double(const std::string& dotted, double fallback) const;
    bool get_bool(const std::string& dotted, bool fallback) const;
    std::vector<int> get_int_list(const std::string& dotted, std::vector<int> fallback) const;
    std::vector<uint64_t> get_u64_list(const std::string& dotted,
                                       std::vector<uint64_t> fallback) const;
    std::vector<std::string> get_string_list(const std::string& dotted,
                                             std::vector<std::string> fallback) const;

private:
    std::map<std::string, std::string> values_;
};

struct DatasetSection {
    std::string source = "phantom";  // "phantom" or "manifest"
    std::string manifest_path;       // for source = manifest
    int subjects_unlabeled = 200;
    int subjects_labeled = 32;
    std::array<int, 3> split_counts = {24, 2, 6};  // train, val, test
    PhantomConfig phantom;
};

struct PretrainSection {
    std::string method = "contrastive";  // regression | contrastive | none
    int batch_size = 8;
    ScheduleConfig regression_sched;
    ScheduleConfig global_sched;
    ScheduleConfig local_sched;
    uint64_t seed = 0;
};

struct FinetuneSection {
    ScheduleConfig sched;
    FinetuneAugConfig aug;
    int batch_size = 4;
    int n = 0;          // cmd_finetune: labeled train subjects to use, 0 = all
    int min_steps = 0;  // raise the epoch count of small-N runs to reach
                        // at least this many optimizer steps (0 = off)
    double warmup_frac = 0.0;  // fraction of epochs training the head alone
};

struct SweepSection {
    std::vector<std::string> methods = {"contrastive", "regression", "none"};
    std::vector<int> n_values = {1, 2, 4, 8};
    std::vector<uint64_t> seeds = {0, 1, 2};
    bool nested_subsets = false;
    bool include_baseline = true;
    std::string timing = "wall";  // "wall" or "zero" (byte-reproducible CSV)
};

struct ExperimentConfig {
    DatasetSection dataset;
    UNetConfig model;
    uint64_t model_seed = 1;
    PretrainSection pretrain;
    CorruptionConfig regression;
    ContrastiveConfig contrastive;
    AugmentationConfig augment;
    FinetuneSection finetune;
    SweepSection sweep;
    std::string out_dir = "out";

    static ExperimentConfig from_file(const std::filesystem::path& path);
    static ExperimentConfig from_config(const ConfigFile& f);
    void validate() const;
};

}  // namespace sslseg
