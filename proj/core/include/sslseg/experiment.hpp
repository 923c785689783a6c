#pragma once

#include "sslseg/config.hpp"
#include "sslseg/manifest.hpp"
#include "sslseg/train.hpp"

namespace sslseg {

/// One sweep cell result: volume-averaged test Dice for `cls` after
/// finetuning `method`-pretrained weights on `n` labeled subjects.
struct ResultRow {
    std::string method;
    int n = 0;
    uint64_t seed = 0;
    int cls = 0;
    double dice = 0.0;
    double seconds = 0.0;
};

/// Fixed column order: method,N,seed,class,dice,seconds.
std::string result_csv(const std::vector<ResultRow>& rows);

/// The labeled-subset draw used by sweep cells: uniform without
/// replacement. With nested = true subsets share one permutation per seed,
/// so the N=1 subset is a prefix of the N=2 subset and so on.
std::vector<int> draw_labeled_subset(int pool, int n, uint64_t seed, bool nested);

/// Generates the phantom cohort, writes SSLVOL1 volumes + manifest.
void run_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Pretrains one method ("regression", "contrastive" or "none") and writes
/// <out>/pretrain_<method>.ckpt plus a loss-history CSV.
void run_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                  const std::string& method);

/// Single finetuning run from the configured pretrain method's checkpoint.
void run_finetune(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                  uint64_t seed);

/// Per-subject, per-class volume Dice on the test split; prints a table and
/// writes <out>/eval.csv.
void run_eval(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
              const std::filesystem::path& checkpoint);

/// The full label-efficiency matrix: (method, N, seed) cells plus the
/// full-data supervised baseline arm; writes results.csv, summary.csv and
/// sweep_plot.svg. Cells run in parallel when SSLSEG_THREADS allows.
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg,
                                 const std::filesystem::path& out_dir);

}  // namespace sslseg
