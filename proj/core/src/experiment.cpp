#include "sslseg/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <thread>

namespace sslseg {

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::filesystem::path manifest_path(const ExperimentConfig& cfg,
                                    const std::filesystem::path& out_dir) {
    if (cfg.dataset.source == "manifest") return cfg.dataset.manifest_path;
    return out_dir / "manifest.txt";
}

std::vector<Volume> load_split(const DatasetManifest& m, Split split) {
    std::vector<Volume> out;
    for (const auto& e : m.split_entries(split)) out.push_back(load_volume(e.volume_path));
    return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir,
                                      const std::string& method) {
    return out_dir / ("pretrain_" + method + ".ckpt");
}

void write_history_csv(const std::filesystem::path& path, const std::string& header,
                       const std::vector<std::string>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    f << header << "\n";
    for (const auto& r : rows) f << r << "\n";
}

int worker_count(size_t cells) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("SSLSEG_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) hw = std::min(hw, static_cast<unsigned>(cap));
        } catch (const std::exception&) {
            throw ConfigError("SSLSEG_THREADS is not an integer");
        }
    }
    return static_cast<int>(std::min<size_t>(hw, cells));
}

struct SummaryPoint {
    std::string method;
    int n;
    double mean;
    double stdev;
    int runs;
};

const char* series_color(const std::string& method) {
    if (method == "contrastive") return "#1f77b4";
    if (method == "regression") return "#2ca02c";
    if (method == "none") return "#d62728";
    return "#7f7f7f";
}

void write_sweep_svg(const std::filesystem::path& path, const std::vector<SummaryPoint>& points,
                     const std::vector<int>& n_values, double baseline, bool has_baseline) {
    const double width = 640, height = 440;
    const double ml = 70, mr = 30, mt = 40, mb = 60;
    const double pw = width - ml - mr, phh = height - mt - mb;
    auto xpos = [&](int n) {
        int idx = 0;
        for (size_t i = 0; i < n_values.size(); ++i)
            if (n_values[i] == n) idx = static_cast<int>(i);
        const double step = n_values.size() > 1 ? pw / static_cast<double>(n_values.size() - 1) : 0.0;
        return ml + idx * step;
    };
    auto ypos = [&](double dice) { return mt + (1.0 - dice) * phh; };

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes
    f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + phh
      << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << mt + phh << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + phh << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double dice = t / 5.0;
        f << "<line x1=\"" << ml - 4 << "\" y1=\"" << ypos(dice) << "\" x2=\"" << ml << "\" y2=\""
          << ypos(dice) << "\" stroke=\"black\"/>\n";
        f << "<text x=\"" << ml - 8 << "\" y=\"" << ypos(dice) + 4
          << "\" text-anchor=\"end\" font-size=\"12\">" << fmt(dice, "%.1f") << "</text>\n";
    }
    for (int n : n_values) {
        f << "<line x1=\"" << xpos(n) << "\" y1=\"" << mt + phh << "\" x2=\"" << xpos(n)
          << "\" y2=\"" << mt + phh + 4 << "\" stroke=\"black\"/>\n";
        f << "<text x=\"" << xpos(n) << "\" y=\"" << mt + phh + 18
          << "\" text-anchor=\"middle\" font-size=\"12\">" << n << "</text>\n";
    }
    f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\" font-size=\"14\">number of training subjects</text>\n";
    f << "<text x=\"18\" y=\"" << mt + phh / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 " << mt + phh / 2
      << ")\">Dice</text>\n";

    if (has_baseline) {
        f << "<line x1=\"" << ml << "\" y1=\"" << ypos(baseline) << "\" x2=\"" << ml + pw
          << "\" y2=\"" << ypos(baseline)
          << "\" stroke=\"#444444\" stroke-dasharray=\"6,4\"/>\n";
        f << "<text x=\"" << ml + pw - 4 << "\" y=\"" << ypos(baseline) - 6
          << "\" text-anchor=\"end\" font-size=\"12\" fill=\"#444444\">supervised baseline "
          << fmt(baseline, "%.3f") << "</text>\n";
    }

    std::vector<std::string> methods;
    for (const auto& p : points)
        if (std::find(methods.begin(), methods.end(), p.method) == methods.end())
            methods.push_back(p.method);
    int legend_row = 0;
    for (const auto& method : methods) {
        const char* color = series_color(method);
        std::string poly;
        for (const auto& p : points) {
            if (p.method != method) continue;
            poly += fmt(xpos(p.n), "%.2f");
            poly += ",";
            poly += fmt(ypos(p.mean), "%.2f");
            poly += " ";
            f << "<line x1=\"" << xpos(p.n) << "\" y1=\"" << ypos(std::min(1.0, p.mean + p.stdev))
              << "\" x2=\"" << xpos(p.n) << "\" y2=\"" << ypos(std::max(0.0, p.mean - p.stdev))
              << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
            f << "<circle cx=\"" << xpos(p.n) << "\" cy=\"" << ypos(p.mean)
              << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";
        }
        f << "<polyline points=\"" << poly << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
        const double ly = mt + 10 + 18 * legend_row++;
        f << "<line x1=\"" << ml + 12 << "\" y1=\"" << ly << "\" x2=\"" << ml + 40 << "\" y2=\""
          << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        f << "<text x=\"" << ml + 46 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << method
          << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace

std::string result_csv(const std::vector<ResultRow>& rows) {
    std::string out = "method,N,seed,class,dice,seconds\n";
    for (const auto& r : rows) {
        out += r.method + "," + std::to_string(r.n) + "," + std::to_string(r.seed) + "," +
               std::to_string(r.cls) + "," + fmt(r.dice) + "," + fmt(r.seconds, "%.3f") + "\n";
    }
    return out;
}

void run_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    if (cfg.dataset.source != "phantom")
        throw ConfigError("gen-data requires dataset.source = phantom");
    std::filesystem::create_directories(out_dir / "data");

    const int total = cfg.dataset.subjects_labeled + cfg.dataset.subjects_unlabeled;
    std::vector<Volume> volumes = generate_phantom_dataset(cfg.dataset.phantom, total);

    std::vector<ManifestEntry> entries;
    for (int i = 0; i < total; ++i) {
        Volume& v = volumes[static_cast<size_t>(i)];
        const bool labeled = i < cfg.dataset.subjects_labeled;
        if (!labeled) v.labels.clear();  // unlabeled pool, used for pretraining only
        const std::filesystem::path p = out_dir / "data" / (v.subject_id + ".sslvol");
        save_volume(v, p);
        entries.push_back({v.subject_id, p.string(), labeled ? p.string() : "", Split::pretrain});
    }
    DatasetManifest manifest =
        split_manifest(entries, cfg.dataset.split_counts, cfg.dataset.phantom.seed);
    manifest.generation["source"] = "phantom";
    manifest.generation["size"] = std::to_string(cfg.dataset.phantom.height) + "x" +
                                  std::to_string(cfg.dataset.phantom.width);
    save_manifest(manifest, manifest_path(cfg, out_dir));
    std::cout << "gen-data: " << total << " subjects (" << cfg.dataset.subjects_labeled
              << " labeled) -> " << (out_dir / "data").string() << "\n";
}

void run_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                  const std::string& method) {
    if (method != "regression" && method != "contrastive" && method != "none")
        throw ConfigError("pretrain: unknown method '" + method + "'");
    std::filesystem::create_directories(out_dir);
    DatasetManifest manifest = load_manifest(manifest_path(cfg, out_dir));

    UNetF model = UNetF::build(cfg.model, cfg.model_seed);
    std::vector<std::string> history_rows;
    std::string history_header = "epoch,train_loss,lr";

    if (method != "none") {
        std::vector<Volume> pool_volumes = load_split(manifest, Split::pretrain);
        if (pool_volumes.empty())
            throw ConfigError("pretrain: manifest has an empty pretrain pool");
        SlicePool pool = slice_pool_from_volumes(pool_volumes);
        if (method == "regression") {
            model.swap_head(HeadMode::regression, cfg.model_seed);
            EpochHistory h = pretrain_regression(model, pool, cfg.regression,
                                                 cfg.pretrain.regression_sched,
                                                 cfg.pretrain.batch_size, cfg.pretrain.seed);
            for (size_t e = 0; e < h.train_loss.size(); ++e)
                history_rows.push_back(std::to_string(e + 1) + "," + fmt(h.train_loss[e]) + "," +
                                       fmt(h.lr[e]));
        } else {
            ContrastiveHistory h =
                pretrain_contrastive(model, pool, cfg.contrastive, cfg.augment,
                                     cfg.pretrain.global_sched, cfg.pretrain.local_sched,
                                     cfg.pretrain.seed);
            history_header = "stage,epoch,train_loss,lr";
            for (size_t e = 0; e < h.global_stage.train_loss.size(); ++e)
                history_rows.push_back("global," + std::to_string(e + 1) + "," +
                                       fmt(h.global_stage.train_loss[e]) + "," +
                                       fmt(h.global_stage.lr[e]));
            for (size_t e = 0; e < h.local_stage.train_loss.size(); ++e)
                history_rows.push_back("local," + std::to_string(e + 1) + "," +
                                       fmt(h.local_stage.train_loss[e]) + "," +
                                       fmt(h.local_stage.lr[e]));
        }
    }

    save_checkpoint(model, checkpoint_path(out_dir, method));
    write_history_csv(out_dir / ("pretrain_" + method + "_history.csv"), history_header,
                      history_rows);
    std::cout << "pretrain[" << method << "]: wrote "
              << checkpoint_path(out_dir, method).string() << "\n";
}

std::vector<int> draw_labeled_subset(int pool, int n, uint64_t seed, bool nested) {
    if (n < 1 || n > pool)
        throw ConfigError("subset draw: N=" + std::to_string(n) + " outside pool of " +
                          std::to_string(pool));
    std::vector<int> idx(static_cast<size_t>(pool));
    std::iota(idx.begin(), idx.end(), 0);
    // nested: one permutation per seed, prefixes shared across N
    Rng rng = nested ? Rng::stream(seed, 0x73756273ull)
                     : Rng::stream(seed, 0x73756273ull, static_cast<uint64_t>(n));
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(n));
    return idx;
}

namespace {

struct SweepContext {
    const ExperimentConfig* cfg;
    const std::vector<Volume>* train_volumes;
    std::vector<SegSample> val_samples;
    const std::vector<Volume>* test_volumes;
};

// Epoch floor: an epoch is one pass over the N-subject set, so small N
// would starve on optimizer steps; min_steps raises their epoch count.
ScheduleConfig effective_schedule(const FinetuneSection& ft, size_t n_samples) {
    ScheduleConfig sched = ft.sched;
    if (ft.min_steps > 0) {
        const int per_epoch = static_cast<int>((n_samples + ft.batch_size - 1) /
                                               static_cast<size_t>(ft.batch_size));
        sched.epochs = std::max(sched.epochs, (ft.min_steps + per_epoch - 1) / per_epoch);
    }
    return sched;
}

// One (method, N, seed) cell: clone pretrained weights, attach a fresh
// segmentation head, finetune on the drawn subset, evaluate on test.
std::vector<ResultRow> run_cell(const SweepContext& ctx, const UNetF& base,
                                const std::string& method, int n, uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cfg = *ctx.cfg;

    std::vector<int> subjects =
        draw_labeled_subset(static_cast<int>(ctx.train_volumes->size()), n, seed, cfg.sweep.nested_subsets);
    std::vector<Volume> chosen;
    for (int s : subjects) chosen.push_back((*ctx.train_volumes)[static_cast<size_t>(s)]);
    std::vector<SegSample> train_samples = seg_samples_from_volumes(chosen);

    UNetF model = base.clone();
    model.swap_head(HeadMode::segmentation, Rng::stream(seed, 0x68ull, static_cast<uint64_t>(n)).next());
    finetune(model, train_samples, ctx.val_samples, effective_schedule(cfg.finetune, train_samples.size()),
             cfg.finetune.aug, cfg.finetune.batch_size, seed, cfg.finetune.warmup_frac);

    // volume-averaged test Dice per foreground class
    std::vector<double> class_sums(static_cast<size_t>(cfg.model.num_classes), 0.0);
    for (const auto& vol : *ctx.test_volumes) {
        std::vector<double> d = evaluate_volume(model, vol);
        for (size_t c = 0; c < d.size(); ++c) class_sums[c] += d[c];
    }
    const double seconds =
        cfg.sweep.timing == "zero"
            ? 0.0
            : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<ResultRow> rows;
    for (int c = 1; c < cfg.model.num_classes; ++c)
        rows.push_back({method, n, seed, c,
                        class_sums[static_cast<size_t>(c)] /
                            static_cast<double>(ctx.test_volumes->size()),
                        seconds});
    return rows;
}

}  // namespace

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg,
                                 const std::filesystem::path& out_dir) {
    DatasetManifest manifest = load_manifest(manifest_path(cfg, out_dir));
    SweepContext ctx;
    std::vector<Volume> train_volumes = load_split(manifest, Split::train);
    std::vector<Volume> test_volumes = load_split(manifest, Split::test);
    std::vector<Volume> val_volumes = load_split(manifest, Split::val);
    if (train_volumes.empty() || test_volumes.empty())
        throw ConfigError("sweep: manifest needs non-empty train and test splits");
    ctx.cfg = &cfg;
    ctx.train_volumes = &train_volumes;
    ctx.test_volumes = &test_volumes;
    ctx.val_samples = seg_samples_from_volumes(val_volumes);

    const int pool = static_cast<int>(train_volumes.size());
    for (int n : cfg.sweep.n_values)
        if (n > pool)
            throw ConfigError("sweep: N=" + std::to_string(n) + " exceeds train pool of " +
                              std::to_string(pool));

    // all checkpoints must exist before any training starts
    std::map<std::string, UNetF> bases;
    for (const auto& method : cfg.sweep.methods) {
        const auto path = checkpoint_path(out_dir, method);
        if (!std::filesystem::exists(path))
            throw FormatError(FormatError::Kind::io,
                              "sweep: missing checkpoint " + path.string() +
                                  " (run `sslseg pretrain` for method '" + method + "' first)");
        bases.emplace(method, load_checkpoint(path));
    }

    struct Cell {
        std::string method;
        int n;
        uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& method : cfg.sweep.methods)
        for (int n : cfg.sweep.n_values)
            for (uint64_t seed : cfg.sweep.seeds) cells.push_back({method, n, seed});
    if (cfg.sweep.include_baseline && bases.count("none") == 0) {
        const auto path = checkpoint_path(out_dir, "none");
        if (!std::filesystem::exists(path))
            throw FormatError(FormatError::Kind::io,
                              "sweep: baseline arm needs " + path.string());
        bases.emplace("none", load_checkpoint(path));
    }
    if (cfg.sweep.include_baseline)
        for (uint64_t seed : cfg.sweep.seeds) cells.push_back({"none", pool, seed});

    std::vector<std::vector<ResultRow>> cell_rows(cells.size());
    const int workers = worker_count(cells.size());
    if (workers <= 1) {
        for (size_t i = 0; i < cells.size(); ++i) {
            const auto& c = cells[i];
            cell_rows[i] = run_cell(ctx, bases.at(c.method), c.method, c.n, c.seed);
            std::cout << "sweep: " << c.method << " N=" << c.n << " seed=" << c.seed
                      << " dice=" << fmt(cell_rows[i][0].dice, "%.4f") << std::endl;
        }
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w)
            threads.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
                    const auto& c = cells[i];
                    cell_rows[i] = run_cell(ctx, bases.at(c.method), c.method, c.n, c.seed);
                }
            });
        for (auto& t : threads) t.join();
    }

    std::vector<ResultRow> rows;
    for (auto& r : cell_rows) rows.insert(rows.end(), r.begin(), r.end());
    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.method, a.n, a.seed, a.cls) < std::tie(b.method, b.n, b.seed, b.cls);
    });

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream f(out_dir / "results.csv", std::ios::trunc);
        f << result_csv(rows);
    }

    // per-(method, N) mean and std over seeds (class-averaged rows share N)
    std::map<std::pair<std::string, int>, std::vector<double>> groups;
    for (const auto& r : rows) groups[{r.method, r.n}].push_back(r.dice);
    std::vector<SummaryPoint> points;
    double baseline_mean = 0.0;
    bool has_baseline = false;
    std::vector<std::string> summary_rows;
    for (const auto& [key, vals] : groups) {
        double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        const double stdev = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
        summary_rows.push_back(key.first + "," + std::to_string(key.second) + "," + fmt(mean) +
                               "," + fmt(stdev) + "," + std::to_string(vals.size()));
        const bool is_baseline = cfg.sweep.include_baseline && key.first == "none" && key.second == pool;
        if (is_baseline) {
            baseline_mean = mean;
            has_baseline = true;
        }
        if (std::find(cfg.sweep.n_values.begin(), cfg.sweep.n_values.end(), key.second) !=
            cfg.sweep.n_values.end())
            points.push_back({key.first, key.second, mean, stdev, static_cast<int>(vals.size())});
    }
    write_history_csv(out_dir / "summary.csv", "method,N,mean_dice,std_dice,runs", summary_rows);
    write_sweep_svg(out_dir / "sweep_plot.svg", points, cfg.sweep.n_values, baseline_mean,
                    has_baseline);
    std::cout << "sweep: wrote " << (out_dir / "results.csv").string() << " ("
              << rows.size() << " rows)\n";
    return rows;
}

void run_finetune(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                  uint64_t seed) {
    DatasetManifest manifest = load_manifest(manifest_path(cfg, out_dir));
    std::vector<Volume> train_volumes = load_split(manifest, Split::train);
    std::vector<Volume> val_volumes = load_split(manifest, Split::val);
    if (train_volumes.empty()) throw ConfigError("finetune: manifest has an empty train split");

    const auto ckpt = checkpoint_path(out_dir, cfg.pretrain.method);
    if (!std::filesystem::exists(ckpt))
        throw FormatError(FormatError::Kind::io, "finetune: missing checkpoint " + ckpt.string());
    UNetF model = load_checkpoint(ckpt);

    int n = cfg.finetune.n;
    if (n <= 0 || n > static_cast<int>(train_volumes.size()))
        n = static_cast<int>(train_volumes.size());
    std::vector<int> subjects = draw_labeled_subset(static_cast<int>(train_volumes.size()), n, seed,
                                                    cfg.sweep.nested_subsets);
    std::vector<Volume> chosen;
    for (int s : subjects) chosen.push_back(train_volumes[static_cast<size_t>(s)]);

    model.swap_head(HeadMode::segmentation, Rng::stream(seed, 0x68ull, static_cast<uint64_t>(n)).next());
    std::vector<SegSample> train_samples = seg_samples_from_volumes(chosen);
    EpochHistory h = finetune(model, train_samples, seg_samples_from_volumes(val_volumes),
                              effective_schedule(cfg.finetune, train_samples.size()),
                              cfg.finetune.aug, cfg.finetune.batch_size, seed,
                              cfg.finetune.warmup_frac);

    save_checkpoint(model, out_dir / ("finetune_" + cfg.pretrain.method + ".ckpt"));
    std::vector<std::string> rows;
    for (size_t e = 0; e < h.train_loss.size(); ++e)
        rows.push_back(std::to_string(e + 1) + "," + fmt(h.train_loss[e]) + "," +
                       fmt(h.val_loss[e]) + "," + fmt(h.lr[e]));
    write_history_csv(out_dir / ("finetune_" + cfg.pretrain.method + "_history.csv"),
                      "epoch,train_loss,val_loss,lr", rows);
    std::cout << "finetune[" << cfg.pretrain.method << "]: N=" << n << ", best val loss "
              << fmt(*std::min_element(h.val_loss.begin(), h.val_loss.end()), "%.4f") << "\n";
}

void run_eval(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
              const std::filesystem::path& checkpoint) {
    DatasetManifest manifest = load_manifest(manifest_path(cfg, out_dir));
    std::vector<Volume> test_volumes = load_split(manifest, Split::test);
    if (test_volumes.empty()) throw ConfigError("eval: manifest has an empty test split");

    UNetF model = load_checkpoint(checkpoint);
    if (model.head_mode() != HeadMode::segmentation)
        throw ConfigError("eval: checkpoint head is '" +
                          std::string(head_mode_name(model.head_mode())) +
                          "', need a segmentation checkpoint");

    for (const auto& v : test_volumes) {
        for (uint8_t l : v.labels)
            if (l >= model.cfg.num_classes)
                throw ShapeError("eval: volume " + v.subject_id + " has label " +
                                 std::to_string(int(l)) + " but checkpoint has " +
                                 std::to_string(model.cfg.num_classes) + " classes");
    }

    std::vector<std::string> rows;
    std::vector<double> cohort(static_cast<size_t>(model.cfg.num_classes), 0.0);
    std::cout << "subject";
    for (int c = 1; c < model.cfg.num_classes; ++c) std::cout << "\tclass" << c;
    std::cout << "\n";
    for (const auto& v : test_volumes) {
        std::vector<double> d = evaluate_volume(model, v);
        std::cout << v.subject_id;
        std::string row = v.subject_id;
        for (int c = 1; c < model.cfg.num_classes; ++c) {
            std::cout << "\t" << fmt(d[static_cast<size_t>(c)], "%.4f");
            row += "," + fmt(d[static_cast<size_t>(c)]);
            cohort[static_cast<size_t>(c)] += d[static_cast<size_t>(c)];
        }
        std::cout << "\n";
        rows.push_back(row);
    }
    std::cout << "cohort-mean";
    std::string mean_row = "cohort-mean";
    for (int c = 1; c < model.cfg.num_classes; ++c) {
        const double m = cohort[static_cast<size_t>(c)] / static_cast<double>(test_volumes.size());
        std::cout << "\t" << fmt(m, "%.4f");
        mean_row += "," + fmt(m);
    }
    std::cout << "\n";
    rows.push_back(mean_row);

    std::string header = "subject";
    for (int c = 1; c < model.cfg.num_classes; ++c) header += ",class" + std::to_string(c);
    write_history_csv(out_dir / "eval.csv", header, rows);
}

}  // namespace sslseg
