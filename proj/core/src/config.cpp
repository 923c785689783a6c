#include "sslseg/config.hpp"

#include <fstream>
#include <sstream>

namespace sslseg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string piece;
    while (std::getline(is, piece, ',')) {
        piece = trim(piece);
        if (!piece.empty()) out.push_back(piece);
    }
    return out;
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_string(buf.str());
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
    ConfigFile cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

bool ConfigFile::has(const std::string& dotted) const { return values_.count(dotted) > 0; }

std::string ConfigFile::get_string(const std::string& dotted, const std::string& fallback) const {
    auto it = values_.find(dotted);
    return it == values_.end() ? fallback : it->second;
}

int ConfigFile::get_int(const std::string& dotted, int fallback) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) return fallback;
    try {
        size_t used = 0;
        int v = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(dotted + ": not an integer: '" + it->second + "'");
    }
}

uint64_t ConfigFile::get_u64(const std::string& dotted, uint64_t fallback) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError(dotted + ": not an unsigned integer: '" + it->second + "'");
    }
}

double ConfigFile::get_double(const std::string& dotted, double fallback) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw ConfigError(dotted + ": not a number: '" + it->second + "'");
    }
}

bool ConfigFile::get_bool(const std::string& dotted, bool fallback) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(dotted + ": not a boolean: '" + it->second + "'");
}

std::vector<int> ConfigFile::get_int_list(const std::string& dotted,
                                          std::vector<int> fallback) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    for (const auto& piece : split_list(it->second)) {
        try {
            out.push_back(std::stoi(piece));
        } catch (const std::exception&) {
            throw ConfigError(dotted + ": not an integer list: '" + it->second + "'");
        }
    }
    return out;
}

std::vector<uint64_t> ConfigFile::get_u64_list(const std::string& dotted,
                                               std::vector<uint64_t> fallback) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) return fallback;
    std::vector<uint64_t> out;
    for (const auto& piece : split_list(it->second)) {
        try {
            out.push_back(std::stoull(piece));
        } catch (const std::exception&) {
            throw ConfigError(dotted + ": not an integer list: '" + it->second + "'");
        }
    }
    return out;
}

std::vector<std::string> ConfigFile::get_string_list(const std::string& dotted,
                                                     std::vector<std::string> fallback) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) return fallback;
    return split_list(it->second);
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    return from_config(ConfigFile::parse_file(path));
}

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& f) {
    ExperimentConfig c;

    c.dataset.source = f.get_string("dataset.source", c.dataset.source);
    c.dataset.manifest_path = f.get_string("dataset.manifest", c.dataset.manifest_path);
    c.dataset.subjects_unlabeled = f.get_int("dataset.subjects_unlabeled", c.dataset.subjects_unlabeled);
    c.dataset.subjects_labeled = f.get_int("dataset.subjects_labeled", c.dataset.subjects_labeled);
    c.dataset.split_counts[0] = f.get_int("dataset.train", c.dataset.split_counts[0]);
    c.dataset.split_counts[1] = f.get_int("dataset.val", c.dataset.split_counts[1]);
    c.dataset.split_counts[2] = f.get_int("dataset.test", c.dataset.split_counts[2]);
    auto& ph = c.dataset.phantom;
    ph.height = f.get_int("dataset.height", ph.height);
    ph.width = f.get_int("dataset.width", ph.width);
    ph.slices_per_subject = f.get_int("dataset.slices", ph.slices_per_subject);
    ph.min_organs = f.get_int("dataset.min_organs", ph.min_organs);
    ph.max_organs = f.get_int("dataset.max_organs", ph.max_organs);
    ph.area_min = f.get_double("dataset.area_min", ph.area_min);
    ph.area_max = f.get_double("dataset.area_max", ph.area_max);
    ph.texture_noise = f.get_double("dataset.texture_noise", ph.texture_noise);
    ph.distractor_speckle = f.get_double("dataset.distractor_speckle", ph.distractor_speckle);
    ph.intensity_min = f.get_double("dataset.intensity_min", ph.intensity_min);
    ph.intensity_max = f.get_double("dataset.intensity_max", ph.intensity_max);
    ph.background_noise = f.get_double("dataset.background_noise", ph.background_noise);
    ph.seed = f.get_u64("dataset.seed", ph.seed);

    c.model.depth = f.get_int("model.depth", c.model.depth);
    c.model.base_channels = f.get_int("model.base_channels", c.model.base_channels);
    c.model.in_channels = f.get_int("model.in_channels", c.model.in_channels);
    c.model.num_classes = f.get_int("model.num_classes", c.model.num_classes);
    c.model.global_embed_dim = f.get_int("model.global_embed_dim", c.model.global_embed_dim);
    c.model.local_embed_dim = f.get_int("model.local_embed_dim", c.model.local_embed_dim);
    c.model_seed = f.get_u64("model.seed", c.model_seed);

    c.pretrain.method = f.get_string("pretrain.method", c.pretrain.method);
    c.pretrain.batch_size = f.get_int("pretrain.batch_size", c.pretrain.batch_size);
    c.pretrain.seed = f.get_u64("pretrain.seed", c.pretrain.seed);
    ScheduleConfig base;
    base.epochs = f.get_int("pretrain.epochs", 1000);
    base.initial_lr = f.get_double("pretrain.lr", 0.001);
    base.plateau_patience = f.get_int("pretrain.patience", 20);
    base.plateau_min_delta = f.get_double("pretrain.min_delta", 1e-4);
    c.pretrain.regression_sched = base;
    c.pretrain.global_sched = base;
    c.pretrain.local_sched = base;
    c.pretrain.global_sched.epochs = f.get_int("pretrain.global_epochs", base.epochs);
    c.pretrain.local_sched.epochs = f.get_int("pretrain.local_epochs", base.epochs);

    c.regression.fraction = f.get_double("regression.fraction", c.regression.fraction);
    c.regression.sigma = f.get_double("regression.sigma", c.regression.sigma);
    c.regression.seed = f.get_u64("regression.seed", c.regression.seed);

    c.contrastive.temperature = f.get_double("contrastive.temperature", c.contrastive.temperature);
    c.contrastive.batch_size = f.get_int("contrastive.batch_size", c.contrastive.batch_size);
    c.contrastive.local_patch_size = f.get_int("contrastive.local_patch_size", c.contrastive.local_patch_size);
    c.contrastive.local_patches_per_image =
        f.get_int("contrastive.local_patches_per_image", c.contrastive.local_patches_per_image);
    c.contrastive.freeze_encoder_local =
        f.get_bool("contrastive.freeze_encoder_local", c.contrastive.freeze_encoder_local);
    c.contrastive.seed = f.get_u64("contrastive.seed", c.contrastive.seed);

    c.augment.crop_scale_min = f.get_double("augment.crop_scale_min", c.augment.crop_scale_min);
    c.augment.crop_scale_max = f.get_double("augment.crop_scale_max", c.augment.crop_scale_max);
    c.augment.brightness_delta = f.get_double("augment.brightness_delta", c.augment.brightness_delta);
    c.augment.contrast_min = f.get_double("augment.contrast_min", c.augment.contrast_min);
    c.augment.contrast_max = f.get_double("augment.contrast_max", c.augment.contrast_max);
    c.augment.noise_std = f.get_double("augment.noise_std", c.augment.noise_std);

    c.finetune.sched.epochs = f.get_int("finetune.epochs", 500);
    c.finetune.sched.initial_lr = f.get_double("finetune.lr", 0.001);
    c.finetune.sched.plateau_patience = f.get_int("finetune.patience", 20);
    c.finetune.sched.plateau_min_delta = f.get_double("finetune.min_delta", 1e-4);
    c.finetune.batch_size = f.get_int("finetune.batch_size", 4);
    c.finetune.n = f.get_int("finetune.n", 0);
    c.finetune.min_steps = f.get_int("finetune.min_steps", 0);
    c.finetune.warmup_frac = f.get_double("finetune.warmup_frac", 0.0);
    c.finetune.aug.translate_frac = f.get_double("finetune.translate_frac", c.finetune.aug.translate_frac);
    c.finetune.aug.crop_min = f.get_double("finetune.crop_min", c.finetune.aug.crop_min);
    c.finetune.aug.crop_max = f.get_double("finetune.crop_max", c.finetune.aug.crop_max);
    c.finetune.aug.elastic_sigma = f.get_double("finetune.elastic_sigma", c.finetune.aug.elastic_sigma);
    c.finetune.aug.elastic_alpha = f.get_double("finetune.elastic_alpha", c.finetune.aug.elastic_alpha);

    c.sweep.methods = f.get_string_list("sweep.methods", c.sweep.methods);
    c.sweep.n_values = f.get_int_list("sweep.n_values", c.sweep.n_values);
    c.sweep.seeds = f.get_u64_list("sweep.seeds", c.sweep.seeds);
    c.sweep.nested_subsets = f.get_bool("sweep.nested_subsets", c.sweep.nested_subsets);
    c.sweep.include_baseline = f.get_bool("sweep.include_baseline", c.sweep.include_baseline);
    c.sweep.timing = f.get_string("sweep.timing", c.sweep.timing);

    c.out_dir = f.get_string("output.dir", c.out_dir);
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    if (dataset.source != "phantom" && dataset.source != "manifest")
        throw ConfigError("dataset.source must be 'phantom' or 'manifest'");
    if (dataset.source == "manifest" && dataset.manifest_path.empty())
        throw ConfigError("dataset.manifest path required when dataset.source = manifest");
    if (dataset.source == "phantom") {
        dataset.phantom.validate();
        if (dataset.subjects_labeled <
            dataset.split_counts[0] + dataset.split_counts[1] + dataset.split_counts[2])
            throw ConfigError("dataset.subjects_labeled smaller than train+val+test counts");
    }
    model.validate();
    const int div = 1 << model.depth;
    if (dataset.source == "phantom" &&
        (dataset.phantom.height % div != 0 || dataset.phantom.width % div != 0))
        throw ConfigError("dataset image size must be divisible by 2^model.depth = " +
                          std::to_string(div));
    if (pretrain.method != "regression" && pretrain.method != "contrastive" &&
        pretrain.method != "none")
        throw ConfigError("pretrain.method must be regression, contrastive or none, got '" +
                          pretrain.method + "'");
    regression.validate();
    contrastive.validate();
    augment.validate();
    finetune.sched.validate();
    if (finetune.batch_size < 1) throw ConfigError("finetune.batch_size must be >= 1");
    if (sweep.seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
    if (sweep.methods.empty()) throw ConfigError("sweep.methods must not be empty");
    for (const auto& m : sweep.methods)
        if (m != "regression" && m != "contrastive" && m != "none")
            throw ConfigError("sweep.methods: unknown method '" + m + "'");
    for (size_t i = 1; i < sweep.n_values.size(); ++i)
        if (sweep.n_values[i] <= sweep.n_values[i - 1])
            throw ConfigError("sweep.n_values must be sorted strictly ascending");
    if (!sweep.n_values.empty() && sweep.n_values.front() < 1)
        throw ConfigError("sweep.n_values must be positive");
    if (sweep.timing != "wall" && sweep.timing != "zero")
        throw ConfigError("sweep.timing must be 'wall' or 'zero'");
}

}  // namespace sslseg
