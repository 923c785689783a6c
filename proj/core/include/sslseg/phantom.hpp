#pragma once

#include "sslseg/data.hpp"

namespace sslseg {

/// Synthetic phantom generator. Each subject is a stack of slices with a
/// smoothly varying background and 1..max_organs elliptical structures.
/// The first ellipse is the labeled target organ; it carries a speckle
/// texture on top of its intensity, which is what distinguishes it from
/// distractor ellipses drawn from an overlapping intensity range.
struct PhantomConfig {
    int height = 128;
    int width = 128;
    int slices_per_subject = 8;
    int min_organs = 1;
    int max_organs = 3;
    double area_min = 0.05;  // target organ foreground fraction bounds
    double area_max = 0.30;
    double texture_noise = 0.35;      // speckle strength inside the target
    double distractor_speckle = 0.0;  // speckle on distractor organs
    double intensity_min = 0.50;      // organ brightness range
    double intensity_max = 0.90;
    double background_noise = 0.02;   // additive noise everywhere
    uint64_t seed = 1;

    void validate() const {
        if (height < 8 || width < 8) throw ConfigError("phantom: image size too small");
        if (slices_per_subject < 1) throw ConfigError("phantom: slices_per_subject must be >= 1");
        if (!(area_min > 0.0 && area_min < area_max && area_max < 1.0))
            throw ConfigError("phantom: area fractions must satisfy 0 < min < max < 1");
        if (min_organs < 1 || max_organs < min_organs)
            throw ConfigError("phantom: organ count range invalid");
        if (!(intensity_min > 0.0 && intensity_min < intensity_max && intensity_max <= 1.0))
            throw ConfigError("phantom: intensity range invalid");
    }
};

/// Deterministic per (config.seed, subject index): regenerating any subject
/// yields identical voxels and labels. Throws when the requested organ
/// layout cannot be placed at the configured size.
std::vector<Volume> generate_phantom_dataset(const PhantomConfig& cfg, int n_subjects);

}  // namespace sslseg
