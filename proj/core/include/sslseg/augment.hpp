#pragma once

#include <span>

#include "sslseg/contrastive.hpp"
#include "sslseg/data.hpp"

namespace sslseg {

/// Separable Gaussian blur with clamped borders, in place.
void gaussian_blur(std::vector<float>& field, int height, int width, double sigma);

/// Bilinear sample with border clamping.
float bilinear_sample(std::span<const float> img, int height, int width, double y, double x);

/// Nearest-neighbour sample with border clamping; used for label maps so the
/// label alphabet is preserved.
uint8_t nearest_sample(std::span<const uint8_t> img, int height, int width, double y, double x);

/// Two independently augmented views of one image plus the crop geometry of
/// each, for later pixel correspondence. Views are clamped to [0,1].
struct ViewPair {
    std::vector<float> view_a;
    std::vector<float> view_b;
    ViewGeometry geom_a;
    ViewGeometry geom_b;
};

ViewPair make_positive_pair(std::span<const float> image, int height, int width,
                            const AugmentationConfig& aug, Rng& rng);

/// Finetuning augmentation parameters: translation within +-translate_frac
/// of the image extent, crop-and-resize with side scale in [crop_min,
/// crop_max], and an elastic deformation from a Gaussian-smoothed random
/// displacement field (smoothing sigma in pixels, peak amplitude in pixels).
struct FinetuneAugConfig {
    double translate_frac = 0.10;
    double crop_min = 0.8;
    double crop_max = 1.0;
    double elastic_sigma = 8.0;
    double elastic_alpha = 10.0;
};

/// One warped sample: bilinear for the image, nearest-neighbour for labels,
/// image re-clamped to [0,1]. All three transforms compose into a single
/// coordinate map so labels are resampled exactly once.
SegSample augment_finetune(const SegSample& sample, const FinetuneAugConfig& cfg, Rng& rng);

}  // namespace sslseg
