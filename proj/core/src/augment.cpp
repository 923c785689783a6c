#include "sslseg/augment.hpp"

#include <cmath>

namespace sslseg {

void gaussian_blur(std::vector<float>& field, int height, int width, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i / sigma) * (i / sigma));
        kernel[static_cast<size_t>(i + radius)] = static_cast<float>(w);
        norm += w;
    }
    for (float& k : kernel) k = static_cast<float>(k / norm);

    std::vector<float> tmp(field.size());
    for (int y = 0; y < height; ++y)  // horizontal pass
        for (int x = 0; x < width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                const int xi = std::clamp(x + i, 0, width - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * field[static_cast<size_t>(y * width + xi)];
            }
            tmp[static_cast<size_t>(y * width + x)] = acc;
        }
    for (int y = 0; y < height; ++y)  // vertical pass
        for (int x = 0; x < width; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                const int yi = std::clamp(y + i, 0, height - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(yi * width + x)];
            }
            field[static_cast<size_t>(y * width + x)] = acc;
        }
}

float bilinear_sample(std::span<const float> img, int height, int width, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
    const int y1 = std::min(y0 + 1, height - 1), x1 = std::min(x0 + 1, width - 1);
    const float fy = static_cast<float>(y - y0), fx = static_cast<float>(x - x0);
    const float top = img[static_cast<size_t>(y0 * width + x0)] * (1.0f - fx) +
                      img[static_cast<size_t>(y0 * width + x1)] * fx;
    const float bot = img[static_cast<size_t>(y1 * width + x0)] * (1.0f - fx) +
                      img[static_cast<size_t>(y1 * width + x1)] * fx;
    return top * (1.0f - fy) + bot * fy;
}

uint8_t nearest_sample(std::span<const uint8_t> img, int height, int width, double y, double x) {
    const int yi = std::clamp(static_cast<int>(std::lround(y)), 0, height - 1);
    const int xi = std::clamp(static_cast<int>(std::lround(x)), 0, width - 1);
    return img[static_cast<size_t>(yi * width + xi)];
}

namespace {

// Crop geometry draw shared by both views: side scale from the area
// fraction, offsets uniform over the slack.
ViewGeometry draw_crop(const AugmentationConfig& aug, int height, int width, Rng& rng) {
    ViewGeometry g;
    if (aug.intensity_only) return g;
    const double area = rng.uniform(aug.crop_scale_min, aug.crop_scale_max);
    g.scale = std::sqrt(area);
    g.off_y = rng.uniform(0.0, (1.0 - g.scale) * (height - 1));
    g.off_x = rng.uniform(0.0, (1.0 - g.scale) * (width - 1));
    return g;
}

void apply_view(std::span<const float> src, std::vector<float>& dst, int height, int width,
                const ViewGeometry& geom, const AugmentationConfig& aug, Rng& rng) {
    dst.assign(src.begin(), src.end());
    if (geom.scale != 1.0 || geom.off_y != 0.0 || geom.off_x != 0.0) {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                dst[static_cast<size_t>(y * width + x)] = bilinear_sample(
                    src, height, width, geom.off_y + y * geom.scale, geom.off_x + x * geom.scale);
    }
    const double contrast = rng.uniform(aug.contrast_min, aug.contrast_max);
    const double delta = aug.brightness_delta > 0.0
                             ? rng.uniform(-aug.brightness_delta, aug.brightness_delta)
                             : 0.0;
    if (contrast != 1.0) {
        double mean = 0.0;
        for (float v : dst) mean += v;
        mean /= static_cast<double>(dst.size());
        for (float& v : dst) v = static_cast<float>((v - mean) * contrast + mean);
    }
    if (delta != 0.0)
        for (float& v : dst) v = static_cast<float>(v + delta);
    if (aug.noise_std > 0.0) {
        // independent noise per view keeps positives from sharing a pixel
        // noise fingerprint
        for (float& v : dst) v = static_cast<float>(v + rng.normal(0.0, aug.noise_std));
    }
    if (contrast != 1.0 || delta != 0.0 || aug.noise_std > 0.0)
        for (float& v : dst) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

ViewPair make_positive_pair(std::span<const float> image, int height, int width,
                            const AugmentationConfig& aug, Rng& rng) {
    aug.validate();
    if (static_cast<size_t>(height) * width != image.size())
        throw ShapeError("make_positive_pair: image size mismatch");
    ViewPair out;
    out.geom_a = draw_crop(aug, height, width, rng);
    apply_view(image, out.view_a, height, width, out.geom_a, aug, rng);
    out.geom_b = draw_crop(aug, height, width, rng);
    apply_view(image, out.view_b, height, width, out.geom_b, aug, rng);
    return out;
}

SegSample augment_finetune(const SegSample& sample, const FinetuneAugConfig& cfg, Rng& rng) {
    const int H = sample.height, W = sample.width;
    if (static_cast<size_t>(H) * W != sample.image.size() ||
        sample.image.size() != sample.labels.size())
        throw ShapeError("augment_finetune: sample buffers disagree");

    // crop-and-resize
    const double scale = rng.uniform(cfg.crop_min, cfg.crop_max);
    const double max_oy = (1.0 - scale) * (H - 1), max_ox = (1.0 - scale) * (W - 1);
    const double off_y = max_oy > 0.0 ? rng.uniform(0.0, max_oy) : 0.0;
    const double off_x = max_ox > 0.0 ? rng.uniform(0.0, max_ox) : 0.0;
    // translation
    const double ty = cfg.translate_frac > 0.0
                          ? rng.uniform(-cfg.translate_frac * H, cfg.translate_frac * H)
                          : 0.0;
    const double tx = cfg.translate_frac > 0.0
                          ? rng.uniform(-cfg.translate_frac * W, cfg.translate_frac * W)
                          : 0.0;
    // elastic displacement: smoothed noise scaled to a peak of elastic_alpha
    std::vector<float> dy, dx;
    if (cfg.elastic_alpha > 0.0) {
        dy.resize(sample.image.size());
        dx.resize(sample.image.size());
        for (auto& v : dy) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        for (auto& v : dx) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        gaussian_blur(dy, H, W, cfg.elastic_sigma);
        gaussian_blur(dx, H, W, cfg.elastic_sigma);
        for (auto* f : {&dy, &dx}) {
            float peak = 0.0f;
            for (float v : *f) peak = std::max(peak, std::abs(v));
            const float s = peak > 0.0f ? static_cast<float>(cfg.elastic_alpha) / peak : 0.0f;
            for (float& v : *f) v *= s;
        }
    }

    SegSample out;
    out.height = H;
    out.width = W;
    out.image.resize(sample.image.size());
    out.labels.resize(sample.labels.size());
    const bool identity_affine = scale == 1.0 && off_y == 0.0 && off_x == 0.0 && ty == 0.0 && tx == 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double sy = identity_affine ? y : off_y + y * scale + ty;
            double sx = identity_affine ? x : off_x + x * scale + tx;
            if (!dy.empty()) {
                sy += dy[static_cast<size_t>(y * W + x)];
                sx += dx[static_cast<size_t>(y * W + x)];
            }
            const size_t i = static_cast<size_t>(y * W + x);
            if (identity_affine && dy.empty()) {
                out.image[i] = sample.image[i];
                out.labels[i] = sample.labels[i];
            } else {
                out.image[i] =
                    std::clamp(bilinear_sample(sample.image, H, W, sy, sx), 0.0f, 1.0f);
                out.labels[i] = nearest_sample(sample.labels, H, W, sy, sx);
            }
        }
    return out;
}

}  // namespace sslseg
