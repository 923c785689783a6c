#include "sslseg/phantom.hpp"

#include <cmath>

namespace sslseg {

namespace {

struct Ellipse {
    double cy, cx;      // center
    double a, b;        // semi-axes, a >= b
    double theta;       // rotation
    double intensity;
    double speckle;     // multiplicative texture strength
};

// Quadratic form of the ellipse: <= 1 inside.
inline double ellipse_field(const Ellipse& e, double y, double x) {
    const double dy = y - e.cy, dx = x - e.cx;
    const double c = std::cos(e.theta), s = std::sin(e.theta);
    const double u = (dx * c + dy * s) / e.a;
    const double v = (-dx * s + dy * c) / e.b;
    return u * u + v * v;
}

Ellipse sample_ellipse(Rng& rng, const PhantomConfig& cfg, double frac_lo, double frac_hi,
                       double speckle) {
    const double hw = static_cast<double>(cfg.height) * cfg.width;
    const double frac = rng.uniform(frac_lo, frac_hi);
    const double ratio = rng.uniform(0.55, 0.95);  // b = ratio * a
    Ellipse e;
    e.a = std::sqrt(frac * hw / (3.14159265358979323846 * ratio));
    e.b = e.a * ratio;
    e.theta = rng.uniform(0.0, 3.14159265358979323846);
    e.intensity = rng.uniform(cfg.intensity_min, cfg.intensity_max);
    e.speckle = speckle;
    const double margin = e.a + 4.0;  // keep the ellipse fully inside under slice wobble
    if (2.0 * margin >= std::min(cfg.height, cfg.width))
        throw ConfigError("phantom: organ of area fraction " + std::to_string(frac) +
                          " cannot fit a " + std::to_string(cfg.height) + "x" +
                          std::to_string(cfg.width) + " image");
    e.cy = rng.uniform(margin, cfg.height - margin);
    e.cx = rng.uniform(margin, cfg.width - margin);
    return e;
}

bool overlaps(const Ellipse& a, const Ellipse& b) {
    const double d = std::hypot(a.cy - b.cy, a.cx - b.cx);
    return d < a.a + b.a + 4.0;
}

}  // namespace

std::vector<Volume> generate_phantom_dataset(const PhantomConfig& cfg, int n_subjects) {
    cfg.validate();
    // inner margins keep the pixel-counted label fraction inside the
    // configured bounds under slice wobble and edge discretization
    const double frac_lo = cfg.area_min * 1.3;
    const double frac_hi = cfg.area_max * 0.75;
    if (frac_lo >= frac_hi)
        throw ConfigError("phantom: area fraction range too narrow to respect its own bounds");

    const int H = cfg.height, W = cfg.width;
    const int64_t hw = static_cast<int64_t>(H) * W;

    // one background field for the whole dataset (slices drift its phase):
    // subjects then differ only in their organs, which keeps the organ
    // structure the thing that identifies an image
    Rng bg_rng = Rng::stream(cfg.seed, 0x6267ull);
    const double bg_base = bg_rng.uniform(0.20, 0.30);
    const double bg_amp1 = bg_rng.uniform(0.04, 0.09), bg_amp2 = bg_rng.uniform(0.02, 0.06);
    const double bg_fy1 = bg_rng.uniform(0.5, 1.5), bg_fx1 = bg_rng.uniform(0.5, 1.5);
    const double bg_fy2 = bg_rng.uniform(1.0, 2.5), bg_fx2 = bg_rng.uniform(1.0, 2.5);
    const double bg_ph1 = bg_rng.uniform(0.0, 6.28), bg_ph2 = bg_rng.uniform(0.0, 6.28);

    std::vector<Volume> out;
    out.reserve(static_cast<size_t>(n_subjects));
    for (int subject = 0; subject < n_subjects; ++subject) {
        Rng rng = Rng::stream(cfg.seed, static_cast<uint64_t>(subject), 0x7068616eull);

        // subject anatomy; target texture strength varies per subject
        const int n_organs = cfg.min_organs + static_cast<int>(rng.below(cfg.max_organs - cfg.min_organs + 1));
        const double target_speckle = cfg.texture_noise * rng.uniform(0.6, 1.0);
        std::vector<Ellipse> organs;
        organs.push_back(sample_ellipse(rng, cfg, frac_lo, frac_hi, target_speckle));
        for (int d = 1; d < n_organs; ++d) {
            bool placed = false;
            for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
                Ellipse cand = sample_ellipse(rng, cfg, 0.02, 0.10, cfg.distractor_speckle);
                placed = true;
                for (const auto& o : organs) placed = placed && !overlaps(cand, o);
                if (placed) organs.push_back(cand);
            }
            // a distractor that cannot be placed is dropped; the target always exists
        }

        Volume v;
        v.subject_id = "phantom" + std::to_string(subject);
        v.slices = cfg.slices_per_subject;
        v.height = H;
        v.width = W;
        v.voxels.assign(static_cast<size_t>(v.slices) * hw, 0.0f);
        v.labels.assign(static_cast<size_t>(v.slices) * hw, 0);

        for (int s = 0; s < v.slices; ++s) {
            // per-slice wobble of the shared anatomy
            std::vector<Ellipse> slice_organs = organs;
            for (auto& e : slice_organs) {
                e.cy += rng.uniform(-2.0, 2.0);
                e.cx += rng.uniform(-2.0, 2.0);
                const double g = rng.uniform(0.96, 1.04);
                e.a *= g;
                e.b *= g;
                e.theta += rng.uniform(-0.05, 0.05);
            }
            const double ph1 = bg_ph1 + 0.3 * s + rng.uniform(-0.05, 0.05);
            const double ph2 = bg_ph2 + 0.2 * s + rng.uniform(-0.05, 0.05);

            float* img = v.voxels.data() + static_cast<int64_t>(s) * hw;
            uint8_t* lab = v.labels.data() + static_cast<int64_t>(s) * hw;
            constexpr double kTau = 6.283185307179586;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    double val = bg_base +
                                 bg_amp1 * std::sin(kTau * (bg_fy1 * y / H + bg_fx1 * x / W) + ph1) +
                                 bg_amp2 * std::sin(kTau * (bg_fy2 * y / H + bg_fx2 * x / W) + ph2);
                    for (size_t oi = 0; oi < slice_organs.size(); ++oi) {
                        const Ellipse& e = slice_organs[oi];
                        const double field = ellipse_field(e, y, x);
                        if (field > 1.3) continue;
                        double alpha = (1.0 - field) / 0.12 + 0.5;  // soft rim, 0.5 at the label edge
                        alpha = std::clamp(alpha, 0.0, 1.0);
                        if (alpha <= 0.0) continue;
                        double organ_val = e.intensity;
                        if (e.speckle > 0.0) organ_val *= 1.0 + e.speckle * rng.normal();
                        val = val * (1.0 - alpha) + organ_val * alpha;
                        if (oi == 0 && field <= 1.0) lab[y * W + x] = 1;
                    }
                    val += cfg.background_noise * rng.normal();
                    img[y * W + x] = static_cast<float>(std::clamp(val, 0.0, 1.0));
                }
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace sslseg
