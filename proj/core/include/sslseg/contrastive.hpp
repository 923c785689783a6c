#pragma once

#include "sslseg/ops.hpp"

namespace sslseg {

struct ContrastiveConfig {
    double temperature = 0.1;
    int batch_size = 16;
    int local_patch_size = 3;
    int local_patches_per_image = 16;
    bool freeze_encoder_local = true;
    uint64_t seed = 0;

    void validate() const {
        if (temperature <= 0.0) throw ConfigError("contrastive.temperature must be positive");
        if (batch_size < 2) throw ConfigError("contrastive.batch_size must be >= 2");
        if (local_patch_size < 1 || local_patch_size % 2 == 0)
            throw ConfigError("contrastive.local_patch_size must be odd");
        if (local_patches_per_image < 1)
            throw ConfigError("contrastive.local_patches_per_image must be >= 1");
    }
};

/// Anchor rows scored against candidate rows; positive_index[i] names the
/// candidate row that is anchor i's positive, every other candidate acts
/// as a negative. The anchor itself is never in the candidate set.
template <typename T>
struct EmbeddingBatch {
    Tensor<T> anchors;     // [n, d]
    Tensor<T> candidates;  // [m, d]
    std::vector<int> positive_index;
};

/// cos(u, v) for plain vectors; inputs are normalized internally.
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw ShapeError("cosine_similarity: dimension mismatch");
    double uu = 0.0, vv = 0.0, uv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        uu += u[i] * u[i];
        vv += v[i] * v[i];
        uv += u[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) throw ShapeError("cosine_similarity: zero vector");
    return uv / (std::sqrt(uu) * std::sqrt(vv));
}

/// Temperature-scaled cross-entropy over cosine similarities:
/// mean_i [ logsumexp_k(cos(a_i, c_k)/tau) - cos(a_i, c_pos(i))/tau ].
/// Embeddings are re-normalized internally so the loss is invariant to a
/// common rescaling, and the logsumexp subtracts the row max so logits up
/// to 1/tau stay stable.
template <typename T>
Tensor<T> contrastive_loss(const EmbeddingBatch<T>& batch, T temperature, Tape<T>* tape) {
    if (temperature <= T(0)) throw ConfigError("contrastive_loss: temperature must be positive");
    if (batch.anchors.ndim() != 2 || batch.candidates.ndim() != 2 ||
        batch.anchors.dim(1) != batch.candidates.dim(1))
        throw ShapeError("contrastive_loss: anchors " + shape_str(batch.anchors.shape()) +
                         " vs candidates " + shape_str(batch.candidates.shape()));
    const int n = batch.anchors.dim(0);
    const int m = batch.candidates.dim(0);
    if (m < 2)
        throw ShapeError("contrastive_loss: need at least 2 candidates per anchor, got " +
                         std::to_string(m));
    if (static_cast<int>(batch.positive_index.size()) != n)
        throw ShapeError("contrastive_loss: one positive per anchor required");

    Tensor<T> a = l2_normalize_rows(batch.anchors, tape);
    Tensor<T> c = l2_normalize_rows(batch.candidates, tape);
    Tensor<T> logits = scale(matmul_nt(a, c, tape), T(1) / temperature, tape);
    Tensor<T> lse = logsumexp_rows(logits, tape);
    Tensor<T> pos = select_columns(logits, batch.positive_index, tape);
    return mean_all(sub(lse, pos, tape), tape);
}

struct AugmentationConfig {
    double crop_scale_min = 0.7;   // area fraction kept by the crop
    double crop_scale_max = 1.0;
    double brightness_delta = 0.2;
    double contrast_min = 0.8;
    double contrast_max = 1.25;
    double noise_std = 0.0;        // independent per-view Gaussian noise
    bool intensity_only = false;   // skip the crop (local stage default)

    void validate() const {
        if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
            throw ConfigError("augment.crop_scale range must satisfy 0 < min <= max <= 1");
        if (brightness_delta < 0.0) throw ConfigError("augment.brightness_delta must be >= 0");
        if (!(contrast_min > 0.0 && contrast_min <= contrast_max))
            throw ConfigError("augment.contrast range must be well ordered");
        if (noise_std < 0.0) throw ConfigError("augment.noise_std must be >= 0");
    }
};

/// Crop geometry of one augmented view, kept so the local stage can map a
/// pixel in the view back to source coordinates.
struct ViewGeometry {
    double scale = 1.0;  // view pixel -> source pixel scale factor
    double off_y = 0.0;
    double off_x = 0.0;
};

/// Maps a pixel location in one view to the matching location in another
/// view through source coordinates. Returns false when the point falls
/// outside the other view.
inline bool resolve_correspondence(const ViewGeometry& from, const ViewGeometry& to, int height,
                                   int width, int y, int x, int& out_y, int& out_x) {
    const double src_y = from.off_y + y * from.scale;
    const double src_x = from.off_x + x * from.scale;
    out_y = static_cast<int>(std::lround((src_y - to.off_y) / to.scale));
    out_x = static_cast<int>(std::lround((src_x - to.off_x) / to.scale));
    return out_y >= 0 && out_y < height && out_x >= 0 && out_x < width;
}

/// Samples corresponding patch pairs from two local embedding maps.
/// Anchors are average-pooled p x p patches from map_a, positives the
/// matching locations in map_b; every other candidate row (other locations
/// and other images) serves as a negative. Pooled vectors are re-normalized
/// to unit length. Locations whose window would leave either map are
/// resampled, never clipped. Geometry vectors may be empty when the views
/// are spatially aligned (intensity-only augmentation).
template <typename T>
EmbeddingBatch<T> sample_local_patch_pairs(const Tensor<T>& map_a, const Tensor<T>& map_b,
                                           const std::vector<ViewGeometry>& geom_a,
                                           const std::vector<ViewGeometry>& geom_b,
                                           const ContrastiveConfig& cfg, Rng& rng,
                                           Tape<T>* tape) {
    cfg.validate();
    check_same_shape(map_a, map_b, "sample_local_patch_pairs");
    if (map_a.ndim() != 4) throw ShapeError("sample_local_patch_pairs: maps must be [B,C,H,W]");
    const int B = map_a.dim(0), H = map_a.dim(2), W = map_a.dim(3);
    const int p = cfg.local_patch_size;
    const int h = p / 2;
    const int64_t capacity = static_cast<int64_t>(H / p) * (W / p);
    if (cfg.local_patches_per_image > capacity)
        throw ConfigError("sample_local_patch_pairs: " +
                          std::to_string(cfg.local_patches_per_image) + " patches requested, only " +
                          std::to_string(capacity) + " non-overlapping locations available");
    const bool resolve = !geom_a.empty() || !geom_b.empty();
    if (resolve && (static_cast<int>(geom_a.size()) != B || static_cast<int>(geom_b.size()) != B))
        throw ShapeError("sample_local_patch_pairs: one geometry per image required");

    std::vector<PatchLoc> locs_a, locs_b;
    for (int b = 0; b < B; ++b) {
        for (int k = 0; k < cfg.local_patches_per_image; ++k) {
            for (int attempt = 0;; ++attempt) {
                if (attempt >= 1000)
                    throw ConfigError("sample_local_patch_pairs: could not place a patch");
                const int cy = static_cast<int>(rng.below(H));
                const int cx = static_cast<int>(rng.below(W));
                if (cy < h || cy + h >= H || cx < h || cx + h >= W) continue;
                int by = cy, bx = cx;
                if (resolve &&
                    !resolve_correspondence(geom_a[static_cast<size_t>(b)],
                                            geom_b[static_cast<size_t>(b)], H, W, cy, cx, by, bx))
                    continue;
                if (by < h || by + h >= H || bx < h || bx + h >= W) continue;
                locs_a.push_back({b, cy, cx});
                locs_b.push_back({b, by, bx});
                break;
            }
        }
    }

    EmbeddingBatch<T> batch;
    batch.anchors = l2_normalize_rows(extract_patch_means(map_a, locs_a, p, tape), tape);
    batch.candidates = l2_normalize_rows(extract_patch_means(map_b, locs_b, p, tape), tape);
    batch.positive_index.resize(locs_a.size());
    for (size_t i = 0; i < locs_a.size(); ++i) batch.positive_index[i] = static_cast<int>(i);
    return batch;
}

}  // namespace sslseg
