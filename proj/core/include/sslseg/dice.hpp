#pragma once

#include "sslseg/ops.hpp"

namespace sslseg {

/// Soft multi-class Dice loss over softmax probabilities:
/// 1 - mean over foreground classes of (2*sum(p*g)+eps)/(sum(p)+sum(g)+eps).
/// `labels` is a row-major [B,H,W] integer map; class 0 is background.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& scores, const std::vector<uint8_t>& labels, Tape<T>* tape) {
    detail::check_image(scores, "dice_loss");
    const int B = scores.dim(0), C = scores.dim(1), H = scores.dim(2), W = scores.dim(3);
    const int64_t hw = static_cast<int64_t>(H) * W;
    if (static_cast<int64_t>(labels.size()) != static_cast<int64_t>(B) * hw)
        throw ShapeError("dice_loss: label map size does not match scores " +
                         shape_str(scores.shape()));
    for (uint8_t l : labels)
        if (l >= C)
            throw ShapeError("dice_loss: label value " + std::to_string(int(l)) +
                             " >= num_classes " + std::to_string(C));
    const T eps = T(1e-5);

    Tensor<T> onehot = Tensor<T>::zeros(scores.shape());
    {
        auto ov = onehot.values();
        for (int b = 0; b < B; ++b)
            for (int64_t p = 0; p < hw; ++p) {
                const uint8_t l = labels[static_cast<size_t>(b * hw + p)];
                ov[(static_cast<int64_t>(b) * C + l) * hw + p] = T(1);
            }
    }

    Tensor<T> probs = softmax_channels(scores, tape);
    Tensor<T> inter = channel_sums(mul(probs, onehot, tape), tape);  // [C]
    Tensor<T> psum = channel_sums(probs, tape);
    Tensor<T> gsum = channel_sums(onehot, tape);
    Tensor<T> numer = add_scalar(scale(inter, T(2), tape), eps, tape);
    Tensor<T> denom = add_scalar(add(psum, gsum, tape), eps, tape);
    Tensor<T> dice = div(numer, denom, tape);  // [C]

    // average over foreground classes only
    Tensor<T> fg_weights = Tensor<T>::zeros({C});
    for (int c = 1; c < C; ++c) fg_weights.values()[c] = T(1) / static_cast<T>(C - 1);
    Tensor<T> fg_dice = sum_all(mul(dice, fg_weights, tape), tape);
    return add_scalar(scale(fg_dice, T(-1), tape), T(1), tape);
}

/// Hard Dice overlap for one class: 2|P∩G| / (|P|+|G|).
/// Both empty counts as a perfect 1.0.
inline double dice_score(std::span<const uint8_t> pred, std::span<const uint8_t> gt, int cls) {
    if (pred.size() != gt.size()) throw ShapeError("dice_score: size mismatch");
    int64_t inter = 0, p = 0, g = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool in_p = pred[i] == cls;
        const bool in_g = gt[i] == cls;
        p += in_p;
        g += in_g;
        inter += in_p && in_g;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

/// Running intersection/size counts for volume-level Dice: slices are
/// accumulated first, the ratio is taken once at the end.
struct DiceCounts {
    std::vector<int64_t> intersection;
    std::vector<int64_t> pred_size;
    std::vector<int64_t> gt_size;

    explicit DiceCounts(int num_classes)
        : intersection(static_cast<size_t>(num_classes), 0),
          pred_size(static_cast<size_t>(num_classes), 0),
          gt_size(static_cast<size_t>(num_classes), 0) {}

    void add_slice(std::span<const uint8_t> pred, std::span<const uint8_t> gt) {
        if (pred.size() != gt.size()) throw ShapeError("dice counts: size mismatch");
        for (size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] < pred_size.size()) ++pred_size[pred[i]];
            if (gt[i] < gt_size.size()) ++gt_size[gt[i]];
            if (pred[i] == gt[i] && pred[i] < intersection.size()) ++intersection[pred[i]];
        }
    }

    double dice(int cls) const {
        const auto c = static_cast<size_t>(cls);
        const int64_t denom = pred_size[c] + gt_size[c];
        if (denom == 0) return 1.0;
        return 2.0 * static_cast<double>(intersection[c]) / static_cast<double>(denom);
    }
};

}  // namespace sslseg
