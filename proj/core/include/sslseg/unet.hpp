#pragma once

#include "sslseg/adam.hpp"
#include "sslseg/ops.hpp"

namespace sslseg {

struct UNetConfig {
    int depth = 4;            // down/up levels
    int base_channels = 16;   // doubles per level
    int in_channels = 1;
    int num_classes = 2;
    int global_embed_dim = 128;
    int local_embed_dim = 64;

    void validate() const {
        if (depth < 1) throw ConfigError("model.depth must be >= 1");
        if (base_channels < 1) throw ConfigError("model.base_channels must be >= 1");
        if (in_channels < 1) throw ConfigError("model.in_channels must be >= 1");
        if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
        if (global_embed_dim < 2) throw ConfigError("model.global_embed_dim must be >= 2");
        if (local_embed_dim < 2) throw ConfigError("model.local_embed_dim must be >= 2");
    }

    int level_channels(int level) const { return base_channels << level; }
    int bottleneck_channels() const { return base_channels << depth; }
};

enum class HeadMode { none, regression, global, local, segmentation };

inline const char* head_mode_name(HeadMode m) {
    switch (m) {
        case HeadMode::none: return "none";
        case HeadMode::regression: return "regression";
        case HeadMode::global: return "global";
        case HeadMode::local: return "local";
        case HeadMode::segmentation: return "segmentation";
    }
    return "?";
}

inline HeadMode head_mode_from_name(const std::string& s) {
    for (HeadMode m : {HeadMode::none, HeadMode::regression, HeadMode::global, HeadMode::local,
                       HeadMode::segmentation})
        if (s == head_mode_name(m)) return m;
    throw ConfigError("unknown head mode: " + s);
}

/// 2D UNet-style encoder/decoder with swappable task heads.
///
/// Encoder level i runs two conv(3x3)+instance-norm+relu stages at
/// base*2^i channels, then 2x2 max pooling; the bottleneck doubles
/// channels once more; decoder levels upsample, concatenate the matching
/// encoder feature and run the same double conv stage back down the
/// ladder. Exactly one head is attached at a time; swapping heads never
/// touches backbone weights.
template <typename T>
class UNet {
public:
    UNetConfig cfg;

    static UNet build(const UNetConfig& cfg, uint64_t seed) {
        cfg.validate();
        UNet net;
        net.cfg = cfg;
        Rng rng = Rng::stream(seed, 0x6261636bull);  // backbone stream
        int in_c = cfg.in_channels;
        for (int level = 0; level < cfg.depth; ++level) {
            const int out_c = cfg.level_channels(level);
            net.append_block(net.backbone_, "enc" + std::to_string(level), in_c, out_c, rng);
            in_c = out_c;
        }
        net.append_block(net.backbone_, "bottleneck", in_c, cfg.bottleneck_channels(), rng);
        for (int level = cfg.depth - 1; level >= 0; --level) {
            const int skip_c = cfg.level_channels(level);
            const int up_c = cfg.level_channels(level) * 2;  // channels arriving from below
            net.append_block(net.backbone_, "dec" + std::to_string(level), up_c + skip_c, skip_c,
                             rng);
        }
        return net;
    }

    /// Attaches a freshly initialized head for `mode`, discarding any other
    /// head. Backbone parameters are untouched, bit for bit.
    void swap_head(HeadMode mode, uint64_t seed) {
        head_.clear();
        mode_ = mode;
        Rng rng = Rng::stream(seed, 0x68656164ull, static_cast<uint64_t>(mode));
        const int base = cfg.base_channels;
        switch (mode) {
            case HeadMode::none:
                break;
            case HeadMode::regression:
                append_conv(head_, "head.recon", base, 1, 1, rng);
                break;
            case HeadMode::segmentation:
                append_conv(head_, "head.seg", base, cfg.num_classes, 1, rng);
                break;
            case HeadMode::local:
                append_conv(head_, "head.local", base, cfg.local_embed_dim, 1, rng);
                break;
            case HeadMode::global: {
                const int bc = cfg.bottleneck_channels();
                const int hidden = 256;
                head_.push_back({"head.global.fc1.w", he_uniform(rng, {hidden, bc}, bc)});
                head_.push_back({"head.global.fc1.b", bias_uniform(rng, hidden, bc)});
                head_.push_back(
                    {"head.global.fc2.w", he_uniform(rng, {cfg.global_embed_dim, hidden}, hidden)});
                head_.push_back({"head.global.fc2.b", bias_uniform(rng, cfg.global_embed_dim, hidden)});
                break;
            }
        }
    }

    HeadMode head_mode() const { return mode_; }

    /// Deep copy: fresh storage for every parameter.
    UNet clone() const {
        UNet out;
        out.cfg = cfg;
        out.mode_ = mode_;
        for (const auto& p : backbone_) out.backbone_.push_back({p.name, p.tensor.clone()});
        for (const auto& p : head_) out.head_.push_back({p.name, p.tensor.clone()});
        return out;
    }

    std::span<Param<T>> backbone_params() { return backbone_; }
    std::span<const Param<T>> backbone_params() const { return backbone_; }
    std::span<Param<T>> head_params() { return head_; }
    std::span<const Param<T>> head_params() const { return head_; }

    /// Backbone followed by the active head's params; the parameter set a
    /// checkpoint stores and an optimizer usually trains.
    std::vector<Param<T>> all_params() {
        std::vector<Param<T>> out(backbone_.begin(), backbone_.end());
        out.insert(out.end(), head_.begin(), head_.end());
        return out;
    }

    /// Params of encoder + bottleneck blocks only (the "encoder pathway").
    std::vector<Param<T>> encoder_params() {
        std::vector<Param<T>> out;
        for (auto& p : backbone_)
            if (p.name.rfind("enc", 0) == 0 || p.name.rfind("bottleneck", 0) == 0) out.push_back(p);
        return out;
    }

    std::vector<Param<T>> decoder_params() {
        std::vector<Param<T>> out;
        for (auto& p : backbone_)
            if (p.name.rfind("dec", 0) == 0) out.push_back(p);
        return out;
    }

    void set_requires_grad(std::span<Param<T>> params, bool rg) {
        for (auto& p : params) p.tensor.set_requires_grad(rg);
    }

    /// Per-level activations of one forward pass through the backbone.
    struct ForwardOutputs {
        std::vector<Tensor<T>> encoder_features;  // level i: [B, base*2^i, H/2^i, W/2^i]
        Tensor<T> bottleneck;
        std::vector<Tensor<T>> decoder_features;  // level i at encoder level i's dims
    };

    ForwardOutputs forward_features(const Tensor<T>& x, Tape<T>* tape) {
        ForwardOutputs out;
        EncodeResult enc = encode(x, tape);
        out.encoder_features = enc.skips;
        out.bottleneck = enc.bottleneck;
        Tensor<T> h = enc.bottleneck;
        int pi = (cfg.depth + 1) * kParamsPerBlock;
        out.decoder_features.resize(static_cast<size_t>(cfg.depth));
        for (int level = cfg.depth - 1; level >= 0; --level) {
            h = upsample_nearest2(h, tape);
            h = concat_channels(h, enc.skips[static_cast<size_t>(level)], tape);
            h = run_block(h, pi, tape);
            out.decoder_features[static_cast<size_t>(level)] = h;
        }
        return out;
    }

    /// Per-pixel class scores (pre-softmax), [B,num_classes,H,W].
    Tensor<T> forward_segmentation(const Tensor<T>& x, Tape<T>* tape) {
        require_head(HeadMode::segmentation);
        Tensor<T> h = decode(encode(x, tape), tape);
        return conv2d(h, head_[0].tensor, head_[1].tensor, tape);
    }

    /// Image estimate with the same shape as the input.
    Tensor<T> forward_reconstruction(const Tensor<T>& x, Tape<T>* tape) {
        require_head(HeadMode::regression);
        Tensor<T> h = decode(encode(x, tape), tape);
        return conv2d(h, head_[0].tensor, head_[1].tensor, tape);
    }

    /// Unit-norm global embedding rows, [B, global_embed_dim].
    Tensor<T> forward_global_embedding(const Tensor<T>& x, Tape<T>* tape) {
        require_head(HeadMode::global);
        EncodeResult enc = encode(x, tape);
        Tensor<T> pooled = global_avg_pool(enc.bottleneck, tape);
        Tensor<T> h = relu(linear(pooled, head_[0].tensor, head_[1].tensor, tape), tape);
        Tensor<T> z = linear(h, head_[2].tensor, head_[3].tensor, tape);
        return l2_normalize_rows(z, tape);
    }

    /// Per-pixel unit-norm embedding map at full decoder resolution,
    /// [B, local_embed_dim, H, W].
    Tensor<T> forward_local_embeddings(const Tensor<T>& x, Tape<T>* tape) {
        require_head(HeadMode::local);
        Tensor<T> h = decode(encode(x, tape), tape);
        Tensor<T> z = conv2d(h, head_[0].tensor, head_[1].tensor, tape);
        return l2_normalize_channels(z, tape);
    }

private:
    struct EncodeResult {
        std::vector<Tensor<T>> skips;
        Tensor<T> bottleneck;
    };

    void require_head(HeadMode m) const {
        if (mode_ != m)
            throw ShapeError(std::string("forward: ") + head_mode_name(m) +
                             " head not attached (active: " + head_mode_name(mode_) + ")");
    }

    void check_input(const Tensor<T>& x) const {
        if (x.ndim() != 4 || x.dim(1) != cfg.in_channels)
            throw ShapeError("unet: expected [B," + std::to_string(cfg.in_channels) +
                             ",H,W] input, got " + shape_str(x.shape()));
        const int div = 1 << cfg.depth;
        if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
            throw ShapeError("unet: H and W must be divisible by 2^depth=" + std::to_string(div) +
                             ", got " + shape_str(x.shape()));
    }

    EncodeResult encode(const Tensor<T>& x, Tape<T>* tape) {
        check_input(x);
        EncodeResult r;
        Tensor<T> h = x;
        int pi = 0;
        for (int level = 0; level < cfg.depth; ++level) {
            h = run_block(h, pi, tape);
            r.skips.push_back(h);
            h = max_pool2(h, tape);
        }
        r.bottleneck = run_block(h, pi, tape);
        return r;
    }

    Tensor<T> decode(EncodeResult enc, Tape<T>* tape) {
        Tensor<T> h = enc.bottleneck;
        int pi = (cfg.depth + 1) * kParamsPerBlock;
        for (int level = cfg.depth - 1; level >= 0; --level) {
            h = upsample_nearest2(h, tape);
            h = concat_channels(h, enc.skips[static_cast<size_t>(level)], tape);
            h = run_block(h, pi, tape);
        }
        return h;
    }

    // conv.w, conv.b, norm.g, norm.b twice per block
    static constexpr int kParamsPerBlock = 8;

    Tensor<T> run_block(const Tensor<T>& x, int& pi, Tape<T>* tape) {
        Tensor<T> h = x;
        for (int stage = 0; stage < 2; ++stage) {
            auto& w = backbone_[static_cast<size_t>(pi++)].tensor;
            auto& b = backbone_[static_cast<size_t>(pi++)].tensor;
            auto& g = backbone_[static_cast<size_t>(pi++)].tensor;
            auto& s = backbone_[static_cast<size_t>(pi++)].tensor;
            h = relu(instance_norm(conv2d(h, w, b, tape), g, s, tape), tape);
        }
        return h;
    }

    static Tensor<T> he_uniform(Rng& rng, Shape shape, int fan_in) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        Tensor<T> t = Tensor<T>::zeros(shape, true);
        for (T& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
        return t;
    }

    // fan-in uniform bias keeps head outputs away from the exact-zero
    // vector that L2 normalization cannot scale to unit norm
    static Tensor<T> bias_uniform(Rng& rng, int count, int fan_in) {
        const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor<T> t = Tensor<T>::zeros({count}, true);
        for (T& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
        return t;
    }

    void append_conv(std::vector<Param<T>>& dst, const std::string& name, int cin, int cout, int k,
                     Rng& rng) {
        dst.push_back({name + ".w", he_uniform(rng, {cout, cin, k, k}, cin * k * k)});
        dst.push_back({name + ".b", bias_uniform(rng, cout, cin * k * k)});
    }

    void append_block(std::vector<Param<T>>& dst, const std::string& name, int cin, int cout,
                      Rng& rng) {
        for (int stage = 1; stage <= 2; ++stage) {
            const int in_c = stage == 1 ? cin : cout;
            const std::string s = name + ".conv" + std::to_string(stage);
            dst.push_back({s + ".w", he_uniform(rng, {cout, in_c, 3, 3}, in_c * 9)});
            dst.push_back({s + ".b", bias_uniform(rng, cout, in_c * 9)});
            dst.push_back({name + ".norm" + std::to_string(stage) + ".g",
                           Tensor<T>::full({cout}, T(1), true)});
            dst.push_back({name + ".norm" + std::to_string(stage) + ".b",
                           Tensor<T>::zeros({cout}, true)});
        }
    }

    std::vector<Param<T>> backbone_;
    std::vector<Param<T>> head_;
    HeadMode mode_ = HeadMode::none;
};

using UNetF = UNet<float>;

}  // namespace sslseg
