#include "sslseg/train.hpp"

#include <numeric>

namespace sslseg {

namespace {

Tensor<float> stack_images(const std::vector<const std::vector<float>*>& images, int height,
                           int width) {
    const int B = static_cast<int>(images.size());
    Tensor<float> batch = Tensor<float>::zeros({B, 1, height, width});
    auto bv = batch.values();
    const int64_t hw = static_cast<int64_t>(height) * width;
    for (int b = 0; b < B; ++b)
        std::copy(images[static_cast<size_t>(b)]->begin(), images[static_cast<size_t>(b)]->end(),
                  bv.begin() + b * hw);
    return batch;
}

void check_finite_loss(double loss, const char* stage) {
    if (!std::isfinite(loss))
        throw NumericError(std::string(stage) + ": loss became non-finite");
}

// Deep value snapshot/restore used for best-checkpoint tracking.
std::vector<std::vector<float>> snapshot(std::span<Param<float>> params) {
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (auto& p : params)
        out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
    return out;
}

void restore(std::span<Param<float>> params, const std::vector<std::vector<float>>& snap) {
    for (size_t i = 0; i < params.size(); ++i)
        std::copy(snap[i].begin(), snap[i].end(), params[i].tensor.values().begin());
}

}  // namespace

SlicePool slice_pool_from_volumes(const std::vector<Volume>& volumes) {
    SlicePool pool;
    for (const auto& v : volumes) {
        if (pool.height == 0) {
            pool.height = v.height;
            pool.width = v.width;
        } else if (pool.height != v.height || pool.width != v.width) {
            throw ShapeError("slice pool: volume " + v.subject_id + " has mismatched dims");
        }
        for (int s = 0; s < v.slices; ++s)
            pool.images.emplace_back(v.slice(s).begin(), v.slice(s).end());
    }
    return pool;
}

std::vector<SegSample> seg_samples_from_volumes(const std::vector<Volume>& volumes) {
    std::vector<SegSample> out;
    for (const auto& v : volumes) {
        if (!v.has_labels())
            throw ConfigError("volume " + v.subject_id + " has no labels for finetuning");
        for (int s = 0; s < v.slices; ++s) {
            SegSample sample;
            sample.height = v.height;
            sample.width = v.width;
            sample.image.assign(v.slice(s).begin(), v.slice(s).end());
            sample.labels.assign(v.label_slice(s).begin(), v.label_slice(s).end());
            out.push_back(std::move(sample));
        }
    }
    return out;
}

EpochHistory pretrain_regression(UNetF& model, const SlicePool& pool, const CorruptionConfig& ccfg,
                                 const ScheduleConfig& sched, int batch_size, uint64_t seed) {
    if (pool.images.empty()) throw ConfigError("pretrain_regression: empty dataset");
    ccfg.validate();
    sched.validate();
    if (model.head_mode() != HeadMode::regression)
        throw ShapeError("pretrain_regression: regression head not attached");

    auto params = model.all_params();
    model.set_requires_grad(params, true);
    AdamState<float> adam(static_cast<float>(sched.initial_lr));
    PlateauScheduler scheduler(sched);

    EpochHistory hist;
    std::vector<size_t> order(pool.images.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        Rng shuffle_rng = Rng::stream(seed, 0x726567ull, static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int steps = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch_size)) {
            const size_t n = std::min(static_cast<size_t>(batch_size), order.size() - at);
            std::vector<const std::vector<float>*> imgs;
            for (size_t i = 0; i < n; ++i)
                imgs.push_back(&pool.images[order[at + i]]);
            Tensor<float> ref = stack_images(imgs, pool.height, pool.width);

            // fresh mask per image and per epoch, stream keyed by image id
            Tensor<float> corrupted = ref.clone();
            CorruptionMask<float> mask;
            mask.mask = Tensor<float>::zeros(ref.shape());
            const int64_t hw = static_cast<int64_t>(pool.height) * pool.width;
            for (size_t i = 0; i < n; ++i) {
                Rng mask_rng =
                    Rng::stream(ccfg.seed ^ seed, order[at + i], static_cast<uint64_t>(epoch));
                Tensor<float> one = Tensor<float>::from_vector(
                    {1, 1, pool.height, pool.width},
                    std::vector<float>(pool.images[order[at + i]].begin(),
                                       pool.images[order[at + i]].end()));
                auto [c1, m1] = corrupt_image(one, ccfg, mask_rng);
                std::copy(c1.values().begin(), c1.values().end(),
                          corrupted.values().begin() + static_cast<int64_t>(i) * hw);
                std::copy(m1.mask.values().begin(), m1.mask.values().end(),
                          mask.mask.values().begin() + static_cast<int64_t>(i) * hw);
                mask.popcount += m1.popcount;
            }

            Tape<float> tape;
            Tensor<float> recon = model.forward_reconstruction(corrupted, &tape);
            Tensor<float> loss = masked_l1_loss(recon, ref, mask, &tape);
            const double lv = loss.item();
            check_finite_loss(lv, "pretrain_regression");
            tape.backward(loss);
            adam.step(params);
            zero_grads(std::span<Param<float>>(params));
            epoch_loss += lv;
            ++steps;
        }
        epoch_loss /= std::max(steps, 1);
        hist.train_loss.push_back(epoch_loss);
        hist.lr.push_back(adam.learning_rate);
        hist.steps.push_back(steps);
        adam.learning_rate = static_cast<float>(scheduler.observe(epoch_loss));
    }
    return hist;
}

namespace {

// Symmetrized in-batch contrastive objective over two view groups laid out
// as rows [0,B) and [B,2B) of one embedding matrix.
Tensor<float> paired_nt_xent(const Tensor<float>& embeddings, int pairs, float temperature,
                             Tape<float>* tape) {
    Tensor<float> a = slice_rows(embeddings, 0, pairs, tape);
    Tensor<float> b = slice_rows(embeddings, pairs, pairs, tape);
    std::vector<int> idx(static_cast<size_t>(pairs));
    std::iota(idx.begin(), idx.end(), 0);
    EmbeddingBatch<float> ab{a, b, idx};
    EmbeddingBatch<float> ba{b, a, idx};
    Tensor<float> l1 = contrastive_loss(ab, temperature, tape);
    Tensor<float> l2 = contrastive_loss(ba, temperature, tape);
    return scale(add(l1, l2, tape), 0.5f, tape);
}

}  // namespace

ContrastiveHistory pretrain_contrastive(UNetF& model, const SlicePool& pool,
                                        const ContrastiveConfig& cfg,
                                        const AugmentationConfig& aug,
                                        const ScheduleConfig& global_sched,
                                        const ScheduleConfig& local_sched, uint64_t seed) {
    if (pool.images.empty()) throw ConfigError("pretrain_contrastive: empty dataset");
    cfg.validate();
    aug.validate();
    global_sched.validate();
    local_sched.validate();

    ContrastiveHistory hist;
    const float tau = static_cast<float>(cfg.temperature);
    std::vector<size_t> order(pool.images.size());
    std::iota(order.begin(), order.end(), 0);

    // stage 1: encoder + global head on whole-image pairs
    model.swap_head(HeadMode::global, seed);
    {
        auto backbone = model.backbone_params();
        model.set_requires_grad(backbone, true);
        auto trainable = model.encoder_params();
        for (auto& p : model.head_params()) trainable.push_back(p);
        AdamState<float> adam(static_cast<float>(global_sched.initial_lr));
        PlateauScheduler scheduler(global_sched);
        for (int epoch = 0; epoch < global_sched.epochs; ++epoch) {
            Rng shuffle_rng = Rng::stream(seed, 0x676c6full, static_cast<uint64_t>(epoch));
            shuffle_rng.shuffle(order);
            double epoch_loss = 0.0;
            int steps = 0;
            for (size_t at = 0; at + 2 <= order.size(); at += static_cast<size_t>(cfg.batch_size)) {
                const int B = static_cast<int>(
                    std::min(static_cast<size_t>(cfg.batch_size), order.size() - at));
                if (B < 2) break;
                std::vector<std::vector<float>> views(static_cast<size_t>(2 * B));
                for (int i = 0; i < B; ++i) {
                    Rng aug_rng =
                        Rng::stream(seed ^ cfg.seed, order[at + static_cast<size_t>(i)],
                                    static_cast<uint64_t>(epoch), 1);
                    ViewPair pair = make_positive_pair(pool.images[order[at + static_cast<size_t>(i)]],
                                                       pool.height, pool.width, aug, aug_rng);
                    views[static_cast<size_t>(i)] = std::move(pair.view_a);
                    views[static_cast<size_t>(i + B)] = std::move(pair.view_b);
                }
                std::vector<const std::vector<float>*> ptrs;
                for (auto& v : views) ptrs.push_back(&v);
                Tensor<float> batch = stack_images(ptrs, pool.height, pool.width);

                Tape<float> tape;
                Tensor<float> emb = model.forward_global_embedding(batch, &tape);
                Tensor<float> loss = paired_nt_xent(emb, B, tau, &tape);
                const double lv = loss.item();
                check_finite_loss(lv, "pretrain_contrastive[global]");
                tape.backward(loss);
                adam.step(std::span<Param<float>>(trainable));
                zero_grads(std::span<Param<float>>(trainable));
                epoch_loss += lv;
                ++steps;
            }
            epoch_loss /= std::max(steps, 1);
            hist.global_stage.train_loss.push_back(epoch_loss);
            hist.global_stage.lr.push_back(adam.learning_rate);
            hist.global_stage.steps.push_back(steps);
            adam.learning_rate = static_cast<float>(scheduler.observe(epoch_loss));
        }
    }

    // stage 2: decoder + local head on corresponding patch pairs
    model.swap_head(HeadMode::local, seed + 1);
    {
        auto encoder = model.encoder_params();
        model.set_requires_grad(std::span<Param<float>>(encoder), !cfg.freeze_encoder_local);
        auto trainable = model.decoder_params();
        if (!cfg.freeze_encoder_local)
            for (auto& p : encoder) trainable.push_back(p);
        for (auto& p : model.head_params()) trainable.push_back(p);

        AugmentationConfig local_aug = aug;
        local_aug.intensity_only = true;  // exact spatial correspondence by default
        AdamState<float> adam(static_cast<float>(local_sched.initial_lr));
        PlateauScheduler scheduler(local_sched);
        for (int epoch = 0; epoch < local_sched.epochs; ++epoch) {
            Rng shuffle_rng = Rng::stream(seed, 0x6c6f63ull, static_cast<uint64_t>(epoch));
            shuffle_rng.shuffle(order);
            double epoch_loss = 0.0;
            int steps = 0;
            for (size_t at = 0; at + 2 <= order.size(); at += static_cast<size_t>(cfg.batch_size)) {
                const int B = static_cast<int>(
                    std::min(static_cast<size_t>(cfg.batch_size), order.size() - at));
                if (B < 2) break;
                std::vector<std::vector<float>> views(static_cast<size_t>(2 * B));
                for (int i = 0; i < B; ++i) {
                    Rng aug_rng =
                        Rng::stream(seed ^ cfg.seed, order[at + static_cast<size_t>(i)],
                                    static_cast<uint64_t>(epoch), 2);
                    ViewPair pair = make_positive_pair(pool.images[order[at + static_cast<size_t>(i)]],
                                                       pool.height, pool.width, local_aug, aug_rng);
                    views[static_cast<size_t>(i)] = std::move(pair.view_a);
                    views[static_cast<size_t>(i + B)] = std::move(pair.view_b);
                }
                std::vector<const std::vector<float>*> ptrs;
                for (auto& v : views) ptrs.push_back(&v);
                Tensor<float> batch = stack_images(ptrs, pool.height, pool.width);

                Tape<float> tape;
                Tensor<float> maps = model.forward_local_embeddings(batch, &tape);
                Tensor<float> map_a = slice_rows(maps, 0, B, &tape);
                Tensor<float> map_b = slice_rows(maps, B, B, &tape);
                Rng patch_rng = Rng::stream(seed ^ cfg.seed, at, static_cast<uint64_t>(epoch), 3);
                EmbeddingBatch<float> fwd = sample_local_patch_pairs(map_a, map_b, {}, {}, cfg,
                                                                     patch_rng, &tape);
                EmbeddingBatch<float> rev{fwd.candidates, fwd.anchors, fwd.positive_index};
                Tensor<float> loss = scale(add(contrastive_loss(fwd, tau, &tape),
                                               contrastive_loss(rev, tau, &tape), &tape),
                                           0.5f, &tape);
                const double lv = loss.item();
                check_finite_loss(lv, "pretrain_contrastive[local]");
                tape.backward(loss);
                adam.step(std::span<Param<float>>(trainable));
                zero_grads(std::span<Param<float>>(trainable));
                epoch_loss += lv;
                ++steps;
            }
            epoch_loss /= std::max(steps, 1);
            hist.local_stage.train_loss.push_back(epoch_loss);
            hist.local_stage.lr.push_back(adam.learning_rate);
            hist.local_stage.steps.push_back(steps);
            adam.learning_rate = static_cast<float>(scheduler.observe(epoch_loss));
        }
        model.set_requires_grad(std::span<Param<float>>(encoder), true);
    }
    return hist;
}

namespace {

double mean_dice_loss(UNetF& model, const std::vector<SegSample>& samples, int batch_size) {
    double total = 0.0;
    int count = 0;
    for (size_t at = 0; at < samples.size(); at += static_cast<size_t>(batch_size)) {
        const size_t n = std::min(static_cast<size_t>(batch_size), samples.size() - at);
        std::vector<const std::vector<float>*> imgs;
        std::vector<uint8_t> labels;
        for (size_t i = 0; i < n; ++i) {
            imgs.push_back(&samples[at + i].image);
            labels.insert(labels.end(), samples[at + i].labels.begin(),
                          samples[at + i].labels.end());
        }
        Tensor<float> batch = stack_images(imgs, samples[at].height, samples[at].width);
        Tensor<float> scores = model.forward_segmentation(batch, nullptr);
        total += dice_loss(scores, labels, static_cast<Tape<float>*>(nullptr)).item() *
                 static_cast<double>(n);
        count += static_cast<int>(n);
    }
    return total / std::max(count, 1);
}

}  // namespace

EpochHistory finetune(UNetF& model, const std::vector<SegSample>& train,
                      const std::vector<SegSample>& val, const ScheduleConfig& sched,
                      const FinetuneAugConfig& aug, int batch_size, uint64_t seed,
                      double warmup_frac) {
    if (train.empty()) throw ConfigError("finetune: empty train set");
    sched.validate();
    if (warmup_frac < 0.0 || warmup_frac > 0.9)
        throw ConfigError("finetune: warmup_frac must be in [0, 0.9]");
    if (model.head_mode() != HeadMode::segmentation)
        throw ShapeError("finetune: segmentation head not attached");

    auto params = model.all_params();
    auto backbone = model.backbone_params();
    std::vector<Param<float>> head(model.head_params().begin(), model.head_params().end());
    const int warmup_epochs = static_cast<int>(warmup_frac * sched.epochs);

    model.set_requires_grad(params, true);
    AdamState<float> adam(static_cast<float>(sched.initial_lr));
    AdamState<float> head_adam(static_cast<float>(sched.initial_lr));
    PlateauScheduler scheduler(sched);

    EpochHistory hist;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<float>> best = snapshot(params);

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        const bool warm = epoch < warmup_epochs;
        model.set_requires_grad(backbone, !warm);
        Rng shuffle_rng = Rng::stream(seed, 0x66696eull, static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int steps = 0;
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(batch_size)) {
            const size_t n = std::min(static_cast<size_t>(batch_size), order.size() - at);
            std::vector<SegSample> augmented;
            std::vector<const std::vector<float>*> imgs;
            std::vector<uint8_t> labels;
            augmented.reserve(n);
            for (size_t i = 0; i < n; ++i) {
                Rng aug_rng = Rng::stream(seed, order[at + i], static_cast<uint64_t>(epoch), 4);
                augmented.push_back(augment_finetune(train[order[at + i]], aug, aug_rng));
            }
            for (auto& s : augmented) {
                imgs.push_back(&s.image);
                labels.insert(labels.end(), s.labels.begin(), s.labels.end());
            }
            Tensor<float> batch = stack_images(imgs, train[0].height, train[0].width);

            Tape<float> tape;
            Tensor<float> scores = model.forward_segmentation(batch, &tape);
            Tensor<float> loss = dice_loss(scores, labels, &tape);
            const double lv = loss.item();
            check_finite_loss(lv, "finetune");
            tape.backward(loss);
            if (warm) {
                head_adam.step(std::span<Param<float>>(head));
                zero_grads(std::span<Param<float>>(head));
            } else {
                adam.step(params);
                zero_grads(std::span<Param<float>>(params));
            }
            epoch_loss += lv;
            ++steps;
        }
        epoch_loss /= std::max(steps, 1);

        const double val_loss = val.empty() ? epoch_loss : mean_dice_loss(model, val, batch_size);
        hist.train_loss.push_back(epoch_loss);
        hist.val_loss.push_back(val_loss);
        hist.lr.push_back(adam.learning_rate);
        hist.steps.push_back(steps);
        if (val_loss < best_val) {
            best_val = val_loss;
            best = snapshot(params);
        }
        const auto lr = static_cast<float>(scheduler.observe(val_loss));
        adam.learning_rate = lr;
        head_adam.learning_rate = lr;
    }
    model.set_requires_grad(backbone, true);
    restore(params, best);
    return hist;
}

std::vector<uint8_t> predict_labels(UNetF& model, std::span<const float> image, int height,
                                    int width) {
    Tensor<float> x = Tensor<float>::from_vector({1, 1, height, width},
                                                 std::vector<float>(image.begin(), image.end()));
    Tensor<float> scores = model.forward_segmentation(x, nullptr);
    const int C = scores.dim(1);
    const int64_t hw = static_cast<int64_t>(height) * width;
    std::vector<uint8_t> out(static_cast<size_t>(hw));
    auto sv = scores.values();
    for (int64_t p = 0; p < hw; ++p) {
        int best = 0;
        float bv = sv[p];
        for (int c = 1; c < C; ++c)
            if (sv[c * hw + p] > bv) {  // ties keep the lowest class index
                bv = sv[c * hw + p];
                best = c;
            }
        out[static_cast<size_t>(p)] = static_cast<uint8_t>(best);
    }
    return out;
}

std::vector<double> evaluate_volume(UNetF& model, const Volume& volume) {
    if (!volume.has_labels()) throw ConfigError("evaluate_volume: volume has no labels");
    DiceCounts counts(model.cfg.num_classes);
    for (int s = 0; s < volume.slices; ++s) {
        std::vector<uint8_t> pred =
            predict_labels(model, volume.slice(s), volume.height, volume.width);
        counts.add_slice(pred, volume.label_slice(s));
    }
    std::vector<double> out;
    for (int c = 0; c < model.cfg.num_classes; ++c) out.push_back(counts.dice(c));
    return out;
}

}  // namespace sslseg
