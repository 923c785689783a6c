#pragma once

#include "sslseg/augment.hpp"
#include "sslseg/checkpoint.hpp"
#include "sslseg/dice.hpp"
#include "sslseg/regression.hpp"
#include "sslseg/schedule.hpp"

namespace sslseg {

/// Unlabeled slices flattened out of a set of volumes.
struct SlicePool {
    int height = 0;
    int width = 0;
    std::vector<std::vector<float>> images;  // each [H,W]
};

SlicePool slice_pool_from_volumes(const std::vector<Volume>& volumes);
std::vector<SegSample> seg_samples_from_volumes(const std::vector<Volume>& volumes);

struct EpochHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;  // empty for pretraining
    std::vector<double> lr;
    std::vector<int> steps;  // optimizer steps per epoch
};

/// Masked-regression pretraining: each epoch is one pass over the shuffled
/// pool; every image gets a fresh corruption mask per epoch. The plateau
/// schedule observes the epoch train loss (pretraining has no val split).
EpochHistory pretrain_regression(UNetF& model, const SlicePool& pool, const CorruptionConfig& ccfg,
                                 const ScheduleConfig& sched, int batch_size, uint64_t seed);

struct ContrastiveHistory {
    EpochHistory global_stage;
    EpochHistory local_stage;
};

/// Two-stage contrastive pretraining: stage 1 trains encoder + global head
/// on augmented in-batch pairs; stage 2 attaches the local head and trains
/// the decoder pathway on corresponding patch pairs, with the encoder
/// frozen when cfg.freeze_encoder_local is set.
ContrastiveHistory pretrain_contrastive(UNetF& model, const SlicePool& pool,
                                        const ContrastiveConfig& cfg,
                                        const AugmentationConfig& aug,
                                        const ScheduleConfig& global_sched,
                                        const ScheduleConfig& local_sched, uint64_t seed);

/// Supervised finetuning with Dice loss and per-sample augmentation.
/// The model must already carry the segmentation head. On return the model
/// holds the parameters of the epoch with the lowest validation loss.
/// warmup_frac in [0,0.9] trains the fresh head alone for that fraction of
/// the epochs before unfreezing the backbone, which keeps the first noisy
/// head gradients from scrambling pretrained features.
EpochHistory finetune(UNetF& model, const std::vector<SegSample>& train,
                      const std::vector<SegSample>& val, const ScheduleConfig& sched,
                      const FinetuneAugConfig& aug, int batch_size, uint64_t seed,
                      double warmup_frac = 0.0);

/// Argmax class map for a batch of slices; ties resolve to the lowest index.
std::vector<uint8_t> predict_labels(UNetF& model, std::span<const float> image, int height,
                                    int width);

/// Volume-level Dice: intersection/size counts accumulate across all slices
/// before a single ratio per class is taken.
std::vector<double> evaluate_volume(UNetF& model, const Volume& volume);

}  // namespace sslseg
