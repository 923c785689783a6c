#pragma once

#include <limits>

#include "sslseg/common.hpp"

namespace sslseg {

struct ScheduleConfig {
    int epochs = 500;
    double initial_lr = 1e-3;
    int plateau_patience = 20;
    double plateau_min_delta = 1e-4;
    double halving_factor = 0.5;
    double lr_floor = 1e-6;

    void validate() const {
        if (epochs < 1) throw ConfigError("schedule: epochs must be >= 1");
        if (plateau_patience < 1) throw ConfigError("schedule: patience must be >= 1");
        if (!(halving_factor > 0.0 && halving_factor < 1.0))
            throw ConfigError("schedule: halving factor must be in (0,1)");
        if (initial_lr <= 0.0) throw ConfigError("schedule: initial lr must be positive");
    }
};

/// Halves the learning rate after `patience` consecutive epochs without an
/// improvement greater than min_delta. The rate never increases.
class PlateauScheduler {
public:
    explicit PlateauScheduler(const ScheduleConfig& cfg)
        : cfg_(cfg), lr_(cfg.initial_lr) {
        cfg_.validate();
    }

    /// Call once per epoch with that epoch's validation loss. Returns the
    /// learning rate to use from the next epoch on.
    double observe(double validation_loss) {
        if (validation_loss < best_ - cfg_.plateau_min_delta) {
            best_ = validation_loss;
            stale_ = 0;
        } else {
            ++stale_;
            if (stale_ >= cfg_.plateau_patience) {
                lr_ = std::max(lr_ * cfg_.halving_factor, cfg_.lr_floor);
                stale_ = 0;
            }
        }
        return lr_;
    }

    double lr() const { return lr_; }

private:
    ScheduleConfig cfg_;
    double lr_;
    double best_ = std::numeric_limits<double>::infinity();
    int stale_ = 0;
};

}  // namespace sslseg
