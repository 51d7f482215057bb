#pragma once

#include <cstdint>

#include "cecr/model.hpp"
#include "cecr/train.hpp"

namespace cecr {

// Full-model gradient check: analytic gradients of the total loss on a
// 2-document micro-batch (one conditional document with PR clauses, one
// non-conditional) against central finite differences. Dropout is disabled.
// Returns the max relative error over every parameter coordinate.
double model_grad_check(ModelConfig model_cfg, TrainConfig train_cfg,
                        std::uint64_t seed, double h = 1e-5);

}  // namespace cecr
