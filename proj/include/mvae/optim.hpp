#pragma once

#include <cstddef>
#include <vector>

#include "mvae/model.hpp"

namespace mvae {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    double clip_norm = 0.0;  // 0 = no global-norm clipping
};

// Bias-corrected Adam over the model's parameter blocks. Buffers are laid out
// in param_blocks order and sized on first use.
class AdamState {
  public:
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    // One update from the gradients currently held by the model.
    // Throws OptimizerError, naming the block, on non-finite gradients or
    // parameters.
    void step(SemiMvaeModel& model);

    std::size_t step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }

  private:
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t step_count_ = 0;
};

// p <- p - lr * g over all blocks.
void sgd_step(SemiMvaeModel& model, double lr);

}  // namespace mvae
