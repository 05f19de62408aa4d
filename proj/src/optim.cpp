#include "mvae/optim.hpp"

#include <cmath>

#include "mvae/errors.hpp"
#include "mvae/kernels.hpp"

namespace mvae {
namespace {

void check_finite(const double* p, std::size_t n, const std::string& name,
                  const char* what) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i]))
            throw OptimizerError("non-finite " + std::string(what) + " in block " + name);
}

}  // namespace

void AdamState::step(SemiMvaeModel& model) {
    auto blocks = param_blocks(model);
    if (m_.empty()) {
        for (const auto& b : blocks) {
            m_.emplace_back(b.size, 0.0);
            v_.emplace_back(b.size, 0.0);
        }
    }
    if (m_.size() != blocks.size()) throw OptimizerError("optimizer bound to another model");
    for (std::size_t k = 0; k < blocks.size(); ++k)
        if (m_[k].size() != blocks[k].size)
            throw OptimizerError("optimizer bound to another model");

    for (const auto& b : blocks) check_finite(b.grad, b.size, b.name, "gradient");

    double scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& b : blocks)
            for (std::size_t i = 0; i < b.size; ++i) sq += b.grad[i] * b.grad[i];
        double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    }

    ++step_count_;
    double bias1 = 1.0 / (1.0 - std::pow(cfg_.beta1, double(step_count_)));
    double bias2 = 1.0 / (1.0 - std::pow(cfg_.beta2, double(step_count_)));

    for (std::size_t k = 0; k < blocks.size(); ++k) {
        auto& b = blocks[k];
        if (scale != 1.0)
            for (std::size_t i = 0; i < b.size; ++i) b.grad[i] *= scale;
        kernels::adam_update(b.data, b.grad, m_[k].data(), v_[k].data(), b.size,
                             cfg_.beta1, cfg_.beta2, cfg_.eps_hat, cfg_.lr, bias1, bias2);
        check_finite(b.data, b.size, b.name, "parameter");
    }
}

void sgd_step(SemiMvaeModel& model, double lr) {
    for (const auto& b : param_blocks(model)) {
        check_finite(b.grad, b.size, b.name, "gradient");
        kernels::axpy(-lr, b.grad, b.data, b.size);
        check_finite(b.data, b.size, b.name, "parameter");
    }
}

}  // namespace mvae
