#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvae/rng.hpp"

namespace mvae {

inline constexpr double kLogVarClamp = 10.0;
inline constexpr double kProbFloor = 1e-12;

// Diagonal Gaussian given by mean and log-variance. log_var is clamped to
// [-10, 10] at construction so every density below stays finite.
struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> log_var;

    DiagGaussian() = default;
    DiagGaussian(std::vector<double> mean_in, std::vector<double> log_var_in);

    std::size_t dim() const { return mean.size(); }
    double var(std::size_t j) const;
};

// log N(z | g.mean, diag(exp(g.log_var)))
double diag_gaussian_log_pdf(const DiagGaussian& g, std::span<const double> z);

// log N(a.mean | b.mean, diag(var_a + var_b)); symmetric in (a, b).
double log_cross_density(const DiagGaussian& a, const DiagGaussian& b);

std::vector<double> sample_standard_normal(SeededRng& rng, std::size_t d);

// mean + exp(log_var / 2) * eps
std::vector<double> reparameterize(const DiagGaussian& g, std::span<const double> eps);

// E_{z~g}[log N(z | 0, I)], closed form.
double expected_log_std_normal_prior(const DiagGaussian& g);

// log probs[k], flooring probs[k] at 1e-12 first.
double categorical_log_pmf(std::span<const double> probs, std::size_t k);

// -sum p log p with 0 log 0 := 0.
double categorical_entropy(std::span<const double> probs);

}  // namespace mvae
