#include "mvae/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mvae/errors.hpp"

namespace mvae {
namespace {

constexpr double kHalfLog2Pi = 0.5 * 1.8378770664093454;  // ln 2pi

void check_dim(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": dimension mismatch (" +
                         std::to_string(a) + " vs " + std::to_string(b) + ")");
}

}  // namespace

DiagGaussian::DiagGaussian(std::vector<double> mean_in, std::vector<double> log_var_in)
    : mean(std::move(mean_in)), log_var(std::move(log_var_in)) {
    check_dim(mean.size(), log_var.size(), "DiagGaussian");
    for (double& lv : log_var) lv = std::clamp(lv, -kLogVarClamp, kLogVarClamp);
}

double DiagGaussian::var(std::size_t j) const { return std::exp(log_var[j]); }

double diag_gaussian_log_pdf(const DiagGaussian& g, std::span<const double> z) {
    check_dim(g.dim(), z.size(), "diag_gaussian_log_pdf");
    double acc = 0.0;
    for (std::size_t j = 0; j < g.dim(); ++j) {
        double d = z[j] - g.mean[j];
        acc += -kHalfLog2Pi - 0.5 * g.log_var[j] - 0.5 * d * d / g.var(j);
    }
    return acc;
}

double log_cross_density(const DiagGaussian& a, const DiagGaussian& b) {
    check_dim(a.dim(), b.dim(), "log_cross_density");
    double acc = 0.0;
    for (std::size_t j = 0; j < a.dim(); ++j) {
        // var(a) + var(b) keeps the sum order independent of argument order.
        double s = a.var(j) + b.var(j);
        double d = a.mean[j] - b.mean[j];
        acc += -kHalfLog2Pi - 0.5 * std::log(s) - 0.5 * d * d / s;
    }
    return acc;
}

std::vector<double> sample_standard_normal(SeededRng& rng, std::size_t d) {
    std::vector<double> out(d);
    for (double& v : out) v = rng.standard_normal();
    return out;
}

std::vector<double> reparameterize(const DiagGaussian& g, std::span<const double> eps) {
    check_dim(g.dim(), eps.size(), "reparameterize");
    std::vector<double> z(g.dim());
    for (std::size_t j = 0; j < g.dim(); ++j)
        z[j] = g.mean[j] + std::exp(0.5 * g.log_var[j]) * eps[j];
    return z;
}

double expected_log_std_normal_prior(const DiagGaussian& g) {
    double acc = 0.0;
    for (std::size_t j = 0; j < g.dim(); ++j)
        acc += -kHalfLog2Pi - 0.5 * (g.mean[j] * g.mean[j] + g.var(j));
    return acc;
}

double categorical_log_pmf(std::span<const double> probs, std::size_t k) {
    if (k >= probs.size())
        throw ArgumentError("categorical_log_pmf: class index " + std::to_string(k) +
                            " out of range for K=" + std::to_string(probs.size()));
    return std::log(std::max(probs[k], kProbFloor));
}

double categorical_entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

}  // namespace mvae
