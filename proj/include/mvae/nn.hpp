#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvae/matrix.hpp"

namespace mvae {

enum class Activation { identity, tanh, softplus };

Activation activation_from_name(const std::string& name);  // throws ConfigError
const char* activation_name(Activation a);

/// Elementwise activation. softplus is the overflow-safe log(1 + e^x):
/// returns x verbatim for x > 30 and e^x for x < -30.
double activate(Activation kind, double x);
/// Derivative of the activation, given pre-activation x and post-activation y.
double activate_grad(Activation kind, double x, double y);

Matrix activate(Activation kind, const Matrix& input);

/// Fully connected layer with explicit gradient buffers. forward caches its
/// input; backward accumulates into weight_grad/bias_grad and returns the
/// input gradient.
class LinearLayer {
  public:
    LinearLayer() = default;
    LinearLayer(std::size_t in_dim, std::size_t out_dim)
        : weight(out_dim, in_dim),
          weight_grad(out_dim, in_dim),
          bias(out_dim, 0.0),
          bias_grad(out_dim, 0.0) {}

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }

    Matrix forward(const Matrix& input);
    Matrix forward_nograd(const Matrix& input) const;
    Matrix backward(const Matrix& output_grad);
    void zero_grad();

    Matrix weight;       // out x in
    Matrix weight_grad;  // out x in
    std::vector<double> bias;
    std::vector<double> bias_grad;

  private:
    Matrix input_cache_;
    bool has_cache_ = false;
};

/// Multilayer perceptron: linear layers with a per-layer activation.
/// Adjacent layer dimensions must chain. One forward cache per instance:
/// a training thread must run backward before the next cached forward.
class Mlp {
  public:
    Mlp() = default;
    /// dims has one entry per interface (in, hidden..., out); acts one entry
    /// per layer.
    Mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts);

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }
    std::size_t num_params() const;

    Matrix forward(const Matrix& input);
    Matrix forward_nograd(const Matrix& input) const;
    Matrix backward(const Matrix& output_grad);
    void zero_grad();

    std::vector<LinearLayer> layers;
    std::vector<Activation> activations;

  private:
    std::vector<Matrix> pre_;   // per-layer linear outputs
    std::vector<Matrix> post_;  // per-layer activated outputs
    bool has_cache_ = false;
};

/// max(v) + log(sum(exp(v - max))); exact for a single element.
double log_sum_exp(std::span<const double> values);  // throws ArgumentError when empty

/// Shift-stabilized softmax; output is positive and sums to 1 within 1e-12.
std::vector<double> softmax(std::span<const double> values);

}  // namespace mvae
