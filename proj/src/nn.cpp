#include "mvae/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mvae/kernels.hpp"

namespace mvae {

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "softplus") return Activation::softplus;
    throw ConfigError("unknown activation kind: " + name);
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::softplus: return "softplus";
    }
    return "?";
}

double activate(Activation kind, double x) {
    switch (kind) {
        case Activation::identity: return x;
        case Activation::tanh: return std::tanh(x);
        case Activation::softplus:
            if (x > 30.0) return x;
            if (x < -30.0) return std::exp(x);
            return std::log1p(std::exp(x));
    }
    return x;
}

double activate_grad(Activation kind, double x, double y) {
    switch (kind) {
        case Activation::identity: return 1.0;
        case Activation::tanh: return 1.0 - y * y;
        case Activation::softplus:
            // sigmoid(x), overflow-safe
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            {
                double e = std::exp(x);
                return e / (1.0 + e);
            }
    }
    return 1.0;
}

Matrix activate(Activation kind, const Matrix& input) {
    Matrix out(input.rows(), input.cols());
    const double* in = input.data();
    double* o = out.data();
    for (std::size_t i = 0; i < input.size(); ++i) o[i] = activate(kind, in[i]);
    return out;
}

Matrix LinearLayer::forward(const Matrix& input) {
    input_cache_ = input;
    has_cache_ = true;
    return forward_nograd(input);
}

Matrix LinearLayer::forward_nograd(const Matrix& input) const {
    if (input.cols() != in_dim())
        throw ShapeError("linear forward: input cols " + std::to_string(input.cols()) +
                         " != layer in dim " + std::to_string(in_dim()));
    Matrix out(input.rows(), out_dim());
    kernels::matmul_nt(input.data(), weight.data(), out.data(), input.rows(), in_dim(),
                       out_dim());
    kernels::add_bias(out.data(), bias.data(), out.rows(), out.cols());
    return out;
}

Matrix LinearLayer::backward(const Matrix& output_grad) {
    if (!has_cache_) throw StateError("linear backward called before forward");
    if (output_grad.rows() != input_cache_.rows() || output_grad.cols() != out_dim())
        throw ShapeError("linear backward: output grad shape mismatch");
    std::size_t batch = output_grad.rows();
    kernels::matmul_tn_acc(output_grad.data(), input_cache_.data(), weight_grad.data(),
                           out_dim(), batch, in_dim());
    kernels::colsum_acc(output_grad.data(), bias_grad.data(), batch, out_dim());
    Matrix input_grad(batch, in_dim());
    kernels::matmul_nn(output_grad.data(), weight.data(), input_grad.data(), batch,
                       out_dim(), in_dim());
    return input_grad;
}

void LinearLayer::zero_grad() {
    weight_grad.fill(0.0);
    std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
}

Mlp::Mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts) {
    if (dims.size() < 2) throw ConfigError("mlp needs at least one layer");
    if (acts.size() != dims.size() - 1)
        throw ConfigError("mlp: one activation per layer required");
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        if (dims[k] == 0 || dims[k + 1] == 0) throw ConfigError("mlp: zero layer width");
        layers.emplace_back(dims[k], dims[k + 1]);
    }
    activations = acts;
}

std::size_t Mlp::num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

Matrix Mlp::forward(const Matrix& input) {
    pre_.resize(layers.size());
    post_.resize(layers.size());
    Matrix x = input;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        pre_[k] = layers[k].forward(x);
        post_[k] = activate(activations[k], pre_[k]);
        x = post_[k];
    }
    has_cache_ = true;
    return x;
}

Matrix Mlp::forward_nograd(const Matrix& input) const {
    Matrix x = input;
    for (std::size_t k = 0; k < layers.size(); ++k)
        x = activate(activations[k], layers[k].forward_nograd(x));
    return x;
}

Matrix Mlp::backward(const Matrix& output_grad) {
    if (!has_cache_) throw StateError("mlp backward called before forward");
    Matrix g = output_grad;
    for (std::size_t k = layers.size(); k-- > 0;) {
        check_same_shape(g, pre_[k], "mlp backward");
        Matrix local(g.rows(), g.cols());
        const double* pre = pre_[k].data();
        const double* post = post_[k].data();
        const double* gd = g.data();
        double* ld = local.data();
        for (std::size_t i = 0; i < g.size(); ++i)
            ld[i] = gd[i] * activate_grad(activations[k], pre[i], post[i]);
        g = layers[k].backward(local);
    }
    return g;
}

void Mlp::zero_grad() {
    for (auto& l : layers) l.zero_grad();
}

double log_sum_exp(std::span<const double> values) {
    if (values.empty()) throw ArgumentError("log_sum_exp: empty input");
    double m = *std::max_element(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

std::vector<double> softmax(std::span<const double> values) {
    if (values.empty()) throw ArgumentError("softmax: empty input");
    double m = *std::max_element(values.begin(), values.end());
    std::vector<double> out(values.size());
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = std::exp(values[i] - m);
        s += out[i];
    }
    for (double& v : out) v /= s;
    return out;
}

}  // namespace mvae
