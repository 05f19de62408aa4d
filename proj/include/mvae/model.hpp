#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mvae/distributions.hpp"
#include "mvae/matrix.hpp"
#include "mvae/nn.hpp"
#include "mvae/rng.hpp"

namespace mvae {

// One sample's views, referenced in declared view order.
using ViewRefs = std::vector<std::span<const double>>;

struct ModelConfig {
    std::vector<std::size_t> view_dims;
    std::size_t latent_dim = 0;
    std::size_t num_classes = 0;
    std::vector<std::size_t> encoder_hidden;
    std::vector<std::size_t> decoder_hidden;
    std::vector<double> class_prior;

    std::size_t num_views() const { return view_dims.size(); }
    void validate() const;  // throws ConfigError
};

struct MixturePosterior {
    std::vector<DiagGaussian> components;
    std::vector<double> weights;
};

// Parameter container. Encoders map [x_v ; onehot(y)] to (mean, log_var) over
// the latent code, decoders map [z ; onehot(y)] to (mean, log_var) over view
// v, the classifier maps concatenated views to K logits. View weights lambda
// live as unconstrained logits rho; lambda = softmax(rho) stays on the
// simplex by construction.
struct SemiMvaeModel {
    ModelConfig config;
    std::vector<Mlp> encoders;
    std::vector<Mlp> decoders;
    Mlp classifier;
    std::vector<double> rho;
    std::vector<double> rho_grad;

    void zero_grad();
};

struct ParamBlock {
    std::string name;
    double* data;
    double* grad;
    std::size_t size;
};

// Flat parameter view in fixed declared order: encoders, decoders,
// classifier, rho. Layer blocks are named encoder0.layer0.weight and so on.
std::vector<ParamBlock> param_blocks(SemiMvaeModel& model);

SemiMvaeModel init_model(const ModelConfig& config, std::uint64_t seed);

std::vector<double> view_weights(const SemiMvaeModel& model);

DiagGaussian encode_view(const SemiMvaeModel& model, std::size_t v,
                         std::span<const double> x_v, std::size_t y);
MixturePosterior posterior(const SemiMvaeModel& model, const ViewRefs& X, std::size_t y);
DiagGaussian decode_view(const SemiMvaeModel& model, std::size_t v,
                         std::span<const double> z, std::size_t y);

std::vector<double> classify(const SemiMvaeModel& model, const ViewRefs& X);
// rows = samples with all views already concatenated in declared order.
Matrix classify_batch(const SemiMvaeModel& model, const Matrix& concat_rows);

// Input row assembly shared by the objective's batched passes.
Matrix encoder_input(const ModelConfig& config, std::size_t v,
                     std::span<const double> x_v, std::size_t y);
void check_views(const ModelConfig& config, const ViewRefs& X);

void save_model(const SemiMvaeModel& model, const std::string& path);
SemiMvaeModel load_model(const std::string& path);

}  // namespace mvae
