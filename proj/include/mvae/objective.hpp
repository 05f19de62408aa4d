#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mvae/data.hpp"
#include "mvae/model.hpp"
#include "mvae/rng.hpp"

namespace mvae {

struct ObjectiveConfig {
    std::size_t mc_samples = 1;  // T
    double beta = 1.0;
    bool share_noise = false;  // one eps stream reused by every component

    void validate() const;  // throws ConfigError
};

// Additive pieces of one datapoint's evidence lower bound. total is the
// fixed-order sum recon (view order), then log_prior_y, expected_log_prior_z,
// entropy_bound; the bound functions return exactly this total.
struct BoundBreakdown {
    std::vector<double> recon_per_view;
    double log_prior_y = 0.0;
    double expected_log_prior_z = 0.0;
    double entropy_bound = 0.0;
    double total = 0.0;
};

// eps[l][t]: standard-normal draw for mixture component l, MC sample t.
struct NoiseDraws {
    std::vector<std::vector<std::vector<double>>> eps;
};

NoiseDraws draw_noise(SeededRng& rng, std::size_t components, std::size_t mc_samples,
                      std::size_t latent_dim, bool share);

// Jensen bound on E_q[-log q] for a Gaussian mixture, all in log domain:
// -sum_v lambda_v * LSE_l(log lambda_l + log omega_{v,l}).
double entropy_lower_bound(const MixturePosterior& post);

// Evidence lower bound of a labeled datapoint (the negative of the labeled
// loss). Draws component noise from rng; the _with_noise form replays given
// draws, which is how tests freeze eps.
std::pair<double, BoundBreakdown> labeled_bound(const SemiMvaeModel& model,
                                                const ViewRefs& X, std::size_t y,
                                                SeededRng& rng,
                                                const ObjectiveConfig& cfg);
std::pair<double, BoundBreakdown> labeled_bound_with_noise(const SemiMvaeModel& model,
                                                           const ViewRefs& X,
                                                           std::size_t y,
                                                           const NoiseDraws& noise,
                                                           const ObjectiveConfig& cfg);

// Evidence lower bound of an unlabeled datapoint: exact enumeration
// sum_k q_k * labeled(X,k) + H(q), with one shared set of eps draws for all
// classes.
std::pair<double, std::vector<BoundBreakdown>> unlabeled_bound(
    const SemiMvaeModel& model, const ViewRefs& X, SeededRng& rng,
    const ObjectiveConfig& cfg);
std::pair<double, std::vector<BoundBreakdown>> unlabeled_bound_with_noise(
    const SemiMvaeModel& model, const ViewRefs& X, const NoiseDraws& noise,
    const ObjectiveConfig& cfg);

struct BatchObjective {
    double value = 0.0;  // mean-reduced F over the batch
    double labeled_elbo_sum = 0.0;
    double unlabeled_elbo_sum = 0.0;
    double class_loss_sum = 0.0;  // sum of -log q(y|X) over labeled samples
    std::size_t n_labeled = 0;
    std::size_t n_unlabeled = 0;
};

// Minimization objective over one minibatch:
//   F = [ sum_l -elbo + sum_u -elbo + alpha * sum_l -log q(y|X) ] / (N_l+N_u)
// with alpha = beta * (N_l + N_u). Zeroes model gradients, then accumulates
// dF/dparam into them by backpropagation through the sampled graph. Noise is
// drawn from rng per sample, labeled samples first, so a copied rng replays
// the exact graph.
BatchObjective batch_objective(SemiMvaeModel& model, const MultiViewBatch& labeled,
                               const MultiViewBatch& unlabeled, SeededRng& rng,
                               const ObjectiveConfig& cfg);

// Value of F only, leaving the model and gradients untouched. rng is taken by
// value: the same draws replay on every call.
double batch_objective_value(const SemiMvaeModel& model, const MultiViewBatch& labeled,
                             const MultiViewBatch& unlabeled, SeededRng rng,
                             const ObjectiveConfig& cfg);

// Flat gradient snapshot in param_blocks order.
std::vector<double> collect_gradients(SemiMvaeModel& model);

// Central differences (F(p+h) - F(p-h)) / 2h per scalar parameter with the
// same noise replayed, in param_blocks order. Restores the model exactly.
std::vector<double> finite_difference_gradient(SemiMvaeModel& model,
                                               const MultiViewBatch& labeled,
                                               const MultiViewBatch& unlabeled,
                                               const SeededRng& rng,
                                               const ObjectiveConfig& cfg, double h);

}  // namespace mvae
