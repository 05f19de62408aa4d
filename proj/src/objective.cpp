#include "mvae/objective.hpp"

#include <algorithm>
#include <cmath>

#include "mvae/errors.hpp"

namespace mvae {
namespace {

constexpr double kHalfLog2Pi = 0.5 * 1.8378770664093454;

Matrix concat_views(const ModelConfig& config, const ViewRefs& X) {
    std::size_t concat = 0;
    for (std::size_t d : config.view_dims) concat += d;
    Matrix in(1, concat);
    std::size_t off = 0;
    for (const auto& x : X) {
        for (std::size_t j = 0; j < x.size(); ++j) in(0, off + j) = x[j];
        off += x.size();
    }
    return in;
}

void check_noise(const NoiseDraws& noise, std::size_t V, std::size_t T, std::size_t d) {
    if (noise.eps.size() != V) throw ArgumentError("noise draws: component count mismatch");
    for (const auto& comp : noise.eps) {
        if (comp.size() != T) throw ArgumentError("noise draws: sample count mismatch");
        for (const auto& e : comp)
            if (e.size() != d) throw ArgumentError("noise draws: dimension mismatch");
    }
}

// Evidence lower bound of one labeled datapoint. With with_grad set,
// accumulates w * d(elbo)/dparam into the model's gradient buffers; the
// value-only path never mutates the model (the const_cast in the public
// wrapper is safe).
std::pair<double, BoundBreakdown> labeled_impl(const SemiMvaeModel& cmodel,
                                               const ViewRefs& X, std::size_t y,
                                               const NoiseDraws& noise,
                                               const ObjectiveConfig& cfg, double w,
                                               bool with_grad) {
    auto& model = const_cast<SemiMvaeModel&>(cmodel);
    const ModelConfig& config = cmodel.config;
    check_views(config, X);
    if (y >= config.num_classes)
        throw ArgumentError("class index " + std::to_string(y) + " out of range");
    const std::size_t V = config.num_views();
    const std::size_t K = config.num_classes;
    const std::size_t d = config.latent_dim;
    const std::size_t T = cfg.mc_samples;
    check_noise(noise, V, T, d);

    // encoder heads per component: mean, clamped log-var, derived var/sigma
    std::vector<std::vector<double>> mu(V), lv(V), var(V), sigma(V);
    std::vector<std::vector<std::uint8_t>> lv_pass(V);
    for (std::size_t v = 0; v < V; ++v) {
        Matrix in = encoder_input(config, v, X[v], y);
        Matrix out = with_grad ? model.encoders[v].forward(in)
                               : cmodel.encoders[v].forward_nograd(in);
        mu[v].resize(d);
        lv[v].resize(d);
        var[v].resize(d);
        sigma[v].resize(d);
        lv_pass[v].resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            mu[v][j] = out(0, j);
            double raw = out(0, d + j);
            lv[v][j] = std::clamp(raw, -kLogVarClamp, kLogVarClamp);
            lv_pass[v][j] = std::abs(raw) < kLogVarClamp;
            var[v][j] = std::exp(lv[v][j]);
            sigma[v][j] = std::exp(0.5 * lv[v][j]);
        }
    }
    std::vector<double> lambda = softmax(cmodel.rho);

    // z[l][t] = mu_l + sigma_l * eps[l][t]
    std::vector<std::vector<std::vector<double>>> z(V);
    for (std::size_t l = 0; l < V; ++l) {
        z[l].resize(T);
        for (std::size_t t = 0; t < T; ++t) {
            z[l][t].resize(d);
            for (std::size_t j = 0; j < d; ++j)
                z[l][t][j] = mu[l][j] + sigma[l][j] * noise.eps[l][t][j];
        }
    }

    // one shared decoder input batch, row r = l*T + t
    Matrix dec_rows(V * T, d + K);
    for (std::size_t l = 0; l < V; ++l)
        for (std::size_t t = 0; t < T; ++t) {
            std::size_t r = l * T + t;
            for (std::size_t j = 0; j < d; ++j) dec_rows(r, j) = z[l][t][j];
            dec_rows(r, d + y) = 1.0;
        }

    // ll[v](r) = log p(x_v | y, z_r); decoder outputs kept for the backward pass
    std::vector<Matrix> dec_out(V);
    std::vector<std::vector<double>> ll(V);
    BoundBreakdown bd;
    bd.recon_per_view.resize(V);
    for (std::size_t v = 0; v < V; ++v) {
        dec_out[v] = with_grad ? model.decoders[v].forward(dec_rows)
                               : cmodel.decoders[v].forward_nograd(dec_rows);
        std::size_t Dv = config.view_dims[v];
        ll[v].resize(V * T);
        for (std::size_t r = 0; r < V * T; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < Dv; ++j) {
                double lx = std::clamp(dec_out[v](r, Dv + j), -kLogVarClamp, kLogVarClamp);
                double diff = X[v][j] - dec_out[v](r, j);
                acc += -kHalfLog2Pi - 0.5 * lx - 0.5 * diff * diff / std::exp(lx);
            }
            ll[v][r] = acc;
        }
        double recon = 0.0;
        for (std::size_t l = 0; l < V; ++l) {
            double mean_t = 0.0;
            for (std::size_t t = 0; t < T; ++t) mean_t += ll[v][l * T + t];
            recon += lambda[l] * (mean_t / double(T));
        }
        bd.recon_per_view[v] = recon;
    }

    bd.log_prior_y = categorical_log_pmf(config.class_prior, y);

    std::vector<double> e_prior(V);
    for (std::size_t l = 0; l < V; ++l) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j)
            acc += -kHalfLog2Pi - 0.5 * (mu[l][j] * mu[l][j] + var[l][j]);
        e_prior[l] = acc;
    }
    double e_prior_total = 0.0;
    for (std::size_t l = 0; l < V; ++l) e_prior_total += lambda[l] * e_prior[l];
    bd.expected_log_prior_z = e_prior_total;

    // entropy bound: -sum_v lambda_v LSE_l(log lambda_l + log omega_{v,l})
    std::vector<std::vector<double>> logw(V, std::vector<double>(V));
    for (std::size_t v = 0; v < V; ++v)
        for (std::size_t l = 0; l < V; ++l) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double S = var[v][j] + var[l][j];
                double delta = mu[v][j] - mu[l][j];
                acc += -kHalfLog2Pi - 0.5 * std::log(S) - 0.5 * delta * delta / S;
            }
            logw[v][l] = acc;
        }
    std::vector<double> s(V);
    std::vector<std::vector<double>> c_all(V, std::vector<double>(V));
    for (std::size_t v = 0; v < V; ++v) {
        for (std::size_t l = 0; l < V; ++l) c_all[v][l] = std::log(lambda[l]) + logw[v][l];
        s[v] = log_sum_exp(c_all[v]);
    }
    double ent = 0.0;
    for (std::size_t v = 0; v < V; ++v) ent -= lambda[v] * s[v];
    bd.entropy_bound = ent;

    double total = 0.0;
    for (std::size_t v = 0; v < V; ++v) total += bd.recon_per_view[v];
    total += bd.log_prior_y;
    total += bd.expected_log_prior_z;
    total += bd.entropy_bound;
    bd.total = total;

    if (!with_grad || w == 0.0) return {total, bd};

    // ---- backward: accumulate w * d(total)/dparam ----
    std::vector<std::vector<double>> dmu(V, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> dvar(V, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> dlv(V, std::vector<double>(d, 0.0));
    std::vector<double> dlam(V, 0.0);
    std::vector<std::vector<std::vector<double>>> dz(
        V, std::vector<std::vector<double>>(T, std::vector<double>(d, 0.0)));

    // reconstruction: d/d(dec heads), d/dz through the decoder, d/dlambda
    for (std::size_t v = 0; v < V; ++v) {
        std::size_t Dv = config.view_dims[v];
        Matrix dec_grad(V * T, 2 * Dv);
        for (std::size_t l = 0; l < V; ++l) {
            double coef = w * lambda[l] / double(T);
            for (std::size_t t = 0; t < T; ++t) {
                std::size_t r = l * T + t;
                for (std::size_t j = 0; j < Dv; ++j) {
                    double raw = dec_out[v](r, Dv + j);
                    double lx = std::clamp(raw, -kLogVarClamp, kLogVarClamp);
                    double varx = std::exp(lx);
                    double diff = X[v][j] - dec_out[v](r, j);
                    dec_grad(r, j) = coef * diff / varx;
                    dec_grad(r, Dv + j) =
                        std::abs(raw) < kLogVarClamp
                            ? coef * (-0.5 + 0.5 * diff * diff / varx)
                            : 0.0;
                }
            }
        }
        Matrix din = model.decoders[v].backward(dec_grad);
        for (std::size_t l = 0; l < V; ++l)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < d; ++j) dz[l][t][j] += din(l * T + t, j);
        for (std::size_t l = 0; l < V; ++l) {
            double mean_t = 0.0;
            for (std::size_t t = 0; t < T; ++t) mean_t += ll[v][l * T + t];
            dlam[l] += w * mean_t / double(T);
        }
    }

    // z = mu + sigma * eps
    for (std::size_t l = 0; l < V; ++l)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < d; ++j) {
                dmu[l][j] += dz[l][t][j];
                dlv[l][j] += dz[l][t][j] * noise.eps[l][t][j] * 0.5 * sigma[l][j];
            }

    // prior: sum_l lambda_l e_l with e_l = sum_j -(mu^2 + var)/2 - const
    for (std::size_t l = 0; l < V; ++l) {
        dlam[l] += w * e_prior[l];
        for (std::size_t j = 0; j < d; ++j) {
            dmu[l][j] += -w * lambda[l] * mu[l][j];
            dvar[l][j] += -0.5 * w * lambda[l];
        }
    }

    // entropy bound
    for (std::size_t v = 0; v < V; ++v) {
        dlam[v] += -w * s[v];
        double ds = -w * lambda[v];
        for (std::size_t l = 0; l < V; ++l) {
            double dc = ds * std::exp(c_all[v][l] - s[v]);
            dlam[l] += dc / lambda[l];
            for (std::size_t j = 0; j < d; ++j) {
                double S = var[v][j] + var[l][j];
                double delta = mu[v][j] - mu[l][j];
                dmu[v][j] += dc * (-delta / S);
                dmu[l][j] += dc * (delta / S);
                double dS = dc * (-0.5 / S + 0.5 * delta * delta / (S * S));
                dvar[v][j] += dS;
                dvar[l][j] += dS;
            }
        }
    }

    // encoder heads; the clamp zeroes log-var gradients outside (-10, 10)
    for (std::size_t v = 0; v < V; ++v) {
        Matrix enc_grad(1, 2 * d);
        for (std::size_t j = 0; j < d; ++j) {
            enc_grad(0, j) = dmu[v][j];
            double g = dlv[v][j] + dvar[v][j] * var[v][j];
            enc_grad(0, d + j) = lv_pass[v][j] ? g : 0.0;
        }
        model.encoders[v].backward(enc_grad);
    }

    // lambda = softmax(rho)
    double dot = 0.0;
    for (std::size_t k = 0; k < V; ++k) dot += lambda[k] * dlam[k];
    for (std::size_t k = 0; k < V; ++k)
        model.rho_grad[k] += lambda[k] * (dlam[k] - dot);

    return {total, bd};
}

// Cross-entropy -log q(y|X) through the classifier; adds scale * d(loss) to
// the classifier gradients.
double class_loss_grad(SemiMvaeModel& model, const ViewRefs& X, std::size_t y,
                       double scale) {
    Matrix in = concat_views(model.config, X);
    Matrix logits = model.classifier.forward(in);
    std::vector<double> q = softmax(logits.row(0));
    double qf = std::max(q[y], kProbFloor);
    double loss = -std::log(qf);

    std::vector<double> dq(q.size(), 0.0);
    if (q[y] >= kProbFloor) dq[y] = -1.0 / q[y];
    double dot = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) dot += q[k] * dq[k];
    Matrix dlogits(1, q.size());
    for (std::size_t k = 0; k < q.size(); ++k)
        dlogits(0, k) = scale * q[k] * (dq[k] - dot);
    model.classifier.backward(dlogits);
    return loss;
}

// Unlabeled elbo with gradient accumulation at weight w.
double unlabeled_grad(SemiMvaeModel& model, const ViewRefs& X, const NoiseDraws& noise,
                      const ObjectiveConfig& cfg, double w) {
    const std::size_t K = model.config.num_classes;
    Matrix in = concat_views(model.config, X);
    Matrix logits = model.classifier.forward(in);
    std::vector<double> q = softmax(logits.row(0));

    std::vector<double> elbo(K);
    for (std::size_t k = 0; k < K; ++k)
        elbo[k] = labeled_impl(model, X, k, noise, cfg, w * q[k], true).first;

    double value = 0.0;
    for (std::size_t k = 0; k < K; ++k) value += q[k] * elbo[k];
    value += categorical_entropy(q);

    // d/dq_k [ q_k elbo_k - q_k log q_k ]
    std::vector<double> dq(K);
    for (std::size_t k = 0; k < K; ++k) {
        double dent = -std::log(std::max(q[k], kProbFloor)) - (q[k] >= kProbFloor ? 1.0 : 0.0);
        dq[k] = w * (elbo[k] + dent);
    }
    double dot = 0.0;
    for (std::size_t k = 0; k < K; ++k) dot += q[k] * dq[k];
    Matrix dlogits(1, K);
    for (std::size_t k = 0; k < K; ++k) dlogits(0, k) = q[k] * (dq[k] - dot);
    model.classifier.backward(dlogits);
    return value;
}

void check_batch(const MultiViewBatch& batch, const ModelConfig& config, bool labeled) {
    if (batch.size() == 0) return;
    if (batch.views.size() != config.num_views())
        throw ArgumentError("batch view count mismatch");
    for (std::size_t v = 0; v < batch.views.size(); ++v)
        if (batch.views[v].cols() != config.view_dims[v])
            throw ShapeError("batch view " + std::to_string(v) + " dim mismatch");
    if (labeled) {
        if (batch.labels.size() != batch.size())
            throw ArgumentError("labeled batch without labels");
        for (int y : batch.labels)
            if (y < 0 || y >= int(config.num_classes))
                throw ArgumentError("batch label out of range");
    }
}

}  // namespace

void ObjectiveConfig::validate() const {
    if (mc_samples < 1) throw ConfigError("objective: mc_samples must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("objective: beta must be > 0");
}

NoiseDraws draw_noise(SeededRng& rng, std::size_t components, std::size_t mc_samples,
                      std::size_t latent_dim, bool share) {
    NoiseDraws noise;
    if (share) {
        std::vector<std::vector<double>> base(mc_samples);
        for (auto& e : base) e = sample_standard_normal(rng, latent_dim);
        noise.eps.assign(components, base);
    } else {
        noise.eps.resize(components);
        for (auto& comp : noise.eps) {
            comp.resize(mc_samples);
            for (auto& e : comp) e = sample_standard_normal(rng, latent_dim);
        }
    }
    return noise;
}

double entropy_lower_bound(const MixturePosterior& post) {
    const std::size_t V = post.components.size();
    if (V == 0 || post.weights.size() != V)
        throw ArgumentError("entropy_lower_bound: malformed mixture");
    std::vector<double> c(V);
    double ent = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
        for (std::size_t l = 0; l < V; ++l)
            c[l] = std::log(post.weights[l]) +
                   log_cross_density(post.components[v], post.components[l]);
        ent -= post.weights[v] * log_sum_exp(c);
    }
    return ent;
}

std::pair<double, BoundBreakdown> labeled_bound(const SemiMvaeModel& model,
                                                const ViewRefs& X, std::size_t y,
                                                SeededRng& rng,
                                                const ObjectiveConfig& cfg) {
    cfg.validate();
    NoiseDraws noise = draw_noise(rng, model.config.num_views(), cfg.mc_samples,
                                  model.config.latent_dim, cfg.share_noise);
    return labeled_impl(model, X, y, noise, cfg, 0.0, false);
}

std::pair<double, BoundBreakdown> labeled_bound_with_noise(const SemiMvaeModel& model,
                                                           const ViewRefs& X,
                                                           std::size_t y,
                                                           const NoiseDraws& noise,
                                                           const ObjectiveConfig& cfg) {
    cfg.validate();
    return labeled_impl(model, X, y, noise, cfg, 0.0, false);
}

std::pair<double, std::vector<BoundBreakdown>> unlabeled_bound_with_noise(
    const SemiMvaeModel& model, const ViewRefs& X, const NoiseDraws& noise,
    const ObjectiveConfig& cfg) {
    cfg.validate();
    const std::size_t K = model.config.num_classes;
    std::vector<double> q = classify(model, X);
    double value = 0.0;
    std::vector<BoundBreakdown> per_class;
    for (std::size_t k = 0; k < K; ++k) {
        auto [elbo, bd] = labeled_impl(model, X, k, noise, cfg, 0.0, false);
        value += q[k] * elbo;
        per_class.push_back(std::move(bd));
    }
    value += categorical_entropy(q);
    return {value, std::move(per_class)};
}

std::pair<double, std::vector<BoundBreakdown>> unlabeled_bound(
    const SemiMvaeModel& model, const ViewRefs& X, SeededRng& rng,
    const ObjectiveConfig& cfg) {
    cfg.validate();
    NoiseDraws noise = draw_noise(rng, model.config.num_views(), cfg.mc_samples,
                                  model.config.latent_dim, cfg.share_noise);
    return unlabeled_bound_with_noise(model, X, noise, cfg);
}

BatchObjective batch_objective(SemiMvaeModel& model, const MultiViewBatch& labeled,
                               const MultiViewBatch& unlabeled, SeededRng& rng,
                               const ObjectiveConfig& cfg) {
    cfg.validate();
    check_batch(labeled, model.config, true);
    check_batch(unlabeled, model.config, false);
    const std::size_t n_l = labeled.size();
    const std::size_t n_u = unlabeled.size();
    const std::size_t N = n_l + n_u;
    if (N == 0) throw ArgumentError("batch_objective: both batches empty");
    const double alpha = cfg.beta * double(N);
    const double w = -1.0 / double(N);
    const std::size_t V = model.config.num_views();
    const std::size_t d = model.config.latent_dim;

    model.zero_grad();
    BatchObjective out;
    out.n_labeled = n_l;
    out.n_unlabeled = n_u;

    for (std::size_t i = 0; i < n_l; ++i) {
        NoiseDraws noise = draw_noise(rng, V, cfg.mc_samples, d, cfg.share_noise);
        ViewRefs X = labeled.sample(i);
        std::size_t y = std::size_t(labeled.labels[i]);
        out.labeled_elbo_sum += labeled_impl(model, X, y, noise, cfg, w, true).first;
        out.class_loss_sum += class_loss_grad(model, X, y, alpha / double(N));
    }
    for (std::size_t i = 0; i < n_u; ++i) {
        NoiseDraws noise = draw_noise(rng, V, cfg.mc_samples, d, cfg.share_noise);
        out.unlabeled_elbo_sum += unlabeled_grad(model, unlabeled.sample(i), noise, cfg, w);
    }
    out.value = (-out.labeled_elbo_sum - out.unlabeled_elbo_sum +
                 alpha * out.class_loss_sum) /
                double(N);
    return out;
}

double batch_objective_value(const SemiMvaeModel& model, const MultiViewBatch& labeled,
                             const MultiViewBatch& unlabeled, SeededRng rng,
                             const ObjectiveConfig& cfg) {
    cfg.validate();
    check_batch(labeled, model.config, true);
    check_batch(unlabeled, model.config, false);
    const std::size_t n_l = labeled.size();
    const std::size_t n_u = unlabeled.size();
    const std::size_t N = n_l + n_u;
    if (N == 0) throw ArgumentError("batch_objective: both batches empty");
    const double alpha = cfg.beta * double(N);
    const std::size_t V = model.config.num_views();
    const std::size_t d = model.config.latent_dim;

    double labeled_sum = 0.0, unlabeled_sum = 0.0, ce_sum = 0.0;
    for (std::size_t i = 0; i < n_l; ++i) {
        NoiseDraws noise = draw_noise(rng, V, cfg.mc_samples, d, cfg.share_noise);
        ViewRefs X = labeled.sample(i);
        std::size_t y = std::size_t(labeled.labels[i]);
        labeled_sum += labeled_impl(model, X, y, noise, cfg, 0.0, false).first;
        std::vector<double> q = classify(model, X);
        ce_sum += -std::log(std::max(q[y], kProbFloor));
    }
    for (std::size_t i = 0; i < n_u; ++i) {
        NoiseDraws noise = draw_noise(rng, V, cfg.mc_samples, d, cfg.share_noise);
        unlabeled_sum += unlabeled_bound_with_noise(model, unlabeled.sample(i), noise, cfg).first;
    }
    return (-labeled_sum - unlabeled_sum + alpha * ce_sum) / double(N);
}

std::vector<double> collect_gradients(SemiMvaeModel& model) {
    std::vector<double> flat;
    for (const auto& block : param_blocks(model))
        flat.insert(flat.end(), block.grad, block.grad + block.size);
    return flat;
}

std::vector<double> finite_difference_gradient(SemiMvaeModel& model,
                                               const MultiViewBatch& labeled,
                                               const MultiViewBatch& unlabeled,
                                               const SeededRng& rng,
                                               const ObjectiveConfig& cfg, double h) {
    if (!(h > 0.0)) throw ArgumentError("finite differences need h > 0");
    double b0 = batch_objective_value(model, labeled, unlabeled, rng, cfg);
    double b1 = batch_objective_value(model, labeled, unlabeled, rng, cfg);
    if (b0 != b1) throw StateError("noise draws are not replayable");

    std::vector<double> flat;
    for (const auto& block : param_blocks(model)) {
        for (std::size_t i = 0; i < block.size; ++i) {
            double p = block.data[i];
            block.data[i] = p + h;
            double fp = batch_objective_value(model, labeled, unlabeled, rng, cfg);
            block.data[i] = p - h;
            double fm = batch_objective_value(model, labeled, unlabeled, rng, cfg);
            block.data[i] = p;
            flat.push_back((fp - fm) / (2.0 * h));
        }
    }
    return flat;
}

}  // namespace mvae
