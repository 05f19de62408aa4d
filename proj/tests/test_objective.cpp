#include <cmath>
#include <vector>

#include <doctest.h>

#include "mvae/data.hpp"
#include "mvae/distributions.hpp"
#include "mvae/errors.hpp"
#include "mvae/model.hpp"
#include "mvae/objective.hpp"
#include "mvae/rng.hpp"

using namespace mvae;

namespace {

constexpr double kLogStdNormalAtZero = -0.9189385332046727;  // -0.5 ln(2 pi)
constexpr double kExpectedStdPrior1d = -1.4189385332046727;  // -0.5 ln(2 pi) - 0.5
constexpr double kMixtureSelfBound1d = 1.2655121234846454;   // 0.5 ln(4 pi)

ModelConfig config_1view() {
    ModelConfig mc;
    mc.view_dims = {1};
    mc.latent_dim = 1;
    mc.num_classes = 2;
    mc.encoder_hidden = {1};
    mc.decoder_hidden = {1};
    mc.class_prior = {0.5, 0.5};
    return mc;
}

ModelConfig config_2view() {
    ModelConfig mc;
    mc.view_dims = {3, 2};
    mc.latent_dim = 2;
    mc.num_classes = 3;
    mc.encoder_hidden = {4};
    mc.decoder_hidden = {4};
    mc.class_prior = {0.2, 0.3, 0.5};
    return mc;
}

void zero_params(SemiMvaeModel& m) {
    for (auto& block : param_blocks(m))
        for (std::size_t i = 0; i < block.size; ++i) block.data[i] = 0.0;
}

NoiseDraws zero_noise(std::size_t components, std::size_t T, std::size_t d) {
    NoiseDraws noise;
    noise.eps.assign(components, std::vector<std::vector<double>>(
                                     T, std::vector<double>(d, 0.0)));
    return noise;
}

MultiViewBatch random_batch(const ModelConfig& mc, std::size_t n, bool labeled,
                            SeededRng& rng) {
    MultiViewBatch batch;
    for (std::size_t d : mc.view_dims) {
        Matrix m(n, d);
        for (double& v : m.flat()) v = rng.standard_normal();
        batch.views.push_back(std::move(m));
    }
    if (labeled)
        for (std::size_t i = 0; i < n; ++i)
            batch.labels.push_back(int(rng.uniform_int(mc.num_classes)));
    return batch;
}

}  // namespace

TEST_CASE("all-zero parameters reduce every bound term to a closed form") {
    SemiMvaeModel m = init_model(config_1view(), 0);
    zero_params(m);

    const double x = 0.6;
    std::vector<double> xv{x};
    ViewRefs X{xv};

    ObjectiveConfig cfg;
    auto [elbo, bd] = labeled_bound_with_noise(m, X, 0, zero_noise(1, 1, 1), cfg);

    REQUIRE(bd.recon_per_view.size() == 1);
    // decoder ignores z: reconstruction is the standard normal at x
    CHECK(bd.recon_per_view[0] ==
          doctest::Approx(kLogStdNormalAtZero - 0.5 * x * x).epsilon(1e-12));
    CHECK(bd.log_prior_y == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK(bd.expected_log_prior_z == doctest::Approx(kExpectedStdPrior1d).epsilon(1e-12));
    CHECK(bd.entropy_bound == doctest::Approx(kMixtureSelfBound1d).epsilon(1e-12));
    CHECK(elbo == bd.total);
    CHECK(bd.total == doctest::Approx(bd.recon_per_view[0] + bd.log_prior_y +
                                      bd.expected_log_prior_z + bd.entropy_bound));
}

TEST_CASE("identical mixture components have the self-overlap entropy bound") {
    // any weights, identical standard-normal components
    MixturePosterior post;
    post.components = {DiagGaussian({0.0, 0.0}, {0.0, 0.0}),
                       DiagGaussian({0.0, 0.0}, {0.0, 0.0})};
    post.weights = {0.3, 0.7};
    CHECK(entropy_lower_bound(post) ==
          doctest::Approx(2.0 * kMixtureSelfBound1d).epsilon(1e-12));

    // one component: exact self-overlap, dimension scales linearly
    MixturePosterior single;
    single.components = {DiagGaussian({1.0, -2.0, 0.5}, {0.0, 0.0, 0.0})};
    single.weights = {1.0};
    CHECK(entropy_lower_bound(single) ==
          doctest::Approx(3.0 * kMixtureSelfBound1d).epsilon(1e-12));
}

TEST_CASE("entropy bound never exceeds a Monte Carlo entropy estimate") {
    SeededRng rng(55);
    for (int rep = 0; rep < 10; ++rep) {
        std::size_t V = 1 + rng.uniform_int(3);
        std::size_t d = 1 + rng.uniform_int(3);
        MixturePosterior post;
        std::vector<double> w(V);
        double wsum = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
            std::vector<double> mu(d), lv(d);
            for (std::size_t j = 0; j < d; ++j) {
                mu[j] = 2.0 * rng.standard_normal();
                lv[j] = 0.7 * rng.standard_normal();
            }
            post.components.emplace_back(mu, lv);
            w[v] = rng.uniform() + 0.1;
            wsum += w[v];
        }
        for (double& x : w) x /= wsum;
        post.weights = w;

        const int n = 20000;
        double mc = 0.0, mc2 = 0.0;
        for (int i = 0; i < n; ++i) {
            // sample from the mixture
            double u = rng.uniform();
            std::size_t comp = 0;
            double acc = 0.0;
            for (std::size_t v = 0; v < V; ++v) {
                acc += w[v];
                if (u <= acc) {
                    comp = v;
                    break;
                }
            }
            auto eps = sample_standard_normal(rng, d);
            auto z = reparameterize(post.components[comp], eps);
            std::vector<double> logs(V);
            for (std::size_t v = 0; v < V; ++v)
                logs[v] = std::log(w[v]) + diag_gaussian_log_pdf(post.components[v], z);
            double lp = log_sum_exp(logs);
            mc += -lp;
            mc2 += lp * lp;
        }
        double mean = mc / n;
        double se = std::sqrt((mc2 / n - mean * mean) / n);
        CHECK(entropy_lower_bound(post) <= mean + 4.0 * se);
    }
}

TEST_CASE("uniform classifier makes the unlabeled bound the class average plus log K") {
    SemiMvaeModel m = init_model(config_2view(), 9);
    for (auto& layer : m.classifier.layers) {
        layer.weight.fill(0.0);
        for (double& b : layer.bias) b = 0.0;
    }
    SeededRng rng(66);
    MultiViewBatch batch = random_batch(m.config, 1, false, rng);
    ViewRefs X = batch.sample(0);

    ObjectiveConfig cfg;
    NoiseDraws noise = zero_noise(2, 1, 2);
    auto [u, per_class] = unlabeled_bound_with_noise(m, X, noise, cfg);
    REQUIRE(per_class.size() == 3);

    double avg = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        auto [lk, bdk] = labeled_bound_with_noise(m, X, k, noise, cfg);
        CHECK(lk == per_class[k].total);
        avg += lk / 3.0;
    }
    CHECK(u == doctest::Approx(avg + std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("a saturated classifier collapses the unlabeled bound to one class") {
    SemiMvaeModel m = init_model(config_2view(), 10);
    for (auto& layer : m.classifier.layers) {
        layer.weight.fill(0.0);
        for (double& b : layer.bias) b = 0.0;
    }
    m.classifier.layers.back().bias[1] = 40.0;  // q concentrates on class 1

    SeededRng rng(67);
    MultiViewBatch batch = random_batch(m.config, 1, false, rng);
    ViewRefs X = batch.sample(0);
    ObjectiveConfig cfg;
    NoiseDraws noise = zero_noise(2, 1, 2);
    auto [u, per_class] = unlabeled_bound_with_noise(m, X, noise, cfg);
    auto [l1, bd1] = labeled_bound_with_noise(m, X, 1, noise, cfg);
    CHECK(u == doctest::Approx(l1).epsilon(1e-9));
}

TEST_CASE("drawn noise replays through the with_noise variants") {
    SemiMvaeModel m = init_model(config_2view(), 11);
    SeededRng rng(68);
    MultiViewBatch batch = random_batch(m.config, 1, true, rng);
    ViewRefs X = batch.sample(0);
    ObjectiveConfig cfg;
    cfg.mc_samples = 3;

    SeededRng r1 = SeededRng(100).split("noise");
    SeededRng r2 = r1;
    auto [direct, bd] = labeled_bound(m, X, 1, r1, cfg);
    NoiseDraws noise = draw_noise(r2, m.config.num_views(), cfg.mc_samples,
                                  m.config.latent_dim, cfg.share_noise);
    auto [replayed, bd2] = labeled_bound_with_noise(m, X, 1, noise, cfg);
    CHECK(direct == replayed);
    CHECK(bd.total == bd2.total);
    CHECK(r1.counter() == r2.counter());

    SeededRng r3 = SeededRng(100).split("noise");
    SeededRng r4 = r3;
    auto [du, bdu] = unlabeled_bound(m, X, r3, cfg);
    NoiseDraws noise_u = draw_noise(r4, m.config.num_views(), cfg.mc_samples,
                                    m.config.latent_dim, cfg.share_noise);
    auto [ru, bdu2] = unlabeled_bound_with_noise(m, X, noise_u, cfg);
    CHECK(du == ru);
}

TEST_CASE("shared noise reuses one draw across components") {
    SeededRng a(200);
    NoiseDraws shared = draw_noise(a, 3, 2, 4, true);
    REQUIRE(shared.eps.size() == 3);
    CHECK(shared.eps[0] == shared.eps[1]);
    CHECK(shared.eps[1] == shared.eps[2]);

    SeededRng b(200);
    NoiseDraws separate = draw_noise(b, 3, 2, 4, false);
    CHECK(separate.eps[0] != separate.eps[1]);

    // shared mode consumes fewer draws
    CHECK(a.counter() < b.counter());
}

TEST_CASE("breakdown totals accumulate the terms in declared order") {
    SemiMvaeModel m = init_model(config_2view(), 12);
    SeededRng rng(71);
    MultiViewBatch batch = random_batch(m.config, 1, true, rng);
    ViewRefs X = batch.sample(0);
    ObjectiveConfig cfg;
    SeededRng noise_rng = SeededRng(5).split("noise");
    auto [elbo, bd] = labeled_bound(m, X, 2, noise_rng, cfg);

    double total = 0.0;
    for (double r : bd.recon_per_view) total += r;
    total += bd.log_prior_y;
    total += bd.expected_log_prior_z;
    total += bd.entropy_bound;
    CHECK(elbo == total);  // bitwise: same accumulation order
    CHECK(std::isfinite(elbo));
}

TEST_CASE("batch objective value path matches the gradient path bitwise") {
    SemiMvaeModel m = init_model(config_2view(), 13);
    SeededRng rng(72);
    MultiViewBatch labeled = random_batch(m.config, 3, true, rng);
    MultiViewBatch unlabeled = random_batch(m.config, 4, false, rng);
    ObjectiveConfig cfg;
    cfg.beta = 0.6;
    cfg.mc_samples = 2;

    SeededRng noise = SeededRng(7).split("noise");
    SeededRng noise_copy = noise;
    BatchObjective res = batch_objective(m, labeled, unlabeled, noise, cfg);
    double val = batch_objective_value(m, labeled, unlabeled, noise_copy, cfg);
    CHECK(res.value == val);
    CHECK(res.n_labeled == 3);
    CHECK(res.n_unlabeled == 4);
    CHECK(std::isfinite(res.value));

    // value path left gradients untouched
    std::vector<double> grads = collect_gradients(m);
    double val2 = batch_objective_value(m, labeled, unlabeled, noise_copy, cfg);
    CHECK(val2 == val);
    CHECK(collect_gradients(m) == grads);
}

TEST_CASE("objective composes labeled, unlabeled, and classification pieces") {
    SemiMvaeModel m = init_model(config_2view(), 14);
    SeededRng rng(73);
    MultiViewBatch labeled = random_batch(m.config, 1, true, rng);
    MultiViewBatch empty;
    for (std::size_t d : m.config.view_dims) empty.views.emplace_back(0, d);

    ObjectiveConfig cfg;
    cfg.beta = 2.0;
    SeededRng noise = SeededRng(8).split("noise");
    SeededRng noise_copy = noise;
    BatchObjective res = batch_objective(m, labeled, empty, noise, cfg);

    ViewRefs X = labeled.sample(0);
    NoiseDraws draws = draw_noise(noise_copy, m.config.num_views(), 1,
                                  m.config.latent_dim, false);
    auto [elbo, bd] = labeled_bound_with_noise(m, X, std::size_t(labeled.labels[0]), draws, cfg);
    auto q = classify(m, X);
    double ce = -std::log(q[std::size_t(labeled.labels[0])]);
    // alpha = beta * N with N = 1, so F = -elbo + beta * ce
    CHECK(res.value == doctest::Approx(-elbo + 2.0 * ce).epsilon(1e-12));
    CHECK(res.labeled_elbo_sum == doctest::Approx(elbo));
    CHECK(res.class_loss_sum == doctest::Approx(ce));

    MultiViewBatch empty_l;
    for (std::size_t d : m.config.view_dims) empty_l.views.emplace_back(0, d);
    CHECK_THROWS_AS(batch_objective(m, empty_l, empty, noise, cfg), ArgumentError);
}

TEST_CASE("analytic gradients match central differences on a small mixed batch") {
    ModelConfig mc = config_2view();
    SemiMvaeModel m = init_model(mc, 15);
    SeededRng rng(74);
    MultiViewBatch labeled = random_batch(mc, 2, true, rng);
    MultiViewBatch unlabeled = random_batch(mc, 2, false, rng);
    ObjectiveConfig cfg;
    cfg.beta = 0.9;
    cfg.mc_samples = 2;

    SeededRng noise = SeededRng(9).split("noise");
    SeededRng noise_grad = noise;
    batch_objective(m, labeled, unlabeled, noise_grad, cfg);
    std::vector<double> analytic = collect_gradients(m);
    std::vector<double> fd = finite_difference_gradient(m, labeled, unlabeled, noise, cfg, 1e-5);

    REQUIRE(analytic.size() == fd.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        double rel = std::abs(analytic[i] - fd[i]) /
                     std::max({1e-6, std::abs(analytic[i]), std::abs(fd[i])});
        worst = std::max(worst, rel);
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("mc_samples averages reconstruction over draws") {
    // zero decoder ignores z entirely, so any T gives the same bound
    SemiMvaeModel m = init_model(config_1view(), 16);
    zero_params(m);
    std::vector<double> xv{0.3};
    ViewRefs X{xv};
    ObjectiveConfig t1, t5;
    t1.mc_samples = 1;
    t5.mc_samples = 5;
    auto [e1, b1] = labeled_bound_with_noise(m, X, 0, zero_noise(1, 1, 1), t1);
    auto [e5, b5] = labeled_bound_with_noise(m, X, 0, zero_noise(1, 5, 1), t5);
    CHECK(e1 == doctest::Approx(e5).epsilon(1e-15));

    ObjectiveConfig bad;
    bad.mc_samples = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    ObjectiveConfig badbeta;
    badbeta.beta = -1.0;
    CHECK_THROWS_AS(badbeta.validate(), ConfigError);
}

TEST_CASE("finite differences demand a replayable noise source") {
    SemiMvaeModel m = init_model(config_1view(), 17);
    SeededRng rng(75);
    MultiViewBatch labeled = random_batch(m.config, 1, true, rng);
    MultiViewBatch empty;
    for (std::size_t d : m.config.view_dims) empty.views.emplace_back(0, d);
    ObjectiveConfig cfg;
    SeededRng noise(3);
    // a replayable rng passes; the restore leaves parameters untouched
    std::vector<double> before;
    for (const auto& b : param_blocks(m)) before.insert(before.end(), b.data, b.data + b.size);
    CHECK_NOTHROW(finite_difference_gradient(m, labeled, empty, noise, cfg, 1e-5));
    std::vector<double> after;
    for (const auto& b : param_blocks(m)) after.insert(after.end(), b.data, b.data + b.size);
    CHECK(before == after);
}
