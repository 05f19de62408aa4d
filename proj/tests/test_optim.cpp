#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "mvae/errors.hpp"
#include "mvae/model.hpp"
#include "mvae/optim.hpp"

using namespace mvae;

namespace {

ModelConfig small_config() {
    ModelConfig mc;
    mc.view_dims = {2};
    mc.latent_dim = 1;
    mc.num_classes = 2;
    mc.encoder_hidden = {2};
    mc.decoder_hidden = {2};
    mc.class_prior = {0.5, 0.5};
    return mc;
}

std::vector<double> params(SemiMvaeModel& m) {
    std::vector<double> out;
    for (const auto& b : param_blocks(m)) out.insert(out.end(), b.data, b.data + b.size);
    return out;
}

void set_all_grads(SemiMvaeModel& m, double g) {
    for (auto& b : param_blocks(m))
        for (std::size_t i = 0; i < b.size; ++i) b.grad[i] = g;
}

}  // namespace

TEST_CASE("the first bias-corrected step moves by about lr against the gradient") {
    SemiMvaeModel m = init_model(small_config(), 1);
    auto before = params(m);
    set_all_grads(m, 0.5);

    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamState adam(cfg);
    adam.step(m);
    CHECK(adam.step_count() == 1);

    auto after = params(m);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(before[i] - after[i] == doctest::Approx(0.01).epsilon(1e-4));

    // opposite gradient sign moves the other way
    set_all_grads(m, -0.5);
    AdamState adam2(cfg);
    auto mid = params(m);
    adam2.step(m);
    auto end = params(m);
    for (std::size_t i = 0; i < mid.size(); ++i)
        CHECK(end[i] - mid[i] == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("zero gradients leave parameters in place") {
    SemiMvaeModel m = init_model(small_config(), 2);
    auto before = params(m);
    m.zero_grad();
    AdamState adam(AdamConfig{});
    adam.step(m);
    CHECK(params(m) == before);
}

TEST_CASE("adam drives a quadratic to its minimum") {
    // minimize sum (p - 3)^2 over the rho block only
    SemiMvaeModel m = init_model(small_config(), 3);
    AdamConfig cfg;
    cfg.lr = 0.05;
    AdamState adam(cfg);
    for (int it = 0; it < 2000; ++it) {
        m.zero_grad();
        for (auto& b : param_blocks(m))
            if (b.name == "rho")
                for (std::size_t i = 0; i < b.size; ++i) b.grad[i] = 2.0 * (b.data[i] - 3.0);
        adam.step(m);
    }
    for (auto& b : param_blocks(m))
        if (b.name == "rho")
            for (std::size_t i = 0; i < b.size; ++i)
                CHECK(b.data[i] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("updates are deterministic") {
    SemiMvaeModel a = init_model(small_config(), 4);
    SemiMvaeModel b = init_model(small_config(), 4);
    AdamState oa{AdamConfig{}}, ob{AdamConfig{}};
    for (int it = 0; it < 5; ++it) {
        set_all_grads(a, 0.1 * (it + 1));
        set_all_grads(b, 0.1 * (it + 1));
        oa.step(a);
        ob.step(b);
    }
    CHECK(params(a) == params(b));
}

TEST_CASE("non-finite gradients are refused with the block named") {
    SemiMvaeModel m = init_model(small_config(), 5);
    set_all_grads(m, 0.0);
    for (auto& b : param_blocks(m))
        if (b.name == "classifier.layer0.weight") b.grad[0] = std::nan("");
    AdamState adam(AdamConfig{});
    try {
        adam.step(m);
        FAIL("expected an optimizer error");
    } catch (const OptimizerError& e) {
        CHECK(std::string(e.what()).find("classifier.layer0.weight") != std::string::npos);
    }
}

TEST_CASE("an optimizer is bound to one model shape") {
    SemiMvaeModel m = init_model(small_config(), 6);
    AdamState adam(AdamConfig{});
    set_all_grads(m, 0.1);
    adam.step(m);

    ModelConfig other = small_config();
    other.encoder_hidden = {3};
    SemiMvaeModel m2 = init_model(other, 6);
    set_all_grads(m2, 0.1);
    CHECK_THROWS_AS(adam.step(m2), OptimizerError);
}

TEST_CASE("global norm clipping caps the applied gradient") {
    SemiMvaeModel a = init_model(small_config(), 7);
    SemiMvaeModel b = init_model(small_config(), 7);
    std::size_t n = params(a).size();

    // gradient of norm 10 clipped to 1 behaves like the pre-scaled gradient
    double g = 10.0 / std::sqrt(double(n));
    AdamConfig clip;
    clip.clip_norm = 1.0;
    AdamState oa(clip);
    set_all_grads(a, g);
    oa.step(a);

    AdamConfig plain;
    AdamState ob(plain);
    set_all_grads(b, g / 10.0);
    ob.step(b);
    CHECK(params(a) == params(b));

    // below the threshold nothing changes
    SemiMvaeModel c = init_model(small_config(), 7);
    SemiMvaeModel d = init_model(small_config(), 7);
    double tiny = 0.5 / std::sqrt(double(n));
    AdamState oc(clip), od(plain);
    set_all_grads(c, tiny);
    set_all_grads(d, tiny);
    oc.step(c);
    od.step(d);
    CHECK(params(c) == params(d));
}

TEST_CASE("sgd_step applies p -= lr * g") {
    SemiMvaeModel m = init_model(small_config(), 8);
    auto before = params(m);
    set_all_grads(m, 2.0);
    sgd_step(m, 0.1);
    auto after = params(m);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(after[i] == doctest::Approx(before[i] - 0.2).epsilon(1e-12));
}
