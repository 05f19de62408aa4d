#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvae/data.hpp"
#include "mvae/errors.hpp"
#include "mvae/model.hpp"
#include "mvae/objective.hpp"
#include "mvae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit codes: 0 success, 1 check/run failure, 2 input error, 3 infeasible
constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kInputError = 2;
constexpr int kInfeasible = 3;

void print_resolved(const std::string& command, const json& cfg) {
    json doc;
    doc["command"] = command;
    doc["config"] = cfg;
    std::cout << "resolved-config " << doc.dump() << "\n";
}

mvae::SynthConfig synth_defaults() {
    mvae::SynthConfig cfg;
    cfg.num_samples = 5000;
    cfg.num_classes = 3;
    cfg.latent_dim = 8;
    cfg.view_dims = {20, 12};
    cfg.noise_scale = {1.0, 1.0};
    cfg.noise_view = {0, 0};
    cfg.class_separation = 2.0;
    cfg.seed = 7;
    return cfg;
}

json synth_to_json(const mvae::SynthConfig& cfg) {
    return {{"num_samples", cfg.num_samples},
            {"num_classes", cfg.num_classes},
            {"latent_dim", cfg.latent_dim},
            {"view_dims", cfg.view_dims},
            {"noise_scale", cfg.noise_scale},
            {"noise_view", cfg.noise_view},
            {"class_separation", cfg.class_separation},
            {"seed", cfg.seed}};
}

mvae::SynthConfig synth_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw mvae::IngestionError("cannot open " + path);
    json doc = json::parse(f);  // parse_error carries line/column
    mvae::SynthConfig cfg = synth_defaults();
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string& k = it.key();
        if (k == "num_samples") it.value().get_to(cfg.num_samples);
        else if (k == "num_classes") it.value().get_to(cfg.num_classes);
        else if (k == "latent_dim") it.value().get_to(cfg.latent_dim);
        else if (k == "view_dims") it.value().get_to(cfg.view_dims);
        else if (k == "noise_scale") it.value().get_to(cfg.noise_scale);
        else if (k == "noise_view") {
            std::vector<bool> flags;
            it.value().get_to(flags);
            cfg.noise_view.assign(flags.begin(), flags.end());
        } else if (k == "class_separation") it.value().get_to(cfg.class_separation);
        else if (k == "seed") it.value().get_to(cfg.seed);
        else throw mvae::ConfigError(path + ": unknown key '" + k + "'");
    }
    if (cfg.noise_scale.size() == 1 && cfg.view_dims.size() > 1)
        cfg.noise_scale.assign(cfg.view_dims.size(), cfg.noise_scale[0]);
    if (cfg.noise_view.size() != cfg.view_dims.size() && cfg.noise_view.empty())
        cfg.noise_view.assign(cfg.view_dims.size(), 0);
    return cfg;
}

struct NetOptions {
    std::size_t latent = 0;                  // 0: derive from data
    std::vector<std::size_t> enc_hidden;     // empty: derive
    std::vector<std::size_t> dec_hidden;     // empty: reverse of encoder
    bool uniform_prior = false;
};

// Paper-shaped defaults, shrunk to the data: encoder 100-50 capped at the
// widest view, latent capped at 30.
mvae::ModelConfig build_model_config(const mvae::MultiViewDataset& ds,
                                     const NetOptions& net) {
    mvae::ModelConfig mc;
    for (const auto& spec : ds.view_specs) mc.view_dims.push_back(spec.dim);
    mc.num_classes = ds.num_classes;

    std::size_t widest = 0;
    for (std::size_t d : mc.view_dims) widest = std::max(widest, d);
    mc.encoder_hidden = net.enc_hidden.empty()
                            ? std::vector<std::size_t>{std::min<std::size_t>(100, widest),
                                                       std::min<std::size_t>(50, widest)}
                            : net.enc_hidden;
    if (net.dec_hidden.empty()) {
        mc.decoder_hidden.assign(mc.encoder_hidden.rbegin(), mc.encoder_hidden.rend());
    } else {
        mc.decoder_hidden = net.dec_hidden;
    }
    mc.latent_dim = net.latent ? net.latent : std::min<std::size_t>(30, widest);

    if (net.uniform_prior) {
        mc.class_prior.assign(mc.num_classes, 1.0 / double(mc.num_classes));
    } else {
        std::vector<double> counts(mc.num_classes, 0.0);
        double total = 0.0;
        for (std::size_t i : ds.train_labeled_indices()) {
            counts[std::size_t(ds.labels[i])] += 1.0;
            total += 1.0;
        }
        if (total == 0.0) throw mvae::ConfigError("no labeled training rows for the prior");
        mc.class_prior.resize(mc.num_classes);
        for (std::size_t k = 0; k < mc.num_classes; ++k)
            mc.class_prior[k] = counts[k] / total;
        // exact simplex despite rounding
        double s = 0.0;
        for (double p : mc.class_prior) s += p;
        for (double& p : mc.class_prior) p /= s;
    }
    return mc;
}

json metrics_to_json(const mvae::EvalMetrics& m) {
    std::vector<std::vector<double>> confusion(m.confusion.rows());
    for (std::size_t r = 0; r < m.confusion.rows(); ++r)
        confusion[r].assign(m.confusion.row(r).begin(), m.confusion.row(r).end());
    return {{"accuracy", m.accuracy},
            {"per_class_accuracy", m.per_class},
            {"support", m.support},
            {"confusion", confusion},
            {"count", m.count}};
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    mvae::SynthConfig cfg =
        config_path.empty() ? synth_defaults() : synth_from_json_file(config_path);
    print_resolved("synth", {{"config", synth_to_json(cfg)}, {"out", out_dir}});

    mvae::MultiViewDataset ds = mvae::make_synthetic(cfg);
    mvae::write_dataset(ds, out_dir);

    std::vector<std::size_t> class_counts(ds.num_classes, 0);
    for (int y : ds.labels) ++class_counts[std::size_t(y)];
    json dims = json::array();
    for (const auto& v : ds.view_specs) dims.push_back({{"name", v.name}, {"dim", v.dim}});
    json summary = {{"num_samples", ds.num_samples()},
                    {"views", dims},
                    {"class_counts", class_counts},
                    {"train", ds.split_indices(mvae::Split::train).size()},
                    {"validation", ds.split_indices(mvae::Split::validation).size()},
                    {"test", ds.split_indices(mvae::Split::test).size()}};
    std::cout << summary.dump() << "\n";
    return kOk;
}

struct TrainFlags {
    std::string data;
    std::string out;
    double labeled_frac = 1.0;
    double beta = 1.0;
    double lr = 3e-4;
    std::size_t mc_samples = 1;
    std::size_t epochs = 200;
    std::size_t patience = 30;
    std::size_t n_l = 16;
    std::size_t n_u = 48;
    std::string mode = "inductive";
    std::uint64_t seed = 0;
    bool no_standardize = false;
    double clip_norm = 0.0;
    NetOptions net;
};

json train_flags_json(const TrainFlags& f) {
    return {{"data", f.data},
            {"out", f.out},
            {"labeled_frac", f.labeled_frac},
            {"beta", f.beta},
            {"lr", f.lr},
            {"T", f.mc_samples},
            {"epochs", f.epochs},
            {"patience", f.patience},
            {"n_l", f.n_l},
            {"n_u", f.n_u},
            {"mode", f.mode},
            {"seed", f.seed},
            {"standardize", !f.no_standardize},
            {"clip_norm", f.clip_norm},
            {"latent", f.net.latent},
            {"hidden", f.net.enc_hidden},
            {"dec_hidden", f.net.dec_hidden},
            {"uniform_prior", f.net.uniform_prior}};
}

int cmd_train(const TrainFlags& flags) {
    print_resolved("train", train_flags_json(flags));

    mvae::MultiViewDataset ds = mvae::load_csv_views(flags.data);
    if (!flags.no_standardize) mvae::standardize(ds);
    if (flags.labeled_frac != 1.0)
        mvae::mask_labels(ds, flags.labeled_frac, mvae::derive_seed(flags.seed, "mask"));

    mvae::ModelConfig mc = build_model_config(ds, flags.net);
    mvae::SemiMvaeModel model = mvae::init_model(mc, mvae::derive_seed(flags.seed, "init"));

    mvae::TrainConfig tc;
    tc.epochs = flags.epochs;
    tc.n_l = flags.n_l;
    tc.n_u = flags.n_u;
    tc.beta = flags.beta;
    tc.lr = flags.lr;
    tc.mc_samples = flags.mc_samples;
    tc.seed = mvae::derive_seed(flags.seed, "train");
    tc.patience = flags.patience;
    tc.mode = mvae::train_mode_from_name(flags.mode);
    tc.clip_norm = flags.clip_norm;

    mvae::TrainResult tr = mvae::train(std::move(model), ds, tc);
    mvae::EvalMetrics test = mvae::evaluate(tr.best_model, ds, mvae::Split::test);

    fs::create_directories(flags.out);
    mvae::save_model(tr.best_model, (fs::path(flags.out) / "model.bin").string());
    mvae::write_history_json((fs::path(flags.out) / "history.json").string(), tr.history,
                             tr.best_epoch);

    json out = {{"test_accuracy", test.accuracy},
                {"val_accuracy", tr.best_val_accuracy},
                {"best_epoch", tr.best_epoch},
                {"epochs_run", tr.history.records.size()},
                {"lambda", mvae::view_weights(tr.best_model)}};
    std::cout << out.dump() << "\n";
    return kOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& split, bool no_standardize) {
    print_resolved("eval", {{"model", model_path},
                            {"data", data_path},
                            {"split", split},
                            {"standardize", !no_standardize}});
    mvae::SemiMvaeModel model = mvae::load_model(model_path);
    mvae::MultiViewDataset ds = mvae::load_csv_views(data_path);
    if (!no_standardize) mvae::standardize(ds);
    mvae::EvalMetrics m = mvae::evaluate(model, ds, mvae::split_from_name(split));
    std::cout << metrics_to_json(m).dump() << "\n";
    return kOk;
}

int cmd_inspect(const std::string& model_path) {
    print_resolved("inspect", {{"model", model_path}});
    mvae::SemiMvaeModel model = mvae::load_model(model_path);
    json doc = {{"lambda", mvae::view_weights(model)},
                {"rho", model.rho},
                {"class_prior", model.config.class_prior},
                {"view_dims", model.config.view_dims},
                {"latent_dim", model.config.latent_dim},
                {"num_classes", model.config.num_classes},
                {"encoder_hidden", model.config.encoder_hidden},
                {"decoder_hidden", model.config.decoder_hidden}};
    std::cout << doc.dump() << "\n";
    return kOk;
}

// The tiny configuration used by the gradient check: two views of dims 3 and
// 2, latent 2, two classes, one hidden unit per layer.
mvae::ModelConfig tiny_config() {
    mvae::ModelConfig mc;
    mc.view_dims = {3, 2};
    mc.latent_dim = 2;
    mc.num_classes = 2;
    mc.encoder_hidden = {1};
    mc.decoder_hidden = {1};
    mc.class_prior = {0.5, 0.5};
    return mc;
}

int cmd_gradcheck(const std::string& size, std::uint64_t seed, double tolerance,
                  const std::string& corrupt_block) {
    print_resolved("gradcheck", {{"size", size},
                                 {"seed", seed},
                                 {"tolerance", tolerance},
                                 {"corrupt", corrupt_block}});
    if (size != "tiny") throw mvae::ArgumentError("unknown gradcheck size '" + size + "'");

    mvae::ModelConfig mc = tiny_config();
    mvae::SemiMvaeModel model = mvae::init_model(mc, mvae::derive_seed(seed, "init"));

    mvae::SeededRng data_rng = mvae::SeededRng(seed).split("data");
    auto fill = [&](mvae::Matrix& m) {
        for (double& v : m.flat()) v = data_rng.standard_normal();
    };
    mvae::MultiViewBatch labeled, unlabeled;
    labeled.views = {mvae::Matrix(2, 3), mvae::Matrix(2, 2)};
    unlabeled.views = {mvae::Matrix(2, 3), mvae::Matrix(2, 2)};
    for (auto& m : labeled.views) fill(m);
    for (auto& m : unlabeled.views) fill(m);
    labeled.labels = {0, 1};

    mvae::ObjectiveConfig cfg;
    cfg.mc_samples = 2;
    cfg.beta = 0.7;
    mvae::SeededRng noise = mvae::SeededRng(seed).split("noise");

    mvae::SeededRng noise_replay = noise;
    mvae::batch_objective(model, labeled, unlabeled, noise_replay, cfg);
    std::vector<double> analytic = mvae::collect_gradients(model);
    if (!corrupt_block.empty()) {
        bool found = false;
        for (auto& block : mvae::param_blocks(model))
            if (block.name == corrupt_block) {
                block.grad[0] += 0.5;
                found = true;
            }
        if (!found)
            throw mvae::ArgumentError("no parameter block named '" + corrupt_block + "'");
        analytic = mvae::collect_gradients(model);
    }
    std::vector<double> fd =
        mvae::finite_difference_gradient(model, labeled, unlabeled, noise, cfg, 1e-5);

    bool ok = true;
    std::size_t off = 0;
    for (const auto& block : mvae::param_blocks(model)) {
        double max_rel = 0.0;
        for (std::size_t i = 0; i < block.size; ++i) {
            double a = analytic[off + i], f = fd[off + i];
            double rel = std::abs(a - f) / std::max({1e-6, std::abs(a), std::abs(f)});
            max_rel = std::max(max_rel, rel);
        }
        off += block.size;
        bool pass = max_rel <= tolerance;
        ok = ok && pass;
        std::printf("%-24s max_rel_err %.3e %s\n", block.name.c_str(), max_rel,
                    pass ? "ok" : "FAIL");
    }
    std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
    return ok ? kOk : kCheckFailure;
}

int cmd_experiment(const std::string& spec_path, const std::string& out_dir) {
    std::ifstream f(spec_path);
    if (!f) throw mvae::IngestionError("cannot open " + spec_path);
    json doc = json::parse(f);

    std::string data_path;
    bool do_standardize = true;
    mvae::ExperimentSpec spec;
    NetOptions net;
    spec.train_config = mvae::TrainConfig{};

    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string& k = it.key();
        if (k == "data") it.value().get_to(data_path);
        else if (k == "fractions") it.value().get_to(spec.fractions);
        else if (k == "seeds") it.value().get_to(spec.seeds);
        else if (k == "mode") spec.mode = mvae::train_mode_from_name(it.value().get<std::string>());
        else if (k == "beta") it.value().get_to(spec.train_config.beta);
        else if (k == "lr") it.value().get_to(spec.train_config.lr);
        else if (k == "T") it.value().get_to(spec.train_config.mc_samples);
        else if (k == "epochs") it.value().get_to(spec.train_config.epochs);
        else if (k == "patience") it.value().get_to(spec.train_config.patience);
        else if (k == "n_l") it.value().get_to(spec.train_config.n_l);
        else if (k == "n_u") it.value().get_to(spec.train_config.n_u);
        else if (k == "standardize") it.value().get_to(do_standardize);
        else if (k == "latent") it.value().get_to(net.latent);
        else if (k == "hidden") it.value().get_to(net.enc_hidden);
        else if (k == "dec_hidden") it.value().get_to(net.dec_hidden);
        else if (k == "uniform_prior") it.value().get_to(net.uniform_prior);
        else throw mvae::ConfigError(spec_path + ": unknown key '" + k + "'");
    }
    if (data_path.empty()) throw mvae::ConfigError(spec_path + ": missing 'data'");

    print_resolved("experiment", {{"spec", spec_path},
                                  {"out", out_dir},
                                  {"data", data_path},
                                  {"fractions", spec.fractions},
                                  {"seeds", spec.seeds},
                                  {"mode", mvae::train_mode_name(spec.mode)},
                                  {"beta", spec.train_config.beta},
                                  {"lr", spec.train_config.lr},
                                  {"epochs", spec.train_config.epochs},
                                  {"standardize", do_standardize}});

    mvae::MultiViewDataset ds = mvae::load_csv_views(data_path);
    if (do_standardize) mvae::standardize(ds);
    spec.model_config = build_model_config(ds, net);

    mvae::ExperimentResult result = mvae::run_experiment(ds, spec, out_dir);
    for (const auto& agg : result.aggregates) {
        json row = {{"fraction", agg.fraction},
                    {"mean_accuracy", agg.mean_accuracy},
                    {"std_accuracy", agg.std_accuracy},
                    {"runs", agg.runs},
                    {"single_run", agg.single_run}};
        std::cout << row.dump() << "\n";
    }
    if (result.failures)
        std::cerr << "warning: " << result.failures << " run(s) failed\n";
    return result.runs.size() == result.failures ? kCheckFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised multi-view VAE"};
    app.require_subcommand(1);

    std::string synth_config, synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", synth_config, "synth config JSON");
    synth->add_option("--out", synth_out, "output directory")->required();

    TrainFlags tf;
    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--data", tf.data, "dataset manifest")->required();
    train->add_option("--out", tf.out, "output directory")->required();
    train->add_option("--labeled-frac", tf.labeled_frac, "fraction of labels kept");
    train->add_option("--beta", tf.beta, "classification loss scale");
    train->add_option("--lr", tf.lr, "Adam learning rate");
    train->add_option("--T", tf.mc_samples, "MC samples per bound");
    train->add_option("--epochs", tf.epochs, "max epochs");
    train->add_option("--patience", tf.patience, "early stopping patience");
    train->add_option("--n-l", tf.n_l, "labeled samples per batch");
    train->add_option("--n-u", tf.n_u, "unlabeled samples per batch");
    train->add_option("--mode", tf.mode, "inductive|transductive");
    train->add_option("--seed", tf.seed, "master seed");
    train->add_flag("--no-standardize", tf.no_standardize, "skip feature standardization");
    train->add_option("--clip-norm", tf.clip_norm, "global gradient norm clip (0 = off)");
    train->add_option("--latent", tf.net.latent, "latent dim (0 = derive)");
    train->add_option("--hidden", tf.net.enc_hidden, "encoder hidden widths");
    train->add_option("--dec-hidden", tf.net.dec_hidden, "decoder hidden widths");
    train->add_flag("--uniform-prior", tf.net.uniform_prior, "uniform class prior");

    std::string eval_model, eval_data, eval_split = "test";
    bool eval_no_std = false;
    auto* eval = app.add_subcommand("eval", "evaluate a saved model");
    eval->add_option("--model", eval_model, "model file")->required();
    eval->add_option("--data", eval_data, "dataset manifest")->required();
    eval->add_option("--split", eval_split, "train|validation|test");
    eval->add_flag("--no-standardize", eval_no_std, "skip feature standardization");

    std::string inspect_model;
    auto* inspect = app.add_subcommand("inspect", "print a saved model's key facts");
    inspect->add_option("--model", inspect_model, "model file")->required();

    std::string gc_size = "tiny", gc_corrupt;
    std::uint64_t gc_seed = 0;
    double gc_tol = 1e-4;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
    gradcheck->add_option("--size", gc_size, "model size (tiny)");
    gradcheck->add_option("--seed", gc_seed, "seed");
    gradcheck->add_option("--tolerance", gc_tol, "max relative error");
    gradcheck->add_option("--corrupt", gc_corrupt, "corrupt a gradient block (test hook)")
        ->group("");  // hidden

    std::string exp_spec, exp_out;
    auto* experiment = app.add_subcommand("experiment", "run a fractions x seeds grid");
    experiment->add_option("--spec", exp_spec, "experiment spec JSON")->required();
    experiment->add_option("--out", exp_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kInputError;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_config, synth_out);
        if (train->parsed()) return cmd_train(tf);
        if (eval->parsed()) return cmd_eval(eval_model, eval_data, eval_split, eval_no_std);
        if (inspect->parsed()) return cmd_inspect(inspect_model);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_size, gc_seed, gc_tol, gc_corrupt);
        if (experiment->parsed()) return cmd_experiment(exp_spec, exp_out);
    } catch (const mvae::MaskingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInfeasible;
    } catch (const mvae::OptimizerError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCheckFailure;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const mvae::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}
