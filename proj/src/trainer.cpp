#include "mvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mvae/errors.hpp"

namespace fs = std::filesystem;

namespace mvae {

const char* train_mode_name(TrainMode m) {
    return m == TrainMode::inductive ? "inductive" : "transductive";
}

TrainMode train_mode_from_name(const std::string& name) {
    if (name == "inductive") return TrainMode::inductive;
    if (name == "transductive") return TrainMode::transductive;
    throw ConfigError("unknown mode '" + name + "' (inductive|transductive)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (n_l < 1) throw ConfigError("train: labeled batch size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (!(beta > 0.0)) throw ConfigError("train: beta must be > 0");
    if (mc_samples < 1) throw ConfigError("train: mc_samples must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (clip_norm < 0.0) throw ConfigError("train: negative clip_norm");
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& name) {
    return SeededRng(seed).split(name).next_u64();
}

TrainResult train(SemiMvaeModel model, const MultiViewDataset& ds,
                  const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();

    auto labeled_pool = ds.train_labeled_indices();
    if (labeled_pool.empty()) throw IterationError("train: labeled pool is empty");
    auto unlabeled_pool = cfg.mode == TrainMode::transductive
                              ? ds.split_indices(Split::test)
                              : ds.train_unlabeled_indices();
    if (ds.split_indices(Split::validation).empty())
        throw ArgumentError("train: validation split is empty");

    std::uint64_t shuffle_seed = derive_seed(cfg.seed, "shuffle");
    SeededRng noise_rng = SeededRng(cfg.seed).split("noise");

    ObjectiveConfig obj_cfg;
    obj_cfg.mc_samples = cfg.mc_samples;
    obj_cfg.beta = cfg.beta;

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    adam_cfg.clip_norm = cfg.clip_norm;
    AdamState adam(adam_cfg);

    TrainResult result;
    result.best_val_accuracy = -1.0;
    std::size_t since_best = 0;

    std::size_t n_u = unlabeled_pool.empty() ? 0 : cfg.n_u;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        MinibatchStream stream(ds, labeled_pool, unlabeled_pool, cfg.n_l, n_u,
                               shuffle_seed, epoch);
        MultiViewBatch lb, ub;
        double f_sum = 0.0, l_elbo = 0.0, u_elbo = 0.0, ce = 0.0;
        std::size_t n_lab = 0, n_unl = 0, batch_idx = 0, batches = 0;
        while (stream.next(lb, ub)) {
            BatchObjective bo;
            try {
                bo = batch_objective(model, lb, ub, noise_rng, obj_cfg);
                if (!std::isfinite(bo.value))
                    throw OptimizerError("non-finite objective");
                adam.step(model);
            } catch (const OptimizerError& e) {
                throw OptimizerError(std::string(e.what()) + " (epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_idx) + ")");
            }
            f_sum += bo.value;
            l_elbo += bo.labeled_elbo_sum;
            u_elbo += bo.unlabeled_elbo_sum;
            ce += bo.class_loss_sum;
            n_lab += bo.n_labeled;
            n_unl += bo.n_unlabeled;
            ++batch_idx;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.objective = batches ? f_sum / double(batches) : 0.0;
        rec.labeled_elbo = n_lab ? l_elbo / double(n_lab) : 0.0;
        rec.unlabeled_elbo = n_unl ? u_elbo / double(n_unl) : 0.0;
        rec.class_loss = n_lab ? ce / double(n_lab) : 0.0;
        rec.val_accuracy = evaluate(model, ds, Split::validation).accuracy;
        rec.lambda = view_weights(model);
        result.history.records.push_back(rec);

        if (rec.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = rec.val_accuracy;
            result.best_epoch = epoch;
            result.best_model = model;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

EvalMetrics evaluate(const SemiMvaeModel& model, const MultiViewDataset& ds, Split split) {
    auto rows = ds.split_indices(split);
    if (rows.empty())
        throw ArgumentError(std::string("evaluate: split '") + split_name(split) +
                            "' is empty");
    std::size_t K = model.config.num_classes;

    std::size_t concat = 0;
    for (std::size_t d : model.config.view_dims) concat += d;
    Matrix in(rows.size(), concat);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t off = 0;
        for (std::size_t v = 0; v < ds.num_views(); ++v) {
            auto src = ds.views[v].row(rows[i]);
            std::copy(src.begin(), src.end(), in.row(i).begin() + off);
            off += src.size();
        }
    }
    Matrix probs = classify_batch(model, in);

    EvalMetrics m;
    m.count = rows.size();
    m.confusion = Matrix(K, K);
    m.per_class.assign(K, 0.0);
    m.support.assign(K, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t pred = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (probs(i, k) > probs(i, pred)) pred = k;
        auto y = std::size_t(ds.labels[rows[i]]);
        m.confusion(y, pred) += 1.0;
        ++m.support[y];
        if (pred == y) ++correct;
    }
    m.accuracy = double(correct) / double(rows.size());
    for (std::size_t k = 0; k < K; ++k)
        if (m.support[k]) m.per_class[k] = m.confusion(k, k) / double(m.support[k]);
    return m;
}

void write_history_json(const std::string& path, const TrainHistory& history,
                        std::size_t best_epoch) {
    nlohmann::json doc;
    doc["best_epoch"] = best_epoch;
    doc["records"] = nlohmann::json::array();
    for (const auto& r : history.records) {
        doc["records"].push_back({{"epoch", r.epoch},
                                  {"objective", r.objective},
                                  {"labeled_elbo", r.labeled_elbo},
                                  {"unlabeled_elbo", r.unlabeled_elbo},
                                  {"class_loss", r.class_loss},
                                  {"val_accuracy", r.val_accuracy},
                                  {"lambda", r.lambda}});
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw PersistenceError("cannot write " + path);
    f << doc.dump(2) << '\n';
}

ExperimentResult run_experiment(const MultiViewDataset& ds, const ExperimentSpec& spec,
                                const std::string& out_dir) {
    if (spec.fractions.empty()) throw ConfigError("experiment: no fractions");
    if (spec.seeds.empty()) throw ConfigError("experiment: no seeds");
    fs::create_directories(out_dir);

    ExperimentResult result;
    std::string csv = "fraction,seed,mode,test_accuracy,best_epoch,beta,lr\n";

    for (double fraction : spec.fractions) {
        std::vector<double> accs;
        for (std::uint64_t seed : spec.seeds) {
            RunResult run;
            run.fraction = fraction;
            run.seed = seed;
            try {
                MultiViewDataset masked = ds;
                mask_labels(masked, fraction, derive_seed(seed, "mask"));

                SemiMvaeModel model =
                    init_model(spec.model_config, derive_seed(seed, "init"));
                TrainConfig tc = spec.train_config;
                tc.mode = spec.mode;
                tc.seed = derive_seed(seed, "train");
                TrainResult tr = train(std::move(model), masked, tc);

                run.test_accuracy = evaluate(tr.best_model, masked, Split::test).accuracy;
                run.best_epoch = tr.best_epoch;
                run.ok = true;
                accs.push_back(run.test_accuracy);

                char tag[64];
                std::snprintf(tag, sizeof tag, "history_f%g_s%llu.json", fraction,
                              static_cast<unsigned long long>(seed));
                write_history_json((fs::path(out_dir) / tag).string(), tr.history,
                                   tr.best_epoch);

                char line[160];
                std::snprintf(line, sizeof line, "%.17g,%llu,%s,%.17g,%zu,%.17g,%.17g\n",
                              fraction, static_cast<unsigned long long>(seed),
                              train_mode_name(spec.mode), run.test_accuracy,
                              run.best_epoch, spec.train_config.beta,
                              spec.train_config.lr);
                csv += line;
            } catch (const Error& e) {
                run.ok = false;
                run.error = e.what();
                ++result.failures;
            }
            result.runs.push_back(std::move(run));
        }

        AggregateRow agg;
        agg.fraction = fraction;
        agg.runs = accs.size();
        agg.single_run = accs.size() == 1;
        if (!accs.empty()) {
            double mean = 0.0;
            for (double a : accs) mean += a;
            mean /= double(accs.size());
            double var = 0.0;
            for (double a : accs) var += (a - mean) * (a - mean);
            agg.mean_accuracy = mean;
            agg.std_accuracy =
                accs.size() > 1 ? std::sqrt(var / double(accs.size() - 1)) : 0.0;
        }
        result.aggregates.push_back(agg);
    }

    std::ofstream f(fs::path(out_dir) / "results.csv", std::ios::trunc);
    if (!f) throw PersistenceError("cannot write results.csv");
    f << csv;
    return result;
}

}  // namespace mvae
