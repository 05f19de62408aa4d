#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvae/data.hpp"
#include "mvae/model.hpp"
#include "mvae/objective.hpp"
#include "mvae/optim.hpp"

namespace mvae {

enum class TrainMode { inductive, transductive };

const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& name);  // throws ConfigError

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t n_l = 16;  // labeled samples per batch
    std::size_t n_u = 48;  // unlabeled samples per batch
    double beta = 1.0;
    double lr = 3e-4;
    std::size_t mc_samples = 1;
    std::uint64_t seed = 0;
    std::size_t patience = 30;  // epochs without validation improvement
    TrainMode mode = TrainMode::inductive;
    double clip_norm = 0.0;

    void validate() const;  // throws ConfigError
};

struct EpochRecord {
    std::size_t epoch = 0;
    double objective = 0.0;       // mean batch F
    double labeled_elbo = 0.0;    // per-sample means
    double unlabeled_elbo = 0.0;
    double class_loss = 0.0;
    double val_accuracy = 0.0;
    std::vector<double> lambda;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
};

struct TrainResult {
    SemiMvaeModel best_model;
    TrainHistory history;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
};

// Minibatch training with Adam, per-epoch validation accuracy, best-epoch
// snapshotting (ties keep the earlier epoch) and early stopping. Inductive
// mode draws unlabeled batches from the hidden-label training rows;
// transductive mode draws them from the test rows instead.
TrainResult train(SemiMvaeModel model, const MultiViewDataset& ds,
                  const TrainConfig& cfg);

struct EvalMetrics {
    double accuracy = 0.0;
    std::vector<double> per_class;     // recall per class; 0 when unsupported
    std::vector<std::size_t> support;  // true-label counts
    Matrix confusion;                  // rows true, cols predicted
    std::size_t count = 0;
};

// Argmax classification over a split; ties pick the lowest class index.
EvalMetrics evaluate(const SemiMvaeModel& model, const MultiViewDataset& ds, Split split);

struct ExperimentSpec {
    std::vector<double> fractions;
    std::vector<std::uint64_t> seeds;
    TrainMode mode = TrainMode::inductive;
    ModelConfig model_config;
    TrainConfig train_config;  // seed field ignored; per-run seeds derived
};

struct RunResult {
    double fraction = 0.0;
    std::uint64_t seed = 0;
    bool ok = false;
    double test_accuracy = 0.0;
    std::size_t best_epoch = 0;
    std::string error;
};

struct AggregateRow {
    double fraction = 0.0;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::size_t runs = 0;
    bool single_run = false;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::vector<AggregateRow> aggregates;
    std::size_t failures = 0;
};

// One (mask, train, test-evaluate) run per (fraction, seed); failures are
// recorded and skipped in aggregation. Writes results.csv plus one history
// JSON per run into out_dir.
ExperimentResult run_experiment(const MultiViewDataset& ds, const ExperimentSpec& spec,
                                const std::string& out_dir);

void write_history_json(const std::string& path, const TrainHistory& history,
                        std::size_t best_epoch);

// Independent named stream from a base seed; how all per-purpose seeds
// (init/mask/shuffle/noise) descend from one master seed.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& name);

}  // namespace mvae
