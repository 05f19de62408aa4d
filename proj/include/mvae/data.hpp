#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mvae/matrix.hpp"
#include "mvae/model.hpp"
#include "mvae/rng.hpp"

namespace mvae {

struct ViewSpec {
    std::string name;
    std::size_t dim = 0;
};

enum class Split : std::uint8_t { train, validation, test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);  // throws IngestionError

struct StandardizeTransform {
    // per view, per feature column
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> std_dev;
};

// Aligned multi-view samples. labels holds true classes (-1 where genuinely
// unknown); observed marks which labels training may see. Hidden labels stay
// in labels for diagnostics but batches never carry them.
struct MultiViewDataset {
    std::vector<ViewSpec> view_specs;
    std::vector<Matrix> views;  // each num_samples x view dim
    std::vector<int> labels;
    std::vector<std::uint8_t> observed;
    std::vector<Split> splits;
    std::size_t num_classes = 0;
    bool standardized = false;
    StandardizeTransform transform;

    std::size_t num_samples() const { return labels.size(); }
    std::size_t num_views() const { return views.size(); }

    std::vector<std::size_t> split_indices(Split s) const;
    // training rows with a visible label / with a hidden or missing one
    std::vector<std::size_t> train_labeled_indices() const;
    std::vector<std::size_t> train_unlabeled_indices() const;

    void validate() const;  // throws IngestionError
};

struct SynthConfig {
    std::size_t num_samples = 0;
    std::size_t num_classes = 0;
    std::size_t latent_dim = 0;
    std::vector<std::size_t> view_dims;
    std::vector<double> noise_scale;        // per view
    std::vector<std::uint8_t> noise_view;   // per view: pure-noise flag
    double class_separation = 0.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

MultiViewDataset load_csv_views(const std::string& manifest_path);

void write_dataset(const MultiViewDataset& ds, const std::string& dir);

// Shift/scale every feature column by training-split statistics (std floored
// at 1e-8), in place; records the transform. A second call is refused.
void standardize(MultiViewDataset& ds);

MultiViewDataset make_synthetic(const SynthConfig& cfg);

// Keeps a stratified labeled_fraction of visibly labeled training rows
// observed and hides the rest. Throws MaskingError when any class would end
// up with zero labeled rows.
void mask_labels(MultiViewDataset& ds, double labeled_fraction, std::uint64_t seed);

// Value snapshot of a few samples. labels is parallel to rows for labeled
// batches and empty for unlabeled ones.
struct MultiViewBatch {
    std::vector<Matrix> views;
    std::vector<int> labels;

    std::size_t size() const { return views.empty() ? 0 : views.front().rows(); }
    ViewRefs sample(std::size_t i) const;
};

// Per-epoch batch stream. Both pools are shuffled from split streams of
// (seed, epoch); the epoch covers the pool with the most batches once, the
// other pool wraps cyclically, and a final short batch is emitted as-is.
class MinibatchStream {
  public:
    MinibatchStream(const MultiViewDataset& ds, std::vector<std::size_t> labeled_pool,
                    std::vector<std::size_t> unlabeled_pool, std::size_t n_l,
                    std::size_t n_u, std::uint64_t seed, std::uint64_t epoch);

    std::size_t num_batches() const { return num_batches_; }
    bool next(MultiViewBatch& labeled, MultiViewBatch& unlabeled);

  private:
    const MultiViewDataset* ds_;
    std::vector<std::size_t> labeled_order_;
    std::vector<std::size_t> unlabeled_order_;
    std::size_t n_l_, n_u_;
    std::size_t num_batches_ = 0;
    std::size_t cursor_ = 0;
};

// Stream over the default pools: visibly labeled / hidden training rows.
MinibatchStream minibatch_iter(const MultiViewDataset& ds, std::size_t n_l,
                               std::size_t n_u, std::uint64_t seed,
                               std::uint64_t epoch);

// Rows gathered into a batch, preserving pool order.
MultiViewBatch gather_batch(const MultiViewDataset& ds,
                            const std::vector<std::size_t>& rows, bool with_labels);

}  // namespace mvae
