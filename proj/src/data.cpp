#include "mvae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvae/errors.hpp"

namespace fs = std::filesystem;

namespace mvae {
namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) cells.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

double parse_double(const std::string& cell, const std::string& file, std::size_t line) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || p != cell.data() + cell.size())
        throw IngestionError(file + ":" + std::to_string(line) + ": non-numeric cell '" +
                             cell + "'");
    return v;
}

long parse_int(const std::string& cell, const std::string& file, std::size_t line) {
    long v = 0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || p != cell.data() + cell.size())
        throw IngestionError(file + ":" + std::to_string(line) + ": non-integer cell '" +
                             cell + "'");
    return v;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestionError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

// header row plus one sample per line
std::pair<std::vector<std::string>, Matrix> read_view_csv(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw IngestionError(path + ": empty view file");
    auto header = split_csv_line(lines[0]);
    if (header.empty()) throw IngestionError(path + ": empty header");
    Matrix m(lines.size() - 1, header.size());
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto cells = split_csv_line(lines[r]);
        if (cells.size() != header.size())
            throw IngestionError(path + ":" + std::to_string(r + 1) + ": expected " +
                                 std::to_string(header.size()) + " cells, got " +
                                 std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c)
            m(r - 1, c) = parse_double(cells[c], path, r + 1);
    }
    return {header, m};
}

void format_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

}  // namespace

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "validation") return Split::validation;
    if (name == "test") return Split::test;
    throw IngestionError("unknown split tag '" + name + "'");
}

std::vector<std::size_t> MultiViewDataset::split_indices(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) idx.push_back(i);
    return idx;
}

std::vector<std::size_t> MultiViewDataset::train_labeled_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == Split::train && observed[i]) idx.push_back(i);
    return idx;
}

std::vector<std::size_t> MultiViewDataset::train_unlabeled_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == Split::train && !observed[i]) idx.push_back(i);
    return idx;
}

void MultiViewDataset::validate() const {
    if (views.size() != view_specs.size())
        throw IngestionError("dataset: view count mismatch");
    if (views.empty()) throw IngestionError("dataset: no views");
    std::size_t n = labels.size();
    std::set<std::string> names;
    for (std::size_t v = 0; v < views.size(); ++v) {
        if (!names.insert(view_specs[v].name).second)
            throw IngestionError("dataset: duplicate view name '" + view_specs[v].name + "'");
        if (views[v].rows() != n)
            throw IngestionError("dataset: view '" + view_specs[v].name + "' has " +
                                 std::to_string(views[v].rows()) + " rows, labels have " +
                                 std::to_string(n));
        if (views[v].cols() != view_specs[v].dim)
            throw IngestionError("dataset: view '" + view_specs[v].name + "' dim mismatch");
    }
    if (observed.size() != n || splits.size() != n)
        throw IngestionError("dataset: per-row arrays misaligned");
    if (num_classes < 1) throw IngestionError("dataset: num_classes < 1");
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < -1 || labels[i] >= int(num_classes))
            throw IngestionError("dataset: row " + std::to_string(i) + " label " +
                                 std::to_string(labels[i]) + " out of range");
        if (observed[i] && labels[i] < 0)
            throw IngestionError("dataset: row " + std::to_string(i) +
                                 " observed without a label");
        if (splits[i] != Split::train && labels[i] < 0)
            throw IngestionError("dataset: row " + std::to_string(i) +
                                 " in evaluation split lacks a true label");
    }
}

void SynthConfig::validate() const {
    if (num_samples < 1) throw ConfigError("synth: num_samples must be >= 1");
    if (num_classes < 2) throw ConfigError("synth: num_classes must be >= 2");
    if (latent_dim < 1) throw ConfigError("synth: latent_dim must be >= 1");
    if (view_dims.empty()) throw ConfigError("synth: no views");
    for (std::size_t d : view_dims)
        if (d == 0) throw ConfigError("synth: zero-dimensional view");
    if (noise_scale.size() != view_dims.size())
        throw ConfigError("synth: noise_scale must have one entry per view");
    for (double s : noise_scale)
        if (!(s > 0.0)) throw ConfigError("synth: noise_scale must be > 0");
    if (noise_view.size() != view_dims.size())
        throw ConfigError("synth: noise_view must have one flag per view");
    if (class_separation < 0.0) throw ConfigError("synth: negative class_separation");
}

MultiViewDataset load_csv_views(const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw IngestionError("cannot open manifest " + manifest_path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(manifest_path + ": " + e.what());
    }

    static const std::set<std::string> known = {"num_classes", "views", "labels", "splits"};
    for (auto it = manifest.begin(); it != manifest.end(); ++it)
        if (!known.count(it.key()))
            throw IngestionError(manifest_path + ": unknown manifest key '" + it.key() + "'");
    for (const char* req : {"num_classes", "views", "labels"})
        if (!manifest.contains(req))
            throw IngestionError(manifest_path + ": missing manifest key '" +
                                 std::string(req) + "'");

    fs::path base = fs::path(manifest_path).parent_path();
    MultiViewDataset ds;
    try {
        ds.num_classes = manifest.at("num_classes").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(manifest_path + ": bad num_classes: " + e.what());
    }

    if (!manifest.at("views").is_array() || manifest.at("views").empty())
        throw IngestionError(manifest_path + ": views must be a nonempty array");

    std::vector<std::string> view_files;
    for (const auto& entry : manifest.at("views")) {
        if (!entry.is_object() || !entry.contains("name") || !entry.contains("path") ||
            entry.size() != 2)
            throw IngestionError(manifest_path +
                                 ": each view needs exactly {name, path}");
        std::string name = entry.at("name").get<std::string>();
        std::string path = (base / entry.at("path").get<std::string>()).string();
        auto [header, m] = read_view_csv(path);
        ds.view_specs.push_back({name, header.size()});
        ds.views.push_back(std::move(m));
        view_files.push_back(path);
    }

    for (std::size_t v = 1; v < ds.views.size(); ++v)
        if (ds.views[v].rows() != ds.views[0].rows())
            throw IngestionError(view_files[0] + " has " +
                                 std::to_string(ds.views[0].rows()) + " rows but " +
                                 view_files[v] + " has " +
                                 std::to_string(ds.views[v].rows()));
    std::size_t n = ds.views[0].rows();

    std::string label_path = (base / manifest.at("labels").get<std::string>()).string();
    auto label_lines = read_lines(label_path);
    if (label_lines.size() != n + 1)
        throw IngestionError(view_files[0] + " has " + std::to_string(n) + " rows but " +
                             label_path + " has " + std::to_string(label_lines.size() ? label_lines.size() - 1 : 0));
    for (std::size_t r = 1; r < label_lines.size(); ++r) {
        long y = parse_int(trim(label_lines[r]), label_path, r + 1);
        if (y < -1 || y >= long(ds.num_classes))
            throw IngestionError(label_path + ":" + std::to_string(r + 1) + ": label " +
                                 std::to_string(y) + " out of range for K=" +
                                 std::to_string(ds.num_classes));
        ds.labels.push_back(int(y));
        ds.observed.push_back(y >= 0);
    }

    if (manifest.contains("splits")) {
        std::string split_path = (base / manifest.at("splits").get<std::string>()).string();
        auto split_lines = read_lines(split_path);
        if (split_lines.size() != n + 1)
            throw IngestionError(view_files[0] + " has " + std::to_string(n) +
                                 " rows but " + split_path + " has " +
                                 std::to_string(split_lines.size() ? split_lines.size() - 1 : 0));
        for (std::size_t r = 1; r < split_lines.size(); ++r) {
            try {
                ds.splits.push_back(split_from_name(trim(split_lines[r])));
            } catch (const IngestionError& e) {
                throw IngestionError(split_path + ":" + std::to_string(r + 1) + ": " +
                                     e.what());
            }
        }
    } else {
        ds.splits.assign(n, Split::train);
    }

    ds.validate();
    return ds;
}

void write_dataset(const MultiViewDataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["num_classes"] = ds.num_classes;
    manifest["views"] = nlohmann::json::array();

    for (std::size_t v = 0; v < ds.num_views(); ++v) {
        std::string fname = ds.view_specs[v].name + ".csv";
        manifest["views"].push_back({{"name", ds.view_specs[v].name}, {"path", fname}});
        std::string out;
        for (std::size_t c = 0; c < ds.view_specs[v].dim; ++c) {
            if (c) out += ',';
            out += ds.view_specs[v].name + "_" + std::to_string(c);
        }
        out += '\n';
        for (std::size_t r = 0; r < ds.views[v].rows(); ++r) {
            for (std::size_t c = 0; c < ds.views[v].cols(); ++c) {
                if (c) out += ',';
                format_double(out, ds.views[v](r, c));
            }
            out += '\n';
        }
        std::ofstream f(fs::path(dir) / fname, std::ios::trunc);
        if (!f) throw IngestionError("cannot write " + fname);
        f << out;
    }

    {
        // hidden labels are exported as -1 so masks survive round trips
        std::ofstream f(fs::path(dir) / "labels.csv", std::ios::trunc);
        if (!f) throw IngestionError("cannot write labels.csv");
        f << "label\n";
        for (std::size_t i = 0; i < ds.num_samples(); ++i)
            f << (ds.observed[i] ? ds.labels[i] : -1) << '\n';
        manifest["labels"] = "labels.csv";
    }
    {
        std::ofstream f(fs::path(dir) / "splits.csv", std::ios::trunc);
        if (!f) throw IngestionError("cannot write splits.csv");
        f << "split\n";
        for (std::size_t i = 0; i < ds.num_samples(); ++i)
            f << split_name(ds.splits[i]) << '\n';
        manifest["splits"] = "splits.csv";
    }
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!f) throw IngestionError("cannot write manifest.json");
    f << manifest.dump(2) << '\n';
}

void standardize(MultiViewDataset& ds) {
    if (ds.standardized) throw StateError("dataset is already standardized");
    auto train = ds.split_indices(Split::train);
    if (train.empty()) throw ArgumentError("standardize: empty training split");

    ds.transform.mean.assign(ds.num_views(), {});
    ds.transform.std_dev.assign(ds.num_views(), {});
    for (std::size_t v = 0; v < ds.num_views(); ++v) {
        std::size_t d = ds.views[v].cols();
        std::vector<double> mean(d, 0.0), sd(d, 0.0);
        for (std::size_t i : train)
            for (std::size_t c = 0; c < d; ++c) mean[c] += ds.views[v](i, c);
        for (double& m : mean) m /= double(train.size());
        for (std::size_t i : train)
            for (std::size_t c = 0; c < d; ++c) {
                double dv = ds.views[v](i, c) - mean[c];
                sd[c] += dv * dv;
            }
        for (double& s : sd) s = std::max(std::sqrt(s / double(train.size())), 1e-8);
        for (std::size_t i = 0; i < ds.num_samples(); ++i)
            for (std::size_t c = 0; c < d; ++c)
                ds.views[v](i, c) = (ds.views[v](i, c) - mean[c]) / sd[c];
        ds.transform.mean[v] = std::move(mean);
        ds.transform.std_dev[v] = std::move(sd);
    }
    ds.standardized = true;
}

MultiViewDataset make_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    std::size_t N = cfg.num_samples, K = cfg.num_classes, d = cfg.latent_dim;
    std::size_t V = cfg.view_dims.size();

    SeededRng root(cfg.seed);
    SeededRng maps_rng = root.split("maps");
    SeededRng label_rng = root.split("labels");
    SeededRng latent_rng = root.split("latent");
    SeededRng noise_rng = root.split("noise");
    SeededRng split_rng = root.split("splits");

    // fixed random view maps: x_v = tanh(A_v z + C_v onehot(y)) + noise * eps
    std::vector<Matrix> A(V), C(V);
    for (std::size_t v = 0; v < V; ++v) {
        A[v] = Matrix(cfg.view_dims[v], d);
        C[v] = Matrix(cfg.view_dims[v], K);
        double scale = 1.0 / std::sqrt(double(d));
        for (double& w : A[v].flat()) w = maps_rng.standard_normal() * scale;
        for (double& w : C[v].flat()) w = maps_rng.standard_normal();
    }

    MultiViewDataset ds;
    ds.num_classes = K;
    for (std::size_t v = 0; v < V; ++v) {
        ds.view_specs.push_back({"view" + std::to_string(v), cfg.view_dims[v]});
        ds.views.emplace_back(N, cfg.view_dims[v]);
    }

    std::vector<double> z(d);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t y = label_rng.uniform_int(K);
        ds.labels.push_back(int(y));
        ds.observed.push_back(1);
        for (std::size_t j = 0; j < d; ++j) {
            double anchor = (j == y % d) ? 1.0 : 0.0;
            z[j] = cfg.class_separation * anchor + latent_rng.standard_normal();
        }
        for (std::size_t v = 0; v < V; ++v) {
            auto row = ds.views[v].row(i);
            if (cfg.noise_view[v]) {
                for (double& x : row) x = noise_rng.standard_normal();
                continue;
            }
            for (std::size_t r = 0; r < cfg.view_dims[v]; ++r) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += A[v](r, j) * z[j];
                acc += C[v](r, y);
                row[r] = std::tanh(acc) + cfg.noise_scale[v] * noise_rng.standard_normal();
            }
        }
    }

    auto order = shuffled_indices(N, split_rng);
    std::size_t n_train = std::size_t(std::llround(0.6 * double(N)));
    std::size_t n_val = std::size_t(std::llround(0.2 * double(N)));
    ds.splits.assign(N, Split::train);
    for (std::size_t p = 0; p < N; ++p) {
        if (p < n_train)
            ds.splits[order[p]] = Split::train;
        else if (p < n_train + n_val)
            ds.splits[order[p]] = Split::validation;
        else
            ds.splits[order[p]] = Split::test;
    }

    ds.validate();
    return ds;
}

void mask_labels(MultiViewDataset& ds, double labeled_fraction, std::uint64_t seed) {
    if (!(labeled_fraction > 0.0) || labeled_fraction > 1.0)
        throw ArgumentError("labeled_fraction must be in (0, 1]");

    std::vector<std::vector<std::size_t>> per_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.num_samples(); ++i)
        if (ds.splits[i] == Split::train && ds.observed[i])
            per_class[std::size_t(ds.labels[i])].push_back(i);

    SeededRng root(seed);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        std::size_t n_c = per_class[c].size();
        std::size_t keep = std::size_t(std::llround(labeled_fraction * double(n_c)));
        if (keep == 0)
            throw MaskingError("class " + std::to_string(c) + " would keep zero of " +
                               std::to_string(n_c) + " labeled rows at fraction " +
                               std::to_string(labeled_fraction));
        SeededRng stream = root.split(c);
        auto perm = shuffled_indices(n_c, stream);
        for (std::size_t p = keep; p < n_c; ++p) ds.observed[per_class[c][perm[p]]] = 0;
    }
}

ViewRefs MultiViewBatch::sample(std::size_t i) const {
    ViewRefs refs;
    refs.reserve(views.size());
    for (const auto& m : views) refs.push_back(m.row(i));
    return refs;
}

MultiViewBatch gather_batch(const MultiViewDataset& ds,
                            const std::vector<std::size_t>& rows, bool with_labels) {
    MultiViewBatch batch;
    for (std::size_t v = 0; v < ds.num_views(); ++v) {
        Matrix m(rows.size(), ds.views[v].cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto src = ds.views[v].row(rows[i]);
            std::copy(src.begin(), src.end(), m.row(i).begin());
        }
        batch.views.push_back(std::move(m));
    }
    if (with_labels) {
        for (std::size_t r : rows) {
            // hidden labels must never reach a training batch
            if (!ds.observed[r])
                throw StateError("labeled batch requested for a hidden-label row");
            batch.labels.push_back(ds.labels[r]);
        }
    }
    return batch;
}

MinibatchStream::MinibatchStream(const MultiViewDataset& ds,
                                 std::vector<std::size_t> labeled_pool,
                                 std::vector<std::size_t> unlabeled_pool,
                                 std::size_t n_l, std::size_t n_u, std::uint64_t seed,
                                 std::uint64_t epoch)
    : ds_(&ds), n_l_(n_l), n_u_(n_u) {
    if (labeled_pool.empty() && n_l > 0)
        throw IterationError("labeled batch size " + std::to_string(n_l) +
                             " requested but the labeled pool is empty");
    if (!labeled_pool.empty() && n_l == 0)
        throw IterationError("labeled pool present but labeled batch size is 0");

    SeededRng root(seed);
    SeededRng epoch_rng = root.split(epoch);
    SeededRng ls = epoch_rng.split("labeled");
    SeededRng us = epoch_rng.split("unlabeled");

    auto permute = [](std::vector<std::size_t> pool, SeededRng& rng) {
        auto perm = shuffled_indices(pool.size(), rng);
        std::vector<std::size_t> out(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) out[i] = pool[perm[i]];
        return out;
    };
    labeled_order_ = permute(std::move(labeled_pool), ls);
    unlabeled_order_ = permute(std::move(unlabeled_pool), us);

    auto batches = [](std::size_t pool, std::size_t per) {
        return (pool == 0 || per == 0) ? std::size_t{0} : (pool + per - 1) / per;
    };
    num_batches_ = std::max(batches(labeled_order_.size(), n_l_),
                            batches(unlabeled_order_.size(), n_u_));
}

bool MinibatchStream::next(MultiViewBatch& labeled, MultiViewBatch& unlabeled) {
    if (cursor_ >= num_batches_) return false;

    // The pool driving the epoch is chunked (short final batch); the other
    // pool wraps so each batch stays full.
    auto take = [this](const std::vector<std::size_t>& order, std::size_t per,
                       bool driving) {
        std::vector<std::size_t> rows;
        if (order.empty() || per == 0) return rows;
        std::size_t begin = cursor_ * per;
        std::size_t end = begin + per;
        if (driving) end = std::min(end, order.size());
        for (std::size_t p = begin; p < end; ++p) rows.push_back(order[p % order.size()]);
        return rows;
    };
    auto batches = [](std::size_t pool, std::size_t per) {
        return (pool == 0 || per == 0) ? std::size_t{0} : (pool + per - 1) / per;
    };
    bool labeled_drives = batches(labeled_order_.size(), n_l_) == num_batches_;
    bool unlabeled_drives = batches(unlabeled_order_.size(), n_u_) == num_batches_;

    labeled = gather_batch(*ds_, take(labeled_order_, n_l_, labeled_drives), true);
    unlabeled = gather_batch(*ds_, take(unlabeled_order_, n_u_, unlabeled_drives), false);
    ++cursor_;
    return true;
}

MinibatchStream minibatch_iter(const MultiViewDataset& ds, std::size_t n_l,
                               std::size_t n_u, std::uint64_t seed,
                               std::uint64_t epoch) {
    return MinibatchStream(ds, ds.train_labeled_indices(), ds.train_unlabeled_indices(),
                           n_l, n_u, seed, epoch);
}

}  // namespace mvae
