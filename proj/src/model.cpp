#include "mvae/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mvae/errors.hpp"

namespace mvae {
namespace {

void check_simplex(const std::vector<double>& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + ": empty");
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw ConfigError(std::string(what) + ": negative entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
        throw ConfigError(std::string(what) + ": entries sum to " + std::to_string(s));
}

Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> dims;
    dims.push_back(in);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    std::vector<Activation> acts(dims.size() - 1, Activation::tanh);
    acts.back() = Activation::identity;
    return Mlp(dims, acts);
}

void xavier_fill(LinearLayer& layer, SeededRng& stream) {
    double limit = std::sqrt(6.0 / double(layer.in_dim() + layer.out_dim()));
    for (double& w : layer.weight.flat()) w = (2.0 * stream.uniform() - 1.0) * limit;
}

void collect_mlp_blocks(Mlp& mlp, const std::string& prefix,
                        std::vector<ParamBlock>& blocks) {
    for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
        auto& l = mlp.layers[k];
        std::string base = prefix + ".layer" + std::to_string(k);
        blocks.push_back({base + ".weight", l.weight.data(), l.weight_grad.data(),
                          l.weight.size()});
        blocks.push_back({base + ".bias", l.bias.data(), l.bias_grad.data(),
                          l.bias.size()});
    }
}

DiagGaussian split_heads(const Matrix& out) {
    std::size_t d = out.cols() / 2;
    std::vector<double> mean(d), log_var(d);
    for (std::size_t j = 0; j < d; ++j) {
        mean[j] = out(0, j);
        log_var[j] = out(0, d + j);
    }
    return DiagGaussian(std::move(mean), std::move(log_var));
}

}  // namespace

void ModelConfig::validate() const {
    if (view_dims.empty()) throw ConfigError("config: no views");
    for (std::size_t d : view_dims)
        if (d == 0) throw ConfigError("config: zero-dimensional view");
    if (latent_dim < 1) throw ConfigError("config: latent_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("config: num_classes must be >= 2");
    for (std::size_t h : encoder_hidden)
        if (h == 0) throw ConfigError("config: zero encoder hidden width");
    for (std::size_t h : decoder_hidden)
        if (h == 0) throw ConfigError("config: zero decoder hidden width");
    if (class_prior.size() != num_classes)
        throw ConfigError("config: class_prior length != num_classes");
    check_simplex(class_prior, "config: class_prior");
}

void SemiMvaeModel::zero_grad() {
    for (auto& e : encoders) e.zero_grad();
    for (auto& d : decoders) d.zero_grad();
    classifier.zero_grad();
    std::fill(rho_grad.begin(), rho_grad.end(), 0.0);
}

std::vector<ParamBlock> param_blocks(SemiMvaeModel& model) {
    std::vector<ParamBlock> blocks;
    for (std::size_t v = 0; v < model.encoders.size(); ++v)
        collect_mlp_blocks(model.encoders[v], "encoder" + std::to_string(v), blocks);
    for (std::size_t v = 0; v < model.decoders.size(); ++v)
        collect_mlp_blocks(model.decoders[v], "decoder" + std::to_string(v), blocks);
    collect_mlp_blocks(model.classifier, "classifier", blocks);
    blocks.push_back({"rho", model.rho.data(), model.rho_grad.data(), model.rho.size()});
    return blocks;
}

SemiMvaeModel init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    SemiMvaeModel model;
    model.config = config;
    std::size_t V = config.num_views();
    std::size_t K = config.num_classes;

    std::size_t concat = 0;
    for (std::size_t d : config.view_dims) concat += d;

    for (std::size_t v = 0; v < V; ++v) {
        model.encoders.push_back(
            make_mlp(config.view_dims[v] + K, config.encoder_hidden, 2 * config.latent_dim));
        model.decoders.push_back(
            make_mlp(config.latent_dim + K, config.decoder_hidden, 2 * config.view_dims[v]));
    }
    model.classifier = make_mlp(concat, config.encoder_hidden, K);
    model.rho.assign(V, 0.0);
    model.rho_grad.assign(V, 0.0);

    // Per-layer streams keyed by block name keep init independent of
    // unrelated architecture changes.
    SeededRng root(seed);
    auto fill_mlp = [&](Mlp& mlp, const std::string& prefix) {
        for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
            SeededRng stream =
                root.split(prefix + ".layer" + std::to_string(k) + ".weight");
            xavier_fill(mlp.layers[k], stream);
        }
    };
    for (std::size_t v = 0; v < V; ++v) fill_mlp(model.encoders[v], "encoder" + std::to_string(v));
    for (std::size_t v = 0; v < V; ++v) fill_mlp(model.decoders[v], "decoder" + std::to_string(v));
    fill_mlp(model.classifier, "classifier");
    return model;
}

std::vector<double> view_weights(const SemiMvaeModel& model) {
    return softmax(model.rho);
}

Matrix encoder_input(const ModelConfig& config, std::size_t v,
                     std::span<const double> x_v, std::size_t y) {
    if (v >= config.num_views())
        throw ArgumentError("view index " + std::to_string(v) + " out of range");
    if (x_v.size() != config.view_dims[v])
        throw ShapeError("view " + std::to_string(v) + ": got dim " +
                         std::to_string(x_v.size()) + ", expected " +
                         std::to_string(config.view_dims[v]));
    if (y >= config.num_classes)
        throw ArgumentError("class index " + std::to_string(y) + " out of range");
    Matrix in(1, x_v.size() + config.num_classes);
    for (std::size_t j = 0; j < x_v.size(); ++j) in(0, j) = x_v[j];
    in(0, x_v.size() + y) = 1.0;
    return in;
}

void check_views(const ModelConfig& config, const ViewRefs& X) {
    if (X.size() != config.num_views())
        throw ArgumentError("expected " + std::to_string(config.num_views()) +
                            " views, got " + std::to_string(X.size()));
    for (std::size_t v = 0; v < X.size(); ++v)
        if (X[v].size() != config.view_dims[v])
            throw ShapeError("view " + std::to_string(v) + ": got dim " +
                             std::to_string(X[v].size()) + ", expected " +
                             std::to_string(config.view_dims[v]));
}

DiagGaussian encode_view(const SemiMvaeModel& model, std::size_t v,
                         std::span<const double> x_v, std::size_t y) {
    Matrix in = encoder_input(model.config, v, x_v, y);
    return split_heads(model.encoders[v].forward_nograd(in));
}

MixturePosterior posterior(const SemiMvaeModel& model, const ViewRefs& X, std::size_t y) {
    check_views(model.config, X);
    MixturePosterior post;
    for (std::size_t v = 0; v < X.size(); ++v)
        post.components.push_back(encode_view(model, v, X[v], y));
    post.weights = view_weights(model);
    return post;
}

DiagGaussian decode_view(const SemiMvaeModel& model, std::size_t v,
                         std::span<const double> z, std::size_t y) {
    if (v >= model.config.num_views())
        throw ArgumentError("view index " + std::to_string(v) + " out of range");
    if (z.size() != model.config.latent_dim)
        throw ShapeError("decode_view: latent dim mismatch");
    if (y >= model.config.num_classes)
        throw ArgumentError("class index " + std::to_string(y) + " out of range");
    Matrix in(1, z.size() + model.config.num_classes);
    for (std::size_t j = 0; j < z.size(); ++j) in(0, j) = z[j];
    in(0, z.size() + y) = 1.0;
    return split_heads(model.decoders[v].forward_nograd(in));
}

std::vector<double> classify(const SemiMvaeModel& model, const ViewRefs& X) {
    check_views(model.config, X);
    std::size_t concat = 0;
    for (std::size_t d : model.config.view_dims) concat += d;
    Matrix in(1, concat);
    std::size_t off = 0;
    for (const auto& x : X) {
        for (std::size_t j = 0; j < x.size(); ++j) in(0, off + j) = x[j];
        off += x.size();
    }
    Matrix logits = model.classifier.forward_nograd(in);
    return softmax(logits.row(0));
}

Matrix classify_batch(const SemiMvaeModel& model, const Matrix& concat_rows) {
    Matrix logits = model.classifier.forward_nograd(concat_rows);
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto p = softmax(logits.row(r));
        for (std::size_t c = 0; c < logits.cols(); ++c) probs(r, c) = p[c];
    }
    return probs;
}

namespace {

constexpr char kMagic[4] = {'M', 'V', 'A', 'E'};
constexpr std::uint8_t kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void put_doubles(std::string& out, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, p + i, 8);
        put_u64(out, bits);
    }
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw PersistenceError("model file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return std::uint8_t(buf[pos++]);
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    void doubles(double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = u64();
            std::memcpy(p + i, &bits, 8);
        }
    }
};

}  // namespace

void save_model(const SemiMvaeModel& model, const std::string& path) {
    nlohmann::json header;
    header["view_dims"] = model.config.view_dims;
    header["latent_dim"] = model.config.latent_dim;
    header["num_classes"] = model.config.num_classes;
    header["encoder_hidden"] = model.config.encoder_hidden;
    header["decoder_hidden"] = model.config.decoder_hidden;
    std::string hdr = header.dump();

    std::string out;
    out.append(kMagic, 4);
    out.push_back(char(kFormatVersion));
    put_u64(out, hdr.size());
    out += hdr;

    auto& mut = const_cast<SemiMvaeModel&>(model);
    std::uint64_t total = 0;
    for (const auto& block : param_blocks(mut)) {
        put_doubles(out, block.data, block.size);
        total += block.size;
    }
    put_doubles(out, model.config.class_prior.data(), model.config.class_prior.size());
    total += model.config.class_prior.size();
    put_u64(out, total);

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw PersistenceError("cannot open " + tmp + " for writing");
        f.write(out.data(), std::streamsize(out.size()));
        if (!f) throw PersistenceError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw PersistenceError("cannot move " + tmp + " into place");
}

SemiMvaeModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw PersistenceError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw PersistenceError("bad magic bytes: not a model file");
    r.pos = 4;
    if (r.u8() != kFormatVersion) throw PersistenceError("unsupported model format version");

    std::uint64_t hdr_len = r.u64();
    r.need(hdr_len);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(buf.substr(r.pos, hdr_len));
    } catch (const nlohmann::json::exception& e) {
        throw PersistenceError(std::string("bad model header: ") + e.what());
    }
    r.pos += hdr_len;

    ModelConfig config;
    try {
        header.at("view_dims").get_to(config.view_dims);
        header.at("latent_dim").get_to(config.latent_dim);
        header.at("num_classes").get_to(config.num_classes);
        header.at("encoder_hidden").get_to(config.encoder_hidden);
        header.at("decoder_hidden").get_to(config.decoder_hidden);
    } catch (const nlohmann::json::exception& e) {
        throw PersistenceError(std::string("bad model header: ") + e.what());
    }
    // placeholder prior; the real one is stored as a parameter block below
    config.class_prior.assign(config.num_classes, 1.0 / double(config.num_classes));

    SemiMvaeModel model = init_model(config, 0);
    std::uint64_t total = 0;
    for (auto& block : param_blocks(model)) {
        r.doubles(block.data, block.size);
        total += block.size;
    }
    r.doubles(model.config.class_prior.data(), model.config.class_prior.size());
    total += model.config.class_prior.size();
    if (r.u64() != total) throw PersistenceError("model file trailer mismatch");
    if (r.pos != buf.size()) throw PersistenceError("trailing bytes after model data");
    model.config.validate();
    return model;
}

}  // namespace mvae
