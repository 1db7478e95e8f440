#include "gsconv/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "gsconv/io.hpp"
#include "gsconv/rng.hpp"

namespace gsconv {

void TrainConfig::validate() const {
    if (base_lr <= 0.0) throw ConfigError("base_lr must be positive");
    if (power <= 0.0) throw ConfigError("power must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (metrics_interval < 1) throw ConfigError("metrics_interval must be >= 1");
}

VolumeTensor softmax_channels(const VolumeTensor& logits) {
    const Shape5& dm = logits.dims();
    VolumeTensor probs(dm);
    const index_t rows = dm.numel() / dm.c;
    const index_t c = dm.c;
    const double* src = logits.data();
    double* dst = probs.data();
#pragma omp parallel for schedule(static)
    for (index_t r = 0; r < rows; ++r) {
        const double* in = src + r * c;
        double* out = dst + r * c;
        double mx = in[0];
        for (index_t k = 1; k < c; ++k) mx = std::max(mx, in[k]);
        double norm = 0.0;
        for (index_t k = 0; k < c; ++k) {
            out[k] = std::exp(in[k] - mx);
            norm += out[k];
        }
        const double inv = 1.0 / norm;
        for (index_t k = 0; k < c; ++k) out[k] *= inv;
    }
    return probs;
}

VolumeTensor softmax_backward(const VolumeTensor& probs, const VolumeTensor& grad_probs) {
    if (!(probs.dims() == grad_probs.dims()))
        throw ShapeError("softmax_backward: dims mismatch");
    const Shape5& dm = probs.dims();
    VolumeTensor grad(dm);
    const index_t rows = dm.numel() / dm.c;
    const index_t c = dm.c;
    const double* p = probs.data();
    const double* g = grad_probs.data();
    double* out = grad.data();
#pragma omp parallel for schedule(static)
    for (index_t r = 0; r < rows; ++r) {
        const double* pr = p + r * c;
        const double* gr = g + r * c;
        double dot = 0.0;
        for (index_t k = 0; k < c; ++k) dot += pr[k] * gr[k];
        double* o = out + r * c;
        for (index_t k = 0; k < c; ++k) o[k] = pr[k] * (gr[k] - dot);
    }
    return grad;
}

DiceLossResult dice_loss(const VolumeTensor& probs, const VolumeTensor& onehot_target,
                         double epsilon) {
    if (!(probs.dims() == onehot_target.dims()))
        throw ShapeError("dice_loss: probs dims " + probs.dims().str() + " vs target " +
                         onehot_target.dims().str());
    const Shape5& dm = probs.dims();
    const index_t c = dm.c;
    if (c < 2) throw ShapeError("dice_loss needs >= 2 classes");
    const index_t rows = dm.numel() / c;
    const index_t fg = c - 1;

    std::vector<double> inter(static_cast<std::size_t>(c), 0.0);  // sum p*g
    std::vector<double> psq(static_cast<std::size_t>(c), 0.0);
    std::vector<double> gsq(static_cast<std::size_t>(c), 0.0);
    const double* p = probs.data();
    const double* g = onehot_target.data();
    for (index_t r = 0; r < rows; ++r, p += c, g += c)
        for (index_t k = 1; k < c; ++k) {
            inter[static_cast<std::size_t>(k)] += p[k] * g[k];
            psq[static_cast<std::size_t>(k)] += p[k] * p[k];
            gsq[static_cast<std::size_t>(k)] += g[k] * g[k];
        }

    DiceLossResult result;
    result.grad_probs = VolumeTensor(dm);
    double dice_sum = 0.0;
    std::vector<double> num(static_cast<std::size_t>(c), 0.0);
    std::vector<double> den(static_cast<std::size_t>(c), 1.0);
    for (index_t k = 1; k < c; ++k) {
        num[static_cast<std::size_t>(k)] = 2.0 * inter[static_cast<std::size_t>(k)];
        den[static_cast<std::size_t>(k)] =
            psq[static_cast<std::size_t>(k)] + gsq[static_cast<std::size_t>(k)] + epsilon;
        dice_sum += num[static_cast<std::size_t>(k)] / den[static_cast<std::size_t>(k)];
    }
    result.loss = 1.0 - dice_sum / static_cast<double>(fg);

    // d(dice_k)/d(p_v) = (2 g_v den - num 2 p_v) / den^2, loss takes -1/fg of it.
    const double scale = -1.0 / static_cast<double>(fg);
    p = probs.data();
    g = onehot_target.data();
    double* gp = result.grad_probs.data();
    for (index_t r = 0; r < rows; ++r, p += c, g += c, gp += c)
        for (index_t k = 1; k < c; ++k) {
            const double d = den[static_cast<std::size_t>(k)];
            gp[k] = scale * (2.0 * g[k] * d - num[static_cast<std::size_t>(k)] * 2.0 * p[k]) /
                    (d * d);
        }
    return result;
}

double poly_lr(index_t iter, const TrainConfig& cfg) {
    if (iter < 0 || iter > cfg.max_iters)
        throw BoundsError("poly_lr iteration " + std::to_string(iter) + " outside [0, " +
                          std::to_string(cfg.max_iters) + "]");
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(cfg.max_iters);
    return cfg.base_lr * std::pow(frac, cfg.power);
}

void SgdOptimizer::step(const std::vector<ParamBlock*>& params, double lr, double momentum) {
    if (velocity_.empty()) {
        velocity_.reserve(params.size());
        for (const ParamBlock* block : params) velocity_.emplace_back(block->value.size(), 0.0);
    }
    if (velocity_.size() != params.size())
        throw StateError("optimizer bound to a different parameter set");
    for (std::size_t b = 0; b < params.size(); ++b) {
        ParamBlock* block = params[b];
        std::vector<double>& vel = velocity_[b];
        if (vel.size() != block->value.size())
            throw StateError("parameter '" + block->name + "' changed size mid-training");
        for (std::size_t i = 0; i < vel.size(); ++i) {
            const double grad = block->grad[i];
            if (!std::isfinite(grad))
                throw StateError("non-finite gradient in parameter '" + block->name +
                                 "' at element " + std::to_string(i));
            vel[i] = momentum * vel[i] + grad;
            block->value[i] -= lr * vel[i];
        }
    }
}

MemoryDataset::MemoryDataset(std::vector<VolumeTensor> volumes, std::vector<VolumeTensor> labels,
                             index_t num_classes)
    : volumes_(std::move(volumes)), labels_(std::move(labels)), num_classes_(num_classes) {
    if (volumes_.size() != labels_.size())
        throw ConfigError("dataset volume/label count mismatch");
    if (volumes_.empty()) throw ConfigError("dataset is empty");
    for (std::size_t i = 1; i < volumes_.size(); ++i)
        if (!(volumes_[i].dims() == volumes_[0].dims()))
            throw ShapeError("dataset volumes have inconsistent dims");
}

VolumeTensor one_hot(const VolumeTensor& label, index_t num_classes) {
    const Shape5& dm = label.dims();
    if (dm.c != 1) throw ShapeError("one_hot expects a single-channel label volume");
    Shape5 out_dims = dm;
    out_dims.c = num_classes;
    VolumeTensor out(out_dims);
    const index_t rows = dm.numel();
    for (index_t r = 0; r < rows; ++r) {
        const double v = label[r];
        const auto k = static_cast<index_t>(v);
        if (static_cast<double>(k) != v || k < 0 || k >= num_classes)
            throw ConfigError("label value " + std::to_string(v) + " not an integer in [0, " +
                              std::to_string(num_classes) + ")");
        out[r * num_classes + k] = 1.0;
    }
    return out;
}

namespace {

// Argmax class ids per voxel of a (N,D,H,W,K) tensor.
std::vector<index_t> argmax_channels(const VolumeTensor& t) {
    const Shape5& dm = t.dims();
    const index_t rows = dm.numel() / dm.c;
    std::vector<index_t> ids(static_cast<std::size_t>(rows));
    const double* p = t.data();
    for (index_t r = 0; r < rows; ++r, p += dm.c) {
        index_t best = 0;
        for (index_t k = 1; k < dm.c; ++k)
            if (p[k] > p[best]) best = k;
        ids[static_cast<std::size_t>(r)] = best;
    }
    return ids;
}

// Per-sample hard Dice per foreground class; empty-in-both counts as 1.
void accumulate_hard_dice(const std::vector<index_t>& pred, const VolumeTensor& label,
                          index_t num_classes, index_t batch, index_t voxels_per_sample,
                          std::vector<double>& dice_sums, index_t& samples) {
    for (index_t n = 0; n < batch; ++n) {
        for (index_t k = 1; k < num_classes; ++k) {
            index_t inter = 0, p_count = 0, g_count = 0;
            for (index_t v = 0; v < voxels_per_sample; ++v) {
                const index_t idx = n * voxels_per_sample + v;
                const bool in_p = pred[static_cast<std::size_t>(idx)] == k;
                const bool in_g = static_cast<index_t>(label[idx]) == k;
                if (in_p && in_g) ++inter;
                if (in_p) ++p_count;
                if (in_g) ++g_count;
            }
            const double d = (p_count + g_count == 0)
                                 ? 1.0
                                 : 2.0 * static_cast<double>(inter) /
                                       static_cast<double>(p_count + g_count);
            dice_sums[static_cast<std::size_t>(k - 1)] += d;
        }
        ++samples;
    }
}

VolumeTensor assemble_batch(const Dataset& data, const std::vector<index_t>& indices,
                            bool labels) {
    const VolumeTensor& first = labels ? data.label(indices[0]) : data.volume(indices[0]);
    Shape5 dims = first.dims();
    dims.n = static_cast<index_t>(indices.size());
    VolumeTensor out(dims);
    const index_t per_sample = first.dims().per_sample();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const VolumeTensor& t = labels ? data.label(indices[i]) : data.volume(indices[i]);
        if (t.dims().per_sample() != per_sample)
            throw ShapeError("dataset item dims inconsistent");
        std::memcpy(out.data() + static_cast<index_t>(i) * per_sample, t.data(),
                    static_cast<std::size_t>(per_sample) * sizeof(double));
    }
    return out;
}

}  // namespace

std::vector<MetricsRow> train(Network& net, const Dataset& data, const TrainConfig& cfg,
                              std::ostream* csv,
                              const std::function<void(const MetricsRow&)>& on_row) {
    cfg.validate();
    if (data.size() < 1) throw ConfigError("cannot train on an empty dataset");
    const index_t num_classes = data.num_classes();

    Rng rng(cfg.seed);
    SgdOptimizer opt;
    std::vector<ParamBlock*> params = net.params();
    std::vector<MetricsRow> rows;
    if (csv) write_metrics_csv_header(*csv, num_classes);

    for (index_t iter = 0; iter < cfg.max_iters; ++iter) {
        std::vector<index_t> indices(static_cast<std::size_t>(cfg.batch_size));
        for (auto& idx : indices) idx = rng.uniform_int(0, data.size() - 1);

        const VolumeTensor batch = assemble_batch(data, indices, false);
        const VolumeTensor label_batch = assemble_batch(data, indices, true);
        const VolumeTensor target = one_hot(label_batch, num_classes);

        net.zero_grads();
        const VolumeTensor logits = net.forward(batch, true);
        const VolumeTensor probs = softmax_channels(logits);
        DiceLossResult loss = dice_loss(probs, target);
        const VolumeTensor grad_logits = softmax_backward(probs, loss.grad_probs);
        net.backward(grad_logits);

        const double lr = poly_lr(iter, cfg);
        opt.step(params, lr, cfg.momentum);

        const bool emit =
            iter == 0 || (iter + 1) % cfg.metrics_interval == 0 || iter + 1 == cfg.max_iters;
        if (emit) {
            MetricsRow row;
            row.iteration = iter + 1;
            row.loss = loss.loss;
            row.lr = lr;
            std::vector<double> dice_sums(static_cast<std::size_t>(num_classes - 1), 0.0);
            index_t samples = 0;
            accumulate_hard_dice(argmax_channels(probs), label_batch, num_classes, cfg.batch_size,
                                 label_batch.dims().per_sample(), dice_sums, samples);
            row.dice.resize(dice_sums.size());
            double mdice = 0.0;
            for (std::size_t k = 0; k < dice_sums.size(); ++k) {
                row.dice[k] = dice_sums[k] / static_cast<double>(samples);
                mdice += row.dice[k];
            }
            row.mdice = mdice / static_cast<double>(dice_sums.size());
            if (csv) write_metrics_csv_row(*csv, row);
            if (on_row) on_row(row);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<double> dice_per_class(const VolumeTensor& pred_labels, const VolumeTensor& gt_labels,
                                   index_t num_classes) {
    if (!(pred_labels.dims() == gt_labels.dims()))
        throw ShapeError("dice_per_class: dims mismatch");
    std::vector<double> out(static_cast<std::size_t>(num_classes - 1), 0.0);
    for (index_t k = 1; k < num_classes; ++k) {
        index_t inter = 0, p_count = 0, g_count = 0;
        for (index_t i = 0; i < pred_labels.size(); ++i) {
            const bool in_p = static_cast<index_t>(pred_labels[i]) == k;
            const bool in_g = static_cast<index_t>(gt_labels[i]) == k;
            if (in_p && in_g) ++inter;
            if (in_p) ++p_count;
            if (in_g) ++g_count;
        }
        out[static_cast<std::size_t>(k - 1)] =
            (p_count + g_count == 0)
                ? 1.0
                : 2.0 * static_cast<double>(inter) / static_cast<double>(p_count + g_count);
    }
    return out;
}

EvalResult evaluate(Network& net, const Dataset& data) {
    if (data.size() < 1) throw ConfigError("cannot evaluate an empty dataset");
    const index_t num_classes = data.num_classes();
    std::vector<double> dice_sums(static_cast<std::size_t>(num_classes - 1), 0.0);
    index_t samples = 0;
    for (index_t i = 0; i < data.size(); ++i) {
        const VolumeTensor& vol = data.volume(i);
        const VolumeTensor logits = net.forward(vol, false);
        accumulate_hard_dice(argmax_channels(logits), data.label(i), num_classes, vol.dims().n,
                             data.label(i).dims().per_sample(), dice_sums, samples);
    }
    EvalResult result;
    result.per_class.resize(dice_sums.size());
    double mdice = 0.0;
    for (std::size_t k = 0; k < dice_sums.size(); ++k) {
        result.per_class[k] = dice_sums[k] / static_cast<double>(samples);
        mdice += result.per_class[k];
    }
    result.mdice = mdice / static_cast<double>(dice_sums.size());
    return result;
}

VolumeTensor normalize_volume(const VolumeTensor& volume, const std::vector<bool>& foreground) {
    if (foreground.size() != static_cast<std::size_t>(volume.size()))
        throw ShapeError("foreground mask size does not match volume");
    double sum = 0.0, count = 0.0;
    for (index_t i = 0; i < volume.size(); ++i)
        if (foreground[static_cast<std::size_t>(i)]) {
            sum += volume[i];
            count += 1.0;
        }

    double mu = 0.0, sigma = 0.0;
    bool fallback = count == 0.0;
    if (!fallback) {
        mu = sum / count;
        double sq = 0.0;
        for (index_t i = 0; i < volume.size(); ++i)
            if (foreground[static_cast<std::size_t>(i)]) {
                const double d = volume[i] - mu;
                sq += d * d;
            }
        sigma = std::sqrt(sq / count);
        if (sigma < 1e-12) fallback = true;
    }
    if (fallback) {
        std::cerr << "warning: foreground statistics degenerate, using whole-volume statistics\n";
        mu = mean(volume);
        double sq = 0.0;
        for (index_t i = 0; i < volume.size(); ++i) {
            const double d = volume[i] - mu;
            sq += d * d;
        }
        sigma = std::sqrt(sq / static_cast<double>(volume.size()));
        if (sigma < 1e-12) sigma = 1.0;
    }

    VolumeTensor out(volume.dims());
    const double inv = 1.0 / sigma;
    for (index_t i = 0; i < volume.size(); ++i) out[i] = (volume[i] - mu) * inv;
    return out;
}

void write_metrics_csv_header(std::ostream& os, index_t num_classes) {
    os << "iter,loss";
    for (index_t k = 1; k < num_classes; ++k) os << ",dice_class" << k;
    os << ",mDice,lr\n";
}

void write_metrics_csv_row(std::ostream& os, const MetricsRow& row) {
    os << row.iteration << ',' << row.loss;
    for (const double d : row.dice) os << ',' << d;
    os << ',' << row.mdice << ',' << row.lr << '\n';
    os.flush();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kCkptMagic[8] = {'G', 'S', 'C', 'K', 'P', 'T', '1', '\0'};

}  // namespace

void save_checkpoint(const std::string& path, Network& net) {
    auto named = net.named_params();
    nlohmann::json header;
    header["spec"] = net.spec().to_json();
    const Shape5& in = net.input_dims();
    header["input_dims"] = {in.n, in.d, in.h, in.w, in.c};
    header["params"] = nlohmann::json::array();
    for (const auto& [name, block] : named) {
        nlohmann::json p;
        p["name"] = name;
        p["size"] = block->value.size();
        header["params"].push_back(p);
    }
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(kCkptMagic, sizeof(kCkptMagic));
    const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

    // Parameter payloads ride as GSV1 frames in directory order.
    for (const auto& [name, block] : named) {
        VolumeTensor t(Shape5{1, 1, 1, 1, static_cast<index_t>(block->value.size())});
        std::copy(block->value.begin(), block->value.end(), t.data());
        write_gsv(out, t, GsvDtype::F64);
    }
    if (!out) throw IoError("short write to " + path);
}

Network load_checkpoint(const std::string& path, const Shape5& input_dims) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCkptMagic, sizeof(kCkptMagic)) != 0)
        throw IoError(path + ": not a GSCKPT1 checkpoint");
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len == 0 || len > (1u << 24)) throw IoError(path + ": corrupt header length");
    std::string header_str(len, '\0');
    in.read(header_str.data(), len);
    if (!in) throw IoError(path + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad checkpoint header: " + e.what());
    }

    const NetworkSpec spec = NetworkSpec::from_json(header.at("spec"));
    Shape5 dims = input_dims;
    if (dims.numel() <= 1 && header.contains("input_dims")) {
        const auto& jd = header["input_dims"];
        dims = Shape5{jd[0].get<index_t>(), jd[1].get<index_t>(), jd[2].get<index_t>(),
                      jd[3].get<index_t>(), jd[4].get<index_t>()};
    }
    Network net(spec, dims);

    auto named = net.named_params();
    const auto& jparams = header.at("params");
    if (jparams.size() != named.size())
        throw ConfigError(path + ": checkpoint has " + std::to_string(jparams.size()) +
                          " parameters, network expects " + std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
        const std::string name = jparams[i].at("name").get<std::string>();
        const auto size = jparams[i].at("size").get<std::size_t>();
        if (name != named[i].first || size != named[i].second->value.size())
            throw ConfigError(path + ": parameter '" + name + "' does not match network ('" +
                              named[i].first + "', " +
                              std::to_string(named[i].second->value.size()) + " values)");
        const VolumeTensor frame = read_gsv(in, path + ":" + name);
        if (static_cast<std::size_t>(frame.size()) != size)
            throw IoError(path + ": parameter frame size mismatch for '" + name + "'");
        std::copy(frame.data(), frame.data() + frame.size(), named[i].second->value.begin());
    }
    return net;
}

}  // namespace gsconv
