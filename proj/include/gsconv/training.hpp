#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "gsconv/network.hpp"
#include "gsconv/tensor.hpp"

namespace gsconv {

struct TrainConfig {
    double base_lr{0.01};
    double power{0.9};
    index_t max_iters{1000};
    index_t batch_size{4};
    double momentum{0.9};
    std::uint64_t seed{0};
    index_t metrics_interval{50};  // emit a MetricsRow every this many iterations

    void validate() const;
};

struct MetricsRow {
    index_t iteration{0};
    double loss{0.0};
    std::vector<double> dice;  // per foreground class
    double mdice{0.0};
    double lr{0.0};
};

// Per-voxel softmax over the channel axis, stabilized by max subtraction.
VolumeTensor softmax_channels(const VolumeTensor& logits);

// Chain rule through softmax_channels: grad wrt logits from grad wrt probs.
VolumeTensor softmax_backward(const VolumeTensor& probs, const VolumeTensor& grad_probs);

// Squared-denominator soft Dice over the foreground classes (channel 0 is
// background): dice_k = 2*sum(p_k g_k) / (sum(p_k^2) + sum(g_k^2) + eps),
// loss = 1 - mean_k dice_k. Returns the analytic gradient wrt probs.
struct DiceLossResult {
    double loss{0.0};
    VolumeTensor grad_probs;
};
DiceLossResult dice_loss(const VolumeTensor& probs, const VolumeTensor& onehot_target,
                         double epsilon = 1e-5);

// base_lr * (1 - iter/max_iters)^power.
double poly_lr(index_t iter, const TrainConfig& cfg);

// SGD with momentum: v <- momentum*v + grad; p <- p - lr*v.
class SgdOptimizer {
public:
    void step(const std::vector<ParamBlock*>& params, double lr, double momentum);

private:
    std::vector<std::vector<double>> velocity_;
};

// Volume/label pair source. Labels are single-channel tensors of class ids.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual index_t size() const = 0;
    virtual const VolumeTensor& volume(index_t i) const = 0;
    virtual const VolumeTensor& label(index_t i) const = 0;
    virtual index_t num_classes() const = 0;
};

class MemoryDataset : public Dataset {
public:
    MemoryDataset(std::vector<VolumeTensor> volumes, std::vector<VolumeTensor> labels,
                  index_t num_classes);

    index_t size() const override { return static_cast<index_t>(volumes_.size()); }
    const VolumeTensor& volume(index_t i) const override { return volumes_[static_cast<std::size_t>(i)]; }
    const VolumeTensor& label(index_t i) const override { return labels_[static_cast<std::size_t>(i)]; }
    index_t num_classes() const override { return num_classes_; }

private:
    std::vector<VolumeTensor> volumes_;
    std::vector<VolumeTensor> labels_;
    index_t num_classes_;
};

// One-hot encode a label volume into num_classes channels.
VolumeTensor one_hot(const VolumeTensor& label, index_t num_classes);

// Runs max_iters steps of batch sampling, forward, Dice loss, backward and
// SGD with the poly schedule. Fully deterministic for a fixed config. If csv
// is non-null, rows are streamed as "iter,loss,dice_class1,...,mDice,lr".
std::vector<MetricsRow> train(Network& net, const Dataset& data, const TrainConfig& cfg,
                              std::ostream* csv = nullptr,
                              const std::function<void(const MetricsRow&)>& on_row = {});

struct EvalResult {
    std::vector<double> per_class;  // foreground classes 1..K-1
    double mdice{0.0};
};

// Hard Dice between two label volumes, one value per foreground class:
// 2|P∩G| / (|P| + |G|), and 1 when the class is absent from both.
std::vector<double> dice_per_class(const VolumeTensor& pred_labels,
                                   const VolumeTensor& gt_labels, index_t num_classes);

// Hard-argmax evaluation: per-sample, per-foreground-class Dice averaged
// over the dataset. A class empty in both prediction and ground truth
// counts as 1.
EvalResult evaluate(Network& net, const Dataset& data);

// (x - mean_fg) / std_fg applied to the whole volume. Falls back to
// whole-volume statistics (with a warning on stderr) when the mask is empty
// or the foreground is constant.
VolumeTensor normalize_volume(const VolumeTensor& volume, const std::vector<bool>& foreground);

void write_metrics_csv_header(std::ostream& os, index_t num_classes);
void write_metrics_csv_row(std::ostream& os, const MetricsRow& row);

// Checkpoint container: magic "GSCKPT1\0", 4-byte LE header length, a JSON
// header holding the network spec and parameter directory, then one GSV1
// blob per parameter in directory order.
void save_checkpoint(const std::string& path, Network& net);
Network load_checkpoint(const std::string& path, const Shape5& input_dims);

}  // namespace gsconv
