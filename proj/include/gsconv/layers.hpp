#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gsconv/group_shift.hpp"
#include "gsconv/rng.hpp"
#include "gsconv/tensor.hpp"

namespace gsconv {

// One named trainable tensor plus its gradient accumulator.
struct ParamBlock {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;

    ParamBlock(std::string n, std::size_t size, double fill = 0.0)
        : name(std::move(n)), value(size, fill), grad(size, 0.0) {}
};

enum class LayerKind { Pointwise, Conv3, Norm, Relu, AvgPool, Upsample, GroupShift };

const char* layer_kind_name(LayerKind kind);

// Structural metadata the profiler prices layers from.
struct LayerInfo {
    LayerKind kind;
    index_t c_in{0};
    index_t c_out{0};
    index_t kernel_volume{1};
};

// Differentiable building block. forward(in, retain=true) stashes whatever
// backward needs; backward must follow a retained forward and accumulates
// parameter gradients into the blocks (callers zero them between steps).
class Layer {
public:
    virtual ~Layer() = default;

    virtual VolumeTensor forward(const VolumeTensor& in, bool retain = true) = 0;
    virtual VolumeTensor backward(const VolumeTensor& grad_out) = 0;

    virtual std::vector<ParamBlock*> params() { return {}; }
    virtual LayerInfo info() const = 0;
    virtual Shape5 out_dims(const Shape5& in) const { return in; }
    virtual void init_params(Rng&) {}

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

protected:
    void require_retained(bool retained) const;

    std::string name_{"layer"};
};

// 1x1x1 convolution: a per-voxel linear map across channels. With the
// channel-fastest layout this is one (N*D*H*W x C_in) * (C_in x C_out)
// matrix product.
class PointwiseConv : public Layer {
public:
    PointwiseConv(index_t c_in, index_t c_out);

    VolumeTensor forward(const VolumeTensor& in, bool retain) override;
    VolumeTensor backward(const VolumeTensor& grad_out) override;
    std::vector<ParamBlock*> params() override { return {&weight_, &bias_}; }
    LayerInfo info() const override { return {LayerKind::Pointwise, c_in_, c_out_, 1}; }
    Shape5 out_dims(const Shape5& in) const override;
    void init_params(Rng& rng) override;

    ParamBlock& weight() { return weight_; }
    ParamBlock& bias() { return bias_; }

private:
    index_t c_in_;
    index_t c_out_;
    ParamBlock weight_;  // c_out x c_in, row-major
    ParamBlock bias_;    // c_out
    VolumeTensor saved_in_;
    bool retained_{false};
};

// 3x3x3 convolution, stride 1, zero padding 1; spatial dims preserved.
class Conv3 : public Layer {
public:
    Conv3(index_t c_in, index_t c_out);

    VolumeTensor forward(const VolumeTensor& in, bool retain) override;
    VolumeTensor backward(const VolumeTensor& grad_out) override;
    std::vector<ParamBlock*> params() override { return {&weight_, &bias_}; }
    LayerInfo info() const override { return {LayerKind::Conv3, c_in_, c_out_, 27}; }
    Shape5 out_dims(const Shape5& in) const override;
    void init_params(Rng& rng) override;

    ParamBlock& weight() { return weight_; }
    ParamBlock& bias() { return bias_; }

private:
    index_t c_in_;
    index_t c_out_;
    ParamBlock weight_;  // c_out x c_in x 3 x 3 x 3
    ParamBlock bias_;    // c_out
    VolumeTensor saved_in_;
    bool retained_{false};
};

// Per-sample, per-channel normalization over the spatial extent followed by
// a trainable scale and shift.
class InstanceNorm : public Layer {
public:
    explicit InstanceNorm(index_t channels, double epsilon = 1e-5);

    VolumeTensor forward(const VolumeTensor& in, bool retain) override;
    VolumeTensor backward(const VolumeTensor& grad_out) override;
    std::vector<ParamBlock*> params() override { return {&scale_, &shift_}; }
    LayerInfo info() const override { return {LayerKind::Norm, channels_, channels_, 1}; }
    void init_params(Rng&) override;

private:
    index_t channels_;
    double epsilon_;
    ParamBlock scale_;
    ParamBlock shift_;
    VolumeTensor saved_norm_;             // normalized values, pre scale/shift
    std::vector<double> saved_inv_std_;   // per (n, c)
    bool retained_{false};
};

class ReluLayer : public Layer {
public:
    explicit ReluLayer(index_t channels) : channels_(channels) { name_ = "relu"; }

    VolumeTensor forward(const VolumeTensor& in, bool retain) override;
    VolumeTensor backward(const VolumeTensor& grad_out) override;
    LayerInfo info() const override { return {LayerKind::Relu, channels_, channels_, 1}; }

private:
    index_t channels_;
    VolumeTensor saved_in_;
    bool retained_{false};
};

// 2x2x2 average pooling, stride 2. Requires even spatial dims.
class AvgPool2 : public Layer {
public:
    explicit AvgPool2(index_t channels) : channels_(channels) { name_ = "pool"; }

    VolumeTensor forward(const VolumeTensor& in, bool retain) override;
    VolumeTensor backward(const VolumeTensor& grad_out) override;
    LayerInfo info() const override { return {LayerKind::AvgPool, channels_, channels_, 8}; }
    Shape5 out_dims(const Shape5& in) const override;

private:
    index_t channels_;
    Shape5 saved_in_dims_{};
    bool retained_{false};
};

// Nearest-neighbor 2x upsampling on each spatial axis.
class Upsample2 : public Layer {
public:
    explicit Upsample2(index_t channels) : channels_(channels) { name_ = "up"; }

    VolumeTensor forward(const VolumeTensor& in, bool retain) override;
    VolumeTensor backward(const VolumeTensor& grad_out) override;
    LayerInfo info() const override { return {LayerKind::Upsample, channels_, channels_, 8}; }
    Shape5 out_dims(const Shape5& in) const override;

private:
    index_t channels_;
    Shape5 saved_in_dims_{};
    bool retained_{false};
};

// Group Shift as a layer: forward is the precomputed gather, backward the
// inverse gather. No parameters, no FLOPs, pure data movement.
class GroupShiftLayer : public Layer {
public:
    GroupShiftLayer(std::shared_ptr<const PermutationTable> table,
                    std::shared_ptr<const PermutationTable> inverse, GroupShiftConfig cfg);

    VolumeTensor forward(const VolumeTensor& in, bool retain) override;
    VolumeTensor backward(const VolumeTensor& grad_out) override;
    LayerInfo info() const override {
        return {LayerKind::GroupShift, table_->dims.c, table_->dims.c, 1};
    }

    const GroupShiftConfig& config() const { return cfg_; }
    const PermutationTable& table() const { return *table_; }

private:
    std::shared_ptr<const PermutationTable> table_;
    std::shared_ptr<const PermutationTable> inverse_;
    GroupShiftConfig cfg_;
    bool retained_{false};
};

// A plain sequence of layers; enough model for flat stacks in tests and for
// receptive-field probes.
class LayerStack {
public:
    LayerStack() = default;

    Layer& push(std::unique_ptr<Layer> layer);
    template <typename L, typename... Args>
    L& emplace(Args&&... args) {
        return static_cast<L&>(push(std::make_unique<L>(std::forward<Args>(args)...)));
    }

    VolumeTensor forward(const VolumeTensor& in, bool retain = true);
    VolumeTensor backward(const VolumeTensor& grad_out);

    std::vector<ParamBlock*> params();
    void init_params(Rng& rng);
    void zero_grads();

    std::size_t size() const { return layers_.size(); }
    Layer& operator[](std::size_t i) { return *layers_[i]; }
    const Layer& operator[](std::size_t i) const { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

void zero_grads(const std::vector<ParamBlock*>& params);

}  // namespace gsconv
