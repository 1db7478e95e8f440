#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsconv/layers.hpp"
#include "gsconv/tensor.hpp"

namespace gsconv {

enum class ConvKind { Pointwise, Conv3 };

// Where Group Shift sits relative to the two convolutions of a block:
// CSC = conv, shift, conv; CCS = conv, conv, shift; CSCS = both; the
// UpShift variant additionally shifts right after each decoder upsampling.
enum class GsInsert { None, CSC, CCS, CSCS, CSCSUpShift };

enum class GsPlacement { Encoder, Decoder, Both };

std::string to_string(ConvKind kind);
std::string to_string(GsInsert insert);
std::string to_string(GsPlacement placement);
ConvKind conv_kind_from_string(const std::string& s);
GsInsert gs_insert_from_string(const std::string& s);
GsPlacement gs_placement_from_string(const std::string& s);

struct StageSpec {
    index_t channels{1};
    std::array<index_t, 3> groups{1, 1, 1};  // (g_d, g_h, g_w)
    ConvKind conv{ConvKind::Pointwise};
};

// Declarative description of the five-stage U-Net.
struct NetworkSpec {
    index_t in_channels{1};
    index_t num_classes{2};
    std::vector<StageSpec> stages;
    GsInsert insert{GsInsert::None};
    GsPlacement placement{GsPlacement::Both};
    double shift_fraction{0.5};

    void validate() const;  // exactly 5 stages, positive channels/groups, fraction in [0,1]

    nlohmann::json to_json() const;
    static NetworkSpec from_json(const nlohmann::json& j);
};

constexpr std::array<index_t, 5> kDefaultStageChannels = {16, 32, 64, 128, 256};

// Named per-stage spatial-group tables. Recognized (case-insensitive):
// prosgv1..prosgv4, brats / bratsv1.
std::array<std::array<index_t, 3>, 5> preset_spatial_groups(const std::string& name);

// Per-stage groups derived from the input size: 2 on every axis the stage's
// feature map can split evenly, 1 otherwise.
std::vector<std::array<index_t, 3>> auto_spatial_groups(const Shape5& input_dims,
                                                        std::size_t stage_count);

// The encoder/decoder network: encoder blocks with pooling between, decoder
// blocks with nearest upsampling and channel-concatenated skips, pointwise
// head. Group Shift instances live in the encoder blocks (all but the
// bottleneck), the decoder blocks, and optionally after each upsampling;
// which of those are populated follows the insert position and placement.
class Network {
public:
    Network(const NetworkSpec& spec, const Shape5& input_dims);

    // Test/diagnostic path without the five-stage requirement.
    static Network make(std::vector<StageSpec> stages, index_t in_channels, index_t num_classes,
                        GsInsert insert, GsPlacement placement, double shift_fraction,
                        const Shape5& input_dims);

    void init_params(std::uint64_t seed);

    VolumeTensor forward(const VolumeTensor& input, bool retain = true);
    VolumeTensor backward(const VolumeTensor& grad_logits);

    std::vector<ParamBlock*> params();
    std::vector<std::pair<std::string, ParamBlock*>> named_params();
    void zero_grads();

    const NetworkSpec& spec() const { return spec_; }
    const Shape5& input_dims() const { return input_dims_; }
    std::size_t stage_count() const { return spec_.stages.size(); }

    // Execution-order walk with the input dims each layer sees; the
    // profiler prices layers from this.
    void visit_layers(
        const std::function<void(const std::string& name, const Layer& layer,
                                 const Shape5& in_dims)>& fn) const;

private:
    struct TableKey {
        index_t d, h, w, c, g_d, g_h, g_w, c_g, c_s;
        auto operator<=>(const TableKey&) const = default;
    };
    struct TablePair {
        std::shared_ptr<const PermutationTable> fwd;
        std::shared_ptr<const PermutationTable> inv;
    };

    Network(NetworkSpec spec, const Shape5& input_dims, bool require_five);

    void build();
    LayerStack make_block(const std::string& prefix, std::size_t stage, index_t c_in,
                          index_t c_out, bool gs_active);
    std::unique_ptr<GroupShiftLayer> make_gs(const std::string& name, std::size_t stage,
                                             index_t channels);
    TablePair tables_for(const GroupShiftConfig& cfg, const Shape5& dims);
    Shape5 stage_dims(std::size_t stage) const;

    NetworkSpec spec_;
    Shape5 input_dims_{};

    std::vector<LayerStack> enc_;                         // one per stage
    std::vector<std::unique_ptr<AvgPool2>> pools_;        // between stages
    std::vector<LayerStack> dec_;                         // stages S-2 .. 0, indexed by stage
    std::vector<std::unique_ptr<Upsample2>> ups_;         // into stage i from i+1
    std::vector<std::unique_ptr<GroupShiftLayer>> upshift_;  // after ups_[i], may be null
    std::unique_ptr<PointwiseConv> head_;

    std::map<TableKey, TablePair> table_cache_;
    bool has_forward_state_{false};
};

// Spatial positions of the input whose gradient (max over channels) exceeds
// the threshold when 1 is backpropagated from every class channel of one
// output voxel. Works on anything with forward/backward in the Layer-stack
// sense.
template <typename Model>
std::vector<std::array<index_t, 3>> effective_rf_support(Model& model, const VolumeTensor& input,
                                                         index_t x, index_t y, index_t z,
                                                         double threshold = 1e-12) {
    VolumeTensor out = model.forward(input, true);
    VolumeTensor grad(out.dims());
    for (index_t c = 0; c < out.dims().c; ++c) grad.at(0, x, y, z, c) = 1.0;
    const VolumeTensor grad_in = model.backward(grad);
    const Shape5& dm = grad_in.dims();
    std::vector<std::array<index_t, 3>> support;
    for (index_t xi = 0; xi < dm.d; ++xi)
        for (index_t yi = 0; yi < dm.h; ++yi)
            for (index_t zi = 0; zi < dm.w; ++zi) {
                double mx = 0.0;
                for (index_t c = 0; c < dm.c; ++c) {
                    const double v = std::abs(grad_in.at(0, xi, yi, zi, c));
                    if (v > mx) mx = v;
                }
                if (mx > threshold) support.push_back({xi, yi, zi});
            }
    return support;
}

}  // namespace gsconv
