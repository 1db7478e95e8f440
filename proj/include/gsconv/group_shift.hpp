#pragma once

#include <cstdint>
#include <vector>

#include "gsconv/tensor.hpp"

namespace gsconv {

// Group Shift divides a feature map into g_d*g_h*g_w equal spatial groups
// and the first C_s channels into G = g_d*g_h*g_w contiguous channel groups
// of C_g channels each. Channel group k is then moved k spatial groups
// forward (cyclically) while channels c >= C_s stay put. The operation is a
// pure permutation of elements: parameter-free, value-conserving, and
// exactly invertible.
struct GroupShiftConfig {
    index_t g_d{1};
    index_t g_h{1};
    index_t g_w{1};
    index_t channels_per_group{0};  // C_g
    index_t shifted_channels{0};    // C_s = G * C_g

    index_t group_count() const { return g_d * g_h * g_w; }

    // C_g = floor(C * fraction / G), C_s = G * C_g. fraction = 0 yields the
    // identity configuration.
    static GroupShiftConfig from_fraction(index_t g_d, index_t g_h, index_t g_w,
                                          index_t channels, double fraction);

    // Internal consistency: group counts >= 1, C_g >= 0, C_s == G * C_g.
    void validate() const;

    // Consistency against concrete dims: each spatial axis divisible by its
    // group count and C_s <= C. Violations are hard errors, never silently
    // truncated.
    void bind(const Shape5& dims) const;
};

struct VoxelCoord {
    index_t x{0};
    index_t y{0};
    index_t z{0};
    index_t c{0};

    bool operator==(const VoxelCoord&) const = default;
};

// The coordinate map: src in the input feature map -> dst in the shifted
// map. Channels c >= C_s map to themselves; the channel coordinate never
// changes.
VoxelCoord map_coordinate(const VoxelCoord& src, const GroupShiftConfig& cfg, const Shape5& dims);

// Scatter-style reference implementation: a quadruple loop over every
// (x, y, z, c) per sample writing out[map_coordinate(src)] = in[src].
// This is the oracle the fast path is checked against.
VolumeTensor apply_group_shift_naive(const VolumeTensor& f, const GroupShiftConfig& cfg);

// Precomputed gather table for one (per-sample dims, config) pair:
// map[dst] = src over flat per-sample indices. Identity on every element
// whose channel is >= C_s. Bijectivity is asserted at build time.
struct PermutationTable {
    Shape5 dims{};                // per-sample dims; n is always 1
    std::vector<index_t> map;     // length d*h*w*c

    index_t per_sample_size() const { return dims.per_sample(); }
    bool is_identity() const;
};

PermutationTable build_permutation(const GroupShiftConfig& cfg, const Shape5& dims);

// Gather application; bit-identical to apply_group_shift_naive. Batch
// samples are permuted independently via per-sample offsets.
VolumeTensor apply_permutation(const VolumeTensor& f, const PermutationTable& table);

PermutationTable invert_permutation(const PermutationTable& table);

// Adjoint of the forward gather: routes each output-position gradient back
// to the input position it was read from.
VolumeTensor group_shift_backward(const VolumeTensor& grad_out, const PermutationTable& table);

}  // namespace gsconv
