#include "gsconv/group_shift.hpp"

#include <algorithm>
#include <string>

namespace gsconv {

GroupShiftConfig GroupShiftConfig::from_fraction(index_t g_d, index_t g_h, index_t g_w,
                                                 index_t channels, double fraction) {
    if (fraction < 0.0 || fraction > 1.0)
        throw ConfigError("shift fraction " + std::to_string(fraction) + " outside [0, 1]");
    GroupShiftConfig cfg;
    cfg.g_d = g_d;
    cfg.g_h = g_h;
    cfg.g_w = g_w;
    const index_t g = cfg.group_count();
    if (g < 1) throw ConfigError("group counts must be positive");
    cfg.channels_per_group =
        static_cast<index_t>(static_cast<double>(channels) * fraction / static_cast<double>(g));
    cfg.shifted_channels = g * cfg.channels_per_group;
    cfg.validate();
    return cfg;
}

void GroupShiftConfig::validate() const {
    if (g_d < 1 || g_h < 1 || g_w < 1)
        throw ConfigError("group counts must be >= 1, got (" + std::to_string(g_d) + "," +
                          std::to_string(g_h) + "," + std::to_string(g_w) + ")");
    if (channels_per_group < 0)
        throw ConfigError("channels per group must be >= 0, got " +
                          std::to_string(channels_per_group));
    if (shifted_channels != group_count() * channels_per_group)
        throw ConfigError("shifted channel count " + std::to_string(shifted_channels) +
                          " != group count " + std::to_string(group_count()) +
                          " * channels per group " + std::to_string(channels_per_group));
}

void GroupShiftConfig::bind(const Shape5& dims) const {
    validate();
    dims.validate();
    if (dims.d % g_d != 0)
        throw ConfigError("depth " + std::to_string(dims.d) + " not divisible by g_d=" +
                          std::to_string(g_d));
    if (dims.h % g_h != 0)
        throw ConfigError("height " + std::to_string(dims.h) + " not divisible by g_h=" +
                          std::to_string(g_h));
    if (dims.w % g_w != 0)
        throw ConfigError("width " + std::to_string(dims.w) + " not divisible by g_w=" +
                          std::to_string(g_w));
    if (shifted_channels > dims.c)
        throw ConfigError("shifted channels " + std::to_string(shifted_channels) +
                          " exceed tensor channels " + std::to_string(dims.c));
}

VoxelCoord map_coordinate(const VoxelCoord& src, const GroupShiftConfig& cfg, const Shape5& dims) {
    cfg.bind(dims);
    if (src.x < 0 || src.x >= dims.d || src.y < 0 || src.y >= dims.h || src.z < 0 ||
        src.z >= dims.w || src.c < 0 || src.c >= dims.c)
        throw BoundsError("coordinate out of range for dims " + dims.str());

    if (src.c >= cfg.shifted_channels) return src;

    const index_t d = dims.d / cfg.g_d;
    const index_t h = dims.h / cfg.g_h;
    const index_t w = dims.w / cfg.g_w;
    const index_t g = cfg.group_count();

    const index_t cur_ind = src.x / d + (src.y / h) * cfg.g_d + (src.z / w) * cfg.g_d * cfg.g_h;
    const index_t sft_step = src.c / cfg.channels_per_group;
    const index_t sfted_ind = (cur_ind + sft_step) % g;

    VoxelCoord dst;
    dst.x = (sfted_ind % cfg.g_d) * d + src.x % d;
    dst.y = ((sfted_ind % (cfg.g_d * cfg.g_h)) / cfg.g_d) * h + src.y % h;
    dst.z = (sfted_ind / (cfg.g_d * cfg.g_h)) * w + src.z % w;
    dst.c = src.c;
    return dst;
}

VolumeTensor apply_group_shift_naive(const VolumeTensor& f, const GroupShiftConfig& cfg) {
    const Shape5& dims = f.dims();
    cfg.bind(dims);
    VolumeTensor out(dims);
    for (index_t n = 0; n < dims.n; ++n)
        for (index_t x = 0; x < dims.d; ++x)
            for (index_t y = 0; y < dims.h; ++y)
                for (index_t z = 0; z < dims.w; ++z)
                    for (index_t c = 0; c < dims.c; ++c) {
                        const VoxelCoord dst = map_coordinate({x, y, z, c}, cfg, dims);
                        out.at(n, dst.x, dst.y, dst.z, dst.c) = f.at(n, x, y, z, c);
                    }
    return out;
}

bool PermutationTable::is_identity() const {
    for (index_t i = 0; i < static_cast<index_t>(map.size()); ++i)
        if (map[static_cast<std::size_t>(i)] != i) return false;
    return true;
}

PermutationTable build_permutation(const GroupShiftConfig& cfg, const Shape5& dims) {
    Shape5 per_sample = dims;
    per_sample.n = 1;
    cfg.bind(per_sample);

    PermutationTable table;
    table.dims = per_sample;
    const index_t size = per_sample.per_sample();
    table.map.assign(static_cast<std::size_t>(size), -1);

    for (index_t x = 0; x < per_sample.d; ++x)
        for (index_t y = 0; y < per_sample.h; ++y)
            for (index_t z = 0; z < per_sample.w; ++z)
                for (index_t c = 0; c < per_sample.c; ++c) {
                    const VoxelCoord dst = map_coordinate({x, y, z, c}, cfg, per_sample);
                    const index_t src_flat = linear_index(0, x, y, z, c, per_sample);
                    const index_t dst_flat = linear_index(0, dst.x, dst.y, dst.z, dst.c, per_sample);
                    table.map[static_cast<std::size_t>(dst_flat)] = src_flat;
                }

    // A -1 left anywhere means two sources mapped to one destination.
    for (index_t i = 0; i < size; ++i)
        if (table.map[static_cast<std::size_t>(i)] < 0)
            throw StateError("permutation build produced a non-bijective table at index " +
                             std::to_string(i));
    return table;
}

VolumeTensor apply_permutation(const VolumeTensor& f, const PermutationTable& table) {
    const Shape5& dims = f.dims();
    Shape5 per_sample = dims;
    per_sample.n = 1;
    if (!(per_sample == table.dims))
        throw ShapeError("permutation table built for " + table.dims.str() +
                         " applied to per-sample dims " + per_sample.str());

    VolumeTensor out(dims);
    const index_t size = table.per_sample_size();
    const index_t* map = table.map.data();
    for (index_t n = 0; n < dims.n; ++n) {
        const double* src = f.data() + n * size;
        double* dst = out.data() + n * size;
#pragma omp parallel for schedule(static)
        for (index_t i = 0; i < size; ++i) dst[i] = src[map[i]];
    }
    return out;
}

PermutationTable invert_permutation(const PermutationTable& table) {
    PermutationTable inv;
    inv.dims = table.dims;
    const index_t size = table.per_sample_size();
    inv.map.assign(static_cast<std::size_t>(size), -1);
    for (index_t dst = 0; dst < size; ++dst) {
        const index_t src = table.map[static_cast<std::size_t>(dst)];
        if (src < 0 || src >= size || inv.map[static_cast<std::size_t>(src)] >= 0)
            throw StateError("cannot invert a non-bijective table");
        inv.map[static_cast<std::size_t>(src)] = dst;
    }
    return inv;
}

VolumeTensor group_shift_backward(const VolumeTensor& grad_out, const PermutationTable& table) {
    return apply_permutation(grad_out, invert_permutation(table));
}

}  // namespace gsconv
