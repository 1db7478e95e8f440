#include "gsconv/layers.hpp"

#include <algorithm>
#include <cmath>

namespace gsconv {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Pointwise: return "pointwise";
        case LayerKind::Conv3: return "conv3";
        case LayerKind::Norm: return "norm";
        case LayerKind::Relu: return "relu";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::Upsample: return "upsample";
        case LayerKind::GroupShift: return "group_shift";
    }
    return "unknown";
}

void Layer::require_retained(bool retained) const {
    if (!retained)
        throw StateError("backward called on '" + name_ + "' without a retained forward pass");
}

namespace {

void require_channels(const Shape5& dims, index_t expected, const std::string& name) {
    if (dims.c != expected)
        throw ShapeError(name + ": expected " + std::to_string(expected) + " input channels, got " +
                         std::to_string(dims.c));
}

}  // namespace

// ---------------------------------------------------------------------------
// PointwiseConv

PointwiseConv::PointwiseConv(index_t c_in, index_t c_out)
    : c_in_(c_in),
      c_out_(c_out),
      weight_("weight", static_cast<std::size_t>(c_out * c_in)),
      bias_("bias", static_cast<std::size_t>(c_out)) {
    if (c_in < 1 || c_out < 1) throw ConfigError("pointwise conv needs c_in, c_out >= 1");
    name_ = "pointwise";
}

Shape5 PointwiseConv::out_dims(const Shape5& in) const {
    Shape5 out = in;
    out.c = c_out_;
    return out;
}

void PointwiseConv::init_params(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(c_in_));
    for (double& v : weight_.value) v = rng.uniform(-bound, bound);
    for (double& v : bias_.value) v = 0.0;
}

VolumeTensor PointwiseConv::forward(const VolumeTensor& in, bool retain) {
    require_channels(in.dims(), c_in_, name_);
    VolumeTensor out(out_dims(in.dims()));
    const index_t rows = in.dims().numel() / c_in_;
    const double* w = weight_.value.data();
    const double* b = bias_.value.data();
    const double* src = in.data();
    double* dst = out.data();
    const index_t ci = c_in_, co = c_out_;

    // Transposed weights make the inner accumulation contiguous over the
    // output channels, which vectorizes even for one input channel.
    std::vector<double> wt(static_cast<std::size_t>(ci * co));
    for (index_t o = 0; o < co; ++o)
        for (index_t i = 0; i < ci; ++i)
            wt[static_cast<std::size_t>(i * co + o)] = w[o * ci + i];
    const double* wtp = wt.data();

#pragma omp parallel for schedule(static)
    for (index_t m = 0; m < rows; ++m) {
        const double* row = src + m * ci;
        double* orow = dst + m * co;
        for (index_t o = 0; o < co; ++o) orow[o] = b[o];
        for (index_t i = 0; i < ci; ++i) {
            const double xi = row[i];
            const double* wrow = wtp + i * co;
            for (index_t o = 0; o < co; ++o) orow[o] += xi * wrow[o];
        }
    }
    retained_ = retain;
    if (retain) saved_in_ = in;
    return out;
}

VolumeTensor PointwiseConv::backward(const VolumeTensor& grad_out) {
    require_retained(retained_);
    require_channels(grad_out.dims(), c_out_, name_ + " grad");
    if (!(grad_out.dims().n == saved_in_.dims().n && grad_out.dims().d == saved_in_.dims().d &&
          grad_out.dims().h == saved_in_.dims().h && grad_out.dims().w == saved_in_.dims().w))
        throw ShapeError(name_ + ": grad spatial dims mismatch");

    const index_t rows = saved_in_.dims().numel() / c_in_;
    const index_t ci = c_in_, co = c_out_;
    const double* w = weight_.value.data();
    const double* g = grad_out.data();
    const double* x = saved_in_.data();

    VolumeTensor grad_in(saved_in_.dims());
    double* gi = grad_in.data();
#pragma omp parallel for schedule(static)
    for (index_t m = 0; m < rows; ++m) {
        const double* grow = g + m * co;
        double* girow = gi + m * ci;
        for (index_t o = 0; o < co; ++o) {
            const double go = grow[o];
            const double* wrow = w + o * ci;
            for (index_t i = 0; i < ci; ++i) girow[i] += go * wrow[i];
        }
    }

    double* gw = weight_.grad.data();
    double* gb = bias_.grad.data();
#pragma omp parallel for schedule(static)
    for (index_t o = 0; o < co; ++o) {
        double* gwrow = gw + o * ci;
        double bacc = 0.0;
        for (index_t m = 0; m < rows; ++m) {
            const double go = g[m * co + o];
            bacc += go;
            const double* row = x + m * ci;
            for (index_t i = 0; i < ci; ++i) gwrow[i] += go * row[i];
        }
        gb[o] += bacc;
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Conv3

Conv3::Conv3(index_t c_in, index_t c_out)
    : c_in_(c_in),
      c_out_(c_out),
      weight_("weight", static_cast<std::size_t>(c_out * c_in * 27)),
      bias_("bias", static_cast<std::size_t>(c_out)) {
    if (c_in < 1 || c_out < 1) throw ConfigError("conv3 needs c_in, c_out >= 1");
    name_ = "conv3";
}

Shape5 Conv3::out_dims(const Shape5& in) const {
    Shape5 out = in;
    out.c = c_out_;
    return out;
}

void Conv3::init_params(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(c_in_ * 27));
    for (double& v : weight_.value) v = rng.uniform(-bound, bound);
    for (double& v : bias_.value) v = 0.0;
}

VolumeTensor Conv3::forward(const VolumeTensor& in, bool retain) {
    require_channels(in.dims(), c_in_, name_);
    const Shape5& dm = in.dims();
    VolumeTensor out(out_dims(dm));
    const double* w = weight_.value.data();
    const double* b = bias_.value.data();
    const index_t ci = c_in_, co = c_out_;

#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < dm.n; ++n)
        for (index_t x = 0; x < dm.d; ++x)
            for (index_t y = 0; y < dm.h; ++y)
                for (index_t z = 0; z < dm.w; ++z)
                    for (index_t o = 0; o < co; ++o) {
                        double acc = b[o];
                        for (index_t dx = -1; dx <= 1; ++dx) {
                            const index_t sx = x + dx;
                            if (sx < 0 || sx >= dm.d) continue;
                            for (index_t dy = -1; dy <= 1; ++dy) {
                                const index_t sy = y + dy;
                                if (sy < 0 || sy >= dm.h) continue;
                                for (index_t dz = -1; dz <= 1; ++dz) {
                                    const index_t sz = z + dz;
                                    if (sz < 0 || sz >= dm.w) continue;
                                    const index_t tap = (dx + 1) * 9 + (dy + 1) * 3 + (dz + 1);
                                    const double* cell =
                                        in.data() + linear_index(n, sx, sy, sz, 0, dm);
                                    for (index_t i = 0; i < ci; ++i)
                                        acc += w[(o * ci + i) * 27 + tap] * cell[i];
                                }
                            }
                        }
                        out.at(n, x, y, z, o) = acc;
                    }
    retained_ = retain;
    if (retain) saved_in_ = in;
    return out;
}

VolumeTensor Conv3::backward(const VolumeTensor& grad_out) {
    require_retained(retained_);
    require_channels(grad_out.dims(), c_out_, name_ + " grad");
    const Shape5& dm = saved_in_.dims();
    const Shape5& gm = grad_out.dims();
    if (gm.n != dm.n || gm.d != dm.d || gm.h != dm.h || gm.w != dm.w)
        throw ShapeError(name_ + ": grad spatial dims mismatch");

    const double* w = weight_.value.data();
    const double* g = grad_out.data();
    const index_t ci = c_in_, co = c_out_;

    VolumeTensor grad_in(dm);
    // grad_in[i, p] = sum_{o, tap} w[o, i, tap] * g[o, p - tap]
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < dm.n; ++n)
        for (index_t x = 0; x < dm.d; ++x)
            for (index_t y = 0; y < dm.h; ++y)
                for (index_t z = 0; z < dm.w; ++z) {
                    double* cell = grad_in.data() + linear_index(n, x, y, z, 0, dm);
                    for (index_t dx = -1; dx <= 1; ++dx) {
                        const index_t ox = x - dx;
                        if (ox < 0 || ox >= dm.d) continue;
                        for (index_t dy = -1; dy <= 1; ++dy) {
                            const index_t oy = y - dy;
                            if (oy < 0 || oy >= dm.h) continue;
                            for (index_t dz = -1; dz <= 1; ++dz) {
                                const index_t oz = z - dz;
                                if (oz < 0 || oz >= dm.w) continue;
                                const index_t tap = (dx + 1) * 9 + (dy + 1) * 3 + (dz + 1);
                                const double* gcell = g + linear_index(n, ox, oy, oz, 0, gm);
                                for (index_t o = 0; o < co; ++o) {
                                    const double go = gcell[o];
                                    for (index_t i = 0; i < ci; ++i)
                                        cell[i] += w[(o * ci + i) * 27 + tap] * go;
                                }
                            }
                        }
                    }
                }

    double* gw = weight_.grad.data();
    double* gb = bias_.grad.data();
#pragma omp parallel for schedule(static)
    for (index_t o = 0; o < co; ++o) {
        double bacc = 0.0;
        for (index_t n = 0; n < dm.n; ++n)
            for (index_t x = 0; x < dm.d; ++x)
                for (index_t y = 0; y < dm.h; ++y)
                    for (index_t z = 0; z < dm.w; ++z) {
                        const double go = g[linear_index(n, x, y, z, o, gm)];
                        bacc += go;
                        for (index_t dx = -1; dx <= 1; ++dx) {
                            const index_t sx = x + dx;
                            if (sx < 0 || sx >= dm.d) continue;
                            for (index_t dy = -1; dy <= 1; ++dy) {
                                const index_t sy = y + dy;
                                if (sy < 0 || sy >= dm.h) continue;
                                for (index_t dz = -1; dz <= 1; ++dz) {
                                    const index_t sz = z + dz;
                                    if (sz < 0 || sz >= dm.w) continue;
                                    const index_t tap = (dx + 1) * 9 + (dy + 1) * 3 + (dz + 1);
                                    const double* cell =
                                        saved_in_.data() + linear_index(n, sx, sy, sz, 0, dm);
                                    for (index_t i = 0; i < ci; ++i)
                                        gw[(o * ci + i) * 27 + tap] += go * cell[i];
                                }
                            }
                        }
                    }
        gb[o] += bacc;
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// InstanceNorm

InstanceNorm::InstanceNorm(index_t channels, double epsilon)
    : channels_(channels),
      epsilon_(epsilon),
      scale_("scale", static_cast<std::size_t>(channels), 1.0),
      shift_("shift", static_cast<std::size_t>(channels), 0.0) {
    if (epsilon <= 0.0) throw ConfigError("norm epsilon must be positive");
    name_ = "norm";
}

void InstanceNorm::init_params(Rng&) {
    for (double& v : scale_.value) v = 1.0;
    for (double& v : shift_.value) v = 0.0;
}

VolumeTensor InstanceNorm::forward(const VolumeTensor& in, bool retain) {
    require_channels(in.dims(), channels_, name_);
    const Shape5& dm = in.dims();
    const index_t spatial = dm.spatial();
    const index_t c = channels_;

    VolumeTensor norm(dm);
    std::vector<double> inv_std(static_cast<std::size_t>(dm.n * c));

#pragma omp parallel for schedule(static)
    for (index_t n = 0; n < dm.n; ++n) {
        std::vector<double> mu(static_cast<std::size_t>(c), 0.0);
        std::vector<double> var(static_cast<std::size_t>(c), 0.0);
        const double* base = in.data() + n * dm.per_sample();
        const double* p = base;
        for (index_t s = 0; s < spatial; ++s, p += c)
            for (index_t k = 0; k < c; ++k) mu[static_cast<std::size_t>(k)] += p[k];
        for (index_t k = 0; k < c; ++k) mu[static_cast<std::size_t>(k)] /= static_cast<double>(spatial);
        p = base;
        for (index_t s = 0; s < spatial; ++s, p += c)
            for (index_t k = 0; k < c; ++k) {
                const double dlt = p[k] - mu[static_cast<std::size_t>(k)];
                var[static_cast<std::size_t>(k)] += dlt * dlt;
            }
        for (index_t k = 0; k < c; ++k) {
            var[static_cast<std::size_t>(k)] /= static_cast<double>(spatial);
            inv_std[static_cast<std::size_t>(n * c + k)] =
                1.0 / std::sqrt(var[static_cast<std::size_t>(k)] + epsilon_);
        }
        p = base;
        double* q = norm.data() + n * dm.per_sample();
        for (index_t s = 0; s < spatial; ++s, p += c, q += c)
            for (index_t k = 0; k < c; ++k)
                q[k] = (p[k] - mu[static_cast<std::size_t>(k)]) *
                       inv_std[static_cast<std::size_t>(n * c + k)];
    }

    VolumeTensor out(dm);
    const double* sc = scale_.value.data();
    const double* sh = shift_.value.data();
    const double* q = norm.data();
    double* o = out.data();
    const index_t rows = dm.numel() / c;
    for (index_t r = 0; r < rows; ++r, q += c, o += c)
        for (index_t k = 0; k < c; ++k) o[k] = sc[k] * q[k] + sh[k];

    retained_ = retain;
    if (retain) {
        saved_norm_ = std::move(norm);
        saved_inv_std_ = std::move(inv_std);
    }
    return out;
}

VolumeTensor InstanceNorm::backward(const VolumeTensor& grad_out) {
    require_retained(retained_);
    if (!(grad_out.dims() == saved_norm_.dims()))
        throw ShapeError(name_ + ": grad dims mismatch");
    const Shape5& dm = saved_norm_.dims();
    const index_t spatial = dm.spatial();
    const index_t c = channels_;
    const double* sc = scale_.value.data();

    VolumeTensor grad_in(dm);
    // Per-(n, c) partials are reduced in fixed sample order afterwards so
    // parameter gradients do not depend on the thread count.
    std::vector<double> gscale_part(static_cast<std::size_t>(dm.n * c), 0.0);
    std::vector<double> gshift_part(static_cast<std::size_t>(dm.n * c), 0.0);

#pragma omp parallel for schedule(static)
    for (index_t n = 0; n < dm.n; ++n) {
        std::vector<double> gsum(static_cast<std::size_t>(c), 0.0);
        std::vector<double> gxsum(static_cast<std::size_t>(c), 0.0);
        const double* gbase = grad_out.data() + n * dm.per_sample();
        const double* xbase = saved_norm_.data() + n * dm.per_sample();
        const double* g = gbase;
        const double* xh = xbase;
        for (index_t s = 0; s < spatial; ++s, g += c, xh += c)
            for (index_t k = 0; k < c; ++k) {
                gsum[static_cast<std::size_t>(k)] += g[k];
                gxsum[static_cast<std::size_t>(k)] += g[k] * xh[k];
            }
        for (index_t k = 0; k < c; ++k) {
            gscale_part[static_cast<std::size_t>(n * c + k)] = gxsum[static_cast<std::size_t>(k)];
            gshift_part[static_cast<std::size_t>(n * c + k)] = gsum[static_cast<std::size_t>(k)];
        }
        g = gbase;
        xh = xbase;
        double* gi = grad_in.data() + n * dm.per_sample();
        const double inv_m = 1.0 / static_cast<double>(spatial);
        for (index_t s = 0; s < spatial; ++s, g += c, xh += c, gi += c)
            for (index_t k = 0; k < c; ++k) {
                const double istd = saved_inv_std_[static_cast<std::size_t>(n * c + k)];
                gi[k] = sc[k] * istd *
                        (g[k] - gsum[static_cast<std::size_t>(k)] * inv_m -
                         xh[k] * gxsum[static_cast<std::size_t>(k)] * inv_m);
            }
    }

    for (index_t n = 0; n < dm.n; ++n)
        for (index_t k = 0; k < c; ++k) {
            scale_.grad[static_cast<std::size_t>(k)] += gscale_part[static_cast<std::size_t>(n * c + k)];
            shift_.grad[static_cast<std::size_t>(k)] += gshift_part[static_cast<std::size_t>(n * c + k)];
        }
    return grad_in;
}

// ---------------------------------------------------------------------------
// ReluLayer

VolumeTensor ReluLayer::forward(const VolumeTensor& in, bool retain) {
    require_channels(in.dims(), channels_, name_);
    retained_ = retain;
    if (retain) saved_in_ = in;
    return relu(in);
}

VolumeTensor ReluLayer::backward(const VolumeTensor& grad_out) {
    require_retained(retained_);
    return relu_grad_mask(saved_in_, grad_out);
}

// ---------------------------------------------------------------------------
// AvgPool2

Shape5 AvgPool2::out_dims(const Shape5& in) const {
    if (in.d % 2 != 0 || in.h % 2 != 0 || in.w % 2 != 0)
        throw ShapeError("avgpool requires even spatial dims, got " + in.str());
    Shape5 out = in;
    out.d /= 2;
    out.h /= 2;
    out.w /= 2;
    return out;
}

VolumeTensor AvgPool2::forward(const VolumeTensor& in, bool retain) {
    require_channels(in.dims(), channels_, name_);
    const Shape5& dm = in.dims();
    VolumeTensor out(out_dims(dm));
    const Shape5& om = out.dims();
    const index_t c = channels_;
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < om.n; ++n)
        for (index_t x = 0; x < om.d; ++x)
            for (index_t y = 0; y < om.h; ++y)
                for (index_t z = 0; z < om.w; ++z) {
                    double* ocell = out.data() + linear_index(n, x, y, z, 0, om);
                    for (index_t dx = 0; dx < 2; ++dx)
                        for (index_t dy = 0; dy < 2; ++dy)
                            for (index_t dz = 0; dz < 2; ++dz) {
                                const double* cell = in.data() + linear_index(n, 2 * x + dx, 2 * y + dy,
                                                                              2 * z + dz, 0, dm);
                                for (index_t k = 0; k < c; ++k) ocell[k] += cell[k];
                            }
                    for (index_t k = 0; k < c; ++k) ocell[k] *= 0.125;
                }
    retained_ = retain;
    if (retain) saved_in_dims_ = dm;
    return out;
}

VolumeTensor AvgPool2::backward(const VolumeTensor& grad_out) {
    require_retained(retained_);
    const Shape5& gm = grad_out.dims();
    VolumeTensor grad_in(saved_in_dims_);
    const Shape5& dm = saved_in_dims_;
    const index_t c = channels_;
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < dm.n; ++n)
        for (index_t x = 0; x < dm.d; ++x)
            for (index_t y = 0; y < dm.h; ++y)
                for (index_t z = 0; z < dm.w; ++z) {
                    const double* gcell =
                        grad_out.data() + linear_index(n, x / 2, y / 2, z / 2, 0, gm);
                    double* cell = grad_in.data() + linear_index(n, x, y, z, 0, dm);
                    for (index_t k = 0; k < c; ++k) cell[k] = gcell[k] * 0.125;
                }
    return grad_in;
}

// ---------------------------------------------------------------------------
// Upsample2

Shape5 Upsample2::out_dims(const Shape5& in) const {
    Shape5 out = in;
    out.d *= 2;
    out.h *= 2;
    out.w *= 2;
    return out;
}

VolumeTensor Upsample2::forward(const VolumeTensor& in, bool retain) {
    require_channels(in.dims(), channels_, name_);
    const Shape5& dm = in.dims();
    VolumeTensor out(out_dims(dm));
    const Shape5& om = out.dims();
    const index_t c = channels_;
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < om.n; ++n)
        for (index_t x = 0; x < om.d; ++x)
            for (index_t y = 0; y < om.h; ++y)
                for (index_t z = 0; z < om.w; ++z) {
                    const double* cell = in.data() + linear_index(n, x / 2, y / 2, z / 2, 0, dm);
                    double* ocell = out.data() + linear_index(n, x, y, z, 0, om);
                    for (index_t k = 0; k < c; ++k) ocell[k] = cell[k];
                }
    retained_ = retain;
    if (retain) saved_in_dims_ = dm;
    return out;
}

VolumeTensor Upsample2::backward(const VolumeTensor& grad_out) {
    require_retained(retained_);
    const Shape5& gm = grad_out.dims();
    const Shape5& dm = saved_in_dims_;
    VolumeTensor grad_in(dm);
    const index_t c = channels_;
#pragma omp parallel for collapse(2) schedule(static)
    for (index_t n = 0; n < dm.n; ++n)
        for (index_t x = 0; x < dm.d; ++x)
            for (index_t y = 0; y < dm.h; ++y)
                for (index_t z = 0; z < dm.w; ++z) {
                    double* cell = grad_in.data() + linear_index(n, x, y, z, 0, dm);
                    for (index_t dx = 0; dx < 2; ++dx)
                        for (index_t dy = 0; dy < 2; ++dy)
                            for (index_t dz = 0; dz < 2; ++dz) {
                                const double* gcell =
                                    grad_out.data() +
                                    linear_index(n, 2 * x + dx, 2 * y + dy, 2 * z + dz, 0, gm);
                                for (index_t k = 0; k < c; ++k) cell[k] += gcell[k];
                            }
                }
    return grad_in;
}

// ---------------------------------------------------------------------------
// GroupShiftLayer

GroupShiftLayer::GroupShiftLayer(std::shared_ptr<const PermutationTable> table,
                                 std::shared_ptr<const PermutationTable> inverse,
                                 GroupShiftConfig cfg)
    : table_(std::move(table)), inverse_(std::move(inverse)), cfg_(cfg) {
    if (!table_ || !inverse_) throw ConfigError("group shift layer needs both tables");
    name_ = "gs";
}

VolumeTensor GroupShiftLayer::forward(const VolumeTensor& in, bool retain) {
    retained_ = retain;
    return apply_permutation(in, *table_);
}

VolumeTensor GroupShiftLayer::backward(const VolumeTensor& grad_out) {
    require_retained(retained_);
    return apply_permutation(grad_out, *inverse_);
}

// ---------------------------------------------------------------------------
// LayerStack

Layer& LayerStack::push(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *layers_.back();
}

VolumeTensor LayerStack::forward(const VolumeTensor& in, bool retain) {
    VolumeTensor cur = in;
    for (auto& layer : layers_) cur = layer->forward(cur, retain);
    return cur;
}

VolumeTensor LayerStack::backward(const VolumeTensor& grad_out) {
    VolumeTensor cur = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

std::vector<ParamBlock*> LayerStack::params() {
    std::vector<ParamBlock*> out;
    for (auto& layer : layers_)
        for (ParamBlock* block : layer->params()) out.push_back(block);
    return out;
}

void LayerStack::init_params(Rng& rng) {
    for (auto& layer : layers_) layer->init_params(rng);
}

void LayerStack::zero_grads() { gsconv::zero_grads(params()); }

void zero_grads(const std::vector<ParamBlock*>& params) {
    for (ParamBlock* block : params)
        std::fill(block->grad.begin(), block->grad.end(), 0.0);
}

}  // namespace gsconv
