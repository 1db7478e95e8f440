#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsconv/errors.hpp"

namespace gsconv {

using index_t = std::int64_t;

// Dimensions of a rank-5 volume: batch N, depth D, height H, width W,
// channels C. Element order is fixed library-wide: N-major, then D, H, W,
// with C fastest-varying.
struct Shape5 {
    index_t n{1};
    index_t d{1};
    index_t h{1};
    index_t w{1};
    index_t c{1};

    index_t numel() const { return n * d * h * w * c; }
    index_t per_sample() const { return d * h * w * c; }
    index_t spatial() const { return d * h * w; }

    bool operator==(const Shape5&) const = default;

    std::string str() const;
    void validate() const;  // every component >= 1
};

// flat = c + C*(z + W*(y + H*(x + D*n))); bijective over the coordinate box.
index_t linear_index(index_t n, index_t x, index_t y, index_t z, index_t c, const Shape5& dims);

// Dense 64-bit real tensor with the library's fixed element order.
class VolumeTensor {
public:
    VolumeTensor() = default;
    explicit VolumeTensor(const Shape5& dims, double fill = 0.0)
        : dims_(dims), data_(static_cast<std::size_t>((dims.validate(), dims.numel())), fill) {}

    const Shape5& dims() const { return dims_; }
    index_t size() const { return static_cast<index_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& buffer() { return data_; }
    const std::vector<double>& buffer() const { return data_; }

    double& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // Bounds-checked coordinate access.
    double& at(index_t n, index_t x, index_t y, index_t z, index_t c) {
        return data_[static_cast<std::size_t>(linear_index(n, x, y, z, c, dims_))];
    }
    double at(index_t n, index_t x, index_t y, index_t z, index_t c) const {
        return data_[static_cast<std::size_t>(linear_index(n, x, y, z, c, dims_))];
    }

private:
    Shape5 dims_{};
    std::vector<double> data_;
};

// Elementwise ops. Shapes must match exactly; there is no broadcasting.
VolumeTensor add(const VolumeTensor& a, const VolumeTensor& b);
void add_inplace(VolumeTensor& a, const VolumeTensor& b);
VolumeTensor scale(const VolumeTensor& a, double factor);
VolumeTensor relu(const VolumeTensor& a);
// grad masked by (input > 0); the backward half of relu.
VolumeTensor relu_grad_mask(const VolumeTensor& input, const VolumeTensor& grad);

// Reductions accumulate in 64-bit in a fixed order.
double sum(const VolumeTensor& a);
double mean(const VolumeTensor& a);
// Per-channel mean and (population) variance over N*D*H*W.
void channel_mean_var(const VolumeTensor& a, std::vector<double>& mean_out,
                      std::vector<double>& var_out);

// Channel-axis concatenation / split for skip connections. All tensors must
// agree on (N, D, H, W).
VolumeTensor concat_channels(const VolumeTensor& a, const VolumeTensor& b);
void split_channels(const VolumeTensor& joined, index_t c_first, VolumeTensor& first,
                    VolumeTensor& second);

}  // namespace gsconv
