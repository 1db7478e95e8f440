#include "gsconv/tensor.hpp"

#include <sstream>

namespace gsconv {

std::string Shape5::str() const {
    std::ostringstream os;
    os << "(" << n << "," << d << "," << h << "," << w << "," << c << ")";
    return os.str();
}

void Shape5::validate() const {
    if (n < 1 || d < 1 || h < 1 || w < 1 || c < 1)
        throw ShapeError("invalid dims " + str() + ": every component must be >= 1");
}

index_t linear_index(index_t n, index_t x, index_t y, index_t z, index_t c, const Shape5& dims) {
    if (n < 0 || n >= dims.n || x < 0 || x >= dims.d || y < 0 || y >= dims.h || z < 0 ||
        z >= dims.w || c < 0 || c >= dims.c) {
        std::ostringstream os;
        os << "coordinate (" << n << "," << x << "," << y << "," << z << "," << c
           << ") out of range for dims " << dims.str();
        throw BoundsError(os.str());
    }
    return c + dims.c * (z + dims.w * (y + dims.h * (x + dims.d * n)));
}

namespace {

void require_same_dims(const VolumeTensor& a, const VolumeTensor& b, const char* op) {
    if (!(a.dims() == b.dims()))
        throw ShapeError(std::string(op) + ": dims mismatch " + a.dims().str() + " vs " +
                         b.dims().str());
}

}  // namespace

VolumeTensor add(const VolumeTensor& a, const VolumeTensor& b) {
    require_same_dims(a, b, "add");
    VolumeTensor out(a.dims());
    const index_t n = a.size();
    for (index_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
    return out;
}

void add_inplace(VolumeTensor& a, const VolumeTensor& b) {
    require_same_dims(a, b, "add_inplace");
    const index_t n = a.size();
    for (index_t i = 0; i < n; ++i) a[i] += b[i];
}

VolumeTensor scale(const VolumeTensor& a, double factor) {
    VolumeTensor out(a.dims());
    const index_t n = a.size();
    for (index_t i = 0; i < n; ++i) out[i] = a[i] * factor;
    return out;
}

VolumeTensor relu(const VolumeTensor& a) {
    VolumeTensor out(a.dims());
    const index_t n = a.size();
    for (index_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    return out;
}

VolumeTensor relu_grad_mask(const VolumeTensor& input, const VolumeTensor& grad) {
    require_same_dims(input, grad, "relu_grad_mask");
    VolumeTensor out(grad.dims());
    const index_t n = grad.size();
    for (index_t i = 0; i < n; ++i) out[i] = input[i] > 0.0 ? grad[i] : 0.0;
    return out;
}

double sum(const VolumeTensor& a) {
    double acc = 0.0;
    const index_t n = a.size();
    for (index_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double mean(const VolumeTensor& a) { return sum(a) / static_cast<double>(a.size()); }

void channel_mean_var(const VolumeTensor& a, std::vector<double>& mean_out,
                      std::vector<double>& var_out) {
    const Shape5& dims = a.dims();
    const index_t c = dims.c;
    const index_t rows = dims.numel() / c;
    mean_out.assign(static_cast<std::size_t>(c), 0.0);
    var_out.assign(static_cast<std::size_t>(c), 0.0);
    const double* p = a.data();
    for (index_t r = 0; r < rows; ++r, p += c)
        for (index_t k = 0; k < c; ++k) mean_out[static_cast<std::size_t>(k)] += p[k];
    for (index_t k = 0; k < c; ++k) mean_out[static_cast<std::size_t>(k)] /= static_cast<double>(rows);
    p = a.data();
    for (index_t r = 0; r < rows; ++r, p += c)
        for (index_t k = 0; k < c; ++k) {
            const double dlt = p[k] - mean_out[static_cast<std::size_t>(k)];
            var_out[static_cast<std::size_t>(k)] += dlt * dlt;
        }
    for (index_t k = 0; k < c; ++k) var_out[static_cast<std::size_t>(k)] /= static_cast<double>(rows);
}

VolumeTensor concat_channels(const VolumeTensor& a, const VolumeTensor& b) {
    const Shape5& da = a.dims();
    const Shape5& db = b.dims();
    if (da.n != db.n || da.d != db.d || da.h != db.h || da.w != db.w)
        throw ShapeError("concat_channels: spatial dims mismatch " + da.str() + " vs " + db.str());
    Shape5 out_dims = da;
    out_dims.c = da.c + db.c;
    VolumeTensor out(out_dims);
    const index_t rows = da.numel() / da.c;
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (index_t r = 0; r < rows; ++r) {
        for (index_t k = 0; k < da.c; ++k) po[k] = pa[k];
        for (index_t k = 0; k < db.c; ++k) po[da.c + k] = pb[k];
        pa += da.c;
        pb += db.c;
        po += out_dims.c;
    }
    return out;
}

void split_channels(const VolumeTensor& joined, index_t c_first, VolumeTensor& first,
                    VolumeTensor& second) {
    const Shape5& dj = joined.dims();
    if (c_first < 1 || c_first >= dj.c)
        throw ShapeError("split_channels: split point " + std::to_string(c_first) +
                         " out of range for C=" + std::to_string(dj.c));
    Shape5 d1 = dj;
    d1.c = c_first;
    Shape5 d2 = dj;
    d2.c = dj.c - c_first;
    first = VolumeTensor(d1);
    second = VolumeTensor(d2);
    const index_t rows = dj.numel() / dj.c;
    const double* pj = joined.data();
    double* p1 = first.data();
    double* p2 = second.data();
    for (index_t r = 0; r < rows; ++r) {
        for (index_t k = 0; k < c_first; ++k) p1[k] = pj[k];
        for (index_t k = 0; k < d2.c; ++k) p2[k] = pj[c_first + k];
        pj += dj.c;
        p1 += c_first;
        p2 += d2.c;
    }
}

}  // namespace gsconv
