#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "gsconv/io.hpp"
#include "gsconv/rng.hpp"
#include "gsconv/tensor.hpp"

using namespace gsconv;

namespace {

// Independent oracle: walk the coordinate box in the documented order
// (N-major, C fastest) and count how many coordinates precede the query.
index_t enumeration_index(index_t qn, index_t qx, index_t qy, index_t qz, index_t qc,
                          const Shape5& dims) {
    index_t pos = 0;
    for (index_t n = 0; n < dims.n; ++n)
        for (index_t x = 0; x < dims.d; ++x)
            for (index_t y = 0; y < dims.h; ++y)
                for (index_t z = 0; z < dims.w; ++z)
                    for (index_t c = 0; c < dims.c; ++c) {
                        if (n == qn && x == qx && y == qy && z == qz && c == qc) return pos;
                        ++pos;
                    }
    return -1;
}

}  // namespace

TEST_CASE("linear_index basic examples") {
    const Shape5 dims{2, 3, 3, 3, 4};
    CHECK(linear_index(0, 0, 0, 0, 0, dims) == 0);
    CHECK(linear_index(0, 0, 0, 0, 1, dims) == 1);  // channel fastest

    const Shape5 small{1, 2, 2, 2, 2};
    CHECK(enumeration_index(0, 1, 0, 0, 0, small) == 8);
    CHECK(linear_index(0, 1, 0, 0, 0, small) == 8);
}

TEST_CASE("linear_index matches enumeration oracle and is a bijection") {
    const Shape5 dims{2, 3, 3, 3, 4};
    std::set<index_t> seen;
    for (index_t n = 0; n < dims.n; ++n)
        for (index_t x = 0; x < dims.d; ++x)
            for (index_t y = 0; y < dims.h; ++y)
                for (index_t z = 0; z < dims.w; ++z)
                    for (index_t c = 0; c < dims.c; ++c) {
                        const index_t flat = linear_index(n, x, y, z, c, dims);
                        CHECK(flat == enumeration_index(n, x, y, z, c, dims));
                        CHECK(seen.insert(flat).second);
                    }
    CHECK(static_cast<index_t>(seen.size()) == dims.numel());
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == dims.numel() - 1);
}

TEST_CASE("linear_index rejects out-of-range coordinates") {
    const Shape5 dims{1, 2, 2, 2, 2};
    CHECK_THROWS_AS(linear_index(0, 2, 0, 0, 0, dims), BoundsError);
    CHECK_THROWS_AS(linear_index(1, 0, 0, 0, 0, dims), BoundsError);
    CHECK_THROWS_AS(linear_index(0, 0, 0, 0, -1, dims), BoundsError);
}

TEST_CASE("elementwise ops") {
    VolumeTensor t(Shape5{1, 1, 1, 1, 3});
    t[0] = -1.0;
    t[1] = 0.0;
    t[2] = 2.0;
    const VolumeTensor r = relu(t);
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 2.0);

    const VolumeTensor zero(Shape5{1, 2, 2, 2, 2});
    CHECK(sum(zero) == 0.0);

    VolumeTensor m(Shape5{1, 1, 1, 4, 1});
    m[0] = 1;
    m[1] = 2;
    m[2] = 3;
    m[3] = 4;
    CHECK(mean(m) == doctest::Approx(2.5));

    VolumeTensor other(Shape5{1, 1, 1, 1, 2});
    CHECK_THROWS_AS(add(t, other), ShapeError);
}

TEST_CASE("scale round trip") {
    Rng rng(3);
    VolumeTensor t(Shape5{1, 2, 3, 2, 4});
    for (index_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    for (const double a : {2.0, 0.5}) {
        const VolumeTensor back = scale(scale(t, a), 1.0 / a);
        for (index_t i = 0; i < t.size(); ++i)
            CHECK(back[i] == doctest::Approx(t[i]).epsilon(1e-15));
    }
}

TEST_CASE("relu_grad_mask") {
    VolumeTensor in(Shape5{1, 1, 1, 1, 3});
    in[0] = -1.0;
    in[1] = 0.0;
    in[2] = 5.0;
    VolumeTensor g(in.dims());
    g[0] = g[1] = g[2] = 2.0;
    const VolumeTensor masked = relu_grad_mask(in, g);
    CHECK(masked[0] == 0.0);
    CHECK(masked[1] == 0.0);
    CHECK(masked[2] == 2.0);
}

TEST_CASE("channel mean/var") {
    VolumeTensor t(Shape5{1, 1, 1, 2, 2});
    t.at(0, 0, 0, 0, 0) = 1.0;
    t.at(0, 0, 0, 1, 0) = 3.0;
    t.at(0, 0, 0, 0, 1) = 5.0;
    t.at(0, 0, 0, 1, 1) = 5.0;
    std::vector<double> mu, var;
    channel_mean_var(t, mu, var);
    CHECK(mu[0] == doctest::Approx(2.0));
    CHECK(var[0] == doctest::Approx(1.0));
    CHECK(mu[1] == doctest::Approx(5.0));
    CHECK(var[1] == doctest::Approx(0.0));
}

TEST_CASE("concat and split channels round trip") {
    Rng rng(5);
    VolumeTensor a(Shape5{2, 2, 2, 2, 3});
    VolumeTensor b(Shape5{2, 2, 2, 2, 2});
    for (index_t i = 0; i < a.size(); ++i) a[i] = rng.normal();
    for (index_t i = 0; i < b.size(); ++i) b[i] = rng.normal();
    const VolumeTensor joined = concat_channels(a, b);
    CHECK(joined.dims().c == 5);
    VolumeTensor a2, b2;
    split_channels(joined, 3, a2, b2);
    for (index_t i = 0; i < a.size(); ++i) CHECK(a2[i] == a[i]);
    for (index_t i = 0; i < b.size(); ++i) CHECK(b2[i] == b[i]);
}

TEST_CASE("GSV1 round trip") {
    const std::string dir = (std::filesystem::temp_directory_path() / "gsconv_io_test").string();
    std::filesystem::create_directories(dir);
    Rng rng(9);
    VolumeTensor t(Shape5{2, 2, 3, 2, 4});
    for (index_t i = 0; i < t.size(); ++i) t[i] = rng.normal();

    const std::string f64_path = dir + "/t64.gsv";
    write_gsv(f64_path, t, GsvDtype::F64);
    const VolumeTensor t64 = read_gsv(f64_path);
    CHECK(t64.dims() == t.dims());
    for (index_t i = 0; i < t.size(); ++i) CHECK(t64[i] == t[i]);

    const std::string f32_path = dir + "/t32.gsv";
    write_gsv(f32_path, t, GsvDtype::F32);
    const VolumeTensor t32 = read_gsv(f32_path);
    for (index_t i = 0; i < t.size(); ++i)
        CHECK(t32[i] == doctest::Approx(t[i]).epsilon(1e-6));

    const std::string bad_path = dir + "/bad.gsv";
    {
        std::ofstream out(bad_path, std::ios::binary);
        out << "NOTAGSV1FILE";
    }
    CHECK_THROWS_AS(read_gsv(bad_path), IoError);
    CHECK_THROWS_AS(read_gsv(dir + "/missing.gsv"), IoError);
}
