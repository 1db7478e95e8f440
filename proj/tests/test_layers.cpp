#include <doctest.h>

#include "fd_check.hpp"
#include "gsconv/layers.hpp"
#include "gsconv/network.hpp"

using namespace gsconv;
using gsconv::testing::check_gradients;
using gsconv::testing::random_tensor;

namespace {

// Reference pointwise convolution: per-voxel dot product, no clever layout.
VolumeTensor pointwise_oracle(const VolumeTensor& in, const std::vector<double>& w,
                              const std::vector<double>& b, index_t c_out) {
    const Shape5& dm = in.dims();
    Shape5 od = dm;
    od.c = c_out;
    VolumeTensor out(od);
    for (index_t n = 0; n < dm.n; ++n)
        for (index_t x = 0; x < dm.d; ++x)
            for (index_t y = 0; y < dm.h; ++y)
                for (index_t z = 0; z < dm.w; ++z)
                    for (index_t o = 0; o < c_out; ++o) {
                        double acc = b[static_cast<std::size_t>(o)];
                        for (index_t i = 0; i < dm.c; ++i)
                            acc += w[static_cast<std::size_t>(o * dm.c + i)] * in.at(n, x, y, z, i);
                        out.at(n, x, y, z, o) = acc;
                    }
    return out;
}

// Reference 3x3x3 convolution: direct seven-loop sum with zero padding.
VolumeTensor conv3_oracle(const VolumeTensor& in, const std::vector<double>& w,
                          const std::vector<double>& b, index_t c_out) {
    const Shape5& dm = in.dims();
    Shape5 od = dm;
    od.c = c_out;
    VolumeTensor out(od);
    for (index_t n = 0; n < dm.n; ++n)
        for (index_t x = 0; x < dm.d; ++x)
            for (index_t y = 0; y < dm.h; ++y)
                for (index_t z = 0; z < dm.w; ++z)
                    for (index_t o = 0; o < c_out; ++o) {
                        double acc = b[static_cast<std::size_t>(o)];
                        for (index_t i = 0; i < dm.c; ++i)
                            for (index_t dx = -1; dx <= 1; ++dx)
                                for (index_t dy = -1; dy <= 1; ++dy)
                                    for (index_t dz = -1; dz <= 1; ++dz) {
                                        const index_t sx = x + dx, sy = y + dy, sz = z + dz;
                                        if (sx < 0 || sx >= dm.d || sy < 0 || sy >= dm.h ||
                                            sz < 0 || sz >= dm.w)
                                            continue;
                                        const index_t tap =
                                            (dx + 1) * 9 + (dy + 1) * 3 + (dz + 1);
                                        acc += w[static_cast<std::size_t>((o * dm.c + i) * 27 +
                                                                          tap)] *
                                               in.at(n, sx, sy, sz, i);
                                    }
                        out.at(n, x, y, z, o) = acc;
                    }
    return out;
}

}  // namespace

TEST_CASE("pointwise conv trivial cases") {
    PointwiseConv ident(3, 3);
    for (index_t o = 0; o < 3; ++o)
        for (index_t i = 0; i < 3; ++i)
            ident.weight().value[static_cast<std::size_t>(o * 3 + i)] = o == i ? 1.0 : 0.0;
    const VolumeTensor in = random_tensor(Shape5{1, 2, 2, 2, 3}, 1);
    const VolumeTensor out = ident.forward(in, false);
    for (index_t i = 0; i < in.size(); ++i) CHECK(out[i] == in[i]);

    PointwiseConv affine(1, 1);
    affine.weight().value[0] = 2.0;
    affine.bias().value[0] = 1.0;
    const VolumeTensor ones(Shape5{1, 2, 2, 2, 1}, 1.0);
    const VolumeTensor three = affine.forward(ones, false);
    for (index_t i = 0; i < three.size(); ++i) CHECK(three[i] == 3.0);

    CHECK_THROWS_AS(affine.forward(in, false), ShapeError);
}

TEST_CASE("pointwise conv matches the per-voxel oracle") {
    PointwiseConv conv(3, 5);
    Rng rng(17);
    conv.init_params(rng);
    const VolumeTensor in = random_tensor(Shape5{2, 3, 2, 4, 3}, 2);
    const VolumeTensor out = conv.forward(in, false);
    const VolumeTensor ref = pointwise_oracle(in, conv.weight().value, conv.bias().value, 5);
    for (index_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("pointwise conv gradients") {
    PointwiseConv conv(3, 4);
    Rng rng(19);
    conv.init_params(rng);

    // Zero upstream gradient leaves zero parameter gradients.
    const VolumeTensor in = random_tensor(Shape5{1, 2, 2, 2, 3}, 3);
    conv.forward(in, true);
    conv.backward(VolumeTensor(Shape5{1, 2, 2, 2, 4}));
    for (const double g : conv.weight().grad) CHECK(g == 0.0);
    for (const double g : conv.bias().grad) CHECK(g == 0.0);

    // Single-voxel outer-product structure.
    PointwiseConv tiny(2, 2);
    Rng rng2(23);
    tiny.init_params(rng2);
    VolumeTensor x(Shape5{1, 1, 1, 1, 2});
    x[0] = 3.0;
    x[1] = -2.0;
    VolumeTensor g(Shape5{1, 1, 1, 1, 2});
    g[0] = 0.5;
    g[1] = 4.0;
    tiny.forward(x, true);
    tiny.backward(g);
    for (index_t o = 0; o < 2; ++o)
        for (index_t i = 0; i < 2; ++i)
            CHECK(tiny.weight().grad[static_cast<std::size_t>(o * 2 + i)] ==
                  doctest::Approx(g[o] * x[i]));

    const double err = check_gradients(conv, random_tensor(Shape5{1, 2, 2, 2, 3}, 4),
                                       random_tensor(Shape5{1, 2, 2, 2, 4}, 5));
    CHECK(err < 1e-6);
}

TEST_CASE("conv3 delta kernel reproduces pointwise behavior") {
    Conv3 conv(2, 3);
    PointwiseConv pw(2, 3);
    Rng rng(29);
    pw.init_params(rng);
    // Center tap (dx,dy,dz)=(0,0,0) is flat offset 13.
    for (index_t o = 0; o < 3; ++o) {
        for (index_t i = 0; i < 2; ++i)
            conv.weight().value[static_cast<std::size_t>((o * 2 + i) * 27 + 13)] =
                pw.weight().value[static_cast<std::size_t>(o * 2 + i)];
    }
    const VolumeTensor in = random_tensor(Shape5{1, 3, 3, 3, 2}, 31);
    const VolumeTensor a = conv.forward(in, false);
    const VolumeTensor b = pw.forward(in, false);
    for (index_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("conv3 all-ones kernel sums the 27-neighborhood") {
    Conv3 conv(1, 1);
    std::fill(conv.weight().value.begin(), conv.weight().value.end(), 1.0);
    const VolumeTensor ones(Shape5{1, 4, 4, 4, 1}, 1.0);
    const VolumeTensor out = conv.forward(ones, false);
    CHECK(out.at(0, 1, 1, 1, 0) == 27.0);  // interior voxel
    CHECK(out.at(0, 0, 0, 0, 0) == 8.0);   // corner: zero padding
}

TEST_CASE("conv3 matches the direct-convolution oracle") {
    Conv3 conv(2, 3);
    Rng rng(37);
    conv.init_params(rng);
    const VolumeTensor in = random_tensor(Shape5{1, 3, 4, 3, 2}, 38);
    const VolumeTensor out = conv.forward(in, false);
    const VolumeTensor ref = conv3_oracle(in, conv.weight().value, conv.bias().value, 3);
    for (index_t i = 0; i < out.size(); ++i)
        CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("conv3 gradients") {
    Conv3 conv(2, 2);
    Rng rng(41);
    conv.init_params(rng);
    const double err = check_gradients(conv, random_tensor(Shape5{1, 3, 3, 3, 2}, 42),
                                       random_tensor(Shape5{1, 3, 3, 3, 2}, 43));
    CHECK(err < 1e-6);
}

TEST_CASE("instance norm forward semantics") {
    InstanceNorm norm(2);
    const VolumeTensor constant(Shape5{1, 2, 2, 2, 2}, 3.25);
    const VolumeTensor out = norm.forward(constant, false);
    for (index_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(0.0));

    // After normalization the per-channel stats are the shift and scale^2.
    InstanceNorm norm2(2);
    norm2.params()[0]->value = {2.0, 0.5};   // scale
    norm2.params()[1]->value = {1.0, -1.0};  // shift
    const VolumeTensor in = random_tensor(Shape5{1, 4, 4, 4, 2}, 47);
    const VolumeTensor out2 = norm2.forward(in, false);
    std::vector<double> mu, var;
    channel_mean_var(out2, mu, var);
    CHECK(mu[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(mu[1] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(var[0] == doctest::Approx(4.0).epsilon(1e-3));   // eps-corrected
    CHECK(var[1] == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("instance norm gradients") {
    InstanceNorm norm(3);
    norm.params()[0]->value = {1.2, 0.8, -0.5};
    norm.params()[1]->value = {0.1, -0.2, 0.3};
    const double err = check_gradients(norm, random_tensor(Shape5{2, 3, 3, 3, 3}, 51),
                                       random_tensor(Shape5{2, 3, 3, 3, 3}, 52));
    CHECK(err < 1e-5);
}

TEST_CASE("avgpool basics and gradients") {
    AvgPool2 pool(1);
    const VolumeTensor constant(Shape5{1, 4, 4, 4, 1}, 2.5);
    const VolumeTensor pooled = pool.forward(constant, false);
    CHECK(pooled.dims() == Shape5{1, 2, 2, 2, 1});
    for (index_t i = 0; i < pooled.size(); ++i) CHECK(pooled[i] == 2.5);

    // A 2x2x2 block holding 1..8 averages to 4.5.
    VolumeTensor block(Shape5{1, 2, 2, 2, 1});
    for (index_t i = 0; i < 8; ++i) block[i] = static_cast<double>(i + 1);
    AvgPool2 pool1(1);
    const VolumeTensor one = pool1.forward(block, false);
    CHECK(one.size() == 1);
    CHECK(one[0] == 4.5);

    VolumeTensor odd(Shape5{1, 3, 4, 4, 1});
    CHECK_THROWS_AS(pool.forward(odd, false), ShapeError);

    AvgPool2 pool2(2);
    const double err = check_gradients(pool2, random_tensor(Shape5{1, 4, 4, 4, 2}, 53),
                                       random_tensor(Shape5{1, 2, 2, 2, 2}, 54));
    CHECK(err < 1e-8);
}

TEST_CASE("upsample basics and gradients") {
    Upsample2 up(1);
    VolumeTensor single(Shape5{1, 1, 1, 1, 1});
    single[0] = 7.0;
    const VolumeTensor eight = up.forward(single, false);
    CHECK(eight.dims() == Shape5{1, 2, 2, 2, 1});
    for (index_t i = 0; i < 8; ++i) CHECK(eight[i] == 7.0);

    // Average pooling inverts nearest upsampling block-exactly (up to the
    // rounding of the 8-term accumulation).
    const VolumeTensor f = random_tensor(Shape5{1, 2, 4, 2, 3}, 59);
    Upsample2 up3(3);
    AvgPool2 pool3(3);
    const VolumeTensor round = pool3.forward(up3.forward(f, false), false);
    for (index_t i = 0; i < f.size(); ++i)
        CHECK(round[i] == doctest::Approx(f[i]).epsilon(1e-14));

    Upsample2 up2(2);
    const double err = check_gradients(up2, random_tensor(Shape5{1, 2, 2, 2, 2}, 61),
                                       random_tensor(Shape5{1, 4, 4, 4, 2}, 62));
    CHECK(err < 1e-8);
}

TEST_CASE("group shift layer gradients are exact") {
    const Shape5 dims{1, 4, 4, 4, 8};
    const GroupShiftConfig cfg = GroupShiftConfig::from_fraction(2, 2, 1, dims.c, 0.5);
    auto fwd = std::make_shared<PermutationTable>(build_permutation(cfg, dims));
    auto inv = std::make_shared<PermutationTable>(invert_permutation(*fwd));
    GroupShiftLayer gs(fwd, inv, cfg);
    const double err =
        check_gradients(gs, random_tensor(dims, 63), random_tensor(dims, 64));
    CHECK(err < 1e-8);
}

TEST_CASE("two-layer pointwise + shift stack gradient check") {
    const Shape5 dims{1, 4, 4, 4, 4};
    const GroupShiftConfig cfg = GroupShiftConfig::from_fraction(2, 1, 1, dims.c, 0.5);
    auto fwd = std::make_shared<PermutationTable>(build_permutation(cfg, dims));
    auto inv = std::make_shared<PermutationTable>(invert_permutation(*fwd));

    LayerStack stack;
    stack.emplace<PointwiseConv>(4, 4);
    stack.push(std::make_unique<GroupShiftLayer>(fwd, inv, cfg));
    stack.emplace<PointwiseConv>(4, 3);
    Rng rng(67);
    stack.init_params(rng);

    Shape5 out_dims = dims;
    out_dims.c = 3;
    const double err =
        check_gradients(stack, random_tensor(dims, 68), random_tensor(out_dims, 69));
    CHECK(err < 1e-6);
}

TEST_CASE("backward without forward is a state error") {
    PointwiseConv conv(2, 2);
    CHECK_THROWS_AS(conv.backward(VolumeTensor(Shape5{1, 1, 1, 1, 2})), StateError);
    ReluLayer relu_layer(2);
    CHECK_THROWS_AS(relu_layer.backward(VolumeTensor(Shape5{1, 1, 1, 1, 2})), StateError);
}

TEST_CASE("pointwise-only stacks stay voxel-local") {
    LayerStack stack;
    stack.emplace<PointwiseConv>(2, 6);
    stack.emplace<ReluLayer>(6);
    stack.emplace<PointwiseConv>(6, 3);
    Rng rng(71);
    stack.init_params(rng);
    // Positive inputs keep the relu active so the probe is not masked.
    const VolumeTensor in = random_tensor(Shape5{1, 4, 4, 4, 2}, 72, 2.0, 0.25);
    const auto support = effective_rf_support(stack, in, 1, 2, 3);
    REQUIRE(support.size() == 1);
    CHECK(support[0] == std::array<index_t, 3>{1, 2, 3});
}
