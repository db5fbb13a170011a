#include <gtest/gtest.h>

#include <cmath>

#include "cglo/ops.hpp"
#include "test_util.hpp"

using namespace cglo;
using cglo::testing::bitwise_equal;
using cglo::testing::random_tensor;

namespace {

// Gather formulation: each output pixel sums the kernel taps whose scatter
// lands on it. Independent of the scatter loop in ops::conv_transpose2d.
Tensor conv_transpose_gather(const Tensor& in, const Tensor& k, const Tensor& bias, long stride, long pad) {
    const long cin = in.dim(0), h = in.dim(1), w = in.dim(2);
    const long cout = k.dim(1), ks = k.dim(2);
    const long oh = (h - 1) * stride - 2 * pad + ks, ow = (w - 1) * stride - 2 * pad + ks;
    Tensor out({static_cast<std::size_t>(cout), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    for (long co = 0; co < cout; ++co)
        for (long oy = 0; oy < oh; ++oy)
            for (long ox = 0; ox < ow; ++ox) {
                Real s = bias[co];
                for (long ci = 0; ci < cin; ++ci)
                    for (long ky = 0; ky < ks; ++ky)
                        for (long kx = 0; kx < ks; ++kx) {
                            const long ny = oy + pad - ky, nx = ox + pad - kx;
                            if (ny < 0 || nx < 0 || ny % stride || nx % stride) continue;
                            const long y = ny / stride, x = nx / stride;
                            if (y >= h || x >= w) continue;
                            s += in[(ci * h + y) * w + x] * k[((ci * cout + co) * ks + ky) * ks + kx];
                        }
                out[(co * oh + oy) * ow + ox] = s;
            }
    return out;
}

}  // namespace

TEST(ConvTranspose, ScattersSinglePixel) {
    Tensor in({1, 1, 1}, {2.0});
    Tensor k({1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor out = ops::conv_transpose2d(in, k, Tensor({1}), {2, 0});
    EXPECT_EQ(out, Tensor({1, 2, 2}, {2, 0, 0, 2}));
}

TEST(ConvTranspose, ZeroInputGivesBias) {
    Tensor in({3, 4, 4});
    Tensor k = random_tensor({3, 2, 4, 4}, 1);
    Tensor out = ops::conv_transpose2d(in, k, Tensor({2}, {0.25, -1.5}), {2, 1});
    ASSERT_EQ(out.shape(), (Shape{2, 8, 8}));
    for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(out[i], 0.25);
    for (std::size_t i = 64; i < 128; ++i) EXPECT_EQ(out[i], -1.5);
}

TEST(ConvTranspose, OnesKernelHandExpansion) {
    Tensor in({1, 2, 2}, {1, 2, 3, 4});
    Tensor k({1, 1, 2, 2}, 1.0);
    const Tensor expected({1, 3, 3}, {1, 3, 2, 4, 10, 6, 3, 7, 4});
    EXPECT_EQ(ops::conv_transpose2d(in, k, Tensor({1}), {1, 0}), expected);
    EXPECT_EQ(conv_transpose_gather(in, k, Tensor({1}), 1, 0), expected);
}

TEST(ConvTranspose, MatchesGatherOracleOnRandomInputs) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t stride = 1 + seed % 2, pad = seed % 3 == 0 ? 0 : 1;
        Tensor in = random_tensor({3, 4, 5}, 10 + seed);
        Tensor k = random_tensor({3, 2, 4, 4}, 20 + seed);
        Tensor b = random_tensor({2}, 30 + seed);
        Tensor got = ops::conv_transpose2d(in, k, b, {stride, pad});
        Tensor want = conv_transpose_gather(in, k, b, static_cast<long>(stride), static_cast<long>(pad));
        ASSERT_EQ(got.shape(), want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(ConvTranspose, DcganGeometryDoublesSide) {
    Tensor out = ops::conv_transpose2d(Tensor({4, 4, 4}), Tensor({4, 2, 4, 4}), Tensor({2}), {2, 1});
    EXPECT_EQ(out.shape(), (Shape{2, 8, 8}));
}

TEST(ConvTranspose, LinearInInputWithoutBias) {
    Tensor x = random_tensor({2, 3, 3}, 5), y = random_tensor({2, 3, 3}, 6);
    Tensor k = random_tensor({2, 3, 4, 4}, 7);
    const Tensor zero_bias({3});
    const Real a = 0.7, b = -1.3;
    Tensor mix(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
    const auto fx = ops::conv_transpose2d(x, k, zero_bias, {2, 1});
    const auto fy = ops::conv_transpose2d(y, k, zero_bias, {2, 1});
    const auto fm = ops::conv_transpose2d(mix, k, zero_bias, {2, 1});
    for (std::size_t i = 0; i < fm.size(); ++i) EXPECT_NEAR(fm[i], a * fx[i] + b * fy[i], 1e-12);
}

TEST(ConvTranspose, ChannelMismatchNamesBothShapes) {
    try {
        ops::conv_transpose2d(Tensor({2, 3, 3}), Tensor({3, 1, 2, 2}), Tensor({1}), {1, 0});
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2x3x3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(3x1x2x2)"), std::string::npos) << msg;
    }
}

TEST(ConvTranspose, RejectsNonPositiveOutput) {
    EXPECT_THROW(ops::conv_transpose2d(Tensor({1, 1, 1}), Tensor({1, 1, 2, 2}), Tensor({1}), {1, 1}), ShapeError);
}

TEST(Dense, Examples) {
    EXPECT_EQ(ops::dense(Tensor::vector({3, -1}), Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2})), Tensor::vector({3, -1}));
    EXPECT_EQ(ops::dense(Tensor::vector({8, 9}), Tensor({2, 2}), Tensor::vector({5, 5})), Tensor::vector({5, 5}));
    EXPECT_EQ(ops::dense(Tensor::vector({1, 1}), Tensor({2, 2}, {1, 2, 3, 4}), Tensor::vector({1, 0})), Tensor::vector({4, 7}));
}

TEST(Dense, DimensionMismatch) {
    EXPECT_THROW(ops::dense(Tensor::vector({1, 2, 3}), Tensor({2, 2}), Tensor({2})), ShapeError);
    EXPECT_THROW(ops::dense(Tensor::vector({1, 2}), Tensor({2, 2}), Tensor({3})), ShapeError);
}

TEST(Activations, Examples) {
    EXPECT_EQ(ops::relu(Tensor::vector({-1, 0, 2})), Tensor::vector({0, 0, 2}));
    EXPECT_EQ(ops::tanh(Tensor::vector({0}))[0], 0.0);
    EXPECT_NEAR(ops::tanh(Tensor::vector({1}))[0], 0.761594, 5e-7);
}

TEST(Activations, TanhStrictlyInsideUnitInterval) {
    Tensor t = random_tensor({1000}, 3, -5.0, 5.0);
    const Tensor out = ops::tanh(t);
    for (Real v : out.data()) {
        EXPECT_GT(v, -1.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(L1Loss, Examples) {
    Tensor a = random_tensor({7}, 4);
    EXPECT_EQ(ops::l1_loss(a, a), 0.0);
    EXPECT_EQ(ops::l1_loss(Tensor::vector({1, 0}), Tensor::vector({0, 0})), 0.5);
    EXPECT_NEAR(ops::l1_loss(Tensor::vector({1, -1, 3}), Tensor::vector({0, 1, 1})), 5.0 / 3.0, 1e-15);
}

TEST(L1Loss, SymmetricNonNegativeZeroOnlyWhenEqual) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        Tensor a = random_tensor({3, 4}, s), b = random_tensor({3, 4}, s + 1000);
        const Real ab = ops::l1_loss(a, b);
        EXPECT_EQ(ab, ops::l1_loss(b, a));
        EXPECT_GT(ab, 0.0);
    }
}

TEST(L1Loss, ShapeMismatch) { EXPECT_THROW(ops::l1_loss(Tensor({2}), Tensor({3})), ShapeError); }

TEST(L1Loss, SubgradientAtZeroIsZero) {
    Tensor g = ops::l1_loss_vjp(Tensor::vector({1, 1, -2}), Tensor::vector({1, 0, 0}), 1.0);
    EXPECT_EQ(g, Tensor::vector({0, 1.0 / 3, -1.0 / 3}));
}

TEST(Ops, Deterministic) {
    Tensor in = random_tensor({4, 4, 4}, 8), k = random_tensor({4, 3, 4, 4}, 9), b = random_tensor({3}, 10);
    EXPECT_TRUE(bitwise_equal(ops::conv_transpose2d(in, k, b, {2, 1}), ops::conv_transpose2d(in, k, b, {2, 1})));
}
