#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cglo/generator.hpp"
#include "cglo/trainer.hpp"
#include "test_util.hpp"

using namespace cglo;
using cglo::testing::bitwise_equal;
using cglo::testing::random_tensor;

namespace {

GeneratorConfig small_config(std::uint64_t seed = 0, std::size_t size = 16, std::size_t channels = 1) {
    GeneratorConfig c;
    c.latent_dim = 8;
    c.output_size = size;
    c.channels = channels;
    c.base_feat = 8;
    c.seed = seed;
    return c;
}

LatentCode code(std::size_t d, std::uint64_t seed) {
    return init_latents(1, d, seed).front();
}

}  // namespace

TEST(GeneratorInit, SameSeedSameParams) {
    EXPECT_EQ(init_params(small_config(7)), init_params(small_config(7)));
    EXPECT_NE(init_params(small_config(7)).tensors, init_params(small_config(8)).tensors);
}

TEST(GeneratorInit, BiasesZeroWeightsSmall) {
    const auto p = init_params(small_config(3));
    for (const auto& [name, t] : p.tensors) {
        if (name.ends_with(".bias")) {
            for (Real v : t.data()) EXPECT_EQ(v, 0.0) << name;
        } else {
            Real s = 0.0;
            for (Real v : t.data()) s += v * v;
            EXPECT_NEAR(std::sqrt(s / t.size()), 0.02, 0.006) << name;
        }
    }
}

TEST(GeneratorLayout, Size16HasTwoUpsamplingLayers) {
    const auto layout = param_layout(small_config());
    ASSERT_EQ(layout.size(), 6u);
    EXPECT_EQ(layout[0].second, (Shape{8 * 16, 9}));
    EXPECT_EQ(layout[2].first, "deconv0.kernel");
    EXPECT_EQ(layout[2].second, (Shape{8, 4, 4, 4}));
    EXPECT_EQ(layout[4].second, (Shape{4, 1, 4, 4}));
    EXPECT_EQ(layout[5].second, (Shape{1}));
}

TEST(GeneratorLayout, FeatureCountNeverDropsBelowOne) {
    auto c = small_config(0, 64);
    c.base_feat = 2;
    EXPECT_EQ(c.features_at(0), 2u);
    EXPECT_EQ(c.features_at(1), 1u);
    EXPECT_EQ(c.features_at(2), 1u);
    EXPECT_EQ(c.features_at(4), 1u);
}

TEST(GeneratorForward, ShapeGrid) {
    for (std::size_t size : {8, 16, 32, 64}) {
        for (std::size_t ch : {1, 3}) {
            auto cfg = small_config(1, size, ch);
            cfg.base_feat = 4;
            const auto p = init_params(cfg);
            const Tensor out = forward(p, code(8, 2), Condition::foreground());
            EXPECT_EQ(out.shape(), (Shape{ch, size, size}));
        }
    }
}

TEST(GeneratorForward, ZeroParamsGiveZeroPatch) {
    auto p = init_params(small_config());
    for (auto& [name, t] : p.tensors) t.fill(0.0);
    const Tensor out = forward(p, code(8, 4), Condition::foreground());
    for (Real v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(GeneratorForward, OutputStrictlyInsideUnitInterval) {
    auto p = init_params(small_config(5));
    for (auto& [name, t] : p.tensors) {
        for (auto& v : t.data()) v *= 100.0;
    }
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Tensor out = forward(p, code(8, s), Condition(static_cast<Real>(s % 2)));
        for (Real v : out.data()) {
            EXPECT_GE(v, -1.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(GeneratorForward, ConditionChangesOutput) {
    const auto p = init_params(small_config(6));
    const auto z = code(8, 9);
    EXPECT_FALSE(bitwise_equal(forward(p, z, Condition::background()), forward(p, z, Condition::foreground())));
}

TEST(GeneratorForward, BatchMatchesSingles) {
    const auto p = init_params(small_config(11));
    const auto zs = init_latents(8, 8, 12);
    std::vector<Condition> cs;
    for (std::size_t i = 0; i < 8; ++i) cs.emplace_back(static_cast<Real>(i % 2));
    const auto batch = forward_batch(p, zs, cs);
    ASSERT_EQ(batch.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_TRUE(bitwise_equal(batch[i], forward(p, zs[i], cs[i])));

    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::vector<LatentCode> pz;
    std::vector<Condition> pc;
    for (auto i : perm) {
        pz.push_back(zs[i]);
        pc.push_back(cs[i]);
    }
    const auto permuted = forward_batch(p, pz, pc);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_TRUE(bitwise_equal(permuted[k], batch[perm[k]]));
}

TEST(GeneratorForward, Errors) {
    const auto p = init_params(small_config());
    EXPECT_THROW(forward(p, code(7, 0), Condition::background()), ShapeError);
    EXPECT_THROW(forward_batch(p, init_latents(2, 8, 0), {Condition::background()}), ShapeError);
    EXPECT_THROW(Condition(0.5), ConfigError);
    auto bad = small_config(0, 24);
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = small_config(0, 16, 2);
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(GeneratorParamsCheck, DetectsWrongLayoutAndNonFinite) {
    auto p = init_params(small_config());
    EXPECT_NO_THROW(validate_params(p));
    auto q = p;
    q.tensors[1].second[0] = std::nan("");
    EXPECT_THROW(validate_params(q), NumericError);
    q = p;
    q.config.latent_dim = 9;
    EXPECT_THROW(validate_params(q), ShapeError);
}

TEST(GeneratorGradients, FiniteDifferenceOverWeightsAndLatent) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto p = init_params(small_config(seed));
        const Tensor target = random_tensor({1, 16, 16}, 100 + seed, -0.9, 0.9);
        const auto r = check_generator_gradients(p, code(8, seed + 50), Condition(static_cast<Real>(seed % 2)), target,
                                                 40, seed);
        EXPECT_TRUE(r.passed) << "seed " << seed << " max rel " << r.max_rel_error;
        EXPECT_LT(r.max_rel_error, 1e-3);
    }
}

TEST(GeneratorGradients, LatentGradientMatchesCentralDifferenceEverywhere) {
    const auto p = init_params(small_config(21, 8));
    const Tensor target = random_tensor({1, 8, 8}, 22);
    const auto z = code(8, 23);
    const auto g = reconstruction_grad(p, z, Condition::foreground(), target, false, true);
    ASSERT_EQ(g.latent.size(), 8u);
    EXPECT_TRUE(g.weights.empty());
    for (std::size_t k = 0; k < 8; ++k) {
        LatentCode a = z, b = z;
        a.values[k] += 1e-5;
        b.values[k] -= 1e-5;
        const Real n = (ops::l1_loss(forward(p, a, Condition::foreground()), target) -
                        ops::l1_loss(forward(p, b, Condition::foreground()), target)) / 2e-5;
        EXPECT_LT(relative_error(g.latent[k], n), 1e-3) << k;
    }
}

TEST(GeneratorGradients, LossMatchesForward) {
    const auto p = init_params(small_config(30));
    const Tensor target = random_tensor({1, 16, 16}, 31);
    const auto z = code(8, 32);
    const auto g = reconstruction_grad(p, z, Condition::background(), target, true, false);
    EXPECT_EQ(g.loss, ops::l1_loss(forward(p, z, Condition::background()), target));
    EXPECT_EQ(g.weights.size(), p.tensors.size());
    EXPECT_THROW(reconstruction_grad(p, z, Condition::background(), Tensor({1, 8, 8}), true, false), ShapeError);
}
