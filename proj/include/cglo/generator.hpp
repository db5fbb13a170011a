#pragma once

// Conditional deconvolution generator: (z, c) -> CxSxS patch.
//
//   [z ; c] -> dense -> reshape(F x 4 x 4) -> relu -> deconv(stride 2) -> relu
//           -> ... -> deconv(stride 2) -> tanh
//
// Every deconvolution doubles the spatial side (kernel 4, stride 2, pad 1)
// and halves the feature count, the last one emitting `channels` maps.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cglo/autograd.hpp"
#include "cglo/gradcheck.hpp"
#include "cglo/ops.hpp"
#include "cglo/tensor.hpp"

namespace cglo {

struct GeneratorConfig {
    std::size_t latent_dim = 128;
    std::size_t cond_dim = 1;
    std::size_t output_size = 64;
    std::size_t channels = 1;
    std::size_t base_feat = 64;
    std::uint64_t seed = 0;

    std::size_t num_upsample() const { return static_cast<std::size_t>(std::countr_zero(output_size / 4)); }

    /// Feature maps entering upsampling layer `layer` (0 is the 4x4 stage).
    std::size_t features_at(std::size_t layer) const {
        if (layer >= num_upsample()) return channels;
        return std::max<std::size_t>(1, base_feat >> layer);
    }

    void validate() const {
        if (latent_dim < 1) throw ConfigError("generator.latent_dim must be >= 1");
        if (cond_dim != 1) throw ConfigError("generator.cond_dim must be 1");
        if (output_size != 8 && output_size != 16 && output_size != 32 && output_size != 64) {
            throw ConfigError("generator.output_size must be one of 8, 16, 32, 64 (got " +
                              std::to_string(output_size) + ")");
        }
        if (channels != 1 && channels != 3) throw ConfigError("generator.channels must be 1 or 3");
        if (base_feat < 1) throw ConfigError("generator.base_feat must be >= 1");
    }

    Shape patch_shape() const { return {channels, output_size, output_size}; }

    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Binary condition label: 0 = background, 1 = foreground.
class Condition {
public:
    constexpr Condition() = default;

    explicit Condition(Real value) : value_(value) {
        if (value != 0.0 && value != 1.0) {
            throw ConfigError("condition label must be exactly 0 or 1, got " + std::to_string(value));
        }
    }

    static Condition background() { return Condition(0.0); }
    static Condition foreground() { return Condition(1.0); }

    constexpr Real value() const noexcept { return value_; }
    constexpr bool is_foreground() const noexcept { return value_ == 1.0; }

    friend constexpr bool operator==(Condition, Condition) = default;

private:
    Real value_ = 0.0;
};

/// A latent code z. The ball constraint is maintained by the trainer.
struct LatentCode {
    std::vector<Real> values;

    std::size_t size() const noexcept { return values.size(); }

    Real norm() const {
        Real s = 0.0;
        for (Real v : values) s += v * v;
        return std::sqrt(s);
    }

    Tensor as_tensor() const { return Tensor({values.size()}, values); }

    friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

/// Weights of the generator together with the config that shaped them.
struct GeneratorParams {
    GeneratorConfig config;
    NamedTensors tensors;

    friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

namespace detail {

inline std::string kernel_name(std::size_t layer) { return "deconv" + std::to_string(layer) + ".kernel"; }
inline std::string bias_name(std::size_t layer) { return "deconv" + std::to_string(layer) + ".bias"; }

inline constexpr ops::ConvTransposeGeometry kUpsample{2, 1};
inline constexpr std::size_t kKernel = 4;

}  // namespace detail

inline const char* const kLatentLeaf = "z";

/// Parameter shapes in canonical order.
inline std::vector<std::pair<std::string, Shape>> param_layout(const GeneratorConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> layout;
    const std::size_t f0 = cfg.features_at(0);
    layout.emplace_back("project.weight", Shape{f0 * 16, cfg.latent_dim + cfg.cond_dim});
    layout.emplace_back("project.bias", Shape{f0 * 16});
    for (std::size_t l = 0; l < cfg.num_upsample(); ++l) {
        const std::size_t in = cfg.features_at(l), out = cfg.features_at(l + 1);
        layout.emplace_back(detail::kernel_name(l), Shape{in, out, detail::kKernel, detail::kKernel});
        layout.emplace_back(detail::bias_name(l), Shape{out});
    }
    return layout;
}

/// N(0, 0.02) weights, zero biases, fully determined by `cfg.seed`.
inline GeneratorParams init_params(const GeneratorConfig& cfg) {
    GeneratorParams p{cfg, {}};
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<Real> normal(0.0, 0.02);
    for (auto& [name, shape] : param_layout(cfg)) {
        Tensor t(shape);
        const bool is_bias = name.ends_with(".bias");
        if (!is_bias) {
            for (auto& v : t.data()) v = normal(rng);
        }
        p.tensors.add(name, std::move(t));
    }
    return p;
}

/// Throws unless `p.tensors` matches the layout implied by `p.config`.
inline void validate_params(const GeneratorParams& p) {
    const auto layout = param_layout(p.config);
    if (layout.size() != p.tensors.size()) {
        throw ShapeError("generator params hold " + std::to_string(p.tensors.size()) + " tensors, expected " +
                         std::to_string(layout.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& [name, t] = p.tensors[i];
        if (name != layout[i].first || t.shape() != layout[i].second) {
            throw ShapeError("generator param " + std::to_string(i) + " is '" + name + "' " + shape_str(t.shape()) +
                             ", expected '" + layout[i].first + "' " + shape_str(layout[i].second));
        }
        for (Real v : t.data()) {
            if (!std::isfinite(v)) throw NumericError("generator param '" + name + "' holds a non-finite value");
        }
    }
}

inline void check_latent(const GeneratorParams& p, const LatentCode& z) {
    if (z.size() != p.config.latent_dim) {
        throw ShapeError("latent length " + std::to_string(z.size()) + " does not match generator latent_dim " +
                         std::to_string(p.config.latent_dim));
    }
}

inline Tensor latent_input(const LatentCode& z, Condition c) {
    std::vector<Real> v = z.values;
    v.push_back(c.value());
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

/// Φ(W; z, c).
inline Tensor forward(const GeneratorParams& p, const LatentCode& z, Condition c) {
    check_latent(p, z);
    const auto& cfg = p.config;
    const auto& w = p.tensors;
    Tensor h = ops::dense(latent_input(z, c), w.at("project.weight"), w.at("project.bias"));
    h = h.reshaped({cfg.features_at(0), 4, 4});
    const std::size_t layers = cfg.num_upsample();
    for (std::size_t l = 0; l < layers; ++l) {
        h = ops::relu(h);
        h = ops::conv_transpose2d(h, w.at(detail::kernel_name(l)), w.at(detail::bias_name(l)), detail::kUpsample);
    }
    return ops::tanh(h);
}

inline std::vector<Tensor> forward_batch(const GeneratorParams& p, const std::vector<LatentCode>& latents,
                                         const std::vector<Condition>& conditions) {
    if (latents.size() != conditions.size()) {
        throw ShapeError("forward_batch: " + std::to_string(latents.size()) + " latents vs " +
                         std::to_string(conditions.size()) + " conditions");
    }
    std::vector<Tensor> out;
    out.reserve(latents.size());
    for (std::size_t i = 0; i < latents.size(); ++i) out.push_back(forward(p, latents[i], conditions[i]));
    return out;
}

/// Records Φ on a tape. Weight leaves are named after their parameters and
/// the latent leaf is named "z"; the condition enters as a constant.
inline Var record_forward(Tape& tape, const GeneratorParams& p, const LatentCode& z, Condition c) {
    check_latent(p, z);
    const auto& cfg = p.config;
    std::vector<Var> leaves;
    for (const auto& [name, t] : p.tensors) leaves.push_back(tape.leaf(name, t));
    const Var zv = tape.leaf(kLatentLeaf, z.as_tensor());
    const Var cv = tape.constant(Tensor({1}, c.value()));

    Var h = tape.dense(tape.concat(zv, cv), leaves[0], leaves[1]);
    h = tape.reshape(h, {cfg.features_at(0), 4, 4});
    for (std::size_t l = 0; l < cfg.num_upsample(); ++l) {
        h = tape.relu(h);
        h = tape.conv_transpose2d(h, leaves[2 + 2 * l], leaves[3 + 2 * l], detail::kUpsample);
    }
    return tape.tanh(h);
}

struct ReconstructionGrad {
    Real loss = 0.0;
    Gradients weights;  // empty unless requested
    Tensor latent;      // empty unless requested
};

/// L1 reconstruction loss of Φ(W; z, c) against `target`, with reverse-mode
/// gradients for the weights and/or the latent code.
inline ReconstructionGrad reconstruction_grad(const GeneratorParams& p, const LatentCode& z, Condition c,
                                              const Tensor& target, bool want_weights, bool want_latent) {
    if (target.shape() != p.config.patch_shape()) {
        throw ShapeError("target patch " + shape_str(target.shape()) + " does not match generator output " +
                         shape_str(p.config.patch_shape()));
    }
    Tape tape;
    const Var out = record_forward(tape, p, z, c);
    const Var loss = tape.l1_loss(out, target);

    std::vector<std::string> wrt;
    if (want_weights) {
        for (const auto& [name, t] : p.tensors) wrt.push_back(name);
    }
    if (want_latent) wrt.emplace_back(kLatentLeaf);

    ReconstructionGrad r;
    r.loss = tape.value(loss)[0];
    if (wrt.empty()) return r;
    Gradients g = tape.backward(loss, wrt);
    if (want_latent) r.latent = g.at(kLatentLeaf);
    if (want_weights) {
        for (const auto& [name, t] : p.tensors) r.weights.add(name, g.at(name));
    }
    return r;
}

/// Finite-difference check of reconstruction_grad over the weights and the
/// latent code ("z") at `n_coords` random coordinates.
inline GradCheckReport check_generator_gradients(const GeneratorParams& p, const LatentCode& z, Condition c,
                                                 const Tensor& target, std::size_t n_coords, std::uint64_t seed,
                                                 Real h = 1e-5, Real tol = 1e-3) {
    NamedTensors point = p.tensors;
    point.add(kLatentLeaf, z.as_tensor());
    auto analytic = reconstruction_grad(p, z, c, target, true, true);
    Gradients grads = std::move(analytic.weights);
    grads.add(kLatentLeaf, analytic.latent);

    auto loss = [&](const NamedTensors& at) {
        GeneratorParams q{p.config, {}};
        for (std::size_t i = 0; i + 1 < at.size(); ++i) q.tensors.add(at[i].first, at[i].second);
        LatentCode zz{at.at(kLatentLeaf).values()};
        return ops::l1_loss(forward(q, zz, c), target);
    };
    const auto coords = random_coordinates(point, n_coords, seed);
    return finite_diff_check(loss, point, grads, coords, h, tol);
}

}  // namespace cglo
