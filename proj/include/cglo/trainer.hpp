#pragma once

// Alternating minimization of sum_i L1(Φ(W; z_i, c_i), I_i):
//   step 1: z fixed, gradient steps on W over minibatches;
//   step 2: W fixed, one projected gradient step per z_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cglo/generator.hpp"
#include "cglo/tensor.hpp"

namespace cglo {

/// How latent codes are normalized after each update. `ball` leaves codes
/// inside the unit ball untouched; `sphere` always rescales to norm 1.
enum class LatentProjection { ball, sphere };

/// Norms up to 1 + kBallSlack count as inside the ball.
inline constexpr Real kBallSlack = 1e-12;

inline LatentCode project_latent(LatentCode z, LatentProjection mode = LatentProjection::ball) {
    const Real n = z.norm();
    if (mode == LatentProjection::ball && n <= 1.0 + kBallSlack) return z;
    if (n == 0.0) return z;
    for (auto& v : z.values) v /= n;
    return z;
}

/// i.i.d. N(0, 1/d) codes, projected.
inline std::vector<LatentCode> init_latents(std::size_t n, std::size_t d, std::uint64_t seed,
                                            LatentProjection mode = LatentProjection::ball) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> normal(0.0, 1.0 / std::sqrt(static_cast<Real>(d)));
    std::vector<LatentCode> out(n);
    for (auto& z : out) {
        z.values.resize(d);
        for (auto& v : z.values) v = normal(rng);
        z = project_latent(std::move(z), mode);
    }
    return out;
}

struct LatentEntry {
    std::size_t sample_id = 0;
    LatentCode z;
    Condition c;

    friend bool operator==(const LatentEntry&, const LatentEntry&) = default;
};

/// One entry per training patch; entry i always carries sample_id i.
struct LatentTable {
    std::vector<LatentEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    const LatentEntry& at(std::size_t id) const { return entries.at(id); }

    friend bool operator==(const LatentTable&, const LatentTable&) = default;
};

struct LossHistory {
    std::vector<Real> mean_loss;

    friend bool operator==(const LossHistory&, const LossHistory&) = default;
};

struct TrainConfig {
    std::size_t epochs = 200;
    Real lr_w = 0.2;
    Real lr_z = 1.0;
    std::size_t batch_size = 1;
    std::size_t z_steps_per_epoch = 1;
    std::uint64_t seed = 0;
    LatentProjection projection = LatentProjection::ball;

    void validate() const {
        if (!(lr_w > 0.0)) throw ConfigError("train.lr_w must be positive");
        if (!(lr_z > 0.0)) throw ConfigError("train.lr_z must be positive");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate_table(const LatentTable& table, std::size_t n_patches, std::size_t latent_dim) {
    if (table.size() != n_patches) {
        throw ShapeError("latent table has " + std::to_string(table.size()) + " entries for " +
                         std::to_string(n_patches) + " patches");
    }
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& e = table.entries[i];
        if (e.sample_id != i) throw ShapeError("latent table entry " + std::to_string(i) + " has sample_id " +
                                               std::to_string(e.sample_id));
        if (e.z.size() != latent_dim) throw ShapeError("latent table entry " + std::to_string(i) + " has wrong dimension");
    }
}

namespace detail {

inline void check_ids(std::span<const std::size_t> ids, std::size_t n) {
    for (auto id : ids) {
        if (id >= n) throw ShapeError("sample id " + std::to_string(id) + " out of range (" + std::to_string(n) + " samples)");
    }
}

}  // namespace detail

/// One gradient-descent update of W on the mean loss of `batch_ids`.
/// Returns the batch loss measured before the update.
inline Real step_weights(GeneratorParams& params, const LatentTable& table, std::span<const Tensor> patches,
                         std::span<const std::size_t> batch_ids, Real lr_w) {
    if (batch_ids.empty()) throw ShapeError("step_weights: empty batch");
    detail::check_ids(batch_ids, std::min(table.size(), patches.size()));

    Gradients sum;
    Real loss = 0.0;
    for (auto id : batch_ids) {
        const auto& e = table.at(id);
        auto r = reconstruction_grad(params, e.z, e.c, patches[id], true, false);
        loss += r.loss;
        if (sum.empty()) {
            sum = std::move(r.weights);
        } else {
            for (std::size_t t = 0; t < sum.size(); ++t) {
                auto& acc = sum[t].second;
                const auto& g = r.weights[t].second;
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
            }
        }
    }
    const Real inv = 1.0 / static_cast<Real>(batch_ids.size());
    if (lr_w != 0.0) {
        for (std::size_t t = 0; t < params.tensors.size(); ++t) {
            auto& w = params.tensors[t].second;
            const auto& g = sum[t].second;
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_w * (g[i] * inv);
        }
    }
    return loss * inv;
}

/// One projected gradient step on z_i for each id, each against its own
/// reconstruction loss. Labels and weights are never touched. Returns the
/// mean pre-step loss over `ids`.
inline Real step_latents(const GeneratorParams& params, LatentTable& table, std::span<const Tensor> patches,
                         std::span<const std::size_t> ids, Real lr_z,
                         LatentProjection mode = LatentProjection::ball) {
    detail::check_ids(ids, std::min(table.size(), patches.size()));
    if (ids.empty()) return 0.0;
    Real loss = 0.0;
    for (auto id : ids) {
        auto& e = table.entries[id];
        auto r = reconstruction_grad(params, e.z, e.c, patches[id], false, true);
        loss += r.loss;
        if (lr_z != 0.0) {
            LatentCode next = e.z;
            for (std::size_t k = 0; k < next.size(); ++k) next.values[k] -= lr_z * r.latent[k];
            e.z = project_latent(std::move(next), mode);
        }
    }
    return loss / static_cast<Real>(ids.size());
}

/// Mean reconstruction loss e(W, z) / N over the whole table.
inline Real mean_reconstruction_loss(const GeneratorParams& params, const LatentTable& table,
                                     std::span<const Tensor> patches) {
    Real s = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        s += ops::l1_loss(forward(params, table.entries[i].z, table.entries[i].c), patches[i]);
    }
    return table.size() ? s / static_cast<Real>(table.size()) : 0.0;
}

struct TrainState {
    GeneratorParams params;
    LatentTable table;
    LossHistory history;
};

/// Called after every finished epoch (1-based) with the current state.
using EpochCallback = std::function<void(std::size_t epoch, const TrainState&)>;

inline TrainState init_train_state(std::span<const Tensor> patches, std::span<const Condition> conditions,
                                   const GeneratorConfig& gen_config, const TrainConfig& cfg) {
    gen_config.validate();
    cfg.validate();
    if (patches.empty()) throw ShapeError("train: no patches");
    if (patches.size() != conditions.size()) {
        throw ShapeError("train: " + std::to_string(patches.size()) + " patches vs " +
                         std::to_string(conditions.size()) + " condition labels");
    }
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (patches[i].shape() != gen_config.patch_shape()) {
            throw ShapeError("train: patch " + std::to_string(i) + " has shape " + shape_str(patches[i].shape()) +
                             ", generator emits " + shape_str(gen_config.patch_shape()));
        }
    }
    TrainState st{init_params(gen_config), {}, {}};
    auto codes = init_latents(patches.size(), gen_config.latent_dim, cfg.seed, cfg.projection);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        st.table.entries.push_back({i, std::move(codes[i]), conditions[i]});
    }
    return st;
}

/// Runs `cfg.epochs` epochs of (weight pass over shuffled minibatches, then
/// `z_steps_per_epoch` latent passes) starting from `st`. Each epoch appends
/// e(W, z) / N measured at its end.
inline void train_epochs(TrainState& st, std::span<const Tensor> patches, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    const std::size_t n = patches.size();
    std::vector<std::size_t> order(n);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    // Stream distinct from the one init_latents uses.
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    const std::size_t start = st.history.mean_loss.size();
    for (std::size_t epoch = start + 1; epoch <= start + cfg.epochs; ++epoch) {
        order = all;
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t b = 0; b * cfg.batch_size < n; ++b) {
            const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
            const Real loss = step_weights(st.params, st.table, patches,
                                           std::span<const std::size_t>(order).subspan(lo, hi - lo), cfg.lr_w);
            if (!std::isfinite(loss)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
            }
        }
        for (std::size_t pass = 0; pass < cfg.z_steps_per_epoch; ++pass) {
            step_latents(st.params, st.table, patches, all, cfg.lr_z, cfg.projection);
        }
        const Real mean = mean_reconstruction_loss(st.params, st.table, patches);
        if (!std::isfinite(mean)) {
            throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " (end-of-epoch evaluation)");
        }
        st.history.mean_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, st);
    }
}

inline TrainState train(std::span<const Tensor> patches, std::span<const Condition> conditions,
                        const GeneratorConfig& gen_config, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    TrainState st = init_train_state(patches, conditions, gen_config, cfg);
    train_epochs(st, patches, cfg, on_epoch);
    return st;
}

struct InvertConfig {
    std::size_t steps = 500;
    Real lr_z = 1.0;
    std::uint64_t seed = 0;
    LatentProjection projection = LatentProjection::ball;
};

struct InvertResult {
    LatentCode z;
    Real loss = 0.0;
    Real initial_loss = 0.0;
};

/// Projected gradient descent on z with W fixed, from a random start.
/// Returns the best code seen, which is never worse than the start.
inline InvertResult invert(const GeneratorParams& params, const Tensor& image, Condition c, const InvertConfig& cfg) {
    if (image.shape() != params.config.patch_shape()) {
        throw ShapeError("invert: image " + shape_str(image.shape()) + " does not match generator output " +
                         shape_str(params.config.patch_shape()));
    }
    LatentCode z = std::move(init_latents(1, params.config.latent_dim, cfg.seed, cfg.projection).front());
    InvertResult best;
    for (std::size_t step = 0; step <= cfg.steps; ++step) {
        const bool last = step == cfg.steps;
        auto r = reconstruction_grad(params, z, c, image, false, !last);
        if (step == 0) {
            best = {z, r.loss, r.loss};
        } else if (r.loss < best.loss) {
            best.z = z;
            best.loss = r.loss;
        }
        if (last) break;
        for (std::size_t k = 0; k < z.size(); ++k) z.values[k] -= cfg.lr_z * r.latent[k];
        z = project_latent(std::move(z), cfg.projection);
    }
    return best;
}

}  // namespace cglo
