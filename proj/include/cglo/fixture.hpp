#pragma once

// Synthetic stand-in dataset: rippled backgrounds (products of sines) and
// foregrounds carrying a dark central ellipse, plus larger scenes with
// annotated ellipses embedded at known boxes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cglo/generator.hpp"
#include "cglo/synthesis.hpp"
#include "cglo/tensor.hpp"

namespace cglo {

struct FixtureConfig {
    std::size_t n_patches = 64;
    std::size_t patch_size = 16;
    std::size_t channels = 1;
    Real fg_ratio = 0.5;
    std::size_t n_scenes = 8;
    std::size_t scene_size = 128;
    std::uint64_t seed = 0;

    void validate() const {
        if (patch_size != 8 && patch_size != 16 && patch_size != 32 && patch_size != 64) {
            throw ConfigError("fixture patch size must be one of 8, 16, 32, 64");
        }
        if (channels != 1 && channels != 3) throw ConfigError("fixture channels must be 1 or 3");
        if (!(fg_ratio >= 0.0 && fg_ratio <= 1.0)) throw ConfigError("fixture.fg_ratio must be in [0, 1]");
        if (scene_size < 2 * patch_size) throw ConfigError("fixture.scene_size must be at least twice the patch size");
    }
};

struct AnnotatedScene {
    SceneImage scene;
    std::vector<BoundingBox> boxes;
};

struct Fixture {
    std::vector<Tensor> patches;
    std::vector<Condition> labels;
    std::vector<AnnotatedScene> scenes;
};

inline constexpr Real kRippleAmplitude = 0.35;
inline constexpr Real kEllipseIntensity = -0.8;

/// Side of the centered square covering 25% of a patch's area is size/2;
/// this returns its [lo, hi) range.
inline std::pair<std::size_t, std::size_t> center_region(std::size_t size) { return {size / 4, size - size / 4}; }

/// Width of the border frame covering the outer 10% of the side.
inline std::size_t border_width(std::size_t size) { return std::max<std::size_t>(1, size / 10); }

/// Mean of |values| (or raw values with `absolute` false) over the centre
/// region and the border frame of a CxSxS tensor.
struct RegionMeans {
    Real center = 0.0;
    Real border = 0.0;
};

inline RegionMeans region_means(const Tensor& t, bool absolute = false) {
    const std::size_t c = t.dim(0), s = t.dim(1);
    const auto [lo, hi] = center_region(s);
    const std::size_t bw = border_width(s);
    Real cs = 0.0, bs = 0.0;
    std::size_t cn = 0, bn = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                const Real v = absolute ? std::abs(t.at(ch, y, x)) : t.at(ch, y, x);
                if (y >= lo && y < hi && x >= lo && x < hi) {
                    cs += v;
                    ++cn;
                }
                if (y < bw || x < bw || y >= s - bw || x >= s - bw) {
                    bs += v;
                    ++bn;
                }
            }
        }
    }
    return {cs / static_cast<Real>(cn), bs / static_cast<Real>(bn)};
}

namespace detail {

struct Ripple {
    Real f1, f2, phi1, phi2;

    Real at(Real x, Real y, Real period) const {
        constexpr Real two_pi = 2.0 * std::numbers::pi;
        return kRippleAmplitude * std::sin(two_pi * f1 * x / period + phi1) * std::sin(two_pi * f2 * y / period + phi2);
    }
};

struct Ellipse {
    Real cx, cy, a, b, theta;

    bool contains(Real x, Real y) const {
        const Real dx = x - cx, dy = y - cy;
        const Real u = dx * std::cos(theta) + dy * std::sin(theta);
        const Real v = -dx * std::sin(theta) + dy * std::cos(theta);
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
};

template <class Rng>
Ripple draw_ripple(Rng& rng) {
    std::uniform_int_distribution<int> freq(1, 3);
    std::uniform_real_distribution<Real> phase(0.0, 2.0 * std::numbers::pi);
    Ripple r{};
    r.f1 = freq(rng);
    r.f2 = freq(rng);
    r.phi1 = phase(rng);
    r.phi2 = phase(rng);
    return r;
}

/// Ellipse centred in the middle third of an S-pixel square at (ox, oy).
template <class Rng>
Ellipse draw_ellipse(Rng& rng, Real size, Real ox = 0.0, Real oy = 0.0) {
    std::uniform_real_distribution<Real> centre(size / 3.0, 2.0 * size / 3.0);
    std::uniform_real_distribution<Real> axis(0.2 * size, 0.35 * size);
    std::uniform_real_distribution<Real> angle(0.0, std::numbers::pi);
    Ellipse e{};
    e.cx = ox + centre(rng);
    e.cy = oy + centre(rng);
    e.a = axis(rng);
    e.b = axis(rng);
    e.theta = angle(rng);
    return e;
}

inline void stamp_ellipse(Tensor& img, const Ellipse& e) {
    for (std::size_t ch = 0; ch < img.dim(0); ++ch) {
        for (std::size_t y = 0; y < img.dim(1); ++y) {
            for (std::size_t x = 0; x < img.dim(2); ++x) {
                // Sample at pixel centres.
                if (e.contains(static_cast<Real>(x) + 0.5, static_cast<Real>(y) + 0.5)) {
                    Real& v = img.at(ch, y, x);
                    v = std::clamp(v + kEllipseIntensity, -1.0, 1.0);
                }
            }
        }
    }
}

inline Tensor ripple_image(const Ripple& r, std::size_t channels, std::size_t h, std::size_t w, Real period) {
    Tensor img({channels, h, w});
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) img.at(ch, y, x) = r.at(static_cast<Real>(x), static_cast<Real>(y), period);
        }
    }
    return img;
}

}  // namespace detail

/// Builds the fixture. Sample i is foreground when floor((i+1)·ratio) >
/// floor(i·ratio), which interleaves labels and keeps the count within one
/// of n·ratio. Foreground draws are repeated until the centre region is
/// darker than the border frame, so that property holds for every sample.
inline Fixture make_fixture(const FixtureConfig& cfg) {
    cfg.validate();
    Fixture fx;
    std::mt19937_64 rng(cfg.seed);
    const Real size = static_cast<Real>(cfg.patch_size);

    for (std::size_t i = 0; i < cfg.n_patches; ++i) {
        const bool fg = std::floor(static_cast<Real>(i + 1) * cfg.fg_ratio) > std::floor(static_cast<Real>(i) * cfg.fg_ratio);
        Tensor patch;
        do {
            const auto ripple = detail::draw_ripple(rng);
            patch = detail::ripple_image(ripple, cfg.channels, cfg.patch_size, cfg.patch_size, size);
            if (fg) detail::stamp_ellipse(patch, detail::draw_ellipse(rng, size));
        } while (fg && !(region_means(patch).center < region_means(patch).border));
        fx.patches.push_back(std::move(patch));
        fx.labels.push_back(fg ? Condition::foreground() : Condition::background());
    }

    // Scene k holds k % 4 embedded ellipses on a patch-size grid.
    const std::size_t cells = cfg.scene_size / cfg.patch_size;
    for (std::size_t k = 0; k < cfg.n_scenes; ++k) {
        const auto ripple = detail::draw_ripple(rng);
        AnnotatedScene as;
        as.scene.source_id = "scene_" + std::to_string(k);
        as.scene.pixels = detail::ripple_image(ripple, cfg.channels, cfg.scene_size, cfg.scene_size, size);

        std::vector<std::size_t> slots(cells * cells);
        for (std::size_t s = 0; s < slots.size(); ++s) slots[s] = s;
        std::shuffle(slots.begin(), slots.end(), rng);
        const std::size_t n_obj = std::min<std::size_t>(k % 4, slots.size());
        for (std::size_t o = 0; o < n_obj; ++o) {
            const Real ox = static_cast<Real>((slots[o] % cells) * cfg.patch_size);
            const Real oy = static_cast<Real>((slots[o] / cells) * cfg.patch_size);
            detail::stamp_ellipse(as.scene.pixels, detail::draw_ellipse(rng, size, ox, oy));
            as.boxes.push_back({ox, oy, size, size, "foreground"});
        }
        fx.scenes.push_back(std::move(as));
    }
    return fx;
}

}  // namespace cglo
