#pragma once

// Mixed background/foreground synthesis: invert a background crop under
// c = 0, regenerate it under c = 1 and paste it back into the scene with a
// new annotation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cglo/generator.hpp"
#include "cglo/tensor.hpp"
#include "cglo/trainer.hpp"

namespace cglo {

/// CxSxS image tensor with values in [-1, 1].
using Patch = Tensor;

struct SceneImage {
    Tensor pixels;  // CxHxW
    std::string source_id;

    std::size_t channels() const { return pixels.dim(0); }
    std::size_t height() const { return pixels.dim(1); }
    std::size_t width() const { return pixels.dim(2); }

    friend bool operator==(const SceneImage&, const SceneImage&) = default;
};

struct BoundingBox {
    Real x = 0.0;
    Real y = 0.0;
    Real w = 0.0;
    Real h = 0.0;
    std::string label;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline Real iou(const BoundingBox& a, const BoundingBox& b) {
    const Real ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const Real iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const Real inter = ix * iy;
    const Real uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline bool box_inside(const BoundingBox& b, std::size_t height, std::size_t width) {
    return b.w > 0.0 && b.h > 0.0 && b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= static_cast<Real>(width) &&
           b.y + b.h <= static_cast<Real>(height);
}

namespace detail {

inline std::string box_str(const BoundingBox& b) {
    return "[x=" + std::to_string(b.x) + " y=" + std::to_string(b.y) + " w=" + std::to_string(b.w) +
           " h=" + std::to_string(b.h) + "]";
}

/// Validates a square, pixel-aligned box inside the scene and returns
/// (x, y, side) as integers.
struct PixelBox {
    std::size_t x, y, side;
};

inline PixelBox pixel_box(const SceneImage& scene, const BoundingBox& b) {
    if (b.w != b.h || b.x != std::floor(b.x) || b.y != std::floor(b.y) || b.w != std::floor(b.w)) {
        throw ShapeError("box " + box_str(b) + " must be square with integral coordinates");
    }
    if (!box_inside(b, scene.height(), scene.width())) {
        throw ShapeError("box " + box_str(b) + " lies outside scene " + shape_str(scene.pixels.shape()));
    }
    return {static_cast<std::size_t>(b.x), static_cast<std::size_t>(b.y), static_cast<std::size_t>(b.w)};
}

}  // namespace detail

/// Bilinear resampling with half-pixel centers and edge clamping. A 2x
/// downscale averages each 2x2 block exactly.
inline Tensor resize_bilinear(const Tensor& src, std::size_t out_h, std::size_t out_w) {
    const std::size_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
    if (out_h == h && out_w == w) return src;
    Tensor out({c, out_h, out_w});
    const Real sy = static_cast<Real>(h) / static_cast<Real>(out_h);
    const Real sx = static_cast<Real>(w) / static_cast<Real>(out_w);
    auto clamp_idx = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1)); };
    for (std::size_t y = 0; y < out_h; ++y) {
        const Real fy = (static_cast<Real>(y) + 0.5) * sy - 0.5;
        const long y0 = static_cast<long>(std::floor(fy));
        const Real ty = fy - static_cast<Real>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const Real fx = (static_cast<Real>(x) + 0.5) * sx - 0.5;
            const long x0 = static_cast<long>(std::floor(fx));
            const Real tx = fx - static_cast<Real>(x0);
            const std::size_t ya = clamp_idx(y0, h), yb = clamp_idx(y0 + 1, h);
            const std::size_t xa = clamp_idx(x0, w), xb = clamp_idx(x0 + 1, w);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const Real top = (1.0 - tx) * src.at(ch, ya, xa) + tx * src.at(ch, ya, xb);
                const Real bot = (1.0 - tx) * src.at(ch, yb, xa) + tx * src.at(ch, yb, xb);
                out.at(ch, y, x) = (1.0 - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

/// Copies the box region and resamples it to `patch_size` if needed.
inline Patch crop_patch(const SceneImage& scene, const BoundingBox& box, std::size_t patch_size) {
    const auto pb = detail::pixel_box(scene, box);
    Tensor region({scene.channels(), pb.side, pb.side});
    for (std::size_t c = 0; c < scene.channels(); ++c) {
        for (std::size_t y = 0; y < pb.side; ++y) {
            for (std::size_t x = 0; x < pb.side; ++x) region.at(c, y, x) = scene.pixels.at(c, pb.y + y, pb.x + x);
        }
    }
    return resize_bilinear(region, patch_size, patch_size);
}

/// Writes `patch` (resampled to the box side) over the box. With
/// `feather` > 0 the outermost `feather` rings blend linearly into the scene.
inline SceneImage paste_patch(const SceneImage& scene, const Patch& patch, const BoundingBox& box,
                              std::size_t feather = 0) {
    const auto pb = detail::pixel_box(scene, box);
    if (patch.rank() != 3 || patch.dim(0) != scene.channels() || patch.dim(1) != patch.dim(2)) {
        throw ShapeError("paste_patch: patch " + shape_str(patch.shape()) + " incompatible with scene " +
                         shape_str(scene.pixels.shape()));
    }
    const Tensor fitted = resize_bilinear(patch, pb.side, pb.side);
    SceneImage out = scene;
    for (std::size_t y = 0; y < pb.side; ++y) {
        for (std::size_t x = 0; x < pb.side; ++x) {
            const std::size_t ring = std::min({x, y, pb.side - 1 - x, pb.side - 1 - y});
            const Real alpha = ring >= feather ? 1.0 : static_cast<Real>(ring + 1) / static_cast<Real>(feather + 1);
            for (std::size_t c = 0; c < scene.channels(); ++c) {
                Real& dst = out.pixels.at(c, pb.y + y, pb.x + x);
                dst = alpha == 1.0 ? fitted.at(c, y, x) : alpha * fitted.at(c, y, x) + (1.0 - alpha) * dst;
            }
        }
    }
    return out;
}

/// Rotates counter-clockwise by `rot_quarter` * 90 degrees, then mirrors
/// left-right (`flip_h`) and/or top-bottom (`flip_v`).
inline Patch geometric_augment(const Patch& patch, int rot_quarter, bool flip_h, bool flip_v) {
    if (patch.rank() != 3 || patch.dim(1) != patch.dim(2)) {
        throw ShapeError("geometric_augment: patch " + shape_str(patch.shape()) + " is not square");
    }
    const std::size_t c = patch.dim(0), s = patch.dim(1);
    const int r = ((rot_quarter % 4) + 4) % 4;
    Patch out(patch.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                // Destination (y, x) after flips came from (yr, xr) after rotation.
                const std::size_t yr = flip_v ? s - 1 - y : y;
                const std::size_t xr = flip_h ? s - 1 - x : x;
                std::size_t sy = yr, sx = xr;
                switch (r) {
                    case 1: sy = xr; sx = s - 1 - yr; break;
                    case 2: sy = s - 1 - yr; sx = s - 1 - xr; break;
                    case 3: sy = s - 1 - xr; sx = yr; break;
                    default: break;
                }
                out.at(ch, y, x) = patch.at(ch, sy, sx);
            }
        }
    }
    return out;
}

/// Φ(W; z, to). `from` documents the label z was inferred under; neither z
/// nor the weights change.
inline Patch switch_condition(const GeneratorParams& params, const LatentCode& z, Condition /*from*/, Condition to) {
    return forward(params, z, to);
}

struct AugmentPlan {
    std::size_t target_count = 4;
    std::size_t min_side = 16;
    std::size_t max_side = 32;
    Real max_overlap_iou = 0.0;
    std::uint64_t seed = 0;
    bool geometric = true;
    std::size_t feather = 0;
    std::string label = "foreground";

    void validate() const {
        if (min_side == 0 || min_side > max_side) throw ConfigError("augment: need 0 < min_side <= max_side");
        if (!(max_overlap_iou >= 0.0 && max_overlap_iou < 1.0)) throw ConfigError("augment: max_overlap_iou must be in [0, 1)");
    }
};

inline constexpr std::size_t kMaxConsecutiveRejections = 1000;

struct PlacementResult {
    std::vector<BoundingBox> boxes;
    bool rejection_limited = false;
};

/// Rejection-samples square boxes until the scene holds `target_count`
/// boxes. Each accepted box has IoU <= max_overlap_iou with every existing
/// and previously accepted box.
inline PlacementResult plan_placements(const SceneImage& scene, const std::vector<BoundingBox>& existing,
                                       const AugmentPlan& plan) {
    plan.validate();
    const std::size_t extent = std::min(scene.height(), scene.width());
    if (plan.min_side > extent) {
        throw ConfigError("augment: min_side " + std::to_string(plan.min_side) + " exceeds scene extent " +
                          std::to_string(extent));
    }
    PlacementResult result;
    if (existing.size() >= plan.target_count) return result;
    const std::size_t wanted = plan.target_count - existing.size();

    std::mt19937_64 rng(plan.seed);
    std::uniform_int_distribution<std::size_t> side_dist(plan.min_side, std::min(plan.max_side, extent));
    std::vector<BoundingBox> taken = existing;
    std::size_t rejections = 0;
    while (result.boxes.size() < wanted) {
        const std::size_t side = side_dist(rng);
        std::uniform_int_distribution<std::size_t> xd(0, scene.width() - side), yd(0, scene.height() - side);
        const std::size_t x = xd(rng);
        const std::size_t y = yd(rng);
        BoundingBox cand{static_cast<Real>(x), static_cast<Real>(y), static_cast<Real>(side), static_cast<Real>(side), plan.label};
        const bool ok = std::all_of(taken.begin(), taken.end(),
                                    [&](const BoundingBox& b) { return iou(cand, b) <= plan.max_overlap_iou; });
        if (!ok) {
            if (++rejections >= kMaxConsecutiveRejections) {
                result.rejection_limited = true;
                break;
            }
            continue;
        }
        rejections = 0;
        taken.push_back(cand);
        result.boxes.push_back(std::move(cand));
    }
    return result;
}

enum class PlacementStatus { ok, skipped_nonfinite };

inline const char* to_string(PlacementStatus s) { return s == PlacementStatus::ok ? "ok" : "skipped_nonfinite"; }

struct PlacementReport {
    std::size_t box_index = 0;
    BoundingBox box;
    Real inversion_loss = 0.0;
    PlacementStatus status = PlacementStatus::ok;
};

struct AugmentResult {
    SceneImage scene;
    std::vector<BoundingBox> boxes;
    std::vector<PlacementReport> report;
    bool rejection_limited = false;
};

/// SplitMix64 finalizer; derives independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Per-scene seed from the run seed and the scene's id (FNV-1a over the id).
inline std::uint64_t scene_seed(std::uint64_t run_seed, const std::string& scene_id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : scene_id) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return mix_seed(run_seed, h);
}

/// Full per-scene pipeline: plan, then for each placement crop -> invert
/// under background -> regenerate under foreground -> (random rotation and
/// flips) -> paste. Placements whose inversion is non-finite are skipped.
inline AugmentResult augment_scene(const GeneratorParams& params, const SceneImage& scene,
                                   const std::vector<BoundingBox>& existing, const AugmentPlan& plan,
                                   const InvertConfig& invert_cfg) {
    if (scene.channels() != params.config.channels) {
        throw ShapeError("augment: scene has " + std::to_string(scene.channels()) + " channels, generator emits " +
                         std::to_string(params.config.channels));
    }
    for (const auto& b : existing) {
        if (!box_inside(b, scene.height(), scene.width())) {
            throw ShapeError("augment: existing box " + detail::box_str(b) + " lies outside scene '" + scene.source_id + "'");
        }
    }
    const auto placements = plan_placements(scene, existing, plan);
    AugmentResult result{scene, existing, {}, placements.rejection_limited};
    std::mt19937_64 geo_rng(mix_seed(plan.seed, 1));
    std::uniform_int_distribution<int> rot_dist(0, 3), flip_dist(0, 1);

    for (std::size_t i = 0; i < placements.boxes.size(); ++i) {
        const auto& box = placements.boxes[i];
        const int rot = rot_dist(geo_rng);
        const bool fh = flip_dist(geo_rng) == 1;
        const bool fv = flip_dist(geo_rng) == 1;

        const Patch crop = crop_patch(scene, box, params.config.output_size);
        InvertConfig icfg = invert_cfg;
        icfg.seed = mix_seed(plan.seed, 2 + i);
        const auto inv = invert(params, crop, Condition::background(), icfg);

        PlacementReport rep{i, box, inv.loss, PlacementStatus::ok};
        if (!std::isfinite(inv.loss)) {
            rep.status = PlacementStatus::skipped_nonfinite;
            result.report.push_back(std::move(rep));
            continue;
        }
        Patch synth = switch_condition(params, inv.z, Condition::background(), Condition::foreground());
        if (plan.geometric) synth = geometric_augment(synth, rot, fh, fv);
        result.scene = paste_patch(result.scene, synth, box, plan.feather);
        result.boxes.push_back(box);
        result.report.push_back(std::move(rep));
    }
    return result;
}

}  // namespace cglo
