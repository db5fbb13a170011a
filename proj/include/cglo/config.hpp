#pragma once

// Run configuration: a flat `section.key = value` text format. Lines starting
// with '#' are comments. Unknown keys are errors.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cglo/error.hpp"
#include "cglo/fixture.hpp"
#include "cglo/generator.hpp"
#include "cglo/synthesis.hpp"
#include "cglo/trainer.hpp"

namespace cglo {

struct GradCheckConfig {
    std::size_t coords = 25;
    Real h = 1e-5;
    Real tol = 1e-3;
};

struct SynthConfig {
    long sample = -1;        // latent table row to regenerate, or -1 to use `latent`
    std::string latent;      // JSON file written by `invert`
    int from = 0;
    int to = 1;
};

struct RunConfig {
    std::uint64_t seed = 0;
    GeneratorConfig generator{};
    TrainConfig train{};
    std::size_t checkpoint_every = 0;
    InvertConfig invert{};
    int invert_condition = 0;
    std::string invert_image;
    SynthConfig synth{};
    AugmentPlan augment{};
    GradCheckConfig gradcheck{};
    FixtureConfig fixture{};
    std::string manifest;
    std::string checkpoint;
    std::string annotations;

    /// Propagates the run seed and generator geometry into the sub-configs.
    void resolve() {
        generator.seed = seed;
        train.seed = seed;
        invert.seed = seed;
        augment.seed = seed;
        fixture.seed = seed;
        fixture.patch_size = generator.output_size;
        fixture.channels = generator.channels;
        invert.projection = train.projection;
    }

    void validate() const {
        generator.validate();
        train.validate();
        augment.validate();
        fixture.validate();
        if (!(invert.lr_z > 0.0)) throw ConfigError("invert.lr_z must be positive");
        if (invert_condition != 0 && invert_condition != 1) throw ConfigError("invert.condition must be 0 or 1");
        if ((synth.from != 0 && synth.from != 1) || (synth.to != 0 && synth.to != 1)) {
            throw ConfigError("synth.from / synth.to must be 0 or 1");
        }
        if (!(gradcheck.h > 0.0)) throw ConfigError("gradcheck.h must be positive");
    }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* b = text.data();
    const char* e = b + text.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ConfigError("bad value for '" + key + "': '" + text + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("bad boolean for '" + key + "': '" + text + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline std::string fmt(Real v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

#define CGLO_SIZE_FIELD(key, member)                                                                         \
    {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<std::size_t>(key, v); },         \
           [](const RunConfig& c) { return std::to_string(c.member); }}}
#define CGLO_REAL_FIELD(key, member)                                                                         \
    {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<Real>(key, v); },                \
           [](const RunConfig& c) { return fmt(c.member); }}}
#define CGLO_INT_FIELD(key, member)                                                                          \
    {key, {[](RunConfig& c, const std::string& v) { c.member = parse_number<int>(key, v); },                 \
           [](const RunConfig& c) { return std::to_string(c.member); }}}
#define CGLO_STRING_FIELD(key, member)                                                                       \
    {key, {[](RunConfig& c, const std::string& v) { c.member = v; }, [](const RunConfig& c) { return c.member; }}}
#define CGLO_BOOL_FIELD(key, member)                                                                         \
    {key, {[](RunConfig& c, const std::string& v) { c.member = parse_bool(key, v); },                        \
           [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}}

inline const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"seed", {[](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                  [](const RunConfig& c) { return std::to_string(c.seed); }}},
        CGLO_SIZE_FIELD("generator.latent_dim", generator.latent_dim),
        CGLO_SIZE_FIELD("generator.output_size", generator.output_size),
        CGLO_SIZE_FIELD("generator.channels", generator.channels),
        CGLO_SIZE_FIELD("generator.base_feat", generator.base_feat),
        CGLO_SIZE_FIELD("train.epochs", train.epochs),
        CGLO_REAL_FIELD("train.lr_w", train.lr_w),
        CGLO_REAL_FIELD("train.lr_z", train.lr_z),
        CGLO_SIZE_FIELD("train.batch_size", train.batch_size),
        CGLO_SIZE_FIELD("train.z_steps_per_epoch", train.z_steps_per_epoch),
        {"train.projection",
         {[](RunConfig& c, const std::string& v) {
              if (v == "ball") c.train.projection = LatentProjection::ball;
              else if (v == "sphere") c.train.projection = LatentProjection::sphere;
              else throw ConfigError("train.projection must be 'ball' or 'sphere', got '" + v + "'");
          },
          [](const RunConfig& c) { return std::string(c.train.projection == LatentProjection::ball ? "ball" : "sphere"); }}},
        CGLO_SIZE_FIELD("train.checkpoint_every", checkpoint_every),
        CGLO_SIZE_FIELD("invert.steps", invert.steps),
        CGLO_REAL_FIELD("invert.lr_z", invert.lr_z),
        CGLO_INT_FIELD("invert.condition", invert_condition),
        CGLO_STRING_FIELD("invert.image", invert_image),
        {"synth.sample", {[](RunConfig& c, const std::string& v) { c.synth.sample = parse_number<long>("synth.sample", v); },
                          [](const RunConfig& c) { return std::to_string(c.synth.sample); }}},
        CGLO_STRING_FIELD("synth.latent", synth.latent),
        CGLO_INT_FIELD("synth.from", synth.from),
        CGLO_INT_FIELD("synth.to", synth.to),
        CGLO_SIZE_FIELD("augment.target_count", augment.target_count),
        CGLO_SIZE_FIELD("augment.min_side", augment.min_side),
        CGLO_SIZE_FIELD("augment.max_side", augment.max_side),
        CGLO_REAL_FIELD("augment.max_overlap_iou", augment.max_overlap_iou),
        CGLO_BOOL_FIELD("augment.geometric", augment.geometric),
        CGLO_SIZE_FIELD("augment.feather", augment.feather),
        CGLO_STRING_FIELD("augment.label", augment.label),
        CGLO_SIZE_FIELD("gradcheck.coords", gradcheck.coords),
        CGLO_REAL_FIELD("gradcheck.h", gradcheck.h),
        CGLO_REAL_FIELD("gradcheck.tol", gradcheck.tol),
        CGLO_SIZE_FIELD("fixture.n_patches", fixture.n_patches),
        CGLO_REAL_FIELD("fixture.fg_ratio", fixture.fg_ratio),
        CGLO_SIZE_FIELD("fixture.n_scenes", fixture.n_scenes),
        CGLO_SIZE_FIELD("fixture.scene_size", fixture.scene_size),
        CGLO_STRING_FIELD("paths.manifest", manifest),
        CGLO_STRING_FIELD("paths.checkpoint", checkpoint),
        CGLO_STRING_FIELD("paths.annotations", annotations),
    };
    return table;
}

#undef CGLO_SIZE_FIELD
#undef CGLO_REAL_FIELD
#undef CGLO_INT_FIELD
#undef CGLO_STRING_FIELD
#undef CGLO_BOOL_FIELD

}  // namespace detail

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& f = detail::fields();
    const auto it = f.find(key);
    if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, value);
}

/// Applies one `key=value` assignment (spaces around '=' allowed).
inline void apply_assignment(RunConfig& cfg, const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
}

inline RunConfig parse_config(const std::string& text, RunConfig base = RunConfig{}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        try {
            apply_assignment(base, t);
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

/// Every key with its current value, one `key = value` per line, sorted.
inline std::string dump_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, field] : detail::fields()) out += key + " = " + field.get(cfg) + "\n";
    return out;
}

}  // namespace cglo
