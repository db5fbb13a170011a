#pragma once

// Command-line front end:
//   cglo <subcommand> --config <path> [--seed N] [--out DIR] [key=value ...]
// Exit codes: 0 success, 1 invalid input or failed check, 2 usage error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cglo/config.hpp"
#include "cglo/fixture.hpp"
#include "cglo/generator.hpp"
#include "cglo/io.hpp"
#include "cglo/synthesis.hpp"
#include "cglo/trainer.hpp"

namespace cglo::cli {

namespace fs = std::filesystem;

struct Context {
    RunConfig cfg;
    fs::path out;
    std::ostream& log;
};

namespace detail {

inline std::string one_line(std::string s) {
    for (auto& ch : s) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    return s;
}

inline void write_run_record(const Context& ctx, const std::string& subcommand, const nlohmann::json& inputs) {
    io::write_text(ctx.out / "config.resolved", dump_config(ctx.cfg));
    nlohmann::json rec{{"subcommand", subcommand},
                       {"seed", ctx.cfg.seed},
                       {"checkpoint_version", io::kCheckpointVersion},
                       {"inputs", inputs}};
    io::write_text(ctx.out / "run.json", rec.dump(2) + "\n");
}

inline const std::string& require_path(const std::string& value, const char* key) {
    if (value.empty()) throw ConfigError(std::string(key) + " must be set");
    return value;
}

inline nlohmann::json latent_json(const LatentCode& z, Condition c, Real loss, Real initial) {
    return {{"latent", z.values}, {"condition", c.value()}, {"loss", loss}, {"initial_loss", initial}};
}

}  // namespace detail

inline int cmd_make_fixture(Context& ctx) {
    const Fixture fx = make_fixture(ctx.cfg.fixture);
    io::write_fixture(fx, ctx.out);
    detail::write_run_record(ctx, "make-fixture", nlohmann::json::object());
    ctx.log << "wrote " << fx.patches.size() << " patches and " << fx.scenes.size() << " scenes to " << ctx.out.string() << "\n";
    return 0;
}

inline int cmd_train(Context& ctx) {
    const auto& manifest = detail::require_path(ctx.cfg.manifest, "paths.manifest");
    const auto ds = io::load_dataset(manifest);
    detail::write_run_record(ctx, "train", {{"manifest", manifest}});

    TrainState st = init_train_state(ds.patches, ds.labels, ctx.cfg.generator, ctx.cfg.train);
    const std::size_t every = ctx.cfg.checkpoint_every;
    const std::size_t last = ctx.cfg.train.epochs;
    train_epochs(st, ds.patches, ctx.cfg.train, [&](std::size_t epoch, const TrainState& s) {
        if (epoch == last || (every && epoch % every == 0)) {
            io::save_checkpoint({s.params, s.table, s.history}, io::checkpoint_path(ctx.out, epoch));
        }
    });
    if (last == 0) io::save_checkpoint({st.params, st.table, st.history}, io::checkpoint_path(ctx.out, 0));
    io::write_text(ctx.out / "loss.csv", io::loss_history_csv(st.history));

    ctx.log << "trained " << last << " epochs on " << ds.patches.size() << " patches";
    if (!st.history.mean_loss.empty()) {
        ctx.log << ", mean loss " << io::format_real(st.history.mean_loss.front()) << " -> "
                << io::format_real(st.history.mean_loss.back());
    }
    ctx.log << "; checkpoint " << io::checkpoint_path(ctx.out, last).string() << "\n";
    return 0;
}

inline int cmd_invert(Context& ctx) {
    const auto& ckpt_path = detail::require_path(ctx.cfg.checkpoint, "paths.checkpoint");
    const auto& image_path = detail::require_path(ctx.cfg.invert_image, "invert.image");
    const auto ck = io::load_checkpoint(ckpt_path);
    const Tensor image = io::decode_image(image_path);
    const Condition c(static_cast<Real>(ctx.cfg.invert_condition));
    detail::write_run_record(ctx, "invert", {{"checkpoint", ckpt_path}, {"image", image_path}});

    const auto r = invert(ck.params, image, c, ctx.cfg.invert);
    io::write_text(ctx.out / "latent.json", detail::latent_json(r.z, c, r.loss, r.initial_loss).dump(2) + "\n");
    io::encode_image(forward(ck.params, r.z, c), ctx.out / "reconstruction.png");
    ctx.log << "inversion loss " << io::format_real(r.loss) << " (initial " << io::format_real(r.initial_loss) << ")\n";
    return 0;
}

inline int cmd_synth(Context& ctx) {
    const auto& ckpt_path = detail::require_path(ctx.cfg.checkpoint, "paths.checkpoint");
    const auto ck = io::load_checkpoint(ckpt_path);
    LatentCode z;
    Condition from(static_cast<Real>(ctx.cfg.synth.from));
    nlohmann::json inputs{{"checkpoint", ckpt_path}};
    if (ctx.cfg.synth.sample >= 0) {
        const auto& e = ck.table.at(static_cast<std::size_t>(ctx.cfg.synth.sample));
        z = e.z;
        from = e.c;
        inputs["sample"] = ctx.cfg.synth.sample;
    } else {
        const auto& latent_path = detail::require_path(ctx.cfg.synth.latent, "synth.latent (or synth.sample)");
        const auto j = io::parse_json(io::read_text(latent_path), "latent file '" + latent_path + "'");
        try {
            z.values = j.at("latent").get<std::vector<Real>>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("latent file '" + latent_path + "': " + e.what());
        }
        inputs["latent"] = latent_path;
    }
    const Condition to(static_cast<Real>(ctx.cfg.synth.to));
    detail::write_run_record(ctx, "synth", inputs);

    io::encode_image(forward(ck.params, z, from), ctx.out / "source.png");
    io::encode_image(switch_condition(ck.params, z, from, to), ctx.out / "synth.png");
    ctx.log << "wrote " << (ctx.out / "synth.png").string() << " (c " << from.value() << " -> " << to.value() << ")\n";
    return 0;
}

inline int cmd_augment(Context& ctx) {
    const auto& ckpt_path = detail::require_path(ctx.cfg.checkpoint, "paths.checkpoint");
    const auto& ann_path = detail::require_path(ctx.cfg.annotations, "paths.annotations");
    const auto ck = io::load_checkpoint(ckpt_path);
    const auto scenes = io::load_annotations(ann_path);
    const fs::path ann_dir = fs::path(ann_path).parent_path();
    detail::write_run_record(ctx, "augment", {{"checkpoint", ckpt_path}, {"annotations", ann_path}});

    io::AnnotationFile out_ann;
    std::string report = io::augment_report_header();
    std::size_t limited = 0;
    for (const auto& rec : scenes) {
        SceneImage scene{io::decode_image(ann_dir / rec.image), rec.id};
        if (scene.width() != rec.width || scene.height() != rec.height) {
            throw ShapeError("scene '" + rec.id + "' image is " + shape_str(scene.pixels.shape()) +
                             ", annotation declares " + std::to_string(rec.width) + "x" + std::to_string(rec.height));
        }
        AugmentPlan plan = ctx.cfg.augment;
        plan.seed = scene_seed(ctx.cfg.seed, rec.id);
        const auto res = augment_scene(ck.params, scene, rec.boxes, plan, ctx.cfg.invert);

        const std::string rel = "scenes/" + rec.id + ".png";
        io::encode_image(res.scene.pixels, ctx.out / rel);
        out_ann.push_back({rec.id, rel, rec.width, rec.height, res.boxes});
        report += io::augment_report_rows(rec.id, res.report);
        if (res.rejection_limited) {
            ++limited;
            report += rec.id + "," + std::to_string(res.report.size()) + ",,,,,rejection_limited\n";
            ctx.log << "warning: scene '" << rec.id << "' reached the rejection limit with " << res.boxes.size()
                    << " boxes\n";
        }
    }
    io::save_annotations(out_ann, ctx.out / "annotations.json");
    io::write_text(ctx.out / "report.csv", report);
    ctx.log << "augmented " << scenes.size() << " scenes";
    if (limited) ctx.log << " (" << limited << " rejection-limited)";
    ctx.log << "\n";
    return 0;
}

inline int cmd_gradcheck(Context& ctx) {
    const auto& g = ctx.cfg.gradcheck;
    const GeneratorParams params = init_params(ctx.cfg.generator);
    const LatentCode z = init_latents(1, ctx.cfg.generator.latent_dim, mix_seed(ctx.cfg.seed, 1)).front();
    Tensor target(ctx.cfg.generator.patch_shape());
    std::mt19937_64 rng(mix_seed(ctx.cfg.seed, 2));
    std::uniform_real_distribution<Real> u(-0.9, 0.9);
    for (auto& v : target.data()) v = u(rng);
    detail::write_run_record(ctx, "gradcheck", nlohmann::json::object());

    const auto report = check_generator_gradients(params, z, Condition::foreground(), target, g.coords,
                                                  mix_seed(ctx.cfg.seed, 3), g.h, g.tol);
    std::ostringstream csv;
    csv << "param,index,analytic,numeric,rel_error\n";
    for (const auto& c : report.coords) {
        csv << c.name << ',' << c.index << ',' << io::format_real(c.analytic) << ',' << io::format_real(c.numeric) << ','
            << io::format_real(c.rel_error) << '\n';
    }
    io::write_text(ctx.out / "gradcheck.csv", csv.str());
    ctx.log << "max_rel_error=" << io::format_real(report.max_rel_error) << " coords=" << report.coords.size()
            << " tol=" << io::format_real(g.tol) << ' ' << (report.passed ? "PASS" : "FAIL") << "\n";
    return report.passed ? 0 : 1;
}

/// Entry point shared by the `cglo` binary and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Conditional generative latent optimization: training, inversion and scene augmentation", "cglo"};
    app.require_subcommand(1);

    struct Common {
        std::string config;
        std::optional<std::uint64_t> seed;
        std::string out = "run";
        std::vector<std::string> overrides;
    };
    Common common;
    using Handler = int (*)(Context&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
        {"make-fixture", "Write the synthetic patch/scene dataset", cmd_make_fixture},
        {"train", "Alternate weight and latent updates over a patch dataset", cmd_train},
        {"invert", "Find the latent code reproducing one image with fixed weights", cmd_invert},
        {"synth", "Regenerate a latent code under a switched condition label", cmd_synth},
        {"augment", "Paste synthesized foreground patches into annotated scenes", cmd_augment},
        {"gradcheck", "Compare generator gradients with central differences", cmd_gradcheck},
    };
    for (const auto& [name, help, fn] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", common.config, "Run configuration file")->required();
        sub->add_option("--seed", common.seed, "Override the run seed");
        sub->add_option("--out", common.out, "Run directory for all outputs")->capture_default_str();
        sub->add_option("overrides", common.overrides, "key=value configuration overrides");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error kind=usage message=" << detail::one_line(e.what()) << "\n" << app.help();
        return 2;
    }
    for (const auto& ov : common.overrides) {
        if (ov.find('=') == std::string::npos) {
            err << "error kind=usage message=expected key=value, got '" << ov << "'\n" << app.help();
            return 2;
        }
    }

    const auto* chosen = app.get_subcommands().front();
    Handler handler = nullptr;
    for (const auto& [name, help, fn] : commands) {
        if (name == chosen->get_name()) handler = fn;
    }

    try {
        RunConfig cfg = parse_config(io::read_text(common.config));
        for (const auto& ov : common.overrides) apply_assignment(cfg, ov);
        if (common.seed) cfg.seed = *common.seed;
        cfg.resolve();
        cfg.validate();
        Context ctx{cfg, common.out, out};
        fs::create_directories(ctx.out);
        return handler(ctx);
    } catch (const Error& e) {
        err << "error kind=" << e.kind() << " message=" << detail::one_line(e.what()) << "\n";
    } catch (const fs::filesystem_error& e) {
        err << "error kind=io message=" << detail::one_line(e.what()) << "\n";
    } catch (const std::exception& e) {
        err << "error kind=internal message=" << detail::one_line(e.what()) << "\n";
    }
    return 1;
}

}  // namespace cglo::cli
