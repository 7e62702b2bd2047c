// Command-line front end: simulate, masks, reconstruct, evaluate, segment, bench.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cdpsr/cdpsr.hpp"

namespace {

using namespace cdpsr;

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
};

ExperimentConfig load_config(const Globals& g, const fs::path& fallback = {}) {
    ExperimentConfig cfg;
    if (!g.config.empty())
        cfg = ExperimentConfig::from_key_value(KeyValue::load(g.config));
    else if (!fallback.empty() && fs::exists(fallback))
        cfg = ExperimentConfig::from_key_value(KeyValue::load(fallback));
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out.empty()) cfg.out = g.out;
    if (g.threads) cfg.threads = *g.threads;
    cfg.validate();
    return cfg;
}

SweepCell single_cell(const ExperimentConfig& cfg, const char* command) {
    const auto cells = cfg.cells();
    if (cells.size() != 1)
        throw ConfigError(std::string(command) + " handles a single (theta, noise.param) cell; the config spans " +
                          std::to_string(cells.size()) + " (use bench for sweeps)");
    return cells.front();
}

int cmd_simulate(const Globals& g, bool mask_data) {
    const auto cfg = load_config(g);
    const auto cell = single_cell(cfg, "simulate");
    const auto in = simulate_cell(cfg, cell, cfg.threads);
    fs::create_directories(cfg.out);
    cfg.save(cfg.out / "experiment.txt");
    optics_metadata(in.optics).save(cfg.out / "optics.meta");
    save_grid(cfg.out / "truth.f64", in.target.field);
    save_masks(cfg.out / "masks", in.masks, mask_data);
    save_stack(cfg.out / "stack", in.stack);
    if (cfg.previews) {
        export_amplitude_png(cfg.out / "truth_amplitude.png", in.target.field);
        export_phase_png(cfg.out / "truth_phase.png", in.target.field);
        export_real_png(cfg.out / "frame_0000.png", in.stack.frames.front());
    }
    std::cout << "frames=" << in.stack.size() << " theta=" << cell.theta
              << " noise=" << to_string(in.stack.noise_kind) << " out=" << cfg.out.string() << '\n';
    return 0;
}

int cmd_masks(const Globals& g, bool with_data) {
    const auto cfg = load_config(g);
    const auto cell = single_cell(cfg, "masks");
    const auto set = generate_mask_set(cfg.mask_spec(cell.theta));
    save_masks(cfg.out / "masks", set, with_data);
    std::cout << "masks=" << set.size() << " kind=" << to_string(set.spec.kind)
              << " out=" << (cfg.out / "masks").string() << '\n';
    return 0;
}

int cmd_reconstruct(const Globals& g, const fs::path& in_dir, const std::string& algo_name,
                    std::optional<std::size_t> iters) {
    if (in_dir.empty()) throw ConfigError("reconstruct needs --in DIR (a simulate output directory)");
    auto cfg = load_config(g, in_dir / "experiment.txt");
    if (g.out.empty()) cfg.out = in_dir / ("recon_" + algo_name);
    const auto algo = parse_algorithm(algo_name);
    const auto optics = optics_from_metadata(KeyValue::load(in_dir / "optics.meta"));
    const auto masks = load_masks(in_dir / "masks");
    const auto stack = load_stack(in_dir / "stack");
    std::optional<ComplexField> truth;
    if (fs::exists(in_dir / "truth.f64")) truth = load_complex(in_dir / "truth.f64");

    auto rc = cfg.recon();
    if (iters) rc.outer_iters = *iters;
    if (rc.checkpoint_every > 0) rc.checkpoint_dir = cfg.out / "checkpoints";
    const auto result =
        reconstruct_do_psr(stack, masks, optics, rc, cfg.denoiser(algo), truth ? &*truth : nullptr);

    fs::create_directories(cfg.out);
    save_grid(cfg.out / "field.f64", result.field);
    write_iteration_csv(cfg.out / "iterations.csv", result, cfg.timing);
    KeyValue info;
    info.set("algo", to_string(algo));
    info.set("iterations", result.per_iteration.size());
    info.set("converged", result.converged);
    if (!result.per_iteration.empty()) info.set("final_residual", result.per_iteration.back().residual);
    if (cfg.timing) info.set("wall_time", result.wall_time);
    info.save(cfg.out / "result.txt");
    if (cfg.previews) {
        export_amplitude_png(cfg.out / "amplitude.png", result.field);
        export_phase_png(cfg.out / "phase.png", truth ? align_global_phase(result.field, *truth) : result.field);
    }
    std::cout << "algo=" << to_string(algo) << " iterations=" << result.per_iteration.size();
    if (!result.per_iteration.empty()) {
        const auto& last = result.per_iteration.back();
        std::cout << " residual=" << KeyValue::format_double(last.residual);
        if (last.psnr_amplitude) std::cout << " psnr_amplitude=" << KeyValue::format_double(*last.psnr_amplitude);
        if (last.psnr_phase) std::cout << " psnr_phase=" << KeyValue::format_double(*last.psnr_phase);
    }
    std::cout << " out=" << cfg.out.string() << '\n';
    return 0;
}

int cmd_evaluate(const Globals& g, const fs::path& field_path, const fs::path& truth_path) {
    const auto est = load_complex(field_path);
    const auto truth = load_complex(truth_path);
    const auto rep = evaluate_field(est, truth);
    std::cout << rep.to_key_value().to_string();
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        rep.to_key_value().save(fs::path(g.out) / "metrics.txt");
        std::ofstream csv(fs::path(g.out) / "metrics.csv", std::ios::trunc);
        csv << MetricsReport::csv_header() << '\n' << rep.csv_row() << '\n';
    }
    return 0;
}

RealGrid load_analysis_image(const fs::path& path, const std::string& channel) {
    if (path.extension() == ".png") return load_png_unit(path);
    const auto header = load_header(path);
    if (!header.complex) return load_real(path);
    return analysis_channel(load_complex(path), channel);
}

int cmd_segment(const Globals& g, const fs::path& input, const std::string& channel, const SegmentParams& params,
                bool keep_margin) {
    if (channel != "amplitude" && channel != "phase") throw ConfigError("--channel must be amplitude or phase");
    const auto img = load_analysis_image(input, channel);
    const auto labels = watershed_segment(img, params);
    const auto count = count_cells(labels, !keep_margin);
    if (!g.out.empty()) {
        fs::create_directories(g.out);
        write_label_png(fs::path(g.out) / "labels.png", labels);
        write_label_preview(fs::path(g.out) / "labels_preview.png", labels);
    }
    std::cout << "count=" << count << '\n';
    return 0;
}

int cmd_bench(const Globals& g) {
    const auto cfg = load_config(g);
    const auto report = run_experiment(cfg);
    std::cout << "cells=" << cfg.cells().size() << " rows=" << report.rows.size()
              << " results=" << report.results_csv.string() << " summary=" << report.summary_csv.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Complex-domain pixel super-resolution: simulation, reconstruction and analysis"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Experiment config file (key=value)");
    app.add_option("--seed", g.seed, "Master seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--threads", g.threads, "Worker threads; changes wall time only")->check(CLI::PositiveNumber);

    auto* simulate = app.add_subcommand("simulate", "Target + masks -> measurement stack")->fallthrough();
    bool no_mask_data = false;
    simulate->add_flag("--no-mask-data", no_mask_data, "Store mask metadata only (masks regenerate from it)");

    auto* masks = app.add_subcommand("masks", "Generate and save a mask set")->fallthrough();
    bool masks_meta_only = false;
    masks->add_flag("--no-data", masks_meta_only, "Store metadata only");

    auto* reconstruct = app.add_subcommand("reconstruct", "Stack -> reconstructed field")->fallthrough();
    std::string in_dir, algo = "do-tv";
    std::optional<std::size_t> iters;
    reconstruct->add_option("--in", in_dir, "Directory written by simulate")->required();
    reconstruct->add_option("--algo", algo, "conv | do-tv | do-ext")
        ->check(CLI::IsMember({"conv", "do-tv", "do-ext"}));
    reconstruct->add_option("--iters", iters, "Outer iterations (overrides the config)");

    auto* evaluate = app.add_subcommand("evaluate", "Field + truth -> metrics")->fallthrough();
    std::string field_path, truth_path;
    evaluate->add_option("--field", field_path, "Reconstructed field (.f64)")->required();
    evaluate->add_option("--truth", truth_path, "Ground-truth field (.f64)")->required();

    auto* segment = app.add_subcommand("segment", "Image -> labels + cell count")->fallthrough();
    std::string seg_input, channel = "phase", method = "otsu";
    SegmentParams seg;
    bool keep_margin = false;
    segment->add_option("--input", seg_input, "PNG, real .f64, or complex .f64")->required();
    segment->add_option("--channel", channel, "amplitude | phase (complex input)");
    segment->add_option("--method", method, "otsu | fixed")->check(CLI::IsMember({"otsu", "fixed"}));
    segment->add_option("--threshold", seg.fixed_threshold, "Threshold for --method fixed");
    segment->add_option("--min-distance", seg.min_distance, "Minimum marker separation in pixels");
    segment->add_flag("--keep-margin", keep_margin, "Count objects touching the border too");

    auto* bench = app.add_subcommand("bench", "Run the configured sweep")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        std::cerr << (sub ? sub->help() : app.help());
        return 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(g, !no_mask_data);
        if (masks->parsed()) return cmd_masks(g, !masks_meta_only);
        if (reconstruct->parsed()) return cmd_reconstruct(g, in_dir, algo, iters);
        if (evaluate->parsed()) return cmd_evaluate(g, field_path, truth_path);
        if (segment->parsed()) {
            seg.method = parse_threshold_method(method);
            return cmd_segment(g, seg_input, channel, seg, keep_margin);
        }
        if (bench->parsed()) return cmd_bench(g);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
