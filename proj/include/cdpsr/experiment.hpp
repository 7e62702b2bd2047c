#pragma once

// Simulation benchmark harness: target → masks → measurements → noise →
// reconstruction (each configured algorithm) → metrics → optional
// segmentation, for every cell of a (theta × noise parameter) sweep.
//
// Output directory layout:
//   config.txt                 the resolved configuration
//   results.csv                one row per (cell, algorithm)
//   summary.csv                one row per cell, algorithms side by side
//   cell_NNN/truth.f64         ground truth (+ .meta, previews)
//   cell_NNN/<algo>/           field.f64, iterations.csv, metrics.txt, previews, labels
//   FAILED                     present only when a stage failed

#include <chrono>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cdpsr/config.hpp"
#include "cdpsr/metrics.hpp"
#include "cdpsr/parallel.hpp"
#include "cdpsr/segmentation.hpp"
#include "cdpsr/solver.hpp"

namespace cdpsr {

/// A harness failure tagged with the pipeline stage it came from.
class ExperimentError : public std::runtime_error {
public:
    ExperimentError(const std::string& stage, const std::string& msg)
        : std::runtime_error("[" + stage + "] " + msg), stage_(stage), message_(msg) {}
    const std::string& stage() const noexcept { return stage_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string stage_;
    std::string message_;
};

struct ResultRow {
    std::size_t cell = 0;
    Algorithm algo = Algorithm::Conv;
    std::size_t theta = 1;
    NoiseKind noise_kind = NoiseKind::None;
    double noise_param = 0.0;
    std::size_t masks = 0;
    std::size_t iters = 0;
    MetricsReport metrics;
    double seconds = 0.0;
};

inline std::string results_csv_header() {
    return "algo,theta,noise_kind,noise_param,masks,iters,psnr_amp_db,psnr_phase_db,ssim_amp,ssim_phase,"
           "cell_count,seconds";
}

inline std::string noise_param_text(NoiseKind kind, double param) {
    return kind == NoiseKind::None ? "NA" : KeyValue::format_double(param);
}

/// One results.csv line. Without timing the seconds column reads NA, which
/// keeps the file a pure function of the configuration.
inline std::string results_csv_row(const ResultRow& r, bool timing) {
    const auto f = KeyValue::format_double;
    std::string s = std::string(to_string(r.algo)) + "," + std::to_string(r.theta) + "," +
                    to_string(r.noise_kind) + "," + noise_param_text(r.noise_kind, r.noise_param) + "," +
                    std::to_string(r.masks) + "," + std::to_string(r.iters) + "," +
                    f(r.metrics.psnr_amplitude) + "," + f(r.metrics.psnr_phase) + "," +
                    f(r.metrics.ssim_amplitude) + "," + f(r.metrics.ssim_phase) + ",";
    s += r.metrics.cell_count ? std::to_string(*r.metrics.cell_count) : "";
    s += ",";
    s += timing ? f(r.seconds) : "NA";
    return s;
}

struct ExperimentReport {
    std::vector<ResultRow> rows;  ///< cell-major, algorithms in configured order
    fs::path results_csv;
    fs::path summary_csv;
};

namespace detail {

// Runs fn, re-tagging any escaping error with the stage name.
template <typename Fn>
auto in_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ExperimentError&) {
        throw;
    } catch (const std::exception& e) {
        throw ExperimentError(name, e.what());
    }
}

inline fs::path cell_dir(const fs::path& out, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "cell_%03zu", index);
    return out / buf;
}

inline void write_summary_csv(const fs::path& path, const ExperimentConfig& cfg,
                              const std::vector<ResultRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    const auto f = KeyValue::format_double;
    out << "cell,theta,noise_kind,noise_param,masks";
    for (auto a : cfg.algos) {
        const std::string p = to_string(a);
        out << ',' << p << "_iters," << p << "_psnr_amp_db," << p << "_psnr_phase_db," << p << "_ssim_amp,"
            << p << "_ssim_phase," << p << "_cell_count";
    }
    out << '\n';
    const std::size_t per_cell = cfg.algos.size();
    for (std::size_t i = 0; i + per_cell <= rows.size(); i += per_cell) {
        const auto& first = rows[i];
        out << first.cell << ',' << first.theta << ',' << to_string(first.noise_kind) << ','
            << noise_param_text(first.noise_kind, first.noise_param) << ',' << first.masks;
        for (std::size_t k = 0; k < per_cell; ++k) {
            const auto& r = rows[i + k];
            out << ',' << r.iters << ',' << f(r.metrics.psnr_amplitude) << ',' << f(r.metrics.psnr_phase) << ','
                << f(r.metrics.ssim_amplitude) << ',' << f(r.metrics.ssim_phase) << ','
                << (r.metrics.cell_count ? std::to_string(*r.metrics.cell_count) : "");
        }
        out << '\n';
    }
}

}  // namespace detail

/// Simulated inputs of one sweep cell.
struct CellInputs {
    Target target;
    OpticalConfig optics;
    MaskSet masks;
    MeasurementStack stack;
};

inline MeasurementStack apply_noise(const MeasurementStack& clean, NoiseKind kind, double param,
                                    std::uint64_t seed, bool clamp) {
    switch (kind) {
        case NoiseKind::None: return clean;
        case NoiseKind::Poisson: return add_poisson_noise(clean, param, seed);
        case NoiseKind::Gaussian: return add_gaussian_noise(clean, param, seed, clamp);
    }
    return clean;
}

inline CellInputs simulate_cell(const ExperimentConfig& cfg, const SweepCell& cell, std::size_t threads = 1) {
    CellInputs in;
    in.optics = detail::in_stage("optics", [&] {
        auto o = cfg.optics(cell.theta);
        o.validate();
        return o;
    });
    in.target = detail::in_stage("target", [&] { return make_target(cfg.target, in.optics.geometry.hr_pitch, cfg.target_seed()); });
    in.masks = detail::in_stage("masks", [&] { return generate_mask_set(cfg.mask_spec(cell.theta)); });
    auto clean = detail::in_stage("simulate", [&] { return simulate_measurements(in.target.field, in.masks, in.optics, threads); });
    in.stack = detail::in_stage("noise", [&] {
        return apply_noise(clean, cfg.noise_kind, cell.noise_param, cfg.noise_seed(), cfg.noise_clamp);
    });
    return in;
}

/// Amplitude or phase channel used for segmentation; the phase is taken after
/// global-phase alignment when a reference is available.
inline RealGrid analysis_channel(const ComplexField& field, const std::string& channel,
                                 const ComplexField* reference = nullptr) {
    if (channel == "amplitude") return amplitude(field);
    return wrapped_phase(reference ? align_global_phase(field, *reference) : field);
}

inline std::vector<ResultRow> run_cell(const ExperimentConfig& cfg, const SweepCell& cell, std::size_t threads) {
    const fs::path dir = detail::cell_dir(cfg.out, cell.index);
    detail::in_stage("output", [&] {
        fs::create_directories(dir);
    });
    const auto in = simulate_cell(cfg, cell, threads);
    const auto& truth = in.target.field;
    detail::in_stage("output", [&] {
        save_grid(dir / "truth.f64", truth);
        if (cfg.previews) {
            export_amplitude_png(dir / "truth_amplitude.png", truth);
            export_phase_png(dir / "truth_phase.png", truth);
        }
    });

    std::vector<ResultRow> rows;
    for (auto algo : cfg.algos) {
        const std::string name = to_string(algo);
        const fs::path adir = dir / name;
        ReconConfig rc = cfg.recon();
        rc.threads = threads;
        if (rc.checkpoint_every > 0) rc.checkpoint_dir = adir / "checkpoints";
        auto den = cfg.denoiser(algo);
        if (algo == Algorithm::DoExt) den.external.workdir = den.external.workdir / dir.filename();

        const auto result = detail::in_stage("reconstruct:" + name, [&] {
            return reconstruct_do_psr(in.stack, in.masks, in.optics, rc, den, &truth);
        });
        ResultRow row;
        row.cell = cell.index;
        row.algo = algo;
        row.theta = cell.theta;
        row.noise_kind = cfg.noise_kind;
        row.noise_param = cell.noise_param;
        row.masks = in.masks.size();
        row.iters = result.per_iteration.size();
        row.seconds = result.wall_time;
        row.metrics = detail::in_stage("metrics", [&] { return evaluate_field(result.field, truth); });
        if (cfg.segment) {
            detail::in_stage("analysis", [&] {
                const auto img = analysis_channel(result.field, cfg.segment_channel, &truth);
                const auto labels = watershed_segment(img, cfg.segment_params);
                row.metrics.cell_count = static_cast<long>(count_cells(labels, cfg.exclude_margin));
                if (in.target.reference_count && *in.target.reference_count > 0)
                    row.metrics.counting_error = counting_error_percent(
                        *row.metrics.cell_count, static_cast<long>(*in.target.reference_count));
                fs::create_directories(adir);
                write_label_png(adir / "labels.png", labels);
                if (cfg.previews) write_label_preview(adir / "labels_preview.png", labels);
            });
        }
        detail::in_stage("output", [&] {
            fs::create_directories(adir);
            save_grid(adir / "field.f64", result.field);
            write_iteration_csv(adir / "iterations.csv", result, cfg.timing);
            row.metrics.to_key_value().save(adir / "metrics.txt");
            if (cfg.previews) {
                export_amplitude_png(adir / "amplitude.png", result.field);
                export_phase_png(adir / "phase.png", align_global_phase(result.field, truth));
            }
        });
        rows.push_back(row);
    }
    return rows;
}

/// Runs every sweep cell on a pool of cfg.threads workers. Results are
/// collected by cell index, so outputs do not depend on the worker count. On
/// failure a FAILED file naming the stage is written and the error rethrown.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    ExperimentReport report;
    const fs::path failed = cfg.out / "FAILED";
    auto fail = [&](const ExperimentError& e) {
        std::error_code ec;
        fs::create_directories(cfg.out, ec);
        std::ofstream(failed, std::ios::trunc) << e.what() << '\n';
        throw e;
    };
    try {
        cfg.validate();
        fs::create_directories(cfg.out);
        std::error_code ec;
        fs::remove(failed, ec);
        cfg.save(cfg.out / "config.txt");
    } catch (const std::exception& e) {
        fail(ExperimentError("config", e.what()));
    }

    const auto cells = cfg.cells();
    const std::size_t inner = cells.size() > 1 ? 1 : cfg.threads;
    std::vector<std::vector<ResultRow>> per_cell(cells.size());
    std::vector<std::optional<ExperimentError>> errors(cells.size());
    parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
        try {
            per_cell[i] = run_cell(cfg, cells[i], inner);
        } catch (const ExperimentError& e) {
            errors[i] = ExperimentError(e.stage(), "cell " + std::to_string(i) + ": " + e.message());
        } catch (const std::exception& e) {
            errors[i] = ExperimentError("cell", "cell " + std::to_string(i) + ": " + e.what());
        }
    });

    for (auto& rows : per_cell) report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    try {
        report.results_csv = cfg.out / "results.csv";
        report.summary_csv = cfg.out / "summary.csv";
        std::ofstream out(report.results_csv, std::ios::trunc);
        if (!out) throw IoError("cannot write " + report.results_csv.string());
        out << results_csv_header() << '\n';
        for (const auto& r : report.rows) out << results_csv_row(r, cfg.timing) << '\n';
        out.close();
        detail::write_summary_csv(report.summary_csv, cfg, report.rows);
    } catch (const std::exception& e) {
        fail(ExperimentError("output", e.what()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (errors[i]) fail(*errors[i]);
    return report;
}

}  // namespace cdpsr
