#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "pathaug/commands.hpp"

namespace {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level()
{
    const char* env = std::getenv("PATHAUG_LOG");
    if (!env) return LogLevel::Warn;
    const std::string_view v(env);
    if (v == "error") return LogLevel::Error;
    if (v == "info") return LogLevel::Info;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
}

void log(LogLevel level, const std::string& message)
{
    static const LogLevel threshold = log_level();
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    if (level <= threshold) std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << "\n";
}

std::vector<pathaug::ColorSpace> parse_spaces(const std::vector<std::string>& names)
{
    std::vector<pathaug::ColorSpace> out;
    for (const auto& n : names) {
        auto s = pathaug::parse_color_space(n);
        if (!s) throw pathaug::Error(pathaug::ErrorCode::ConfigError, "unknown color space \"" + n + "\"");
        out.push_back(*s);
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"pathaug: stain statistics, augmentation and patch curation for pathology images"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int jobs = 1;

    // stats
    auto* stats = app.add_subcommand("stats", "Compute per-image channel statistics (JSON lines)");
    std::string stats_in, stats_out;
    std::vector<std::string> stats_spaces{"HSV", "LAB", "HED"};
    double subsample = 0.1;
    stats->add_option("images", stats_in, "Directory of PNG images (subdirectories are slides)")->required();
    stats->add_option("-o,--output", stats_out, "Output JSON-lines file")->required();
    stats->add_option("--spaces", stats_spaces, "Color spaces")->delimiter(',');
    stats->add_option("--subsample", subsample, "Fraction of images sampled per slide")->check(CLI::Range(0.0, 1.0));
    stats->add_option("--seed", seed, "Sampling seed")->required();
    stats->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // fit
    auto* fit = app.add_subcommand("fit", "Fit unimodal and GMM stain models from a stats file");
    std::string fit_in, fit_out;
    pathaug::FitOptions fit_opts;
    fit->add_option("stats", fit_in, "Stats JSON-lines file")->required();
    fit->add_option("-o,--output", fit_out, "Output model JSON")->required();
    fit->add_option("--k", fit_opts.gmm.k, "Mixture components")->check(CLI::PositiveNumber);
    fit->add_option("--max-iter", fit_opts.gmm.max_iter, "EM iteration limit");
    fit->add_option("--tol", fit_opts.gmm.tol, "EM convergence tolerance (mean log-likelihood)");
    fit->add_option("--seed", seed, "Initialization seed")->required();

    // augment
    auto* augment = app.add_subcommand("augment", "Apply an augmentation pipeline to a directory of PNGs");
    std::string aug_in, aug_out, aug_config, aug_model, aug_preset;
    augment->add_option("images", aug_in, "Input directory")->required();
    augment->add_option("-o,--output", aug_out, "Output directory")->required();
    auto* preset_opt = augment->add_option("--preset", aug_preset, "Named pipeline (paper-default, paper-default-unimodal)");
    augment->add_option("--config", aug_config, "Pipeline JSON file")->excludes(preset_opt);
    augment->add_option("--model", aug_model, "Stain statistics model JSON");
    augment->add_option("--seed", seed, "Pipeline seed")->required();
    augment->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // curate
    auto* curate = app.add_subcommand("curate", "Select and filter patches from slide levels");
    std::string cur_in, cur_out, mask_dir;
    pathaug::CurateOptions cur_opts;
    bool no_filter = false;
    curate->add_option("slides", cur_in, "Directory of {slide_id}/{20x,40x}.png")->required();
    curate->add_option("-o,--output", cur_out, "Output directory")->required();
    curate->add_option("--patch-size", cur_opts.selection.patch_size, "Patch edge in pixels")->required();
    curate->add_option("--cap", cur_opts.selection.cap, "Max selected patches per slide and magnification");
    curate->add_option("--sat-threshold", cur_opts.selection.sat_threshold, "Minimum mean saturation [0,255]");
    curate->add_option("--lap-threshold", cur_opts.selection.lap_threshold, "Minimum mean squared Laplacian");
    curate->add_flag("--no-filter", no_filter, "Keep every selected patch");
    curate->add_flag("--audit", cur_opts.selection.audit, "Record background tiles in the manifest");
    curate->add_option("--mask-dir", mask_dir, "External masks as {dir}/{slide_id}/{mag}.png");
    curate->add_option("--mask-downsample", cur_opts.mask_downsample, "Computed mask resolution divisor")
        ->check(CLI::PositiveNumber);
    curate->add_option("--seed", seed, "Run seed (recorded in outputs)")->required();
    curate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Print a stain statistics model");
    std::string inspect_path;
    inspect->add_option("model", inspect_path, "Model JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*stats) {
            pathaug::StatsOptions opts;
            opts.spaces = parse_spaces(stats_spaces);
            opts.subsample_fraction = subsample;
            opts.seed = seed;
            opts.jobs = jobs;
            const auto lines = pathaug::cmd_stats(stats_in, stats_out, opts);
            log(LogLevel::Info, "wrote " + std::to_string(lines) + " stats lines to " + stats_out);
        } else if (*fit) {
            fit_opts.gmm.seed = seed;
            const auto model = pathaug::cmd_fit(fit_in, fit_out, fit_opts);
            log(LogLevel::Info, "fitted models on " + std::to_string(model.image_count) + " images -> " + fit_out);
        } else if (*augment) {
            pathaug::AugmentOptions opts;
            opts.preset = aug_preset;
            opts.config_path = aug_config;
            opts.model_path = aug_model;
            opts.seed = seed;
            opts.jobs = jobs;
            const auto n = pathaug::cmd_augment(aug_in, aug_out, opts);
            log(LogLevel::Info, "augmented " + std::to_string(n) + " images into " + aug_out);
        } else if (*curate) {
            cur_opts.selection.apply_filters = !no_filter;
            cur_opts.mask_dir = mask_dir;
            cur_opts.seed = seed;
            cur_opts.jobs = jobs;
            const auto result = pathaug::cmd_curate(cur_in, cur_out, cur_opts);
            std::cout << result.summary.dump(2) << "\n";
        } else if (*inspect) {
            pathaug::cmd_inspect(inspect_path, std::cout);
        }
    } catch (const pathaug::Error& e) {
        std::cerr << "error[" << pathaug::error_code_name(e.code()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[E_INTERNAL]: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
