#pragma once

// Corpus-level workflows behind the command-line tool: per-image statistics,
// model fitting, batch augmentation, slide curation and model inspection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathaug/augment.hpp"
#include "pathaug/colorspace.hpp"
#include "pathaug/curate.hpp"
#include "pathaug/error.hpp"
#include "pathaug/model_io.hpp"
#include "pathaug/parallel.hpp"
#include "pathaug/png_io.hpp"
#include "pathaug/stainstats.hpp"

namespace pathaug {

namespace fs = std::filesystem;

/// All *.png files under `root` (recursive), sorted by relative path.
inline std::vector<fs::path> list_png_files(const fs::path& root)
{
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw Error(ErrorCode::IoError, root.string() + " is not a directory");
    std::vector<fs::path> out;
    for (auto it = fs::recursive_directory_iterator(root, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        if (!it->is_regular_file()) continue;
        auto ext = it->path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") out.push_back(fs::relative(it->path(), root));
    }
    if (ec) throw Error(ErrorCode::IoError, "cannot list " + root.string() + ": " + ec.message());
    std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
        return a.generic_string() < b.generic_string();
    });
    return out;
}

inline std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_text_file(const fs::path& path, const std::string& content)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

inline void ensure_directory(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::IoError, "cannot create directory " + dir.string());
}

// ---------------------------------------------------------------------------
// stats

struct StatsRecord {
    std::string image; ///< path relative to the corpus root
    std::string slide; ///< parent directory, "." for top-level files
    ChannelStats stats;
};

struct StatsOptions {
    std::vector<ColorSpace> spaces{kAllSpaces.begin(), kAllSpaces.end()};
    double subsample_fraction = 0.1;
    std::uint64_t seed = 0;
    int jobs = 1;
    StainMatrix stain_matrix = StainMatrix::standard();
};

/// Images are grouped by parent directory (one group per slide); each group is
/// reservoir-sampled to subsample_count(n, fraction) images with a stream
/// derived from (seed, group index).
inline std::vector<fs::path> sample_corpus(const std::vector<fs::path>& files, double fraction, std::uint64_t seed)
{
    std::map<std::string, std::vector<fs::path>> groups;
    for (const auto& f : files) groups[f.parent_path().generic_string()].push_back(f);
    std::vector<fs::path> out;
    std::uint64_t index = 0;
    for (const auto& [slide, members] : groups) {
        Rng rng = Rng::derive(seed, index++);
        for (std::size_t i : reservoir_sample(members.size(), subsample_count(members.size(), fraction), rng))
            out.push_back(members[i]);
    }
    return out;
}

inline std::vector<StatsRecord> compute_corpus_stats(const fs::path& images_dir, const StatsOptions& options)
{
    const auto files = list_png_files(images_dir);
    if (files.empty()) throw Error(ErrorCode::EmptyCorpus, "no PNG images under " + images_dir.string());
    const auto sampled = sample_corpus(files, options.subsample_fraction, options.seed);

    std::vector<std::vector<StatsRecord>> per_image(sampled.size());
    parallel_for(sampled.size(), options.jobs, [&](std::size_t i) {
        const RasterImage img = load_png(images_dir / sampled[i]);
        std::string slide = sampled[i].parent_path().generic_string();
        if (slide.empty()) slide = ".";
        for (auto space : options.spaces)
            per_image[i].push_back({sampled[i].generic_string(), slide, image_stats(img, space, options.stain_matrix)});
    });
    std::vector<StatsRecord> out;
    for (auto& v : per_image) out.insert(out.end(), v.begin(), v.end());
    return out;
}

inline std::string stats_to_jsonl(const std::vector<StatsRecord>& records, const StatsOptions& options)
{
    std::string out;
    for (const auto& r : records) {
        nlohmann::json j{{"image", r.image},
                         {"slide", r.slide},
                         {"space", std::string(to_string(r.stats.space))},
                         {"mu", r.stats.mu},
                         {"sigma", r.stats.sigma},
                         {"units", detail::units_note(r.stats.space)},
                         {"seed", options.seed},
                         {"subsample_fraction", options.subsample_fraction}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

inline std::size_t cmd_stats(const fs::path& images_dir, const fs::path& output, const StatsOptions& options)
{
    const auto records = compute_corpus_stats(images_dir, options);
    write_text_file(output, stats_to_jsonl(records, options));
    return records.size();
}

// ---------------------------------------------------------------------------
// fit

struct ParsedStats {
    std::map<ColorSpace, std::vector<ChannelStats>> by_space;
    std::set<std::string> images;
    double subsample_fraction = 1.0;
};

inline ParsedStats parse_stats_jsonl(const std::string& text)
{
    ParsedStats out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool have_fraction = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "stats line " + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaError, where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("space") || !j["space"].is_string())
            throw Error(ErrorCode::SchemaError, where + ": missing \"space\"");
        const auto space = parse_color_space(j["space"].get<std::string>());
        if (!space) throw Error(ErrorCode::SchemaError, where + ": unknown space " + j["space"].dump());
        ChannelStats s;
        s.space = *space;
        s.mu = detail::require_reals<3>(detail::require(j, "mu", where), where + ".mu");
        s.sigma = detail::require_reals<3>(detail::require(j, "sigma", where), where + ".sigma");
        out.by_space[*space].push_back(s);
        if (j.contains("image") && j["image"].is_string()) out.images.insert(j["image"].get<std::string>());
        if (!have_fraction && j.contains("subsample_fraction") && j["subsample_fraction"].is_number()) {
            out.subsample_fraction = j["subsample_fraction"].get<double>();
            have_fraction = true;
        }
    }
    return out;
}

struct FitOptions {
    GmmOptions gmm;
};

inline StainModelFile fit_model(const ParsedStats& stats, const FitOptions& options)
{
    StainModelFile file;
    file.seed = options.gmm.seed;
    file.subsample_fraction = stats.subsample_fraction;
    std::size_t count = 0;
    for (auto space : kAllSpaces) {
        const auto it = stats.by_space.find(space);
        if (it == stats.by_space.end() || it->second.empty())
            throw Error(ErrorCode::SchemaError, "stats file has no " + std::string(to_string(space)) + " entries");
        count = std::max(count, it->second.size());
        auto& m = file.at(space);
        m.unimodal = fit_unimodal(it->second, space);
        m.gmm = fit_gmm(it->second, space, options.gmm);
    }
    file.image_count = static_cast<std::int64_t>(stats.images.empty() ? count : stats.images.size());
    return file;
}

inline StainModelFile cmd_fit(const fs::path& stats_file, const fs::path& output, const FitOptions& options)
{
    auto model = fit_model(parse_stats_jsonl(read_text_file(stats_file)), options);
    save_model(model, output);
    return model;
}

// ---------------------------------------------------------------------------
// augment

struct AugmentOptions {
    std::string preset;         ///< used when config_path is empty
    fs::path config_path;       ///< pipeline JSON
    fs::path model_path;        ///< overrides the config's model_path
    std::uint64_t seed = 0;
    int jobs = 1;
};

/// Resolves the pipeline (preset or config file) and loads its model if needed.
inline AugmentPipeline load_pipeline(const AugmentOptions& options)
{
    AugmentPipeline pipeline;
    fs::path config_dir;
    if (!options.config_path.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(options.config_path));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ConfigError, options.config_path.string() + ": " + e.what());
        }
        pipeline = pipeline_from_json(j);
        config_dir = options.config_path.parent_path();
    } else {
        auto preset = make_preset(options.preset.empty() ? "paper-default" : options.preset);
        if (!preset) throw Error(ErrorCode::ConfigError, "unknown preset \"" + options.preset + "\"");
        pipeline = *preset;
    }

    fs::path model_path = options.model_path;
    if (model_path.empty() && !pipeline.model_path.empty()) {
        model_path = pipeline.model_path;
        if (model_path.is_relative()) model_path = config_dir / model_path;
    }
    if (pipeline.needs_model()) {
        if (model_path.empty())
            throw Error(ErrorCode::ConfigError,
                        "pipeline uses RandStainNA but no stain statistics model was given (--model)");
        pipeline.model_path = model_path.string();
        pipeline.attach_model(std::make_shared<const StainModelFile>(load_model(model_path)));
    }
    validate(pipeline);
    return pipeline;
}

/// Image i (in sorted relative-path order) uses Rng::derive(seed, i).
/// Outputs keep their relative path; an image no step changed is copied
/// byte-for-byte. A run record (seed, pipeline) is written as augment_run.json.
inline std::size_t cmd_augment(const fs::path& images_dir, const fs::path& out_dir, const AugmentOptions& options)
{
    const AugmentPipeline pipeline = load_pipeline(options);
    const auto files = list_png_files(images_dir);
    ensure_directory(out_dir);
    parallel_for(files.size(), options.jobs, [&](std::size_t i) {
        const fs::path src = images_dir / files[i];
        const fs::path dst = out_dir / files[i];
        std::error_code ec;
        fs::create_directories(dst.parent_path(), ec);
        const RasterImage input = load_png(src);
        Rng rng = Rng::derive(options.seed, i);
        const RasterImage output = apply_pipeline(pipeline, input, rng);
        if (output == input) {
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing, ec);
            if (ec) throw Error(ErrorCode::IoError, "cannot copy to " + dst.string());
        } else {
            save_png(output, dst);
        }
    });
    nlohmann::json run{{"seed", options.seed},
                       {"images", files.size()},
                       {"pipeline", pipeline_to_json(pipeline)}};
    write_text_file(out_dir / "augment_run.json", run.dump(2) + "\n");
    return files.size();
}

// ---------------------------------------------------------------------------
// curate

/// Slides are laid out as {slides_dir}/{slide_id}/{20x|40x}.png.
inline std::vector<SlideLevel> load_slide_levels(const fs::path& slides_dir)
{
    std::error_code ec;
    if (!fs::is_directory(slides_dir, ec)) throw Error(ErrorCode::IoError, slides_dir.string() + " is not a directory");
    std::vector<fs::path> slide_dirs;
    for (const auto& entry : fs::directory_iterator(slides_dir))
        if (entry.is_directory()) slide_dirs.push_back(entry.path());
    std::sort(slide_dirs.begin(), slide_dirs.end());
    std::vector<SlideLevel> levels;
    for (const auto& dir : slide_dirs) {
        for (auto mag : {Magnification::X20, Magnification::X40}) {
            const auto file = dir / (std::string(to_string(mag)) + ".png");
            if (fs::is_regular_file(file)) levels.push_back({dir.filename().string(), mag, load_png(file)});
        }
    }
    return levels;
}

struct CurateResult {
    PatchManifest manifest;
    nlohmann::json summary;
};

inline CurateResult cmd_curate(const fs::path& slides_dir, const fs::path& out_dir, CurateOptions options)
{
    const auto levels = load_slide_levels(slides_dir);
    ensure_directory(out_dir);
    options.output_dir = out_dir / "patches";
    CurateResult result;
    result.manifest = curate_corpus(levels, options);
    result.summary = manifest_summary(result.manifest);
    write_text_file(out_dir / "manifest.jsonl", manifest_to_jsonl(result.manifest));
    write_text_file(out_dir / "summary.json", result.summary.dump(2) + "\n");
    return result;
}

// ---------------------------------------------------------------------------
// inspect

inline double condition_number(const Mat6& cov)
{
    Eigen::SelfAdjointEigenSolver<Mat6> es(cov, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

inline void print_model_report(const StainModelFile& model, std::ostream& os)
{
    static const char* kVariables[6] = {"mu1", "mu2", "mu3", "sigma1", "sigma2", "sigma3"};
    os << "stain statistics model v" << kModelFileVersion << "\n";
    os << "images: " << model.image_count << "  subsample fraction: " << model.subsample_fraction;
    if (model.seed) os << "  seed: " << *model.seed;
    os << "\nstain matrix:";
    for (const auto& row : model.stain_matrix.rows())
        os << "  (" << row[0] << ", " << row[1] << ", " << row[2] << ")";
    os << "\n";
    const auto old_flags = os.flags();
    const auto old_precision = os.precision();
    for (auto space : kAllSpaces) {
        const auto& m = model.at(space);
        os << "\n[" << to_string(space) << "]\n";
        os << std::fixed << std::setprecision(4);
        os << "  unimodal:\n";
        for (int v = 0; v < 6; ++v)
            os << "    " << std::setw(7) << std::left << kVariables[v] << std::right << " mean " << std::setw(12)
               << m.unimodal.mean[v] << "  std " << std::setw(12) << m.unimodal.std[v] << "\n";
        os << "  gmm: k=" << m.gmm.k() << "\n";
        double wsum = 0.0;
        for (int c = 0; c < m.gmm.k(); ++c) {
            wsum += m.gmm.weights[c];
            os << "    [" << c << "] weight " << std::setprecision(6) << m.gmm.weights[c] << "  cond "
               << std::scientific << std::setprecision(3) << condition_number(m.gmm.covariances[c]) << std::fixed
               << "\n";
        }
        os << "  weight sum: " << std::setprecision(12) << wsum << "\n";
        os.flags(old_flags);
        os.precision(old_precision);
    }
}

inline void cmd_inspect(const fs::path& model_path, std::ostream& os) { print_model_report(load_model(model_path), os); }

} // namespace pathaug
