#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pathaug/augment.hpp"
#include "pathaug/colorspace.hpp"
#include "pathaug/error.hpp"
#include "pathaug/parallel.hpp"
#include "pathaug/png_io.hpp"
#include "pathaug/raster.hpp"

namespace pathaug {

enum class Magnification { X20, X40 };

constexpr std::string_view to_string(Magnification m) noexcept { return m == Magnification::X20 ? "20x" : "40x"; }

inline std::optional<Magnification> parse_magnification(std::string_view s) noexcept
{
    if (s == "20x") return Magnification::X20;
    if (s == "40x") return Magnification::X40;
    return std::nullopt;
}

struct SlideLevel {
    std::string slide_id;
    Magnification magnification = Magnification::X20;
    RasterImage image;
};

/// Binary tissue mask. One mask pixel covers scale_x by scale_y level pixels.
struct BinaryMask {
    int width = 0;
    int height = 0;
    double scale_x = 1.0;
    double scale_y = 1.0;
    std::vector<std::uint8_t> data; // 0 or 1, row-major

    bool at(int mx, int my) const noexcept { return data[static_cast<std::size_t>(my) * width + mx] != 0; }

    /// Looks up the mask pixel covering level pixel (x, y).
    bool covers(double x, double y) const noexcept
    {
        const int mx = std::clamp(static_cast<int>(std::floor(x / scale_x)), 0, width - 1);
        const int my = std::clamp(static_cast<int>(std::floor(y / scale_y)), 0, height - 1);
        return at(mx, my);
    }

    std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }
};

// ---------------------------------------------------------------------------
// Foreground segmentation.

/// Otsu threshold on a 256-bin histogram. Foreground is value > threshold.
/// A histogram with one occupied bin v yields v-1 (all foreground) unless v is 0.
inline int otsu_threshold(const std::array<std::uint64_t, 256>& hist)
{
    std::uint64_t total = 0;
    double sum_all = 0.0;
    int occupied = 0;
    int only = 0;
    for (int i = 0; i < 256; ++i) {
        total += hist[i];
        sum_all += static_cast<double>(i) * static_cast<double>(hist[i]);
        if (hist[i] > 0) {
            ++occupied;
            only = i;
        }
    }
    if (total == 0) return 0;
    if (occupied == 1) return only > 0 ? only - 1 : 0;

    double best = -1.0;
    int best_t = 0;
    std::uint64_t w0 = 0;
    double sum0 = 0.0;
    for (int t = 0; t < 255; ++t) {
        w0 += hist[t];
        sum0 += static_cast<double>(t) * static_cast<double>(hist[t]);
        const std::uint64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double m0 = sum0 / static_cast<double>(w0);
        const double m1 = (sum_all - sum0) / static_cast<double>(w1);
        const double between = static_cast<double>(w0) * static_cast<double>(w1) * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_t = t;
        }
    }
    return best_t;
}

inline BinaryMask majority_smooth(const BinaryMask& mask)
{
    BinaryMask out = mask;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            int n = 0, on = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= mask.width || yy >= mask.height) continue;
                    ++n;
                    on += mask.at(xx, yy) ? 1 : 0;
                }
            out.data[static_cast<std::size_t>(y) * mask.width + x] = 2 * on > n ? 1 : 0;
        }
    }
    return out;
}

/// Tissue mask at 1/downsample resolution: block-average RGB, HSV saturation,
/// Otsu threshold on the saturation histogram, then one 3x3 majority pass.
inline BinaryMask foreground_mask(const RasterImage& image, int downsample)
{
    if (downsample < 1) throw Error(ErrorCode::ConfigError, "downsample must be >= 1");
    BinaryMask mask;
    mask.width = (image.width() + downsample - 1) / downsample;
    mask.height = (image.height() + downsample - 1) / downsample;
    mask.scale_x = downsample;
    mask.scale_y = downsample;
    mask.data.assign(static_cast<std::size_t>(mask.width) * mask.height, 0);

    std::vector<std::uint8_t> sat(mask.data.size());
    std::array<std::uint64_t, 256> hist{};
    const auto px = image.bytes();
    for (int my = 0; my < mask.height; ++my) {
        for (int mx = 0; mx < mask.width; ++mx) {
            double r = 0, g = 0, b = 0;
            int n = 0;
            const int y1 = std::min(image.height(), (my + 1) * downsample);
            const int x1 = std::min(image.width(), (mx + 1) * downsample);
            for (int y = my * downsample; y < y1; ++y)
                for (int x = mx * downsample; x < x1; ++x) {
                    const std::size_t i = (static_cast<std::size_t>(y) * image.width() + x) * 3;
                    r += px[i];
                    g += px[i + 1];
                    b += px[i + 2];
                    ++n;
                }
            const auto s = quantize(rgb_to_hsv_pixel(r / n, g / n, b / n).b);
            sat[static_cast<std::size_t>(my) * mask.width + mx] = s;
            ++hist[s];
        }
    }
    const int t = otsu_threshold(hist);
    for (std::size_t i = 0; i < sat.size(); ++i) mask.data[i] = sat[i] > t ? 1 : 0;
    return majority_smooth(mask);
}

inline BinaryMask foreground_mask(const SlideLevel& level, int downsample)
{
    return foreground_mask(level.image, downsample);
}

/// External mask: any non-zero channel marks foreground. The mask may have
/// any resolution; it is stretched over the level.
inline BinaryMask mask_from_image(const RasterImage& mask_image, int level_width, int level_height)
{
    BinaryMask mask;
    mask.width = mask_image.width();
    mask.height = mask_image.height();
    mask.scale_x = static_cast<double>(level_width) / mask.width;
    mask.scale_y = static_cast<double>(level_height) / mask.height;
    mask.data.resize(mask_image.pixel_count());
    const auto px = mask_image.bytes();
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        mask.data[i] = (px[3 * i] | px[3 * i + 1] | px[3 * i + 2]) != 0 ? 1 : 0;
    return mask;
}

// ---------------------------------------------------------------------------
// Patch quality measures.

/// Mean HSV saturation on the [0,255] scale.
inline double mean_saturation(const RasterImage& image)
{
    const auto px = image.bytes();
    double sum = 0.0;
    for (std::size_t i = 0; i < px.size(); i += 3) sum += rgb_to_hsv_pixel(px[i], px[i + 1], px[i + 2]).b;
    return sum / static_cast<double>(image.pixel_count());
}

/// Mean squared response of the 4-neighbour Laplacian on unquantized
/// luminance, over interior pixels only.
inline double mean_sq_laplacian(const RasterImage& image)
{
    const int w = image.width(), h = image.height();
    if (w < 3 || h < 3) throw Error(ErrorCode::TooSmall, "Laplacian needs an image of at least 3x3");
    std::vector<double> lum(image.pixel_count());
    const auto px = image.bytes();
    for (std::size_t i = 0; i < lum.size(); ++i) lum[i] = luminance(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    auto at = [&](int x, int y) { return lum[static_cast<std::size_t>(y) * w + x]; };
    double sum = 0.0;
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            const double r = at(x, y - 1) + at(x - 1, y) + at(x + 1, y) + at(x, y + 1) - 4.0 * at(x, y);
            sum += r * r;
        }
    return sum / (static_cast<double>(w - 2) * (h - 2));
}

// ---------------------------------------------------------------------------
// Selection.

enum class Verdict { Kept, FilteredWhite, FilteredSmooth, FilteredBackground };

constexpr std::string_view to_string(Verdict v) noexcept
{
    switch (v) {
    case Verdict::Kept: return "kept";
    case Verdict::FilteredWhite: return "filtered_white";
    case Verdict::FilteredSmooth: return "filtered_smooth";
    case Verdict::FilteredBackground: return "filtered_background";
    }
    return "?";
}

struct PatchRecord {
    std::string slide_id;
    Magnification magnification = Magnification::X20;
    int x = 0;
    int y = 0;
    int size = 0;
    double mean_saturation = 0.0;
    double mean_sq_laplacian = 0.0;
    Verdict verdict = Verdict::Kept;

    friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

struct SelectionParams {
    int patch_size = 0; ///< required, no default
    int cap = 500;
    double sat_threshold = 5.0;
    double lap_threshold = 15.0;
    bool apply_filters = true;
    bool audit = false; ///< also record non-candidate tiles as filtered_background
};

struct LevelSummary {
    std::string slide_id;
    Magnification magnification = Magnification::X20;
    std::size_t candidates = 0;
    std::size_t selected = 0;
    std::size_t stride = 1;
    std::size_t kept = 0;
    std::size_t filtered_white = 0;
    std::size_t filtered_smooth = 0;
};

struct PatchManifest {
    std::vector<PatchRecord> records;
    std::vector<LevelSummary> levels;
    SelectionParams params;
    std::uint64_t seed = 0;

    std::size_t count(Verdict v) const
    {
        return static_cast<std::size_t>(
            std::count_if(records.begin(), records.end(), [v](const PatchRecord& r) { return r.verdict == v; }));
    }
};

/// ceil(candidates / cap), or 1 when everything fits.
inline std::size_t selection_stride(std::size_t candidates, std::size_t cap)
{
    if (cap == 0 || candidates <= cap) return 1;
    return (candidates + cap - 1) / cap;
}

inline void validate(const SelectionParams& p)
{
    if (p.patch_size < 3) throw Error(ErrorCode::ConfigError, "patch size must be >= 3");
    if (p.cap < 0) throw Error(ErrorCode::ConfigError, "cap must be >= 0");
}

/// Non-overlapping patch_size tiles whose centre lies in the mask are
/// candidates; every stride-th candidate (row-major) is selected so at most
/// `cap` remain, then each selected tile is filtered.
inline PatchManifest select_patches(const SlideLevel& level, const BinaryMask& mask, const SelectionParams& params)
{
    validate(params);
    const int ps = params.patch_size;
    const RasterImage& img = level.image;

    auto measure = [&](int x, int y, Verdict v) {
        const RasterImage patch = crop(img, x, y, ps, ps);
        return PatchRecord{level.slide_id, level.magnification, x, y, ps,
                           mean_saturation(patch), mean_sq_laplacian(patch), v};
    };

    std::vector<std::pair<int, int>> candidates;
    std::vector<std::pair<int, int>> background;
    for (int y = 0; y + ps <= img.height(); y += ps)
        for (int x = 0; x + ps <= img.width(); x += ps) {
            if (mask.covers(x + ps / 2.0, y + ps / 2.0))
                candidates.emplace_back(x, y);
            else
                background.emplace_back(x, y);
        }

    PatchManifest out;
    out.params = params;
    LevelSummary summary{level.slide_id, level.magnification};
    summary.candidates = candidates.size();
    summary.stride = selection_stride(candidates.size(), static_cast<std::size_t>(params.cap));

    for (std::size_t i = 0; i < candidates.size() && params.cap > 0; i += summary.stride) {
        const auto [x, y] = candidates[i];
        PatchRecord r = measure(x, y, Verdict::Kept);
        if (params.apply_filters) {
            if (r.mean_saturation < params.sat_threshold)
                r.verdict = Verdict::FilteredWhite;
            else if (r.mean_sq_laplacian < params.lap_threshold)
                r.verdict = Verdict::FilteredSmooth;
        }
        ++summary.selected;
        switch (r.verdict) {
        case Verdict::Kept: ++summary.kept; break;
        case Verdict::FilteredWhite: ++summary.filtered_white; break;
        case Verdict::FilteredSmooth: ++summary.filtered_smooth; break;
        case Verdict::FilteredBackground: break;
        }
        out.records.push_back(std::move(r));
    }
    if (params.audit)
        for (const auto& [x, y] : background) out.records.push_back(measure(x, y, Verdict::FilteredBackground));

    out.levels.push_back(summary);
    return out;
}

// ---------------------------------------------------------------------------
// Corpus curation.

struct CurateOptions {
    SelectionParams selection;
    int mask_downsample = 16;
    std::filesystem::path mask_dir;   ///< optional; {mask_dir}/{slide}/{mag}.png replaces the computed mask
    std::filesystem::path output_dir; ///< optional; kept patches written as {out}/{slide}/{mag}/{x}_{y}.png
    std::uint64_t seed = 0;
    int jobs = 1;
};

inline std::filesystem::path patch_path(const std::filesystem::path& out, const PatchRecord& r)
{
    return out / r.slide_id / std::string(to_string(r.magnification)) /
           (std::to_string(r.x) + "_" + std::to_string(r.y) + ".png");
}

/// Curates every level, merging per-level results in (slide id, magnification)
/// order regardless of the job count.
inline PatchManifest curate_corpus(const std::vector<SlideLevel>& levels, const CurateOptions& options)
{
    validate(options.selection);
    std::vector<std::size_t> order(levels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(levels[a].slide_id, levels[a].magnification) <
               std::tie(levels[b].slide_id, levels[b].magnification);
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto& a = levels[order[i - 1]];
        const auto& b = levels[order[i]];
        if (a.slide_id == b.slide_id && a.magnification == b.magnification)
            throw Error(ErrorCode::DuplicateLevel,
                        "slide " + a.slide_id + " has more than one " + std::string(to_string(a.magnification)) + " level");
    }

    std::vector<PatchManifest> parts(order.size());
    parallel_for(order.size(), options.jobs, [&](std::size_t i) {
        const SlideLevel& level = levels[order[i]];
        BinaryMask mask;
        if (!options.mask_dir.empty()) {
            const auto path = options.mask_dir / level.slide_id / (std::string(to_string(level.magnification)) + ".png");
            mask = mask_from_image(load_png(path), level.image.width(), level.image.height());
        } else {
            mask = foreground_mask(level, options.mask_downsample);
        }
        parts[i] = select_patches(level, mask, options.selection);
        if (!options.output_dir.empty()) {
            for (const auto& r : parts[i].records) {
                if (r.verdict != Verdict::Kept) continue;
                const auto path = patch_path(options.output_dir, r);
                std::error_code ec;
                std::filesystem::create_directories(path.parent_path(), ec);
                if (ec) throw Error(ErrorCode::IoError, "cannot create " + path.parent_path().string());
                save_png(crop(level.image, r.x, r.y, r.size, r.size), path);
            }
        }
    });

    PatchManifest manifest;
    manifest.params = options.selection;
    manifest.seed = options.seed;
    for (auto& p : parts) {
        manifest.records.insert(manifest.records.end(), p.records.begin(), p.records.end());
        manifest.levels.insert(manifest.levels.end(), p.levels.begin(), p.levels.end());
    }
    return manifest;
}

inline nlohmann::json record_to_json(const PatchRecord& r)
{
    return nlohmann::json{{"slide_id", r.slide_id},
                          {"magnification", std::string(to_string(r.magnification))},
                          {"x", r.x},
                          {"y", r.y},
                          {"size", r.size},
                          {"mean_saturation", r.mean_saturation},
                          {"mean_sq_laplacian", r.mean_sq_laplacian},
                          {"verdict", std::string(to_string(r.verdict))}};
}

/// One JSON object per line, in manifest order.
inline std::string manifest_to_jsonl(const PatchManifest& manifest)
{
    std::string out;
    for (const auto& r : manifest.records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

inline nlohmann::json manifest_summary(const PatchManifest& manifest)
{
    std::set<std::string> slides;
    std::size_t candidates = 0, selected = 0, kept = 0, white = 0, smooth = 0;
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : manifest.levels) {
        slides.insert(l.slide_id);
        candidates += l.candidates;
        selected += l.selected;
        kept += l.kept;
        white += l.filtered_white;
        smooth += l.filtered_smooth;
        levels.push_back({{"slide_id", l.slide_id},
                          {"magnification", std::string(to_string(l.magnification))},
                          {"candidates", l.candidates},
                          {"stride", l.stride},
                          {"selected", l.selected},
                          {"kept", l.kept},
                          {"filtered_white", l.filtered_white},
                          {"filtered_smooth", l.filtered_smooth}});
    }
    const auto& p = manifest.params;
    return nlohmann::json{{"slides", slides.size()},
                          {"candidates", candidates},
                          {"selected", selected},
                          {"kept", kept},
                          {"filtered_white", white},
                          {"filtered_smooth", smooth},
                          {"seed", manifest.seed},
                          {"params",
                           {{"patch_size", p.patch_size},
                            {"cap", p.cap},
                            {"sat_threshold", p.sat_threshold},
                            {"lap_threshold", p.lap_threshold},
                            {"filters", p.apply_filters},
                            {"audit", p.audit}}},
                          {"levels", levels}};
}

} // namespace pathaug
