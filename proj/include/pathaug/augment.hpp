#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pathaug/colorspace.hpp"
#include "pathaug/error.hpp"
#include "pathaug/model_io.hpp"
#include "pathaug/raster.hpp"
#include "pathaug/rng.hpp"
#include "pathaug/stainstats.hpp"

namespace pathaug {

// ---------------------------------------------------------------------------
// Geometric and point operators.

inline RasterImage vertical_flip(const RasterImage& image)
{
    RasterImage out(image.width(), image.height());
    const std::size_t row = static_cast<std::size_t>(image.width()) * 3;
    const auto src = image.bytes();
    auto dst = out.bytes();
    for (int y = 0; y < image.height(); ++y)
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(y * row), row,
                    dst.begin() + static_cast<std::ptrdiff_t>((image.height() - 1 - y) * row));
    return out;
}

inline RasterImage horizontal_flip(const RasterImage& image)
{
    RasterImage out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) out.set(image.width() - 1 - x, y, image.at(x, y));
    return out;
}

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline double luminance(double r, double g, double b) noexcept { return kLumaR * r + kLumaG * g + kLumaB * b; }

inline RasterImage grayscale(const RasterImage& image)
{
    RasterImage out(image.width(), image.height());
    const auto src = image.bytes();
    auto dst = out.bytes();
    for (std::size_t i = 0; i < src.size(); i += 3) {
        const auto y = quantize(luminance(src[i], src[i + 1], src[i + 2]));
        dst[i] = dst[i + 1] = dst[i + 2] = y;
    }
    return out;
}

/// Channels >= threshold become 255 - value.
inline RasterImage solarize(const RasterImage& image, int threshold)
{
    if (threshold < 0 || threshold > 255)
        throw Error(ErrorCode::ConfigError, "solarize threshold must be in [0,255], got " + std::to_string(threshold));
    RasterImage out = image;
    for (auto& v : out.bytes())
        if (v >= threshold) v = static_cast<std::uint8_t>(255 - v);
    return out;
}

// ---------------------------------------------------------------------------
// Color jitter.

struct JitterStrengths {
    double brightness = 0.0;
    double contrast = 0.0;
    double saturation = 0.0;
    double hue = 0.0; ///< in turns of the hue circle, <= 0.5

    friend bool operator==(const JitterStrengths&, const JitterStrengths&) = default;
};

inline constexpr JitterStrengths kWeakJitter{0.2, 0.2, 0.2, 0.1};
inline constexpr JitterStrengths kStrongJitter{0.8, 0.8, 0.8, 0.2};

inline void validate(const JitterStrengths& s)
{
    if (!(s.brightness >= 0 && s.contrast >= 0 && s.saturation >= 0 && s.hue >= 0))
        throw Error(ErrorCode::ConfigError, "jitter strengths must be >= 0");
    if (s.hue > 0.5) throw Error(ErrorCode::ConfigError, "hue jitter strength must be <= 0.5");
}

enum class JitterOp : int { Brightness = 0, Contrast = 1, Saturation = 2, Hue = 3 };

/// Concrete factors for one jitter call. Brightness, contrast and saturation
/// are multiplicative blend factors; hue is a shift in turns.
struct JitterParams {
    std::array<JitterOp, 4> order{JitterOp::Brightness, JitterOp::Contrast, JitterOp::Saturation, JitterOp::Hue};
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue = 0.0;
};

/// Draw order: Fisher-Yates permutation of the four sub-ops (3 draws), then
/// one uniform per non-zero strength in the order b, c, s, h.
inline JitterParams draw_jitter(const JitterStrengths& s, Rng& rng)
{
    JitterParams p;
    for (std::size_t i = 3; i > 0; --i) std::swap(p.order[i], p.order[rng.below(i + 1)]);
    if (s.brightness > 0) p.brightness = rng.uniform(1.0 - s.brightness, 1.0 + s.brightness);
    if (s.contrast > 0) p.contrast = rng.uniform(1.0 - s.contrast, 1.0 + s.contrast);
    if (s.saturation > 0) p.saturation = rng.uniform(1.0 - s.saturation, 1.0 + s.saturation);
    if (s.hue > 0) p.hue = rng.uniform(-s.hue, s.hue);
    return p;
}

/// Applies the sub-ops in p.order in floating point, clamping to [0,255]
/// after each, and quantizes once at the end.
inline RasterImage apply_jitter(const RasterImage& image, const JitterParams& p)
{
    const auto src = image.bytes();
    std::vector<double> px(src.begin(), src.end());
    const std::size_t n = px.size();
    auto clamp_all = [&] {
        for (auto& v : px) v = std::clamp(v, 0.0, 255.0);
    };

    for (JitterOp op : p.order) {
        switch (op) {
        case JitterOp::Brightness:
            if (p.brightness == 1.0) break;
            for (auto& v : px) v *= p.brightness;
            clamp_all();
            break;
        case JitterOp::Contrast: {
            if (p.contrast == 1.0) break;
            double sum = 0.0;
            for (std::size_t i = 0; i < n; i += 3) sum += luminance(px[i], px[i + 1], px[i + 2]);
            const double mean = sum / static_cast<double>(n / 3);
            for (auto& v : px) v = p.contrast * v + (1.0 - p.contrast) * mean;
            clamp_all();
            break;
        }
        case JitterOp::Saturation:
            if (p.saturation == 1.0) break;
            for (std::size_t i = 0; i < n; i += 3) {
                const double y = luminance(px[i], px[i + 1], px[i + 2]);
                for (std::size_t c = 0; c < 3; ++c) px[i + c] = p.saturation * px[i + c] + (1.0 - p.saturation) * y;
            }
            clamp_all();
            break;
        case JitterOp::Hue:
            if (p.hue == 0.0) break;
            for (std::size_t i = 0; i < n; i += 3) {
                const auto hsv = rgb_to_hsv_pixel(px[i], px[i + 1], px[i + 2]);
                const auto rgb = hsv_to_rgb_pixel(hsv.a + p.hue * 255.0, hsv.b, hsv.c);
                px[i] = rgb.a;
                px[i + 1] = rgb.b;
                px[i + 2] = rgb.c;
            }
            break;
        }
    }

    std::vector<std::uint8_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = quantize(px[i]);
    return RasterImage(image.width(), image.height(), std::move(out));
}

inline RasterImage color_jitter(const RasterImage& image, const JitterStrengths& strengths, Rng& rng)
{
    validate(strengths);
    return apply_jitter(image, draw_jitter(strengths, rng));
}

// ---------------------------------------------------------------------------
// HED-light: per-stain scale and shift in deconvolved space.

struct HedPerturbation {
    std::array<double, 3> alpha{1.0, 1.0, 1.0};
    std::array<double, 3> beta{0.0, 0.0, 0.0};
};

inline RasterImage apply_hed_perturbation(const RasterImage& image, const HedPerturbation& p,
                                          const StainMatrix& matrix = StainMatrix::standard())
{
    FloatPlanes hed = rgb_to_hed(image, matrix);
    for (std::size_t c = 0; c < 3; ++c)
        for (auto& v : hed.planes[c]) v = p.alpha[c] * v + p.beta[c];
    return hed_to_rgb(hed, matrix);
}

/// Draw order: for each stain channel, alpha ~ U[1-sa, 1+sa] then beta ~ U[-sb, sb].
inline RasterImage hed_light(const RasterImage& image, double sigma_alpha, double sigma_beta,
                             const StainMatrix& matrix, Rng& rng)
{
    if (!(sigma_alpha >= 0 && sigma_beta >= 0)) throw Error(ErrorCode::ConfigError, "HED-light sigmas must be >= 0");
    HedPerturbation p;
    for (std::size_t c = 0; c < 3; ++c) {
        p.alpha[c] = rng.uniform(1.0 - sigma_alpha, 1.0 + sigma_alpha);
        p.beta[c] = rng.uniform(-sigma_beta, sigma_beta);
    }
    return apply_hed_perturbation(image, p, matrix);
}

// ---------------------------------------------------------------------------
// Reinhard re-normalization and RandStainNA.

inline constexpr double kReinhardEpsilon = 1e-6;

/// Maps each channel of `image` (in `space`) to the target mean and std, then
/// converts back to RGB with clamping.
inline RasterImage reinhard(const RasterImage& image, ColorSpace space, const ChannelStats& target,
                            const StainMatrix& matrix = StainMatrix::standard())
{
    FloatPlanes planes = to_planes(image, space, matrix);
    const ChannelStats src = plane_stats(planes);
    for (std::size_t c = 0; c < 3; ++c) {
        const double scale = target.sigma[c] / std::max(src.sigma[c], kReinhardEpsilon);
        for (auto& v : planes.planes[c]) v = (v - src.mu[c]) * scale + target.mu[c];
    }
    return from_planes(planes, matrix);
}

enum class StainVariant { Unimodal, Gmm };

constexpr std::string_view to_string(StainVariant v) noexcept { return v == StainVariant::Gmm ? "gmm" : "unimodal"; }

struct RandStainResult {
    RasterImage image;
    ColorSpace space;
    ChannelStats target;
};

/// Draw order: one below(3) for the space (HSV, LAB, HED), then the target
/// statistics draws of sample_target_stats.
inline RandStainResult randstainna_detailed(const RasterImage& image, const StainModelFile& model,
                                            StainVariant variant, Rng& rng)
{
    const ColorSpace space = kAllSpaces[rng.below(3)];
    const auto& m = model.at(space);
    ChannelStats target;
    if (variant == StainVariant::Gmm) {
        if (m.gmm.k() < 1)
            throw Error(ErrorCode::ModelMissingSpace,
                        "model has no mixture for " + std::string(to_string(space)));
        target = sample_target_stats(m.gmm, rng);
    } else {
        target = sample_target_stats(m.unimodal, rng);
    }
    target.space = space;
    return {reinhard(image, space, target, model.stain_matrix), space, target};
}

inline RasterImage randstainna(const RasterImage& image, const StainModelFile& model, StainVariant variant, Rng& rng)
{
    return randstainna_detailed(image, model, variant, rng).image;
}

// ---------------------------------------------------------------------------
// Pipeline.

struct VerticalFlip {
    friend bool operator==(const VerticalFlip&, const VerticalFlip&) = default;
};
struct HorizontalFlip {
    friend bool operator==(const HorizontalFlip&, const HorizontalFlip&) = default;
};
struct Grayscale {
    friend bool operator==(const Grayscale&, const Grayscale&) = default;
};
struct ColorJitter {
    JitterStrengths strengths = kWeakJitter;
    friend bool operator==(const ColorJitter&, const ColorJitter&) = default;
};
struct Solarize {
    int threshold = 128;
    friend bool operator==(const Solarize&, const Solarize&) = default;
};
struct HedLight {
    double sigma_alpha = 0.05;
    double sigma_beta = 0.05;
    friend bool operator==(const HedLight&, const HedLight&) = default;
};
struct RandStainNA {
    StainVariant variant = StainVariant::Gmm;
    std::shared_ptr<const StainModelFile> model; // attached after loading; not part of equality
    friend bool operator==(const RandStainNA& a, const RandStainNA& b) { return a.variant == b.variant; }
};

using StepKind = std::variant<VerticalFlip, HorizontalFlip, Grayscale, ColorJitter, Solarize, HedLight, RandStainNA>;

struct AugmentStep {
    StepKind kind;
    double p = 1.0;

    friend bool operator==(const AugmentStep&, const AugmentStep&) = default;
};

struct AugmentPipeline {
    std::vector<AugmentStep> steps;
    std::string model_path; ///< where RandStainNA steps load their statistics from
    StainMatrix stain_matrix = StainMatrix::standard(); ///< used by HED-light

    bool needs_model() const
    {
        return std::any_of(steps.begin(), steps.end(),
                           [](const AugmentStep& s) { return std::holds_alternative<RandStainNA>(s.kind); });
    }

    /// Points every RandStainNA step at `model` and adopts its stain matrix.
    void attach_model(std::shared_ptr<const StainModelFile> model)
    {
        for (auto& s : steps)
            if (auto* r = std::get_if<RandStainNA>(&s.kind)) r->model = model;
        if (model) stain_matrix = model->stain_matrix;
    }
};

inline void validate(const AugmentPipeline& pipeline)
{
    for (std::size_t i = 0; i < pipeline.steps.size(); ++i) {
        const auto& step = pipeline.steps[i];
        const std::string where = "step " + std::to_string(i) + ": ";
        if (!(step.p >= 0.0 && step.p <= 1.0))
            throw Error(ErrorCode::ConfigError, where + "probability must be in [0,1]");
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, ColorJitter>) {
                    validate(k.strengths);
                } else if constexpr (std::is_same_v<T, Solarize>) {
                    if (k.threshold < 0 || k.threshold > 255)
                        throw Error(ErrorCode::ConfigError, where + "solarize threshold must be in [0,255]");
                } else if constexpr (std::is_same_v<T, HedLight>) {
                    if (!(k.sigma_alpha >= 0 && k.sigma_beta >= 0))
                        throw Error(ErrorCode::ConfigError, where + "HED-light sigmas must be >= 0");
                } else if constexpr (std::is_same_v<T, RandStainNA>) {
                    if (!k.model)
                        throw Error(ErrorCode::ConfigError,
                                    where + "RandStainNA requires a stain statistics model (model_path)");
                }
            },
            step.kind);
    }
}

/// Runs steps in order. Each step consumes one uniform gate draw; only if the
/// gate is below p does the step draw its own parameters and run.
inline RasterImage apply_pipeline(const AugmentPipeline& pipeline, const RasterImage& image, Rng& rng)
{
    RasterImage current = image;
    for (const auto& step : pipeline.steps) {
        if (!(rng.uniform() < step.p)) continue;
        current = std::visit(
            [&](const auto& k) -> RasterImage {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, VerticalFlip>)
                    return vertical_flip(current);
                else if constexpr (std::is_same_v<T, HorizontalFlip>)
                    return horizontal_flip(current);
                else if constexpr (std::is_same_v<T, Grayscale>)
                    return grayscale(current);
                else if constexpr (std::is_same_v<T, ColorJitter>)
                    return color_jitter(current, k.strengths, rng);
                else if constexpr (std::is_same_v<T, Solarize>)
                    return solarize(current, k.threshold);
                else if constexpr (std::is_same_v<T, HedLight>)
                    return hed_light(current, k.sigma_alpha, k.sigma_beta, pipeline.stain_matrix, rng);
                else {
                    if (!k.model)
                        throw Error(ErrorCode::ModelMissingSpace, "RandStainNA step has no statistics model attached");
                    return randstainna(current, *k.model, k.variant, rng);
                }
            },
            step.kind);
    }
    return current;
}

// ---------------------------------------------------------------------------
// Presets and JSON configuration.

inline AugmentPipeline paper_default_pipeline(StainVariant variant = StainVariant::Gmm)
{
    AugmentPipeline p;
    p.steps = {
        {VerticalFlip{}, 0.5},
        {Grayscale{}, 0.2},
        {ColorJitter{kWeakJitter}, 0.8},
        {RandStainNA{variant, nullptr}, 0.8},
    };
    return p;
}

inline std::optional<AugmentPipeline> make_preset(std::string_view name)
{
    if (name == "paper-default") return paper_default_pipeline(StainVariant::Gmm);
    if (name == "paper-default-unimodal") return paper_default_pipeline(StainVariant::Unimodal);
    return std::nullopt;
}

namespace detail {

inline double json_number_or(const nlohmann::json& obj, const char* key, double fallback, const std::string& where)
{
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number()) throw Error(ErrorCode::ConfigError, where + "\"" + key + "\" must be a number");
    return obj.at(key).get<double>();
}

/// Probability a grayscale step gets when its config omits "p".
inline constexpr double kDefaultGrayscaleP = 0.2;

inline AugmentStep step_from_json(const nlohmann::json& j, std::size_t index)
{
    const std::string where = "pipeline step " + std::to_string(index) + ": ";
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw Error(ErrorCode::ConfigError, where + "expected an object with a string \"kind\"");
    const auto kind = j.at("kind").get<std::string>();
    AugmentStep step;
    step.p = json_number_or(j, "p", kind == "grayscale" ? kDefaultGrayscaleP : 1.0, where);
    if (kind == "vertical_flip") {
        step.kind = VerticalFlip{};
    } else if (kind == "horizontal_flip") {
        step.kind = HorizontalFlip{};
    } else if (kind == "grayscale") {
        step.kind = Grayscale{};
    } else if (kind == "color_jitter") {
        JitterStrengths s;
        if (j.contains("preset")) {
            const auto name = j.at("preset").get<std::string>();
            if (name == "weak")
                s = kWeakJitter;
            else if (name == "strong")
                s = kStrongJitter;
            else
                throw Error(ErrorCode::ConfigError, where + "unknown jitter preset \"" + name + "\"");
        }
        s.brightness = json_number_or(j, "brightness", s.brightness, where);
        s.contrast = json_number_or(j, "contrast", s.contrast, where);
        s.saturation = json_number_or(j, "saturation", s.saturation, where);
        s.hue = json_number_or(j, "hue", s.hue, where);
        step.kind = ColorJitter{s};
    } else if (kind == "solarize") {
        step.kind = Solarize{static_cast<int>(json_number_or(j, "threshold", 128, where))};
    } else if (kind == "hed_light") {
        step.kind = HedLight{json_number_or(j, "sigma_alpha", 0.05, where), json_number_or(j, "sigma_beta", 0.05, where)};
    } else if (kind == "randstainna") {
        RandStainNA r;
        const std::string v = j.value("variant", std::string("gmm"));
        if (v == "gmm")
            r.variant = StainVariant::Gmm;
        else if (v == "unimodal")
            r.variant = StainVariant::Unimodal;
        else
            throw Error(ErrorCode::ConfigError, where + "unknown RandStainNA variant \"" + v + "\"");
        step.kind = r;
    } else {
        throw Error(ErrorCode::ConfigError, where + "unknown kind \"" + kind + "\"");
    }
    return step;
}

} // namespace detail

/// Accepts either a bare array of steps or an object with "steps" (or
/// "preset") and an optional "model_path".
inline AugmentPipeline pipeline_from_json(const nlohmann::json& j)
{
    AugmentPipeline p;
    const nlohmann::json* steps = nullptr;
    if (j.is_array()) {
        steps = &j;
    } else if (j.is_object()) {
        if (j.contains("preset")) {
            const auto name = j.at("preset").get<std::string>();
            auto preset = make_preset(name);
            if (!preset) throw Error(ErrorCode::ConfigError, "unknown pipeline preset \"" + name + "\"");
            p = *preset;
        }
        if (j.contains("steps")) steps = &j.at("steps");
        if (j.contains("model_path")) p.model_path = j.at("model_path").get<std::string>();
    } else {
        throw Error(ErrorCode::ConfigError, "pipeline config must be an array or an object");
    }
    if (steps) {
        if (!steps->is_array()) throw Error(ErrorCode::ConfigError, "\"steps\" must be an array");
        p.steps.clear();
        for (std::size_t i = 0; i < steps->size(); ++i) p.steps.push_back(detail::step_from_json((*steps)[i], i));
    }
    return p;
}

inline nlohmann::json pipeline_to_json(const AugmentPipeline& pipeline)
{
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& step : pipeline.steps) {
        nlohmann::json s;
        std::visit(
            [&](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, VerticalFlip>) {
                    s["kind"] = "vertical_flip";
                } else if constexpr (std::is_same_v<T, HorizontalFlip>) {
                    s["kind"] = "horizontal_flip";
                } else if constexpr (std::is_same_v<T, Grayscale>) {
                    s["kind"] = "grayscale";
                } else if constexpr (std::is_same_v<T, ColorJitter>) {
                    s["kind"] = "color_jitter";
                    s["brightness"] = k.strengths.brightness;
                    s["contrast"] = k.strengths.contrast;
                    s["saturation"] = k.strengths.saturation;
                    s["hue"] = k.strengths.hue;
                } else if constexpr (std::is_same_v<T, Solarize>) {
                    s["kind"] = "solarize";
                    s["threshold"] = k.threshold;
                } else if constexpr (std::is_same_v<T, HedLight>) {
                    s["kind"] = "hed_light";
                    s["sigma_alpha"] = k.sigma_alpha;
                    s["sigma_beta"] = k.sigma_beta;
                } else {
                    s["kind"] = "randstainna";
                    s["variant"] = std::string(to_string(k.variant));
                }
            },
            step.kind);
        s["p"] = step.p;
        steps.push_back(s);
    }
    nlohmann::json out{{"steps", steps}};
    if (!pipeline.model_path.empty()) out["model_path"] = pipeline.model_path;
    return out;
}

} // namespace pathaug
