#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathaug/error.hpp"
#include "pathaug/raster.hpp"

namespace pathaug {

enum class ColorSpace { HSV, LAB, HED };

inline constexpr std::array<ColorSpace, 3> kAllSpaces{ColorSpace::HSV, ColorSpace::LAB, ColorSpace::HED};

constexpr std::string_view to_string(ColorSpace space) noexcept
{
    switch (space) {
    case ColorSpace::HSV: return "HSV";
    case ColorSpace::LAB: return "LAB";
    case ColorSpace::HED: return "HED";
    }
    return "?";
}

inline std::optional<ColorSpace> parse_color_space(std::string_view name) noexcept
{
    for (auto s : kAllSpaces)
        if (to_string(s) == name) return s;
    return std::nullopt;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

inline std::optional<Mat3> invert(const Mat3& m) noexcept
{
    const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if (!(std::abs(det) > 1e-12)) return std::nullopt;
    const double inv_det = 1.0 / det;
    Mat3 r;
    r[0][0] = c00 * inv_det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    r[1][0] = c01 * inv_det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    r[2][0] = c02 * inv_det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    return r;
}

/// Stain basis in RGB optical-density space, one unit row per stain
/// (hematoxylin, eosin, DAB/residual), with its precomputed inverse.
class StainMatrix {
public:
    /// Rows are normalized to unit length. Rows already of unit length
    /// (within 1e-12) are kept bit-for-bit so serialized matrices round-trip.
    explicit StainMatrix(const Mat3& rows)
    {
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& r = rows[i];
            const double norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
            if (!(norm > 0.0) || !std::isfinite(norm))
                throw Error(ErrorCode::ConfigError, "stain matrix row " + std::to_string(i) + " has zero norm");
            if (std::abs(norm - 1.0) <= 1e-12)
                rows_[i] = r;
            else
                rows_[i] = {r[0] / norm, r[1] / norm, r[2] / norm};
        }
        auto inv = invert(rows_);
        if (!inv) throw Error(ErrorCode::ConfigError, "stain matrix is singular");
        inverse_ = *inv;
    }

    static StainMatrix from_values(std::span<const double> nine)
    {
        if (nine.size() != 9) throw Error(ErrorCode::ConfigError, "stain matrix needs 9 values");
        Mat3 m;
        for (std::size_t i = 0; i < 9; ++i) m[i / 3][i % 3] = nine[i];
        return StainMatrix(m);
    }

    /// Ruifrok & Johnston H/E/DAB vectors.
    static const StainMatrix& standard()
    {
        static const StainMatrix m(Mat3{{{0.65, 0.70, 0.29}, {0.07, 0.99, 0.11}, {0.27, 0.57, 0.78}}});
        return m;
    }

    const Mat3& rows() const noexcept { return rows_; }
    const Mat3& inverse() const noexcept { return inverse_; }

    std::array<double, 9> values() const noexcept
    {
        std::array<double, 9> v;
        for (std::size_t i = 0; i < 9; ++i) v[i] = rows_[i / 3][i % 3];
        return v;
    }

    friend bool operator==(const StainMatrix& a, const StainMatrix& b) noexcept { return a.rows_ == b.rows_; }

private:
    Mat3 rows_{};
    Mat3 inverse_{};
};

/// Channel-planar float representation of an image in one color space.
/// HSV and LAB channels are scaled to [0,255]; HED is raw optical density.
struct FloatPlanes {
    int width = 0;
    int height = 0;
    ColorSpace space = ColorSpace::HSV;
    std::array<std::vector<double>, 3> planes;

    FloatPlanes() = default;
    FloatPlanes(int w, int h, ColorSpace s) : width(w), height(h), space(s)
    {
        for (auto& p : planes) p.assign(static_cast<std::size_t>(w) * h, 0.0);
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(width) * height; }
};

// ---------------------------------------------------------------------------
// Scalar conversions on doubles in [0,255].

struct Triple {
    double a, b, c;
};

/// Hexcone HSV, all channels in [0,255]; H is in 255ths of a turn.
inline Triple rgb_to_hsv_pixel(double r, double g, double b) noexcept
{
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    double h = 0.0;
    if (delta > 0.0) {
        double sector;
        if (mx == r)
            sector = (g - b) / delta;
        else if (mx == g)
            sector = (b - r) / delta + 2.0;
        else
            sector = (r - g) / delta + 4.0;
        if (sector < 0.0) sector += 6.0;
        h = sector * (255.0 / 6.0);
    }
    const double s = mx > 0.0 ? delta / mx * 255.0 : 0.0;
    return {h, s, mx};
}

/// Inverse of rgb_to_hsv_pixel. H wraps modulo 255; S and V are clamped.
inline Triple hsv_to_rgb_pixel(double h, double s, double v) noexcept
{
    h = h - 255.0 * std::floor(h / 255.0);
    if (!std::isfinite(h)) h = 0.0;
    s = std::clamp(s, 0.0, 255.0) / 255.0;
    v = std::clamp(v, 0.0, 255.0);
    const double sector = h * (6.0 / 255.0);
    const double f = sector - std::floor(sector);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (static_cast<int>(sector) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
    }
}

namespace detail {

inline constexpr Mat3 kSrgbToXyz{{{0.4124564, 0.3575761, 0.1804375},
                                  {0.2126729, 0.7151522, 0.0721750},
                                  {0.0193339, 0.1191920, 0.9503041}}};

inline const Mat3& xyz_to_srgb()
{
    static const Mat3 m = *invert(kSrgbToXyz);
    return m;
}

// D65 white, taken as the image of linear RGB (1,1,1) so white maps to L*=100, a*=b*=0.
inline const std::array<double, 3>& d65_white()
{
    static const std::array<double, 3> w{kSrgbToXyz[0][0] + kSrgbToXyz[0][1] + kSrgbToXyz[0][2],
                                         kSrgbToXyz[1][0] + kSrgbToXyz[1][1] + kSrgbToXyz[1][2],
                                         kSrgbToXyz[2][0] + kSrgbToXyz[2][1] + kSrgbToXyz[2][2]};
    return w;
}

inline double srgb_to_linear(double c01) noexcept
{
    return c01 <= 0.04045 ? c01 / 12.92 : std::pow((c01 + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double c01) noexcept
{
    return c01 <= 0.0031308 ? c01 * 12.92 : 1.055 * std::pow(c01, 1.0 / 2.4) - 0.055;
}

inline const std::array<double, 256>& srgb_linear_lut()
{
    static const auto lut = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = srgb_to_linear(i / 255.0);
        return t;
    }();
    return lut;
}

inline constexpr double kLabDelta = 6.0 / 29.0;

inline double lab_f(double t) noexcept
{
    return t > kLabDelta * kLabDelta * kLabDelta ? std::cbrt(t) : t / (3.0 * kLabDelta * kLabDelta) + 4.0 / 29.0;
}

inline double lab_f_inv(double t) noexcept
{
    return t > kLabDelta ? t * t * t : 3.0 * kLabDelta * kLabDelta * (t - 4.0 / 29.0);
}

// OD for an 8-bit intensity: -log10((I+1)/256).
inline const std::array<double, 256>& optical_density_lut()
{
    static const auto lut = [] {
        std::array<double, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = -std::log10((i + 1.0) / 256.0);
        return t;
    }();
    return lut;
}

} // namespace detail

/// CIELAB (D65, 2 degree) scaled to [0,255]: L*[0,100] -> [0,255], a*,b* offset by 128.
inline Triple rgb_to_lab_pixel(double r, double g, double b) noexcept
{
    const double lr = detail::srgb_to_linear(r / 255.0);
    const double lg = detail::srgb_to_linear(g / 255.0);
    const double lb = detail::srgb_to_linear(b / 255.0);
    const auto& m = detail::kSrgbToXyz;
    const auto& w = detail::d65_white();
    const double fx = detail::lab_f((m[0][0] * lr + m[0][1] * lg + m[0][2] * lb) / w[0]);
    const double fy = detail::lab_f((m[1][0] * lr + m[1][1] * lg + m[1][2] * lb) / w[1]);
    const double fz = detail::lab_f((m[2][0] * lr + m[2][1] * lg + m[2][2] * lb) / w[2]);
    return {(116.0 * fy - 16.0) * 2.55, 500.0 * (fx - fy) + 128.0, 200.0 * (fy - fz) + 128.0};
}

inline Triple lab_to_rgb_pixel(double ls, double as, double bs) noexcept
{
    const double fy = (ls / 2.55 + 16.0) / 116.0;
    const double fx = fy + (as - 128.0) / 500.0;
    const double fz = fy - (bs - 128.0) / 200.0;
    const auto& w = detail::d65_white();
    const double x = w[0] * detail::lab_f_inv(fx);
    const double y = w[1] * detail::lab_f_inv(fy);
    const double z = w[2] * detail::lab_f_inv(fz);
    const auto& m = detail::xyz_to_srgb();
    auto channel = [&](int i) {
        const double lin = std::clamp(m[i][0] * x + m[i][1] * y + m[i][2] * z, 0.0, 1.0);
        return detail::linear_to_srgb(lin) * 255.0;
    };
    return {channel(0), channel(1), channel(2)};
}

// ---------------------------------------------------------------------------
// Image-level conversions.

inline FloatPlanes rgb_to_hsv(const RasterImage& image)
{
    FloatPlanes out(image.width(), image.height(), ColorSpace::HSV);
    const auto px = image.bytes();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto t = rgb_to_hsv_pixel(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
        out.planes[0][i] = t.a;
        out.planes[1][i] = t.b;
        out.planes[2][i] = t.c;
    }
    return out;
}

namespace detail {

template <typename F>
RasterImage planes_to_image(const FloatPlanes& planes, F&& pixel_fn)
{
    std::vector<std::uint8_t> px(planes.size() * 3);
    for (std::size_t i = 0; i < planes.size(); ++i) {
        const Triple t = pixel_fn(planes.planes[0][i], planes.planes[1][i], planes.planes[2][i]);
        px[3 * i] = quantize(t.a);
        px[3 * i + 1] = quantize(t.b);
        px[3 * i + 2] = quantize(t.c);
    }
    return RasterImage(planes.width, planes.height, std::move(px));
}

inline void require_space(const FloatPlanes& planes, ColorSpace expected)
{
    if (planes.space != expected)
        throw Error(ErrorCode::WrongSpace, "expected " + std::string(to_string(expected)) + " planes, got " +
                                               std::string(to_string(planes.space)));
}

} // namespace detail

inline RasterImage hsv_to_rgb(const FloatPlanes& planes)
{
    detail::require_space(planes, ColorSpace::HSV);
    return detail::planes_to_image(planes, hsv_to_rgb_pixel);
}

inline FloatPlanes rgb_to_lab(const RasterImage& image)
{
    FloatPlanes out(image.width(), image.height(), ColorSpace::LAB);
    const auto& lin = detail::srgb_linear_lut();
    const auto& m = detail::kSrgbToXyz;
    const auto& w = detail::d65_white();
    const auto px = image.bytes();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double lr = lin[px[3 * i]], lg = lin[px[3 * i + 1]], lb = lin[px[3 * i + 2]];
        const double fx = detail::lab_f((m[0][0] * lr + m[0][1] * lg + m[0][2] * lb) / w[0]);
        const double fy = detail::lab_f((m[1][0] * lr + m[1][1] * lg + m[1][2] * lb) / w[1]);
        const double fz = detail::lab_f((m[2][0] * lr + m[2][1] * lg + m[2][2] * lb) / w[2]);
        out.planes[0][i] = (116.0 * fy - 16.0) * 2.55;
        out.planes[1][i] = 500.0 * (fx - fy) + 128.0;
        out.planes[2][i] = 200.0 * (fy - fz) + 128.0;
    }
    return out;
}

inline RasterImage lab_to_rgb(const FloatPlanes& planes)
{
    detail::require_space(planes, ColorSpace::LAB);
    return detail::planes_to_image(planes, lab_to_rgb_pixel);
}

/// OD_c = -log10((I_c+1)/256); HED = OD * inverse(M).
inline FloatPlanes rgb_to_hed(const RasterImage& image, const StainMatrix& matrix = StainMatrix::standard())
{
    FloatPlanes out(image.width(), image.height(), ColorSpace::HED);
    const auto& od = detail::optical_density_lut();
    const auto& inv = matrix.inverse();
    const auto px = image.bytes();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double o0 = od[px[3 * i]], o1 = od[px[3 * i + 1]], o2 = od[px[3 * i + 2]];
        for (std::size_t j = 0; j < 3; ++j) out.planes[j][i] = o0 * inv[0][j] + o1 * inv[1][j] + o2 * inv[2][j];
    }
    return out;
}

inline Triple hed_to_rgb_pixel(double h, double e, double d, const StainMatrix& matrix) noexcept
{
    const auto& m = matrix.rows();
    auto channel = [&](std::size_t c) {
        const double od = h * m[0][c] + e * m[1][c] + d * m[2][c];
        return 256.0 * std::pow(10.0, -od) - 1.0;
    };
    return {channel(0), channel(1), channel(2)};
}

inline RasterImage hed_to_rgb(const FloatPlanes& planes, const StainMatrix& matrix = StainMatrix::standard())
{
    detail::require_space(planes, ColorSpace::HED);
    return detail::planes_to_image(
        planes, [&](double h, double e, double d) { return hed_to_rgb_pixel(h, e, d, matrix); });
}

inline FloatPlanes to_planes(const RasterImage& image, ColorSpace space,
                             const StainMatrix& matrix = StainMatrix::standard())
{
    switch (space) {
    case ColorSpace::HSV: return rgb_to_hsv(image);
    case ColorSpace::LAB: return rgb_to_lab(image);
    case ColorSpace::HED: return rgb_to_hed(image, matrix);
    }
    throw Error(ErrorCode::WrongSpace, "unknown color space");
}

inline RasterImage from_planes(const FloatPlanes& planes, const StainMatrix& matrix = StainMatrix::standard())
{
    switch (planes.space) {
    case ColorSpace::HSV: return hsv_to_rgb(planes);
    case ColorSpace::LAB: return lab_to_rgb(planes);
    case ColorSpace::HED: return hed_to_rgb(planes, matrix);
    }
    throw Error(ErrorCode::WrongSpace, "unknown color space");
}

} // namespace pathaug
