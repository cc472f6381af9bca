#include <cmath>
#include <cstdlib>

#include <gtest/gtest.h>

#include "pathaug/colorspace.hpp"
#include "synthetic.hpp"

using namespace pathaug;

namespace {

RasterImage one_pixel(int r, int g, int b)
{
    return RasterImage(1, 1, Rgb{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)});
}

// Every RGB value on an 18-level lattice (0, 15, ..., 255) as one 324x18 image.
RasterImage rgb_grid()
{
    RasterImage img(18 * 18, 18);
    for (int r = 0; r < 18; ++r)
        for (int g = 0; g < 18; ++g)
            for (int b = 0; b < 18; ++b)
                img.set(r * 18 + g, b,
                        {static_cast<std::uint8_t>(r * 15), static_cast<std::uint8_t>(g * 15),
                         static_cast<std::uint8_t>(b * 15)});
    return img;
}

int max_channel_error(const RasterImage& a, const RasterImage& b)
{
    int worst = 0;
    for (std::size_t i = 0; i < a.bytes().size(); ++i) worst = std::max(worst, std::abs(a.bytes()[i] - b.bytes()[i]));
    return worst;
}

} // namespace

TEST(Hsv, ReferencePixels)
{
    auto p = rgb_to_hsv(one_pixel(255, 255, 255));
    EXPECT_DOUBLE_EQ(p.planes[0][0], 0.0);
    EXPECT_DOUBLE_EQ(p.planes[1][0], 0.0);
    EXPECT_DOUBLE_EQ(p.planes[2][0], 255.0);

    p = rgb_to_hsv(one_pixel(255, 0, 0));
    EXPECT_DOUBLE_EQ(p.planes[0][0], 0.0);
    EXPECT_DOUBLE_EQ(p.planes[1][0], 255.0);
    EXPECT_DOUBLE_EQ(p.planes[2][0], 255.0);

    // Python colorsys.rgb_to_hsv(128/255, 128/255, 0) = (1/6, 1, 128/255).
    p = rgb_to_hsv(one_pixel(128, 128, 0));
    EXPECT_NEAR(p.planes[0][0], 255.0 / 6.0, 1e-9);
    EXPECT_NEAR(p.planes[1][0], 255.0, 1e-9);
    EXPECT_NEAR(p.planes[2][0], 128.0, 1e-9);

    // colorsys: (200,100,50) -> (1/18, 0.75, 200/255).
    p = rgb_to_hsv(one_pixel(200, 100, 50));
    EXPECT_NEAR(p.planes[0][0], 255.0 / 18.0, 1e-9);
    EXPECT_NEAR(p.planes[1][0], 0.75 * 255.0, 1e-9);
    EXPECT_NEAR(p.planes[2][0], 200.0, 1e-9);
}

TEST(Hsv, ValueIsChannelMax)
{
    const auto grid = rgb_grid();
    const auto hsv = rgb_to_hsv(grid);
    for (std::size_t i = 0; i < hsv.size(); ++i) {
        const auto px = grid.bytes().subspan(3 * i, 3);
        EXPECT_EQ(hsv.planes[2][i], std::max({px[0], px[1], px[2]}));
    }
}

TEST(Hsv, InverseReferenceAndWrongSpace)
{
    FloatPlanes p(1, 1, ColorSpace::HSV);
    p.planes[2][0] = 255.0;
    EXPECT_EQ(hsv_to_rgb(p).at(0, 0), (Rgb{255, 255, 255}));

    // Hue wraps: 255 + 42.5 is the same as 42.5.
    p.planes[0][0] = 255.0 + 42.5;
    p.planes[1][0] = 255.0;
    p.planes[2][0] = 128.0;
    EXPECT_EQ(hsv_to_rgb(p).at(0, 0), (Rgb{128, 128, 0}));

    FloatPlanes lab(1, 1, ColorSpace::LAB);
    try {
        hsv_to_rgb(lab);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::WrongSpace);
    }
}

TEST(Hsv, GridRoundTripWithinOne)
{
    const auto grid = rgb_grid();
    EXPECT_LE(max_channel_error(hsv_to_rgb(rgb_to_hsv(grid)), grid), 1);
}

TEST(Lab, WhiteAndBlack)
{
    auto p = rgb_to_lab(one_pixel(255, 255, 255));
    EXPECT_NEAR(p.planes[0][0], 255.0, 1e-9);
    EXPECT_NEAR(p.planes[1][0], 128.0, 1e-9);
    EXPECT_NEAR(p.planes[2][0], 128.0, 1e-9);
    p = rgb_to_lab(one_pixel(0, 0, 0));
    EXPECT_NEAR(p.planes[0][0], 0.0, 1e-12);
}

TEST(Lab, MatchesReferenceImplementation)
{
    // skimage.color.rgb2lab (D65, 2 degree), rescaled: L*2.55, a+128, b+128.
    struct Case {
        int r, g, b;
        double l, a, bb;
    };
    const Case cases[] = {
        {255, 0, 0, 135.76349926, 208.09230823, 195.20275104},
        {0, 255, 0, 223.7245037, 41.81697026, 211.17970318},
        {0, 0, 255, 82.35396504, 207.18559091, 20.14269979},
        {128, 64, 200, 106.80619496, 181.52130173, 67.64499038},
        {10, 20, 30, 15.16859947, 127.33068921, 119.86358821},
    };
    for (const auto& c : cases) {
        const auto p = rgb_to_lab(one_pixel(c.r, c.g, c.b));
        EXPECT_NEAR(p.planes[0][0], c.l, 0.05) << c.r << "," << c.g << "," << c.b;
        EXPECT_NEAR(p.planes[1][0], c.a, 0.05);
        EXPECT_NEAR(p.planes[2][0], c.bb, 0.05);
    }
}

TEST(Lab, GridRoundTripWithinTwo)
{
    const auto grid = rgb_grid();
    EXPECT_LE(max_channel_error(lab_to_rgb(rgb_to_lab(grid)), grid), 2);
}

TEST(Lab, AchromaticPixelsSitAtScaledZero)
{
    for (int v = 0; v <= 255; v += 5) {
        const auto lab = rgb_to_lab(one_pixel(v, v, v));
        const auto hsv = rgb_to_hsv(one_pixel(v, v, v));
        EXPECT_NEAR(lab.planes[1][0], 128.0, 1.0);
        EXPECT_NEAR(lab.planes[2][0], 128.0, 1.0);
        EXPECT_EQ(hsv.planes[1][0], 0.0);
    }
}

TEST(Lab, WrongSpace)
{
    FloatPlanes hed(1, 1, ColorSpace::HED);
    EXPECT_THROW(lab_to_rgb(hed), Error);
}

TEST(StainMatrix, StandardRowsAreUnitAndInvertible)
{
    const auto& m = StainMatrix::standard();
    for (const auto& r : m.rows()) EXPECT_NEAR(std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]), 1.0, 1e-9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += m.inverse()[i][k] * m.rows()[k][j];
            EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-9);
        }
    // First row is (0.65, 0.70, 0.29) normalized.
    const double n = std::sqrt(0.65 * 0.65 + 0.70 * 0.70 + 0.29 * 0.29);
    EXPECT_NEAR(m.rows()[0][1], 0.70 / n, 1e-15);
}

TEST(StainMatrix, RejectsSingularAndZeroRows)
{
    EXPECT_THROW(StainMatrix(Mat3{{{1, 0, 0}, {2, 0, 0}, {0, 0, 1}}}), Error);
    EXPECT_THROW(StainMatrix(Mat3{{{0, 0, 0}, {0, 1, 0}, {0, 0, 1}}}), Error);
}

TEST(StainMatrix, UnitRowsArePreservedExactly)
{
    const auto values = StainMatrix::standard().values();
    EXPECT_EQ(StainMatrix::from_values(values).values(), values);
}

TEST(Hed, WhiteIsZeroDensityBothWays)
{
    const auto p = rgb_to_hed(one_pixel(255, 255, 255));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.planes[c][0], 0.0, 1e-15);
    FloatPlanes zero(1, 1, ColorSpace::HED);
    EXPECT_EQ(hed_to_rgb(zero).at(0, 0), (Rgb{255, 255, 255}));
}

TEST(Hed, OpticalDensityFormula)
{
    // OD for I=127 is -log10(128/256) = log10(2); HED = OD . inverse(M).
    const auto p = rgb_to_hed(one_pixel(127, 255, 63));
    const double od[3] = {std::log10(2.0), 0.0, -std::log10(64.0 / 256.0)};
    const auto& inv = StainMatrix::standard().inverse();
    for (int j = 0; j < 3; ++j)
        EXPECT_NEAR(p.planes[j][0], od[0] * inv[0][j] + od[1] * inv[1][j] + od[2] * inv[2][j], 1e-12);
}

TEST(Hed, LinearInOpticalDensity)
{
    // A pixel whose OD is h*H + e*E deconvolves to (h, e, 0) exactly in the float path.
    const auto& m = StainMatrix::standard();
    auto deconvolve = [&](const std::array<double, 3>& od) {
        std::array<double, 3> out{};
        for (int j = 0; j < 3; ++j)
            for (int c = 0; c < 3; ++c) out[j] += od[c] * m.inverse()[c][j];
        return out;
    };
    pathaug::Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const double a = rng.uniform(0, 2), b = rng.uniform(0, 2);
        std::array<double, 3> oda{}, odb{}, sum{};
        for (int c = 0; c < 3; ++c) {
            oda[c] = a * m.rows()[0][c];
            odb[c] = b * m.rows()[1][c];
            sum[c] = oda[c] + odb[c];
        }
        const auto ha = deconvolve(oda), hb = deconvolve(odb), hs = deconvolve(sum);
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(hs[j], ha[j] + hb[j], 1e-9);
        EXPECT_NEAR(hs[0], a, 1e-9);
        EXPECT_NEAR(hs[1], b, 1e-9);
    }
}

TEST(Hed, RoundTripOnStainTiles)
{
    pathaug::Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        const auto tile = pathaug::testing::he_tile(32, 32, rng);
        EXPECT_LE(max_channel_error(hed_to_rgb(rgb_to_hed(tile)), tile), 2);
    }
}

TEST(Hed, WrongSpace)
{
    FloatPlanes hsv(1, 1, ColorSpace::HSV);
    EXPECT_THROW(hed_to_rgb(hsv), Error);
}

TEST(ColorSpace, NamesRoundTrip)
{
    for (auto s : kAllSpaces) EXPECT_EQ(parse_color_space(to_string(s)), s);
    EXPECT_FALSE(parse_color_space("RGB").has_value());
}
