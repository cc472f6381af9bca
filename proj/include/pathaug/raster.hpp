#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pathaug/error.hpp"

namespace pathaug {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit, 3-channel image with interleaved row-major pixels.
///
/// Every operator in the library takes and returns this type by value; it is
/// never mutated after an operator has produced it.
class RasterImage {
public:
    RasterImage() = default;

    RasterImage(int width, int height, Rgb fill = {0, 0, 0})
        : width_(width), height_(height)
    {
        check_dims(width, height);
        data_.resize(static_cast<std::size_t>(width) * height * 3);
        for (std::size_t i = 0; i < data_.size(); i += 3) {
            data_[i] = fill[0];
            data_[i + 1] = fill[1];
            data_[i + 2] = fill[2];
        }
    }

    RasterImage(int width, int height, std::vector<std::uint8_t> interleaved)
        : width_(width), height_(height), data_(std::move(interleaved))
    {
        check_dims(width, height);
        if (data_.size() != static_cast<std::size_t>(width) * height * 3)
            throw Error(ErrorCode::ShapeError, "pixel buffer length does not match width*height*3");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const std::uint8_t> bytes() const noexcept { return data_; }
    std::span<std::uint8_t> bytes() noexcept { return data_; }

    Rgb at(int x, int y) const noexcept
    {
        const std::size_t i = index(x, y);
        return {data_[i], data_[i + 1], data_[i + 2]};
    }

    void set(int x, int y, Rgb value) noexcept
    {
        const std::size_t i = index(x, y);
        data_[i] = value[0];
        data_[i + 1] = value[1];
        data_[i + 2] = value[2];
    }

    friend bool operator==(const RasterImage&, const RasterImage&) = default;

private:
    static void check_dims(int width, int height)
    {
        if (width < 1 || height < 1)
            throw Error(ErrorCode::ShapeError, "image dimensions must be >= 1");
    }

    std::size_t index(int x, int y) const noexcept
    {
        return (static_cast<std::size_t>(y) * width_ + x) * 3;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Round half away from zero, then clamp to [0,255].
inline std::uint8_t quantize(double v) noexcept
{
    if (!(v > 0.0)) return 0; // also maps NaN to 0
    const double r = std::round(v);
    return r >= 255.0 ? 255 : static_cast<std::uint8_t>(r);
}

inline RasterImage crop(const RasterImage& image, int x, int y, int w, int h)
{
    if (w < 1 || h < 1 || x < 0 || y < 0 || x + w > image.width() || y + h > image.height())
        throw Error(ErrorCode::OutOfBounds,
                    "crop (" + std::to_string(x) + "," + std::to_string(y) + "," + std::to_string(w) + "," +
                        std::to_string(h) + ") exceeds " + std::to_string(image.width()) + "x" +
                        std::to_string(image.height()));
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * 3);
    const auto src = image.bytes();
    const std::size_t row_bytes = static_cast<std::size_t>(w) * 3;
    for (int r = 0; r < h; ++r) {
        const std::size_t from = (static_cast<std::size_t>(y + r) * image.width() + x) * 3;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(from), row_bytes,
                    out.begin() + static_cast<std::ptrdiff_t>(r * row_bytes));
    }
    return RasterImage(w, h, std::move(out));
}

} // namespace pathaug
