#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "pathaug/error.hpp"
#include "pathaug/raster.hpp"

namespace pathaug {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg)
{
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    if (what) *what = msg;
    png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

} // namespace detail

/// Reads an 8-bit PNG. Gray is replicated to three channels, alpha dropped,
/// palettes expanded. 16-bit files are rejected.
inline RasterImage load_png(const std::filesystem::path& path)
{
    detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw Error(ErrorCode::IoError, "cannot open " + path.string());

    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw Error(ErrorCode::DecodeError, path.string() + " is not a PNG file");

    std::string what;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &what, detail::png_error_fn,
                                             detail::png_warning_fn);
    if (!png) throw Error(ErrorCode::DecodeError, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error(ErrorCode::DecodeError, "png_create_info_struct failed");
    }

    // Everything libpng-owned lives in plain locals from here until the
    // struct is destroyed; no C++ object with a destructor crosses setjmp.
    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int bit_depth = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::DecodeError, path.string() + ": " + what);
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::DecodeError, path.string() + ": 16-bit PNG is not supported");
    }

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    if (png_get_rowbytes(png, info) != static_cast<png_size_t>(width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::DecodeError, path.string() + ": unexpected row layout");
    }

    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = pixels.data() + static_cast<std::size_t>(r) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    return RasterImage(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

/// Writes an 8-bit RGB PNG. The output is a deterministic function of the
/// pixels (no timestamps or text chunks).
inline void save_png(const RasterImage& image, const std::filesystem::path& path)
{
    if (image.empty()) throw Error(ErrorCode::IoError, "cannot save an empty image");
    detail::FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");

    std::string what;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &what, detail::png_error_fn,
                                              detail::png_warning_fn);
    if (!png) throw Error(ErrorCode::IoError, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error(ErrorCode::IoError, "png_create_info_struct failed");
    }

    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
    auto* base = const_cast<png_bytep>(image.bytes().data());
    for (int r = 0; r < image.height(); ++r) rows[r] = base + static_cast<std::size_t>(r) * image.width() * 3;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoError, path.string() + ": " + what);
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);

    if (std::fflush(file.get()) != 0) throw Error(ErrorCode::IoError, "failed to flush " + path.string());
}

} // namespace pathaug
