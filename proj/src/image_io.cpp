#include "stab/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "stab/errors.hpp"

namespace stab {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    // Rec. 601 in fixed point
    return static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
}

}  // namespace

Frame read_png(const std::filesystem::path& path, int index) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("read_png: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("read_png: png_create_info_struct failed");
    }
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> buf;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: decode error in " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const png_size_t rowbytes = png_get_rowbytes(png, info);
    buf.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = buf.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    const int channels = png_get_channels(png, info);
    png_destroy_read_struct(&png, &info, nullptr);

    Frame frame;
    frame.index = index;
    frame.width = static_cast<int>(w);
    frame.height = static_cast<int>(h);
    frame.gray.resize(static_cast<size_t>(w) * h);
    if (channels == 1) {
        for (size_t i = 0; i < frame.gray.size(); ++i) frame.gray[i] = buf[i];
    } else if (channels == 3) {
        frame.rgb.assign(buf.begin(), buf.begin() + static_cast<size_t>(w) * h * 3);
        for (size_t i = 0; i < frame.gray.size(); ++i) {
            frame.gray[i] = luma(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
        }
    } else {
        throw IoError("read_png: unsupported channel count in " + path.string());
    }
    return frame;
}

void write_png(const std::filesystem::path& path, const Frame& frame) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("write_png: cannot open " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: encode error for " + path.string());
    }
    png_init_io(png, fp.get());

    const bool color = frame.has_rgb();
    png_set_IHDR(png, info, frame.width, frame.height, 8,
                 color ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_bytep> rows(frame.height);
    const std::uint8_t* base = color ? frame.rgb.data() : frame.gray.data();
    const size_t stride = static_cast<size_t>(frame.width) * (color ? 3 : 1);
    for (int y = 0; y < frame.height; ++y) {
        rows[y] = const_cast<png_bytep>(base + static_cast<size_t>(y) * stride);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

FrameSequence load_frame_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("load_frame_dir: not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("load_frame_dir: no .png frames in " + dir.string());

    FrameSequence frames;
    frames.reserve(files.size());
    for (size_t i = 0; i < files.size(); ++i) {
        frames.push_back(read_png(files[i], static_cast<int>(i)));
        if (i > 0 && (frames[i].width != frames[0].width || frames[i].height != frames[0].height)) {
            throw DimensionMismatch("load_frame_dir: frame dimensions differ at " +
                                    files[i].string());
        }
    }
    return frames;
}

void save_frame_dir(const std::filesystem::path& dir, const FrameSequence& frames) {
    std::filesystem::create_directories(dir);
    char name[32];
    for (size_t i = 0; i < frames.size(); ++i) {
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        write_png(dir / name, frames[i]);
    }
}

}  // namespace stab
