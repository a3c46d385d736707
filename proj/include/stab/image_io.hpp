#pragma once

#include <filesystem>

#include "stab/frame.hpp"

namespace stab {

// 8-bit PNG I/O. Color images are kept as RGB alongside the derived
// grayscale; grayscale images carry no RGB buffer.
Frame read_png(const std::filesystem::path& path, int index = 0);
void write_png(const std::filesystem::path& path, const Frame& frame);

// Numbered frame directories: 000000.png, 000001.png, ...
FrameSequence load_frame_dir(const std::filesystem::path& dir);
void save_frame_dir(const std::filesystem::path& dir, const FrameSequence& frames);

}  // namespace stab
