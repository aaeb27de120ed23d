/*
 * Copyright 2026 The ctprep Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Grayscale PNG read/write (8- and 16-bit) on top of libpng.
//
// libpng reports errors with longjmp. All state touched after setjmp lives in
// a heap-allocated struct reached through a pointer, so nothing observed after
// the jump is an indeterminate local.

#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ctprep/error.hpp"

namespace ctprep {

struct GrayImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> pixels;  // row-major
};

namespace detail {

struct PngState {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  GrayImage image;
  std::string error;
};

inline void png_error_handler(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngState*>(png_get_error_ptr(png));
  st->error = msg ? msg : "libpng error";
  png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

inline bool png_read_into(PngState* st) {
  st->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, st, png_error_handler,
                                   png_warning_handler);
  if (!st->png) {
    st->error = "cannot allocate png reader";
    return false;
  }
  st->info = png_create_info_struct(st->png);
  if (!st->info) {
    png_destroy_read_struct(&st->png, nullptr, nullptr);
    st->error = "cannot allocate png info";
    return false;
  }
  if (setjmp(png_jmpbuf(st->png))) {
    png_destroy_read_struct(&st->png, &st->info, nullptr);
    return false;
  }
  png_init_io(st->png, st->fp);
  png_read_info(st->png, st->info);
  const png_byte color = png_get_color_type(st->png, st->info);
  int depth = png_get_bit_depth(st->png, st->info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    st->error = "not a single-channel grayscale png";
    png_destroy_read_struct(&st->png, &st->info, nullptr);
    return false;
  }
  if (depth < 8) {
    png_set_expand_gray_1_2_4_to_8(st->png);
    depth = 8;
  }
  png_read_update_info(st->png, st->info);
  st->image.width = static_cast<int>(png_get_image_width(st->png, st->info));
  st->image.height = static_cast<int>(png_get_image_height(st->png, st->info));
  st->image.bit_depth = depth;
  const std::size_t stride = png_get_rowbytes(st->png, st->info);
  st->buffer.resize(stride * static_cast<std::size_t>(st->image.height));
  st->rows.resize(static_cast<std::size_t>(st->image.height));
  for (int r = 0; r < st->image.height; ++r) {
    st->rows[r] = st->buffer.data() + stride * static_cast<std::size_t>(r);
  }
  png_read_image(st->png, st->rows.data());
  png_read_end(st->png, nullptr);
  png_destroy_read_struct(&st->png, &st->info, nullptr);
  return true;
}

inline bool png_write_from(PngState* st) {
  st->png = png_create_write_struct(PNG_LIBPNG_VER_STRING, st, png_error_handler,
                                    png_warning_handler);
  if (!st->png) {
    st->error = "cannot allocate png writer";
    return false;
  }
  st->info = png_create_info_struct(st->png);
  if (!st->info) {
    png_destroy_write_struct(&st->png, nullptr);
    st->error = "cannot allocate png info";
    return false;
  }
  if (setjmp(png_jmpbuf(st->png))) {
    png_destroy_write_struct(&st->png, &st->info);
    return false;
  }
  png_init_io(st->png, st->fp);
  png_set_compression_level(st->png, 3);
  png_set_IHDR(st->png, st->info, static_cast<png_uint_32>(st->image.width),
               static_cast<png_uint_32>(st->image.height), st->image.bit_depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(st->png, st->info);
  png_write_image(st->png, st->rows.data());
  png_write_end(st->png, nullptr);
  png_destroy_write_struct(&st->png, &st->info);
  return true;
}

}  // namespace detail

inline GrayImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error(ErrorCode::kUnreadableFile, "cannot open " + path.string());
  auto st = std::make_unique<detail::PngState>();
  st->fp = fp.get();
  if (!detail::png_read_into(st.get())) {
    throw Error(ErrorCode::kUnreadableFile, path.string() + ": " + st->error);
  }
  GrayImage img = std::move(st->image);
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(n);
  if (img.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      img.pixels[i] = static_cast<std::uint16_t>((st->buffer[2 * i] << 8) | st->buffer[2 * i + 1]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) img.pixels[i] = st->buffer[i];
  }
  return img;
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  auto st = std::make_unique<detail::PngState>();
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  const std::size_t bytes = img.bit_depth == 16 ? 2 : 1;
  st->buffer.resize(n * bytes);
  for (std::size_t i = 0; i < n; ++i) {
    if (bytes == 2) {
      st->buffer[2 * i] = static_cast<png_byte>(img.pixels[i] >> 8);
      st->buffer[2 * i + 1] = static_cast<png_byte>(img.pixels[i] & 0xFF);
    } else {
      st->buffer[i] = static_cast<png_byte>(img.pixels[i]);
    }
  }
  st->rows.resize(static_cast<std::size_t>(img.height));
  for (int r = 0; r < img.height; ++r) {
    st->rows[r] = st->buffer.data() + static_cast<std::size_t>(r) * img.width * bytes;
  }
  st->image.width = img.width;
  st->image.height = img.height;
  st->image.bit_depth = img.bit_depth;

  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error(ErrorCode::kIoFailure, "cannot create " + path.string());
  st->fp = fp.get();
  if (!detail::png_write_from(st.get())) {
    throw Error(ErrorCode::kIoFailure, path.string() + ": " + st->error);
  }
  if (std::fflush(fp.get()) != 0) {
    throw Error(ErrorCode::kIoFailure, "write failed for " + path.string());
  }
}

}  // namespace ctprep
