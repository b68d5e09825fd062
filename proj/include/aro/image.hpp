// Copyright 2026 The ARO Probe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file image.hpp
/// Grid shuffles that destroy spatial order while keeping every pixel.
///
/// A W x H image split into `cols` x `rows` cells has core cells of
/// floor(W/cols) x floor(H/rows) pixels. Slots in the last column and row
/// additionally own the remainder pixels, so a 10 x 10 image on a 3 x 3 grid
/// has slot widths (3, 3, 4). The permutation moves the equal-sized cores;
/// the remainder band stays where it is, which keeps the operation lossless
/// and exactly invertible.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aro/error.hpp"
#include "aro/rng.hpp"

namespace aro::image {

struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  RasterImage() = default;
  RasterImage(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return &rgb[(y * width + x) * 3];
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

struct GridSpec {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t cells() const noexcept { return rows * cols; }
};

inline constexpr GridSpec kShuffleRows{4, 1};
inline constexpr GridSpec kShuffleColumns{1, 4};
inline constexpr GridSpec kShufflePatches{3, 3};

inline GridSpec parse_grid_preset(std::string_view name) {
  if (name == "rows") return kShuffleRows;
  if (name == "columns") return kShuffleColumns;
  if (name == "patches") return kShufflePatches;
  throw UsageError("unknown grid preset '" + std::string(name) +
                   "' (expected rows, columns or patches)");
}

struct GridLayout {
  std::size_t cell_width = 0;   // core width
  std::size_t cell_height = 0;  // core height
  std::vector<std::size_t> slot_widths;
  std::vector<std::size_t> slot_heights;
};

inline GridLayout grid_layout(std::size_t width, std::size_t height, GridSpec grid) {
  if (grid.rows == 0 || grid.cols == 0) throw UsageError("grid needs at least one row and column");
  if (width < grid.cols || height < grid.rows)
    throw DataError("image " + std::to_string(width) + "x" + std::to_string(height) +
                    " is smaller than the " + std::to_string(grid.rows) + "x" +
                    std::to_string(grid.cols) + " grid");
  GridLayout l;
  l.cell_width = width / grid.cols;
  l.cell_height = height / grid.rows;
  l.slot_widths.assign(grid.cols, l.cell_width);
  l.slot_heights.assign(grid.rows, l.cell_height);
  l.slot_widths.back() += width - l.cell_width * grid.cols;
  l.slot_heights.back() += height - l.cell_height * grid.rows;
  return l;
}

/// `permutation[slot] = source cell`, cells numbered row-major.
inline RasterImage apply_cell_permutation(const RasterImage& img, GridSpec grid,
                                          const std::vector<std::size_t>& permutation) {
  const auto layout = grid_layout(img.width, img.height, grid);
  if (permutation.size() != grid.cells()) throw UsageError("permutation size does not match grid");
  RasterImage out = img;
  const std::size_t row_bytes = layout.cell_width * 3;
  for (std::size_t slot = 0; slot < permutation.size(); ++slot) {
    const std::size_t src = permutation[slot];
    const std::size_t sx = (src % grid.cols) * layout.cell_width;
    const std::size_t sy = (src / grid.cols) * layout.cell_height;
    const std::size_t dx = (slot % grid.cols) * layout.cell_width;
    const std::size_t dy = (slot / grid.cols) * layout.cell_height;
    for (std::size_t y = 0; y < layout.cell_height; ++y)
      std::copy_n(img.pixel(sx, sy + y), row_bytes, out.pixel(dx, dy + y));
  }
  return out;
}

inline std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

/// Uniform over all cell permutations, identity included.
inline std::vector<std::size_t> draw_cell_permutation(GridSpec grid, std::uint64_t seed) {
  std::vector<std::size_t> perm(grid.cells());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SplitMix64 rng(seed);
  fisher_yates(std::span(perm), rng);
  return perm;
}

struct ShuffleResult {
  RasterImage image;
  std::vector<std::size_t> permutation;
};

inline ShuffleResult split_and_shuffle(const RasterImage& img, GridSpec grid,
                                       std::uint64_t seed) {
  if (img.rgb.size() != img.width * img.height * 3)
    throw DataError("pixel buffer does not match image size");
  grid_layout(img.width, img.height, grid);  // validates
  auto perm = draw_cell_permutation(grid, seed);
  auto out = apply_cell_permutation(img, grid, perm);
  return {std::move(out), std::move(perm)};
}

}  // namespace aro::image
