#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "amc/modulation.hpp"

namespace amc {

/// Square window [-scale, +scale]^2 of the complex plane rasterized onto a
/// width x height grid. Pixel (0, 0) is top-left; columns grow with the real
/// part and rows grow downward (decreasing imaginary part). Bins are
/// half-open, so a sample on a boundary lands in the higher-index bin.
struct ImagePlaneSpec {
  double scale = 2.5;
  int width_px = 32;
  int height_px = 32;

  void Validate() const;

  /// Continuous pixel coordinates; the centroid of pixel (r, c) is (c+0.5, r+0.5).
  double ColumnCoord(double real) const { return (real + scale) / (2.0 * scale) * width_px; }
  double RowCoord(double imag) const { return (scale - imag) / (2.0 * scale) * height_px; }
};

struct GrayGrid {
  ImagePlaneSpec plane;
  std::vector<double> values;  // row-major, height x width

  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * plane.width_px + col];
  }
  double& at(int row, int col) {
    return values[static_cast<std::size_t>(row) * plane.width_px + col];
  }
  double Sum() const;
  double Max() const;
};

struct RasterResult {
  GrayGrid grid;
  std::size_t dropped = 0;  // samples outside the window
};

enum class PowerMode { kUnit, kMagnitudeSquared };

struct DecayParams {
  double alpha = 1.0;             // decay per pixel of distance
  double cutoff_radius_px = 4.0;  // may be +inf
  PowerMode power_mode = PowerMode::kUnit;

  void Validate() const;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t at(int row, int col, int channel) const {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + channel];
  }
  std::uint8_t& at(int row, int col, int channel) {
    return pixels[(static_cast<std::size_t>(row) * width + col) * 3 + channel];
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// 1.0 where at least one sample falls in the bin, else 0.0.
RasterResult RasterizeBinary(std::span<const Complex> samples, const ImagePlaneSpec& plane);

/// Per-bin sample counts.
RasterResult RasterizeGray(std::span<const Complex> samples, const ImagePlaneSpec& plane);

/// Exponential-decay influence image: pixel j accumulates
/// P_i * exp(-alpha * d_ij) over in-window samples i whose distance d_ij (in
/// pixels) to the pixel centroid is at most the cutoff. Samples are summed in
/// ascending index order at every pixel, which makes the result bit-identical
/// to a plain pixel-by-sample double loop.
RasterResult EnhanceGray(std::span<const Complex> samples, const ImagePlaneSpec& plane,
                         const DecayParams& decay);

struct ThreeChannelParams {
  std::array<double, 3> alphas = {1.0, 2.0, 4.0};
  double cutoff_radius_px = 4.0;
  PowerMode power_mode = PowerMode::kUnit;
};

/// One enhanced image per alpha (strictly increasing, else
/// Error(kNonDistinctAlphas)), each scaled to 0..255 by its own maximum.
RgbImage ComposeThreeChannel(std::span<const Complex> samples, const ImagePlaneSpec& plane,
                             const ThreeChannelParams& params, std::size_t* dropped = nullptr);

/// Maps a grid to 8 bits by round(255 * v / max); an all-zero grid stays zero.
std::vector<std::uint8_t> QuantizeByMax(const GrayGrid& grid);

/// Replicates a single-channel grid into an RGB image (R = G = B).
RgbImage GrayToRgb(const GrayGrid& grid);

/// Nearest-neighbour integer upscaling; factor must be >= 1.
RgbImage Upscale(const RgbImage& image, int factor);

}  // namespace amc
