#include "amc/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "amc/error.hpp"

namespace amc {

namespace {

GrayGrid EmptyGrid(const ImagePlaneSpec& plane) {
  return GrayGrid{plane, std::vector<double>(static_cast<std::size_t>(plane.width_px) * plane.height_px, 0.0)};
}

// Bin of a sample, or false when it lies outside the window.
bool LocateBin(const ImagePlaneSpec& plane, const Complex& s, int& row, int& col) {
  const double u = plane.ColumnCoord(s.real());
  const double v = plane.RowCoord(s.imag());
  if (!(u >= 0.0 && u < plane.width_px && v >= 0.0 && v < plane.height_px)) return false;
  col = static_cast<int>(std::floor(u));
  row = static_cast<int>(std::floor(v));
  // Guard against u rounding up to exactly width after the multiply.
  return col < plane.width_px && row < plane.height_px;
}

void CheckedAlphaOrder(const std::array<double, 3>& alphas) {
  for (double a : alphas) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw Error(ErrorCode::kInvalidSpec, "decay rates must be positive and finite");
    }
  }
  if (!(alphas[0] < alphas[1] && alphas[1] < alphas[2])) {
    throw Error(ErrorCode::kNonDistinctAlphas, "decay rates must be strictly increasing");
  }
}

}  // namespace

void ImagePlaneSpec::Validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::kInvalidSpec, "plane scale must be positive");
  if (width_px <= 0 || height_px <= 0) throw Error(ErrorCode::kInvalidSpec, "image dimensions must be positive");
}

void DecayParams::Validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error(ErrorCode::kInvalidSpec, "alpha must be positive");
  if (!(cutoff_radius_px >= 1.0)) throw Error(ErrorCode::kInvalidSpec, "cutoff_radius_px must be >= 1");
}

double GrayGrid::Sum() const {
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

double GrayGrid::Max() const {
  double best = 0.0;
  for (double v : values) best = std::max(best, v);
  return best;
}

RasterResult RasterizeBinary(std::span<const Complex> samples, const ImagePlaneSpec& plane) {
  plane.Validate();
  RasterResult result{EmptyGrid(plane), 0};
  for (const Complex& s : samples) {
    int row, col;
    if (LocateBin(plane, s, row, col)) {
      result.grid.at(row, col) = 1.0;
    } else {
      ++result.dropped;
    }
  }
  return result;
}

RasterResult RasterizeGray(std::span<const Complex> samples, const ImagePlaneSpec& plane) {
  plane.Validate();
  RasterResult result{EmptyGrid(plane), 0};
  for (const Complex& s : samples) {
    int row, col;
    if (LocateBin(plane, s, row, col)) {
      result.grid.at(row, col) += 1.0;
    } else {
      ++result.dropped;
    }
  }
  return result;
}

RasterResult EnhanceGray(std::span<const Complex> samples, const ImagePlaneSpec& plane,
                         const DecayParams& decay) {
  plane.Validate();
  decay.Validate();
  RasterResult result{EmptyGrid(plane), 0};
  const double radius = decay.cutoff_radius_px;
  const bool unbounded = std::isinf(radius);

  for (const Complex& s : samples) {
    int bin_row, bin_col;
    if (!LocateBin(plane, s, bin_row, bin_col)) {
      ++result.dropped;
      continue;
    }
    const double u = plane.ColumnCoord(s.real());
    const double v = plane.RowCoord(s.imag());
    const double power = decay.power_mode == PowerMode::kUnit ? 1.0 : std::norm(s);

    int c0 = 0, c1 = plane.width_px - 1, r0 = 0, r1 = plane.height_px - 1;
    if (!unbounded) {
      // Pixels whose centroid can be within the radius; the exact test is below.
      c0 = std::max(c0, static_cast<int>(std::floor(u - 0.5 - radius)));
      c1 = std::min(c1, static_cast<int>(std::ceil(u - 0.5 + radius)));
      r0 = std::max(r0, static_cast<int>(std::floor(v - 0.5 - radius)));
      r1 = std::min(r1, static_cast<int>(std::ceil(v - 0.5 + radius)));
    }
    for (int r = r0; r <= r1; ++r) {
      const double dy = v - (r + 0.5);
      for (int c = c0; c <= c1; ++c) {
        const double dx = u - (c + 0.5);
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d <= radius) result.grid.at(r, c) += power * std::exp(-decay.alpha * d);
      }
    }
  }
  return result;
}

std::vector<std::uint8_t> QuantizeByMax(const GrayGrid& grid) {
  std::vector<std::uint8_t> out(grid.values.size(), 0);
  const double peak = grid.Max();
  if (!(peak > 0.0)) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * grid.values[i] / peak));
  }
  return out;
}

RgbImage ComposeThreeChannel(std::span<const Complex> samples, const ImagePlaneSpec& plane,
                             const ThreeChannelParams& params, std::size_t* dropped) {
  CheckedAlphaOrder(params.alphas);
  plane.Validate();
  RgbImage image(plane.width_px, plane.height_px);
  for (int channel = 0; channel < 3; ++channel) {
    const DecayParams decay{params.alphas[static_cast<std::size_t>(channel)], params.cutoff_radius_px,
                            params.power_mode};
    const RasterResult enhanced = EnhanceGray(samples, plane, decay);
    if (dropped != nullptr && channel == 0) *dropped = enhanced.dropped;
    const auto levels = QuantizeByMax(enhanced.grid);
    for (std::size_t i = 0; i < levels.size(); ++i) image.pixels[i * 3 + static_cast<std::size_t>(channel)] = levels[i];
  }
  return image;
}

RgbImage GrayToRgb(const GrayGrid& grid) {
  RgbImage image(grid.plane.width_px, grid.plane.height_px);
  const auto levels = QuantizeByMax(grid);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    image.pixels[i * 3] = image.pixels[i * 3 + 1] = image.pixels[i * 3 + 2] = levels[i];
  }
  return image;
}

RgbImage Upscale(const RgbImage& image, int factor) {
  if (factor < 1) throw Error(ErrorCode::kInvalidSpec, "upscale factor must be >= 1, got " + std::to_string(factor));
  RgbImage out(image.width * factor, image.height * factor);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = image.at(r / factor, c / factor, ch);
    }
  }
  return out;
}

}  // namespace amc
