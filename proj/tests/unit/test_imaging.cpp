#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"

#include "amc/imaging.hpp"
#include "amc/rng.hpp"

using namespace amc;

namespace {

std::vector<Complex> RandomCloud(std::size_t n, double spread, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Complex> out(n);
  for (auto& s : out) s = Complex(spread * rng.Normal(), spread * rng.Normal());
  return out;
}

// Plain pixel-by-sample loop over the whole grid.
GrayGrid BruteForceEnhance(const std::vector<Complex>& samples, const ImagePlaneSpec& plane,
                           const DecayParams& decay) {
  GrayGrid g{plane, std::vector<double>(static_cast<std::size_t>(plane.width_px) * plane.height_px, 0.0)};
  for (int r = 0; r < plane.height_px; ++r) {
    for (int c = 0; c < plane.width_px; ++c) {
      double acc = 0.0;
      for (const Complex& s : samples) {
        const double u = plane.ColumnCoord(s.real());
        const double v = plane.RowCoord(s.imag());
        if (!(u >= 0.0 && u < plane.width_px && v >= 0.0 && v < plane.height_px)) continue;
        const double dx = u - (c + 0.5);
        const double dy = v - (r + 0.5);
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d > decay.cutoff_radius_px) continue;
        const double p = decay.power_mode == PowerMode::kUnit ? 1.0 : std::norm(s);
        acc += p * std::exp(-decay.alpha * d);
      }
      g.at(r, c) = acc;
    }
  }
  return g;
}

// Sample whose continuous pixel coordinates are (col, row).
Complex AtPixelCoord(const ImagePlaneSpec& p, double col, double row) {
  return Complex(col / p.width_px * 2.0 * p.scale - p.scale, p.scale - row / p.height_px * 2.0 * p.scale);
}

ImagePlaneSpec Plane(int w, int h, double scale = 2.5) {
  ImagePlaneSpec p;
  p.width_px = w;
  p.height_px = h;
  p.scale = scale;
  return p;
}

}  // namespace

TEST_CASE("rasterize_binary examples") {
  const ImagePlaneSpec plane = Plane(8, 8, 2.0);
  CHECK(RasterizeBinary({}, plane).grid.Sum() == 0.0);

  const std::vector<Complex> center = {Complex(0.0, 0.0)};
  const RasterResult one = RasterizeBinary(center, plane);
  CHECK(one.grid.Sum() == 1.0);
  CHECK(one.grid.at(4, 4) == 1.0);  // boundary goes to the higher-index bin

  const std::vector<Complex> pts = {AtPixelCoord(plane, 1.5, 1.5), AtPixelCoord(plane, 1.5, 1.5),
                                    AtPixelCoord(plane, 5.5, 6.5)};
  const RasterResult r = RasterizeBinary(pts, plane);
  CHECK(r.grid.at(1, 1) == 1.0);
  CHECK(r.grid.at(6, 5) == 1.0);
  CHECK(r.grid.Sum() == 2.0);
}

TEST_CASE("rasterize_gray counts and half-open bins") {
  const ImagePlaneSpec plane = Plane(4, 4, 2.0);  // one pixel per unit
  const std::vector<Complex> three = {Complex(0.5, 0.5), Complex(0.6, 0.4), Complex(0.9, 0.1)};
  CHECK(RasterizeGray(three, plane).grid.at(1, 2) == 3.0);

  // Real part 0 is the boundary between columns 1 and 2.
  const std::vector<Complex> edge = {Complex(0.0, 0.5)};
  CHECK(RasterizeGray(edge, plane).grid.at(1, 2) == 1.0);
  // Imag part 0 is the boundary between rows 1 and 2; rows grow downward.
  const std::vector<Complex> edge_row = {Complex(0.5, 0.0)};
  CHECK(RasterizeGray(edge_row, plane).grid.at(2, 2) == 1.0);
  // Real +scale and imag -scale map to coordinate W (or H) and fall outside.
  const std::vector<Complex> corners = {Complex(2.0, 0.0), Complex(0.0, -2.0), Complex(-2.0, 0.0),
                                        Complex(0.0, 2.0)};
  const RasterResult c = RasterizeGray(corners, plane);
  CHECK(c.dropped == 2);
  CHECK(c.grid.at(2, 0) == 1.0);
  CHECK(c.grid.at(0, 2) == 1.0);
}

TEST_CASE("rasterize_gray conserves retained samples") {
  const ImagePlaneSpec plane = Plane(32, 32);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto cloud = RandomCloud(1000, 1.5, seed);
    const RasterResult r = RasterizeGray(cloud, plane);
    CHECK(r.grid.Sum() == 1000.0 - static_cast<double>(r.dropped));
    std::size_t outside = 0;
    for (const auto& s : cloud) {
      outside += (s.real() < -2.5 || s.real() >= 2.5 || s.imag() <= -2.5 || s.imag() > 2.5) ? 1 : 0;
    }
    CHECK(r.dropped == outside);
  }
}

TEST_CASE("binary is the gray grid clipped at one") {
  const ImagePlaneSpec plane = Plane(16, 12, 2.0);
  const auto cloud = RandomCloud(500, 1.0, 4);
  const GrayGrid gray = RasterizeGray(cloud, plane).grid;
  const GrayGrid bin = RasterizeBinary(cloud, plane).grid;
  for (std::size_t i = 0; i < gray.values.size(); ++i) CHECK(bin.values[i] == std::min(gray.values[i], 1.0));
}

TEST_CASE("enhance_gray examples") {
  const ImagePlaneSpec plane = Plane(8, 8, 2.0);
  const std::vector<Complex> s = {AtPixelCoord(plane, 3.5, 3.5)};
  const GrayGrid g = EnhanceGray(s, plane, {2.0, 4.0, PowerMode::kUnit}).grid;
  CHECK(g.at(3, 3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.at(3, 4) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(g.at(3, 4) == doctest::Approx(0.1353).epsilon(1e-3));
  // Beyond the cutoff nothing lands.
  CHECK(g.at(3, 7) > 0.0);  // distance 4 is inclusive
  CHECK(g.at(7, 7) == 0.0);

  const Complex off_center = AtPixelCoord(plane, 5.5, 1.5);
  const GrayGrid m =
      EnhanceGray(std::vector<Complex>{off_center}, plane, {1.0, 4.0, PowerMode::kMagnitudeSquared}).grid;
  CHECK(m.at(1, 5) == doctest::Approx(std::norm(off_center)).epsilon(1e-12));
  CHECK(m.Max() == m.at(1, 5));
}

TEST_CASE("enhance_gray equals the brute-force loop exactly") {
  CounterRng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 1 + static_cast<int>(rng.Below(16));
    const int h = 1 + static_cast<int>(rng.Below(16));
    const ImagePlaneSpec plane = Plane(w, h, 0.5 + 3.0 * rng.Uniform());
    const auto cloud = RandomCloud(rng.Below(501), 1.2, 1000 + trial);
    DecayParams decay;
    decay.alpha = 0.1 + 4.0 * rng.Uniform();
    decay.cutoff_radius_px = trial % 5 == 0 ? std::numeric_limits<double>::infinity() : 1.0 + 5.0 * rng.Uniform();
    decay.power_mode = trial % 2 ? PowerMode::kUnit : PowerMode::kMagnitudeSquared;
    const GrayGrid got = EnhanceGray(cloud, plane, decay).grid;
    const GrayGrid want = BruteForceEnhance(cloud, plane, decay);
    CHECK(got.values == want.values);
  }
}

TEST_CASE("cutoff error is bounded by N exp(-alpha r)") {
  CounterRng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const ImagePlaneSpec plane = Plane(16, 16);
    const auto cloud = RandomCloud(200 + rng.Below(300), 1.0, 500 + trial);
    const double alpha = 0.2 + 2.0 * rng.Uniform();
    const double r = 1.0 + 4.0 * rng.Uniform();
    const GrayGrid cut = EnhanceGray(cloud, plane, {alpha, r, PowerMode::kUnit}).grid;
    const GrayGrid full =
        EnhanceGray(cloud, plane, {alpha, std::numeric_limits<double>::infinity(), PowerMode::kUnit}).grid;
    const double bound = static_cast<double>(cloud.size()) * std::exp(-alpha * r);
    for (std::size_t i = 0; i < cut.values.size(); ++i) {
      CHECK(std::abs(cut.values[i] - full.values[i]) <= bound);
      CHECK(cut.values[i] <= full.values[i] + 1e-9);
    }
  }
}

TEST_CASE("shifting samples by one pixel shifts the enhanced image") {
  const ImagePlaneSpec plane = Plane(16, 16, 2.0);
  const double pixel = 2.0 * plane.scale / plane.width_px;
  auto cloud = RandomCloud(300, 0.4, 8);
  std::vector<Complex> shifted;
  for (auto s : cloud) shifted.push_back(s + Complex(pixel, 0.0));
  const DecayParams decay{1.5, 3.0, PowerMode::kUnit};
  const GrayGrid a = EnhanceGray(cloud, plane, decay).grid;
  const GrayGrid b = EnhanceGray(shifted, plane, decay).grid;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c + 1 < 16; ++c) CHECK(b.at(r, c + 1) == doctest::Approx(a.at(r, c)).epsilon(1e-9));
  }
}

TEST_CASE("decay params validation") {
  const ImagePlaneSpec plane = Plane(8, 8);
  CHECK_AMC_ERROR(EnhanceGray({}, plane, {1.0, 0.5, PowerMode::kUnit}), ErrorCode::kInvalidSpec);
  CHECK_AMC_ERROR(EnhanceGray({}, plane, {0.0, 4.0, PowerMode::kUnit}), ErrorCode::kInvalidSpec);
  CHECK_AMC_ERROR(RasterizeGray({}, Plane(0, 8)), ErrorCode::kInvalidSpec);
}

TEST_CASE("compose_three_channel examples") {
  const ImagePlaneSpec plane = Plane(32, 32);
  const ThreeChannelParams params;

  const RgbImage black = ComposeThreeChannel({}, plane, params);
  CHECK(black.width == 32);
  CHECK(black.height == 32);
  for (auto v : black.pixels) CHECK(v == 0);

  const std::vector<Complex> one = {AtPixelCoord(plane, 16.5, 16.5)};
  const RgbImage img = ComposeThreeChannel(one, plane, params);
  std::array<int, 3> bright{};
  std::array<int, 3> lit{};
  for (int ch = 0; ch < 3; ++ch) {
    CHECK(img.at(16, 16, ch) == 255);
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) {
        bright[ch] += img.at(r, c, ch) >= 128 ? 1 : 0;
        lit[ch] += img.at(r, c, ch) > 0 ? 1 : 0;
      }
    }
  }
  CHECK(bright[0] >= bright[1]);
  CHECK(bright[1] >= bright[2]);
  CHECK(lit[0] >= lit[1]);
  CHECK(lit[1] >= lit[2]);

  ThreeChannelParams bad;
  bad.alphas = {1.0, 1.0, 4.0};
  CHECK_AMC_ERROR(ComposeThreeChannel(one, plane, bad), ErrorCode::kNonDistinctAlphas);
  bad.alphas = {4.0, 2.0, 1.0};
  CHECK_AMC_ERROR(ComposeThreeChannel(one, plane, bad), ErrorCode::kNonDistinctAlphas);
}

TEST_CASE("compose_three_channel matches per-channel quantized enhance and is deterministic") {
  const ImagePlaneSpec plane = Plane(32, 32);
  const auto cloud = RandomCloud(2000, 0.8, 31);
  const ThreeChannelParams params;
  std::size_t dropped = 99;
  const RgbImage img = ComposeThreeChannel(cloud, plane, params, &dropped);
  CHECK(dropped == RasterizeGray(cloud, plane).dropped);
  CHECK(img == ComposeThreeChannel(cloud, plane, params));
  for (int ch = 0; ch < 3; ++ch) {
    const auto q = QuantizeByMax(EnhanceGray(cloud, plane, {params.alphas[ch], 4.0, PowerMode::kUnit}).grid);
    int distinct_max = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      CHECK(img.pixels[i * 3 + ch] == q[i]);
      distinct_max = std::max<int>(distinct_max, q[i]);
    }
    CHECK(distinct_max == 255);
  }
}

TEST_CASE("quantize_by_max maps the peak to 255 and keeps zeros") {
  GrayGrid g{Plane(2, 2), {0.0, 1.0, 2.0, 4.0}};
  CHECK(QuantizeByMax(g) == std::vector<std::uint8_t>{0, 64, 128, 255});
  GrayGrid z{Plane(2, 2), {0.0, 0.0, 0.0, 0.0}};
  CHECK(QuantizeByMax(z) == std::vector<std::uint8_t>{0, 0, 0, 0});
  const RgbImage rgb = GrayToRgb(g);
  CHECK(rgb.at(1, 1, 0) == 255);
  CHECK(rgb.at(1, 1, 1) == 255);
  CHECK(rgb.at(0, 1, 2) == 64);
}

TEST_CASE("upscale examples") {
  RgbImage src(32, 32);
  CounterRng rng(6);
  for (auto& p : src.pixels) p = static_cast<std::uint8_t>(rng.Below(256));
  CHECK(Upscale(src, 1) == src);

  const RgbImage big = Upscale(src, 7);
  CHECK(big.width == 224);
  CHECK(big.height == 224);
  for (int r = 0; r < 224; ++r) {
    for (int c = 0; c < 224; ++c) {
      for (int ch = 0; ch < 3; ++ch) REQUIRE(big.at(r, c, ch) == src.at(r / 7, c / 7, ch));
    }
  }

  RgbImage checker(2, 2);
  for (int ch = 0; ch < 3; ++ch) {
    checker.at(0, 0, ch) = 255;
    checker.at(1, 1, ch) = 255;
  }
  const RgbImage up = Upscale(checker, 2);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) CHECK(up.at(r, c, 0) == (((r / 2) + (c / 2)) % 2 == 0 ? 255 : 0));
  }

  std::map<int, int> h_src;
  std::map<int, int> h_big;
  for (std::size_t i = 0; i < src.pixels.size(); i += 3) ++h_src[src.pixels[i]];
  for (std::size_t i = 0; i < big.pixels.size(); i += 3) ++h_big[big.pixels[i]];
  for (auto [v, n] : h_src) CHECK(h_big[v] == 49 * n);

  CHECK_AMC_ERROR(Upscale(src, 0), ErrorCode::kInvalidSpec);
}
