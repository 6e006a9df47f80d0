#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "amc/imaging.hpp"

namespace amc {

/// Lossless 8-bit RGB PNG with fixed encoder settings: equal images give
/// equal bytes. Throws Error(kEncodingFailure).
std::vector<std::uint8_t> EncodePng(const RgbImage& image);

/// Any PNG libpng understands, converted to 8-bit RGB.
/// Throws Error(kEncodingFailure) for undecodable input.
RgbImage DecodePng(std::span<const std::uint8_t> bytes);

/// File helpers; I/O failures throw Error(kIoError).
void WritePng(const std::filesystem::path& path, const RgbImage& image);
RgbImage ReadPng(const std::filesystem::path& path);

std::vector<std::uint8_t> ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace amc
