#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace siie {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;

inline constexpr std::size_t kThumbnailSize = 150;

/*
 * Linear raw-RGB thumbnail. Pixels are interleaved RGB, row-major, in
 * [0,1]. A nonzero mask entry excludes the pixel (calibration chart,
 * saturation). An empty mask means nothing is excluded.
 */
struct RawImage {
	std::size_t width = 0;
	std::size_t height = 0;
	std::vector<float> rgb;
	std::vector<std::uint8_t> mask;
	std::string path;
	std::string cameraId;
	Vec3 gt{0.0, 0.0, 0.0};

	std::size_t pixelCount() const { return width * height; }
	bool masked(std::size_t i) const { return !mask.empty() && mask[i] != 0; }
	float at(std::size_t x, std::size_t y, std::size_t c) const
	{
		return rgb[(y * width + x) * 3 + c];
	}
	/* Throws InvalidInput when buffers and dimensions disagree. */
	void validate() const;
};

} // namespace siie
