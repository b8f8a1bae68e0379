#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "siie/image.hpp"

namespace siie {

inline constexpr const char *kManifestHeader = "image_path,camera_id,gt_r,gt_g,gt_b,mask_path";

/* Pixels with any channel at or above this value join the mask. */
inline constexpr float kSaturationLevel = 0.98f;

struct ManifestEntry {
	std::string imagePath;
	std::string cameraId;
	/* Unit norm, every component > 0. */
	Vec3 gt{};
	std::string maskPath;
};

struct DatasetManifest {
	std::filesystem::path root;
	std::vector<ManifestEntry> entries;

	/* Sorted distinct camera ids. */
	std::vector<std::string> cameras() const;
	std::filesystem::path resolve(const std::string &relative) const;
};

/* Splits one CSV record; double quotes escape commas and quotes. */
std::vector<std::string> splitCsvLine(const std::string &line, std::size_t lineNo);
/* Quotes a field when it contains a comma, quote or newline. */
std::string csvField(const std::string &s);

/* Relative paths in the result resolve against the manifest's directory. */
DatasetManifest loadManifest(const std::filesystem::path &path);
DatasetManifest parseManifest(std::istream &in, const std::filesystem::path &root);
void writeManifest(const std::filesystem::path &path, const DatasetManifest &manifest);

/*
 * Reads a "RAWF" float32 file or a 16-bit RGB PNG, dispatching on the file
 * signature. Values are scaled to [0,1] by the container's maximum code.
 */
RawImage readImageFile(const std::filesystem::path &path);
/* 8-bit PNG, nonzero = masked. */
std::vector<std::uint8_t> readMaskFile(const std::filesystem::path &path,
				       std::size_t &width, std::size_t &height);

void writeRawFloat(const std::filesystem::path &path, const RawImage &image);
void writePng16(const std::filesystem::path &path, const RawImage &image);
void writeMaskPng(const std::filesystem::path &path, std::span<const std::uint8_t> mask,
		  std::size_t width, std::size_t height);

/*
 * Box (area-average) resampling on linear values; partially covered
 * source pixels contribute by their overlap.
 */
std::vector<float> areaResize(std::span<const float> rgb, std::size_t width,
			      std::size_t height, std::size_t newWidth, std::size_t newHeight);
/* An output pixel is masked if any overlapping source pixel is. */
std::vector<std::uint8_t> maskResize(std::span<const std::uint8_t> mask, std::size_t width,
				     std::size_t height, std::size_t newWidth,
				     std::size_t newHeight);

/* Downsamples to the 150x150 thumbnail when either side is larger. */
RawImage toThumbnail(RawImage image);
void maskSaturated(RawImage &image, float level = kSaturationLevel);

/* Full load: file, optional mask, saturation masking, thumbnail resize. */
RawImage loadImage(const DatasetManifest &manifest, const ManifestEntry &entry);
std::vector<RawImage> loadImages(const DatasetManifest &manifest,
				 std::span<const std::size_t> indices);

struct FoldPlan {
	std::string testCamera;
	std::vector<std::size_t> trainIds;
	std::vector<std::size_t> testIds;
};

/* One leave-one-camera-out fold per distinct camera, ordered by camera id. */
std::vector<FoldPlan> makeFolds(const DatasetManifest &manifest);

/* Test on every entry whose camera is listed, train on the rest. */
FoldPlan makeExclusionPlan(const DatasetManifest &manifest,
			   std::span<const std::string> testCameras);

} // namespace siie
