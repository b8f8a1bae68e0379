#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "siie/dataio.hpp"
#include "siie/image.hpp"

namespace siie {

/*
 * Multi-sensor synthetic dataset. Each scene is a Voronoi mosaic of 8-64
 * reflectance patches in [0.05, 0.95]^3 lit by one illuminant, rendered in
 * a canonical space and then observed by every sensor k through a positive
 * 3x3 matrix A_k (condition number <= 5): I_k = A_k I, l_k = A_k l.
 */
struct SynthConfig {
	std::size_t scenes = 100;
	std::size_t sensors = 5;
	std::uint64_t seed = 0;
	std::size_t width = 64;
	std::size_t height = 64;
	/* Overrides the random sensor matrices when non-empty. */
	std::vector<Mat3> sensorMatrices;

	void validate() const;
};

struct SynthDataset {
	/* Scene-major: image index = scene * sensors + sensor. */
	std::vector<RawImage> images;
	std::vector<Mat3> sensors;
	/* Per scene, unit norm, canonical space. */
	std::vector<Vec3> canonicalIlluminants;

	std::size_t sceneOf(std::size_t image) const { return image / sensors.size(); }
	std::size_t sensorOf(std::size_t image) const { return image % sensors.size(); }
};

std::string synthCameraId(std::size_t sensor);

/* Random positive matrix with condition number <= 5. */
Mat3 randomSensorMatrix(std::uint64_t seed);
double conditionNumber(const Mat3 &m);

SynthDataset synthGenerate(const SynthConfig &config);

/*
 * Writes synth_k/scene_NNNNNN.rawf files, manifest.csv and sensors.json
 * under dir and returns the manifest.
 */
DatasetManifest synthWrite(const SynthDataset &data, const std::filesystem::path &dir);

} // namespace siie
