#pragma once

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "siie/image.hpp"

namespace siie {

enum class BaselineMethod {
	GrayWorld,
	WhitePatch,
	ShadesOfGray,
	GrayEdge1,
	GrayEdge2,
};

std::string_view baselineName(BaselineMethod method);
std::optional<BaselineMethod> parseBaselineMethod(std::string_view name);
std::vector<std::string> baselineNames();

struct BaselineConfig {
	BaselineMethod method = BaselineMethod::GrayWorld;
	/* Minkowski norm; infinity selects the maximum. */
	double minkowskiP = 4.0;
	/* Gaussian pre-smoothing for the gray-edge methods, in pixels. */
	double sigma = 2.0;

	/* Literature defaults: SoG p=4, gray-edge p=5 with sigma=2. */
	static BaselineConfig defaults(BaselineMethod method);
	void validate() const;
};

/*
 * Statistical illuminant estimate over the unmasked pixels, normalised to
 * unit length. Throws InvalidInput if every pixel is masked.
 */
Vec3 estimateBaseline(const RawImage &image, const BaselineConfig &config);

} // namespace siie
