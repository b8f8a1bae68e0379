#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "siie/image.hpp"
#include "siie/tensor.hpp"

namespace siie {

/* Angle between two illuminant vectors, in degrees. */
double recoveryAngularError(const Vec3 &gt, const Vec3 &estimate);

/*
 * Angle in degrees between gt / estimate (componentwise) and the
 * achromatic axis. Every estimate component must be strictly positive.
 */
double reproductionAngularError(const Vec3 &gt, const Vec3 &estimate);

/*
 * Differentiable recovery angular error in radians, used as the training
 * loss. The arccos argument is clamped to [-1 + 1e-7, 1 - 1e-7].
 */
Tensor angularLoss(const Tensor &gt, const Tensor &estimate);

struct ErrorStats {
	std::size_t n = 0;
	double mean = 0.0;
	double median = 0.0;
	double best25 = 0.0;
	double worst25 = 0.0;
};

/*
 * median: lower-middle element of the sorted errors for even n.
 * best25 / worst25: mean of the ceil(n/4) smallest / largest errors.
 */
ErrorStats aggregate(std::span<const double> errors);

/* camera_id,n,mean,median,best25,worst25,metric_name */
inline constexpr const char *kStatsCsvHeader =
	"camera_id,n,mean,median,best25,worst25,metric_name";

void writeStatsRow(std::ostream &os, const std::string &cameraId, const ErrorStats &stats,
		   const std::string &metric);

/* Shortest decimal representation that parses back to the same double. */
std::string formatDouble(double v);

} // namespace siie
