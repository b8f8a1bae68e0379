#include "siie/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include "siie/errors.hpp"

namespace siie {

namespace {

double norm3(const Vec3 &v)
{
	return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

/*
 * atan2(|a x b|, a.b) agrees with arccos of the normalised dot product but
 * stays accurate for nearly parallel vectors.
 */
double angleDegrees(const Vec3 &a, const Vec3 &b)
{
	const double cx = a[1] * b[2] - a[2] * b[1];
	const double cy = a[2] * b[0] - a[0] * b[2];
	const double cz = a[0] * b[1] - a[1] * b[0];
	const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
	const double dotp = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
	return std::atan2(cross, dotp) * 180.0 / std::numbers::pi;
}

} // namespace

double recoveryAngularError(const Vec3 &gt, const Vec3 &estimate)
{
	for (double v : gt)
		if (!std::isfinite(v))
			throw InvalidInput("angular error: non-finite ground truth");
	for (double v : estimate)
		if (!std::isfinite(v))
			throw InvalidInput("angular error: non-finite estimate");
	if (norm3(gt) == 0.0 || norm3(estimate) == 0.0)
		throw InvalidInput("angular error: zero-norm vector");
	return angleDegrees(gt, estimate);
}

double reproductionAngularError(const Vec3 &gt, const Vec3 &estimate)
{
	if (norm3(gt) == 0.0)
		throw InvalidInput("reproduction error: zero-norm ground truth");
	Vec3 ratio{};
	for (std::size_t c = 0; c < 3; ++c) {
		if (!(estimate[c] > 0.0))
			throw InvalidInput("reproduction error: estimate component " +
					   std::to_string(c) + " is not positive");
		ratio[c] = gt[c] / estimate[c];
	}
	return angleDegrees(ratio, {1.0, 1.0, 1.0});
}

Tensor angularLoss(const Tensor &gt, const Tensor &estimate)
{
	Tensor cosine = div(dot(gt, estimate), mul(norm(gt), norm(estimate)));
	return acos(cosine);
}

ErrorStats aggregate(std::span<const double> errors)
{
	if (errors.empty())
		throw InvalidInput("aggregate: empty error list");
	std::vector<double> sorted(errors.begin(), errors.end());
	std::sort(sorted.begin(), sorted.end());
	const std::size_t n = sorted.size();
	const std::size_t tail = (n + 3) / 4;

	auto meanOf = [](auto first, auto last) {
		return std::accumulate(first, last, 0.0) / static_cast<double>(last - first);
	};
	ErrorStats s;
	s.n = n;
	s.mean = meanOf(sorted.begin(), sorted.end());
	s.median = sorted[(n - 1) / 2];
	s.best25 = meanOf(sorted.begin(), sorted.begin() + tail);
	s.worst25 = meanOf(sorted.end() - tail, sorted.end());
	return s;
}

std::string formatDouble(double v)
{
	char buf[64];
	auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
	return std::string(buf, end);
}

void writeStatsRow(std::ostream &os, const std::string &cameraId, const ErrorStats &s,
		   const std::string &metric)
{
	os << cameraId << ',' << s.n << ',' << formatDouble(s.mean) << ','
	   << formatDouble(s.median) << ',' << formatDouble(s.best25) << ','
	   << formatDouble(s.worst25) << ',' << metric << '\n';
}

} // namespace siie
