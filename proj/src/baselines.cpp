#include "siie/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "siie/errors.hpp"

namespace siie {

namespace {

constexpr std::array<std::pair<BaselineMethod, std::string_view>, 5> kNames{{
	{BaselineMethod::GrayWorld, "gray_world"},
	{BaselineMethod::WhitePatch, "white_patch"},
	{BaselineMethod::ShadesOfGray, "shades_of_gray"},
	{BaselineMethod::GrayEdge1, "gray_edge_1"},
	{BaselineMethod::GrayEdge2, "gray_edge_2"},
}};

/* Minkowski p-mean of nonnegative values; p = inf gives the maximum. */
double minkowski(const std::vector<double> &values, double p)
{
	double peak = 0.0;
	for (double v : values)
		peak = std::max(peak, v);
	if (std::isinf(p))
		return peak;
	const double n = static_cast<double>(values.size());
	if (p == 1.0) {
		double acc = 0.0;
		for (double v : values)
			acc += v;
		return acc / n;
	}
	if (peak == 0.0)
		return 0.0;
	/* Scaling by the peak keeps large exponents away from underflow. */
	double acc = 0.0;
	for (double v : values)
		acc += std::pow(v / peak, p);
	return peak * std::pow(acc / n, 1.0 / p);
}

Vec3 normalise(Vec3 v)
{
	const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
	if (!(n > 0.0) || !std::isfinite(n))
		throw InvalidInput("baseline: estimate has zero norm");
	for (double &x : v)
		x /= n;
	return v;
}

using Plane = std::vector<double>;

Plane gaussianSmooth(const Plane &in, std::size_t w, std::size_t h, double sigma)
{
	if (sigma <= 0.0)
		return in;
	const int radius = static_cast<int>(std::ceil(3.0 * sigma));
	std::vector<double> kernel(2 * radius + 1);
	double total = 0.0;
	for (int i = -radius; i <= radius; ++i) {
		kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
		total += kernel[i + radius];
	}
	for (double &k : kernel)
		k /= total;

	auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
	const int W = static_cast<int>(w), H = static_cast<int>(h);
	Plane tmp(in.size()), out(in.size());
	for (int y = 0; y < H; ++y)
		for (int x = 0; x < W; ++x) {
			double acc = 0.0;
			for (int k = -radius; k <= radius; ++k)
				acc += kernel[k + radius] * in[y * W + clampi(x + k, W)];
			tmp[y * W + x] = acc;
		}
	for (int y = 0; y < H; ++y)
		for (int x = 0; x < W; ++x) {
			double acc = 0.0;
			for (int k = -radius; k <= radius; ++k)
				acc += kernel[k + radius] * tmp[clampi(y + k, H) * W + x];
			out[y * W + x] = acc;
		}
	return out;
}

/* Central differences with replicated borders. */
Plane derivX(const Plane &in, std::size_t w, std::size_t h)
{
	Plane out(in.size());
	for (std::size_t y = 0; y < h; ++y)
		for (std::size_t x = 0; x < w; ++x) {
			const std::size_t l = x > 0 ? x - 1 : x, r = x + 1 < w ? x + 1 : x;
			out[y * w + x] = 0.5 * (in[y * w + r] - in[y * w + l]);
		}
	return out;
}

Plane derivY(const Plane &in, std::size_t w, std::size_t h)
{
	Plane out(in.size());
	for (std::size_t y = 0; y < h; ++y)
		for (std::size_t x = 0; x < w; ++x) {
			const std::size_t u = y > 0 ? y - 1 : y, d = y + 1 < h ? y + 1 : y;
			out[y * w + x] = 0.5 * (in[d * w + x] - in[u * w + x]);
		}
	return out;
}

/*
 * Pixels whose filter footprint reaches a masked pixel are excluded too,
 * unless that would exclude everything.
 */
std::vector<bool> edgeSupport(const RawImage &image, int radius)
{
	const std::size_t w = image.width, h = image.height;
	std::vector<bool> keep(w * h, true);
	bool any = false;
	for (std::size_t i = 0; i < w * h; ++i)
		if (image.masked(i))
			keep[i] = false;
	if (image.mask.empty())
		return keep;
	std::vector<bool> dilated = keep;
	for (std::size_t y = 0; y < h; ++y)
		for (std::size_t x = 0; x < w; ++x) {
			if (keep[y * w + x])
				continue;
			const std::size_t y0 = y >= static_cast<std::size_t>(radius) ? y - radius : 0;
			const std::size_t x0 = x >= static_cast<std::size_t>(radius) ? x - radius : 0;
			for (std::size_t yy = y0; yy <= std::min(h - 1, y + radius); ++yy)
				for (std::size_t xx = x0; xx <= std::min(w - 1, x + radius); ++xx)
					dilated[yy * w + xx] = false;
		}
	for (bool k : dilated)
		any = any || k;
	return any ? dilated : keep;
}

Vec3 grayEdge(const RawImage &image, const BaselineConfig &cfg, int order)
{
	const std::size_t w = image.width, h = image.height;
	const int radius = static_cast<int>(std::ceil(3.0 * cfg.sigma)) + order;
	const std::vector<bool> keep = edgeSupport(image, radius);
	Vec3 out{};
	for (std::size_t c = 0; c < 3; ++c) {
		Plane plane(w * h);
		for (std::size_t i = 0; i < w * h; ++i)
			plane[i] = image.masked(i) ? 0.0 : image.rgb[3 * i + c];
		const Plane s = gaussianSmooth(plane, w, h, cfg.sigma);
		const Plane dx = derivX(s, w, h);
		const Plane dy = derivY(s, w, h);
		std::vector<double> magnitudes;
		magnitudes.reserve(w * h);
		if (order == 1) {
			for (std::size_t i = 0; i < w * h; ++i)
				if (keep[i])
					magnitudes.push_back(std::sqrt(dx[i] * dx[i] + dy[i] * dy[i]));
		} else {
			const Plane dxx = derivX(dx, w, h);
			const Plane dyy = derivY(dy, w, h);
			const Plane dxy = derivY(dx, w, h);
			for (std::size_t i = 0; i < w * h; ++i)
				if (keep[i])
					magnitudes.push_back(std::sqrt(dxx[i] * dxx[i] +
								       2.0 * dxy[i] * dxy[i] +
								       dyy[i] * dyy[i]));
		}
		out[c] = minkowski(magnitudes, cfg.minkowskiP);
	}
	return out;
}

} // namespace

std::string_view baselineName(BaselineMethod method)
{
	for (const auto &[m, name] : kNames)
		if (m == method)
			return name;
	return "unknown";
}

std::optional<BaselineMethod> parseBaselineMethod(std::string_view name)
{
	for (const auto &[m, n] : kNames)
		if (n == name)
			return m;
	return std::nullopt;
}

std::vector<std::string> baselineNames()
{
	std::vector<std::string> out;
	for (const auto &entry : kNames)
		out.emplace_back(entry.second);
	return out;
}

BaselineConfig BaselineConfig::defaults(BaselineMethod method)
{
	BaselineConfig cfg;
	cfg.method = method;
	switch (method) {
	case BaselineMethod::GrayWorld:
		cfg.minkowskiP = 1.0;
		break;
	case BaselineMethod::WhitePatch:
		cfg.minkowskiP = std::numeric_limits<double>::infinity();
		break;
	case BaselineMethod::ShadesOfGray:
		cfg.minkowskiP = 4.0;
		break;
	case BaselineMethod::GrayEdge1:
	case BaselineMethod::GrayEdge2:
		cfg.minkowskiP = 5.0;
		cfg.sigma = 2.0;
		break;
	}
	return cfg;
}

void BaselineConfig::validate() const
{
	if (std::isnan(minkowskiP) || minkowskiP < 1.0)
		throw InvalidArgument("baseline: Minkowski p must be >= 1");
	if (!(sigma >= 0.0) || std::isinf(sigma))
		throw InvalidArgument("baseline: sigma must be finite and >= 0");
}

Vec3 estimateBaseline(const RawImage &image, const BaselineConfig &cfg)
{
	cfg.validate();
	image.validate();
	const std::size_t n = image.pixelCount();
	std::size_t unmasked = 0;
	for (std::size_t i = 0; i < n; ++i)
		if (!image.masked(i))
			++unmasked;
	if (unmasked == 0)
		throw InvalidInput("baseline: every pixel of " + image.path + " is masked");

	switch (cfg.method) {
	case BaselineMethod::GrayEdge1:
		return normalise(grayEdge(image, cfg, 1));
	case BaselineMethod::GrayEdge2:
		return normalise(grayEdge(image, cfg, 2));
	default:
		break;
	}

	double p = cfg.minkowskiP;
	if (cfg.method == BaselineMethod::GrayWorld)
		p = 1.0;
	else if (cfg.method == BaselineMethod::WhitePatch)
		p = std::numeric_limits<double>::infinity();

	Vec3 out{};
	std::vector<double> values;
	values.reserve(unmasked);
	for (std::size_t c = 0; c < 3; ++c) {
		values.clear();
		for (std::size_t i = 0; i < n; ++i)
			if (!image.masked(i))
				values.push_back(std::max(0.0, static_cast<double>(image.rgb[3 * i + c])));
		out[c] = minkowski(values, p);
	}
	return normalise(out);
}

} // namespace siie
