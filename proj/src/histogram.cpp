#include "siie/histogram.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <random>

#include "siie/errors.hpp"
#include "siie/gradcheck.hpp"

namespace siie {

namespace {

/* Numerator channel, u denominator, v denominator for each layer. */
constexpr std::array<std::array<int, 3>, 3> kLayerChannels{{
	{0, 1, 2},
	{1, 0, 2},
	{2, 0, 1},
}};

} // namespace

std::vector<double> HistogramConfig::grid() const
{
	std::vector<double> g(bins);
	const double step = (hi - lo) / static_cast<double>(bins - 1);
	for (std::size_t i = 0; i < bins; ++i)
		g[i] = lo + step * static_cast<double>(i);
	return g;
}

void HistogramConfig::validate() const
{
	if (bins < 2)
		throw InvalidArgument("histogram: bins must be >= 2");
	if (!(hi > lo))
		throw InvalidArgument("histogram: grid range must be increasing");
	if (!(eps >= 0.0) || !(pixelFloor > 0.0))
		throw InvalidArgument("histogram: eps must be >= 0 and pixel floor > 0");
	if (!(initScale > 0.0) || !(initFalloff > 0.0))
		throw InvalidArgument("histogram: initial scale and falloff must be positive");
}

HistogramParams::HistogramParams(const HistogramConfig &cfg)
	: config(cfg),
	  logScale("hist.log_scale", Tensor::full({3}, std::log(cfg.initScale))),
	  logFalloff("hist.log_falloff", Tensor::full({3}, std::log(cfg.initFalloff)))
{
	cfg.validate();
}

Tensor HistogramParams::scale() const { return exp(logScale.tensor); }
Tensor HistogramParams::falloff() const { return exp(logFalloff.tensor); }

PixelSet makePixelSet(std::span<const float> rgb, std::span<const std::uint8_t> mask,
		      bool collapse)
{
	if (rgb.size() % 3 != 0)
		throw InvalidArgument("pixel buffer length is not a multiple of 3");
	const std::size_t n = rgb.size() / 3;
	if (!mask.empty() && mask.size() != n)
		throw InvalidArgument("mask size does not match pixel count");

	std::vector<std::array<float, 3>> colors;
	std::vector<double> weights;
	if (collapse) {
		std::map<std::array<float, 3>, double> counts;
		for (std::size_t i = 0; i < n; ++i)
			if (mask.empty() || !mask[i])
				counts[{rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]}] += 1.0;
		for (const auto &[c, w] : counts) {
			colors.push_back(c);
			weights.push_back(w);
		}
	} else {
		for (std::size_t i = 0; i < n; ++i)
			if (mask.empty() || !mask[i]) {
				colors.push_back({rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]});
				weights.push_back(1.0);
			}
	}
	if (colors.empty())
		throw InvalidInput("no unmasked pixels");

	const std::size_t k = colors.size();
	std::vector<double> data(3 * k);
	for (std::size_t i = 0; i < k; ++i)
		for (std::size_t c = 0; c < 3; ++c)
			data[c * k + i] = colors[i][c];
	return {Tensor::fromData({3, k}, std::move(data)), std::move(weights)};
}

Tensor computeHistogram(const Tensor &pixels, std::span<const double> weights,
			const Tensor &scale, const Tensor &falloff,
			const HistogramConfig &cfg)
{
	cfg.validate();
	if (pixels.ndim() != 2 || pixels.dim(0) != 3)
		throw InvalidArgument("histogram: pixels must have shape (3,n), got " +
				      shape_str(pixels.shape()));
	if (scale.numel() != 3 || falloff.numel() != 3)
		throw InvalidArgument("histogram: scale and falloff must have 3 entries");
	const std::size_t n = pixels.dim(1);
	if (!weights.empty() && weights.size() != n)
		throw InvalidArgument("histogram: weight count does not match pixels");

	auto px = pixels.data();
	for (std::size_t i = 0; i < 3 * n; ++i)
		if (!std::isfinite(px[i]) || px[i] < 0.0)
			throw InvalidInput("histogram: invalid value at pixel " +
					   std::to_string(i % n));
	for (std::size_t c = 0; c < 3; ++c)
		if (!(falloff.at(c) > 0.0) || !(scale.at(c) >= 0.0))
			throw InvalidArgument("histogram: falloff must be > 0 and scale >= 0");

	const std::size_t m = cfg.bins;
	const std::vector<double> grid = cfg.grid();

	/* Per-pixel intensity weight w_i * |I_i|, and floored channels. */
	std::vector<double> wy(n), floored(3 * n);
	for (std::size_t i = 0; i < n; ++i) {
		const double r = px[i], g = px[n + i], b = px[2 * n + i];
		const double w = weights.empty() ? 1.0 : weights[i];
		wy[i] = w * std::sqrt(r * r + g * g + b * b);
		for (std::size_t c = 0; c < 3; ++c)
			floored[c * n + i] = std::max(px[c * n + i], cfg.pixelFloor);
	}

	/* Log-chroma coordinates per layer. */
	std::vector<double> uCoord(3 * n), vCoord(3 * n);
	for (std::size_t c = 0; c < 3; ++c) {
		const auto [num, du, dv] = kLayerChannels[c];
		for (std::size_t i = 0; i < n; ++i) {
			const double x = floored[num * n + i];
			uCoord[c * n + i] = std::log(x / floored[du * n + i] + cfg.eps);
			vCoord[c * n + i] = std::log(x / floored[dv * n + i] + cfg.eps);
		}
	}

	/* Unscaled sums T(c,u,v); S = s_c * T and H = sqrt(S). */
	std::vector<double> totals(3 * m * m, 0.0);
	std::vector<double> ku(m), kv(m);
	for (std::size_t c = 0; c < 3; ++c) {
		const double inv = 1.0 / (falloff.at(c) * falloff.at(c));
		double *t = &totals[c * m * m];
		for (std::size_t i = 0; i < n; ++i) {
			if (wy[i] == 0.0)
				continue;
			const double u = uCoord[c * n + i], v = vCoord[c * n + i];
			for (std::size_t j = 0; j < m; ++j) {
				ku[j] = std::exp(-std::fabs(u - grid[j]) * inv);
				kv[j] = std::exp(-std::fabs(v - grid[j]) * inv);
			}
			for (std::size_t a = 0; a < m; ++a) {
				const double f = wy[i] * ku[a];
				double *row = t + a * m;
				for (std::size_t b = 0; b < m; ++b)
					row[b] += f * kv[b];
			}
		}
	}

	std::vector<double> out(3 * m * m);
	for (std::size_t c = 0; c < 3; ++c)
		for (std::size_t j = 0; j < m * m; ++j)
			out[c * m * m + j] = std::sqrt(scale.at(c) * totals[c * m * m + j]);

	std::vector<double> hist = out;
	std::vector<double> w(weights.begin(), weights.end());
	return Tensor::makeResult(
		{3, m, m}, std::move(out), {pixels, scale, falloff}, "rgb_uv_histogram",
		[pixels, scale, falloff, cfg, n, m, grid, w = std::move(w),
		 wy = std::move(wy), floored = std::move(floored), uCoord = std::move(uCoord),
		 vCoord = std::move(vCoord), totals = std::move(totals),
		 hist = std::move(hist)](std::span<const double> gH) mutable {
			std::vector<double> gS(3 * m * m);
			for (std::size_t j = 0; j < gS.size(); ++j)
				gS[j] = hist[j] > 0.0 ? gH[j] / (2.0 * hist[j]) : 0.0;

			if (scale.requiresGrad()) {
				auto gs = scale.gradBuffer();
				for (std::size_t c = 0; c < 3; ++c) {
					double acc = 0.0;
					for (std::size_t j = 0; j < m * m; ++j)
						acc += gS[c * m * m + j] * totals[c * m * m + j];
					gs[c] += acc;
				}
			}
			if (!falloff.requiresGrad() && !pixels.requiresGrad())
				return;

			/* Per-layer adjoints of the log-chroma coordinates and intensity. */
			std::vector<double> gU(3 * n, 0.0), gV(3 * n, 0.0), gWy(n, 0.0);
			double gSigma[3] = {0.0, 0.0, 0.0};
			std::vector<double> ku(m), kv(m), gb(m), ga(m);
			for (std::size_t c = 0; c < 3; ++c) {
				const double sig = falloff.at(c);
				const double inv = 1.0 / (sig * sig);
				const double s = scale.at(c);
				const double *G = &gS[c * m * m];
				for (std::size_t i = 0; i < n; ++i) {
					if (wy[i] == 0.0)
						continue;
					const double u = uCoord[c * n + i], v = vCoord[c * n + i];
					for (std::size_t j = 0; j < m; ++j) {
						ku[j] = std::exp(-std::fabs(u - grid[j]) * inv);
						kv[j] = std::exp(-std::fabs(v - grid[j]) * inv);
					}
					/* gb[a] = sum_b G[a][b] kv[b], ga[b] = sum_a G[a][b] ku[a] */
					std::fill(ga.begin(), ga.end(), 0.0);
					for (std::size_t a = 0; a < m; ++a) {
						const double *row = G + a * m;
						double acc = 0.0;
						for (std::size_t b = 0; b < m; ++b) {
							acc += row[b] * kv[b];
							ga[b] += row[b] * ku[a];
						}
						gb[a] = acc;
					}
					double q = 0.0, du = 0.0, dv = 0.0, dsu = 0.0, dsv = 0.0;
					for (std::size_t j = 0; j < m; ++j) {
						const double eu = u - grid[j], ev = v - grid[j];
						const double tu = gb[j] * ku[j], tv = ga[j] * kv[j];
						q += tu;
						du -= tu * (eu > 0.0 ? 1.0 : (eu < 0.0 ? -1.0 : 0.0));
						dv -= tv * (ev > 0.0 ? 1.0 : (ev < 0.0 ? -1.0 : 0.0));
						dsu += tu * std::fabs(eu);
						dsv += tv * std::fabs(ev);
					}
					const double f = s * wy[i];
					gWy[i] += s * q;
					gU[c * n + i] += f * du * inv;
					gV[c * n + i] += f * dv * inv;
					gSigma[c] += f * (dsu + dsv) * 2.0 * inv / sig;
				}
			}

			if (falloff.requiresGrad()) {
				auto gf = falloff.gradBuffer();
				for (std::size_t c = 0; c < 3; ++c)
					gf[c] += gSigma[c];
			}
			if (!pixels.requiresGrad())
				return;

			auto px = pixels.data();
			auto gp = pixels.gradBuffer();
			std::vector<double> gFloored(3 * n, 0.0);
			for (std::size_t c = 0; c < 3; ++c) {
				const auto [num, du, dv] = kLayerChannels[c];
				for (std::size_t i = 0; i < n; ++i) {
					const double x = floored[num * n + i];
					const double yu = floored[du * n + i];
					const double yv = floored[dv * n + i];
					/* d log(x/y + eps) = (dx/y - x dy/y^2) / (x/y + eps) */
					const double au = gU[c * n + i] / (x / yu + cfg.eps);
					const double av = gV[c * n + i] / (x / yv + cfg.eps);
					gFloored[num * n + i] += au / yu + av / yv;
					gFloored[du * n + i] -= au * x / (yu * yu);
					gFloored[dv * n + i] -= av * x / (yv * yv);
				}
			}
			for (std::size_t i = 0; i < n; ++i) {
				const double r = px[i], g = px[n + i], b = px[2 * n + i];
				const double y = std::sqrt(r * r + g * g + b * b);
				const double wi = w.empty() ? 1.0 : w[i];
				for (std::size_t c = 0; c < 3; ++c) {
					const double xc = px[c * n + i];
					double grad = 0.0;
					if (xc > cfg.pixelFloor)
						grad += gFloored[c * n + i];
					if (y > 0.0)
						grad += gWy[i] * wi * xc / y;
					gp[c * n + i] += grad;
				}
			}
		});
}

Tensor computeHistogram(const PixelSet &pixels, const HistogramParams &params)
{
	return computeHistogram(pixels.colors, pixels.weights, params.scale(),
				params.falloff(), params.config);
}

double HistogramGradReport::max() const
{
	return std::max({scale, falloff, image});
}

HistogramGradReport histogramGradcheck(const HistogramConfig &cfg,
				       std::span<const double> scale,
				       std::span<const double> falloff,
				       const Tensor &pixels, double step)
{
	if (pixels.ndim() != 2 || pixels.dim(0) != 3)
		throw InvalidArgument("gradcheck: pixels must be (3,n)");
	Tensor s = Tensor::fromData({3}, {scale.begin(), scale.end()}, true);
	Tensor f = Tensor::fromData({3}, {falloff.begin(), falloff.end()}, true);
	Tensor p = Tensor::fromData(pixels.shape(), {pixels.data().begin(), pixels.data().end()},
				    true);

	/* Fixed random projection turns H into a scalar. */
	const std::size_t m = cfg.bins;
	std::mt19937_64 rng(1234);
	std::uniform_real_distribution<double> dist(-1.0, 1.0);
	std::vector<double> proj(3 * m * m);
	for (double &v : proj)
		v = dist(rng);
	Tensor projection = Tensor::fromData({3, m, m}, proj);

	auto loss = [&] {
		return dot(computeHistogram(p, {}, s, f, cfg), projection);
	};
	GradCheckOptions opt;
	opt.step = step;
	auto one = [&](Tensor t) {
		return checkGradients(loss, {t}, opt).maxRelError;
	};
	HistogramGradReport report;
	report.scale = one(s);
	report.falloff = one(f);
	report.image = one(p);
	return report;
}

void writeHistogramCsv(std::ostream &os, const Tensor &histogram,
		       const HistogramConfig &cfg)
{
	const std::size_t m = cfg.bins;
	if (histogram.shape() != Shape{3, m, m})
		throw InvalidArgument("histogram shape does not match config");
	const auto grid = cfg.grid();
	auto h = histogram.data();
	os << "u,v,c,value\n";
	os << std::setprecision(std::numeric_limits<double>::max_digits10);
	for (std::size_t c = 0; c < 3; ++c)
		for (std::size_t a = 0; a < m; ++a)
			for (std::size_t b = 0; b < m; ++b)
				os << grid[a] << ',' << grid[b] << ',' << c + 1 << ','
				   << h[(c * m + a) * m + b] << '\n';
}

} // namespace siie
