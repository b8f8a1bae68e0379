#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "siie/optim.hpp"
#include "siie/tensor.hpp"

namespace siie {

struct HistogramConfig {
	std::size_t bins = 61;
	/* Bin centres are uniformly spaced on [lo, hi] on both axes. */
	double lo = -3.0;
	double hi = 3.0;
	/* Added to each chroma ratio inside the log. */
	double eps = 1e-6;
	/* Channels are clamped to at least this value before division. */
	double pixelFloor = 1e-9;
	double initScale = 1.0;
	double initFalloff = 0.25;

	std::vector<double> grid() const;
	void validate() const;
};

/*
 * Learnable state of the RGB-uv histogram block. Scale s_c and fall-off
 * sigma_c are stored as logarithms so both stay strictly positive.
 */
struct HistogramParams {
	HistogramConfig config;
	Parameter logScale;
	Parameter logFalloff;

	HistogramParams() = default;
	explicit HistogramParams(const HistogramConfig &config);

	Tensor scale() const;
	Tensor falloff() const;
};

/*
 * Pixels as a (3,n) tensor (rows R, G, B) with an optional multiplicity per
 * column. Identical colours can be collapsed into one weighted column
 * without changing any histogram value.
 */
struct PixelSet {
	Tensor colors;
	std::vector<double> weights;

	std::size_t size() const { return colors.defined() ? colors.dim(1) : 0; }
};

/*
 * Builds a PixelSet from interleaved RGB values, dropping pixels whose mask
 * entry is nonzero. With collapse set, duplicate colours are merged and
 * columns are sorted, which makes the result independent of pixel order.
 */
PixelSet makePixelSet(std::span<const float> rgb, std::span<const std::uint8_t> mask,
		      bool collapse = true);

struct RgbUvHistogram {
	/* (3, m, m): layer, u bin, v bin. */
	Tensor values;
	std::string source;
};

/*
 * Differentiable three-layer RGB-uv histogram:
 *
 *   H(u,v,c) = sqrt( s_c * sum_i w_i |I_i| k(I_uc(i) - u) k(I_vc(i) - v) )
 *   k(d)     = exp(-|d| / sigma_c^2)
 *
 * where layer c takes log-ratios of channel c against the two others.
 * Gradients flow to pixels, scale and falloff.
 */
Tensor computeHistogram(const Tensor &pixels, std::span<const double> weights,
			const Tensor &scale, const Tensor &falloff,
			const HistogramConfig &config);

Tensor computeHistogram(const PixelSet &pixels, const HistogramParams &params);

struct HistogramGradReport {
	double scale = 0.0;
	double falloff = 0.0;
	double image = 0.0;

	double max() const;
};

/*
 * Maximum relative deviation between autograd and central differences of
 * a fixed random projection of H, per argument group.
 */
HistogramGradReport histogramGradcheck(const HistogramConfig &config,
				       std::span<const double> scale,
				       std::span<const double> falloff,
				       const Tensor &pixels, double step = 1e-4);

/* One row per bin: u,v,c,value with c in 1..3. */
void writeHistogramCsv(std::ostream &os, const Tensor &histogram,
		       const HistogramConfig &config);

} // namespace siie
