#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siie/histogram.hpp"
#include "siie/image.hpp"
#include "siie/optim.hpp"
#include "siie/tensor.hpp"

namespace siie {

struct ConvLayerSpec {
	std::size_t kernel = 3;
	std::size_t outChannels = 8;
	std::size_t stride = 1;
	std::size_t padding = 0;
};

/* Three conv/ReLU layers followed by one fully connected layer. */
struct NetworkConfig {
	std::vector<ConvLayerSpec> conv;

	/* 5x5/64/s2/p2, 3x3/128/s2/p1, 3x3/256/s2/p1 */
	static NetworkConfig standard();
	/* Same geometry with the given channel widths. */
	static NetworkConfig withChannels(std::size_t c1, std::size_t c2, std::size_t c3);

	/* Spatial size after the conv stack for an m x m input. */
	std::size_t outputSize(std::size_t inputSize) const;
	std::size_t flattenedSize(std::size_t inputSize) const;
	void validate(std::size_t inputSize) const;
};

class ConvNet
{
public:
	ConvNet() = default;
	ConvNet(const NetworkConfig &config, std::size_t inputSize, std::size_t outputs,
		const std::string &prefix, std::uint64_t seed);

	/* (3, m, m) histogram -> (outputs) */
	Tensor forward(const Tensor &input) const;

	std::vector<Parameter *> parameters();
	std::vector<const Parameter *> parameters() const;

private:
	NetworkConfig config_;
	std::vector<Parameter> weights_;
	std::vector<Parameter> biases_;
	Parameter fcWeight_;
	Parameter fcBias_;
};

struct ModelConfig {
	HistogramConfig histogram;
	NetworkConfig network = NetworkConfig::standard();
	/* Stabiliser in the mapping-matrix normalisation. */
	double matrixEps = 1e-6;
	/* |det| below this counts as singular. */
	double singularThreshold = 1e-9;
	int jitterRetries = 5;
	double jitterScale = 1e-4;
};

class Model
{
public:
	Model() = default;
	Model(const ModelConfig &config, std::uint64_t seed);

	const ModelConfig &config() const { return config_; }
	const HistogramParams &histogram() const { return histogram_; }
	const ConvNet &mappingNet() const { return mapping_; }
	const ConvNet &illuminantNet() const { return illuminant_; }

	/* Stable order: histogram, mapping net, illuminant net. */
	std::vector<Parameter *> parameters();
	std::vector<const Parameter *> parameters() const;
	Parameter *find(std::string_view name);

private:
	ModelConfig config_;
	HistogramParams histogram_;
	ConvNet mapping_;
	ConvNet illuminant_;
};

/*
 * V = reshape(v, 3x3) row-major, M = |V| / (sum|V_ij| + eps).
 * Entries of M are nonnegative and sum to at most 1.
 */
struct MappingMatrix {
	Tensor V;
	Tensor M;
	Tensor inverse;
	bool jittered = false;
};

MappingMatrix buildMappingMatrix(const Tensor &v, double eps);

struct JitterOptions {
	double threshold = 1e-9;
	int retries = 5;
	double scale = 1e-4;
};

struct JitteredInverse {
	Tensor inverse;
	/* The matrix that was actually inverted (M itself or M plus offsets). */
	Tensor inverted;
	bool jittered = false;
	int attempts = 0;
};

/*
 * Inverts M. When |det M| is below the threshold, i.i.d. N(0,1) * scale
 * offsets are added to every entry and the check is repeated up to
 * `retries` times. Gradients flow through the inverse of the matrix that
 * was inverted. Throws SingularMatrixError naming `id` on exhaustion.
 */
JitteredInverse invertWithJitter(const Tensor &M, std::mt19937_64 &rng,
				 const JitterOptions &options, std::string_view id = {});

/* Intermediate quantities of one forward pass, all still on the graph. */
struct ForwardTrace {
	Tensor histogram;
	Tensor mappingOutput;
	MappingMatrix mapping;
	Tensor mappedHistogram;
	/* Illuminant in the working space. */
	Tensor working;
	/* M^-1 * working, not normalised. */
	Tensor sensor;
	/* sensor / |sensor| */
	Tensor estimate;
};

ForwardTrace forwardPass(const Model &model, const PixelSet &pixels,
			 std::mt19937_64 &rng, std::string_view id = {});

/* Continues a forward pass from a given mapping-net output v. */
ForwardTrace forwardFromMapping(const Model &model, const PixelSet &pixels,
				const Tensor &v, std::mt19937_64 &rng,
				std::string_view id = {});

struct IlluminantEstimate {
	/* Working-space illuminant as produced by the estimation net. */
	Vec3 working{};
	/* Sensor-space illuminant, unit Euclidean norm. */
	Vec3 sensor{};
	Mat3 matrix{};
	bool jittered = false;
};

/* Seed of the jitter generator used at inference time. */
inline constexpr std::uint64_t kInferenceJitterSeed = 0x51ee5eedULL;

PixelSet pixelSetFor(const RawImage &image);

/* Pure function of (image, model parameters). */
IlluminantEstimate predict(const Model &model, const RawImage &image);

struct BatchItem {
	std::optional<IlluminantEstimate> estimate;
	std::string error;
};

/*
 * Runs predict over every image; failures are recorded per item. Results
 * do not depend on the thread count.
 */
std::vector<BatchItem> predictBatch(const Model &model, std::span<const RawImage> images,
				    unsigned threads = 1);

} // namespace siie
