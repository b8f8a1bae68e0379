#include "siie/networks.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "siie/errors.hpp"

namespace siie {

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

std::size_t convOut(std::size_t in, const ConvLayerSpec &s)
{
	if (in + 2 * s.padding < s.kernel)
		return 0;
	return (in + 2 * s.padding - s.kernel) / s.stride + 1;
}

} // namespace

NetworkConfig NetworkConfig::standard()
{
	return withChannels(64, 128, 256);
}

NetworkConfig NetworkConfig::withChannels(std::size_t c1, std::size_t c2, std::size_t c3)
{
	return {{{5, c1, 2, 2}, {3, c2, 2, 1}, {3, c3, 2, 1}}};
}

std::size_t NetworkConfig::outputSize(std::size_t inputSize) const
{
	std::size_t s = inputSize;
	for (const auto &layer : conv)
		s = layer.stride ? convOut(s, layer) : 0;
	return s;
}

std::size_t NetworkConfig::flattenedSize(std::size_t inputSize) const
{
	const std::size_t s = outputSize(inputSize);
	return conv.empty() ? 0 : s * s * conv.back().outChannels;
}

void NetworkConfig::validate(std::size_t inputSize) const
{
	if (conv.size() != 3)
		throw InvalidArgument("network: exactly three conv layers are required");
	for (const auto &layer : conv)
		if (layer.kernel == 0 || layer.outChannels == 0 || layer.stride == 0)
			throw InvalidArgument("network: kernel, channels and stride must be positive");
	if (outputSize(inputSize) < 1)
		throw InvalidArgument("network: conv stack reduces the input below 1x1");
}

ConvNet::ConvNet(const NetworkConfig &config, std::size_t inputSize, std::size_t outputs,
		 const std::string &prefix, std::uint64_t seed)
	: config_(config)
{
	config.validate(inputSize);
	std::size_t in = 3;
	std::uint64_t s = seed;
	for (std::size_t i = 0; i < config.conv.size(); ++i) {
		const auto &layer = config.conv[i];
		const std::string name = prefix + ".conv" + std::to_string(i + 1);
		s = splitmix(s);
		weights_.emplace_back(name + ".weight",
				      xavierInit({layer.outChannels, in, layer.kernel, layer.kernel}, s));
		biases_.emplace_back(name + ".bias", Tensor::zeros({layer.outChannels}));
		in = layer.outChannels;
	}
	s = splitmix(s);
	fcWeight_ = Parameter(prefix + ".fc.weight",
			      xavierInit({outputs, config.flattenedSize(inputSize)}, s));
	fcBias_ = Parameter(prefix + ".fc.bias", Tensor::zeros({outputs}));
}

Tensor ConvNet::forward(const Tensor &input) const
{
	Tensor x = input;
	for (std::size_t i = 0; i < weights_.size(); ++i) {
		const auto &layer = config_.conv[i];
		x = relu(conv2d(x, weights_[i].tensor, biases_[i].tensor,
				{layer.stride, layer.padding}));
	}
	return linear(x, fcWeight_.tensor, fcBias_.tensor);
}

std::vector<Parameter *> ConvNet::parameters()
{
	std::vector<Parameter *> out;
	for (std::size_t i = 0; i < weights_.size(); ++i) {
		out.push_back(&weights_[i]);
		out.push_back(&biases_[i]);
	}
	out.push_back(&fcWeight_);
	out.push_back(&fcBias_);
	return out;
}

std::vector<const Parameter *> ConvNet::parameters() const
{
	auto mut = const_cast<ConvNet *>(this)->parameters();
	return {mut.begin(), mut.end()};
}

Model::Model(const ModelConfig &config, std::uint64_t seed)
	: config_(config), histogram_(config.histogram),
	  mapping_(config.network, config.histogram.bins, 9, "mapping", splitmix(seed ^ 0x6d6170ULL)),
	  illuminant_(config.network, config.histogram.bins, 3, "illuminant",
		      splitmix(seed ^ 0x696c6cULL))
{
	if (!(config.matrixEps >= 0.0) || config.jitterRetries < 0 || !(config.jitterScale > 0.0))
		throw InvalidArgument("model: invalid matrix settings");
}

std::vector<Parameter *> Model::parameters()
{
	std::vector<Parameter *> out{&histogram_.logScale, &histogram_.logFalloff};
	for (auto *p : mapping_.parameters())
		out.push_back(p);
	for (auto *p : illuminant_.parameters())
		out.push_back(p);
	return out;
}

std::vector<const Parameter *> Model::parameters() const
{
	auto mut = const_cast<Model *>(this)->parameters();
	return {mut.begin(), mut.end()};
}

Parameter *Model::find(std::string_view name)
{
	for (auto *p : parameters())
		if (p->name == name)
			return p;
	return nullptr;
}

MappingMatrix buildMappingMatrix(const Tensor &v, double eps)
{
	if (v.numel() != 9)
		throw InvalidArgument("mapping matrix: expected 9 values, got " +
				      std::to_string(v.numel()));
	for (double x : v.data())
		if (!std::isfinite(x))
			throw InvalidInput("mapping matrix: non-finite network output");
	MappingMatrix out;
	out.V = reshape(v, {3, 3});
	Tensor magnitude = abs(out.V);
	Tensor denom = addScalar(sum(magnitude), eps);
	if (denom.item() == 0.0)
		out.M = mulScalar(magnitude, 0.0);
	else
		out.M = div(magnitude, denom);
	return out;
}

JitteredInverse invertWithJitter(const Tensor &M, std::mt19937_64 &rng,
				 const JitterOptions &opt, std::string_view id)
{
	if (M.shape() != Shape{3, 3})
		throw InvalidArgument("invert: expected a 3x3 matrix");
	for (double x : M.data())
		if (!std::isfinite(x))
			throw InvalidInput("invert: non-finite matrix entry");

	JitteredInverse out;
	Tensor candidate = M;
	std::normal_distribution<double> normal(0.0, 1.0);
	for (int attempt = 0;; ++attempt) {
		const double det = det3(candidate.data());
		if (std::fabs(det) >= opt.threshold && std::isfinite(det)) {
			out.inverse = inverse3(candidate);
			out.inverted = candidate;
			out.attempts = attempt;
			out.jittered = attempt > 0;
			return out;
		}
		if (attempt >= opt.retries)
			break;
		std::vector<double> offsets(9);
		for (double &o : offsets)
			o = normal(rng) * opt.scale;
		candidate = add(M, Tensor::fromData({3, 3}, std::move(offsets)));
	}
	throw SingularMatrixError("mapping matrix stays singular after " +
				  std::to_string(opt.retries) + " jitter attempts" +
				  (id.empty() ? std::string() : " (image " + std::string(id) + ")"));
}

ForwardTrace forwardFromMapping(const Model &model, const PixelSet &pixels,
				const Tensor &v, std::mt19937_64 &rng, std::string_view id)
{
	const ModelConfig &cfg = model.config();
	ForwardTrace t;
	t.mappingOutput = v;
	t.mapping = buildMappingMatrix(v, cfg.matrixEps);

	Tensor mapped = matmul(t.mapping.M, pixels.colors);
	t.mappedHistogram = computeHistogram(PixelSet{mapped, pixels.weights}, model.histogram());
	t.working = model.illuminantNet().forward(t.mappedHistogram);

	JitteredInverse inv = invertWithJitter(
		t.mapping.M, rng, {cfg.singularThreshold, cfg.jitterRetries, cfg.jitterScale}, id);
	t.mapping.inverse = inv.inverse;
	t.mapping.jittered = inv.jittered;

	t.sensor = reshape(matmul(inv.inverse, reshape(t.working, {3, 1})), {3});
	t.estimate = div(t.sensor, norm(t.sensor));
	return t;
}

ForwardTrace forwardPass(const Model &model, const PixelSet &pixels, std::mt19937_64 &rng,
			 std::string_view id)
{
	Tensor histogram = computeHistogram(pixels, model.histogram());
	Tensor v = model.mappingNet().forward(histogram);
	ForwardTrace t = forwardFromMapping(model, pixels, v, rng, id);
	t.histogram = histogram;
	return t;
}

PixelSet pixelSetFor(const RawImage &image)
{
	image.validate();
	if (image.width > kThumbnailSize || image.height > kThumbnailSize)
		throw InvalidInput("image " + image.path + " is larger than the " +
				   std::to_string(kThumbnailSize) + "x" +
				   std::to_string(kThumbnailSize) + " thumbnail size");
	return makePixelSet(image.rgb, image.mask, true);
}

IlluminantEstimate predict(const Model &model, const RawImage &image)
{
	NoGradGuard noGrad;
	PixelSet pixels = pixelSetFor(image);
	std::mt19937_64 rng(kInferenceJitterSeed);
	ForwardTrace t = forwardPass(model, pixels, rng, image.path);

	IlluminantEstimate e;
	for (std::size_t i = 0; i < 3; ++i) {
		e.working[i] = t.working.at(i);
		e.sensor[i] = t.estimate.at(i);
	}
	for (std::size_t i = 0; i < 9; ++i)
		e.matrix[i] = t.mapping.M.at(i);
	e.jittered = t.mapping.jittered;
	return e;
}

std::vector<BatchItem> predictBatch(const Model &model, std::span<const RawImage> images,
				    unsigned threads)
{
	std::vector<BatchItem> out(images.size());
	auto run = [&](std::size_t begin, std::size_t end) {
		for (std::size_t i = begin; i < end; ++i) {
			try {
				out[i].estimate = predict(model, images[i]);
			} catch (const std::exception &e) {
				out[i].error = e.what();
			}
		}
	};
	threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(images.size())));
	if (threads <= 1) {
		run(0, images.size());
		return out;
	}
	{
		std::vector<std::jthread> workers;
		const std::size_t chunk = (images.size() + threads - 1) / threads;
		for (unsigned t = 0; t < threads; ++t) {
			const std::size_t begin = t * chunk;
			const std::size_t end = std::min(images.size(), begin + chunk);
			if (begin < end)
				workers.emplace_back(run, begin, end);
		}
	}
	return out;
}

} // namespace siie
