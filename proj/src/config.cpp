#include "siie/config.hpp"

#include <fstream>
#include <set>

#include "siie/errors.hpp"

namespace siie {

using nlohmann::json;

namespace {

void rejectUnknown(const json &j, const std::set<std::string> &known, const char *where)
{
	if (!j.is_object())
		throw InvalidArgument(std::string(where) + ": expected a JSON object");
	for (const auto &[key, value] : j.items())
		if (!known.count(key))
			throw InvalidArgument(std::string(where) + ": unknown key '" + key + "'");
}

template<typename T>
void take(const json &j, const char *key, T &out)
{
	if (!j.contains(key))
		return;
	try {
		out = j.at(key).get<T>();
	} catch (const json::exception &e) {
		throw InvalidArgument(std::string("config key '") + key + "': " + e.what());
	}
}

} // namespace

json toJson(const HistogramConfig &c)
{
	return {{"bins", c.bins},           {"lo", c.lo},
		{"hi", c.hi},               {"eps", c.eps},
		{"pixel_floor", c.pixelFloor}, {"init_scale", c.initScale},
		{"init_falloff", c.initFalloff}};
}

json toJson(const NetworkConfig &c)
{
	json layers = json::array();
	for (const auto &l : c.conv)
		layers.push_back({{"kernel", l.kernel},
				  {"out_channels", l.outChannels},
				  {"stride", l.stride},
				  {"padding", l.padding}});
	return {{"conv", layers}};
}

json toJson(const ModelConfig &c)
{
	return {{"histogram", toJson(c.histogram)},
		{"network", toJson(c.network)},
		{"matrix_eps", c.matrixEps},
		{"singular_threshold", c.singularThreshold},
		{"jitter_retries", c.jitterRetries},
		{"jitter_scale", c.jitterScale}};
}

json toJson(const TrainConfig &c)
{
	return {{"lr", c.lr},
		{"beta1", c.beta1},
		{"beta2", c.beta2},
		{"adam_eps", c.adamEps},
		{"batch_size", c.batchSize},
		{"lr_decay_every_epochs", c.lrDecayEveryEpochs},
		{"lr_decay_factor", c.lrDecayFactor},
		{"max_epochs", c.maxEpochs},
		{"seed", c.seed},
		{"validation_fraction", c.validationFraction}};
}

json toJson(const RunConfig &c)
{
	return {{"model", toJson(c.model)}, {"train", toJson(c.train)}};
}

HistogramConfig applyJson(HistogramConfig c, const json &j)
{
	rejectUnknown(j, {"bins", "lo", "hi", "eps", "pixel_floor", "init_scale", "init_falloff"},
		      "histogram");
	take(j, "bins", c.bins);
	take(j, "lo", c.lo);
	take(j, "hi", c.hi);
	take(j, "eps", c.eps);
	take(j, "pixel_floor", c.pixelFloor);
	take(j, "init_scale", c.initScale);
	take(j, "init_falloff", c.initFalloff);
	c.validate();
	return c;
}

NetworkConfig applyJson(NetworkConfig c, const json &j)
{
	rejectUnknown(j, {"conv"}, "network");
	if (!j.contains("conv"))
		return c;
	if (!j["conv"].is_array())
		throw InvalidArgument("network.conv must be an array");
	c.conv.clear();
	for (const auto &layer : j["conv"]) {
		rejectUnknown(layer, {"kernel", "out_channels", "stride", "padding"}, "network.conv");
		ConvLayerSpec spec;
		take(layer, "kernel", spec.kernel);
		take(layer, "out_channels", spec.outChannels);
		take(layer, "stride", spec.stride);
		take(layer, "padding", spec.padding);
		c.conv.push_back(spec);
	}
	return c;
}

ModelConfig applyJson(ModelConfig c, const json &j)
{
	rejectUnknown(j, {"histogram", "network", "matrix_eps", "singular_threshold",
			  "jitter_retries", "jitter_scale"},
		      "model");
	if (j.contains("histogram"))
		c.histogram = applyJson(c.histogram, j["histogram"]);
	if (j.contains("network"))
		c.network = applyJson(c.network, j["network"]);
	take(j, "matrix_eps", c.matrixEps);
	take(j, "singular_threshold", c.singularThreshold);
	take(j, "jitter_retries", c.jitterRetries);
	take(j, "jitter_scale", c.jitterScale);
	c.network.validate(c.histogram.bins);
	return c;
}

TrainConfig applyJson(TrainConfig c, const json &j)
{
	rejectUnknown(j, {"lr", "beta1", "beta2", "adam_eps", "batch_size",
			  "lr_decay_every_epochs", "lr_decay_factor", "max_epochs", "seed",
			  "validation_fraction"},
		      "train");
	take(j, "lr", c.lr);
	take(j, "beta1", c.beta1);
	take(j, "beta2", c.beta2);
	take(j, "adam_eps", c.adamEps);
	take(j, "batch_size", c.batchSize);
	take(j, "lr_decay_every_epochs", c.lrDecayEveryEpochs);
	take(j, "lr_decay_factor", c.lrDecayFactor);
	take(j, "max_epochs", c.maxEpochs);
	take(j, "seed", c.seed);
	take(j, "validation_fraction", c.validationFraction);
	c.validate();
	return c;
}

RunConfig loadRunConfig(const std::filesystem::path &path, RunConfig base)
{
	std::ifstream in(path);
	if (!in)
		throw IoError("cannot open config " + path.string());
	json j;
	try {
		j = json::parse(in);
	} catch (const json::exception &e) {
		throw InvalidArgument("config " + path.string() + ": " + e.what());
	}
	rejectUnknown(j, {"model", "train"}, "config");
	if (j.contains("model"))
		base.model = applyJson(base.model, j["model"]);
	if (j.contains("train"))
		base.train = applyJson(base.train, j["train"]);
	return base;
}

} // namespace siie
