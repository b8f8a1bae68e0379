#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "siie/histogram.hpp"
#include "siie/image.hpp"
#include "siie/networks.hpp"

namespace siie {

struct TrainConfig {
	double lr = 1e-5;
	double beta1 = 0.85;
	double beta2 = 0.99;
	double adamEps = 1e-8;
	std::size_t batchSize = 8;
	std::size_t lrDecayEveryEpochs = 5;
	double lrDecayFactor = 0.5;
	std::size_t maxEpochs = 60;
	std::uint64_t seed = 0;
	double validationFraction = 0.1;

	void validate() const;
	/* lr * factor^floor(epoch / every), epochs counted from 0. */
	double lrAt(std::size_t epoch) const;
};

/* One training/evaluation example with its pixels already collapsed. */
struct Sample {
	PixelSet pixels;
	Vec3 gt{};
	std::string id;
	std::string cameraId;
	std::string scene;
};

/* Scene key: file name without directory and extension. */
std::string sceneKey(const std::string &path);
Sample makeSample(const RawImage &image);
std::vector<Sample> makeSamples(std::span<const RawImage> images);

/*
 * Holds out ceil(fraction * scenes) whole scenes, so one scene never lands
 * on both sides of the split. Returns {train, validation}.
 */
std::pair<std::vector<Sample>, std::vector<Sample>>
splitValidation(std::vector<Sample> samples, double fraction, std::uint64_t seed);

struct EpochLog {
	std::size_t epoch = 0;
	std::size_t step = 0;
	double lr = 0.0;
	double trainLossDeg = 0.0;
	/* NaN when there is no validation set. */
	double valMeanDeg = std::numeric_limits<double>::quiet_NaN();
	std::size_t singularEvents = 0;
};

inline constexpr const char *kTrainLogHeader =
	"epoch,step,lr,train_loss_deg,val_mean_deg,singular_events";
void writeTrainLog(std::ostream &os, const std::vector<EpochLog> &log);

struct TrainState {
	std::size_t epoch = 0;
	std::size_t step = 0;
	double lr = 0.0;
	double bestVal = std::numeric_limits<double>::infinity();
	std::mt19937_64 rng;
};

/*
 * Joint end-to-end training of both networks and the histogram block.
 * Each mini-batch minimises the mean recovery angular error between the
 * ground truth and M^-1 times the working-space estimate.
 */
class Trainer
{
public:
	Trainer(Model model, TrainConfig config, std::vector<Sample> train,
		std::vector<Sample> validation = {});

	const Model &model() const { return model_; }
	Model &model() { return model_; }
	/* Best-validation snapshot, or the current model without validation data. */
	const Model &finalModel() const;
	const TrainConfig &config() const { return config_; }
	const TrainState &state() const { return state_; }
	const std::vector<EpochLog> &log() const { return log_; }
	bool done() const { return state_.epoch >= config_.maxEpochs; }

	EpochLog runEpoch();
	/* Runs until maxEpochs, or until `untilEpoch` epochs are complete. */
	void run(std::optional<std::size_t> untilEpoch = std::nullopt,
		 const std::function<void(const EpochLog &)> &onEpoch = {});

	/* Loss in degrees of a single sample under the current model. */
	double sampleLossDeg(const Sample &sample);
	/* Mean recovery error in degrees, inference mode. */
	double meanErrorDeg(const Model &model, const std::vector<Sample> &samples) const;

	void saveCheckpoint(const std::filesystem::path &path) const;
	static Trainer resume(const std::filesystem::path &path, std::vector<Sample> train,
			      std::vector<Sample> validation = {});

private:
	Model model_;
	std::optional<Model> best_;
	TrainConfig config_;
	TrainState state_;
	std::vector<Sample> train_;
	std::vector<Sample> validation_;
	std::vector<EpochLog> log_;
};

/* Model-only checkpoint (parameters plus Adam state). */
void saveCheckpoint(const std::filesystem::path &path, const Model &model);
Model loadCheckpoint(const std::filesystem::path &path);

inline constexpr std::uint16_t kCheckpointVersion = 1;

} // namespace siie
