#pragma once

#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "siie/baselines.hpp"
#include "siie/config.hpp"
#include "siie/dataio.hpp"
#include "siie/metrics.hpp"
#include "siie/networks.hpp"
#include "siie/training.hpp"

namespace siie {

enum class Protocol { LeaveOneCameraOut, CrossDataset, FixedSplit };

const char *protocolName(Protocol p);

struct EvalRow {
	std::string imagePath;
	std::string cameraId;
	Vec3 estimate{};
	Vec3 gt{};
	double recovery = 0.0;
	/* NaN when the estimate has a non-positive component. */
	double reproduction = 0.0;
	bool jittered = false;
};

struct CameraStats {
	/* Camera id, or "all" for the pooled row. */
	std::string cameraId;
	std::optional<ErrorStats> recovery;
	std::optional<ErrorStats> reproduction;
};

struct EvalReport {
	std::vector<EvalRow> rows;
	/* Images whose prediction failed, with the reason. */
	std::vector<std::pair<std::string, std::string>> failures;
	std::string modelId;
	Protocol protocol = Protocol::FixedSplit;

	/* Sorted by camera id, then the pooled "all" row. */
	std::vector<CameraStats> stats() const;
	/* Pooled recovery statistics; throws InvalidInput without rows. */
	ErrorStats recoveryStats() const;
};

/* Pools rows into per-camera and overall statistics. */
std::vector<CameraStats> computeStats(const std::vector<EvalRow> &rows);

EvalRow makeRow(const RawImage &image, const Vec3 &estimate, bool jittered);

EvalReport evaluateModel(const Model &model, std::span<const RawImage> images,
			 const std::string &modelId, Protocol protocol, unsigned threads = 1);
EvalReport evaluateBaseline(const BaselineConfig &config, std::span<const RawImage> images,
			    Protocol protocol);

/*
 * image_path,camera_id,est_r,est_g,est_b,gt_r,gt_g,gt_b,
 * recovery_err_deg,reproduction_err_deg,jittered
 */
inline constexpr const char *kPerImageCsvHeader =
	"image_path,camera_id,est_r,est_g,est_b,gt_r,gt_g,gt_b,"
	"recovery_err_deg,reproduction_err_deg,jittered";

void writePerImageCsv(std::ostream &os, const std::vector<EvalRow> &rows);
std::vector<EvalRow> readPerImageCsv(std::istream &in);

/* metrics: any of "recovery", "reproduction". */
void writeStatsCsv(std::ostream &os, const std::vector<CameraStats> &stats,
		   const std::vector<std::string> &metrics);
std::vector<std::string> parseMetrics(const std::string &list);

struct TrainResult {
	Model model;
	std::vector<EpochLog> log;
	std::vector<std::string> trainIds;
	std::vector<std::string> validationIds;
};

using EpochCallback = std::function<void(const EpochLog &)>;

/* Validation split, model init from train.seed, training, best snapshot. */
TrainResult trainModel(std::span<const RawImage> images, const RunConfig &config,
		       const EpochCallback &onEpoch = {});

struct FoldResult {
	std::string name;
	std::vector<std::string> testCameras;
	EvalReport report;
	std::optional<EvalReport> baseline;
	std::vector<EpochLog> log;
	double seconds = 0.0;
};

struct CampaignOptions {
	RunConfig config;
	std::vector<std::string> metrics{"recovery", "reproduction"};
	/* Baseline evaluated on the same test split for comparison. */
	std::optional<BaselineConfig> compare;
	unsigned threads = 1;
	/* When set, each fold writes into its own subdirectory. */
	std::optional<std::filesystem::path> outDir;
	std::function<void(const std::string &)> progress;
};

/* One fold per distinct camera id, in camera order. */
std::vector<FoldResult> runLocoCampaign(std::span<const RawImage> images,
					const CampaignOptions &options);
/* Single fold: test on the listed cameras, train on all others. */
FoldResult runCrossCampaign(std::span<const RawImage> images,
			    const std::vector<std::string> &testCameras,
			    const CampaignOptions &options);

/* One stats row per fold (its pooled "all" stats) keyed by held-out camera. */
void writeCampaignSummary(std::ostream &os, const std::vector<FoldResult> &folds,
			  const std::vector<std::string> &metrics);

std::vector<std::string> splitList(const std::string &list);

} // namespace siie
