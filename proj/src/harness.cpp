#include "siie/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "siie/errors.hpp"

namespace siie {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream openOut(const std::filesystem::path &path)
{
	std::ofstream out(path);
	if (!out)
		throw IoError("cannot write " + path.string());
	return out;
}

double parseField(const std::string &s, const char *what, std::size_t line)
{
	if (s.empty())
		return kNaN;
	try {
		std::size_t used = 0;
		const double v = std::stod(s, &used);
		if (used != s.size())
			throw std::invalid_argument(s);
		return v;
	} catch (const std::exception &) {
		throw ParseError(std::string("invalid ") + what + " '" + s + "'", line);
	}
}

std::string fmtOrEmpty(double v)
{
	return std::isnan(v) ? std::string() : formatDouble(v);
}

} // namespace

const char *protocolName(Protocol p)
{
	switch (p) {
	case Protocol::LeaveOneCameraOut:
		return "leave_one_camera_out";
	case Protocol::CrossDataset:
		return "cross_dataset";
	case Protocol::FixedSplit:
		return "fixed_split";
	}
	return "";
}

std::vector<CameraStats> computeStats(const std::vector<EvalRow> &rows)
{
	std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
	std::vector<double> allRec, allRep;
	for (const auto &r : rows) {
		auto &g = groups[r.cameraId];
		g.first.push_back(r.recovery);
		allRec.push_back(r.recovery);
		if (!std::isnan(r.reproduction)) {
			g.second.push_back(r.reproduction);
			allRep.push_back(r.reproduction);
		}
	}
	auto make = [](const std::string &id, const std::vector<double> &rec,
		       const std::vector<double> &rep) {
		CameraStats s;
		s.cameraId = id;
		if (!rec.empty())
			s.recovery = aggregate(rec);
		if (!rep.empty())
			s.reproduction = aggregate(rep);
		return s;
	};
	std::vector<CameraStats> out;
	for (const auto &[cam, g] : groups)
		out.push_back(make(cam, g.first, g.second));
	if (!rows.empty())
		out.push_back(make("all", allRec, allRep));
	return out;
}

std::vector<CameraStats> EvalReport::stats() const
{
	return computeStats(rows);
}

ErrorStats EvalReport::recoveryStats() const
{
	std::vector<double> e;
	for (const auto &r : rows)
		e.push_back(r.recovery);
	return aggregate(e);
}

EvalRow makeRow(const RawImage &image, const Vec3 &estimate, bool jittered)
{
	EvalRow r;
	r.imagePath = image.path;
	r.cameraId = image.cameraId;
	r.estimate = estimate;
	r.gt = image.gt;
	r.recovery = recoveryAngularError(image.gt, estimate);
	const bool positive = std::all_of(estimate.begin(), estimate.end(),
					  [](double v) { return v > 0.0; });
	r.reproduction = positive ? reproductionAngularError(image.gt, estimate) : kNaN;
	r.jittered = jittered;
	return r;
}

EvalReport evaluateModel(const Model &model, std::span<const RawImage> images,
			 const std::string &modelId, Protocol protocol, unsigned threads)
{
	EvalReport report;
	report.modelId = modelId;
	report.protocol = protocol;
	auto items = predictBatch(model, images, threads);
	for (std::size_t i = 0; i < images.size(); ++i) {
		if (!items[i].estimate) {
			report.failures.emplace_back(images[i].path, items[i].error);
			continue;
		}
		report.rows.push_back(
			makeRow(images[i], items[i].estimate->sensor, items[i].estimate->jittered));
	}
	return report;
}

EvalReport evaluateBaseline(const BaselineConfig &config, std::span<const RawImage> images,
			    Protocol protocol)
{
	config.validate();
	EvalReport report;
	report.modelId = std::string(baselineName(config.method));
	report.protocol = protocol;
	for (const auto &img : images) {
		try {
			report.rows.push_back(makeRow(img, estimateBaseline(img, config), false));
		} catch (const InvalidInput &e) {
			report.failures.emplace_back(img.path, e.what());
		}
	}
	return report;
}

void writePerImageCsv(std::ostream &os, const std::vector<EvalRow> &rows)
{
	os << kPerImageCsvHeader << '\n';
	for (const auto &r : rows) {
		os << csvField(r.imagePath) << ',' << csvField(r.cameraId);
		for (double v : r.estimate)
			os << ',' << formatDouble(v);
		for (double v : r.gt)
			os << ',' << formatDouble(v);
		os << ',' << formatDouble(r.recovery) << ',' << fmtOrEmpty(r.reproduction) << ','
		   << (r.jittered ? 1 : 0) << '\n';
	}
}

std::vector<EvalRow> readPerImageCsv(std::istream &in)
{
	std::string line;
	std::size_t lineNo = 1;
	if (!std::getline(in, line))
		throw ParseError("empty per-image file", lineNo);
	if (!line.empty() && line.back() == '\r')
		line.pop_back();
	if (line != kPerImageCsvHeader)
		throw ParseError("unexpected per-image header", lineNo);
	std::vector<EvalRow> rows;
	while (std::getline(in, line)) {
		++lineNo;
		if (!line.empty() && line.back() == '\r')
			line.pop_back();
		if (line.empty())
			continue;
		auto f = splitCsvLine(line, lineNo);
		if (f.size() != 11)
			throw ParseError("expected 11 fields", lineNo);
		EvalRow r;
		r.imagePath = f[0];
		r.cameraId = f[1];
		for (int c = 0; c < 3; ++c) {
			r.estimate[c] = parseField(f[2 + c], "estimate", lineNo);
			r.gt[c] = parseField(f[5 + c], "ground truth", lineNo);
		}
		r.recovery = parseField(f[8], "recovery error", lineNo);
		r.reproduction = parseField(f[9], "reproduction error", lineNo);
		r.jittered = f[10] == "1";
		rows.push_back(std::move(r));
	}
	return rows;
}

std::vector<std::string> splitList(const std::string &list)
{
	std::vector<std::string> out;
	std::string cur;
	for (char ch : list + ",") {
		if (ch == ',') {
			auto a = cur.find_first_not_of(" \t");
			auto b = cur.find_last_not_of(" \t");
			if (a != std::string::npos)
				out.push_back(cur.substr(a, b - a + 1));
			cur.clear();
		} else {
			cur += ch;
		}
	}
	return out;
}

std::vector<std::string> parseMetrics(const std::string &list)
{
	auto metrics = splitList(list);
	if (metrics.empty())
		throw InvalidArgument("no metrics selected");
	for (const auto &m : metrics)
		if (m != "recovery" && m != "reproduction")
			throw InvalidArgument("unknown metric '" + m +
					      "' (valid: recovery, reproduction)");
	return metrics;
}

void writeStatsCsv(std::ostream &os, const std::vector<CameraStats> &stats,
		   const std::vector<std::string> &metrics)
{
	os << kStatsCsvHeader << '\n';
	for (const auto &metric : metrics)
		for (const auto &s : stats) {
			const auto &v = metric == "recovery" ? s.recovery : s.reproduction;
			if (v)
				writeStatsRow(os, csvField(s.cameraId), *v, metric);
		}
}

/* ---------------------------------------------------------------- training */

TrainResult trainModel(std::span<const RawImage> images, const RunConfig &config,
		       const EpochCallback &onEpoch)
{
	config.train.validate();
	if (images.empty())
		throw InvalidArgument("train: no training images");
	auto [train, val] = splitValidation(makeSamples(images), config.train.validationFraction,
					    config.train.seed);
	TrainResult result;
	for (const auto &s : train)
		result.trainIds.push_back(s.id);
	for (const auto &s : val)
		result.validationIds.push_back(s.id);

	Trainer trainer(Model(config.model, config.train.seed), config.train, std::move(train),
			std::move(val));
	trainer.run(std::nullopt, onEpoch);
	result.model = trainer.finalModel();
	result.log = trainer.log();
	return result;
}

namespace {

FoldResult runFold(std::span<const RawImage> images, const std::string &name,
		   const std::vector<std::string> &testCameras, Protocol protocol,
		   const CampaignOptions &opt)
{
	const auto start = std::chrono::steady_clock::now();
	const std::set<std::string> held(testCameras.begin(), testCameras.end());
	std::vector<RawImage> train, test;
	for (const auto &img : images)
		(held.count(img.cameraId) ? test : train).push_back(img);
	if (train.empty() || test.empty())
		throw InvalidArgument("fold " + name + ": empty training or test split");

	if (opt.progress)
		opt.progress("fold " + name + ": training on " + std::to_string(train.size()) +
			     " images, testing on " + std::to_string(test.size()));
	FoldResult fold;
	fold.name = name;
	fold.testCameras = testCameras;
	TrainResult trained = trainModel(train, opt.config, [&](const EpochLog &e) {
		if (opt.progress)
			opt.progress("fold " + name + ": epoch " + std::to_string(e.epoch) +
				     " train " + formatDouble(e.trainLossDeg) + " val " +
				     fmtOrEmpty(e.valMeanDeg));
	});
	fold.log = trained.log;
	fold.report = evaluateModel(trained.model, test, "fold_" + name, protocol, opt.threads);
	if (opt.compare)
		fold.baseline = evaluateBaseline(*opt.compare, test, protocol);

	if (opt.outDir) {
		const auto dir = *opt.outDir / ("fold_" + name);
		std::filesystem::create_directories(dir);
		saveCheckpoint(dir / "model.siie", trained.model);
		auto log = openOut(dir / "train_log.csv");
		writeTrainLog(log, fold.log);
		auto per = openOut(dir / "per_image.csv");
		writePerImageCsv(per, fold.report.rows);
		auto st = openOut(dir / "stats.csv");
		writeStatsCsv(st, fold.report.stats(), opt.metrics);
		if (fold.baseline) {
			auto bp = openOut(dir / "baseline_per_image.csv");
			writePerImageCsv(bp, fold.baseline->rows);
			auto bs = openOut(dir / "baseline_stats.csv");
			writeStatsCsv(bs, fold.baseline->stats(), opt.metrics);
		}
	}
	fold.seconds =
		std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
	return fold;
}

} // namespace

std::vector<FoldResult> runLocoCampaign(std::span<const RawImage> images,
					const CampaignOptions &options)
{
	std::set<std::string> cameras;
	for (const auto &img : images)
		cameras.insert(img.cameraId);
	if (cameras.size() < 2)
		throw InvalidInput("leave-one-camera-out needs at least two cameras");
	std::vector<FoldResult> folds;
	for (const auto &cam : cameras)
		folds.push_back(runFold(images, cam, {cam}, Protocol::LeaveOneCameraOut, options));
	return folds;
}

FoldResult runCrossCampaign(std::span<const RawImage> images,
			    const std::vector<std::string> &testCameras,
			    const CampaignOptions &options)
{
	if (testCameras.empty())
		throw InvalidArgument("cross campaign: no test cameras given");
	std::string name;
	for (const auto &c : testCameras)
		name += (name.empty() ? "" : "+") + c;
	return runFold(images, name, testCameras, Protocol::CrossDataset, options);
}

void writeCampaignSummary(std::ostream &os, const std::vector<FoldResult> &folds,
			  const std::vector<std::string> &metrics)
{
	std::vector<const FoldResult *> ordered;
	for (const auto &f : folds)
		ordered.push_back(&f);
	std::sort(ordered.begin(), ordered.end(),
		  [](const FoldResult *a, const FoldResult *b) { return a->name < b->name; });
	os << kStatsCsvHeader << '\n';
	for (const auto &metric : metrics)
		for (const FoldResult *f : ordered) {
			const auto stats = f->report.stats();
			const auto &all = stats.back();
			const auto &v = metric == "recovery" ? all.recovery : all.reproduction;
			if (v)
				writeStatsRow(os, csvField(f->name), *v, metric);
		}
}

} // namespace siie
