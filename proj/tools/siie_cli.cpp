#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "siie/baselines.hpp"
#include "siie/config.hpp"
#include "siie/dataio.hpp"
#include "siie/errors.hpp"
#include "siie/harness.hpp"
#include "siie/synth.hpp"
#include "siie/training.hpp"

namespace fs = std::filesystem;
using namespace siie;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitAbort = 3;

/* Usage and configuration problems detected before any output is written. */
struct UsageError : std::runtime_error {
	using std::runtime_error::runtime_error;
};

std::ofstream openOut(const fs::path &path)
{
	std::ofstream out(path);
	if (!out)
		throw IoError("cannot write " + path.string());
	return out;
}

/* Ensures --out can be used as a directory without creating it yet. */
void checkOutDir(const fs::path &out)
{
	if (fs::exists(out) && !fs::is_directory(out))
		throw UsageError("--out " + out.string() + " exists and is not a directory");
}

std::string sig6(double v)
{
	char buf[32];
	std::snprintf(buf, sizeof(buf), "%.6g", v);
	return buf;
}

std::vector<RawImage> loadSubset(const DatasetManifest &manifest,
				 const std::set<std::string> &cameras, bool keep)
{
	std::vector<std::size_t> ids;
	for (std::size_t i = 0; i < manifest.entries.size(); ++i)
		if (cameras.count(manifest.entries[i].cameraId) == static_cast<std::size_t>(keep))
			ids.push_back(i);
	return loadImages(manifest, ids);
}

void checkCameras(const DatasetManifest &manifest, const std::vector<std::string> &cams)
{
	const auto known = manifest.cameras();
	for (const auto &c : cams)
		if (std::find(known.begin(), known.end(), c) == known.end())
			throw UsageError("camera '" + c + "' does not occur in the manifest");
}

RunConfig resolveConfig(const std::string &configPath, std::optional<std::uint64_t> seed)
{
	RunConfig cfg;
	if (!configPath.empty())
		cfg = loadRunConfig(configPath);
	if (seed)
		cfg.train.seed = *seed;
	return cfg;
}

void printStats(const std::vector<CameraStats> &stats, const std::vector<std::string> &metrics)
{
	writeStatsCsv(std::cout, stats, metrics);
}

/* ------------------------------------------------------------------ train */

struct TrainArgs {
	std::string manifest, exclude, config, out;
	std::optional<std::uint64_t> seed;
	bool quiet = false;
};

int cmdTrain(const TrainArgs &a)
{
	const RunConfig cfg = resolveConfig(a.config, a.seed);
	const DatasetManifest manifest = loadManifest(a.manifest);
	const auto excluded = splitList(a.exclude);
	checkCameras(manifest, excluded);
	checkOutDir(a.out);
	const std::set<std::string> ex(excluded.begin(), excluded.end());
	const auto images = loadSubset(manifest, ex, false);
	if (images.empty())
		throw UsageError("no training images remain after exclusion");

	TrainResult r = trainModel(images, cfg, [&](const EpochLog &e) {
		if (!a.quiet)
			std::cerr << "epoch " << e.epoch << " lr " << sig6(e.lr) << " train "
				  << sig6(e.trainLossDeg) << " deg val "
				  << (std::isnan(e.valMeanDeg) ? std::string("-") : sig6(e.valMeanDeg))
				  << " deg\n";
	});

	fs::create_directories(a.out);
	saveCheckpoint(fs::path(a.out) / "model.siie", r.model);
	auto log = openOut(fs::path(a.out) / "train_log.csv");
	writeTrainLog(log, r.log);
	nlohmann::json resolved = toJson(cfg);
	resolved["manifest"] = fs::absolute(a.manifest).string();
	resolved["excluded_cameras"] = excluded;
	resolved["training_entries"] = r.trainIds;
	resolved["validation_entries"] = r.validationIds;
	auto rc = openOut(fs::path(a.out) / "resolved_config.json");
	rc << resolved.dump(1) << '\n';
	return 0;
}

/* ------------------------------------------------------------------- eval */

struct EvalArgs {
	std::string model, manifest, cameras, out, metrics = "recovery,reproduction";
	std::string campaign, config;
	std::optional<std::uint64_t> seed;
	unsigned threads = 1;
	bool compareGrayWorld = false;
};

int cmdEval(const EvalArgs &a)
{
	const auto metrics = parseMetrics(a.metrics);
	const DatasetManifest manifest = loadManifest(a.manifest);
	const auto cams = splitList(a.cameras);
	checkCameras(manifest, cams);
	checkOutDir(a.out);

	if (!a.campaign.empty()) {
		if (a.campaign != "loco" && a.campaign != "cross")
			throw UsageError("--campaign must be loco or cross");
		if (a.campaign == "cross" && cams.empty())
			throw UsageError("--campaign cross needs --cameras (the test cameras)");
		CampaignOptions opt;
		opt.config = resolveConfig(a.config, a.seed);
		opt.metrics = metrics;
		opt.threads = a.threads;
		if (a.compareGrayWorld)
			opt.compare = BaselineConfig::defaults(BaselineMethod::GrayWorld);
		opt.progress = [](const std::string &msg) { std::cerr << msg << '\n'; };
		std::vector<std::size_t> all(manifest.entries.size());
		for (std::size_t i = 0; i < all.size(); ++i)
			all[i] = i;
		const auto images = loadImages(manifest, all);
		fs::create_directories(a.out);
		opt.outDir = fs::path(a.out);
		std::vector<FoldResult> folds;
		if (a.campaign == "loco")
			folds = runLocoCampaign(images, opt);
		else
			folds.push_back(runCrossCampaign(images, cams, opt));
		auto summary = openOut(fs::path(a.out) / "summary.csv");
		writeCampaignSummary(summary, folds, metrics);
		writeCampaignSummary(std::cout, folds, metrics);
		return 0;
	}

	if (a.model.empty())
		throw UsageError("--model is required unless --campaign is given");
	const Model model = loadCheckpoint(a.model);
	const std::set<std::string> keep(cams.begin(), cams.end());
	std::vector<RawImage> images;
	if (cams.empty()) {
		std::vector<std::size_t> all(manifest.entries.size());
		for (std::size_t i = 0; i < all.size(); ++i)
			all[i] = i;
		images = loadImages(manifest, all);
	} else {
		images = loadSubset(manifest, keep, true);
	}

	EvalReport report = evaluateModel(model, images, fs::path(a.model).filename().string(),
					  Protocol::FixedSplit, a.threads);
	for (const auto &[path, why] : report.failures)
		std::cerr << "prediction failed for " << path << ": " << why << '\n';
	fs::create_directories(a.out);
	auto per = openOut(fs::path(a.out) / "per_image.csv");
	writePerImageCsv(per, report.rows);
	auto st = openOut(fs::path(a.out) / "stats.csv");
	writeStatsCsv(st, report.stats(), metrics);
	printStats(report.stats(), metrics);
	return 0;
}

/* ---------------------------------------------------------------- predict */

struct PredictArgs {
	std::string model, image, mask;
	bool dump = false;
};

int cmdPredict(const PredictArgs &a)
{
	RawImage img;
	try {
		img = readImageFile(a.image);
		if (!a.mask.empty()) {
			std::size_t w = 0, h = 0;
			img.mask = readMaskFile(a.mask, w, h);
			if (w != img.width || h != img.height)
				throw InvalidInput("mask size does not match image");
		}
	} catch (const std::exception &e) {
		throw UsageError(std::string("cannot read image: ") + e.what());
	}
	maskSaturated(img);
	img = toThumbnail(std::move(img));
	const Model model = loadCheckpoint(a.model);
	const IlluminantEstimate e = predict(model, img);
	std::cout << sig6(e.sensor[0]) << ' ' << sig6(e.sensor[1]) << ' ' << sig6(e.sensor[2])
		  << '\n';
	if (a.dump) {
		std::cout << sig6(e.working[0]) << ' ' << sig6(e.working[1]) << ' '
			  << sig6(e.working[2]) << '\n';
		for (int i = 0; i < 9; ++i)
			std::cout << sig6(e.matrix[i]) << (i % 3 == 2 ? '\n' : ' ');
	}
	return 0;
}

/* --------------------------------------------------------------- baseline */

struct BaselineArgs {
	std::string method, manifest, out, cameras, metrics = "recovery,reproduction";
	std::optional<double> p, sigma;
};

int cmdBaseline(const BaselineArgs &a)
{
	auto method = parseBaselineMethod(a.method);
	if (!method) {
		std::string valid;
		for (const auto &n : baselineNames())
			valid += (valid.empty() ? "" : ", ") + n;
		throw UsageError("unknown method '" + a.method + "'; valid methods: " + valid);
	}
	BaselineConfig cfg = BaselineConfig::defaults(*method);
	if (a.p)
		cfg.minkowskiP = *a.p;
	if (a.sigma)
		cfg.sigma = *a.sigma;
	cfg.validate();
	const auto metrics = parseMetrics(a.metrics);
	const DatasetManifest manifest = loadManifest(a.manifest);
	const auto cams = splitList(a.cameras);
	checkCameras(manifest, cams);
	if (!a.out.empty())
		checkOutDir(a.out);

	std::vector<RawImage> images;
	if (cams.empty()) {
		std::vector<std::size_t> all(manifest.entries.size());
		for (std::size_t i = 0; i < all.size(); ++i)
			all[i] = i;
		images = loadImages(manifest, all);
	} else {
		images = loadSubset(manifest, {cams.begin(), cams.end()}, true);
	}
	EvalReport report = evaluateBaseline(cfg, images, Protocol::FixedSplit);
	for (const auto &[path, why] : report.failures)
		std::cerr << "baseline failed for " << path << ": " << why << '\n';
	if (!a.out.empty()) {
		fs::create_directories(a.out);
		auto per = openOut(fs::path(a.out) / "per_image.csv");
		writePerImageCsv(per, report.rows);
		auto st = openOut(fs::path(a.out) / "stats.csv");
		writeStatsCsv(st, report.stats(), metrics);
	}
	printStats(report.stats(), metrics);
	return 0;
}

/* ------------------------------------------------------------------ synth */

struct SynthArgs {
	std::size_t scenes = 100, sensors = 5, size = 64;
	std::uint64_t seed = 0;
	std::string out;
};

int cmdSynth(const SynthArgs &a)
{
	SynthConfig cfg;
	cfg.scenes = a.scenes;
	cfg.sensors = a.sensors;
	cfg.seed = a.seed;
	cfg.width = cfg.height = a.size;
	try {
		cfg.validate();
	} catch (const InvalidArgument &e) {
		throw UsageError(e.what());
	}
	checkOutDir(a.out);
	const DatasetManifest m = synthWrite(synthGenerate(cfg), a.out);
	std::cerr << "wrote " << m.entries.size() << " images for " << m.cameras().size()
		  << " sensors to " << a.out << '\n';
	return 0;
}

} // namespace

int main(int argc, char **argv)
{
	CLI::App app{"Sensor-independent illuminant estimation"};
	app.require_subcommand(1);

	TrainArgs train;
	auto *t = app.add_subcommand("train", "train a model on the non-excluded cameras");
	t->add_option("--manifest", train.manifest, "dataset manifest CSV")->required();
	t->add_option("--exclude-cameras", train.exclude, "comma-separated camera ids to hold out");
	t->add_option("--config", train.config, "JSON config overrides");
	t->add_option("--out", train.out, "output directory")->required();
	t->add_option("--seed", train.seed, "run seed (overrides the config)");
	t->add_flag("--quiet", train.quiet, "no per-epoch progress");

	EvalArgs eval;
	auto *e = app.add_subcommand("eval", "evaluate a model or run a campaign");
	e->add_option("--model", eval.model, "checkpoint file");
	e->add_option("--manifest", eval.manifest, "dataset manifest CSV")->required();
	e->add_option("--cameras", eval.cameras, "comma-separated camera ids (default all)");
	e->add_option("--out", eval.out, "output directory")->required();
	e->add_option("--metrics", eval.metrics, "recovery,reproduction");
	e->add_option("--campaign", eval.campaign, "loco or cross");
	e->add_option("--config", eval.config, "JSON config for campaign training");
	e->add_option("--seed", eval.seed, "campaign seed");
	e->add_option("--threads", eval.threads, "prediction threads");
	e->add_flag("--compare-gray-world", eval.compareGrayWorld,
		    "also score gray_world on every campaign test split");

	PredictArgs pred;
	auto *p = app.add_subcommand("predict", "estimate the illuminant of one image");
	p->add_option("--model", pred.model, "checkpoint file")->required();
	p->add_option("--image", pred.image, "RAWF or 16-bit PNG image")->required();
	p->add_option("--mask", pred.mask, "optional 8-bit PNG mask");
	p->add_flag("--dump-working-space", pred.dump, "also print the working-space estimate and M");

	BaselineArgs base;
	auto *b = app.add_subcommand("baseline", "run a statistical baseline");
	b->add_option("--method", base.method, "gray_world, white_patch, shades_of_gray, ...")
		->required();
	b->add_option("--manifest", base.manifest, "dataset manifest CSV")->required();
	b->add_option("--p", base.p, "Minkowski norm");
	b->add_option("--sigma", base.sigma, "gray-edge smoothing");
	b->add_option("--cameras", base.cameras, "comma-separated camera ids (default all)");
	b->add_option("--out", base.out, "output directory for CSVs");
	b->add_option("--metrics", base.metrics, "recovery,reproduction");

	SynthArgs syn;
	auto *s = app.add_subcommand("synth", "generate a synthetic multi-sensor dataset");
	s->add_option("--scenes", syn.scenes, "scene count");
	s->add_option("--sensors", syn.sensors, "sensor count");
	s->add_option("--seed", syn.seed, "generator seed");
	s->add_option("--size", syn.size, "image side length");
	s->add_option("--out", syn.out, "output directory")->required();

	try {
		app.parse(argc, argv);
	} catch (const CLI::CallForHelp &h) {
		return app.exit(h);
	} catch (const CLI::CallForAllHelp &h) {
		return app.exit(h);
	} catch (const CLI::ParseError &err) {
		std::cerr << err.what() << "\n\n" << app.help();
		return kExitUsage;
	}

	try {
		if (t->parsed())
			return cmdTrain(train);
		if (e->parsed())
			return cmdEval(eval);
		if (p->parsed())
			return cmdPredict(pred);
		if (b->parsed())
			return cmdBaseline(base);
		if (s->parsed())
			return cmdSynth(syn);
	} catch (const TrainingAbort &err) {
		std::cerr << "error: " << err.what() << '\n';
		return kExitAbort;
	} catch (const UsageError &err) {
		std::cerr << "error: " << err.what() << '\n';
		return kExitUsage;
	} catch (const InvalidArgument &err) {
		std::cerr << "config error: " << err.what() << '\n';
		return kExitUsage;
	} catch (const FormatError &err) {
		std::cerr << "format error: " << err.what() << '\n';
		return kExitUsage;
	} catch (const ParseError &err) {
		std::cerr << "parse error: " << err.what() << '\n';
		return kExitUsage;
	} catch (const IoError &err) {
		std::cerr << "i/o error: " << err.what() << '\n';
		return kExitUsage;
	} catch (const InvalidInput &err) {
		std::cerr << "input error: " << err.what() << '\n';
		return kExitUsage;
	} catch (const std::exception &err) {
		std::cerr << "error: " << err.what() << '\n';
		return kExitAbort;
	}
	return kExitUsage;
}
