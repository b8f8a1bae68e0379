/*
 * Acceptance suite. Prints one PASS/FAIL line per criterion and exits
 * nonzero if any selected criterion fails.
 *
 *   siie_acceptance [--only 1,2,5] [--out DIR]
 */
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "siie/baselines.hpp"
#include "siie/errors.hpp"
#include "siie/gradcheck.hpp"
#include "siie/harness.hpp"
#include "siie/histogram.hpp"
#include "siie/metrics.hpp"
#include "siie/networks.hpp"
#include "siie/synth.hpp"
#include "siie/training.hpp"

using namespace siie;
namespace fs = std::filesystem;

namespace {

struct Outcome {
	bool pass = false;
	std::string detail;
};

std::string fmt(const char *f, double v)
{
	char buf[64];
	std::snprintf(buf, sizeof(buf), f, v);
	return buf;
}

RawImage randomImage(std::size_t w, std::size_t h, std::uint64_t seed)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> d(0.05, 0.95);
	RawImage img;
	img.width = w;
	img.height = h;
	img.rgb.resize(w * h * 3);
	for (float &v : img.rgb)
		v = static_cast<float>(d(rng));
	return img;
}

std::vector<char> bytes(const fs::path &p)
{
	std::ifstream in(p, std::ios::binary);
	return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/* ------------------------------------------------------------------ 1 */

Outcome gradientIntegrity()
{
	ModelConfig cfg;
	cfg.histogram.bins = 9;
	cfg.network = NetworkConfig::withChannels(2, 2, 2);
	Model model(cfg, 5);
	/* Biases away from zero keep ReLU and |.| arguments off their kinks. */
	std::mt19937_64 nudge(1);
	std::uniform_real_distribution<double> bias(0.1, 0.5);
	std::vector<Tensor> inputs;
	std::vector<std::string> names;
	for (Parameter *p : model.parameters()) {
		if (p->name.ends_with(".bias"))
			for (double &b : p->tensor.mutableData())
				b = bias(nudge);
		inputs.push_back(p->tensor);
		names.push_back(p->name);
	}
	const PixelSet px = pixelSetFor(randomImage(8, 8, 2));
	const Tensor gt = Tensor::fromData({3}, {0.5, 0.7, 0.5});
	auto loss = [&] {
		std::mt19937_64 rng(kInferenceJitterSeed);
		return angularLoss(gt, forwardPass(model, px, rng).estimate);
	};
	GradCheckOptions opt;
	opt.step = 1e-4;
	opt.relTol = 1e-3;
	opt.absTol = 1e-5;
	GradCheckReport r = checkGradients(loss, inputs, opt, names);
	std::ostringstream d;
	d << r.checked << " entries over " << inputs.size() << " parameters, max rel "
	  << fmt("%.2e", r.maxRelError) << ", max abs " << fmt("%.2e", r.maxAbsError);
	if (!r.ok())
		d << ", worst " << r.worst;
	return {r.ok(), d.str()};
}

/* ------------------------------------------------------------------ 2 */

Outcome analyticIdentities()
{
	double worst = 0.0;
	auto expect = [&](const Vec3 &a, const Vec3 &b, double deg) {
		worst = std::max(worst, std::abs(recoveryAngularError(a, b) - deg));
	};
	expect({0.3, 0.5, 0.2}, {0.3, 0.5, 0.2}, 0.0);
	expect({1, 0, 0}, {0, 1, 0}, 90.0);
	expect({1, 1, 0}, {1, 0, 0}, 45.0);
	const double rep = reproductionAngularError({0.3, 0.5, 0.2}, {0.3, 0.5, 0.2});

	double mErr = 0.0;
	for (double sign : {1.0, -1.0}) {
		Tensor v = Tensor::fromData({9}, {sign, 0, 0, 0, sign, 0, 0, 0, sign});
		MappingMatrix mm = buildMappingMatrix(v, 0.0);
		for (std::size_t i = 0; i < 9; ++i)
			mErr = std::max(mErr, std::abs(mm.M.at(i) - (i % 4 == 0 ? 1.0 / 3.0 : 0.0)));
	}

	double invErr = 0.0;
	std::mt19937_64 rng(11);
	std::uniform_real_distribution<double> d(-1.0, 1.0);
	int cases = 0;
	while (cases < 200) {
		std::vector<double> raw(9);
		for (double &x : raw)
			x = d(rng);
		MappingMatrix mm = buildMappingMatrix(Tensor::fromData({9}, raw), 1e-6);
		if (std::abs(det3(mm.M.data())) < 1e-6)
			continue;
		++cases;
		Tensor prod = matmul(inverse3(mm.M), mm.M);
		for (std::size_t i = 0; i < 9; ++i)
			invErr = std::max(invErr, std::abs(prod.at(i) - (i % 4 == 0 ? 1.0 : 0.0)));
	}
	const bool ok = worst <= 1e-6 && std::abs(rep) <= 1e-6 && mErr <= 1e-12 && invErr <= 1e-4;
	std::ostringstream s;
	s << "angle cases max dev " << fmt("%.1e", worst) << " deg, reproduction(gt,gt) "
	  << fmt("%.1e", rep) << " deg, M(+-I) dev " << fmt("%.1e", mErr) << ", |M^-1 M - I| "
	  << fmt("%.1e", invErr) << " over " << cases << " matrices";
	return {ok, s.str()};
}

/* ------------------------------------------------------------------ 3 */

Outcome histogramLaws()
{
	HistogramConfig cfg;
	const Tensor s = Tensor::full({3}, 1.0), f = Tensor::full({3}, 0.25);
	std::mt19937_64 rng(4);
	std::uniform_real_distribution<double> d(0.05, 1.0);
	bool nonneg = true;
	double homog = 0.0, perm = 0.0;
	for (int trial = 0; trial < 10; ++trial) {
		const std::size_t n = 50;
		std::vector<double> v(3 * n);
		for (double &x : v)
			x = d(rng);
		Tensor px = Tensor::fromData({3, n}, v);
		Tensor h = computeHistogram(px, {}, s, f, cfg);
		for (double x : h.data())
			nonneg = nonneg && x >= 0.0;
		for (double k : {0.25, 4.0}) {
			std::vector<double> scaled = v;
			for (double &x : scaled)
				x *= k;
			Tensor hk = computeHistogram(Tensor::fromData({3, n}, scaled), {}, s, f, cfg);
			for (std::size_t i = 0; i < h.numel(); ++i)
				if (h.at(i) > 0.0)
					homog = std::max(homog,
							 std::abs(hk.at(i) / (std::sqrt(k) * h.at(i)) - 1.0));
				else
					homog = std::max(homog, std::abs(hk.at(i)));
		}
		std::vector<std::size_t> order(n);
		for (std::size_t i = 0; i < n; ++i)
			order[i] = i;
		std::shuffle(order.begin(), order.end(), rng);
		std::vector<double> shuffled(3 * n);
		for (std::size_t c = 0; c < 3; ++c)
			for (std::size_t i = 0; i < n; ++i)
				shuffled[c * n + i] = v[c * n + order[i]];
		Tensor hp = computeHistogram(Tensor::fromData({3, n}, shuffled), {}, s, f, cfg);
		double peak = 0.0;
		for (double x : h.data())
			peak = std::max(peak, x);
		for (std::size_t i = 0; i < h.numel(); ++i)
			perm = std::max(perm, std::abs(hp.at(i) - h.at(i)) / peak);
	}
	Tensor zero = computeHistogram(Tensor::zeros({3, 16}), {}, s, f, cfg);
	double zmax = 0.0;
	for (double x : zero.data())
		zmax = std::max(zmax, std::abs(x));
	const bool ok = nonneg && zmax == 0.0 && homog <= 1e-12 && perm <= 1e-6;
	std::ostringstream out;
	out << "non-negative " << (nonneg ? "yes" : "no") << ", zero image max " << zmax
	    << ", sqrt(k) homogeneity rel dev " << fmt("%.1e", homog) << ", permutation rel dev "
	    << fmt("%.1e", perm);
	return {ok, out.str()};
}

/* ------------------------------------------------------------------ 4 */

Outcome singularSafeguard()
{
	const Tensor M = Tensor::fromData({3, 3}, {0.05, 0.1, 0.15, 0.1, 0.2, 0.3, 0.02, 0.04, 0.06});
	JitterOptions opt;
	opt.threshold = 1e-9;
	opt.retries = 5;
	opt.scale = 1e-4;
	int success = 0, jittered = 0, maxAttempts = 0;
	double worst = 0.0;
	const int trials = 1000;
	for (int t = 0; t < trials; ++t) {
		std::mt19937_64 rng(1000 + t);
		try {
			JitteredInverse inv = invertWithJitter(M, rng, opt, "rank1");
			jittered += inv.jittered;
			maxAttempts = std::max(maxAttempts, inv.attempts);
			Tensor prod = matmul(inv.inverted, inv.inverse);
			for (std::size_t i = 0; i < 9; ++i)
				worst = std::max(worst, std::abs(prod.at(i) - (i % 4 == 0 ? 1.0 : 0.0)));
			++success;
		} catch (const SingularMatrixError &) {
		}
	}
	const double rate = static_cast<double>(success) / trials;
	const bool ok = jittered == success && rate >= 0.999 && worst <= 1e-2;
	std::ostringstream s;
	s << success << "/" << trials << " succeeded (all jittered: " << (jittered == success ? "yes" : "no")
	  << "), max attempts " << maxAttempts << ", |M'M'^-1 - I| " << fmt("%.1e", worst);
	return {ok, s.str()};
}

/* ------------------------------------------------------------------ 5 */

Outcome overfit()
{
	SynthConfig sc;
	sc.scenes = 4;
	sc.sensors = 2;
	sc.width = sc.height = 32;
	sc.seed = 17;
	auto samples = makeSamples(synthGenerate(sc).images);

	ModelConfig mc;
	mc.histogram.bins = 32;
	mc.network = NetworkConfig::withChannels(8, 16, 32);
	TrainConfig tc;
	tc.lr = 1e-3;
	tc.batchSize = 1;
	tc.maxEpochs = 200;
	tc.lrDecayEveryEpochs = 25;
	tc.lrDecayFactor = 0.5;
	tc.validationFraction = 0.0;
	Trainer trainer(Model(mc, 1), tc, samples);
	trainer.run();
	const double err = trainer.meanErrorDeg(trainer.model(), samples);
	return {err < 0.5, std::to_string(samples.size()) + " images, 200 epochs, train mean " +
				   fmt("%.3f", err) + " deg (last epoch loss " +
				   fmt("%.3f", trainer.log().back().trainLossDeg) + " deg)"};
}

/* ------------------------------------------------------------------ 6 */

RunConfig locoConfig()
{
	RunConfig c;
	c.model.histogram.bins = 32;
	c.model.network = NetworkConfig::withChannels(4, 8, 16);
	c.train.lr = 2e-3;
	c.train.batchSize = 8;
	c.train.maxEpochs = 12;
	c.train.lrDecayEveryEpochs = 4;
	c.train.lrDecayFactor = 0.5;
	c.train.validationFraction = 0.1;
	c.train.seed = 0;
	return c;
}

Outcome crossSensor(const std::optional<fs::path> &out)
{
	SynthConfig sc;
	sc.scenes = 2000;
	sc.sensors = 5;
	sc.width = sc.height = 32;
	sc.seed = 2024;
	const SynthDataset data = synthGenerate(sc);

	CampaignOptions opt;
	opt.config = locoConfig();
	opt.compare = BaselineConfig::defaults(BaselineMethod::GrayWorld);
	if (out)
		opt.outDir = *out / "criterion6";
	opt.progress = [](const std::string &msg) { std::cerr << "  " << msg << '\n'; };
	const auto folds = runLocoCampaign(data.images, opt);

	bool ok = true;
	std::ostringstream s;
	for (const auto &f : folds) {
		const double model = f.report.recoveryStats().mean;
		const double gw = f.baseline->recoveryStats().mean;
		const bool foldOk = model < 5.0 && model < gw && f.report.failures.empty();
		ok = ok && foldOk;
		s << (s.tellp() ? "; " : "") << f.name << " " << fmt("%.3f", model) << " vs GW "
		  << fmt("%.3f", gw) << (foldOk ? "" : " (fail)");
	}
	return {ok, s.str()};
}

/* ------------------------------------------------------------------ 7 */

Outcome baselineOracles()
{
	const BaselineConfig gw = BaselineConfig::defaults(BaselineMethod::GrayWorld);
	const BaselineConfig wp = BaselineConfig::defaults(BaselineMethod::WhitePatch);
	BaselineConfig sog1 = BaselineConfig::defaults(BaselineMethod::ShadesOfGray);
	sog1.minkowskiP = 1.0;
	BaselineConfig sog64 = sog1;
	sog64.minkowskiP = 64.0;

	int identical = 0;
	double wpDev = 0.0, exposure = 0.0, rounded = 0.0;
	const std::vector<BaselineConfig> all{
		gw, wp, BaselineConfig::defaults(BaselineMethod::ShadesOfGray),
		BaselineConfig::defaults(BaselineMethod::GrayEdge1),
		BaselineConfig::defaults(BaselineMethod::GrayEdge2)};
	for (std::uint64_t i = 0; i < 100; ++i) {
		RawImage img = randomImage(16, 16, 500 + i);
		identical += estimateBaseline(img, sog1) == estimateBaseline(img, gw);
		wpDev = std::max(wpDev, recoveryAngularError(estimateBaseline(img, wp),
							     estimateBaseline(img, sog64)));
		/*
		 * Powers of two scale float32 pixels exactly. Other factors also
		 * round the stored values, which alone moves a single-pixel
		 * estimate such as white patch by ~1e-6 deg; reported, not gated.
		 */
		for (float k : {0.25f, 4.0f, 0.37f}) {
			RawImage scaled = img;
			for (float &v : scaled.rgb)
				v *= k;
			double &slot = k == 0.37f ? rounded : exposure;
			for (const auto &cfg : all)
				slot = std::max(slot, recoveryAngularError(estimateBaseline(img, cfg),
									   estimateBaseline(scaled, cfg)));
		}
	}
	const bool ok = identical == 100 && wpDev < 1.0 && exposure < 1e-6;
	std::ostringstream s;
	s << "SoG(p=1) == GW on " << identical << "/100, max SoG(p=64) vs WP " << fmt("%.3f", wpDev)
	  << " deg, max exposure change (k=0.25,4) " << fmt("%.1e", exposure)
	  << " deg, (k=0.37 with float32 rounding " << fmt("%.1e", rounded) << " deg)";
	return {ok, s.str()};
}

/* ------------------------------------------------------------------ 8 */

Outcome determinism(const fs::path &dir)
{
	fs::remove_all(dir);
	fs::create_directories(dir);
	SynthConfig sc;
	sc.scenes = 10;
	sc.sensors = 3;
	sc.width = sc.height = 24;
	sc.seed = 5;
	const SynthDataset data = synthGenerate(sc);
	std::vector<RawImage> train, test;
	for (const auto &img : data.images)
		(img.cameraId == "synth_2" ? test : train).push_back(img);

	RunConfig cfg;
	cfg.model.histogram.bins = 16;
	cfg.model.network = NetworkConfig::withChannels(4, 4, 4);
	cfg.train.lr = 1e-3;
	cfg.train.maxEpochs = 3;
	cfg.train.seed = 9;
	cfg.train.validationFraction = 0.2;
	for (const char *name : {"a.siie", "b.siie"})
		saveCheckpoint(dir / name, trainModel(train, cfg).model);
	const bool sameCkpt = bytes(dir / "a.siie") == bytes(dir / "b.siie");

	const Model loaded = loadCheckpoint(dir / "a.siie");
	const Model first = trainModel(train, cfg).model;
	bool samePredict = true;
	for (const auto &img : test) {
		const IlluminantEstimate a = predict(first, img), b = predict(loaded, img);
		samePredict = samePredict && a.sensor == b.sensor && a.working == b.working &&
			      a.matrix == b.matrix;
	}

	EvalReport report = evaluateModel(loaded, test, "a", Protocol::FixedSplit);
	const std::vector<std::string> metrics{"recovery", "reproduction"};
	{
		std::ofstream per(dir / "per_image.csv");
		writePerImageCsv(per, report.rows);
		std::ofstream st(dir / "stats.csv");
		writeStatsCsv(st, report.stats(), metrics);
	}
	std::ifstream per(dir / "per_image.csv");
	std::ostringstream rederived;
	writeStatsCsv(rederived, computeStats(readPerImageCsv(per)), metrics);
	std::ifstream st(dir / "stats.csv");
	std::ostringstream written;
	written << st.rdbuf();
	const bool sameStats = rederived.str() == written.str();

	std::ostringstream s;
	s << "checkpoints byte-identical " << (sameCkpt ? "yes" : "no")
	  << ", save/load/predict bit-identical " << (samePredict ? "yes" : "no")
	  << ", stats re-derived from per-image CSV " << (sameStats ? "yes" : "no");
	return {sameCkpt && samePredict && sameStats, s.str()};
}

} // namespace

int main(int argc, char **argv)
{
	CLI::App app{"acceptance suite"};
	std::string only;
	std::string out;
	app.add_option("--only", only, "comma-separated criterion numbers");
	app.add_option("--out", out, "directory for artifacts");
	CLI11_PARSE(app, argc, argv);

	std::set<int> selected;
	for (const auto &t : splitList(only))
		selected.insert(std::stoi(t));
	const fs::path work =
		out.empty() ? fs::temp_directory_path() / "siie_acceptance" : fs::path(out);
	fs::create_directories(work);

	const std::vector<std::pair<const char *, std::function<Outcome()>>> criteria{
		{"gradient integrity", gradientIntegrity},
		{"analytic identities", analyticIdentities},
		{"histogram laws", histogramLaws},
		{"singular-matrix safeguard", singularSafeguard},
		{"overfit sanity", overfit},
		{"cross-sensor generalization", [&] { return crossSensor(work); }},
		{"baseline oracles", baselineOracles},
		{"determinism and persistence", [&] { return determinism(work / "criterion8"); }},
	};
	const double limits[] = {60, 0, 0, 0, 600, 2700, 0, 0};

	bool allOk = true;
	for (std::size_t i = 0; i < criteria.size(); ++i) {
		const int n = static_cast<int>(i) + 1;
		if (!selected.empty() && !selected.count(n))
			continue;
		const auto start = std::chrono::steady_clock::now();
		Outcome o;
		try {
			o = criteria[i].second();
		} catch (const std::exception &e) {
			o = {false, std::string("exception: ") + e.what()};
		}
		const double secs =
			std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		if (limits[i] > 0 && secs > limits[i]) {
			o.pass = false;
			o.detail += "; over the " + fmt("%.0f", limits[i]) + " s budget";
		}
		allOk = allOk && o.pass;
		std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " "
			  << criteria[i].first << ": " << o.detail << " [" << fmt("%.1f", secs) << " s]"
			  << std::endl;
	}
	return allOk ? 0 : 1;
}
