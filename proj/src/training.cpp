#include "siie/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "siie/config.hpp"
#include "siie/errors.hpp"
#include "siie/metrics.hpp"

namespace siie {

using nlohmann::json;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

std::uint64_t mixSeed(std::uint64_t x)
{
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

double parameterNorm(const Model &model)
{
	double s = 0.0;
	for (const Parameter *p : model.parameters())
		for (double v : p->tensor.data())
			s += v * v;
	return std::sqrt(s);
}

Tensor gtTensor(const Vec3 &gt)
{
	return Tensor::fromData({3}, {gt[0], gt[1], gt[2]});
}

} // namespace

void TrainConfig::validate() const
{
	if (!(lr >= 0.0) || !std::isfinite(lr))
		throw InvalidArgument("train: lr must be finite and non-negative");
	if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
		throw InvalidArgument("train: betas must lie in [0, 1)");
	if (!(adamEps > 0.0))
		throw InvalidArgument("train: adam_eps must be positive");
	if (batchSize < 1)
		throw InvalidArgument("train: batch_size must be at least 1");
	if (lrDecayEveryEpochs < 1)
		throw InvalidArgument("train: lr_decay_every_epochs must be at least 1");
	if (!(lrDecayFactor > 0.0 && lrDecayFactor <= 1.0))
		throw InvalidArgument("train: lr_decay_factor must lie in (0, 1]");
	if (!(validationFraction >= 0.0 && validationFraction < 1.0))
		throw InvalidArgument("train: validation_fraction must lie in [0, 1)");
}

double TrainConfig::lrAt(std::size_t epoch) const
{
	return lr * std::pow(lrDecayFactor, static_cast<double>(epoch / lrDecayEveryEpochs));
}

std::string sceneKey(const std::string &path)
{
	return std::filesystem::path(path).stem().string();
}

Sample makeSample(const RawImage &image)
{
	Sample s;
	s.pixels = pixelSetFor(image);
	s.gt = image.gt;
	s.id = image.path;
	s.cameraId = image.cameraId;
	s.scene = sceneKey(image.path);
	return s;
}

std::vector<Sample> makeSamples(std::span<const RawImage> images)
{
	std::vector<Sample> out;
	out.reserve(images.size());
	for (const auto &img : images)
		out.push_back(makeSample(img));
	return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>>
splitValidation(std::vector<Sample> samples, double fraction, std::uint64_t seed)
{
	if (fraction <= 0.0 || samples.empty())
		return {std::move(samples), {}};

	/* Whole scenes go to validation until each camera reaches its quota. */
	std::map<std::string, std::vector<std::size_t>> scenes;
	std::map<std::string, std::size_t> perCamera;
	for (std::size_t i = 0; i < samples.size(); ++i) {
		scenes[samples[i].scene].push_back(i);
		perCamera[samples[i].cameraId]++;
	}
	std::map<std::string, std::size_t> quota, taken;
	for (const auto &[cam, n] : perCamera)
		quota[cam] = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));

	std::vector<std::string> keys;
	for (const auto &[key, ids] : scenes)
		keys.push_back(key);
	std::mt19937_64 rng(mixSeed(seed ^ 0x7a11ULL));
	std::shuffle(keys.begin(), keys.end(), rng);

	std::set<std::size_t> chosen;
	for (const auto &key : keys) {
		const auto &ids = scenes[key];
		bool fits = true;
		std::map<std::string, std::size_t> add;
		for (std::size_t i : ids)
			add[samples[i].cameraId]++;
		for (const auto &[cam, n] : add)
			if (taken[cam] + n > quota[cam])
				fits = false;
		if (!fits)
			continue;
		for (const auto &[cam, n] : add)
			taken[cam] += n;
		chosen.insert(ids.begin(), ids.end());
	}
	/* Never leave training empty. */
	if (chosen.size() == samples.size())
		chosen.clear();

	std::vector<Sample> train, val;
	for (std::size_t i = 0; i < samples.size(); ++i)
		(chosen.count(i) ? val : train).push_back(std::move(samples[i]));
	return {std::move(train), std::move(val)};
}

void writeTrainLog(std::ostream &os, const std::vector<EpochLog> &log)
{
	os << kTrainLogHeader << '\n';
	for (const auto &e : log)
		os << e.epoch << ',' << e.step << ',' << formatDouble(e.lr) << ','
		   << formatDouble(e.trainLossDeg) << ','
		   << (std::isnan(e.valMeanDeg) ? std::string() : formatDouble(e.valMeanDeg))
		   << ',' << e.singularEvents << '\n';
}

/* ---------------------------------------------------------------------- */

Trainer::Trainer(Model model, TrainConfig config, std::vector<Sample> train,
		 std::vector<Sample> validation)
	: model_(std::move(model)), config_(config), train_(std::move(train)),
	  validation_(std::move(validation))
{
	config_.validate();
	if (train_.empty())
		throw InvalidArgument("train: training set is empty");
	state_.rng.seed(mixSeed(config_.seed));
	state_.lr = config_.lrAt(0);
}

const Model &Trainer::finalModel() const
{
	return best_ ? *best_ : model_;
}

double Trainer::sampleLossDeg(const Sample &sample)
{
	NoGradGuard noGrad;
	std::mt19937_64 rng(kInferenceJitterSeed);
	ForwardTrace t = forwardPass(model_, sample.pixels, rng, sample.id);
	return angularLoss(gtTensor(sample.gt), t.estimate).item() * kDeg;
}

double Trainer::meanErrorDeg(const Model &model, const std::vector<Sample> &samples) const
{
	NoGradGuard noGrad;
	if (samples.empty())
		return std::numeric_limits<double>::quiet_NaN();
	double total = 0.0;
	for (const auto &s : samples) {
		std::mt19937_64 rng(kInferenceJitterSeed);
		ForwardTrace t = forwardPass(model, s.pixels, rng, s.id);
		Vec3 est{t.estimate.at(0), t.estimate.at(1), t.estimate.at(2)};
		total += recoveryAngularError(s.gt, est);
	}
	return total / static_cast<double>(samples.size());
}

EpochLog Trainer::runEpoch()
{
	if (done())
		throw InvalidState("train: all epochs already completed");

	EpochLog entry;
	entry.epoch = state_.epoch;
	state_.lr = config_.lrAt(state_.epoch);
	entry.lr = state_.lr;

	std::vector<std::size_t> order(train_.size());
	for (std::size_t i = 0; i < order.size(); ++i)
		order[i] = i;
	std::shuffle(order.begin(), order.end(), state_.rng);

	AdamOptions adam{state_.lr, config_.beta1, config_.beta2, config_.adamEps};
	auto params = model_.parameters();
	double lossSum = 0.0;

	for (std::size_t begin = 0; begin < order.size(); begin += config_.batchSize) {
		const std::size_t end = std::min(order.size(), begin + config_.batchSize);
		const double scale = 1.0 / static_cast<double>(end - begin);
		std::vector<std::string> ids;
		try {
			for (std::size_t k = begin; k < end; ++k) {
				const Sample &s = train_[order[k]];
				ids.push_back(s.id);
				ForwardTrace t = forwardPass(model_, s.pixels, state_.rng, s.id);
				if (t.mapping.jittered)
					entry.singularEvents++;
				Tensor loss = angularLoss(gtTensor(s.gt), t.estimate);
				const double value = loss.item();
				if (!std::isfinite(value))
					throw NumericDomainError("loss", "non-finite value");
				lossSum += value * kDeg;
				mulScalar(loss, scale).backward();
			}
			for (Parameter *p : params) {
				p->tensor.gradBuffer();
				for (double g : p->tensor.grad())
					if (!std::isfinite(g))
						throw NumericDomainError(p->name, "non-finite gradient");
			}
		} catch (const NumericDomainError &e) {
			std::ostringstream msg;
			msg << "training aborted at epoch " << state_.epoch << " step " << state_.step
			    << ": " << e.what() << "; batch [";
			for (std::size_t i = 0; i < ids.size(); ++i)
				msg << (i ? ", " : "") << ids[i];
			msg << "]; parameter norm " << parameterNorm(model_);
			for (Parameter *p : params)
				p->tensor.zeroGrad();
			throw TrainingAbort(msg.str());
		} catch (const SingularMatrixError &e) {
			for (Parameter *p : params)
				p->tensor.zeroGrad();
			throw TrainingAbort(std::string("training aborted: ") + e.what() +
					    "; parameter norm " + std::to_string(parameterNorm(model_)));
		}
		adamStep(params, adam);
		state_.step++;
	}

	entry.step = state_.step;
	entry.trainLossDeg = lossSum / static_cast<double>(train_.size());
	if (!validation_.empty()) {
		entry.valMeanDeg = meanErrorDeg(model_, validation_);
		if (entry.valMeanDeg < state_.bestVal) {
			state_.bestVal = entry.valMeanDeg;
			best_ = model_;
		}
	}
	state_.epoch++;
	state_.lr = config_.lrAt(state_.epoch);
	log_.push_back(entry);
	return entry;
}

void Trainer::run(std::optional<std::size_t> untilEpoch,
		  const std::function<void(const EpochLog &)> &onEpoch)
{
	const std::size_t stop = std::min(config_.maxEpochs, untilEpoch.value_or(config_.maxEpochs));
	while (state_.epoch < stop) {
		EpochLog e = runEpoch();
		if (onEpoch)
			onEpoch(e);
	}
}

/* ---------------------------------------------------------------------- */

namespace {

constexpr char kMagic[4] = {'S', 'I', 'I', 'E'};

enum class BufferKind { Param, AdamM, AdamV, Best, BestM, BestV };

const char *kindName(BufferKind k)
{
	switch (k) {
	case BufferKind::Param:
		return "param";
	case BufferKind::AdamM:
		return "adam_m";
	case BufferKind::AdamV:
		return "adam_v";
	case BufferKind::Best:
		return "best";
	case BufferKind::BestM:
		return "best_adam_m";
	case BufferKind::BestV:
		return "best_adam_v";
	}
	return "";
}

struct BlobWriter {
	json table = json::array();
	std::vector<float> blob;

	void add(const std::string &name, const Shape &shape, BufferKind kind,
		 std::span<const double> values, std::int64_t step)
	{
		table.push_back({{"name", name},
				 {"shape", shape},
				 {"offset", blob.size()},
				 {"kind", kindName(kind)},
				 {"step", step}});
		for (double v : values)
			blob.push_back(static_cast<float>(v));
	}

	void addModel(const Model &model, bool best)
	{
		for (const Parameter *p : model.parameters()) {
			add(p->name, p->tensor.shape(), best ? BufferKind::Best : BufferKind::Param,
			    p->tensor.data(), p->step);
			add(p->name, p->tensor.shape(), best ? BufferKind::BestM : BufferKind::AdamM,
			    p->firstMoment, p->step);
			add(p->name, p->tensor.shape(), best ? BufferKind::BestV : BufferKind::AdamV,
			    p->secondMoment, p->step);
		}
	}
};

void writeFile(const std::filesystem::path &path, const json &header,
	       const std::vector<float> &blob)
{
	const std::string text = header.dump();
	std::string bytes(kMagic, 4);
	auto putLe = [&bytes](std::uint64_t v, int n) {
		for (int i = 0; i < n; ++i)
			bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
	};
	putLe(kCheckpointVersion, 2);
	putLe(text.size(), 4);
	bytes += text;
	for (float f : blob) {
		std::uint32_t u;
		std::memcpy(&u, &f, 4);
		putLe(u, 4);
	}
	const auto tmp = std::filesystem::path(path.string() + ".tmp");
	{
		std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
		if (!out)
			throw IoError("cannot write checkpoint " + path.string());
		out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
		if (!out)
			throw IoError("failed writing checkpoint " + path.string());
	}
	std::filesystem::rename(tmp, path);
}

struct LoadedFile {
	json header;
	std::vector<float> blob;
};

LoadedFile readFile(const std::filesystem::path &path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw IoError("cannot open checkpoint " + path.string());
	std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
	if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 4) != 0)
		throw FormatError(path.string() + ": not a checkpoint (bad magic)");
	auto getLe = [&bytes](std::size_t at, int n) {
		std::uint64_t v = 0;
		for (int i = 0; i < n; ++i)
			v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
		return v;
	};
	const auto version = getLe(4, 2);
	if (version != kCheckpointVersion)
		throw VersionError(path.string() + ": checkpoint version " + std::to_string(version) +
				   " is not supported (expected " +
				   std::to_string(kCheckpointVersion) + ")");
	const std::size_t headerLen = getLe(6, 4);
	if (bytes.size() < 10 + headerLen)
		throw FormatError(path.string() + ": truncated checkpoint header");
	LoadedFile f;
	try {
		f.header = json::parse(bytes.substr(10, headerLen));
	} catch (const json::exception &e) {
		throw FormatError(path.string() + ": corrupt checkpoint header: " + e.what());
	}
	const std::size_t payload = bytes.size() - 10 - headerLen;
	if (payload % 4 != 0)
		throw FormatError(path.string() + ": truncated checkpoint payload");
	f.blob.resize(payload / 4);
	for (std::size_t i = 0; i < f.blob.size(); ++i) {
		const auto u = static_cast<std::uint32_t>(getLe(10 + headerLen + 4 * i, 4));
		std::memcpy(&f.blob[i], &u, 4);
	}
	return f;
}

/* Fills `model` with the buffers of the given kinds; every parameter must be present. */
void restoreModel(Model &model, const LoadedFile &f, bool best,
		  const std::filesystem::path &path)
{
	std::map<std::pair<std::string, std::string>, const json *> index;
	try {
		for (const auto &entry : f.header.at("tensors"))
			index[{entry.at("name").get<std::string>(), entry.at("kind").get<std::string>()}] =
				&entry;
	} catch (const json::exception &e) {
		throw FormatError(path.string() + ": bad tensor table: " + e.what());
	}

	auto fetch = [&](const Parameter &p, const std::string &kind) {
		auto it = index.find({p.name, kind});
		if (it == index.end())
			throw FormatError(path.string() + ": missing " + kind + " buffer for " + p.name);
		const json &e = *it->second;
		Shape shape = e.at("shape").get<Shape>();
		if (shape != p.tensor.shape())
			throw FormatError(path.string() + ": shape mismatch for " + p.name);
		const std::size_t offset = e.at("offset").get<std::size_t>();
		if (offset + p.tensor.numel() > f.blob.size())
			throw FormatError(path.string() + ": truncated checkpoint payload");
		std::vector<double> values(p.tensor.numel());
		for (std::size_t i = 0; i < values.size(); ++i)
			values[i] = f.blob[offset + i];
		return std::make_pair(std::move(values), e.at("step").get<std::int64_t>());
	};

	/* Stage everything first so a failure leaves no partial model. */
	Model staged = model;
	for (Parameter *p : staged.parameters()) {
		auto [values, step] = fetch(*p, best ? "best" : "param");
		std::copy(values.begin(), values.end(), p->tensor.mutableData().begin());
		p->step = step;
		p->firstMoment = fetch(*p, best ? "best_adam_m" : "adam_m").first;
		p->secondMoment = fetch(*p, best ? "best_adam_v" : "adam_v").first;
	}
	model = std::move(staged);
}

Model modelFromHeader(const LoadedFile &f, const std::filesystem::path &path)
{
	try {
		ModelConfig cfg = applyJson(ModelConfig{}, f.header.at("model_config"));
		return Model(cfg, 0);
	} catch (const json::exception &e) {
		throw FormatError(path.string() + ": bad model config: " + e.what());
	} catch (const InvalidArgument &e) {
		throw FormatError(path.string() + ": bad model config: " + e.what());
	}
}

} // namespace

void saveCheckpoint(const std::filesystem::path &path, const Model &model)
{
	BlobWriter w;
	w.addModel(model, false);
	json header{{"model_config", toJson(model.config())}, {"tensors", w.table}};
	writeFile(path, header, w.blob);
}

Model loadCheckpoint(const std::filesystem::path &path)
{
	LoadedFile f = readFile(path);
	Model model = modelFromHeader(f, path);
	restoreModel(model, f, false, path);
	return model;
}

void Trainer::saveCheckpoint(const std::filesystem::path &path) const
{
	BlobWriter w;
	w.addModel(model_, false);
	if (best_)
		w.addModel(*best_, true);

	std::ostringstream rng;
	rng << state_.rng;
	json log = json::array();
	for (const auto &e : log_)
		log.push_back({e.epoch, e.step, e.lr, e.trainLossDeg,
			       std::isnan(e.valMeanDeg) ? json(nullptr) : json(e.valMeanDeg),
			       e.singularEvents});
	json state{{"epoch", state_.epoch},
		   {"step", state_.step},
		   {"lr", state_.lr},
		   {"best_val", std::isfinite(state_.bestVal) ? json(state_.bestVal) : json(nullptr)},
		   {"has_best", best_.has_value()},
		   {"rng", rng.str()},
		   {"log", log}};
	json header{{"model_config", toJson(model_.config())},
		    {"train_config", toJson(config_)},
		    {"train_state", state},
		    {"tensors", w.table}};
	writeFile(path, header, w.blob);
}

Trainer Trainer::resume(const std::filesystem::path &path, std::vector<Sample> train,
			std::vector<Sample> validation)
{
	LoadedFile f = readFile(path);
	if (!f.header.contains("train_state") || !f.header.contains("train_config"))
		throw FormatError(path.string() + ": checkpoint carries no training state");
	Model model = modelFromHeader(f, path);
	restoreModel(model, f, false, path);

	TrainConfig cfg;
	try {
		cfg = applyJson(TrainConfig{}, f.header.at("train_config"));
	} catch (const std::exception &e) {
		throw FormatError(path.string() + ": bad train config: " + e.what());
	}
	Trainer t(std::move(model), cfg, std::move(train), std::move(validation));
	try {
		const json &s = f.header.at("train_state");
		t.state_.epoch = s.at("epoch").get<std::size_t>();
		t.state_.step = s.at("step").get<std::size_t>();
		t.state_.lr = s.at("lr").get<double>();
		t.state_.bestVal = s.at("best_val").is_null() ? std::numeric_limits<double>::infinity()
							      : s.at("best_val").get<double>();
		std::istringstream rng(s.at("rng").get<std::string>());
		rng >> t.state_.rng;
		if (!rng)
			throw FormatError(path.string() + ": bad generator state");
		for (const auto &row : s.at("log")) {
			EpochLog e;
			e.epoch = row.at(0).get<std::size_t>();
			e.step = row.at(1).get<std::size_t>();
			e.lr = row.at(2).get<double>();
			e.trainLossDeg = row.at(3).get<double>();
			e.valMeanDeg = row.at(4).is_null() ? std::numeric_limits<double>::quiet_NaN()
							   : row.at(4).get<double>();
			e.singularEvents = row.at(5).get<std::size_t>();
			t.log_.push_back(e);
		}
		if (s.at("has_best").get<bool>()) {
			Model best = t.model_;
			restoreModel(best, f, true, path);
			t.best_ = std::move(best);
		}
	} catch (const json::exception &e) {
		throw FormatError(path.string() + ": bad training state: " + e.what());
	}
	return t;
}

} // namespace siie
