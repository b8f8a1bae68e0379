#include "siie/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "json.hpp"

#include "siie/errors.hpp"

namespace siie {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b)
{
	std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

/* Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations. */
std::array<double, 3> symmetricEigenvalues(std::array<double, 9> a)
{
	for (int sweep = 0; sweep < 50; ++sweep) {
		const double off = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
		if (off < 1e-30)
			break;
		for (int p = 0; p < 2; ++p)
			for (int q = p + 1; q < 3; ++q) {
				const double apq = a[p * 3 + q];
				if (std::fabs(apq) < 1e-300)
					continue;
				const double theta = (a[q * 3 + q] - a[p * 3 + p]) / (2.0 * apq);
				const double t = (theta >= 0 ? 1.0 : -1.0) /
						 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
				const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
				for (int k = 0; k < 3; ++k) {
					const double akp = a[k * 3 + p], akq = a[k * 3 + q];
					a[k * 3 + p] = c * akp - s * akq;
					a[k * 3 + q] = s * akp + c * akq;
				}
				for (int k = 0; k < 3; ++k) {
					const double apk = a[p * 3 + k], aqk = a[q * 3 + k];
					a[p * 3 + k] = c * apk - s * aqk;
					a[q * 3 + k] = s * apk + c * aqk;
				}
			}
	}
	return {a[0], a[4], a[8]};
}

Vec3 applyMat(const Mat3 &m, const Vec3 &v)
{
	return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
		m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

Vec3 unit(Vec3 v)
{
	const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
	return {v[0] / n, v[1] / n, v[2] / n};
}

/* Chromaticity (r, b) in [0.2, 0.45]^2, g = 1 - r - b, every component >= 0.15. */
Vec3 sampleIlluminant(std::mt19937_64 &rng)
{
	std::uniform_real_distribution<double> chroma(0.2, 0.45);
	for (;;) {
		const double r = chroma(rng), b = chroma(rng);
		const double g = 1.0 - r - b;
		if (r >= 0.15 && g >= 0.15 && b >= 0.15)
			return unit({r, g, b});
	}
}

} // namespace

void SynthConfig::validate() const
{
	if (scenes < 1)
		throw InvalidArgument("synth: need at least one scene");
	if (sensorMatrices.empty() && sensors < 2)
		throw InvalidArgument("synth: need at least two sensors");
	if (!sensorMatrices.empty() && sensorMatrices.size() != sensors)
		throw InvalidArgument("synth: sensor matrix count does not match sensors");
	if (width < 2 || height < 2)
		throw InvalidArgument("synth: images must be at least 2x2");
}

std::string synthCameraId(std::size_t sensor)
{
	return "synth_" + std::to_string(sensor);
}

double conditionNumber(const Mat3 &m)
{
	std::array<double, 9> ata{};
	for (int i = 0; i < 3; ++i)
		for (int j = 0; j < 3; ++j)
			for (int k = 0; k < 3; ++k)
				ata[i * 3 + j] += m[k * 3 + i] * m[k * 3 + j];
	auto ev = symmetricEigenvalues(ata);
	const double hi = *std::max_element(ev.begin(), ev.end());
	const double lo = *std::min_element(ev.begin(), ev.end());
	if (lo <= 0.0)
		return std::numeric_limits<double>::infinity();
	return std::sqrt(hi / lo);
}

Mat3 randomSensorMatrix(std::uint64_t seed)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> gain(0.6, 1.4);
	std::uniform_real_distribution<double> cross(0.02, 0.35);
	for (;;) {
		Mat3 m{};
		for (int i = 0; i < 3; ++i) {
			const double g = gain(rng);
			for (int j = 0; j < 3; ++j)
				m[i * 3 + j] = g * (i == j ? 1.0 : cross(rng));
		}
		if (conditionNumber(m) <= 5.0)
			return m;
	}
}

SynthDataset synthGenerate(const SynthConfig &cfg)
{
	cfg.validate();
	SynthDataset data;
	if (!cfg.sensorMatrices.empty()) {
		data.sensors = cfg.sensorMatrices;
	} else {
		for (std::size_t k = 0; k < cfg.sensors; ++k)
			data.sensors.push_back(randomSensorMatrix(mix(cfg.seed, 1000 + k)));
	}

	const std::size_t w = cfg.width, h = cfg.height, n = w * h;
	data.images.reserve(cfg.scenes * data.sensors.size());
	std::vector<std::size_t> label(n);
	std::vector<Vec3> canonical(n);
	for (std::size_t s = 0; s < cfg.scenes; ++s) {
		std::mt19937_64 rng(mix(cfg.seed, 0x5ce7e000ULL + s));
		std::uniform_int_distribution<int> patchCount(8, 64);
		std::uniform_real_distribution<double> reflect(0.05, 0.95);
		std::uniform_real_distribution<double> pos(0.0, 1.0);
		std::uniform_real_distribution<double> exposure(0.6, 0.9);

		const int k = patchCount(rng);
		std::vector<std::array<double, 2>> seeds(k);
		std::vector<Vec3> reflectance(k);
		for (int i = 0; i < k; ++i) {
			seeds[i] = {pos(rng) * w, pos(rng) * h};
			reflectance[i] = {reflect(rng), reflect(rng), reflect(rng)};
		}
		const Vec3 light = sampleIlluminant(rng);
		data.canonicalIlluminants.push_back(light);

		for (std::size_t y = 0; y < h; ++y)
			for (std::size_t x = 0; x < w; ++x) {
				double best = std::numeric_limits<double>::max();
				std::size_t arg = 0;
				for (int i = 0; i < k; ++i) {
					const double dx = x + 0.5 - seeds[i][0], dy = y + 0.5 - seeds[i][1];
					const double d = dx * dx + dy * dy;
					if (d < best) {
						best = d;
						arg = i;
					}
				}
				label[y * w + x] = arg;
			}
		for (std::size_t i = 0; i < n; ++i)
			for (int c = 0; c < 3; ++c)
				canonical[i][c] = light[c] * reflectance[label[i]][c];

		for (std::size_t sensor = 0; sensor < data.sensors.size(); ++sensor) {
			const Mat3 &A = data.sensors[sensor];
			RawImage img;
			img.width = w;
			img.height = h;
			img.cameraId = synthCameraId(sensor);
			char name[64];
			std::snprintf(name, sizeof(name), "%s/scene_%06zu.rawf", img.cameraId.c_str(), s);
			img.path = name;
			img.gt = unit(applyMat(A, light));

			std::vector<Vec3> observed(n);
			double peak = 0.0;
			for (std::size_t i = 0; i < n; ++i) {
				observed[i] = applyMat(A, canonical[i]);
				peak = std::max({peak, observed[i][0], observed[i][1], observed[i][2]});
			}
			const double scale = exposure(rng) / peak;
			img.rgb.resize(3 * n);
			for (std::size_t i = 0; i < n; ++i)
				for (int c = 0; c < 3; ++c)
					img.rgb[3 * i + c] = static_cast<float>(observed[i][c] * scale);
			data.images.push_back(std::move(img));
		}
	}
	return data;
}

DatasetManifest synthWrite(const SynthDataset &data, const std::filesystem::path &dir)
{
	namespace fs = std::filesystem;
	fs::create_directories(dir);
	for (std::size_t k = 0; k < data.sensors.size(); ++k)
		fs::create_directories(dir / synthCameraId(k));

	DatasetManifest manifest;
	manifest.root = dir;
	for (const auto &img : data.images) {
		writeRawFloat(dir / img.path, img);
		manifest.entries.push_back({img.path, img.cameraId, img.gt, ""});
	}
	writeManifest(dir / "manifest.csv", manifest);

	nlohmann::json meta;
	meta["sensors"] = nlohmann::json::array();
	for (std::size_t k = 0; k < data.sensors.size(); ++k)
		meta["sensors"].push_back({{"camera_id", synthCameraId(k)},
					   {"matrix", data.sensors[k]}});
	meta["canonical_illuminants"] = data.canonicalIlluminants;
	std::ofstream out(dir / "sensors.json");
	out << meta.dump(1) << '\n';
	if (!out)
		throw IoError("failed writing " + (dir / "sensors.json").string());
	return manifest;
}

} // namespace siie
