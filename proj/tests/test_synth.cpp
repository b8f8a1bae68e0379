#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "siie/dataio.hpp"
#include "siie/errors.hpp"
#include "siie/synth.hpp"

using namespace siie;

namespace {

Vec3 mulVec(const Mat3 &m, const Vec3 &v)
{
	return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
		m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

Mat3 inv(const Mat3 &m)
{
	const double d = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
			 m[2] * (m[3] * m[7] - m[4] * m[6]);
	return {(m[4] * m[8] - m[5] * m[7]) / d, (m[2] * m[7] - m[1] * m[8]) / d,
		(m[1] * m[5] - m[2] * m[4]) / d, (m[5] * m[6] - m[3] * m[8]) / d,
		(m[0] * m[8] - m[2] * m[6]) / d, (m[2] * m[3] - m[0] * m[5]) / d,
		(m[3] * m[7] - m[4] * m[6]) / d, (m[1] * m[6] - m[0] * m[7]) / d,
		(m[0] * m[4] - m[1] * m[3]) / d};
}

Vec3 unit(Vec3 v)
{
	const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
	return {v[0] / n, v[1] / n, v[2] / n};
}

} // namespace

TEST_CASE("sensor matrices are positive and well conditioned")
{
	for (std::uint64_t seed = 0; seed < 50; ++seed) {
		Mat3 a = randomSensorMatrix(seed);
		for (double v : a)
			CHECK(v > 0.0);
		CHECK(conditionNumber(a) <= 5.0);
		CHECK(randomSensorMatrix(seed) == a);
	}
	Mat3 id{1, 0, 0, 0, 1, 0, 0, 0, 1};
	CHECK(conditionNumber(id) == doctest::Approx(1.0));
}

TEST_CASE("inverting each sensor recovers the canonical illuminant")
{
	SynthConfig cfg;
	cfg.scenes = 6;
	cfg.sensors = 4;
	cfg.width = cfg.height = 12;
	cfg.seed = 5;
	SynthDataset d = synthGenerate(cfg);
	REQUIRE(d.images.size() == 24);
	REQUIRE(d.sensors.size() == 4);
	for (std::size_t i = 0; i < d.images.size(); ++i) {
		const RawImage &img = d.images[i];
		CHECK(img.cameraId == synthCameraId(d.sensorOf(i)));
		Vec3 back = unit(mulVec(inv(d.sensors[d.sensorOf(i)]), img.gt));
		const Vec3 &canon = d.canonicalIlluminants[d.sceneOf(i)];
		for (int c = 0; c < 3; ++c)
			CHECK(back[c] == doctest::Approx(canon[c]).epsilon(1e-6));
		for (float v : img.rgb) {
			CHECK(v > 0.0f);
			CHECK(v < 0.98f);
		}
	}
}

TEST_CASE("identity sensor reproduces canonical rendering")
{
	SynthConfig cfg;
	cfg.scenes = 3;
	cfg.sensors = 2;
	cfg.width = cfg.height = 8;
	cfg.sensorMatrices = {Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1}, Mat3{2, 0, 0, 0, 2, 0, 0, 0, 2}};
	SynthDataset d = synthGenerate(cfg);
	for (std::size_t s = 0; s < 3; ++s) {
		const RawImage &a = d.images[s * 2];
		const RawImage &b = d.images[s * 2 + 1];
		for (int c = 0; c < 3; ++c)
			CHECK(a.gt[c] == doctest::Approx(d.canonicalIlluminants[s][c]));
		/* A uniform scale is a pure exposure change, the exposure draw differs. */
		const double ratio = b.rgb[0] / a.rgb[0];
		for (std::size_t i = 0; i < a.rgb.size(); ++i)
			CHECK(b.rgb[i] / a.rgb[i] == doctest::Approx(ratio).epsilon(1e-5));
	}
}

TEST_CASE("generation is deterministic in the seed")
{
	SynthConfig cfg;
	cfg.scenes = 2;
	cfg.sensors = 2;
	cfg.width = cfg.height = 10;
	cfg.seed = 11;
	SynthDataset a = synthGenerate(cfg), b = synthGenerate(cfg);
	for (std::size_t i = 0; i < a.images.size(); ++i)
		CHECK(a.images[i].rgb == b.images[i].rgb);
	cfg.seed = 12;
	SynthDataset c = synthGenerate(cfg);
	CHECK(c.images[0].rgb != a.images[0].rgb);
}

TEST_CASE("invalid synth configurations")
{
	SynthConfig cfg;
	cfg.scenes = 0;
	CHECK_THROWS_AS(synthGenerate(cfg), InvalidArgument);
	cfg.scenes = 1;
	cfg.sensors = 0;
	CHECK_THROWS_AS(synthGenerate(cfg), InvalidArgument);
	cfg.sensors = 2;
	cfg.sensorMatrices = {Mat3{1, 0, 0, 0, 1, 0, 0, 0, 1}};
	CHECK_THROWS_AS(synthGenerate(cfg), InvalidArgument);
}

TEST_CASE("written dataset loads back")
{
	namespace fs = std::filesystem;
	fs::path dir = fs::temp_directory_path() / "siie_synth_write";
	fs::remove_all(dir);
	SynthConfig cfg;
	cfg.scenes = 3;
	cfg.sensors = 2;
	cfg.width = cfg.height = 6;
	SynthDataset d = synthGenerate(cfg);
	synthWrite(d, dir);
	DatasetManifest m = loadManifest(dir / "manifest.csv");
	REQUIRE(m.entries.size() == 6);
	CHECK(m.cameras().size() == 2);
	CHECK(fs::exists(dir / "sensors.json"));
	RawImage img = loadImage(m, m.entries[0]);
	CHECK(img.rgb == d.images[0].rgb);
}
