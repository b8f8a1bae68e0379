#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "siie/dataio.hpp"
#include "siie/errors.hpp"

using namespace siie;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name)
{
	fs::path p = fs::temp_directory_path() / ("siie_dataio_" + name);
	fs::remove_all(p);
	fs::create_directories(p);
	return p;
}

DatasetManifest parse(const std::string &text)
{
	std::istringstream in(text);
	return parseManifest(in, "/data");
}

RawImage pattern(std::size_t w, std::size_t h, std::uint64_t seed)
{
	std::mt19937_64 rng(seed);
	std::uniform_int_distribution<int> code(0, 65535);
	RawImage img;
	img.width = w;
	img.height = h;
	img.rgb.resize(w * h * 3);
	for (float &v : img.rgb)
		v = static_cast<float>(code(rng)) / 65535.0f;
	return img;
}

} // namespace

TEST_CASE("manifest with only a header")
{
	DatasetManifest m = parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\n");
	CHECK(m.entries.empty());
}

TEST_CASE("manifest normalises ground truth and keeps optional masks")
{
	DatasetManifest m = parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\n"
				  "a.png,camA,2,1,1,\n"
				  "\"dir,x/b.png\",camB,1,1,1,b_mask.png\n");
	REQUIRE(m.entries.size() == 2);
	CHECK(m.entries[0].gt[0] == doctest::Approx(2 / std::sqrt(6.0)));
	CHECK(m.entries[0].maskPath.empty());
	CHECK(m.entries[1].imagePath == "dir,x/b.png");
	CHECK(m.entries[1].maskPath == "b_mask.png");
	CHECK(m.cameras() == std::vector<std::string>{"camA", "camB"});
	CHECK(m.resolve("a.png") == fs::path("/data/a.png"));
}

TEST_CASE("manifest rejects duplicates and malformed rows with line numbers")
{
	try {
		parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\n"
		      "a.png,c,1,1,1,\n"
		      "a.png,c,1,1,1,\n");
		FAIL("expected a parse error");
	} catch (const ParseError &e) {
		CHECK(e.line() == 3);
		CHECK(std::string(e.what()).find("a.png") != std::string::npos);
	}
	try {
		parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\n"
		      "a.png,c,1,x,1,\n");
		FAIL("expected a parse error");
	} catch (const ParseError &e) {
		CHECK(e.line() == 2);
	}
	CHECK_THROWS_AS(parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\n,c,1,1,1,\n"),
			ParseError);
	CHECK_THROWS_AS(parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\na,,1,1,1,\n"),
			ParseError);
	CHECK_THROWS_AS(parse("wrong,header\n"), ParseError);
	CHECK_THROWS_AS(loadManifest("/nonexistent/manifest.csv"), IoError);
}

TEST_CASE("manifest write and load round-trip")
{
	fs::path dir = scratch("manifest");
	DatasetManifest m;
	m.root = dir;
	m.entries.push_back({"x/a.rawf", "cam1", {0.6, 0.7, 0.3872983346207417}, ""});
	m.entries.push_back({"x/b.rawf", "cam2", {0.2, 0.9, 0.3872983346207417}, "m.png"});
	writeManifest(dir / "manifest.csv", m);
	DatasetManifest back = loadManifest(dir / "manifest.csv");
	REQUIRE(back.entries.size() == 2);
	CHECK(back.root == dir);
	for (std::size_t i = 0; i < 2; ++i) {
		CHECK(back.entries[i].imagePath == m.entries[i].imagePath);
		CHECK(back.entries[i].cameraId == m.entries[i].cameraId);
		CHECK(back.entries[i].maskPath == m.entries[i].maskPath);
		for (int c = 0; c < 3; ++c)
			CHECK(back.entries[i].gt[c] == doctest::Approx(m.entries[i].gt[c]).epsilon(1e-12));
	}
}

TEST_CASE("raw float and 16-bit png round trips")
{
	fs::path dir = scratch("images");
	RawImage img = pattern(7, 5, 1);
	writeRawFloat(dir / "a.rawf", img);
	RawImage raw = readImageFile(dir / "a.rawf");
	CHECK(raw.width == 7);
	CHECK(raw.height == 5);
	CHECK(raw.rgb == img.rgb);

	writePng16(dir / "a.png", img);
	RawImage png = readImageFile(dir / "a.png");
	REQUIRE(png.rgb.size() == img.rgb.size());
	for (std::size_t i = 0; i < img.rgb.size(); ++i)
		CHECK(png.rgb[i] == doctest::Approx(img.rgb[i]).epsilon(1e-6));

	std::vector<std::uint8_t> mask(35, 0);
	mask[3] = 255;
	writeMaskPng(dir / "m.png", mask, 7, 5);
	std::size_t w = 0, h = 0;
	auto back = readMaskFile(dir / "m.png", w, h);
	CHECK(w == 7);
	CHECK(back[3] != 0);
	CHECK(back[4] == 0);

	/* An 8-bit greyscale PNG is not a supported image. */
	CHECK_THROWS_AS(readImageFile(dir / "m.png"), FormatError);
	std::ofstream(dir / "junk.bin") << "not an image";
	CHECK_THROWS_AS(readImageFile(dir / "junk.bin"), FormatError);
	std::ofstream(dir / "short.rawf", std::ios::binary) << "RAWF\x04";
	CHECK_THROWS_AS(readImageFile(dir / "short.rawf"), FormatError);
}

TEST_CASE("area resize of constants and checkerboards")
{
	RawImage flat;
	flat.width = flat.height = 300;
	flat.rgb.assign(300 * 300 * 3, 0.3f);
	RawImage t = toThumbnail(flat);
	CHECK(t.width == 150);
	CHECK(t.height == 150);
	for (float v : t.rgb)
		CHECK(v == doctest::Approx(0.3f));

	RawImage board;
	board.width = board.height = 300;
	board.rgb.resize(300 * 300 * 3);
	for (std::size_t y = 0; y < 300; ++y)
		for (std::size_t x = 0; x < 300; ++x)
			for (int c = 0; c < 3; ++c)
				board.rgb[(y * 300 + x) * 3 + c] = ((x + y) % 2) ? 1.0f : 0.0f;
	t = toThumbnail(board);
	for (float v : t.rgb)
		CHECK(v == 0.5f);

	RawImage small = pattern(150, 150, 3);
	RawImage same = toThumbnail(small);
	CHECK(same.rgb == small.rgb);
}

TEST_CASE("non-integer resize preserves the mean")
{
	RawImage img = pattern(7, 5, 4);
	auto out = areaResize(img.rgb, 7, 5, 3, 2);
	double a = 0, b = 0;
	for (std::size_t i = 0; i < img.rgb.size(); i += 3)
		a += img.rgb[i];
	for (std::size_t i = 0; i < out.size(); i += 3)
		b += out[i];
	CHECK(a / 35 == doctest::Approx(b / 6).epsilon(1e-5));
}

TEST_CASE("mask resize never unmasks")
{
	std::vector<std::uint8_t> mask(300 * 300, 0);
	mask[301] = 1;
	auto small = maskResize(mask, 300, 300, 150, 150);
	CHECK(small[0] != 0);
	std::size_t count = 0;
	for (auto v : small)
		count += v != 0;
	CHECK(count == 1);
}

TEST_CASE("saturated pixels join the mask")
{
	RawImage img = pattern(3, 1, 0);
	img.rgb = {0.5f, 0.5f, 0.5f, 0.99f, 0.1f, 0.1f, 0.2f, 0.98f, 0.2f};
	maskSaturated(img);
	REQUIRE(img.mask.size() == 3);
	CHECK(img.mask[0] == 0);
	CHECK(img.mask[1] != 0);
	CHECK(img.mask[2] != 0);
}

TEST_CASE("folds partition the manifest")
{
	DatasetManifest m = parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\n"
				  "a1,A,1,1,1,\nb1,B,1,1,1,\nc1,C,1,1,1,\na2,A,1,1,1,\nc2,C,1,1,1,\n");
	auto folds = makeFolds(m);
	REQUIRE(folds.size() == 3);
	CHECK(folds[0].testCamera == "A");
	for (const auto &f : folds) {
		CHECK(f.trainIds.size() + f.testIds.size() == 5);
		for (auto i : f.testIds)
			CHECK(m.entries[i].cameraId == f.testCamera);
		for (auto i : f.trainIds)
			CHECK(m.entries[i].cameraId != f.testCamera);
	}
	const std::vector<std::string> held{"A", "B"};
	FoldPlan cross = makeExclusionPlan(m, held);
	CHECK(cross.testIds.size() == 3);
	CHECK(cross.trainIds.size() == 2);

	DatasetManifest single = parse("image_path,camera_id,gt_r,gt_g,gt_b,mask_path\na,A,1,1,1,\n");
	CHECK_THROWS_AS(makeFolds(single), InvalidInput);
}

TEST_CASE("full load applies mask, saturation and thumbnail")
{
	fs::path dir = scratch("load");
	RawImage img = pattern(300, 200, 9);
	for (float &v : img.rgb)
		v *= 0.5f;
	img.rgb[0] = 1.0f;
	writePng16(dir / "i.png", img);
	std::vector<std::uint8_t> mask(300 * 200, 0);
	mask[300 * 199 + 299] = 1;
	writeMaskPng(dir / "m.png", mask, 300, 200);
	std::ofstream(dir / "manifest.csv") << "image_path,camera_id,gt_r,gt_g,gt_b,mask_path\n"
					       "i.png,cam,1,2,1,m.png\n";
	DatasetManifest m = loadManifest(dir / "manifest.csv");
	RawImage loaded = loadImage(m, m.entries[0]);
	CHECK(loaded.width == 150);
	CHECK(loaded.height == 150);
	CHECK(loaded.cameraId == "cam");
	CHECK(loaded.gt[1] == doctest::Approx(2 / std::sqrt(6.0)));
	REQUIRE(loaded.mask.size() == 150 * 150);
	CHECK(loaded.mask[0] != 0);
	CHECK(loaded.mask.back() != 0);
	CHECK(loaded.mask[75] == 0);
}

TEST_CASE("manifest tolerates a byte order mark and CRLF")
{
	DatasetManifest m = parse("\xEF\xBB\xBFimage_path,camera_id,gt_r,gt_g,gt_b,mask_path\r\n"
				  "a.png,c,1,1,1,\r\n");
	REQUIRE(m.entries.size() == 1);
	CHECK(m.entries[0].maskPath.empty());
}
