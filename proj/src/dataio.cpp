#include "siie/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <png.h>

#include "siie/errors.hpp"
#include "siie/metrics.hpp"

namespace siie {

void RawImage::validate() const
{
	if (width == 0 || height == 0)
		throw InvalidInput("image " + path + " has no pixels");
	if (rgb.size() != width * height * 3)
		throw InvalidInput("image " + path + ": pixel buffer does not match " +
				   std::to_string(width) + "x" + std::to_string(height));
	if (!mask.empty() && mask.size() != width * height)
		throw InvalidInput("image " + path + ": mask does not match image size");
}

/* ---------------------------------------------------------------- manifest */

std::vector<std::string> splitCsvLine(const std::string &line, std::size_t lineNo)
{
	std::vector<std::string> fields;
	std::string cur;
	bool quoted = false;
	for (std::size_t i = 0; i < line.size(); ++i) {
		const char ch = line[i];
		if (quoted) {
			if (ch == '"') {
				if (i + 1 < line.size() && line[i + 1] == '"') {
					cur += '"';
					++i;
				} else {
					quoted = false;
				}
			} else {
				cur += ch;
			}
		} else if (ch == '"') {
			quoted = true;
		} else if (ch == ',') {
			fields.push_back(std::move(cur));
			cur.clear();
		} else {
			cur += ch;
		}
	}
	if (quoted)
		throw ParseError("unterminated quoted field", lineNo);
	fields.push_back(std::move(cur));
	return fields;
}

std::string csvField(const std::string &s)
{
	if (s.find_first_of(",\"\n") == std::string::npos)
		return s;
	std::string out = "\"";
	for (char ch : s) {
		if (ch == '"')
			out += '"';
		out += ch;
	}
	return out + "\"";
}

namespace {

double parseNumber(const std::string &s, const char *what, std::size_t lineNo)
{
	try {
		std::size_t used = 0;
		const double v = std::stod(s, &used);
		if (used != s.size())
			throw std::invalid_argument(s);
		return v;
	} catch (const std::exception &) {
		throw ParseError(std::string("invalid ") + what + " '" + s + "'", lineNo);
	}
}

void stripCr(std::string &line)
{
	if (!line.empty() && line.back() == '\r')
		line.pop_back();
}

} // namespace

std::vector<std::string> DatasetManifest::cameras() const
{
	std::set<std::string> ids;
	for (const auto &e : entries)
		ids.insert(e.cameraId);
	return {ids.begin(), ids.end()};
}

std::filesystem::path DatasetManifest::resolve(const std::string &relative) const
{
	std::filesystem::path p(relative);
	return p.is_absolute() ? p : root / p;
}

DatasetManifest parseManifest(std::istream &in, const std::filesystem::path &root)
{
	DatasetManifest manifest;
	manifest.root = root;
	std::string line;
	std::size_t lineNo = 1;
	if (!std::getline(in, line))
		throw ParseError("missing header", lineNo);
	stripCr(line);
	if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0)
		line.erase(0, 3);
	if (line != kManifestHeader)
		throw ParseError(std::string("expected header '") + kManifestHeader + "'", lineNo);

	std::set<std::string> seen;
	while (std::getline(in, line)) {
		++lineNo;
		stripCr(line);
		if (line.empty())
			continue;
		auto f = splitCsvLine(line, lineNo);
		if (f.size() == 5)
			f.emplace_back();
		if (f.size() != 6)
			throw ParseError("expected 6 fields, got " + std::to_string(f.size()), lineNo);
		ManifestEntry e;
		e.imagePath = f[0];
		e.cameraId = f[1];
		e.maskPath = f[5];
		if (e.imagePath.empty())
			throw ParseError("empty image_path", lineNo);
		if (e.cameraId.empty())
			throw ParseError("empty camera_id", lineNo);
		double n2 = 0.0;
		for (int c = 0; c < 3; ++c) {
			e.gt[c] = parseNumber(f[2 + c], "illuminant component", lineNo);
			if (!(e.gt[c] > 0.0) || !std::isfinite(e.gt[c]))
				throw ParseError("illuminant components must be positive and finite",
						 lineNo);
			n2 += e.gt[c] * e.gt[c];
		}
		const double n = std::sqrt(n2);
		for (double &v : e.gt)
			v /= n;
		if (!seen.insert(e.imagePath).second)
			throw ParseError("duplicate image_path '" + e.imagePath + "'", lineNo);
		manifest.entries.push_back(std::move(e));
	}
	return manifest;
}

DatasetManifest loadManifest(const std::filesystem::path &path)
{
	std::ifstream in(path);
	if (!in)
		throw IoError("cannot open manifest " + path.string());
	return parseManifest(in, path.parent_path());
}

void writeManifest(const std::filesystem::path &path, const DatasetManifest &manifest)
{
	std::ofstream out(path);
	if (!out)
		throw IoError("cannot write manifest " + path.string());
	out << kManifestHeader << '\n';
	for (const auto &e : manifest.entries)
		out << csvField(e.imagePath) << ',' << csvField(e.cameraId) << ','
		    << formatDouble(e.gt[0]) << ',' << formatDouble(e.gt[1]) << ','
		    << formatDouble(e.gt[2]) << ',' << csvField(e.maskPath) << '\n';
	if (!out)
		throw IoError("failed writing manifest " + path.string());
}

/* ------------------------------------------------------------ image files */

namespace {

constexpr char kRawMagic[4] = {'R', 'A', 'W', 'F'};
constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t readU32(const unsigned char *p)
{
	return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
	       static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void writeU32(std::ostream &os, std::uint32_t v)
{
	const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
				    static_cast<unsigned char>(v >> 16),
				    static_cast<unsigned char>(v >> 24)};
	os.write(reinterpret_cast<const char *>(b), 4);
}

std::vector<unsigned char> readAll(const std::filesystem::path &path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw IoError("cannot open " + path.string());
	return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RawImage decodeRaw(const std::vector<unsigned char> &bytes, const std::string &name)
{
	if (bytes.size() < 12)
		throw FormatError(name + ": truncated RAWF header");
	RawImage img;
	img.width = readU32(&bytes[4]);
	img.height = readU32(&bytes[8]);
	const std::size_t count = img.width * img.height * 3;
	if (img.width == 0 || img.height == 0 || bytes.size() != 12 + count * 4)
		throw FormatError(name + ": RAWF payload size does not match dimensions");
	img.rgb.resize(count);
	for (std::size_t i = 0; i < count; ++i) {
		const std::uint32_t bits = readU32(&bytes[12 + 4 * i]);
		float v;
		std::memcpy(&v, &bits, 4);
		img.rgb[i] = v;
	}
	return img;
}

struct PngReader {
	png_structp png = nullptr;
	png_infop info = nullptr;
	std::FILE *fp = nullptr;

	~PngReader()
	{
		png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
		if (fp)
			std::fclose(fp);
	}
};

/* Returns rows of raw samples; channels/bitDepth describe the layout. */
std::vector<std::vector<unsigned char>> readPngRows(const std::filesystem::path &path,
						   std::size_t &width, std::size_t &height,
						   int &colorType, int &bitDepth)
{
	PngReader r;
	r.fp = std::fopen(path.string().c_str(), "rb");
	if (!r.fp)
		throw IoError("cannot open " + path.string());
	r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
	r.info = r.png ? png_create_info_struct(r.png) : nullptr;
	if (!r.png || !r.info)
		throw FormatError("libpng initialisation failed");
	if (setjmp(png_jmpbuf(r.png)))
		throw FormatError(path.string() + ": corrupt PNG");
	png_init_io(r.png, r.fp);
	png_read_info(r.png, r.info);
	width = png_get_image_width(r.png, r.info);
	height = png_get_image_height(r.png, r.info);
	colorType = png_get_color_type(r.png, r.info);
	bitDepth = png_get_bit_depth(r.png, r.info);
	if (png_get_interlace_type(r.png, r.info) != PNG_INTERLACE_NONE)
		png_set_interlace_handling(r.png);
	png_read_update_info(r.png, r.info);
	const std::size_t rowBytes = png_get_rowbytes(r.png, r.info);

	/* No objects with destructors may be created between setjmp and libpng calls. */
	std::vector<std::vector<unsigned char>> rows(height, std::vector<unsigned char>(rowBytes));
	std::vector<png_bytep> ptrs(height);
	for (std::size_t y = 0; y < height; ++y)
		ptrs[y] = rows[y].data();
	if (setjmp(png_jmpbuf(r.png)))
		throw FormatError(path.string() + ": corrupt PNG");
	png_read_image(r.png, ptrs.data());
	png_read_end(r.png, nullptr);
	return rows;
}

RawImage decodePng(const std::filesystem::path &path)
{
	std::size_t w = 0, h = 0;
	int colorType = 0, bitDepth = 0;
	auto rows = readPngRows(path, w, h, colorType, bitDepth);
	if (bitDepth != 16)
		throw FormatError(path.string() + ": unsupported PNG bit depth " +
				  std::to_string(bitDepth) + " (16-bit linear RGB expected)");
	std::size_t channels = 0;
	if (colorType == PNG_COLOR_TYPE_RGB)
		channels = 3;
	else if (colorType == PNG_COLOR_TYPE_RGB_ALPHA)
		channels = 4;
	else
		throw FormatError(path.string() + ": unsupported PNG colour type");
	RawImage img;
	img.width = w;
	img.height = h;
	img.rgb.resize(w * h * 3);
	for (std::size_t y = 0; y < h; ++y)
		for (std::size_t x = 0; x < w; ++x)
			for (std::size_t c = 0; c < 3; ++c) {
				const unsigned char *p = &rows[y][(x * channels + c) * 2];
				const unsigned code = static_cast<unsigned>(p[0]) << 8 | p[1];
				img.rgb[(y * w + x) * 3 + c] = static_cast<float>(code / 65535.0);
			}
	return img;
}

struct PngWriter {
	png_structp png = nullptr;
	png_infop info = nullptr;
	std::FILE *fp = nullptr;

	~PngWriter()
	{
		png_destroy_write_struct(&png, info ? &info : nullptr);
		if (fp)
			std::fclose(fp);
	}
};

void writePngRows(const std::filesystem::path &path, std::size_t w, std::size_t h,
		  int colorType, int bitDepth, std::vector<std::vector<unsigned char>> &rows)
{
	PngWriter wr;
	wr.fp = std::fopen(path.string().c_str(), "wb");
	if (!wr.fp)
		throw IoError("cannot write " + path.string());
	wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
	wr.info = wr.png ? png_create_info_struct(wr.png) : nullptr;
	if (!wr.png || !wr.info)
		throw IoError("libpng initialisation failed");
	std::vector<png_bytep> ptrs(h);
	for (std::size_t y = 0; y < h; ++y)
		ptrs[y] = rows[y].data();
	if (setjmp(png_jmpbuf(wr.png)))
		throw IoError("failed writing " + path.string());
	png_init_io(wr.png, wr.fp);
	png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
		     bitDepth, colorType, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
		     PNG_FILTER_TYPE_DEFAULT);
	png_write_info(wr.png, wr.info);
	png_write_image(wr.png, ptrs.data());
	png_write_end(wr.png, nullptr);
}

} // namespace

RawImage readImageFile(const std::filesystem::path &path)
{
	const auto bytes = readAll(path);
	RawImage img;
	if (bytes.size() >= 4 && std::memcmp(bytes.data(), kRawMagic, 4) == 0)
		img = decodeRaw(bytes, path.string());
	else if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngMagic, 8) == 0)
		img = decodePng(path);
	else
		throw FormatError(path.string() + ": unrecognised image format");
	img.path = path.string();
	for (float v : img.rgb)
		if (!std::isfinite(v))
			throw FormatError(path.string() + ": non-finite pixel value");
	return img;
}

std::vector<std::uint8_t> readMaskFile(const std::filesystem::path &path,
				       std::size_t &width, std::size_t &height)
{
	int colorType = 0, bitDepth = 0;
	auto rows = readPngRows(path, width, height, colorType, bitDepth);
	if (bitDepth != 8)
		throw FormatError(path.string() + ": mask must be an 8-bit PNG");
	std::size_t channels = 0;
	switch (colorType) {
	case PNG_COLOR_TYPE_GRAY: channels = 1; break;
	case PNG_COLOR_TYPE_GRAY_ALPHA: channels = 2; break;
	case PNG_COLOR_TYPE_RGB: channels = 3; break;
	case PNG_COLOR_TYPE_RGB_ALPHA: channels = 4; break;
	default:
		throw FormatError(path.string() + ": unsupported mask colour type");
	}
	/* Alpha is ignored; any nonzero colour sample marks the pixel. */
	const std::size_t colour = channels == 2 || channels == 4 ? channels - 1 : channels;
	std::vector<std::uint8_t> mask(width * height, 0);
	for (std::size_t y = 0; y < height; ++y)
		for (std::size_t x = 0; x < width; ++x)
			for (std::size_t c = 0; c < colour; ++c)
				if (rows[y][x * channels + c])
					mask[y * width + x] = 1;
	return mask;
}

void writeRawFloat(const std::filesystem::path &path, const RawImage &image)
{
	image.validate();
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw IoError("cannot write " + path.string());
	out.write(kRawMagic, 4);
	writeU32(out, static_cast<std::uint32_t>(image.width));
	writeU32(out, static_cast<std::uint32_t>(image.height));
	for (float v : image.rgb) {
		std::uint32_t bits;
		std::memcpy(&bits, &v, 4);
		writeU32(out, bits);
	}
	if (!out)
		throw IoError("failed writing " + path.string());
}

void writePng16(const std::filesystem::path &path, const RawImage &image)
{
	image.validate();
	std::vector<std::vector<unsigned char>> rows(image.height,
						     std::vector<unsigned char>(image.width * 6));
	for (std::size_t y = 0; y < image.height; ++y)
		for (std::size_t x = 0; x < image.width; ++x)
			for (std::size_t c = 0; c < 3; ++c) {
				const double v = std::clamp<double>(image.at(x, y, c), 0.0, 1.0);
				const auto code = static_cast<unsigned>(std::lround(v * 65535.0));
				rows[y][(x * 3 + c) * 2] = static_cast<unsigned char>(code >> 8);
				rows[y][(x * 3 + c) * 2 + 1] = static_cast<unsigned char>(code & 0xff);
			}
	writePngRows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 16, rows);
}

void writeMaskPng(const std::filesystem::path &path, std::span<const std::uint8_t> mask,
		  std::size_t width, std::size_t height)
{
	if (mask.size() != width * height)
		throw InvalidArgument("mask size does not match dimensions");
	std::vector<std::vector<unsigned char>> rows(height, std::vector<unsigned char>(width));
	for (std::size_t y = 0; y < height; ++y)
		for (std::size_t x = 0; x < width; ++x)
			rows[y][x] = mask[y * width + x] ? 255 : 0;
	writePngRows(path, width, height, PNG_COLOR_TYPE_GRAY, 8, rows);
}

/* ---------------------------------------------------------------- resize */

namespace {

/* Source intervals [i*scale, (i+1)*scale) overlapping output pixel o. */
struct Footprint {
	std::size_t first;
	std::vector<double> weights;
};

std::vector<Footprint> footprints(std::size_t in, std::size_t out)
{
	std::vector<Footprint> fp(out);
	const double scale = static_cast<double>(in) / static_cast<double>(out);
	for (std::size_t o = 0; o < out; ++o) {
		const double lo = o * scale, hi = (o + 1) * scale;
		const auto first = static_cast<std::size_t>(std::floor(lo));
		const auto last = std::min(in, static_cast<std::size_t>(std::ceil(hi)));
		fp[o].first = first;
		for (std::size_t i = first; i < last; ++i) {
			const double overlap = std::min<double>(hi, i + 1.0) - std::max<double>(lo, i);
			fp[o].weights.push_back(std::max(0.0, overlap) / scale);
		}
	}
	return fp;
}

} // namespace

std::vector<float> areaResize(std::span<const float> rgb, std::size_t w, std::size_t h,
			      std::size_t nw, std::size_t nh)
{
	if (rgb.size() != w * h * 3 || nw == 0 || nh == 0)
		throw InvalidArgument("area resize: bad dimensions");
	const auto fx = footprints(w, nw);
	const auto fy = footprints(h, nh);
	std::vector<float> out(nw * nh * 3);
	for (std::size_t oy = 0; oy < nh; ++oy)
		for (std::size_t ox = 0; ox < nw; ++ox)
			for (std::size_t c = 0; c < 3; ++c) {
				double acc = 0.0;
				for (std::size_t j = 0; j < fy[oy].weights.size(); ++j) {
					const std::size_t y = fy[oy].first + j;
					for (std::size_t i = 0; i < fx[ox].weights.size(); ++i) {
						const std::size_t x = fx[ox].first + i;
						acc += fy[oy].weights[j] * fx[ox].weights[i] *
						       rgb[(y * w + x) * 3 + c];
					}
				}
				out[(oy * nw + ox) * 3 + c] = static_cast<float>(acc);
			}
	return out;
}

std::vector<std::uint8_t> maskResize(std::span<const std::uint8_t> mask, std::size_t w,
				     std::size_t h, std::size_t nw, std::size_t nh)
{
	if (mask.size() != w * h || nw == 0 || nh == 0)
		throw InvalidArgument("mask resize: bad dimensions");
	const auto fx = footprints(w, nw);
	const auto fy = footprints(h, nh);
	std::vector<std::uint8_t> out(nw * nh, 0);
	for (std::size_t oy = 0; oy < nh; ++oy)
		for (std::size_t ox = 0; ox < nw; ++ox) {
			bool any = false;
			for (std::size_t j = 0; j < fy[oy].weights.size() && !any; ++j)
				for (std::size_t i = 0; i < fx[ox].weights.size() && !any; ++i)
					if (fy[oy].weights[j] > 0.0 && fx[ox].weights[i] > 0.0 &&
					    mask[(fy[oy].first + j) * w + fx[ox].first + i])
						any = true;
			out[oy * nw + ox] = any ? 1 : 0;
		}
	return out;
}

RawImage toThumbnail(RawImage image)
{
	image.validate();
	if (image.width <= kThumbnailSize && image.height <= kThumbnailSize)
		return image;
	image.rgb = areaResize(image.rgb, image.width, image.height, kThumbnailSize,
			       kThumbnailSize);
	if (!image.mask.empty())
		image.mask = maskResize(image.mask, image.width, image.height, kThumbnailSize,
					kThumbnailSize);
	image.width = kThumbnailSize;
	image.height = kThumbnailSize;
	return image;
}

void maskSaturated(RawImage &image, float level)
{
	const std::size_t n = image.pixelCount();
	for (std::size_t i = 0; i < n; ++i) {
		const bool saturated = image.rgb[3 * i] >= level || image.rgb[3 * i + 1] >= level ||
				       image.rgb[3 * i + 2] >= level;
		if (!saturated)
			continue;
		if (image.mask.empty())
			image.mask.assign(n, 0);
		image.mask[i] = 1;
	}
}

RawImage loadImage(const DatasetManifest &manifest, const ManifestEntry &entry)
{
	RawImage img = readImageFile(manifest.resolve(entry.imagePath));
	img.path = entry.imagePath;
	img.cameraId = entry.cameraId;
	img.gt = entry.gt;
	if (!entry.maskPath.empty()) {
		std::size_t mw = 0, mh = 0;
		img.mask = readMaskFile(manifest.resolve(entry.maskPath), mw, mh);
		if (mw != img.width || mh != img.height)
			throw InvalidInput("mask " + entry.maskPath + " does not match image " +
					   entry.imagePath);
	}
	maskSaturated(img);
	return toThumbnail(std::move(img));
}

std::vector<RawImage> loadImages(const DatasetManifest &manifest,
				 std::span<const std::size_t> indices)
{
	std::vector<RawImage> out;
	out.reserve(indices.size());
	for (std::size_t i : indices)
		out.push_back(loadImage(manifest, manifest.entries.at(i)));
	return out;
}

/* ----------------------------------------------------------------- folds */

FoldPlan makeExclusionPlan(const DatasetManifest &manifest,
			   std::span<const std::string> testCameras)
{
	FoldPlan plan;
	for (std::size_t i = 0; i < testCameras.size(); ++i)
		plan.testCamera += (i ? "," : "") + testCameras[i];
	for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
		const auto &cam = manifest.entries[i].cameraId;
		if (std::find(testCameras.begin(), testCameras.end(), cam) != testCameras.end())
			plan.testIds.push_back(i);
		else
			plan.trainIds.push_back(i);
	}
	return plan;
}

std::vector<FoldPlan> makeFolds(const DatasetManifest &manifest)
{
	const auto cameras = manifest.cameras();
	if (cameras.size() < 2)
		throw InvalidInput("leave-one-camera-out needs at least two cameras, found " +
				   std::to_string(cameras.size()));
	std::vector<FoldPlan> folds;
	for (const auto &cam : cameras)
		folds.push_back(makeExclusionPlan(manifest, std::span(&cam, 1)));
	return folds;
}

} // namespace siie
