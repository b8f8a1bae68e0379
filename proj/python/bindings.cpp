#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "siie/baselines.hpp"
#include "siie/config.hpp"
#include "siie/dataio.hpp"
#include "siie/errors.hpp"
#include "siie/harness.hpp"
#include "siie/histogram.hpp"
#include "siie/metrics.hpp"
#include "siie/networks.hpp"
#include "siie/synth.hpp"
#include "siie/training.hpp"

namespace py = pybind11;
using namespace siie;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

RawImage imageFromArray(FloatArray rgb, std::optional<py::array_t<std::uint8_t>> mask)
{
	if (rgb.ndim() != 3 || rgb.shape(2) != 3)
		throw InvalidArgument("expected an (H, W, 3) array");
	RawImage img;
	img.height = rgb.shape(0);
	img.width = rgb.shape(1);
	img.rgb.assign(rgb.data(), rgb.data() + rgb.size());
	if (mask) {
		auto m = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(*mask);
		if (m.ndim() != 2 || static_cast<std::size_t>(m.shape(0)) != img.height ||
		    static_cast<std::size_t>(m.shape(1)) != img.width)
			throw InvalidArgument("mask must be (H, W)");
		img.mask.assign(m.data(), m.data() + m.size());
	}
	img.validate();
	return img;
}

py::array_t<float> imageArray(const RawImage &img)
{
	py::array_t<float> out({img.height, img.width, std::size_t{3}});
	std::copy(img.rgb.begin(), img.rgb.end(), out.mutable_data());
	return out;
}

py::dict estimateDict(const IlluminantEstimate &e)
{
	py::dict d;
	d["sensor"] = e.sensor;
	d["working"] = e.working;
	py::array_t<double> m({3, 3});
	std::copy(e.matrix.begin(), e.matrix.end(), m.mutable_data());
	d["matrix"] = m;
	d["jittered"] = e.jittered;
	return d;
}

RunConfig runConfigFrom(const std::string &json)
{
	RunConfig c;
	if (json.empty())
		return c;
	const auto j = nlohmann::json::parse(json);
	if (j.contains("model"))
		c.model = applyJson(c.model, j["model"]);
	if (j.contains("train"))
		c.train = applyJson(c.train, j["train"]);
	for (const auto &[key, value] : j.items())
		if (key != "model" && key != "train")
			throw InvalidArgument("unknown config key '" + key + "'");
	return c;
}

} // namespace

PYBIND11_MODULE(_siie, m)
{
	m.doc() = "Sensor-independent illuminant estimation";

	py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
	py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
	py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
	py::register_exception<IoError>(m, "IoError", PyExc_OSError);
	py::register_exception<SingularMatrixError>(m, "SingularMatrixError", PyExc_ArithmeticError);
	py::register_exception<TrainingAbort>(m, "TrainingAbort", PyExc_RuntimeError);

	py::class_<RawImage>(m, "Image")
		.def(py::init(&imageFromArray), py::arg("rgb"), py::arg("mask") = py::none())
		.def_property_readonly("rgb", &imageArray)
		.def_property_readonly("width", [](const RawImage &i) { return i.width; })
		.def_property_readonly("height", [](const RawImage &i) { return i.height; })
		.def_readwrite("camera_id", &RawImage::cameraId)
		.def_readwrite("path", &RawImage::path)
		.def_readwrite("gt", &RawImage::gt)
		.def("__repr__", [](const RawImage &i) {
			return "<Image " + std::to_string(i.width) + "x" + std::to_string(i.height) +
			       " " + i.cameraId + ">";
		});

	m.def("read_image", &readImageFile, py::arg("path"));
	m.def("to_thumbnail", &toThumbnail, py::arg("image"));
	m.def(
		"load_dataset",
		[](const std::filesystem::path &manifest) {
			DatasetManifest d = loadManifest(manifest);
			std::vector<std::size_t> all(d.entries.size());
			for (std::size_t i = 0; i < all.size(); ++i)
				all[i] = i;
			return loadImages(d, all);
		},
		py::arg("manifest"));

	m.def(
		"synth_generate",
		[](std::size_t scenes, std::size_t sensors, std::uint64_t seed, std::size_t size) {
			SynthConfig c;
			c.scenes = scenes;
			c.sensors = sensors;
			c.seed = seed;
			c.width = c.height = size;
			SynthDataset d = synthGenerate(c);
			std::vector<py::array_t<double>> mats;
			for (const auto &a : d.sensors) {
				py::array_t<double> arr({3, 3});
				std::copy(a.begin(), a.end(), arr.mutable_data());
				mats.push_back(arr);
			}
			return py::make_tuple(d.images, mats);
		},
		py::arg("scenes"), py::arg("sensors") = 5, py::arg("seed") = 0, py::arg("size") = 64,
		"Returns (images, sensor matrices).");

	m.def("recovery_error", &recoveryAngularError, py::arg("gt"), py::arg("estimate"));
	m.def("reproduction_error", &reproductionAngularError, py::arg("gt"), py::arg("estimate"));
	m.def(
		"error_stats",
		[](std::vector<double> errors) {
			ErrorStats s = aggregate(errors);
			py::dict d;
			d["n"] = s.n;
			d["mean"] = s.mean;
			d["median"] = s.median;
			d["best25"] = s.best25;
			d["worst25"] = s.worst25;
			return d;
		},
		py::arg("errors"));

	m.def("baseline_names", &baselineNames);
	m.def(
		"baseline",
		[](const RawImage &img, const std::string &method, std::optional<double> p,
		   std::optional<double> sigma) {
			auto which = parseBaselineMethod(method);
			if (!which)
				throw InvalidArgument("unknown baseline '" + method + "'");
			BaselineConfig c = BaselineConfig::defaults(*which);
			if (p)
				c.minkowskiP = *p;
			if (sigma)
				c.sigma = *sigma;
			c.validate();
			return estimateBaseline(img, c);
		},
		py::arg("image"), py::arg("method") = "gray_world", py::arg("p") = py::none(),
		py::arg("sigma") = py::none());

	m.def(
		"histogram",
		[](const RawImage &img, std::size_t bins, double scale, double falloff) {
			HistogramConfig c;
			c.bins = bins;
			c.initScale = scale;
			c.initFalloff = falloff;
			c.validate();
			NoGradGuard guard;
			Tensor h = computeHistogram(makePixelSet(img.rgb, img.mask), HistogramParams(c));
			py::array_t<double> out({std::size_t{3}, bins, bins});
			std::copy(h.data().begin(), h.data().end(), out.mutable_data());
			return out;
		},
		py::arg("image"), py::arg("bins") = 61, py::arg("scale") = 1.0,
		py::arg("falloff") = 0.25, "RGB-uv histogram, shape (3, bins, bins).");

	py::class_<Model>(m, "Model")
		.def(py::init([](const std::string &config, std::uint64_t seed) {
			     return Model(runConfigFrom(config).model, seed);
		     }),
		     py::arg("config") = "", py::arg("seed") = 0)
		.def_static("load", &loadCheckpoint, py::arg("path"))
		.def("save", [](const Model &mdl, const std::filesystem::path &p) { saveCheckpoint(p, mdl); },
		     py::arg("path"))
		.def("predict",
		     [](const Model &mdl, const RawImage &img) { return estimateDict(predict(mdl, img)); },
		     py::arg("image"))
		.def_property_readonly("config",
				       [](const Model &mdl) { return toJson(mdl.config()).dump(); })
		.def("parameter_names", [](const Model &mdl) {
			std::vector<std::string> names;
			for (const Parameter *p : mdl.parameters())
				names.push_back(p->name);
			return names;
		});

	m.def(
		"train",
		[](const std::vector<RawImage> &images, const std::string &config,
		   std::function<void(py::dict)> on_epoch) {
			const RunConfig c = runConfigFrom(config);
			TrainResult r = trainModel(images, c, [&](const EpochLog &e) {
				if (!on_epoch)
					return;
				py::gil_scoped_acquire gil;
				py::dict d;
				d["epoch"] = e.epoch;
				d["lr"] = e.lr;
				d["train_loss_deg"] = e.trainLossDeg;
				d["val_mean_deg"] = e.valMeanDeg;
				on_epoch(d);
			});
			return r.model;
		},
		py::arg("images"), py::arg("config") = "", py::arg("on_epoch") = nullptr,
		"Trains a model; config is a JSON string with optional \"model\" and \"train\" objects.");

	m.def(
		"evaluate",
		[](const Model &mdl, const std::vector<RawImage> &images, unsigned threads) {
			EvalReport r = evaluateModel(mdl, images, "model", Protocol::FixedSplit, threads);
			std::vector<py::dict> rows;
			for (const auto &row : r.rows) {
				py::dict d;
				d["image_path"] = row.imagePath;
				d["camera_id"] = row.cameraId;
				d["estimate"] = row.estimate;
				d["gt"] = row.gt;
				d["recovery_err_deg"] = row.recovery;
				d["reproduction_err_deg"] = row.reproduction;
				d["jittered"] = row.jittered;
				rows.push_back(d);
			}
			return rows;
		},
		py::arg("model"), py::arg("images"), py::arg("threads") = 1);
}
