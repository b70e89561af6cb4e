#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lagsight/checkpoint.hpp"
#include "lagsight/error.hpp"
#include "lagsight/frame.hpp"
#include "lagsight/interpret.hpp"
#include "lagsight/synth.hpp"
#include "lagsight/train.hpp"

namespace py = pybind11;
using namespace lagsight;

namespace {

// Both copy; the arrays own their data.
py::array_t<double> to_numpy(const Tensor& t) {
    const std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())};
    return py::array_t<double>(shape, t.data().data());
}

py::array_t<double> to_numpy(const std::vector<double>& v) {
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

const std::vector<WindowSample>& check_nonempty(const std::vector<WindowSample>& s) {
    if (s.empty()) throw ValidationError("split holds no windows");
    return s;
}

py::dict record_dict(const AttentionRecord& r) {
    py::dict d;
    d["origin_t"] = r.origin_t;
    d["alpha"] = to_numpy(r.alpha);
    d["saliency"] = to_numpy(r.saliency);
    d["map"] = to_numpy(r.map);
    d["prediction"] = r.prediction;
    d["target"] = r.target;
    return d;
}

AttentionRecord explain_at(const Checkpoint& ck, const TimeSeriesFrame& frame, std::size_t t,
                           unsigned threads) {
    if (ck.kind() != ModelKind::Attention)
        throw ValidationError("no attention available: checkpoint holds a vanilla LSTM");
    const auto& mc = ck.model.config();
    const std::size_t lo = mc.window - 1;
    if (frame.length() < mc.window + mc.horizon_steps)
        throw ValidationError("data too short for window + horizon");
    const std::size_t hi = frame.length() - 1 - mc.horizon_steps;
    if (t < lo || t > hi)
        throw ValidationError("origin " + std::to_string(t) + " out of range; valid range is [" +
                              std::to_string(lo) + ", " + std::to_string(hi) + "]");
    const auto samples =
        make_windows(frame, ck.inputs, ck.target, mc.window, mc.horizon_steps, ck.normalizer, t, t);
    SaliencyOptions o;
    o.threads = threads;
    return explain(ck, samples.front(), o);
}

}  // namespace

PYBIND11_MODULE(_lagsight, m) {
    m.doc() = "Attention LSTM forecaster with spatio/temporal interpretability";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    py::class_<TimeSeriesFrame>(m, "Frame")
        .def_readonly("names", &TimeSeriesFrame::names)
        .def_readonly("index", &TimeSeriesFrame::index)
        .def_readonly("provenance", &TimeSeriesFrame::provenance)
        .def_property_readonly("values", [](const TimeSeriesFrame& f) { return to_numpy(f.values); })
        .def("__len__", &TimeSeriesFrame::length)
        .def("column", [](const TimeSeriesFrame& f, const std::string& name) { return to_numpy(f.column(name)); })
        .def("save", [](const TimeSeriesFrame& f, const std::filesystem::path& p) { write_frame(f, p); })
        .def_static("load", &read_frame, py::arg("path"));

    m.def(
        "generate",
        [](std::size_t length, std::uint64_t seed, std::size_t lag, double noise, double alpha,
           double beta, double base) {
            SynthConfig c;
            c.length_minutes = length;
            c.lag_minutes = lag;
            c.noise_sigma = noise;
            c.alpha_coef = alpha;
            c.beta_coef = beta;
            c.base_level = base;
            c.seed = seed;
            c.validate();
            return generate(c, seed);
        },
        py::arg("length") = 10000, py::arg("seed") = 0, py::arg("lag") = 180, py::arg("noise") = 0.0,
        py::arg("alpha") = 0.1, py::arg("beta") = 0.5, py::arg("base") = 1450.0,
        "Synthetic A/B/C/D frame: B lags A, C scales B, D is constant.");

    m.def("window_count", &window_count, py::arg("length"), py::arg("window"), py::arg("horizon"));

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); })
        .def_property_readonly("kind", [](const Checkpoint& c) { return std::string(to_string(c.kind())); })
        .def_readonly("inputs", &Checkpoint::inputs)
        .def_readonly("target", &Checkpoint::target)
        .def_readonly("best_epoch", &Checkpoint::best_epoch)
        .def_property_readonly("window", [](const Checkpoint& c) { return c.model.config().window; })
        .def_property_readonly("horizon", [](const Checkpoint& c) { return c.model.config().horizon_steps; })
        .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.model.parameter_count(); })
        .def_property_readonly("hash", &checkpoint_hash)
        .def_property_readonly("history",
                               [](const Checkpoint& c) {
                                   py::list out;
                                   for (const auto& r : c.history)
                                       out.append(py::make_tuple(r.epoch, r.train_rmse, r.val_rmse));
                                   return out;
                               })
        .def(
            "evaluate",
            [](const Checkpoint& c, const TimeSeriesFrame& frame, const std::string& split, unsigned threads) {
                const auto samples = windows_for_split(frame, c, parse_split(split));
                const Metrics mt = evaluate(c, check_nonempty(samples), threads);
                py::dict d;
                d["rmse"] = mt.rmse;
                d["mae"] = mt.mae;
                d["r2"] = mt.r2;
                d["count"] = mt.count;
                return d;
            },
            py::arg("frame"), py::arg("split") = "test", py::arg("threads") = 1)
        .def(
            "predict",
            [](const Checkpoint& c, const TimeSeriesFrame& frame, const std::string& split, unsigned threads) {
                const auto samples = windows_for_split(frame, c, parse_split(split));
                std::vector<std::size_t> origins;
                std::vector<double> targets;
                for (const auto& s : samples) {
                    origins.push_back(s.origin_t);
                    targets.push_back(c.denormalize_target(s.y));
                }
                std::vector<double> pred;
                {
                    py::gil_scoped_release release;
                    pred = c.predict(samples, threads);
                }
                return py::make_tuple(origins, to_numpy(pred), to_numpy(targets));
            },
            py::arg("frame"), py::arg("split") = "test", py::arg("threads") = 1,
            "Returns (origin_t list, predictions, targets) in original units.")
        .def(
            "explain",
            [](const Checkpoint& c, const TimeSeriesFrame& frame, std::size_t at, unsigned threads) {
                AttentionRecord r;
                {
                    py::gil_scoped_release release;
                    r = explain_at(c, frame, at, threads);
                }
                return record_dict(r);
            },
            py::arg("frame"), py::arg("at"), py::arg("threads") = 1,
            "Local alpha, saliency and map for the window ending at minute `at`.")
        .def(
            "explain_global",
            [](const Checkpoint& c, const TimeSeriesFrame& frame, const std::string& split,
               std::size_t stride, unsigned threads) {
                if (c.kind() != ModelKind::Attention)
                    throw ValidationError("no attention available: checkpoint holds a vanilla LSTM");
                if (stride == 0) throw ValidationError("stride must be positive");
                GlobalAttention g;
                {
                    py::gil_scoped_release release;
                    const auto samples = windows_for_split(frame, c, parse_split(split));
                    SaliencyOptions o;
                    o.threads = threads;
                    GlobalAccumulator acc;
                    for (std::size_t i = 0; i < samples.size(); i += stride) acc.add(explain(c, samples[i], o));
                    g = acc.result();
                }
                py::dict d;
                d["count"] = g.count;
                d["alpha"] = to_numpy(g.alpha);
                d["map"] = to_numpy(g.map);
                return d;
            },
            py::arg("frame"), py::arg("split") = "train", py::arg("stride") = 1, py::arg("threads") = 1);

    m.def(
        "train",
        [](const TimeSeriesFrame& frame, const std::string& model, const std::vector<std::string>& inputs,
           const std::string& target, std::size_t window, std::size_t horizon, std::size_t filters,
           std::size_t kernel, std::size_t hidden, double lr, std::size_t batch, std::size_t epochs,
           std::size_t patience, std::uint64_t seed, unsigned threads) {
            ModelConfig mc;
            mc.n_inputs = inputs.size();
            mc.window = window;
            mc.horizon_steps = horizon;
            mc.conv_filters = filters;
            mc.conv_kernel = kernel;
            mc.lstm_hidden = hidden;
            mc.seed = seed;
            mc.validate();
            TrainConfig tc;
            tc.lr = lr;
            tc.batch_size = batch;
            tc.max_epochs = epochs;
            tc.patience = patience;
            tc.seed = seed;
            tc.threads = threads;
            tc.validate();
            const ModelKind kind = parse_model_kind(model);
            py::gil_scoped_release release;
            const Dataset data = prepare_dataset(frame, inputs, target, window, horizon, tc.split);
            return fit(kind, data, tc, mc, seed);
        },
        py::arg("frame"), py::arg("model") = "attention",
        py::arg("inputs") = std::vector<std::string>{"A", "C", "D"}, py::arg("target") = "B",
        py::arg("window") = 500, py::arg("horizon") = 180, py::arg("filters") = 16, py::arg("kernel") = 7,
        py::arg("hidden") = 64, py::arg("lr") = 1e-3, py::arg("batch") = 32, py::arg("epochs") = 100,
        py::arg("patience") = 5, py::arg("seed") = 0, py::arg("threads") = 1,
        "Train an attention or vanilla model on a frame with a chronological 80/10/10 split.");
}
