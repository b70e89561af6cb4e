#include "lagsight/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lagsight/error.hpp"

namespace lagsight {

using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "lagsight-checkpoint";

json model_config_json(const ModelConfig& c) {
    return {{"n_inputs", c.n_inputs},         {"window", c.window},
            {"horizon_steps", c.horizon_steps}, {"conv_filters", c.conv_filters},
            {"conv_kernel", c.conv_kernel},   {"lstm_hidden", c.lstm_hidden},
            {"seed", c.seed}};
}

ModelConfig model_config_from(const json& j) {
    ModelConfig c;
    c.n_inputs = j.at("n_inputs").get<std::size_t>();
    c.window = j.at("window").get<std::size_t>();
    c.horizon_steps = j.at("horizon_steps").get<std::size_t>();
    c.conv_filters = j.at("conv_filters").get<std::size_t>();
    c.conv_kernel = j.at("conv_kernel").get<std::size_t>();
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json train_config_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"clip_norm", c.clip_norm},
            {"split", {c.split.train, c.split.val, c.split.test}},
            {"seed", c.seed},
            {"chunk", c.chunk}};
}

TrainConfig train_config_from(const json& j) {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    const auto& s = j.at("split");
    c.split = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    c.seed = j.at("seed").get<std::uint64_t>();
    c.chunk = j.at("chunk").get<std::size_t>();
    return c;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ck) {
    json doc;
    doc["format"] = kFormatTag;
    doc["version"] = Checkpoint::kFormatVersion;
    doc["model_kind"] = to_string(ck.kind());
    doc["model_config"] = model_config_json(ck.model.config());
    doc["train_config"] = train_config_json(ck.train_config);
    doc["seed"] = ck.seed;
    doc["inputs"] = ck.inputs;
    doc["target"] = ck.target;
    doc["normalizer"] = {{"names", ck.normalizer.names},
                         {"mean", ck.normalizer.mean},
                         {"stddev", ck.normalizer.stddev},
                         {"constant", ck.normalizer.constant}};
    doc["parameter_count"] = ck.model.parameter_count();
    json params = json::array();
    for (const auto& [name, t] : ck.model.parameters()) {
        params.push_back({{"name", name},
                          {"shape", t->shape()},
                          {"data", std::vector<double>(t->data().begin(), t->data().end())}});
    }
    doc["parameters"] = std::move(params);
    doc["best_epoch"] = ck.best_epoch;
    json hist = json::array();
    for (const auto& h : ck.history) {
        hist.push_back(
            {{"epoch", h.epoch}, {"train_rmse", h.train_rmse}, {"val_rmse", h.val_rmse}});
    }
    doc["history"] = std::move(hist);
    return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint is not valid JSON (truncated or corrupt): ") +
                              e.what());
    }
    try {
        if (!doc.is_object() || doc.value("format", "") != kFormatTag) {
            throw CheckpointError("not a lagsight checkpoint (missing format tag)");
        }
        const int version = doc.at("version").get<int>();
        if (version != Checkpoint::kFormatVersion) {
            throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                                  " (this build reads version " +
                                  std::to_string(Checkpoint::kFormatVersion) + ")");
        }
        const ModelKind kind = parse_model_kind(doc.at("model_kind").get<std::string>());
        const ModelConfig mc = model_config_from(doc.at("model_config"));
        mc.validate();

        Model model(kind, mc);
        auto params = model.parameters();
        const auto& stored = doc.at("parameters");
        if (stored.size() != params.size()) {
            throw CheckpointError("expected " + std::to_string(params.size()) +
                                  " parameter tensors, found " + std::to_string(stored.size()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& entry = stored.at(i);
            const auto name = entry.at("name").get<std::string>();
            if (name != params[i].name) {
                throw CheckpointError("parameter " + std::to_string(i) + " is '" + name +
                                      "', expected '" + params[i].name + "'");
            }
            const auto shape = entry.at("shape").get<Shape>();
            if (shape != params[i].tensor->shape()) {
                throw CheckpointError("parameter '" + name + "' has shape " + shape_str(shape) +
                                      ", config implies " +
                                      shape_str(params[i].tensor->shape()));
            }
            auto data = entry.at("data").get<std::vector<double>>();
            *params[i].tensor = Tensor(shape, std::move(data));
            if (!params[i].tensor->is_finite()) {
                throw CheckpointError("parameter '" + name + "' contains non-finite values");
            }
        }
        if (doc.contains("parameter_count") &&
            doc.at("parameter_count").get<std::size_t>() != model.parameter_count()) {
            throw CheckpointError("parameter_count field disagrees with stored tensors");
        }

        Normalizer norm;
        const auto& nj = doc.at("normalizer");
        norm.names = nj.at("names").get<std::vector<std::string>>();
        norm.mean = nj.at("mean").get<std::vector<double>>();
        norm.stddev = nj.at("stddev").get<std::vector<double>>();
        norm.constant = nj.at("constant").get<std::vector<bool>>();
        if (norm.mean.size() != norm.names.size() || norm.stddev.size() != norm.names.size() ||
            norm.constant.size() != norm.names.size()) {
            throw CheckpointError("normalizer arrays have inconsistent lengths");
        }

        Checkpoint ck{std::move(model), std::move(norm),
                      train_config_from(doc.at("train_config")),
                      doc.at("seed").get<std::uint64_t>(),
                      doc.at("inputs").get<std::vector<std::string>>(),
                      doc.at("target").get<std::string>(),
                      {},
                      doc.value("best_epoch", std::size_t{0})};
        if (ck.inputs.size() != mc.n_inputs) {
            throw CheckpointError("checkpoint lists " + std::to_string(ck.inputs.size()) +
                                  " inputs but the model expects " + std::to_string(mc.n_inputs));
        }
        for (const auto& name : ck.inputs) ck.normalizer.slot(name);
        ck.normalizer.slot(ck.target);
        for (const auto& h : doc.at("history")) {
            ck.history.push_back({h.at("epoch").get<std::size_t>(),
                                  h.at("train_rmse").get<double>(),
                                  h.at("val_rmse").get<double>()});
        }
        return ck;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ValidationError& e) {
        throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
    } catch (const ShapeError& e) {
        throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    const std::string text = checkpoint_to_string(checkpoint);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return checkpoint_from_string(buf.str());
}

std::string checkpoint_hash(const Checkpoint& checkpoint) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : checkpoint_to_string(checkpoint)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace lagsight
