#include "lagsight/interpret.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lagsight/error.hpp"

namespace lagsight {

LocalAnalysis analyze_window(const AttnLstmParams& params, const ModelConfig& config,
                             const Tensor& x_window, const SaliencyOptions& options) {
    if (x_window.rank() != 2 || x_window.rows() != config.window ||
        x_window.cols() != config.n_inputs) {
        throw ShapeError("window " + shape_str(x_window.shape()) + " does not match config [" +
                         std::to_string(config.window) + "x" + std::to_string(config.n_inputs) +
                         "]");
    }
    Graph g(options.mode);
    const AttnForwardNodes nodes = build_forward(g, params, x_window, 1, config.conv_kernel);
    const std::size_t prev = config.window - 1;
    const std::size_t n = config.n_inputs;

    std::vector<NodeId> seeds;
    seeds.reserve(prev);
    for (std::size_t i = 0; i < prev; ++i) {
        const NodeId weight = prev == 1 ? nodes.attn.alpha : g.slice(nodes.attn.alpha, 1, i, i + 1);
        seeds.push_back(g.sum(g.mul(nodes.hidden[i], weight), 1));
    }

    LocalAnalysis out;
    const auto a = g.value(nodes.attn.alpha).data();
    out.alpha.assign(a.begin(), a.end());
    out.prediction = g.value(nodes.prediction).item();
    out.saliency = Tensor({prev, n});
    if (options.full_attribution) out.full.resize(prev);

    const NodeId wrt[] = {nodes.x};
    parallel_for(prev, options.threads, [&](std::size_t i) {
        const GradientMap grads = options.mode == GradMode::Guided
                                      ? g.guided_backward(seeds[i], wrt)
                                      : g.backward(seeds[i], wrt);
        const Tensor& gx = grads[nodes.x];
        for (std::size_t j = 0; j < n; ++j) out.saliency.at(i, j) = std::abs(gx.at(i, j));
        if (options.full_attribution) out.full[i] = gx;
    });
    return out;
}

Tensor guided_saliency(const AttnLstmParams& params, const ModelConfig& config,
                       const Tensor& x_window, const SaliencyOptions& options) {
    return analyze_window(params, config, x_window, options).saliency;
}

Tensor guided_saliency(const Checkpoint& checkpoint, const Tensor& x_window,
                       const SaliencyOptions& options) {
    return guided_saliency(checkpoint.model.attention_params(), checkpoint.model.config(),
                           x_window, options);
}

Tensor spatio_temporal_map(std::span<const double> alpha, const Tensor& saliency) {
    if (saliency.rank() != 2 || saliency.rows() != alpha.size()) {
        throw ShapeError("spatio_temporal_map: alpha has " + std::to_string(alpha.size()) +
                         " steps but saliency is " + shape_str(saliency.shape()));
    }
    Tensor m(saliency.shape(), 0.0);
    for (std::size_t i = 0; i < saliency.rows(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < saliency.cols(); ++j) total += saliency.at(i, j);
        if (!(total > 0.0)) continue;
        for (std::size_t j = 0; j < saliency.cols(); ++j)
            m.at(i, j) = alpha[i] * saliency.at(i, j) / total;
    }
    return m;
}

AttentionRecord explain(const Checkpoint& checkpoint, const Tensor& x_window,
                        const SaliencyOptions& options) {
    const auto& params = checkpoint.model.attention_params();
    LocalAnalysis local = analyze_window(params, checkpoint.model.config(), x_window, options);
    AttentionRecord r;
    r.alpha = std::move(local.alpha);
    r.saliency = std::move(local.saliency);
    r.map = spatio_temporal_map(r.alpha, r.saliency);
    r.prediction = checkpoint.denormalize_target(local.prediction);
    r.full_attribution = std::move(local.full);
    return r;
}

AttentionRecord explain(const Checkpoint& checkpoint, const WindowSample& sample,
                        const SaliencyOptions& options) {
    AttentionRecord r = explain(checkpoint, sample.x, options);
    r.origin_t = sample.origin_t;
    r.target = checkpoint.denormalize_target(sample.y);
    return r;
}

void GlobalAccumulator::add(std::span<const double> alpha, const Tensor& map) {
    if (count_ == 0) {
        alpha_.assign(alpha.begin(), alpha.end());
        map_ = map;
        count_ = 1;
        return;
    }
    if (alpha.size() != alpha_.size() || map.shape() != map_.shape()) {
        throw ShapeError("aggregate_global: record shapes differ (" +
                         std::to_string(alpha.size()) + " vs " + std::to_string(alpha_.size()) +
                         " steps)");
    }
    ++count_;
    const double k = static_cast<double>(count_);
    for (std::size_t i = 0; i < alpha_.size(); ++i) alpha_[i] += (alpha[i] - alpha_[i]) / k;
    for (std::size_t i = 0; i < map_.size(); ++i) map_[i] += (map[i] - map_[i]) / k;
}

GlobalAttention GlobalAccumulator::result() const {
    if (count_ == 0) throw ValidationError("aggregate_global: no records");
    return {count_, alpha_, map_};
}

GlobalAttention aggregate_global(std::span<const AttentionRecord> records) {
    if (records.empty()) throw ValidationError("aggregate_global: no records");
    GlobalAccumulator acc;
    for (const auto& r : records) acc.add(r);
    return acc.result();
}

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
    return prefix.string() + suffix;
}

}  // namespace

ExportedFiles export_maps(std::span<const double> alpha, const Tensor& map,
                          const std::filesystem::path& prefix, const ExportOptions& options) {
    const std::size_t rows = alpha.size();
    if (map.rank() != 2 || map.rows() != rows) {
        throw ShapeError("export_maps: map " + shape_str(map.shape()) + " does not match " +
                         std::to_string(rows) + " alpha entries");
    }
    const std::size_t n = map.cols();
    std::vector<std::string> names = options.series_names;
    if (names.empty()) {
        for (std::size_t j = 0; j < n; ++j) names.push_back("x" + std::to_string(j));
    }
    if (names.size() != n) throw ShapeError("export_maps: series name count mismatch");
    const std::string comment = options.provenance.empty() ? "" : "# " + options.provenance + "\n";
    // Step i of W-1 previous steps lies (W-1-i) steps before the current one.
    auto lag_of = [&](std::size_t i) { return (rows - i) * options.minutes_per_step; };

    ExportedFiles files{with_suffix(prefix, "_alpha.csv"), with_suffix(prefix, "_map.csv"),
                        with_suffix(prefix, "_map.pgm")};

    std::string a = comment + "lag_minutes_before_t,weight\n";
    for (std::size_t i = 0; i < rows; ++i) a += std::to_string(lag_of(i)) + "," + fmt(alpha[i]) + "\n";
    write_text(files.alpha_csv, a);

    std::string m = comment + "lag";
    for (const auto& name : names) m += "," + name;
    m += "\n";
    for (std::size_t i = 0; i < rows; ++i) {
        m += std::to_string(lag_of(i));
        for (std::size_t j = 0; j < n; ++j) m += "," + fmt(map.at(i, j));
        m += "\n";
    }
    write_text(files.map_csv, m);

    double lo = map[0], hi = map[0];
    for (double v : map.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const std::size_t width = options.transpose ? rows : n;
    const std::size_t height = options.transpose ? n : rows;
    std::string p = "P5\n" + comment + "# scale min=" + fmt(lo) + " max=" + fmt(hi) +
                    (options.transpose ? " rows=series cols=lag" : " rows=lag cols=series") + "\n" +
                    std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            const double v = options.transpose ? map.at(c, r) : map.at(r, c);
            const double scaled = hi > lo ? (v - lo) / (hi - lo) : 0.0;
            p.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled * 255.0))));
        }
    }
    write_text(files.map_pgm, p);
    return files;
}

MapCsv read_map_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    MapCsv out;
    std::vector<double> values;
    std::string line;
    bool header = false;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!header) {
            out.names.assign(cells.begin() + 1, cells.end());
            header = true;
            continue;
        }
        if (cells.size() != out.names.size() + 1) throw ValidationError("ragged map CSV row");
        out.lags.push_back(std::stoul(cells[0]));
        for (std::size_t j = 1; j < cells.size(); ++j) values.push_back(std::stod(cells[j]));
    }
    if (out.lags.empty()) throw ValidationError("map CSV has no rows");
    out.values = Tensor({out.lags.size(), out.names.size()}, std::move(values));
    return out;
}

Pgm read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    Pgm pgm;
    std::string magic;
    std::getline(f, magic);
    if (magic != "P5") throw ValidationError("not a binary PGM");
    std::vector<std::size_t> numbers;
    std::string line;
    while (numbers.size() < 3 && std::getline(f, line)) {
        if (!line.empty() && line[0] == '#') {
            pgm.comments.push_back(line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1));
            continue;
        }
        std::stringstream ss(line);
        std::size_t v;
        while (ss >> v) numbers.push_back(v);
    }
    if (numbers.size() < 3) throw ValidationError("truncated PGM header");
    pgm.width = numbers[0];
    pgm.height = numbers[1];
    pgm.pixels.resize(pgm.width * pgm.height);
    f.read(reinterpret_cast<char*>(pgm.pixels.data()), static_cast<std::streamsize>(pgm.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(pgm.pixels.size())) {
        throw ValidationError("truncated PGM pixel data");
    }
    return pgm;
}

}  // namespace lagsight
