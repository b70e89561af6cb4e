#pragma once

// Local and global spatio/temporal attention.
//
// For a window of W steps the temporal weights alpha cover the W-1 previous
// steps. Saliency S[i, j] is the magnitude of the guided gradient of
// s_i = sum_d alpha_i * h_i[d] with respect to input x[i, j] (same step i).
// The map M spreads alpha_i across series in proportion to row i of S.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lagsight/checkpoint.hpp"
#include "lagsight/model.hpp"

namespace lagsight {

struct AttentionRecord {
    std::size_t origin_t = 0;
    std::vector<double> alpha;  // W-1
    Tensor saliency;            // (W-1) x n
    Tensor map;                 // (W-1) x n
    double prediction = 0.0;    // original units
    double target = 0.0;        // original units
    // Debug only: for each step i, the full guided gradient of s_i over the
    // whole W x n window. Rows after i are nonzero too, through alpha.
    std::vector<Tensor> full_attribution;
};

struct GlobalAttention {
    std::size_t count = 0;
    std::vector<double> alpha;
    Tensor map;
};

struct SaliencyOptions {
    GradMode mode = GradMode::Guided;
    bool full_attribution = false;
    unsigned threads = 1;
};

// One forward pass plus W-1 backward passes, seeded at each s_i.
struct LocalAnalysis {
    std::vector<double> alpha;
    Tensor saliency;
    double prediction = 0.0;  // normalized units
    std::vector<Tensor> full;
};

LocalAnalysis analyze_window(const AttnLstmParams& params, const ModelConfig& config,
                             const Tensor& x_window, const SaliencyOptions& options = {});

Tensor guided_saliency(const AttnLstmParams& params, const ModelConfig& config,
                       const Tensor& x_window, const SaliencyOptions& options = {});

// Rejects vanilla checkpoints.
Tensor guided_saliency(const Checkpoint& checkpoint, const Tensor& x_window,
                       const SaliencyOptions& options = {});

Tensor spatio_temporal_map(std::span<const double> alpha, const Tensor& saliency);

AttentionRecord explain(const Checkpoint& checkpoint, const Tensor& x_window,
                        const SaliencyOptions& options = {});

// Fills origin_t and the denormalized target from the sample.
AttentionRecord explain(const Checkpoint& checkpoint, const WindowSample& sample,
                        const SaliencyOptions& options = {});

// Streaming mean; adding the same record k times reproduces it exactly.
class GlobalAccumulator {
public:
    void add(std::span<const double> alpha, const Tensor& map);
    void add(const AttentionRecord& record) { add(record.alpha, record.map); }
    std::size_t count() const noexcept { return count_; }
    GlobalAttention result() const;

private:
    std::size_t count_ = 0;
    std::vector<double> alpha_;
    Tensor map_;
};

GlobalAttention aggregate_global(std::span<const AttentionRecord> records);

struct ExportOptions {
    std::vector<std::string> series_names;
    std::string provenance;  // written as the first comment line of every file
    bool transpose = false;  // PGM rows = series instead of lags
    std::size_t minutes_per_step = 1;
};

struct ExportedFiles {
    std::filesystem::path alpha_csv, map_csv, map_pgm;
};

// Writes <prefix>_alpha.csv, <prefix>_map.csv and <prefix>_map.pgm.
ExportedFiles export_maps(std::span<const double> alpha, const Tensor& map,
                          const std::filesystem::path& prefix, const ExportOptions& options);

struct MapCsv {
    std::vector<std::string> names;
    std::vector<std::size_t> lags;
    Tensor values;
};
MapCsv read_map_csv(const std::filesystem::path& path);

struct Pgm {
    std::size_t width = 0, height = 0;
    std::vector<std::string> comments;
    std::vector<unsigned char> pixels;
};
Pgm read_pgm(const std::filesystem::path& path);

}  // namespace lagsight
