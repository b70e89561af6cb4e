#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lagsight/tensor.hpp"

namespace lagsight {

// Minute-indexed multivariate series. values is T x m, column j holds names[j].
struct TimeSeriesFrame {
    std::vector<std::string> names;
    std::vector<std::int64_t> index;
    Tensor values;
    // Optional provenance line written as a leading '#' comment.
    std::string provenance;

    std::size_t length() const noexcept { return index.size(); }
    std::size_t width() const noexcept { return names.size(); }

    // Throws ValidationError listing the available columns when absent.
    std::size_t column_index(const std::string& name) const;
    std::vector<double> column(const std::string& name) const;

    // Unique names, unit-step index, rectangular finite values.
    void validate() const;
};

// CSV contract: optional '#' comment lines, then a header whose first cell
// names the integer minute index, then one row per minute. Values are printed
// with 17 significant digits so a round trip is lossless.
void write_frame(const TimeSeriesFrame& frame, const std::filesystem::path& path);
TimeSeriesFrame read_frame(const std::filesystem::path& path);

}  // namespace lagsight
