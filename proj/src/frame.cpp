#include "lagsight/frame.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lagsight/error.hpp"

namespace lagsight {

std::size_t TimeSeriesFrame::column_index(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return j;
    }
    std::string available;
    for (const auto& n : names) available += (available.empty() ? "" : ",") + n;
    throw ValidationError("column '" + name + "' not found; available columns: " + available);
}

std::vector<double> TimeSeriesFrame::column(const std::string& name) const {
    const std::size_t j = column_index(name);
    std::vector<double> out(length());
    for (std::size_t t = 0; t < length(); ++t) out[t] = values.at(t, j);
    return out;
}

void TimeSeriesFrame::validate() const {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw ValidationError("duplicate series name '" + n + "'");
    }
    if (index.empty()) throw ValidationError("frame has no rows");
    if (values.rank() != 2 || values.rows() != index.size() || values.cols() != names.size()) {
        throw ValidationError("frame values " + shape_str(values.shape()) + " do not match " +
                              std::to_string(index.size()) + " rows x " +
                              std::to_string(names.size()) + " series");
    }
    for (std::size_t t = 1; t < index.size(); ++t) {
        if (index[t] != index[t - 1] + 1) {
            throw ValidationError("index must increase by 1 per row; row " + std::to_string(t) +
                                  " has " + std::to_string(index[t]) + " after " +
                                  std::to_string(index[t - 1]));
        }
    }
    if (!values.is_finite()) throw ValidationError("frame contains non-finite values");
}

namespace {

void append_double(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    out.append(buf, res.ptr);
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

}  // namespace

void write_frame(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
    frame.validate();
    std::string out;
    out.reserve(frame.length() * (frame.width() + 1) * 20);
    if (!frame.provenance.empty()) out += "# " + frame.provenance + "\n";
    out += "t";
    for (const auto& n : frame.names) out += "," + n;
    out += "\n";
    for (std::size_t t = 0; t < frame.length(); ++t) {
        out += std::to_string(frame.index[t]);
        for (std::size_t j = 0; j < frame.width(); ++j) {
            out += ',';
            append_double(out, frame.values.at(t, j));
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

TimeSeriesFrame read_frame(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
    std::stringstream buf;
    buf << f.rdbuf();
    const std::string text = buf.str();

    TimeSeriesFrame frame;
    std::vector<double> values;
    std::size_t line_no = 0, pos = 0;
    bool have_header = false;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (have_header) {
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": comment lines are only allowed before the header");
            }
            if (frame.provenance.empty()) {
                std::string_view body = line.substr(1);
                if (!body.empty() && body.front() == ' ') body.remove_prefix(1);
                frame.provenance = std::string(body);
            }
            continue;
        }
        const auto cells = split_commas(line);
        if (!have_header) {
            if (cells.size() < 2) {
                throw ValidationError(path.string() + ": header needs an index column and at "
                                                      "least one series");
            }
            std::set<std::string> seen;
            for (std::size_t j = 1; j < cells.size(); ++j) {
                std::string name(cells[j]);
                if (name.empty()) {
                    throw ValidationError(path.string() + ": empty header cell in column " +
                                          std::to_string(j + 1));
                }
                if (!seen.insert(name).second) {
                    throw ValidationError(path.string() + ": duplicate header '" + name +
                                          "' in column " + std::to_string(j + 1));
                }
                frame.names.push_back(std::move(name));
            }
            have_header = true;
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != frame.names.size() + 1) {
            throw ValidationError(where + ": expected " + std::to_string(frame.names.size() + 1) +
                                  " cells, found " + std::to_string(cells.size()));
        }
        std::int64_t idx = 0;
        {
            const auto c = cells[0];
            const auto r = std::from_chars(c.data(), c.data() + c.size(), idx);
            if (r.ec != std::errc() || r.ptr != c.data() + c.size()) {
                throw ValidationError(where + ": column 1: index '" + std::string(c) +
                                      "' is not an integer");
            }
        }
        if (!frame.index.empty() && idx != frame.index.back() + 1) {
            throw ValidationError(where + ": index " + std::to_string(idx) +
                                  " does not follow " + std::to_string(frame.index.back()));
        }
        frame.index.push_back(idx);
        for (std::size_t j = 1; j < cells.size(); ++j) {
            const auto c = cells[j];
            double v = 0.0;
            const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
            if (c.empty() || r.ec != std::errc() || r.ptr != c.data() + c.size() ||
                !std::isfinite(v)) {
                throw ValidationError(where + ": column " + std::to_string(j + 1) + " ('" +
                                      frame.names[j - 1] + "'): " +
                                      (c.empty() ? std::string("missing value")
                                                 : "non-numeric cell '" + std::string(c) + "'"));
            }
            values.push_back(v);
        }
    }
    if (!have_header) throw ValidationError(path.string() + ": missing header line");
    if (frame.index.empty()) throw ValidationError(path.string() + ": no data rows");
    frame.values = Tensor({frame.index.size(), frame.names.size()}, std::move(values));
    return frame;
}

}  // namespace lagsight
