#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lagsight/error.hpp"
#include "lagsight/frame.hpp"
#include "lagsight/synth.hpp"
#include "test_util.hpp"

using namespace lagsight;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "lagsight_test_synth";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

std::string read_error(const std::string& text) {
    const fs::path p = scratch("bad.csv");
    write_text(p, text);
    try {
        read_frame(p);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

// Pearson correlation of a[t] against b[t + lag] over the overlap.
double lagged_correlation(const std::vector<double>& a, const std::vector<double>& b,
                          std::size_t lag) {
    const std::size_t n = a.size() - lag;
    double ma = 0.0, mb = 0.0;
    for (std::size_t t = 0; t < n; ++t) ma += a[t], mb += b[t + lag];
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double da = a[t] - ma, db = b[t + lag] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Generate, HeldLevelGivesConstantSeries) {
    SynthConfig c;
    c.gap_range = {20000.0, 20000.0};
    const TimeSeriesFrame f = generate(c, 3);
    ASSERT_EQ(f.names, (std::vector<std::string>{"A", "B", "C", "D"}));
    for (std::size_t t = 0; t < f.length(); ++t) {
        EXPECT_EQ(f.values.at(t, 0), 1450.0);
        EXPECT_EQ(f.values.at(t, 1), 145.0);
        EXPECT_EQ(f.values.at(t, 2), 72.5);
        EXPECT_EQ(f.values.at(t, 3), 1450.0);
    }
}

TEST(Generate, DefiningIdentitiesAreExact) {
    SynthConfig c;
    const TimeSeriesFrame f = generate(c, 7);
    ASSERT_EQ(f.length(), 10000u);
    const auto A = f.column("A"), B = f.column("B"), C = f.column("C"), D = f.column("D");
    for (std::size_t t = 0; t < 10000; ++t) {
        if (t >= 180) {
            EXPECT_EQ(B[t], 0.1 * A[t - 180]) << t;
        } else {
            EXPECT_EQ(B[t], 0.1 * 1450.0) << t;
        }
        EXPECT_EQ(C[t], 0.5 * B[t]) << t;
        EXPECT_EQ(D[t], 1450.0);
        EXPECT_EQ(f.index[t], static_cast<std::int64_t>(t));
    }
    double mean = 0.0;
    for (double d : D) mean += d;
    mean /= 10000.0;
    double var = 0.0;
    for (double d : D) var += (d - mean) * (d - mean);
    EXPECT_EQ(var, 0.0);
}

TEST(Generate, CrossCorrelationRecoversLag) {
    const TimeSeriesFrame f = generate(SynthConfig{}, 7);
    const auto A = f.column("A"), B = f.column("B");
    std::size_t best = 0;
    double best_r = -2.0;
    for (std::size_t lag = 0; lag <= 400; ++lag) {
        const double r = lagged_correlation(A, B, lag);
        if (r > best_r) best_r = r, best = lag;
    }
    EXPECT_EQ(best, 180u);
    EXPECT_NEAR(best_r, 1.0, 1e-12);
}

TEST(Generate, AIsPiecewiseLinear) {
    const TimeSeriesFrame f = generate(SynthConfig{}, 11);
    const auto A = f.column("A");
    // Slopes are constant along each hold or ramp; a ramp lasts 10 to 60
    // minutes unless the series ends first.
    std::size_t run = 1, ramps = 0;
    double slope = A[1] - A[0];
    for (std::size_t t = 2; t <= A.size(); ++t) {
        const bool end = t == A.size();
        const double d = end ? 0.0 : A[t] - A[t - 1];
        if (!end && std::abs(d - slope) < 1e-9) {
            ++run;
            continue;
        }
        if (std::abs(slope) > 1e-9) {
            ++ramps;
            if (!end) {
                EXPECT_GE(run, 10u) << "ramp ending at " << t;
                EXPECT_LE(run, 60u) << "ramp ending at " << t;
            }
            const double total = std::abs(slope) * static_cast<double>(run);
            if (!end) {
                EXPECT_GE(total, 5.0 - 1e-6);
                EXPECT_LE(total, 50.0 + 1e-6);
            }
        }
        slope = d;
        run = 1;
    }
    EXPECT_GT(ramps, 50u);
}

TEST(Generate, SeedDeterminism) {
    const SynthConfig c;
    const TimeSeriesFrame a = generate(c, 42), b = generate(c, 42), d = generate(c, 43);
    EXPECT_EQ(a.values, b.values);
    EXPECT_FALSE(a.values == d.values);
    EXPECT_EQ(a.provenance, "lagsight-synth v1 seed=42 rng=mt19937_64");
}

TEST(Generate, NoiseSparesD) {
    SynthConfig c;
    c.noise_sigma = 2.0;
    const TimeSeriesFrame noisy = generate(c, 5);
    c.noise_sigma = 0.0;
    const TimeSeriesFrame clean = generate(c, 5);
    double diff = 0.0;
    for (std::size_t t = 0; t < noisy.length(); ++t) {
        EXPECT_EQ(noisy.values.at(t, 3), 1450.0);
        diff += std::abs(noisy.values.at(t, 0) - clean.values.at(t, 0));
    }
    EXPECT_GT(diff / static_cast<double>(noisy.length()), 1.0);
}

TEST(Generate, RejectsBadConfigs) {
    SynthConfig c;
    c.length_minutes = 180;
    EXPECT_THROW(generate(c, 1), ValidationError);
    c = SynthConfig{};
    c.step_range = {50.0, 5.0};
    EXPECT_THROW(generate(c, 1), ValidationError);
    c = SynthConfig{};
    c.gap_range = {-1.0, 5.0};
    EXPECT_THROW(generate(c, 1), ValidationError);
}

TEST(FrameCsv, RoundTripIsLossless) {
    SynthConfig c;
    c.noise_sigma = 0.37;
    TimeSeriesFrame f = generate(c, 9);
    const fs::path p = scratch("round.csv");
    const auto t0 = std::chrono::steady_clock::now();
    write_frame(f, p);
    const TimeSeriesFrame g = read_frame(p);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    RecordProperty("round_trip_seconds", std::to_string(secs));
    EXPECT_EQ(g.names, f.names);
    EXPECT_EQ(g.index, f.index);
    EXPECT_EQ(g.values, f.values);
    EXPECT_EQ(g.provenance, f.provenance);

    std::ifstream in(p);
    std::string first, header;
    std::getline(in, first);
    std::getline(in, header);
    EXPECT_EQ(first, "# lagsight-synth v1 seed=9 rng=mt19937_64");
    EXPECT_EQ(header, "t,A,B,C,D");
}

TEST(FrameCsv, ValidationDiagnostics) {
    const std::string missing = read_error("t,A,B\n0,1,2\n1,,3\n");
    EXPECT_NE(missing.find(":3"), std::string::npos) << missing;
    EXPECT_NE(missing.find("missing value"), std::string::npos) << missing;
    EXPECT_NE(missing.find("'A'"), std::string::npos) << missing;

    const std::string ragged = read_error("t,A,B\n0,1,2\n1,3\n");
    EXPECT_NE(ragged.find(":3"), std::string::npos) << ragged;
    EXPECT_NE(ragged.find("expected 3 cells"), std::string::npos) << ragged;

    const std::string text = read_error("t,A,B\n0,1,x2\n");
    EXPECT_NE(text.find("non-numeric"), std::string::npos) << text;
    EXPECT_NE(text.find("column 3"), std::string::npos) << text;

    const std::string dup = read_error("t,A,A\n0,1,2\n");
    EXPECT_NE(dup.find("duplicate header 'A'"), std::string::npos) << dup;

    const std::string gap = read_error("t,A\n0,1\n2,1\n");
    EXPECT_NE(gap.find("does not follow"), std::string::npos) << gap;

    EXPECT_FALSE(read_error("t,A\n").empty());
    EXPECT_THROW(read_frame(scratch("does_not_exist.csv")), IoError);
}

TEST(FrameCsv, CrLfAndCommentsAccepted) {
    const fs::path p = scratch("crlf.csv");
    write_text(p, "# made by hand\r\nminute,X\r\n5,1.5\r\n6,2.5\r\n");
    const TimeSeriesFrame f = read_frame(p);
    EXPECT_EQ(f.provenance, "made by hand");
    EXPECT_EQ(f.names, std::vector<std::string>{"X"});
    EXPECT_EQ(f.index, (std::vector<std::int64_t>{5, 6}));
    EXPECT_EQ(f.values, Tensor::matrix({{1.5}, {2.5}}));
}

TEST(FrameColumns, MissingColumnListsAvailable) {
    const TimeSeriesFrame f = generate(SynthConfig{}, 1);
    try {
        f.column("Q");
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("'Q'"), std::string::npos);
        EXPECT_NE(msg.find("A,B,C,D"), std::string::npos) << msg;
    }
}
