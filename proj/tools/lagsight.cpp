// lagsight: generate synthetic data, train, evaluate and explain.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or validation error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "lagsight/checkpoint.hpp"
#include "lagsight/error.hpp"
#include "lagsight/interpret.hpp"
#include "lagsight/synth.hpp"
#include "lagsight/train.hpp"

namespace fs = std::filesystem;
using namespace lagsight;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::vector<std::string> split_names(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw IoError("write to '" + path.string() + "' failed");
}

// Effective configuration of a subcommand, next to its main output.
void write_sidecar(const CLI::App& sub, const fs::path& output) {
    write_text(output.string() + ".effective.ini", sub.config_to_str(true, false));
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Turns `key=value` lines of the file named by --config into flags, skipping
// keys already given on the command line. Blank lines, `#`/`;` comments and
// `[section]` headers are ignored; `[a,b]` values expand to several tokens and
// true/false values toggle flags.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].starts_with("--config=")) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot read config file '" + path + "'");
    auto trim = [](std::string v) {
        const auto b = v.find_first_not_of(" \t\r");
        const auto e = v.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    auto given = [&](const std::string& flag) {
        for (const auto& a : args)
            if (a == flag || a.starts_with(flag + "=")) return true;
        return false;
    };
    std::vector<std::string> extra;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
            value = value.substr(1, value.size() - 2);
        const std::string flag = "--" + key;
        if (key == "config" || given(flag) || value.empty() || value == "false") continue;
        extra.push_back(flag);
        if (value == "true") continue;
        if (value.front() == '[' && value.back() == ']') {
            for (const auto& item : split_names(value.substr(1, value.size() - 2))) extra.push_back(trim(item));
        } else {
            extra.push_back(value);
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

// generate ------------------------------------------------------------------

struct GenerateArgs {
    std::string config;
    SynthConfig synth;
    std::uint64_t seed = 0;
    std::string out;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
    auto* sub = app.add_subcommand("generate", "Write the synthetic A/B/C/D dataset as CSV");
    sub->add_option("--config", a.config, "Flat key=value config file (flags override it)");
    sub->add_option("--length", a.synth.length_minutes, "Number of 1-minute rows")->capture_default_str();
    sub->add_option("--seed", a.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", a.out, "Output CSV path")->required();
    sub->add_option("--alpha", a.synth.alpha_coef, "Scale from A to B")->capture_default_str();
    sub->add_option("--beta", a.synth.beta_coef, "Scale from B to C")->capture_default_str();
    sub->add_option("--base", a.synth.base_level, "Initial level of A, constant level of D")->capture_default_str();
    sub->add_option("--lag", a.synth.lag_minutes, "Delay of B behind A, minutes")->capture_default_str();
    sub->add_option("--gap-min", a.synth.gap_range.lo, "Minimum hold between A changes, minutes")->capture_default_str();
    sub->add_option("--gap-max", a.synth.gap_range.hi, "Maximum hold between A changes, minutes")->capture_default_str();
    sub->add_option("--step-min", a.synth.step_range.lo, "Minimum |amplitude change|")->capture_default_str();
    sub->add_option("--step-max", a.synth.step_range.hi, "Maximum |amplitude change|")->capture_default_str();
    sub->add_option("--ramp-min", a.synth.transition_range.lo, "Minimum ramp duration, minutes")->capture_default_str();
    sub->add_option("--ramp-max", a.synth.transition_range.hi, "Maximum ramp duration, minutes")->capture_default_str();
    sub->add_option("--noise", a.synth.noise_sigma, "Gaussian noise std on A, B, C")->capture_default_str();
}

int run_generate(const CLI::App& sub, GenerateArgs& a) {
    a.synth.seed = a.seed;
    a.synth.validate();
    std::cout << "alpha=" << a.synth.alpha_coef << " beta=" << a.synth.beta_coef
              << " base=" << a.synth.base_level << " lag=" << a.synth.lag_minutes << "\n";
    const TimeSeriesFrame frame = generate(a.synth, a.seed);
    write_frame(frame, a.out);
    write_sidecar(sub, a.out);
    std::cout << "seed=" << a.seed << " rows=" << frame.length() << " out=" << a.out << "\n";
    return 0;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::string data;
    std::string model = "attention";
    std::string inputs = "A,C,D";
    std::string target = "B";
    ModelConfig mc;
    TrainConfig tc;
    std::vector<double> split{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
    std::string checkpoint;
    std::string history;
    bool quiet = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* sub = app.add_subcommand("train", "Train an attention or vanilla LSTM forecaster");
    sub->add_option("--config", a.config, "Flat key=value config file (flags override it)");
    sub->add_option("--data", a.data, "Input CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", a.model, "attention | vanilla")
        ->capture_default_str()
        ->check(CLI::IsMember({"attention", "vanilla"}));
    sub->add_option("--inputs", a.inputs, "Comma-separated input series")->capture_default_str();
    sub->add_option("--target", a.target, "Target series")->capture_default_str();
    sub->add_option("--window", a.mc.window, "Steps per window (W)")->capture_default_str();
    sub->add_option("--horizon", a.mc.horizon_steps, "Prediction offset in steps")->capture_default_str();
    sub->add_option("--filters", a.mc.conv_filters, "conv1d filters")->capture_default_str();
    sub->add_option("--kernel", a.mc.conv_kernel, "conv1d kernel width")->capture_default_str();
    sub->add_option("--hidden", a.mc.lstm_hidden, "LSTM hidden width")->capture_default_str();
    sub->add_option("--lr", a.tc.lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--beta1", a.tc.beta1, "Adam beta1")->capture_default_str();
    sub->add_option("--beta2", a.tc.beta2, "Adam beta2")->capture_default_str();
    sub->add_option("--eps", a.tc.eps, "Adam epsilon")->capture_default_str();
    sub->add_option("--batch", a.tc.batch_size, "Mini-batch size")->capture_default_str();
    sub->add_option("--epochs", a.tc.max_epochs, "Maximum epochs")->capture_default_str();
    sub->add_option("--patience", a.tc.patience, "Early-stopping patience, epochs")->capture_default_str();
    sub->add_option("--clip", a.tc.clip_norm, "Global gradient-norm clip")->capture_default_str();
    sub->add_option("--split", a.split, "Chronological train,val,test fractions")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
    sub->add_option("--chunk", a.tc.chunk, "Samples per gradient graph")->capture_default_str();
    sub->add_option("--seed", a.seed, "Random seed (init and shuffling)")->capture_default_str();
    sub->add_option("--threads", a.tc.threads, "Worker threads (1 = canonical)")->capture_default_str();
    sub->add_option("--checkpoint", a.checkpoint, "Output checkpoint path")->required();
    sub->add_option("--history", a.history, "Per-epoch history CSV (default <checkpoint>.history.csv)");
    sub->add_flag("--quiet", a.quiet, "Do not print per-epoch progress");
}

int run_train(const CLI::App& sub, TrainArgs& a) {
    const ModelKind kind = parse_model_kind(a.model);
    const auto inputs = split_names(a.inputs);
    if (inputs.empty()) throw ValidationError("--inputs lists no series");
    a.tc.split = {a.split.at(0), a.split.at(1), a.split.at(2)};
    a.tc.validate();
    a.mc.n_inputs = inputs.size();
    a.mc.seed = a.seed;
    a.mc.validate();

    const TimeSeriesFrame frame = read_frame(a.data);
    for (const auto& name : inputs) frame.column_index(name);
    frame.column_index(a.target);
    const Dataset data =
        prepare_dataset(frame, inputs, a.target, a.mc.window, a.mc.horizon_steps, a.tc.split);
    std::cout << "model=" << a.model << " samples train=" << data.train.size()
              << " val=" << data.val.size() << " test=" << data.test.size() << "\n";

    const Checkpoint ck = fit(kind, data, a.tc, a.mc, a.seed, [&](const EpochRecord& r) {
        if (!a.quiet) {
            std::cout << "epoch " << r.epoch << " train_rmse=" << r.train_rmse
                      << " val_rmse=" << r.val_rmse << std::endl;
        }
    });
    save_checkpoint(ck, a.checkpoint);
    write_sidecar(sub, a.checkpoint);

    const fs::path history = a.history.empty() ? a.checkpoint + ".history.csv" : a.history;
    std::string h = "epoch,train_rmse,val_rmse\n";
    for (const auto& r : ck.history) {
        h += std::to_string(r.epoch) + "," + num(r.train_rmse) + "," + num(r.val_rmse) + "\n";
    }
    write_text(history, h);

    const Metrics val = evaluate(ck, data.val, a.tc.threads);
    const Metrics test = evaluate(ck, data.test, a.tc.threads);
    std::cout << "best_epoch=" << ck.best_epoch << " val_rmse=" << num(val.rmse)
              << " test_rmse=" << num(test.rmse) << " test_r2=" << num(test.r2) << "\n";
    return 0;
}

// evaluate ------------------------------------------------------------------

struct EvaluateArgs {
    std::string config;
    std::string checkpoint;
    std::string data;
    std::string holdout;
    std::string split = "test";
    std::string out;
    bool oracle = false;
    unsigned threads = 1;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
    auto* sub = app.add_subcommand("evaluate", "Report rmse/mae/r2 of a checkpoint");
    sub->add_option("--config", a.config, "Flat key=value config file (flags override it)");
    sub->add_option("--checkpoint", a.checkpoint, "Checkpoint path")->required()->check(CLI::ExistingFile);
    auto* data = sub->add_option("--data", a.data, "Data CSV the checkpoint was trained on")
                     ->check(CLI::ExistingFile);
    auto* holdout = sub->add_option("--holdout", a.holdout,
                                    "Separate hold-out CSV; every window in it is scored")
                        ->check(CLI::ExistingFile);
    data->excludes(holdout);
    sub->add_option("--split", a.split, "train | val | test | all (with --data)")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    sub->add_option("--out", a.out, "Metrics CSV path (metric,value)");
    sub->add_flag("--oracle", a.oracle, "Self-test: score the target as its own prediction");
    sub->add_option("--threads", a.threads, "Worker threads")->capture_default_str();
}

int run_evaluate(const CLI::App& sub, EvaluateArgs& a) {
    if (a.data.empty() && a.holdout.empty()) {
        throw ValidationError("evaluate needs --data or --holdout");
    }
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const TimeSeriesFrame frame = read_frame(a.holdout.empty() ? a.data : a.holdout);
    const Split split = a.holdout.empty() ? parse_split(a.split) : Split::All;
    const auto samples = windows_for_split(frame, ck, split);

    Metrics m;
    if (a.oracle) {
        std::vector<double> actual;
        for (const auto& s : samples) actual.push_back(ck.denormalize_target(s.y));
        m = compute_metrics(actual, actual);
    } else {
        m = evaluate(ck, samples, a.threads);
    }
    const std::string label = a.oracle ? "oracle" : to_string(ck.kind());
    std::cout << label << " split=" << to_string(split) << " n=" << m.count
              << " rmse=" << num(m.rmse) << " mae=" << num(m.mae) << " r2=" << num(m.r2) << "\n";
    if (!a.out.empty()) {
        std::string csv = "# lagsight-evaluate model=" + label +
                          " checkpoint=" + checkpoint_hash(ck) + " split=" + to_string(split) +
                          "\nmetric,value\n";
        csv += "rmse," + num(m.rmse) + "\nmae," + num(m.mae) + "\nr2," + num(m.r2) +
               "\ncount," + std::to_string(m.count) + "\n";
        write_text(a.out, csv);
        write_sidecar(sub, a.out);
    }
    return 0;
}

// explain -------------------------------------------------------------------

struct ExplainArgs {
    std::string config;
    std::string checkpoint;
    std::string data;
    std::int64_t at = -1;
    bool global = false;
    std::string split = "train";
    std::size_t stride = 1;
    std::string out_prefix;
    bool transpose = false;
    unsigned threads = 1;
};

void add_explain(CLI::App& app, ExplainArgs& a) {
    auto* sub = app.add_subcommand("explain", "Export local or global spatio/temporal attention");
    sub->add_option("--config", a.config, "Flat key=value config file (flags override it)");
    sub->add_option("--checkpoint", a.checkpoint, "Attention checkpoint")->required()->check(CLI::ExistingFile);
    sub->add_option("--data", a.data, "Data CSV")->required()->check(CLI::ExistingFile);
    auto* at = sub->add_option("--at", a.at, "Explain the window ending at minute t");
    auto* global = sub->add_flag("--global", a.global, "Average local attention over a split");
    at->excludes(global);
    sub->add_option("--split", a.split, "Split averaged by --global")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    sub->add_option("--stride", a.stride, "With --global, explain every stride-th window")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sub->add_option("--out-prefix", a.out_prefix, "Prefix for _alpha.csv, _map.csv, _map.pgm")->required();
    sub->add_flag("--transpose", a.transpose, "PGM rows are series instead of lags");
    sub->add_option("--threads", a.threads, "Worker threads")->capture_default_str();
}

int run_explain(const CLI::App& sub, ExplainArgs& a) {
    if (!a.global && a.at < 0) throw ValidationError("explain needs --at <t> or --global");
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    if (ck.kind() != ModelKind::Attention) {
        throw ValidationError("no attention available: checkpoint holds a vanilla LSTM");
    }
    const TimeSeriesFrame frame = read_frame(a.data);
    const auto& mc = ck.model.config();
    ExportOptions opts;
    opts.series_names = ck.inputs;
    opts.transpose = a.transpose;
    const std::string hash = checkpoint_hash(ck);
    SaliencyOptions sopts;
    sopts.threads = a.threads;

    if (!a.global) {
        const std::size_t lo = mc.window - 1;
        const std::size_t T = frame.length();
        if (T < mc.window + mc.horizon_steps) {
            throw ValidationError("data too short for window + horizon");
        }
        const std::size_t hi = T - 1 - mc.horizon_steps;
        const auto t = static_cast<std::size_t>(a.at);
        if (t < lo || t > hi) {
            throw ValidationError("--at " + std::to_string(a.at) + " out of range; valid range is [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        const auto samples = make_windows(frame, ck.inputs, ck.target, mc.window,
                                          mc.horizon_steps, ck.normalizer, t, t);
        const AttentionRecord r = explain(ck, samples.front(), sopts);
        opts.provenance = "lagsight-explain checkpoint=" + hash + " origin_t=" + std::to_string(t);
        const auto files = export_maps(r.alpha, r.map, a.out_prefix, opts);
        write_sidecar(sub, files.map_csv);
        std::cout << "origin_t=" << t << " prediction=" << num(r.prediction)
                  << " target=" << num(r.target) << " rows=" << r.alpha.size() << "\n";
        return 0;
    }

    const Split split = parse_split(a.split);
    const auto samples = windows_for_split(frame, ck, split);
    GlobalAccumulator acc;
    for (std::size_t i = 0; i < samples.size(); i += a.stride) acc.add(explain(ck, samples[i], sopts));
    const GlobalAttention g = acc.result();
    opts.provenance = "lagsight-explain checkpoint=" + hash + " origin_t=global split=" +
                      to_string(split) + " count=" + std::to_string(g.count) +
                      " stride=" + std::to_string(a.stride);
    const auto files = export_maps(g.alpha, g.map, a.out_prefix, opts);
    write_sidecar(sub, files.map_csv);
    std::cout << "global split=" << to_string(split) << " records=" << g.count
              << " rows=" << g.alpha.size() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lagsight: interpretable attention LSTM for multivariate time series"};
    app.require_subcommand(1);
    GenerateArgs gen;
    TrainArgs train;
    EvaluateArgs eval;
    ExplainArgs expl;
    add_generate(app, gen);
    add_train(app, train);
    add_evaluate(app, eval);
    add_explain(app, expl);

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());

    try {
        app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        const CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "generate") return run_generate(*sub, gen);
        if (name == "train") return run_train(*sub, train);
        if (name == "evaluate") return run_evaluate(*sub, eval);
        if (name == "explain") return run_explain(*sub, expl);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
