#pragma once

// Run configuration and the batch commands behind the `colt` executable.
// Everything a command writes lives under one run directory; a second run
// never overwrites a different file there unless forced.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "colt/dataset.hpp"
#include "colt/error.hpp"
#include "colt/metrics.hpp"
#include "colt/trainer.hpp"

namespace colt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Exit codes

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitEnvironment = 2;
inline constexpr int kExitConfig = 3;

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config:
    case ErrorKind::parse:
        return kExitConfig;
    case ErrorKind::io:
    case ErrorKind::integrity:
    case ErrorKind::incompatible_checkpoint:
    case ErrorKind::dependency:
    case ErrorKind::service:
    case ErrorKind::unavailable:
        return kExitEnvironment;
    default:
        return kExitDomain;
    }
}

// ---------------------------------------------------------------------------
// RunConfig

struct RunConfig {
    std::string preset = "desk";
    std::string registry;                // registry JSON path; empty selects the built-in registry
    std::vector<std::string> tools;      // scope; empty means every registry tool
    std::string corpus_dir;              // output of `colt synth`; empty synthesizes in memory
    std::size_t per_tool = 200;          // used when synthesizing in memory
    std::string groups = "3x2";          // "AxB" or a groups file
    std::vector<std::string> strategies{"colt"};
    std::string output_dir = "runs/default";
    TrainConfig train = desk_preset();
};

inline json run_config_to_json(const RunConfig& c) {
    json train = train_config_to_json(c.train);
    train.erase("seed");
    return {{"preset", c.preset},         {"registry", c.registry},     {"tools", c.tools},
            {"corpus_dir", c.corpus_dir}, {"per_tool", c.per_tool},     {"groups", c.groups},
            {"strategies", c.strategies}, {"output_dir", c.output_dir}, {"seed", c.train.seed},
            {"train", train}};
}

/// `j` is overlaid on the preset it names (desk by default).
inline RunConfig run_config_from_json(const json& j) {
    const std::string where = "run config";
    detail::reject_unknown(j,
                           {"preset", "registry", "tools", "corpus_dir", "per_tool", "groups", "strategies",
                            "output_dir", "seed", "train"},
                           where);
    RunConfig c;
    detail::read_key(j, "preset", c.preset, where);
    c.train = preset(c.preset);
    detail::read_key(j, "registry", c.registry, where);
    detail::read_key(j, "tools", c.tools, where);
    detail::read_key(j, "corpus_dir", c.corpus_dir, where);
    detail::read_key(j, "per_tool", c.per_tool, where);
    detail::read_key(j, "groups", c.groups, where);
    detail::read_key(j, "strategies", c.strategies, where);
    detail::read_key(j, "output_dir", c.output_dir, where);
    if (j.contains("train")) {
        if (j["train"].contains("seed")) fail(ErrorKind::config, "set the seed at the top level, not under 'train'");
        c.train = train_config_from_json(j["train"], c.train);
    }
    detail::read_key(j, "seed", c.train.seed, where);
    if (c.per_tool == 0) fail(ErrorKind::config, "per_tool must be >= 1");
    if (c.strategies.empty()) fail(ErrorKind::config, "at least one strategy is required");
    for (const auto& s : c.strategies) Strategy::parse(s);
    if (c.output_dir.empty()) fail(ErrorKind::config, "output_dir must not be empty");
    // The model sizes come from the config; vocab_size is derived from the data.
    c.train.visual.patches = c.train.model.patches;
    c.train.visual.dim = c.train.model.visual_dim;
    return c;
}

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

/// Only the output directory and the seed can come from the environment.
inline void apply_env_overrides(RunConfig& c, const EnvLookup& env = process_env) {
    if (auto dir = env("COLT_OUTPUT_DIR"); dir && !dir->empty()) c.output_dir = *dir;
    if (auto seed = env("COLT_SEED"); seed && !seed->empty()) {
        std::uint64_t v = 0;
        const auto res = std::from_chars(seed->data(), seed->data() + seed->size(), v);
        if (res.ec != std::errc{} || res.ptr != seed->data() + seed->size()) {
            fail(ErrorKind::config, "COLT_SEED must be a non-negative integer, got '" + *seed + "'");
        }
        c.train.seed = v;
    }
}

inline json read_json_file(const std::string& path, ErrorKind parse_kind) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(parse_kind, "malformed JSON in '" + path + "' near byte " + std::to_string(e.byte));
    }
}

/// Empty path: preset defaults. The preset argument, when given, replaces the file's.
inline RunConfig load_run_config(const std::string& path, const std::optional<std::string>& preset_override = {},
                                 const EnvLookup& env = process_env) {
    json j = path.empty() ? json::object() : read_json_file(path, ErrorKind::config);
    if (!j.is_object()) fail(ErrorKind::config, "run config must be a JSON object");
    if (preset_override) j["preset"] = *preset_override;
    RunConfig c = run_config_from_json(j);
    apply_env_overrides(c, env);
    return c;
}

// ---------------------------------------------------------------------------
// Output files

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Writes `content` unless an identical file is already there. A differing
/// file is only replaced with `force`.
inline void write_output(const fs::path& path, const std::string& content, bool force) {
    if (fs::exists(path)) {
        if (read_text(path.string()) == content) return;
        if (!force) fail(ErrorKind::io, "refusing to overwrite '" + path.string() + "' (use --force)");
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    out << content;
    if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

inline std::string jsonl(const std::vector<LogEntry>& log) {
    std::string out;
    for (const auto& e : log) out += e.to_json().dump() + "\n";
    return out;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------
// validate

/// One JSON line per violation; returns the number of violating records.
/// Lines that do not parse are reported with code PARSE_ERROR.
inline std::size_t validate_corpus_file(const std::string& corpus_path, const ToolRegistry& registry, std::ostream& out) {
    const auto lines = read_lines(corpus_path);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        ValidationReport report;
        try {
            report = validate(parse_conversation(lines[i], ParseMode::lenient), registry);
        } catch (const Error& e) {
            out << json{{"record", i}, {"code", "PARSE_ERROR"}, {"detail", e.what()}}.dump() << "\n";
            ++bad;
            continue;
        }
        for (const auto& v : report.violations) {
            json line{{"record", i}, {"code", v.label()}};
            line["turn"] = v.turn ? json(*v.turn) : json(nullptr);
            out << line.dump() << "\n";
        }
        bad += report.valid() ? 0 : 1;
    }
    return bad;
}

inline int cmd_validate(const std::string& corpus_path, const std::string& registry_path, const std::string& report_path,
                        bool force, std::ostream& out) {
    const auto registry = registry_path.empty() ? default_registry() : read_registry(registry_path);
    std::ostringstream lines;
    const auto bad = validate_corpus_file(corpus_path, registry, lines);
    out << lines.str();
    if (!report_path.empty()) write_output(report_path, lines.str(), force);
    return bad == 0 ? kExitOk : kExitDomain;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    std::string registry;  // empty: built-in
    std::vector<std::string> tools;
    std::size_t per_tool = 200;
    std::size_t plain = 200;
    std::uint64_t seed = 1;
    std::string out_dir;
    bool force = false;
};

inline ToolRegistry scoped_registry(const std::string& registry_path, const std::vector<std::string>& tools) {
    const auto full = registry_path.empty() ? default_registry() : read_registry(registry_path);
    if (tools.empty()) return full;
    std::vector<ToolSpec> specs;
    for (const auto& t : tools) {
        if (!full.contains(t)) fail(ErrorKind::config, "tool '" + t + "' is not in the registry");
        specs.push_back(full.get(t));
    }
    for (const auto& s : specs) {
        for (const auto& m : s.composite_of) {
            if (std::none_of(specs.begin(), specs.end(), [&](const ToolSpec& x) { return x.name == m; })) {
                fail(ErrorKind::config, "composite '" + s.name + "' needs '" + m + "' in scope");
            }
        }
    }
    return ToolRegistry(specs);
}

/// Layout: registry.json, plain.jsonl, train/<tool>.jsonl, test/<tool>.jsonl, manifest.json.
inline json cmd_synth(const SynthOptions& opt) {
    if (opt.out_dir.empty()) fail(ErrorKind::config, "synth needs an output directory");
    const auto registry = scoped_registry(opt.registry, opt.tools);
    const auto corpus = synthesize_corpus(registry, opt.per_tool, opt.seed);
    const auto split = split_train_test(corpus, opt.seed);
    const auto plain = synthesize_plain_corpus(opt.plain, opt.seed);
    const fs::path root(opt.out_dir);

    auto dump = [](const std::vector<Conversation>& records) {
        std::string s;
        for (const auto& r : records) s += serialize_conversation(r) + "\n";
        return s;
    };
    std::vector<std::pair<fs::path, std::string>> files;
    files.emplace_back("registry.json", registry_to_json(registry).dump(2) + "\n");
    files.emplace_back("plain.jsonl", dump(plain));
    json tools = json::array();
    for (const auto& name : registry.names()) {
        std::vector<Conversation> train, test;
        for (const auto& c : split.train) {
            if (c.extra_string("tool") == name) train.push_back(c);
        }
        for (const auto& c : split.test) {
            if (c.extra_string("tool") == name) test.push_back(c);
        }
        files.emplace_back(fs::path("train") / (name + ".jsonl"), dump(train));
        files.emplace_back(fs::path("test") / (name + ".jsonl"), dump(test));
        tools.push_back({{"tool", name}, {"train", train.size()}, {"test", test.size()}});
    }
    std::uint64_t checksum = 0;
    for (const auto& [path, content] : files) checksum = hash_mix(checksum, path.generic_string() + "\n" + content);
    json manifest{{"seed", opt.seed},   {"per_tool", opt.per_tool}, {"plain", plain.size()},
                  {"tools", tools},     {"checksum", hex64(checksum)}};
    files.emplace_back("manifest.json", manifest.dump(2) + "\n");

    // Check every target before writing anything.
    for (const auto& [path, content] : files) {
        const auto full = root / path;
        if (fs::exists(full) && !opt.force && read_text(full.string()) != content) {
            fail(ErrorKind::io, "refusing to overwrite '" + full.string() + "' (use --force)");
        }
    }
    for (const auto& [path, content] : files) write_output(root / path, content, opt.force);
    return manifest;
}

// ---------------------------------------------------------------------------
// Loading the experiment a run config describes

inline Experiment load_experiment(const RunConfig& cfg) {
    if (!cfg.corpus_dir.empty()) {
        const fs::path root(cfg.corpus_dir);
        if (!fs::exists(root / "manifest.json")) fail(ErrorKind::io, "no manifest.json in '" + cfg.corpus_dir + "'");
        const auto registry_path = cfg.registry.empty() ? (root / "registry.json").string() : cfg.registry;
        const auto registry = scoped_registry(registry_path, cfg.tools);
        Split split;
        for (const auto& name : registry.names()) {
            for (auto& c : read_corpus((root / "train" / (name + ".jsonl")).string())) split.train.push_back(std::move(c));
            for (auto& c : read_corpus((root / "test" / (name + ".jsonl")).string())) split.test.push_back(std::move(c));
        }
        return prepare_experiment(registry, split, read_corpus((root / "plain.jsonl").string()), cfg.train);
    }
    const auto registry = scoped_registry(cfg.registry, cfg.tools);
    return prepare_experiment(registry, synthesize_corpus(registry, cfg.per_tool, cfg.train.seed),
                              synthesize_plain_corpus(cfg.train.plain_samples, cfg.train.seed), cfg.train);
}

/// Groups file: one group per line, tool names separated by spaces or commas; '#' starts a comment.
inline std::vector<std::vector<std::string>> read_groups_file(const std::string& path) {
    std::vector<std::vector<std::string>> groups;
    for (auto line : read_lines(path)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream words(line);
        std::vector<std::string> group;
        for (std::string w; words >> w;) group.push_back(w);
        if (!group.empty()) groups.push_back(std::move(group));
    }
    if (groups.empty()) fail(ErrorKind::config, "groups file '" + path + "' lists no groups");
    return groups;
}

inline bool is_group_layout(const std::string& s) {
    const auto x = s.find('x');
    auto digits = [](const std::string& t) {
        return !t.empty() && std::all_of(t.begin(), t.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
    };
    return x != std::string::npos && digits(s.substr(0, x)) && digits(s.substr(x + 1));
}

inline std::vector<std::vector<std::string>> resolve_groups(const std::string& groups, const std::vector<std::string>& tools) {
    auto out = is_group_layout(groups) ? make_groups(tools, groups) : read_groups_file(groups);
    std::vector<std::string> flat;
    for (const auto& g : out) flat.insert(flat.end(), g.begin(), g.end());
    std::sort(flat.begin(), flat.end());
    std::vector<std::string> scope = tools;
    std::sort(scope.begin(), scope.end());
    if (flat != scope) fail(ErrorKind::config, "groups must cover exactly the tools in scope");
    return out;
}

// ---------------------------------------------------------------------------
// train

struct RunPaths {
    fs::path root;
    fs::path resolved_config() const { return root / "resolved_config.json"; }
    fs::path vocab() const { return root / "vocab.txt"; }
    fs::path checkpoint(int stage) const { return root / "checkpoints" / ("stage" + std::to_string(stage) + ".ckpt"); }
    fs::path stage_log(int stage) const { return root / "logs" / ("stage" + std::to_string(stage) + ".jsonl"); }
    fs::path strategy_dir(const std::string& strategy) const {
        std::string name = strategy;
        std::replace(name.begin(), name.end(), ':', '-');
        return root / "continual" / name;
    }
};

inline void write_run_header(const RunConfig& cfg, const Experiment& ex, bool force) {
    const RunPaths paths{cfg.output_dir};
    fs::create_directories(paths.root);
    write_output(paths.resolved_config(), run_config_to_json(cfg).dump(2) + "\n", force);
    write_output(paths.vocab(), ex.vocab.to_lines(), force);
}

inline void save_stage_checkpoint(const RunPaths& paths, int stage, const TrainerState& s, const TrainConfig& cfg,
                                  bool force) {
    const auto target = paths.checkpoint(stage);
    fs::create_directories(target.parent_path());
    if (fs::exists(target) && !force) {
        if (read_text(target.string()) == checkpoint_bytes(s, config_hash(cfg))) return;
        fail(ErrorKind::io, "refusing to overwrite '" + target.string() + "' (use --force)");
    }
    save_checkpoint(target.string(), s, cfg);
}

inline std::vector<Instance> all_tool_instances(const Experiment& ex) {
    std::vector<Instance> out;
    for (const auto& tool : ex.tools) {
        const auto& d = ex.data.train.at(tool);
        out.insert(out.end(), d.begin(), d.end());
    }
    return out;
}

/// `stage` is "1", "2", "3" or "all". Starting above 1 needs the previous
/// stage's checkpoint in the run directory.
inline int cmd_train(const RunConfig& cfg, const std::string& stage, bool force, std::ostream& out) {
    int first = 0, last = 0;
    if (stage == "all") {
        first = 1;
        last = 3;
    } else if (stage == "1" || stage == "2" || stage == "3") {
        first = last = stage[0] - '0';
    } else {
        fail(ErrorKind::config, "--stage must be 1, 2, 3 or all");
    }
    const auto ex = load_experiment(cfg);
    const RunPaths paths{cfg.output_dir};
    TrainerState s;
    if (first == 1) {
        s = init_trainer(ex.config);
    } else {
        const auto prev = paths.checkpoint(first - 1);
        if (!fs::exists(prev)) {
            fail(ErrorKind::dependency, "stage " + std::to_string(first) + " needs '" + prev.string() +
                                            "'; run `colt train --stage " + std::to_string(first - 1) + "` first");
        }
        s = load_checkpoint(prev.string(), ex.config);
    }
    write_run_header(cfg, ex, force);
    const auto tool_data = all_tool_instances(ex);
    for (int k = first; k <= last; ++k) {
        const auto log = k == 1 ? run_stage_one(s, ex)
                                : run_stage(s, ex.config, ex.config.stage(k), tool_data, ex.data.plain, true);
        write_output(paths.stage_log(k), jsonl(log), force);
        save_stage_checkpoint(paths, k, s, ex.config, force);
        out << "stage " << k << ": " << log.size() << " steps, final loss " << format_real(log.back().total) << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// continual

/// Stage 1 is shared by every strategy: reused from the run directory when
/// present, otherwise trained and saved there.
inline TrainerState continual_base(const RunConfig& cfg, const Experiment& ex, bool force) {
    const RunPaths paths{cfg.output_dir};
    const auto ckpt = paths.checkpoint(1);
    if (fs::exists(ckpt)) return load_checkpoint(ckpt.string(), ex.config);
    TrainerState s = init_trainer(ex.config);
    const auto log = run_stage_one(s, ex);
    write_output(paths.stage_log(1), jsonl(log), force);
    save_stage_checkpoint(paths, 1, s, ex.config, force);
    return s;
}

inline std::string tool_accuracy_csv(const ContinualResult& r, const StreamPlan& plan) {
    std::string out = "k,tool,accuracy\n";
    for (std::size_t k = 0; k < r.tool_accuracy.size(); ++k) {
        for (const auto& g : plan.groups) {
            for (const auto& t : g) {
                if (auto it = r.tool_accuracy[k].find(t); it != r.tool_accuracy[k].end()) {
                    out += std::to_string(k + 1) + "," + t + "," + format_real(it->second) + "\n";
                }
            }
        }
    }
    return out;
}

/// Writes matrix.csv, summary.json, tool_accuracy.csv, buffer_audit.json and
/// log.jsonl under continual/<strategy>/ for every configured strategy.
inline std::map<std::string, MetricsReport> cmd_continual(const RunConfig& cfg, bool force, std::ostream& out) {
    const auto ex = load_experiment(cfg);
    const auto groups = resolve_groups(cfg.groups, ex.tools);
    write_run_header(cfg, ex, force);
    const auto base = continual_base(cfg, ex, force);
    const RunPaths paths{cfg.output_dir};
    std::map<std::string, MetricsReport> reports;
    for (const auto& name : cfg.strategies) {
        const StreamPlan plan{groups, Strategy::parse(name)};
        const auto result = run_continual(plan, ex.config, ex.data, ex.vocab, base);
        const auto report = metrics_report(result.matrix);
        const auto dir = paths.strategy_dir(plan.strategy.name());
        json summary{{"strategy", plan.strategy.name()},
                     {"groups", plan.groups},
                     {"AA", report.average_accuracy},
                     {"AA_final", report.aa_final}};
        json af = json::array();
        for (const auto& v : report.average_forgetting) af.push_back(v ? json(*v) : json(nullptr));
        summary["AF"] = af;
        summary["AF_final"] = report.af_final ? json(*report.af_final) : json(nullptr);
        json audit = json::array();
        for (const auto& a : result.buffer_audit) audit.push_back(a);

        write_output(dir / "matrix.csv", metrics_csv(result.matrix), force);
        write_output(dir / "summary.json", summary.dump(2) + "\n", force);
        write_output(dir / "tool_accuracy.csv", tool_accuracy_csv(result, plan), force);
        write_output(dir / "buffer_audit.json", audit.dump(2) + "\n", force);
        write_output(dir / "log.jsonl", jsonl(result.log), force);
        out << plan.strategy.name() << ": AA " << format_real(report.aa_final) << ", AF "
            << (report.af_final ? format_real(*report.af_final) : std::string(kUndefined)) << "\n";
        reports.emplace(plan.strategy.name(), report);
    }
    return reports;
}

// ---------------------------------------------------------------------------
// report

struct StrategyColumn {
    std::string name;
    std::optional<double> aa;
    std::optional<double> af;
    bool complete = false;
};

/// Reads continual/*/matrix.csv only; checkpoints are not needed.
inline std::vector<StrategyColumn> collect_report(const std::string& run_dir) {
    const fs::path root = fs::path(run_dir) / "continual";
    if (!fs::is_directory(root)) fail(ErrorKind::io, "no continual results under '" + run_dir + "'");
    std::vector<StrategyColumn> cols;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        StrategyColumn col;
        col.name = entry.path().filename().string();
        const auto csv = entry.path() / "matrix.csv";
        if (fs::exists(csv)) {
            try {
                const auto matrix = parse_metrics_csv(read_text(csv.string()));
                const auto r = metrics_report(matrix);
                col.aa = r.aa_final;
                col.af = r.af_final;
                col.complete = true;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::incomplete_matrix && e.kind() != ErrorKind::parse) throw;
            }
        }
        cols.push_back(std::move(col));
    }
    std::sort(cols.begin(), cols.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return cols;
}

inline std::string report_csv(const std::vector<StrategyColumn>& cols) {
    std::string out = "metric";
    for (const auto& c : cols) out += "," + c.name;
    out += "\n";
    auto row = [&](const char* label, std::optional<double> StrategyColumn::*field) {
        out += label;
        for (const auto& c : cols) out += "," + ((c.*field) ? format_real(*(c.*field)) : std::string(kUndefined));
        out += "\n";
    };
    row("AA", &StrategyColumn::aa);
    row("AF", &StrategyColumn::af);
    return out;
}

inline std::string report_table(const std::vector<StrategyColumn>& cols) {
    std::size_t width = 8;
    for (const auto& c : cols) width = std::max(width, c.name.size() + 2);
    std::ostringstream os;
    os << std::left << std::setw(8) << "metric";
    for (const auto& c : cols) os << std::right << std::setw(static_cast<int>(width)) << c.name;
    os << "\n";
    auto row = [&](const char* label, std::optional<double> StrategyColumn::*field) {
        os << std::left << std::setw(8) << label;
        for (const auto& c : cols) {
            std::ostringstream cell;
            if (c.*field) {
                cell.setf(std::ios::fixed);
                cell.precision(3);
                cell << *(c.*field);
            } else {
                cell << kUndefined;
            }
            os << std::right << std::setw(static_cast<int>(width)) << cell.str();
        }
        os << "\n";
    };
    row("AA (up)", &StrategyColumn::aa);
    row("AF (down)", &StrategyColumn::af);
    return os.str();
}

inline int cmd_report(const std::string& run_dir, bool force, std::ostream& out, std::ostream& err) {
    const auto cols = collect_report(run_dir);
    if (cols.empty()) fail(ErrorKind::io, "no strategy results under '" + run_dir + "/continual'");
    out << report_table(cols);
    write_output(fs::path(run_dir) / "report.csv", report_csv(cols), force);
    bool partial = false;
    for (const auto& c : cols) {
        if (!c.complete) {
            err << "warning: strategy '" << c.name << "' has no complete accuracy matrix; report is partial\n";
            partial = true;
        }
    }
    return partial ? kExitDomain : kExitOk;
}

}  // namespace colt
