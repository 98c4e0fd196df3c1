#pragma once

// Three-stage training with per-stage trainable masks, the continual tool
// stream (joint / sequential / rehearsal / colt), evaluation by greedy
// decoding of the action segment, and a versioned binary checkpoint.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "colt/codebook.hpp"
#include "colt/dataset.hpp"
#include "colt/error.hpp"
#include "colt/metrics.hpp"
#include "colt/model.hpp"
#include "colt/numerics.hpp"

namespace colt {

// ---------------------------------------------------------------------------
// Configuration

struct StageConfig {
    int stage = 1;
    double lr = 1e-3;
    std::size_t batch_size = 16;
    double epochs = 1.0;
    double lambda1 = 1.0;
    double lambda2 = 0.25;
    std::size_t warmup_steps = 0;
    double weight_decay = 0.0;
};

struct TrainConfig {
    ModelConfig model;
    VisualSpec visual;
    std::size_t codebook_size = 50;  // N
    std::size_t top_k = 3;           // K
    bool straight_through = true;
    bool round_one_only = false;
    double plain_ratio = 1.0;        // plain-instruction batches per tool batch in stages 2-3
    std::size_t plain_samples = 200;
    std::size_t eval_max_len = 6;
    std::array<StageConfig, 3> stages;
    std::uint64_t seed = 1;

    const StageConfig& stage(int s) const {
        if (s < 1 || s > 3) fail(ErrorKind::config, "stage must be 1, 2 or 3");
        return stages[static_cast<std::size_t>(s - 1)];
    }
};

/// Scaled-down defaults; the stage-to-stage lr and batch ratios match the "paper" preset.
inline TrainConfig desk_preset() {
    TrainConfig c;
    c.model.width = 16;
    c.model.visual_dim = 32;
    c.model.patches = 4;
    c.model.hidden = 32;
    c.stages = {StageConfig{1, 1e-1, 32, 2.0, 1.0, 0.25, 0, 0.0}, StageConfig{2, 1e-1, 16, 5.0, 1.0, 0.25, 0, 0.0},
                StageConfig{3, 1e-2, 16, 5.0, 1.0, 0.25, 0, 0.0}};
    return c;
}

/// Hyperparameters as published: N=50, K=3, lambda=(1, 0.25), lr 1e-4/1e-4/1e-5, batch 256/128/128.
inline TrainConfig paper_preset() {
    TrainConfig c = desk_preset();
    c.codebook_size = 50;
    c.top_k = 3;
    c.stages = {StageConfig{1, 1e-4, 256, 1.0, 1.0, 0.25, 0, 0.0}, StageConfig{2, 1e-4, 128, 1.0, 1.0, 0.25, 0, 0.0},
                StageConfig{3, 1e-5, 128, 1.0, 1.0, 0.25, 0, 0.0}};
    return c;
}

inline TrainConfig preset(const std::string& name) {
    if (name == "desk") return desk_preset();
    if (name == "paper") return paper_preset();
    fail(ErrorKind::config, "unknown preset '" + name + "' (expected desk or paper)");
}

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) fail(ErrorKind::config, "unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::config, "bad value for '" + std::string(key) + "' in " + where);
    }
}

}  // namespace detail

inline json stage_to_json(const StageConfig& s) {
    return {{"stage", s.stage},       {"lr", s.lr},           {"batch_size", s.batch_size},
            {"epochs", s.epochs},     {"lambda1", s.lambda1}, {"lambda2", s.lambda2},
            {"warmup_steps", s.warmup_steps}, {"weight_decay", s.weight_decay}};
}

inline StageConfig stage_from_json(const json& j, StageConfig base) {
    const std::string where = "stage config";
    detail::reject_unknown(j, {"stage", "lr", "batch_size", "epochs", "lambda1", "lambda2", "warmup_steps", "weight_decay"},
                           where);
    detail::read_key(j, "stage", base.stage, where);
    detail::read_key(j, "lr", base.lr, where);
    detail::read_key(j, "batch_size", base.batch_size, where);
    detail::read_key(j, "epochs", base.epochs, where);
    detail::read_key(j, "lambda1", base.lambda1, where);
    detail::read_key(j, "lambda2", base.lambda2, where);
    detail::read_key(j, "warmup_steps", base.warmup_steps, where);
    detail::read_key(j, "weight_decay", base.weight_decay, where);
    if (base.lambda1 < 0 || base.lambda2 < 0) fail(ErrorKind::config, "lambda weights must be >= 0");
    if (base.batch_size == 0) fail(ErrorKind::config, "batch_size must be >= 1");
    if (!(base.lr > 0) || !(base.epochs > 0)) fail(ErrorKind::config, "lr and epochs must be > 0");
    return base;
}

inline json train_config_to_json(const TrainConfig& c) {
    json stages = json::array();
    for (const auto& s : c.stages) stages.push_back(stage_to_json(s));
    return {{"model",
             {{"vocab_size", c.model.vocab_size},
              {"width", c.model.width},
              {"visual_dim", c.model.visual_dim},
              {"patches", c.model.patches},
              {"hidden", c.model.hidden},
              {"position_policy", std::string(to_string(c.model.policy))}}},
            {"visual_noise", c.visual.noise},
            {"codebook_size", c.codebook_size},
            {"top_k", c.top_k},
            {"straight_through", c.straight_through},
            {"round_one_only", c.round_one_only},
            {"plain_ratio", c.plain_ratio},
            {"plain_samples", c.plain_samples},
            {"eval_max_len", c.eval_max_len},
            {"stages", stages},
            {"seed", c.seed}};
}

/// Overlays `j` on `base`; unknown keys are a config error.
inline TrainConfig train_config_from_json(const json& j, TrainConfig base) {
    const std::string where = "train config";
    detail::reject_unknown(j,
                           {"model", "visual_noise", "codebook_size", "top_k", "straight_through", "round_one_only",
                            "plain_ratio", "plain_samples", "eval_max_len", "stages", "seed"},
                           where);
    if (j.contains("model")) {
        const auto& m = j["model"];
        detail::reject_unknown(m, {"vocab_size", "width", "visual_dim", "patches", "hidden", "position_policy"}, "model");
        detail::read_key(m, "vocab_size", base.model.vocab_size, "model");
        detail::read_key(m, "width", base.model.width, "model");
        detail::read_key(m, "visual_dim", base.model.visual_dim, "model");
        detail::read_key(m, "patches", base.model.patches, "model");
        detail::read_key(m, "hidden", base.model.hidden, "model");
        if (m.contains("position_policy")) {
            if (!m["position_policy"].is_string()) fail(ErrorKind::config, "position_policy must be a string");
            base.model.policy = parse_position_policy(m["position_policy"].get<std::string>());
        }
    }
    detail::read_key(j, "visual_noise", base.visual.noise, where);
    detail::read_key(j, "codebook_size", base.codebook_size, where);
    detail::read_key(j, "top_k", base.top_k, where);
    detail::read_key(j, "straight_through", base.straight_through, where);
    detail::read_key(j, "round_one_only", base.round_one_only, where);
    detail::read_key(j, "plain_ratio", base.plain_ratio, where);
    detail::read_key(j, "plain_samples", base.plain_samples, where);
    detail::read_key(j, "eval_max_len", base.eval_max_len, where);
    detail::read_key(j, "seed", base.seed, where);
    if (j.contains("stages")) {
        const auto& arr = j["stages"];
        if (!arr.is_array() || arr.size() != 3) fail(ErrorKind::config, "'stages' must list exactly 3 stage configs");
        for (std::size_t i = 0; i < 3; ++i) base.stages[i] = stage_from_json(arr[i], base.stages[i]);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (base.stages[i].stage != static_cast<int>(i + 1)) fail(ErrorKind::config, "stages must be listed in order 1, 2, 3");
    }
    if (base.top_k == 0 || base.top_k > base.codebook_size) fail(ErrorKind::config, "need 1 <= top_k <= codebook_size");
    if (base.plain_ratio < 0) fail(ErrorKind::config, "plain_ratio must be >= 0");
    base.visual.patches = base.model.patches;
    base.visual.dim = base.model.visual_dim;
    return base;
}

inline std::uint64_t config_hash(const TrainConfig& c) { return hash_mix(0, train_config_to_json(c).dump()); }

// ---------------------------------------------------------------------------
// Parameter groups and stage masks

enum class ParamGroup { projector, codebook, query_encoder, decoder };

inline constexpr std::array<ParamGroup, 4> kAllGroups{ParamGroup::projector, ParamGroup::codebook,
                                                      ParamGroup::query_encoder, ParamGroup::decoder};

inline std::string_view to_string(ParamGroup g) {
    switch (g) {
    case ParamGroup::projector: return "projector";
    case ParamGroup::codebook: return "codebook";
    case ParamGroup::query_encoder: return "query_encoder";
    case ParamGroup::decoder: return "decoder";
    }
    return "?";
}

inline ParamGroup group_of(std::string_view param_name) {
    if (param_name.rfind("projector.", 0) == 0) return ParamGroup::projector;
    if (param_name.rfind("query.", 0) == 0) return ParamGroup::query_encoder;
    if (param_name.rfind("codebook", 0) == 0) return ParamGroup::codebook;
    return ParamGroup::decoder;
}

/// Stage 1 aligns the projector; stage 2 learns the codebook and query
/// encoder; stage 3 tunes everything except the (fixed) visual features.
inline std::set<ParamGroup> trainable_mask(int stage) {
    switch (stage) {
    case 1: return {ParamGroup::projector};
    case 2: return {ParamGroup::codebook, ParamGroup::query_encoder};
    case 3: return {ParamGroup::projector, ParamGroup::codebook, ParamGroup::query_encoder, ParamGroup::decoder};
    default: fail(ErrorKind::config, "stage must be 1, 2 or 3");
    }
}

struct TrainerState {
    ModelState model;
    ToolCodebook codebook;
    Rng rng;
    std::uint64_t global_step = 0;
    int active_stage = 0;          // stage of an interrupted run, 0 when none
    std::uint64_t stage_step = 0;  // next step of that run
};

template <class State, class F>
void for_each_named_param(State& s, F&& f) {
    for_each_param(s.model, f);
    f("codebook.prompts", s.codebook.prompts);
}

inline TrainerState init_trainer(const TrainConfig& cfg) {
    if (cfg.model.vocab_size < 2) fail(ErrorKind::config, "vocab_size not set");
    TrainerState s;
    s.model = init_model(cfg.model, hash_mix(cfg.seed, "model"));
    s.codebook = init_codebook(cfg.codebook_size, cfg.model.width, hash_mix(cfg.seed, "codebook"));
    s.rng = Rng(hash_mix(cfg.seed, "batches"));
    return s;
}

inline void apply_mask(TrainerState& s, const std::set<ParamGroup>& mask) {
    for_each_named_param(s, [&](const char* name, Param& p) { p.trainable = mask.count(group_of(name)) != 0; });
}

/// FNV-1a over the raw bytes of every value tensor in a group.
inline std::uint64_t group_checksum(const TrainerState& s, ParamGroup g) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for_each_named_param(s, [&](const char* name, const Param& p) {
        if (group_of(name) != g) return;
        for (double x : p.value.flat()) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &x, sizeof bytes);
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    });
    return h;
}

// ---------------------------------------------------------------------------
// Instances from conversations

/// Decoder target: the action segment and value of each gpt turn, rounds
/// separated by <sep>, ending in <eos>. Thoughts are not generated.
inline std::vector<std::size_t> target_ids(const Conversation& conv, const Vocab& vocab, bool round_one_only,
                                           bool strict) {
    std::vector<std::size_t> ids;
    bool first = true;
    for (std::size_t i = 1; i < conv.turns.size(); i += 2) {
        if (round_one_only && i > 1) break;
        const auto& t = conv.turns[i];
        if (!first) ids.push_back(vocab.id(tokens::sep));
        first = false;
        ids.push_back(vocab.id(tokens::actions_open));
        if (t.actions) {
            for (const auto& a : *t.actions) {
                if (vocab.contains(a.api_name)) {
                    ids.push_back(vocab.id(a.api_name));
                } else if (strict) {
                    fail(ErrorKind::schema, "tool '" + a.api_name + "' not in vocabulary");
                } else {
                    ids.push_back(vocab.unk());
                }
            }
        }
        ids.push_back(vocab.id(tokens::actions_close));
        if (t.value) {
            for (auto id : vocab.encode(*t.value, strict)) ids.push_back(id);
        }
    }
    ids.push_back(vocab.eos());
    return ids;
}

inline std::string instruction_text(const Conversation& conv) {
    if (conv.turns.empty() || !conv.turns[0].value) fail(ErrorKind::schema, "conversation lacks a first human turn");
    return *conv.turns[0].value;
}

/// Tool names first (so they are single tokens), then every word of the
/// instructions and gpt values.
inline Vocab build_vocab(const ToolRegistry& registry, const std::vector<const std::vector<Conversation>*>& corpora) {
    std::vector<std::string> texts;
    for (const auto* corpus : corpora) {
        for (const auto& conv : *corpus) {
            for (const auto& t : conv.turns) {
                if (t.value) texts.push_back(*t.value);
            }
        }
    }
    return Vocab::build(registry.names(), texts);
}

inline Instance make_instance(const Conversation& conv, const Vocab& vocab, const TrainConfig& cfg, bool strict) {
    Instance x;
    x.instruction = vocab.encode(instruction_text(conv), strict);
    if (x.instruction.empty()) x.instruction.push_back(vocab.unk());
    x.target = target_ids(conv, vocab, cfg.round_one_only, strict);
    for (const auto& a : conv.round_one_actions()) x.tool_labels.push_back(a.api_name);
    x.tool = conv.extra_string("tool");
    if (x.tool == "none") x.tool.clear();
    std::string cluster = conv.extra_string("cluster");
    if (cluster.empty()) cluster = x.tool.empty() ? "plain" : x.tool;
    std::string id = conv.extra_string("id");
    if (id.empty()) id = serialize_conversation(conv);
    x.visual_raw = synthetic_visual_features(cfg.seed, cluster, id, cfg.visual);
    return x;
}

inline std::vector<Instance> make_instances(const std::vector<Conversation>& corpus, const Vocab& vocab,
                                            const TrainConfig& cfg, bool strict) {
    std::vector<Instance> out;
    out.reserve(corpus.size());
    for (const auto& c : corpus) out.push_back(make_instance(c, vocab, cfg, strict));
    return out;
}

// ---------------------------------------------------------------------------
// Stage runs

struct LogEntry {
    std::uint64_t step = 0;  // global step
    int stage = 0;
    double total = 0.0;
    double lm = 0.0;
    double quantization = 0.0;
    double commitment = 0.0;
    double lr = 0.0;
    bool plain = false;  // batch drawn from plain instructions

    json to_json() const {
        return {{"step", step}, {"stage", stage}, {"total", total}, {"lm", lm}, {"quantization", quantization},
                {"commitment", commitment}, {"lr", lr}, {"plain", plain}};
    }
    friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

inline PipelineOptions pipeline_options(const TrainConfig& cfg, const StageConfig& stage, bool use_codebook) {
    PipelineOptions opt;
    opt.use_codebook = use_codebook;
    opt.top_k = cfg.top_k;
    opt.lambda1 = stage.lambda1;
    opt.lambda2 = stage.lambda2;
    opt.straight_through = cfg.straight_through;
    return opt;
}

struct StagePlan {
    std::size_t tool_steps = 0;
    std::size_t plain_steps = 0;
    std::size_t total() const { return tool_steps + plain_steps; }
    /// Plain batches are spread evenly among tool batches.
    bool is_plain(std::size_t s) const {
        if (plain_steps == 0) return false;
        return (s + 1) * plain_steps / total() > s * plain_steps / total();
    }
};

inline StagePlan plan_stage(const StageConfig& stage, std::size_t n_data, std::size_t n_plain, double plain_ratio) {
    StagePlan p;
    p.tool_steps = static_cast<std::size_t>(
        std::ceil(stage.epochs * static_cast<double>(n_data) / static_cast<double>(stage.batch_size)));
    p.tool_steps = std::max<std::size_t>(p.tool_steps, 1);
    if (n_plain > 0) p.plain_steps = static_cast<std::size_t>(std::llround(plain_ratio * static_cast<double>(p.tool_steps)));
    return p;
}

/// Runs (or resumes) one stage. With `stop_after`, returns after that many
/// steps of this call, leaving the state resumable.
inline std::vector<LogEntry> run_stage(TrainerState& s, const TrainConfig& cfg, const StageConfig& stage,
                                       const std::vector<Instance>& data, const std::vector<Instance>& plain,
                                       bool use_codebook, std::optional<std::size_t> stop_after = std::nullopt) {
    if (data.empty()) fail(ErrorKind::domain, "run_stage: no training data");
    const auto plan = plan_stage(stage, data.size(), plain.size(), cfg.plain_ratio);
    if (s.active_stage != stage.stage || s.stage_step == 0) {
        for_each_named_param(s, [](const char*, Param& p) { p.reset_optimizer(); });
        s.active_stage = stage.stage;
        s.stage_step = 0;
    }
    apply_mask(s, trainable_mask(stage.stage));
    const auto opt = pipeline_options(cfg, stage, use_codebook);
    const LrSchedule schedule{stage.lr, plan.total(), stage.warmup_steps};
    const AdamWConfig adam{0.9, 0.999, 1e-8, stage.weight_decay};
    const double inv_b = 1.0 / static_cast<double>(stage.batch_size);

    std::vector<LogEntry> log;
    std::size_t done = 0;
    while (s.stage_step < plan.total()) {
        if (stop_after && done == *stop_after) return log;
        const std::size_t step = s.stage_step;
        const bool from_plain = plan.is_plain(step);
        const auto& source = from_plain ? plain : data;
        for_each_named_param(s, [](const char*, Param& p) { p.zero_grad(); });

        LogEntry e;
        e.stage = stage.stage;
        e.plain = from_plain;
        for (std::size_t b = 0; b < stage.batch_size; ++b) {
            const auto& x = source[s.rng.index(source.size())];
            const auto l = pipeline_loss(s.model, s.codebook, x, opt, &s.model, &s.codebook, inv_b);
            e.total += l.total * inv_b;
            e.lm += l.lm * inv_b;
            e.quantization += l.quantization * inv_b;
            e.commitment += l.commitment * inv_b;
        }
        if (!std::isfinite(e.total)) {
            fail(ErrorKind::diverged, "stage " + std::to_string(stage.stage) + " loss not finite at step " +
                                          std::to_string(step));
        }
        e.lr = cosine_decay_lr(schedule, step);
        try {
            for_each_named_param(s, [&](const char*, Param& p) { adamw_step(p, e.lr, adam); });
        } catch (const Error& err) {
            fail(err.kind(), "stage " + std::to_string(stage.stage) + " step " + std::to_string(step) + ": " + err.what());
        }
        e.step = s.global_step++;
        ++s.stage_step;
        ++done;
        log.push_back(e);
    }
    s.active_stage = 0;
    s.stage_step = 0;
    return log;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Tool calls named between the first <actions> and the following </actions>.
/// Any other token inside the segment counts as a (wrong) call.
inline std::vector<ToolCall> decode_actions(const std::vector<std::size_t>& ids, const Vocab& vocab) {
    std::vector<ToolCall> calls;
    const std::size_t open = vocab.id(tokens::actions_open);
    const std::size_t close = vocab.id(tokens::actions_close);
    auto it = std::find(ids.begin(), ids.end(), open);
    if (it == ids.end()) {
        calls.push_back(ToolCall{"<malformed>", {}});
        return calls;
    }
    for (++it; it != ids.end() && *it != close; ++it) calls.push_back(ToolCall{vocab.token(*it), {}});
    return calls;
}

inline std::vector<ToolCall> predict_actions(const TrainerState& s, const TrainConfig& cfg, const Instance& x,
                                             const Vocab& vocab, bool use_codebook) {
    const auto opt = pipeline_options(cfg, cfg.stage(3), use_codebook);
    const auto cond = build_conditioning(s.model, s.codebook, x, opt);
    return decode_actions(generate(s.model, cond.rows, cfg.eval_max_len), vocab);
}

inline double evaluate(const TrainerState& s, const TrainConfig& cfg, const std::vector<Instance>& test,
                       const Vocab& vocab, bool use_codebook, ScoreMode mode = ScoreMode::name_only) {
    std::vector<std::vector<ToolCall>> pred, ref;
    for (const auto& x : test) {
        pred.push_back(predict_actions(s, cfg, x, vocab, use_codebook));
        std::vector<ToolCall> r;
        for (const auto& name : x.tool_labels) r.push_back(ToolCall{name, {}});
        ref.push_back(std::move(r));
    }
    return tool_call_accuracy(pred, ref, mode);
}

// ---------------------------------------------------------------------------
// Continual stream

enum class StrategyKind { joint, sequential, rehearsal, colt };

struct Strategy {
    StrategyKind kind = StrategyKind::colt;
    std::size_t buffer_per_tool = 0;

    std::string name() const {
        switch (kind) {
        case StrategyKind::joint: return "joint";
        case StrategyKind::sequential: return "sequential";
        case StrategyKind::rehearsal: return "rehearsal:" + std::to_string(buffer_per_tool);
        case StrategyKind::colt: return "colt";
        }
        return "?";
    }
    bool uses_codebook() const { return kind == StrategyKind::colt || kind == StrategyKind::joint; }

    static Strategy parse(const std::string& s) {
        if (s == "joint") return {StrategyKind::joint, 0};
        if (s == "sequential") return {StrategyKind::sequential, 0};
        if (s == "colt") return {StrategyKind::colt, 0};
        if (s.rfind("rehearsal:", 0) == 0) {
            const std::string n = s.substr(10);
            if (n.empty() || n.find_first_not_of("0123456789") != std::string::npos) {
                fail(ErrorKind::config, "bad rehearsal buffer size in '" + s + "'");
            }
            const auto size = std::stoull(n);
            if (size == 0) fail(ErrorKind::config, "rehearsal buffer must be >= 1");
            return {StrategyKind::rehearsal, static_cast<std::size_t>(size)};
        }
        fail(ErrorKind::config, "unknown strategy '" + s + "' (joint, sequential, rehearsal:<n>, colt)");
    }
};

struct StreamPlan {
    std::vector<std::vector<std::string>> groups;
    Strategy strategy;
};

/// "AxB": A consecutive groups of B tools each, taken in the given order.
inline std::vector<std::vector<std::string>> make_groups(const std::vector<std::string>& tools, const std::string& layout) {
    const auto x = layout.find('x');
    std::size_t a = 0, b = 0;
    try {
        if (x == std::string::npos) throw std::invalid_argument(layout);
        std::size_t used = 0;
        a = std::stoull(layout.substr(0, x), &used);
        if (used != x) throw std::invalid_argument(layout);
        b = std::stoull(layout.substr(x + 1), &used);
        if (used != layout.size() - x - 1) throw std::invalid_argument(layout);
    } catch (const std::logic_error&) {
        fail(ErrorKind::config, "group layout must look like 5x2, got '" + layout + "'");
    }
    if (a == 0 || b == 0 || a * b != tools.size()) {
        fail(ErrorKind::config, "layout " + layout + " does not cover " + std::to_string(tools.size()) + " tools");
    }
    std::vector<std::vector<std::string>> groups(a);
    for (std::size_t i = 0; i < tools.size(); ++i) groups[i / b].push_back(tools[i]);
    return groups;
}

struct ContinualData {
    std::map<std::string, std::vector<Instance>> train;
    std::map<std::string, std::vector<Instance>> test;
    std::vector<Instance> plain;
};

/// Uniform reservoir sample (Algorithm R) of at most `capacity` items, seeded per tool.
inline std::vector<std::size_t> reservoir_sample(std::size_t n, std::size_t capacity, std::uint64_t seed) {
    std::vector<std::size_t> kept;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        if (kept.size() < capacity) {
            kept.push_back(i);
        } else {
            const std::size_t r = rng.index(i + 1);
            if (r < capacity) kept[r] = i;
        }
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

struct ContinualResult {
    std::string strategy;
    AccuracyMatrix matrix;
    std::vector<std::map<std::string, double>> tool_accuracy;       // after each group
    std::vector<std::map<std::string, std::size_t>> buffer_audit;   // replayed samples per past tool, per group
    std::vector<LogEntry> log;
};

inline void check_plan(const StreamPlan& plan, const ContinualData& data) {
    if (plan.groups.empty()) fail(ErrorKind::config, "stream plan has no groups");
    std::set<std::string> seen;
    for (const auto& g : plan.groups) {
        if (g.empty()) fail(ErrorKind::config, "stream plan has an empty group");
        for (const auto& t : g) {
            if (!seen.insert(t).second) fail(ErrorKind::config, "tool '" + t + "' appears in two groups");
            if (!data.train.count(t) || data.train.at(t).empty()) fail(ErrorKind::config, "no training data for '" + t + "'");
            if (!data.test.count(t) || data.test.at(t).empty()) fail(ErrorKind::config, "no test data for '" + t + "'");
        }
    }
}

/// Training set for group k under rehearsal: the group's data followed by the
/// reservoir of every earlier tool, in plan order.
inline std::vector<Instance> rehearsal_training_set(const StreamPlan& plan, const ContinualData& data, std::size_t k,
                                                    std::uint64_t seed,
                                                    std::map<std::string, std::size_t>* audit = nullptr) {
    std::vector<Instance> out;
    for (const auto& t : plan.groups[k]) {
        const auto& d = data.train.at(t);
        out.insert(out.end(), d.begin(), d.end());
    }
    for (std::size_t g = 0; g < k; ++g) {
        for (const auto& t : plan.groups[g]) {
            const auto& d = data.train.at(t);
            const auto kept = reservoir_sample(d.size(), plan.strategy.buffer_per_tool, hash_mix(seed, "reservoir:" + t));
            for (auto i : kept) out.push_back(d[i]);
            if (audit) (*audit)[t] = kept.size();
        }
    }
    return out;
}

/// Runs the stream from `base` (the model after stage 1) and fills a(k, j)
/// with the accuracy on group j's test instances after training group k.
inline ContinualResult run_continual(const StreamPlan& plan, const TrainConfig& cfg, const ContinualData& data,
                                     const Vocab& vocab, TrainerState base) {
    check_plan(plan, data);
    const std::size_t t_final = plan.groups.size();
    ContinualResult result;
    result.strategy = plan.strategy.name();
    result.matrix = AccuracyMatrix(t_final);
    TrainerState s = std::move(base);
    const bool codebook = plan.strategy.uses_codebook();

    auto group_test = [&](std::size_t j) {
        std::vector<Instance> out;
        for (const auto& t : plan.groups[j]) {
            const auto& d = data.test.at(t);
            out.insert(out.end(), d.begin(), d.end());
        }
        return out;
    };
    auto train_on = [&](const std::vector<Instance>& set) {
        if (codebook) {
            auto l2 = run_stage(s, cfg, cfg.stage(2), set, data.plain, true);
            result.log.insert(result.log.end(), l2.begin(), l2.end());
        }
        auto l3 = run_stage(s, cfg, cfg.stage(3), set, data.plain, codebook);
        result.log.insert(result.log.end(), l3.begin(), l3.end());
    };
    auto record = [&](std::size_t k) {
        std::map<std::string, double> per_tool;
        for (std::size_t j = 0; j <= k; ++j) {
            for (const auto& t : plan.groups[j]) per_tool[t] = evaluate(s, cfg, data.test.at(t), vocab, codebook);
            result.matrix.set(k + 1, j + 1, evaluate(s, cfg, group_test(j), vocab, codebook));
        }
        result.tool_accuracy.push_back(std::move(per_tool));
    };

    if (plan.strategy.kind == StrategyKind::joint) {
        // One run over everything, in tool-name order so grouping cannot matter.
        std::vector<Instance> all;
        for (const auto& [tool, d] : data.train) {
            bool in_plan = false;
            for (const auto& g : plan.groups) in_plan = in_plan || std::find(g.begin(), g.end(), tool) != g.end();
            if (in_plan) all.insert(all.end(), d.begin(), d.end());
        }
        train_on(all);
        for (std::size_t k = 0; k < t_final; ++k) {
            result.buffer_audit.emplace_back();
            record(k);
        }
        return result;
    }

    for (std::size_t k = 0; k < t_final; ++k) {
        std::map<std::string, std::size_t> audit;
        std::vector<Instance> set;
        if (plan.strategy.kind == StrategyKind::rehearsal) {
            set = rehearsal_training_set(plan, data, k, cfg.seed, &audit);
        } else {
            for (const auto& t : plan.groups[k]) {
                const auto& d = data.train.at(t);
                set.insert(set.end(), d.begin(), d.end());
            }
        }
        result.buffer_audit.push_back(std::move(audit));
        train_on(set);
        record(k);
    }
    return result;
}

/// Corpus-to-tensors plumbing shared by the CLI and the experiment drivers.
struct Experiment {
    TrainConfig config;  // model.vocab_size filled in
    Vocab vocab;
    ContinualData data;
    std::vector<std::string> tools;  // in corpus order
};

/// Builds the vocabulary from the training split plus the plain corpus and
/// encodes everything. Test instances map unseen words to <unk>.
inline Experiment prepare_experiment(const ToolRegistry& registry, const Split& split,
                                     const std::vector<Conversation>& plain_corpus, TrainConfig cfg) {
    if (plain_corpus.empty()) fail(ErrorKind::config, "stage 1 needs a non-empty plain-instruction corpus");
    if (split.train.empty() || split.test.empty()) fail(ErrorKind::config, "empty train or test split");
    Experiment ex;
    ex.vocab = build_vocab(registry, {&split.train, &plain_corpus});
    cfg.model.vocab_size = ex.vocab.size();
    cfg.visual.patches = cfg.model.patches;
    cfg.visual.dim = cfg.model.visual_dim;
    ex.config = cfg;
    for (const auto& conv : split.train) {
        auto x = make_instance(conv, ex.vocab, cfg, true);
        if (std::find(ex.tools.begin(), ex.tools.end(), x.tool) == ex.tools.end()) ex.tools.push_back(x.tool);
        ex.data.train[x.tool].push_back(std::move(x));
    }
    for (const auto& conv : split.test) {
        auto x = make_instance(conv, ex.vocab, cfg, false);
        ex.data.test[x.tool].push_back(std::move(x));
    }
    ex.data.plain = make_instances(plain_corpus, ex.vocab, cfg, true);
    return ex;
}

inline Experiment prepare_experiment(const ToolRegistry& registry, const std::vector<Conversation>& tool_corpus,
                                     const std::vector<Conversation>& plain_corpus, const TrainConfig& cfg) {
    return prepare_experiment(registry, split_train_test(tool_corpus, cfg.seed), plain_corpus, cfg);
}

/// Stage 1 on plain instructions only (projector alignment, no codebook).
inline std::vector<LogEntry> run_stage_one(TrainerState& s, const Experiment& ex,
                                           std::optional<std::size_t> stop_after = std::nullopt) {
    return run_stage(s, ex.config, ex.config.stage(1), ex.data.plain, {}, false, stop_after);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian):
//   "COLTCKPT" | u32 version | u64 config hash | u64 payload bytes | u64 FNV-1a of payload | payload
// Payload: u32 tensor count, then per tensor {name, rows, cols, value, m, v, step, trainable},
// then the RNG state string and the step counters.

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'L', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
public:
    template <class T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof v);
    }
    void put_string(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        buf_ += s;
    }
    void put_tensor(const Tensor2& t) {
        for (double x : t.flat()) put(x);
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    Tensor2 get_tensor(std::size_t rows, std::size_t cols) {
        if (cols != 0 && rows > (data_.size() - pos_) / sizeof(double) / cols) fail(ErrorKind::integrity, "tensor larger than file");
        Tensor2 t(rows, cols);
        for (double& x : t.flat()) x = get<double>();
        return t;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) fail(ErrorKind::integrity, "checkpoint truncated");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

inline std::string checkpoint_bytes(const TrainerState& s, std::uint64_t cfg_hash) {
    detail::ByteWriter payload;
    std::uint32_t count = 0;
    for_each_named_param(s, [&](const char*, const Param&) { ++count; });
    payload.put(count);
    for_each_named_param(s, [&](const char* name, const Param& p) {
        payload.put_string(name);
        payload.put<std::uint64_t>(p.value.rows());
        payload.put<std::uint64_t>(p.value.cols());
        payload.put_tensor(p.value);
        payload.put_tensor(p.first_moment);
        payload.put_tensor(p.second_moment);
        payload.put<std::uint64_t>(p.step);
        payload.put<std::uint8_t>(p.trainable ? 1 : 0);
    });
    payload.put_string(s.rng.state());
    payload.put<std::uint64_t>(s.global_step);
    payload.put<std::int32_t>(s.active_stage);
    payload.put<std::uint64_t>(s.stage_step);

    detail::ByteWriter out;
    for (char c : kCheckpointMagic) out.put(c);
    out.put(kCheckpointVersion);
    out.put(cfg_hash);
    out.put<std::uint64_t>(payload.bytes().size());
    out.put(detail::fnv1a(payload.bytes()));
    return out.bytes() + payload.bytes();
}

/// Decodes into a fresh state built from `cfg`; nothing is returned unless
/// every check passes.
inline TrainerState checkpoint_from_bytes(std::string_view bytes, const TrainConfig& cfg) {
    detail::ByteReader head(bytes);
    char magic[8];
    for (char& c : magic) c = head.get<char>();
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0) fail(ErrorKind::integrity, "not a checkpoint (bad magic)");
    const auto version = head.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        fail(ErrorKind::incompatible_checkpoint, "checkpoint version " + std::to_string(version) + ", expected " +
                                                     std::to_string(kCheckpointVersion));
    }
    const auto hash = head.get<std::uint64_t>();
    const auto size = head.get<std::uint64_t>();
    const auto checksum = head.get<std::uint64_t>();
    constexpr std::size_t header = 8 + 4 + 8 + 8 + 8;
    if (bytes.size() - header != size) fail(ErrorKind::integrity, "checkpoint truncated or padded");
    const auto payload = bytes.substr(header);
    if (detail::fnv1a(payload) != checksum) fail(ErrorKind::integrity, "checkpoint checksum mismatch");
    if (hash != config_hash(cfg)) fail(ErrorKind::incompatible_checkpoint, "checkpoint was written under a different config");

    TrainerState s = init_trainer(cfg);
    detail::ByteReader in(payload);
    const auto count = in.get<std::uint32_t>();
    std::map<std::string, Param*> slots;
    for_each_named_param(s, [&](const char* name, Param& p) { slots[name] = &p; });
    if (count != slots.size()) fail(ErrorKind::incompatible_checkpoint, "checkpoint tensor count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name = in.get_string();
        const auto rows = in.get<std::uint64_t>();
        const auto cols = in.get<std::uint64_t>();
        auto it = slots.find(name);
        if (it == slots.end()) fail(ErrorKind::incompatible_checkpoint, "unexpected tensor '" + name + "'");
        Param& p = *it->second;
        if (p.value.rows() != rows || p.value.cols() != cols) {
            fail(ErrorKind::incompatible_checkpoint, "shape mismatch for '" + name + "'");
        }
        p.value = in.get_tensor(rows, cols);
        p.first_moment = in.get_tensor(rows, cols);
        p.second_moment = in.get_tensor(rows, cols);
        p.grad = Tensor2(rows, cols);
        p.step = in.get<std::uint64_t>();
        p.trainable = in.get<std::uint8_t>() != 0;
    }
    s.rng.restore(in.get_string());
    s.global_step = in.get<std::uint64_t>();
    s.active_stage = in.get<std::int32_t>();
    s.stage_step = in.get<std::uint64_t>();
    if (!in.at_end()) fail(ErrorKind::integrity, "trailing bytes in checkpoint");
    return s;
}

inline void save_checkpoint(const std::string& path, const TrainerState& s, const TrainConfig& cfg) {
    const auto bytes = checkpoint_bytes(s, config_hash(cfg));
    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write checkpoint '" + path + "'");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline TrainerState load_checkpoint(const std::string& path, const TrainConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read checkpoint '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes, cfg);
}

}  // namespace colt
