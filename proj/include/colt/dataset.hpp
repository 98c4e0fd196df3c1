#pragma once

// Tool-use instruction data: two-round human/gpt conversations whose gpt
// turns carry thoughts, actions (tool calls) and a value. One JSON object per
// line; keys are emitted in sorted order so serialization is canonical.

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "colt/error.hpp"
#include "colt/numerics.hpp"

namespace colt {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Tool registry

struct ToolSpec {
    std::string name;
    std::string display;
    std::string specialist;
    std::map<std::string, std::string> param_schema;  // param name -> kind
    std::vector<std::string> composite_of;

    bool is_composite() const noexcept { return !composite_of.empty(); }
};

class ToolRegistry {
public:
    ToolRegistry() = default;
    explicit ToolRegistry(std::vector<ToolSpec> tools) : tools_(std::move(tools)) { check(); }

    const std::vector<ToolSpec>& tools() const noexcept { return tools_; }
    std::size_t size() const noexcept { return tools_.size(); }
    bool empty() const noexcept { return tools_.empty(); }

    bool contains(std::string_view name) const {
        return std::any_of(tools_.begin(), tools_.end(), [&](const ToolSpec& t) { return t.name == name; });
    }

    const ToolSpec& get(std::string_view name) const {
        for (const auto& t : tools_) {
            if (t.name == name) return t;
        }
        fail(ErrorKind::config, "unknown tool '" + std::string(name) + "'");
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& t : tools_) out.push_back(t.name);
        return out;
    }

    /// Keeps only `names`, in the given order.
    ToolRegistry subset(const std::vector<std::string>& names) const {
        std::vector<ToolSpec> picked;
        for (const auto& n : names) picked.push_back(get(n));
        for (const auto& t : picked) {
            for (const auto& member : t.composite_of) {
                if (std::none_of(picked.begin(), picked.end(), [&](const ToolSpec& p) { return p.name == member; })) {
                    picked.push_back(get(member));  // members stay resolvable for validation
                }
            }
        }
        ToolRegistry out;
        out.tools_ = std::move(picked);
        return out;
    }

private:
    void check() const {
        std::set<std::string> seen;
        for (const auto& t : tools_) {
            if (t.name.empty()) fail(ErrorKind::config, "tool with empty name");
            if (!seen.insert(t.name).second) fail(ErrorKind::config, "duplicate tool '" + t.name + "'");
        }
        for (const auto& t : tools_) {
            for (const auto& m : t.composite_of) {
                if (!seen.count(m)) fail(ErrorKind::config, "composite '" + t.name + "' references unknown '" + m + "'");
                if (get(m).is_composite()) fail(ErrorKind::config, "composite '" + t.name + "' nests a composite");
            }
        }
    }

    std::vector<ToolSpec> tools_;
};

/// The ten-entry repository: eight single tools and two compositions.
inline ToolRegistry default_registry() {
    return ToolRegistry({
        {"action-recognition", "action recognition", "VideoMAE", {}, {}},
        {"dense-video-caption", "dense video caption", "PDVC", {}, {}},
        {"temporal-action-localization", "temporal action localization", "InternVideo", {}, {}},
        {"ocr", "optical character recognition", "EasyOCR", {{"language", "string"}}, {}},
        {"asr", "automatic speech recognition", "Whisper", {{"language", "string"}}, {}},
        {"video-relation-detection", "video relation detection", "VidVRD", {}, {}},
        {"video-object-segmentation", "video object segmentation", "VisTR", {}, {}},
        {"text-to-video", "text to video generation", "Text2Video-Zero", {{"prompt", "string"}}, {}},
        {"action-recognition+asr", "action recognition and speech recognition", "VideoMAE + Whisper", {},
         {"action-recognition", "asr"}},
        {"action-recognition+video-object-segmentation", "action recognition and object segmentation",
         "VideoMAE + VisTR", {}, {"action-recognition", "video-object-segmentation"}},
    });
}

inline json registry_to_json(const ToolRegistry& reg) {
    json arr = json::array();
    for (const auto& t : reg.tools()) {
        arr.push_back({{"name", t.name},
                       {"display", t.display},
                       {"specialist", t.specialist},
                       {"params", t.param_schema},
                       {"composite_of", t.composite_of}});
    }
    return arr;
}

inline ToolRegistry registry_from_json(const json& j) {
    if (!j.is_array()) fail(ErrorKind::config, "registry must be a JSON array");
    std::vector<ToolSpec> tools;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("name") || !e["name"].is_string()) {
            fail(ErrorKind::config, "registry entry needs a string 'name'");
        }
        for (auto it = e.begin(); it != e.end(); ++it) {
            static const std::set<std::string> known{"name", "display", "specialist", "params", "composite_of"};
            if (!known.count(it.key())) fail(ErrorKind::config, "unknown registry key '" + it.key() + "'");
        }
        ToolSpec t;
        t.name = e["name"].get<std::string>();
        t.display = e.value("display", t.name);
        t.specialist = e.value("specialist", "");
        if (e.contains("params")) t.param_schema = e["params"].get<std::map<std::string, std::string>>();
        if (e.contains("composite_of")) t.composite_of = e["composite_of"].get<std::vector<std::string>>();
        tools.push_back(std::move(t));
    }
    return ToolRegistry(std::move(tools));
}

// ---------------------------------------------------------------------------
// Conversation schema

struct ToolCall {
    std::string api_name;
    std::map<std::string, std::string> api_params;

    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct Turn {
    std::string from;  // "human" | "gpt"
    std::optional<std::string> value;
    std::optional<std::string> thought;           // serialized as "thoughts"
    std::optional<std::vector<ToolCall>> actions;
    json extras = json::object();                 // unrecognized keys, kept for round-trips

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct Conversation {
    std::vector<Turn> turns;
    json extras = json::object();  // record-level unknown fields (id, tool, cluster, ...)

    /// Distinct api_names called in the first gpt turn.
    std::set<std::string> tool_labels() const {
        std::set<std::string> out;
        if (turns.size() > 1 && turns[1].actions) {
            for (const auto& a : *turns[1].actions) out.insert(a.api_name);
        }
        return out;
    }

    /// Round-one calls as a list (order kept, duplicates kept).
    std::vector<ToolCall> round_one_actions() const {
        if (turns.size() > 1 && turns[1].actions) return *turns[1].actions;
        return {};
    }

    std::string extra_string(const std::string& key) const {
        if (extras.contains(key) && extras[key].is_string()) return extras[key].get<std::string>();
        return {};
    }

    friend bool operator==(const Conversation&, const Conversation&) = default;
};

namespace keys {
inline constexpr const char* conversations = "conversations";
inline constexpr const char* from = "from";
inline constexpr const char* value = "value";
inline constexpr const char* thoughts = "thoughts";
inline constexpr const char* actions = "actions";
inline constexpr const char* api_name = "API_name";
inline constexpr const char* api_params = "API_params";
}  // namespace keys

inline constexpr std::string_view kHuman = "human";
inline constexpr std::string_view kGpt = "gpt";
inline constexpr std::size_t kTurnsPerConversation = 4;

enum class ParseMode { strict, lenient };

namespace detail {

inline std::vector<ToolCall> parse_actions(const json& arr, std::size_t turn) {
    if (!arr.is_array()) fail(ErrorKind::schema, "turn " + std::to_string(turn) + ": 'actions' must be a list");
    std::vector<ToolCall> calls;
    for (const auto& a : arr) {
        if (!a.is_object()) fail(ErrorKind::schema, "turn " + std::to_string(turn) + ": action must be an object");
        ToolCall call;
        if (!a.contains(keys::api_name) || !a[keys::api_name].is_string()) {
            fail(ErrorKind::schema, "turn " + std::to_string(turn) + ": action missing field 'API_name'");
        }
        call.api_name = a[keys::api_name].get<std::string>();
        if (a.contains(keys::api_params)) {
            const auto& p = a[keys::api_params];
            if (!p.is_object()) fail(ErrorKind::schema, "turn " + std::to_string(turn) + ": 'API_params' must be an object");
            for (auto it = p.begin(); it != p.end(); ++it) {
                if (!it.value().is_string()) {
                    fail(ErrorKind::schema, "turn " + std::to_string(turn) + ": parameter '" + it.key() + "' must be a string");
                }
                call.api_params[it.key()] = it.value().get<std::string>();
            }
        }
        calls.push_back(std::move(call));
    }
    return calls;
}

inline std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t turn) {
    if (!obj.contains(key)) return std::nullopt;
    if (!obj[key].is_string()) {
        fail(ErrorKind::schema, "turn " + std::to_string(turn) + ": '" + key + "' must be a string");
    }
    return obj[key].get<std::string>();
}

}  // namespace detail

inline Conversation conversation_from_json(const json& record, ParseMode mode) {
    if (!record.is_object()) fail(ErrorKind::schema, "record must be an object");
    if (!record.contains(keys::conversations)) fail(ErrorKind::schema, "missing field 'conversations'");
    const auto& arr = record[keys::conversations];
    if (!arr.is_array()) fail(ErrorKind::schema, "'conversations' must be a list");
    if (mode == ParseMode::strict && arr.size() != kTurnsPerConversation) {
        fail(ErrorKind::schema, "expected 4 turns, got " + std::to_string(arr.size()));
    }

    Conversation conv;
    for (auto it = record.begin(); it != record.end(); ++it) {
        if (it.key() != keys::conversations) conv.extras[it.key()] = it.value();
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& obj = arr[i];
        if (!obj.is_object()) fail(ErrorKind::schema, "turn " + std::to_string(i) + " must be an object");
        Turn turn;
        if (auto from = detail::optional_string(obj, keys::from, i)) {
            turn.from = *from;
        } else if (mode == ParseMode::strict) {
            fail(ErrorKind::schema, "turn " + std::to_string(i) + ": missing field 'from'");
        }
        turn.value = detail::optional_string(obj, keys::value, i);
        const bool gpt = turn.from == kGpt;
        for (auto kv = obj.begin(); kv != obj.end(); ++kv) {
            const auto& k = kv.key();
            if (k == keys::from || k == keys::value) continue;
            if (gpt && k == keys::thoughts) {
                turn.thought = detail::optional_string(obj, keys::thoughts, i);
            } else if (gpt && k == keys::actions) {
                turn.actions = detail::parse_actions(kv.value(), i);
            } else {
                turn.extras[k] = kv.value();
            }
        }
        if (mode == ParseMode::strict) {
            auto require = [&](bool present, const char* field) {
                if (!present) fail(ErrorKind::schema, "turn " + std::to_string(i) + ": missing field '" + field + "'");
            };
            require(turn.value.has_value(), keys::value);
            if (gpt) {
                require(turn.thought.has_value(), keys::thoughts);
                require(turn.actions.has_value(), keys::actions);
            }
        }
        conv.turns.push_back(std::move(turn));
    }
    return conv;
}

inline json conversation_to_json(const Conversation& conv) {
    json record = conv.extras.is_object() ? conv.extras : json::object();
    json turns = json::array();
    for (const auto& t : conv.turns) {
        json obj = t.extras.is_object() ? t.extras : json::object();
        obj[keys::from] = t.from;
        if (t.value) obj[keys::value] = *t.value;
        if (t.thought) obj[keys::thoughts] = *t.thought;
        if (t.actions) {
            json arr = json::array();
            for (const auto& a : *t.actions) {
                arr.push_back({{keys::api_name, a.api_name}, {keys::api_params, json(a.api_params)}});
            }
            obj[keys::actions] = std::move(arr);
        }
        turns.push_back(std::move(obj));
    }
    record[keys::conversations] = std::move(turns);
    return record;
}

/// Parses one corpus line. Malformed JSON raises ParseError carrying the byte offset.
inline Conversation parse_conversation(std::string_view line, ParseMode mode = ParseMode::strict) {
    json record;
    try {
        record = json::parse(line);
    } catch (const json::parse_error& e) {
        // the reader counts consumed bytes; report the 0-based offset of the offending one
        throw ParseError(e.byte > 0 ? e.byte - 1 : 0, "malformed record");
    }
    return conversation_from_json(record, mode);
}

/// Canonical single-line form: sorted keys, no insignificant whitespace.
inline std::string serialize_conversation(const Conversation& conv) { return conversation_to_json(conv).dump(); }

// ---------------------------------------------------------------------------
// Validation

enum class ViolationCode { wrong_round_count, missing_key, unknown_tool, non_alternating_roles, empty_value };

struct Violation {
    ViolationCode code;
    std::optional<std::size_t> turn;
    std::string detail;  // key name for MISSING_KEY, tool name for UNKNOWN_TOOL

    /// e.g. "MISSING_KEY(thought)", "UNKNOWN_TOOL(asr)", "EMPTY_VALUE"
    std::string label() const {
        switch (code) {
        case ViolationCode::wrong_round_count: return "WRONG_ROUND_COUNT";
        case ViolationCode::missing_key: return "MISSING_KEY(" + detail + ")";
        case ViolationCode::unknown_tool: return "UNKNOWN_TOOL(" + detail + ")";
        case ViolationCode::non_alternating_roles: return "NON_ALTERNATING_ROLES";
        case ViolationCode::empty_value: return "EMPTY_VALUE";
        }
        return "?";
    }

    friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool valid() const noexcept { return violations.empty(); }
};

inline ValidationReport validate(const Conversation& conv, const ToolRegistry& registry) {
    ValidationReport report;
    auto add = [&](ViolationCode code, std::optional<std::size_t> turn, std::string detail = {}) {
        report.violations.push_back({code, turn, std::move(detail)});
    };
    if (conv.turns.size() != kTurnsPerConversation) add(ViolationCode::wrong_round_count, std::nullopt);
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const auto& t = conv.turns[i];
        const std::string_view expected = i % 2 == 0 ? kHuman : kGpt;
        if (t.from != expected) add(ViolationCode::non_alternating_roles, i);
        if (!t.value) {
            add(ViolationCode::missing_key, i, "value");
        } else if (t.value->empty()) {
            add(ViolationCode::empty_value, i);
        }
        if (t.from == kGpt) {
            if (!t.thought) add(ViolationCode::missing_key, i, "thought");
            if (!t.actions) {
                add(ViolationCode::missing_key, i, "actions");
            } else {
                for (const auto& a : *t.actions) {
                    if (!registry.contains(a.api_name)) add(ViolationCode::unknown_tool, i, a.api_name);
                }
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Plain (tool-free) instruction data in the same four-turn shape

inline constexpr std::string_view kNoToolThought =
    "The questions can be answered by the information in the context, without need any external tools.";
inline constexpr std::string_view kNoToolFollowUp = "No tool was used.";
inline constexpr std::string_view kNoToolFollowUpThought = "No tool output needs to be reported.";
inline constexpr std::string_view kNoToolFollowUpValue = "The answer above is complete.";

inline Conversation reformat_plain_instruction(std::string_view question, std::string_view answer) {
    if (question.empty() || answer.empty()) fail(ErrorKind::degenerate, "reformat needs a question and an answer");
    Conversation conv;
    conv.turns.push_back(Turn{std::string(kHuman), std::string(question), std::nullopt, std::nullopt, json::object()});
    conv.turns.push_back(
        Turn{std::string(kGpt), std::string(answer), std::string(kNoToolThought), std::vector<ToolCall>{}, json::object()});
    conv.turns.push_back(
        Turn{std::string(kHuman), std::string(kNoToolFollowUp), std::nullopt, std::nullopt, json::object()});
    conv.turns.push_back(Turn{std::string(kGpt), std::string(kNoToolFollowUpValue), std::string(kNoToolFollowUpThought),
                              std::vector<ToolCall>{}, json::object()});
    return conv;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace synth {

inline constexpr std::array<std::string_view, 6> kPrefixes{"", "please ", "could you ", "kindly ", "can you ",
                                                           "i need you to "};
inline constexpr std::array<std::string_view, 4> kVideoNouns{"video", "clip", "footage", "recording"};
inline constexpr std::array<std::string_view, 3> kEndings{".", "?", " for me."};

struct ToolPhrases {
    std::string_view tool;
    std::array<std::string_view, 8> requests;  // "{v}" stands for the video noun
    std::string_view result;
};

inline const std::vector<ToolPhrases>& phrase_table() {
    static const std::vector<ToolPhrases> table{
        {"action-recognition",
         {"recognize the action in the {v}", "tell me what activity happens in the {v}",
          "identify what the person is doing in the {v}", "classify the action shown in the {v}",
          "find out which activity the {v} shows", "label the human action in the {v}",
          "name the action performed in the {v}", "detect the main activity of the {v}"},
         "the person is playing basketball"},
        {"dense-video-caption",
         {"write captions for every event in the {v}", "describe each event of the {v} with a caption",
          "generate dense captions for the {v}", "caption all the moments in the {v}",
          "produce a caption for each segment of the {v}", "narrate the events of the {v} step by step",
          "give me event captions for the {v}", "summarize every scene of the {v} in captions"},
         "a man enters the room and then sits down"},
        {"temporal-action-localization",
         {"find when the action starts and ends in the {v}", "localize the actions in time within the {v}",
          "give the start and end times of each action in the {v}", "mark the time span of the activity in the {v}",
          "tell me at which seconds the action occurs in the {v}", "detect the temporal boundaries of actions in the {v}",
          "locate the moments where something happens in the {v}", "report the action intervals of the {v}"},
         "jumping occurs from second 3 to second 9"},
        {"ocr",
         {"read the text that appears in the {v}", "extract the written words from the {v}",
          "recognize the characters shown in the {v}", "transcribe the signs visible in the {v}",
          "tell me what the caption text says in the {v}", "pull out any printed text from the {v}",
          "read the words on screen in the {v}", "detect and read the letters in the {v}"},
         "the sign says open daily"},
        {"asr",
         {"transcribe the speech in the {v}", "convert the spoken words of the {v} into text",
          "write down what people say in the {v}", "give me a transcript of the audio in the {v}",
          "recognize the speech in the {v}", "turn the dialogue of the {v} into text",
          "tell me what is being said in the {v}", "produce subtitles from the audio of the {v}"},
         "hello everyone and welcome to the show"},
        {"video-relation-detection",
         {"detect the relations between objects in the {v}", "find how the objects interact in the {v}",
          "describe the object relationships in the {v}", "identify subject and object relations in the {v}",
          "tell me which objects are next to each other in the {v}", "list the visual relations in the {v}",
          "extract relation triplets from the {v}", "explain the spatial relations among objects in the {v}"},
         "dog runs behind ball"},
        {"video-object-segmentation",
         {"segment the objects in the {v}", "produce object masks for the {v}",
          "separate each object from the background of the {v}", "outline every object in the {v}",
          "give me pixel masks of the objects in the {v}", "track and segment the objects in the {v}",
          "cut out the objects appearing in the {v}", "split the {v} into object regions"},
         "three object masks were produced"},
        {"text-to-video",
         {"generate a {v} of a cat surfing", "create a new {v} from my description",
          "make a short {v} showing a sunset over the sea", "render a {v} based on this text",
          "synthesize a {v} of a rocket launch", "produce an animated {v} from the prompt",
          "turn my sentence into a {v}", "generate a {v} where a robot dances"},
         "a four second video was generated"},
    };
    return table;
}

inline const ToolPhrases* phrases_for(std::string_view tool) {
    for (const auto& p : phrase_table()) {
        if (p.tool == tool) return &p;
    }
    return nullptr;
}

inline constexpr std::array<std::string_view, 4> kThoughts{
    "I need to use the {t} model to follow the user's request.",
    "The user asks for {d}, so I should call the {t} tool.",
    "Request a process of {d} based on the user's prompt.",
    "This needs {d}; I will invoke the {t} model.",
};
inline constexpr std::array<std::string_view, 3> kReplies{
    "Sure! I will run the {d} model on the {v}. Please wait while it processes.",
    "Certainly, I am starting {d} now. Please wait a moment.",
    "Sure thing! I will use {d} to fulfill your request.",
};
inline constexpr std::array<std::string_view, 2> kFinalThoughts{
    "The {d} results are ready, so I can update the user.",
    "Now that {d} has finished, it is time to inform the user.",
};
inline constexpr std::array<std::string_view, 2> kFinalValues{
    "The {d} results are ready for your review.",
    "Here are the results of {d}.",
};

struct Scene {
    std::string_view name;
    std::string_view caption;
};
inline constexpr std::array<Scene, 8> kScenes{{
    {"kitchen", "a person is cooking in a kitchen."},
    {"beach", "people are walking along a sunny beach."},
    {"street", "cars are driving down a busy street."},
    {"park", "a child is playing with a dog in the park."},
    {"office", "two people are talking in an office."},
    {"stage", "a band is playing music on a stage."},
    {"snow", "a skier is going down a snowy hill."},
    {"pool", "a swimmer is doing laps in a pool."},
}};
inline constexpr std::array<std::string_view, 4> kPlainQuestions{
    "What is happening in the {v}?",
    "Describe the {v} briefly.",
    "What does the {v} show?",
    "Can you summarize the {v}?",
};

inline std::string fill(std::string_view tmpl, std::string_view tool, std::string_view display, std::string_view video) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
            switch (tmpl[i + 1]) {
            case 't': out += tool; break;
            case 'd': out += display; break;
            case 'v': out += video; break;
            default: out.append(tmpl.substr(i, 3)); break;
            }
            i += 2;
        } else {
            out += tmpl[i];
        }
    }
    return out;
}

template <class Array>
std::string_view pick(const Array& options, Rng& rng) {
    return options[rng.index(options.size())];
}

inline std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

}  // namespace synth

/// Deterministic tool-use corpus: `per_tool` conversations for every registry
/// tool. Records carry "id", "tool" and "cluster" fields for feature generation.
inline std::vector<Conversation> synthesize_corpus(const ToolRegistry& registry, std::size_t per_tool,
                                                   std::uint64_t seed) {
    using namespace synth;
    if (registry.empty()) fail(ErrorKind::config, "empty tool registry");
    if (per_tool == 0) fail(ErrorKind::config, "per_tool must be >= 1");
    std::vector<Conversation> corpus;
    for (const auto& spec : registry.tools()) {
        std::vector<const ToolPhrases*> parts;
        if (spec.is_composite()) {
            for (const auto& m : spec.composite_of) parts.push_back(phrases_for(m));
        } else {
            parts.push_back(phrases_for(spec.name));
        }
        if (std::find(parts.begin(), parts.end(), nullptr) != parts.end()) {
            fail(ErrorKind::config, "no request templates for tool '" + spec.name + "'");
        }
        Rng rng(hash_mix(seed, "corpus:" + spec.name));
        for (std::size_t n = 0; n < per_tool; ++n) {
            const std::string video(pick(kVideoNouns, rng));
            std::string request(pick(kPrefixes, rng));
            for (std::size_t p = 0; p < parts.size(); ++p) {
                if (p > 0) request += rng.index(2) == 0 ? " and then " : ", and also ";
                request += fill(pick(parts[p]->requests, rng), spec.name, spec.display, video);
            }
            request += pick(kEndings, rng);

            std::vector<ToolCall> calls;
            std::string result;
            for (const auto* part : parts) {
                calls.push_back(ToolCall{std::string(part->tool), {}});
                if (!result.empty()) result += "; ";
                result += part->result;
            }

            Conversation conv;
            conv.turns.push_back(Turn{"human", capitalize(request), std::nullopt, std::nullopt, json::object()});
            conv.turns.push_back(Turn{"gpt", fill(pick(kReplies, rng), spec.name, spec.display, video),
                                      fill(pick(kThoughts, rng), spec.name, spec.display, video), calls, json::object()});
            conv.turns.push_back(Turn{"human", spec.name + " output: " + result + ".", std::nullopt, std::nullopt,
                                      json::object()});
            conv.turns.push_back(Turn{"gpt", fill(pick(kFinalValues, rng), spec.name, spec.display, video),
                                      fill(pick(kFinalThoughts, rng), spec.name, spec.display, video),
                                      std::vector<ToolCall>{}, json::object()});
            char id[32];
            std::snprintf(id, sizeof id, "%05zu", n);
            conv.extras["id"] = spec.name + "-" + id;
            conv.extras["tool"] = spec.name;
            conv.extras["cluster"] = spec.name;
            corpus.push_back(std::move(conv));
        }
    }
    return corpus;
}

/// Tool-free caption-style QA, reformatted into the four-turn shape.
inline std::vector<Conversation> synthesize_plain_corpus(std::size_t count, std::uint64_t seed) {
    using namespace synth;
    Rng rng(hash_mix(seed, "plain"));
    std::vector<Conversation> out;
    for (std::size_t n = 0; n < count; ++n) {
        const auto& scene = kScenes[rng.index(kScenes.size())];
        const std::string video(pick(kVideoNouns, rng));
        auto conv = reformat_plain_instruction(fill(pick(kPlainQuestions, rng), "", "", video), capitalize(std::string(scene.caption)));
        char id[32];
        std::snprintf(id, sizeof id, "%05zu", n);
        conv.extras["id"] = std::string("plain-") + id;
        conv.extras["tool"] = "none";
        conv.extras["cluster"] = std::string("scene:") + std::string(scene.name);
        out.push_back(std::move(conv));
    }
    return out;
}

struct VisualSpec {
    std::size_t patches = 4;
    std::size_t dim = 32;
    double noise = 0.5;
};

/// Synthetic stand-in for frozen vision-encoder output: a per-cluster Gaussian
/// center plus per-record noise. Pure function of (seed, cluster, id).
inline Tensor2 synthetic_visual_features(std::uint64_t seed, std::string_view cluster, std::string_view id,
                                         const VisualSpec& spec) {
    Rng center_rng(hash_mix(seed, "center:" + std::string(cluster)));
    std::vector<double> center(spec.dim);
    for (double& c : center) c = center_rng.normal();
    Rng noise_rng(hash_mix(seed, "sample:" + std::string(id)));
    Tensor2 out(spec.patches, spec.dim);
    for (std::size_t p = 0; p < spec.patches; ++p) {
        for (std::size_t d = 0; d < spec.dim; ++d) out(p, d) = center[d] + spec.noise * noise_rng.normal();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stratified 9:1 split

struct Split {
    std::vector<Conversation> train;
    std::vector<Conversation> test;
};

/// Groups by the record's "tool" field. Per group of n records, 9n/10 (floor)
/// go to train and the rest to test.
inline Split split_train_test(const std::vector<Conversation>& corpus, std::uint64_t seed) {
    if (corpus.size() < 10) fail(ErrorKind::domain, "corpus needs at least 10 records to split");
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto tool = corpus[i].extra_string("tool");
        if (!groups.count(tool)) order.push_back(tool);
        groups[tool].push_back(i);
    }
    Split split;
    for (const auto& tool : order) {
        auto idx = groups[tool];
        if (idx.size() < 2) fail(ErrorKind::domain, "tool '" + tool + "' has fewer than 2 samples; cannot stratify");
        Rng rng(hash_mix(seed, "split:" + tool));
        rng.shuffle(idx);
        const std::size_t n_train = idx.size() * 9 / 10;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            (k < n_train ? split.train : split.test).push_back(corpus[idx[k]]);
        }
    }
    return split;
}

// ---------------------------------------------------------------------------
// JSONL files

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

inline std::vector<Conversation> read_corpus(const std::string& path) {
    std::vector<Conversation> out;
    const auto lines = read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(parse_conversation(lines[i]));
        } catch (const Error& e) {
            fail(e.kind(), path + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

inline void write_corpus(const std::string& path, const std::vector<Conversation>& corpus) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
    for (const auto& c : corpus) out << serialize_conversation(c) << '\n';
    if (!out) fail(ErrorKind::io, "write failed for '" + path + "'");
}

inline ToolRegistry read_registry(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read registry '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(e.byte, "malformed registry '" + path + "'");
    }
    return registry_from_json(j);
}

}  // namespace colt
