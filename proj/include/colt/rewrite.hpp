#pragma once

// Optional LLM rewriting of corpus records. A client receives the system
// prompt plus one record and returns a rephrased record; the result is only
// accepted when roles and tool calls are untouched.

#include <cctype>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "colt/dataset.hpp"
#include "colt/error.hpp"

namespace colt {

inline constexpr std::string_view kRewriteSystemPrompt =
    "You are an AI assistant and you receive a set of conversations in json string format, the content of which is "
    "used as data for instruction finetune. Your task is to rephrase the dialogue to generate a new example. Note to "
    "give it in standard json format. DO NOT modify the 'from' and 'actions' parts. Only modify the 'value' and "
    "'thoughts' part.";

struct RewriteRequest {
    std::string system_prompt;
    std::string example_record;  // one canonical corpus line

    json to_json() const { return {{"system_prompt", system_prompt}, {"example_record", example_record}}; }
};

class RewriteClient {
public:
    virtual ~RewriteClient() = default;
    /// Returns the rewritten record as one JSON object line.
    virtual std::string rewrite(const RewriteRequest& request) = 0;
};

/// Deterministic offline stand-in: word-level synonym substitution applied to
/// value and thoughts only.
class MockRewriteClient : public RewriteClient {
public:
    std::string rewrite(const RewriteRequest& request) override {
        auto conv = parse_conversation(request.example_record, ParseMode::lenient);
        for (auto& t : conv.turns) {
            if (t.value) t.value = rephrase(*t.value);
            if (t.thought) t.thought = rephrase(*t.thought);
        }
        return serialize_conversation(conv);
    }

    static std::string rephrase(const std::string& text) {
        static const std::map<std::string, std::string> synonyms{
            {"Please", "Kindly"},   {"please", "kindly"},   {"Sure", "Certainly"}, {"wait", "hold on"},
            {"results", "outputs"}, {"model", "system"},    {"process", "procedure"}, {"update", "inform"},
            {"video", "clip"},      {"request", "query"},   {"ready", "available"}, {"need", "have"},
            {"review", "inspection"}, {"completed", "finished"},
        };
        std::string out;
        std::string word;
        bool changed = false;
        auto flush = [&] {
            if (auto it = synonyms.find(word); it != synonyms.end()) {
                out += it->second;
                changed = true;
            } else {
                out += word;
            }
            word.clear();
        };
        for (char ch : text) {
            if (std::isalpha(static_cast<unsigned char>(ch))) {
                word += ch;
            } else {
                flush();
                out += ch;
            }
        }
        flush();
        if (!changed && !out.empty()) out = "In short, " + out;
        return out;
    }
};

/// Replays canned responses, keyed by the exact example record; records
/// without a fixture fall back to the queue of unkeyed responses in order.
class FixtureRewriteClient : public RewriteClient {
public:
    void add(std::string example_record, std::string response) {
        keyed_[std::move(example_record)] = std::move(response);
    }
    void push(std::string response) { queue_.push_back(std::move(response)); }

    std::string rewrite(const RewriteRequest& request) override {
        if (auto it = keyed_.find(request.example_record); it != keyed_.end()) return it->second;
        if (queue_.empty()) fail(ErrorKind::service, "fixture client has no response for this record");
        auto r = std::move(queue_.front());
        queue_.pop_front();
        return r;
    }

private:
    std::map<std::string, std::string> keyed_;
    std::deque<std::string> queue_;
};

/// POSTs {system_prompt, example_record} as JSON and expects {record}.
class HttpRewriteClient : public RewriteClient {
public:
    HttpRewriteClient(std::string base_url, std::string path = "/rewrite", int max_attempts = 3,
                      int timeout_seconds = 30)
        : base_url_(std::move(base_url)), path_(std::move(path)), max_attempts_(max_attempts),
          timeout_seconds_(timeout_seconds) {
        if (max_attempts_ < 1) fail(ErrorKind::config, "max_attempts must be >= 1");
    }

    std::string rewrite(const RewriteRequest& request) override {
        httplib::Client client(base_url_);
        client.set_connection_timeout(timeout_seconds_);
        client.set_read_timeout(timeout_seconds_);
        const std::string body = request.to_json().dump();
        std::string last_error;
        for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
            auto res = client.Post(path_, body, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                if (res->status < 500) break;  // client errors are not retried
                continue;
            }
            json reply;
            try {
                reply = json::parse(res->body);
            } catch (const json::parse_error&) {
                fail(ErrorKind::service, "rewrite service returned malformed JSON");
            }
            if (!reply.is_object() || !reply.contains("record")) {
                fail(ErrorKind::service, "rewrite service reply lacks 'record'");
            }
            const auto& record = reply["record"];
            return record.is_string() ? record.get<std::string>() : record.dump();
        }
        fail(ErrorKind::service, "rewrite service failed after " + std::to_string(max_attempts_) +
                                     " attempt(s): " + last_error);
    }

private:
    std::string base_url_;
    std::string path_;
    int max_attempts_;
    int timeout_seconds_;
};

/// Rewrites one conversation. Record-level fields (id, tool, ...) are carried
/// over from the input; roles, turn count and every action list must match.
inline Conversation llm_rewrite(const Conversation& conv, RewriteClient* client) {
    if (!client) fail(ErrorKind::unavailable, "no rewrite client configured");
    const std::string response = client->rewrite({std::string(kRewriteSystemPrompt), serialize_conversation(conv)});
    Conversation out;
    try {
        out = parse_conversation(response, ParseMode::lenient);
    } catch (const Error& e) {
        fail(ErrorKind::rewrite_violation, std::string("unparseable rewrite: ") + e.what());
    }
    if (out.turns.size() != conv.turns.size()) {
        fail(ErrorKind::rewrite_violation, "rewrite changed the number of turns");
    }
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const auto& a = conv.turns[i];
        const auto& b = out.turns[i];
        if (a.from != b.from) fail(ErrorKind::rewrite_violation, "turn " + std::to_string(i) + ": 'from' modified");
        if (a.actions != b.actions) {
            fail(ErrorKind::rewrite_violation, "turn " + std::to_string(i) + ": 'actions' modified");
        }
        if (a.value.has_value() != b.value.has_value() || a.thought.has_value() != b.thought.has_value()) {
            fail(ErrorKind::rewrite_violation, "turn " + std::to_string(i) + ": fields added or dropped");
        }
    }
    out.extras = conv.extras;
    return out;
}

struct RewriteOutcome {
    std::vector<Conversation> corpus;
    std::size_t rewritten = 0;
    std::size_t rejected = 0;   // violations; the original record is kept
    bool degraded = false;      // no client: corpus passed through unchanged
};

/// Corpus-level rewrite. Without a client the pipeline proceeds unchanged;
/// rejected rewrites keep the original record.
inline RewriteOutcome rewrite_corpus(const std::vector<Conversation>& corpus, RewriteClient* client) {
    RewriteOutcome outcome;
    for (const auto& conv : corpus) {
        if (outcome.degraded) {
            outcome.corpus.push_back(conv);
            continue;
        }
        try {
            outcome.corpus.push_back(llm_rewrite(conv, client));
            ++outcome.rewritten;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::unavailable) {
                outcome.degraded = true;
            } else if (e.kind() == ErrorKind::rewrite_violation) {
                ++outcome.rejected;
            } else {
                throw;
            }
            outcome.corpus.push_back(conv);
        }
    }
    return outcome;
}

}  // namespace colt
