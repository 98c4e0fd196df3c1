#pragma once

// Desk-scale video-LLM stand-in: a linear visual projector, a token embedding
// table, a mean-pooled query encoder with its own table, and a small
// autoregressive decoder. All backward passes are written by hand.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "colt/codebook.hpp"
#include "colt/error.hpp"
#include "colt/numerics.hpp"

namespace colt {

// ---------------------------------------------------------------------------
// Vocabulary and tokenizer

namespace tokens {
inline constexpr std::string_view pad = "<pad>";
inline constexpr std::string_view bos = "<bos>";
inline constexpr std::string_view eos = "<eos>";
inline constexpr std::string_view unk = "<unk>";
inline constexpr std::string_view actions_open = "<actions>";
inline constexpr std::string_view actions_close = "</actions>";
inline constexpr std::string_view sep = "<sep>";
}  // namespace tokens

/// Lowercases and splits on whitespace; punctuation other than - + ' becomes
/// its own token so tool names like "video-object-segmentation" stay whole.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char raw : text) {
        const auto ch = static_cast<unsigned char>(raw);
        if (std::isspace(ch)) {
            flush();
        } else if (std::isalnum(ch) || raw == '-' || raw == '+' || raw == '\'' || raw == '_' || ch >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else {
            flush();
            out.emplace_back(1, raw);
        }
    }
    flush();
    return out;
}

class Vocab {
public:
    Vocab() = default;

    /// Special tokens first, then `required` (tool names) in order, then every
    /// remaining word from `texts` in sorted order.
    static Vocab build(const std::vector<std::string>& required, const std::vector<std::string>& texts) {
        Vocab v;
        for (auto s : {tokens::pad, tokens::bos, tokens::eos, tokens::unk, tokens::actions_open,
                       tokens::actions_close, tokens::sep}) {
            v.add(std::string(s));
        }
        for (const auto& r : required) v.add(r);
        std::vector<std::string> words;
        for (const auto& t : texts) {
            for (auto& w : tokenize(t)) words.push_back(std::move(w));
        }
        std::sort(words.begin(), words.end());
        words.erase(std::unique(words.begin(), words.end()), words.end());
        for (const auto& w : words) v.add(w);
        return v;
    }

    static Vocab from_lines(std::string_view text) {
        Vocab v;
        std::size_t start = 0;
        while (start < text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string_view::npos) end = text.size();
            std::string tok(text.substr(start, end - start));
            if (!tok.empty()) {
                if (v.contains(tok)) fail(ErrorKind::schema, "duplicate vocabulary token '" + tok + "'");
                v.add(tok);
            }
            start = end + 1;
        }
        for (auto s : {tokens::pad, tokens::bos, tokens::eos, tokens::unk}) {
            if (!v.contains(s)) fail(ErrorKind::schema, "vocabulary lacks " + std::string(s));
        }
        return v;
    }

    std::string to_lines() const {
        std::string out;
        for (const auto& t : tokens_) {
            out += t;
            out += '\n';
        }
        return out;
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    bool contains(std::string_view tok) const { return index_.count(std::string(tok)) != 0; }
    const std::string& token(std::size_t id) const { return tokens_.at(id); }

    std::size_t id(std::string_view tok) const {
        auto it = index_.find(std::string(tok));
        if (it == index_.end()) fail(ErrorKind::index, "token '" + std::string(tok) + "' not in vocabulary");
        return it->second;
    }

    std::size_t bos() const { return id(tokens::bos); }
    std::size_t eos() const { return id(tokens::eos); }
    std::size_t unk() const { return id(tokens::unk); }

    /// strict: out-of-vocabulary words are a data error; otherwise they map to <unk>.
    std::vector<std::size_t> encode(std::string_view text, bool strict) const {
        std::vector<std::size_t> ids;
        for (const auto& w : tokenize(text)) {
            auto it = index_.find(w);
            if (it != index_.end()) {
                ids.push_back(it->second);
            } else if (strict) {
                fail(ErrorKind::schema, "out-of-vocabulary word '" + w + "'");
            } else {
                ids.push_back(unk());
            }
        }
        return ids;
    }

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

private:
    void add(const std::string& tok) {
        if (index_.count(tok)) return;
        index_.emplace(tok, tokens_.size());
        tokens_.push_back(tok);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Model state

enum class PositionPolicy { tool_vision_text, vision_tool_text, vision_text_tool };

inline std::string_view to_string(PositionPolicy p) {
    switch (p) {
    case PositionPolicy::tool_vision_text: return "tool-vision-text";
    case PositionPolicy::vision_tool_text: return "vision-tool-text";
    case PositionPolicy::vision_text_tool: return "vision-text-tool";
    }
    return "?";
}

inline PositionPolicy parse_position_policy(std::string_view s) {
    if (s == "tool-vision-text") return PositionPolicy::tool_vision_text;
    if (s == "vision-tool-text") return PositionPolicy::vision_tool_text;
    if (s == "vision-text-tool") return PositionPolicy::vision_text_tool;
    fail(ErrorKind::config, "unknown position policy '" + std::string(s) + "'");
}

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t width = 16;        // C
    std::size_t visual_dim = 32;   // D
    std::size_t patches = 4;       // P_patch
    std::size_t hidden = 32;
    std::size_t bos_id = 1;
    std::size_t eos_id = 2;
    PositionPolicy policy = PositionPolicy::vision_text_tool;
};

/// One training/eval example: synthetic visual features, instruction and target ids.
struct Instance {
    Tensor2 visual_raw;                       // patches x D
    std::vector<std::size_t> instruction;     // X_w
    std::vector<std::size_t> target;          // X_a, ends with <eos>
    std::vector<std::string> tool_labels;     // reference api_names (multiset)
    std::string tool;                         // generating tool; "" for plain instructions
};

struct ModelState {
    ModelConfig config;
    // projector (delta)
    Param projector_weight;  // D x C
    Param projector_bias;    // 1 x C
    // query encoder (beta): separate embedding table + linear map
    Param query_embedding;   // V x C
    Param query_weight;      // C x C
    // decoder (phi), including the token table that produces H_w
    Param token_embedding;   // V x C
    Param hidden_weight;     // 2C x H
    Param hidden_bias;       // 1 x H
    Param output_weight;     // H x V
    Param output_bias;       // 1 x V
};

inline ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.vocab_size < 2 || cfg.width == 0 || cfg.visual_dim == 0 || cfg.hidden == 0) {
        fail(ErrorKind::config, "model sizes must be positive (V >= 2)");
    }
    Rng rng(seed);
    const auto inv_sqrt = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
    ModelState m;
    m.config = cfg;
    m.projector_weight = Param(gaussian_tensor(cfg.visual_dim, cfg.width, inv_sqrt(cfg.visual_dim), rng));
    m.projector_bias = Param(Tensor2(1, cfg.width));
    m.query_embedding = Param(gaussian_tensor(cfg.vocab_size, cfg.width, inv_sqrt(cfg.width), rng));
    m.query_weight = Param(Tensor2::identity(cfg.width));
    m.token_embedding = Param(gaussian_tensor(cfg.vocab_size, cfg.width, inv_sqrt(cfg.width), rng));
    m.hidden_weight = Param(gaussian_tensor(2 * cfg.width, cfg.hidden, inv_sqrt(2 * cfg.width), rng));
    m.hidden_bias = Param(Tensor2(1, cfg.hidden));
    m.output_weight = Param(gaussian_tensor(cfg.hidden, cfg.vocab_size, inv_sqrt(cfg.hidden), rng));
    m.output_bias = Param(Tensor2(1, cfg.vocab_size));
    return m;
}

template <class State, class F>
void for_each_param(State& m, F&& f) {
    f("projector.weight", m.projector_weight);
    f("projector.bias", m.projector_bias);
    f("query.embedding", m.query_embedding);
    f("query.weight", m.query_weight);
    f("decoder.token_embedding", m.token_embedding);
    f("decoder.hidden_weight", m.hidden_weight);
    f("decoder.hidden_bias", m.hidden_bias);
    f("decoder.output_weight", m.output_weight);
    f("decoder.output_bias", m.output_bias);
}

// ---------------------------------------------------------------------------
// Visual projection (H_v)

inline Tensor2 project_visual(const ModelState& m, const Tensor2& visual_raw) {
    const auto& w = m.projector_weight.value;
    if (visual_raw.cols() != w.rows()) {
        fail(ErrorKind::shape, "visual width " + std::to_string(visual_raw.cols()) + " != projector input " +
                                   std::to_string(w.rows()));
    }
    Tensor2 out(visual_raw.rows(), w.cols());
    for (std::size_t r = 0; r < visual_raw.rows(); ++r) {
        auto o = out.row(r);
        std::copy(m.projector_bias.value.row(0).begin(), m.projector_bias.value.row(0).end(), o.begin());
        for (std::size_t d = 0; d < visual_raw.cols(); ++d) axpy(visual_raw(r, d), w.row(d), o);
    }
    return out;
}

inline void backward_project_visual(ModelState& m, const Tensor2& visual_raw, const Tensor2& grad_out) {
    for (std::size_t r = 0; r < visual_raw.rows(); ++r) {
        const auto g = grad_out.row(r);
        axpy(1.0, g, m.projector_bias.grad.row(0));
        for (std::size_t d = 0; d < visual_raw.cols(); ++d) axpy(visual_raw(r, d), g, m.projector_weight.grad.row(d));
    }
}

// ---------------------------------------------------------------------------
// Text embedding (H_w)

inline Tensor2 embed_text(const ModelState& m, std::span<const std::size_t> ids) {
    const auto& table = m.token_embedding.value;
    Tensor2 out(ids.size(), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= table.rows()) fail(ErrorKind::index, "token id " + std::to_string(ids[i]) + " out of vocabulary");
        std::copy(table.row(ids[i]).begin(), table.row(ids[i]).end(), out.row(i).begin());
    }
    return out;
}

inline void backward_embed_text(ModelState& m, std::span<const std::size_t> ids, const Tensor2& grad_out) {
    for (std::size_t i = 0; i < ids.size(); ++i) axpy(1.0, grad_out.row(i), m.token_embedding.grad.row(ids[i]));
}

// ---------------------------------------------------------------------------
// Query encoder (H_q = mean(Q[ids]) W_q)

struct QueryEncoding {
    std::vector<double> pooled;  // mean of query-embedding rows
    std::vector<double> query;   // H_q
};

inline QueryEncoding encode_query_detailed(const ModelState& m, std::span<const std::size_t> ids) {
    if (ids.empty()) fail(ErrorKind::degenerate, "encode_query: empty instruction");
    const auto& table = m.query_embedding.value;
    const std::size_t c = table.cols();
    QueryEncoding enc;
    enc.pooled.assign(c, 0.0);
    for (std::size_t id : ids) {
        if (id >= table.rows()) fail(ErrorKind::index, "token id " + std::to_string(id) + " out of vocabulary");
        axpy(1.0, table.row(id), enc.pooled);
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (double& x : enc.pooled) x *= inv;
    enc.query.assign(c, 0.0);
    const auto& w = m.query_weight.value;
    for (std::size_t i = 0; i < c; ++i) axpy(enc.pooled[i], w.row(i), enc.query);
    return enc;
}

inline std::vector<double> encode_query(const ModelState& m, std::span<const std::size_t> ids) {
    return encode_query_detailed(m, ids).query;
}

inline void backward_encode_query(ModelState& m, std::span<const std::size_t> ids, const QueryEncoding& enc,
                                  std::span<const double> grad_query) {
    const std::size_t c = enc.pooled.size();
    const auto& w = m.query_weight.value;
    std::vector<double> grad_pooled(c, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        axpy(enc.pooled[i], grad_query, m.query_weight.grad.row(i));
        grad_pooled[i] = dot(w.row(i), grad_query);
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (std::size_t id : ids) axpy(inv, grad_pooled, m.query_embedding.grad.row(id));
}

// ---------------------------------------------------------------------------
// Sequence assembly

struct BlockLayout {
    std::size_t vision = 0, text = 0, prompt = 0;  // row offsets in the conditioning matrix
};

inline BlockLayout block_layout(PositionPolicy policy, std::size_t nv, std::size_t nw, std::size_t np) {
    switch (policy) {
    case PositionPolicy::tool_vision_text: return {np, np + nv, 0};
    case PositionPolicy::vision_tool_text: return {0, nv + np, nv};
    case PositionPolicy::vision_text_tool: return {0, nv, nv + nw};
    }
    return {};
}

inline Tensor2 assemble_sequence(const Tensor2& vision, const Tensor2& text, const Tensor2& prompts,
                                 PositionPolicy policy) {
    const std::size_t c = std::max({vision.cols(), text.cols(), prompts.cols()});
    for (const Tensor2* t : {&vision, &text, &prompts}) {
        if (t->rows() > 0 && t->cols() != c) fail(ErrorKind::shape, "assemble_sequence: width mismatch");
    }
    const auto layout = block_layout(policy, vision.rows(), text.rows(), prompts.rows());
    Tensor2 out(vision.rows() + text.rows() + prompts.rows(), c);
    auto put = [&](const Tensor2& block, std::size_t offset) {
        for (std::size_t r = 0; r < block.rows(); ++r) {
            std::copy(block.row(r).begin(), block.row(r).end(), out.row(offset + r).begin());
        }
    };
    put(vision, layout.vision);
    put(text, layout.text);
    put(prompts, layout.prompt);
    return out;
}

// ---------------------------------------------------------------------------
// Decoder

// Step i sees the conditioning rows and the prefix <bos>, t_0 .. t_{i-1}.
// Input x_i = [mean(conditioning) ; mean(prefix embeddings)], then
// h_i = tanh(x_i W1 + b1), logits_i = h_i W2 + b2.

namespace detail {

inline std::vector<double> mean_rows(const Tensor2& rows, std::size_t width) {
    std::vector<double> mean(width, 0.0);
    if (rows.rows() == 0) return mean;
    for (std::size_t r = 0; r < rows.rows(); ++r) axpy(1.0, rows.row(r), mean);
    const double inv = 1.0 / static_cast<double>(rows.rows());
    for (double& x : mean) x *= inv;
    return mean;
}

struct StepActivations {
    std::vector<double> input;   // 2C
    std::vector<double> hidden;  // H, post-tanh
    std::vector<double> logits;  // V
};

inline StepActivations decoder_step(const ModelState& m, std::span<const double> context_mean,
                                    std::span<const double> prefix_mean) {
    const std::size_t c = m.config.width;
    StepActivations a;
    a.input.resize(2 * c);
    std::copy(context_mean.begin(), context_mean.end(), a.input.begin());
    std::copy(prefix_mean.begin(), prefix_mean.end(), a.input.begin() + static_cast<std::ptrdiff_t>(c));

    const auto& w1 = m.hidden_weight.value;
    a.hidden.assign(m.hidden_bias.value.row(0).begin(), m.hidden_bias.value.row(0).end());
    for (std::size_t i = 0; i < a.input.size(); ++i) axpy(a.input[i], w1.row(i), a.hidden);
    for (double& h : a.hidden) h = std::tanh(h);

    const auto& w2 = m.output_weight.value;
    a.logits.assign(m.output_bias.value.row(0).begin(), m.output_bias.value.row(0).end());
    for (std::size_t i = 0; i < a.hidden.size(); ++i) axpy(a.hidden[i], w2.row(i), a.logits);
    return a;
}

}  // namespace detail

struct LmLoss {
    double loss = 0.0;          // mean per-token cross-entropy
    Tensor2 grad_conditioning;  // M x C (only filled when gradients requested)
};

/// Teacher-forced loss. When `grads` is non-null, parameter gradients scaled
/// by `grad_scale` are accumulated into it (decoder and token table) and the
/// gradient wrt every conditioning row is returned.
inline LmLoss decode_lm_loss(const ModelState& m, const Tensor2& conditioning, std::span<const std::size_t> target,
                             ModelState* grads = nullptr, double grad_scale = 1.0) {
    if (target.empty()) fail(ErrorKind::degenerate, "decode_lm_loss: empty target");
    const std::size_t c = m.config.width;
    const std::size_t v = m.config.vocab_size;
    if (conditioning.rows() > 0 && conditioning.cols() != c) fail(ErrorKind::shape, "conditioning width != C");
    const auto& table = m.token_embedding.value;
    const std::size_t bos_id = m.config.bos_id;

    const auto context_mean = detail::mean_rows(conditioning, c);
    std::vector<double> prefix_sum(table.row(bos_id).begin(), table.row(bos_id).end());
    std::vector<std::size_t> prefix{bos_id};

    LmLoss out;
    if (grads) out.grad_conditioning = Tensor2(conditioning.rows(), c);
    std::vector<double> grad_context(c, 0.0);
    const double inv_len = 1.0 / static_cast<double>(target.size());

    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] >= v) fail(ErrorKind::index, "target id out of vocabulary");
        std::vector<double> prefix_mean(prefix_sum);
        const double inv_prefix = 1.0 / static_cast<double>(prefix.size());
        for (double& x : prefix_mean) x *= inv_prefix;

        const auto act = detail::decoder_step(m, context_mean, prefix_mean);
        const auto ce = softmax_cross_entropy(act.logits, target[i]);
        out.loss += ce.loss * inv_len;

        if (grads) {
            const double s = grad_scale * inv_len;
            std::vector<double> grad_hidden(act.hidden.size(), 0.0);
            axpy(s, ce.grad, grads->output_bias.grad.row(0));
            for (std::size_t h = 0; h < act.hidden.size(); ++h) {
                axpy(s * act.hidden[h], ce.grad, grads->output_weight.grad.row(h));
                grad_hidden[h] = s * dot(m.output_weight.value.row(h), ce.grad);
                grad_hidden[h] *= 1.0 - act.hidden[h] * act.hidden[h];
            }
            axpy(1.0, grad_hidden, grads->hidden_bias.grad.row(0));
            std::vector<double> grad_input(2 * c, 0.0);
            for (std::size_t k = 0; k < 2 * c; ++k) {
                axpy(act.input[k], grad_hidden, grads->hidden_weight.grad.row(k));
                grad_input[k] = dot(m.hidden_weight.value.row(k), grad_hidden);
            }
            for (std::size_t k = 0; k < c; ++k) grad_context[k] += grad_input[k];
            const std::span<const double> grad_prefix(grad_input.data() + c, c);
            for (std::size_t tok : prefix) axpy(inv_prefix, grad_prefix, grads->token_embedding.grad.row(tok));
        }

        prefix.push_back(target[i]);
        axpy(1.0, table.row(target[i]), prefix_sum);
    }

    if (grads && conditioning.rows() > 0) {
        const double inv_rows = 1.0 / static_cast<double>(conditioning.rows());
        for (std::size_t r = 0; r < conditioning.rows(); ++r) axpy(inv_rows, grad_context, out.grad_conditioning.row(r));
    }
    return out;
}

/// Greedy decoding; ties go to the lowest token id. Stops after <eos>.
inline std::vector<std::size_t> generate(const ModelState& m, const Tensor2& conditioning, std::size_t max_len) {
    if (max_len == 0) fail(ErrorKind::domain, "generate: max_len must be >= 1");
    const std::size_t c = m.config.width;
    const auto& table = m.token_embedding.value;
    const std::size_t bos_id = m.config.bos_id;
    const std::size_t eos_id = m.config.eos_id;
    const auto context_mean = detail::mean_rows(conditioning, c);
    std::vector<double> prefix_sum(table.row(bos_id).begin(), table.row(bos_id).end());
    std::size_t prefix_len = 1;
    std::vector<std::size_t> out;
    while (out.size() < max_len) {
        std::vector<double> prefix_mean(prefix_sum);
        for (double& x : prefix_mean) x /= static_cast<double>(prefix_len);
        const auto act = detail::decoder_step(m, context_mean, prefix_mean);
        const auto best = static_cast<std::size_t>(
            std::distance(act.logits.begin(), std::max_element(act.logits.begin(), act.logits.end())));
        out.push_back(best);
        if (best == eos_id) break;
        axpy(1.0, table.row(best), prefix_sum);
        ++prefix_len;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full forward/backward through projector, embeddings, query encoder,
// codebook selection, straight-through prompts and the decoder.

struct PipelineOptions {
    bool use_codebook = false;
    std::size_t top_k = 3;
    double lambda1 = 1.0;
    double lambda2 = 0.25;
    bool straight_through = true;
    /// Pins the selected rows (gradient checks with frozen selection).
    std::optional<std::vector<std::size_t>> forced_selection;
};

struct PipelineLoss {
    double total = 0.0;
    double lm = 0.0;
    double quantization = 0.0;
    double commitment = 0.0;
    Selection selection;
};

struct Conditioning {
    Tensor2 rows;
    Tensor2 vision;
    Tensor2 text;
    Tensor2 prompts;
    std::optional<QueryEncoding> query;
    Selection selection;
};

inline Selection select_for_query(const ToolCodebook& cb, std::span<const double> query, const PipelineOptions& opt) {
    if (!opt.forced_selection) return select_topk(cb, query, opt.top_k);
    Selection sel;
    sel.query.assign(query.begin(), query.end());
    for (std::size_t idx : *opt.forced_selection) {
        if (idx >= cb.size()) fail(ErrorKind::index, "forced selection outside codebook");
        sel.indices.push_back(idx);
        sel.similarities.push_back(cosine_similarity(query, cb.prompt(idx)));
    }
    return sel;
}

inline Conditioning build_conditioning(const ModelState& m, const ToolCodebook& cb, const Instance& x,
                                       const PipelineOptions& opt) {
    Conditioning cond;
    cond.vision = project_visual(m, x.visual_raw);
    cond.text = embed_text(m, x.instruction);
    cond.prompts = Tensor2(0, m.config.width);
    if (opt.use_codebook) {
        cond.query = encode_query_detailed(m, x.instruction);
        cond.selection = select_for_query(cb, cond.query->query, opt);
        cond.prompts = Tensor2(cond.selection.size(), m.config.width);
        for (std::size_t i = 0; i < cond.selection.size(); ++i) {
            const auto st = straight_through_prompt(cond.query->query, cb.prompt(cond.selection.indices[i]));
            std::copy(st.value.begin(), st.value.end(), cond.prompts.row(i).begin());
        }
    }
    cond.rows = assemble_sequence(cond.vision, cond.text, cond.prompts, m.config.policy);
    return cond;
}

/// Loss for one instance. With `grads`/`grad_codebook` non-null, gradients
/// scaled by grad_scale are accumulated there.
inline PipelineLoss pipeline_loss(const ModelState& m, const ToolCodebook& cb, const Instance& x,
                                  const PipelineOptions& opt, ModelState* grads = nullptr,
                                  ToolCodebook* grad_codebook = nullptr, double grad_scale = 1.0) {
    const auto cond = build_conditioning(m, cb, x, opt);
    PipelineLoss out;
    out.selection = cond.selection;
    const auto lm = decode_lm_loss(m, cond.rows, x.target, grads, grad_scale);
    out.lm = lm.loss;
    out.total = lm.loss;

    std::optional<VqLosses> vq;
    if (opt.use_codebook) {
        vq = vq_losses(cond.query->query, cond.selection, cb, opt.lambda1, opt.lambda2);
        out.quantization = vq->quantization;
        out.commitment = vq->commitment;
        out.total += vq->loss;
    }
    if (!grads) return out;

    const auto layout = block_layout(m.config.policy, cond.vision.rows(), cond.text.rows(), cond.prompts.rows());
    auto slice = [&](std::size_t offset, std::size_t n) {
        Tensor2 t(n, m.config.width);
        for (std::size_t r = 0; r < n; ++r) {
            std::copy(lm.grad_conditioning.row(offset + r).begin(), lm.grad_conditioning.row(offset + r).end(),
                      t.row(r).begin());
        }
        return t;
    };
    backward_project_visual(*grads, x.visual_raw, slice(layout.vision, cond.vision.rows()));
    backward_embed_text(*grads, x.instruction, slice(layout.text, cond.text.rows()));

    if (opt.use_codebook) {
        std::vector<double> grad_query(m.config.width, 0.0);
        if (opt.straight_through) {
            const Tensor2 grad_prompts = slice(layout.prompt, cond.prompts.rows());
            for (std::size_t i = 0; i < grad_prompts.rows(); ++i) StraightThrough::backward(grad_prompts.row(i), grad_query);
        }
        axpy(grad_scale, vq->grad_query, grad_query);
        backward_encode_query(*grads, x.instruction, *cond.query, grad_query);
        if (grad_codebook) accumulate_row_grads(*grad_codebook, cond.selection, vq->grad_rows, grad_scale);
    }
    return out;
}

}  // namespace colt
