#pragma once

// Learnable tool codebook: N prompt vectors of width C, retrieved by top-K
// cosine similarity against the query embedding and trained with the
// quantization/commitment pair plus a straight-through path to the query.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "colt/error.hpp"
#include "colt/numerics.hpp"

namespace colt {

struct ToolCodebook {
    Param prompts;  // N x C, one tool prompt per row

    std::size_t size() const noexcept { return prompts.value.rows(); }
    std::size_t width() const noexcept { return prompts.value.cols(); }
    std::span<const double> prompt(std::size_t n) const { return prompts.value.row(n); }
};

struct Selection {
    std::vector<std::size_t> indices;  // K distinct rows, best first
    std::vector<double> similarities;  // non-increasing
    std::vector<double> query;

    std::size_t size() const noexcept { return indices.size(); }
};

/// Rows ~ N(0, 1/C) then renormalized to unit length.
inline ToolCodebook init_codebook(std::size_t n, std::size_t c, std::uint64_t seed) {
    if (n == 0 || c == 0) fail(ErrorKind::shape, "codebook needs N, C >= 1");
    Rng rng(seed);
    Tensor2 rows = gaussian_tensor(n, c, 1.0 / std::sqrt(static_cast<double>(c)), rng);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = rows.row(i);
        double len = norm(r);
        while (!(len > kNormEpsilon)) {
            for (double& x : r) x = rng.normal();
            len = norm(r);
        }
        for (double& x : r) x /= len;
    }
    return ToolCodebook{Param(std::move(rows))};
}

/// Top-K rows by cosine similarity; equal scores go to the lower row index.
inline Selection select_topk(const ToolCodebook& codebook, std::span<const double> query, std::size_t k) {
    const std::size_t n = codebook.size();
    if (k > n) {
        fail(ErrorKind::capacity, "requested K=" + std::to_string(k) + " from a codebook of " + std::to_string(n));
    }
    if (query.size() != codebook.width()) fail(ErrorKind::shape, "query width != codebook width");
    if (!(norm(query) > kNormEpsilon)) fail(ErrorKind::degenerate, "zero-norm query");

    std::vector<double> sims(n);
    for (std::size_t i = 0; i < n; ++i) sims[i] = cosine_similarity(query, codebook.prompt(i));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (sims[a] != sims[b]) return sims[a] > sims[b];
                          return a < b;
                      });

    Selection sel;
    sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t idx : sel.indices) sel.similarities.push_back(sims[idx]);
    sel.query.assign(query.begin(), query.end());
    return sel;
}

struct VqLosses {
    double loss = 0.0;          // lambda1 * quantization + lambda2 * commitment
    double quantization = 0.0;  // mean_k ||sg[q] - P_k||^2
    double commitment = 0.0;    // mean_k ||q - sg[P_k]||^2
    std::vector<double> grad_query;  // from the commitment term only
    Tensor2 grad_rows;               // K x C, from the quantization term only; row i <-> selection.indices[i]
};

/// Both terms are averaged over the K selected prompts. Stop-gradient routing:
/// the quantization term moves only codebook rows, the commitment term moves
/// only the query.
inline VqLosses vq_losses(std::span<const double> query, const Selection& selection, const ToolCodebook& codebook,
                          double lambda1, double lambda2) {
    const std::size_t c = codebook.width();
    if (query.size() != c) fail(ErrorKind::shape, "vq_losses: query width != codebook width");
    const std::size_t k = selection.size();

    VqLosses out;
    out.grad_query.assign(c, 0.0);
    out.grad_rows = Tensor2(k, c);
    if (k == 0) return out;

    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t row = selection.indices[i];
        if (row >= codebook.size()) fail(ErrorKind::index, "selection index outside codebook");
        const auto p = codebook.prompt(row);
        const double d2 = squared_distance(query, p);
        out.quantization += d2 * inv_k;
        out.commitment += d2 * inv_k;
        auto gr = out.grad_rows.row(i);
        for (std::size_t j = 0; j < c; ++j) {
            const double diff = query[j] - p[j];
            gr[j] = -2.0 * diff * lambda1 * inv_k;
            out.grad_query[j] += 2.0 * diff * lambda2 * inv_k;
        }
    }
    out.loss = lambda1 * out.quantization + lambda2 * out.commitment;
    return out;
}

/// Adds per-selection row gradients into the codebook gradient buffer.
inline void accumulate_row_grads(ToolCodebook& codebook, const Selection& selection, const Tensor2& grad_rows,
                                 double scale = 1.0) {
    for (std::size_t i = 0; i < selection.size(); ++i) {
        axpy(scale, grad_rows.row(i), codebook.prompts.grad.row(selection.indices[i]));
    }
}

/// Effective prompt q + sg[P - q]: forward value is P itself, and whatever
/// gradient reaches it is handed to the query unchanged. The codebook row gets
/// nothing from this path.
struct StraightThrough {
    std::vector<double> value;

    /// Routes a downstream gradient to the query gradient buffer.
    static void backward(std::span<const double> downstream, std::span<double> grad_query) {
        axpy(1.0, downstream, grad_query);
    }
};

inline StraightThrough straight_through_prompt(std::span<const double> query, std::span<const double> selected) {
    if (query.size() != selected.size()) fail(ErrorKind::shape, "straight_through_prompt: width mismatch");
    return StraightThrough{std::vector<double>(selected.begin(), selected.end())};
}

}  // namespace colt
