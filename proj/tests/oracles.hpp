#pragma once

// Test-only reference computations. Nothing here calls a backward pass; the
// gradient oracles are finite differences of forward-only surrogates.

#include <functional>
#include <vector>

#include "colt/model.hpp"

namespace oracles {

/// The pipeline objective with every stop-gradient frozen at an anchor point.
/// Its true gradient, evaluated at the anchor, is what the straight-through
/// estimator and the stop-gradient routing claim to compute:
///   prompt_i = q(probe) + (P_i(anchor) - q(anchor))
///   Lq = mean ||q(anchor) - P_i(probe)||^2
///   Lc = mean ||q(probe) - P_i(anchor)||^2
inline double surrogate_objective(const colt::ModelState& probe, const colt::ToolCodebook& probe_cb,
                                  const colt::ModelState& anchor, const colt::ToolCodebook& anchor_cb,
                                  const colt::Instance& x, const std::vector<std::size_t>& rows, double lambda1,
                                  double lambda2, bool straight_through) {
    using namespace colt;
    const std::size_t c = probe.config.width;
    const auto q = encode_query(probe, x.instruction);
    const auto q0 = encode_query(anchor, x.instruction);
    Tensor2 prompts(rows.size(), c);
    double lq = 0.0, lc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto p0 = anchor_cb.prompt(rows[i]);
        const auto p = probe_cb.prompt(rows[i]);
        for (std::size_t j = 0; j < c; ++j) {
            prompts(i, j) = straight_through ? q[j] + (p0[j] - q0[j]) : p0[j];
            lq += (q0[j] - p[j]) * (q0[j] - p[j]);
            lc += (q[j] - p0[j]) * (q[j] - p0[j]);
        }
    }
    const double k = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    const auto cond = assemble_sequence(project_visual(probe, x.visual_raw), embed_text(probe, x.instruction),
                                        prompts, probe.config.policy);
    return decode_lm_loss(probe, cond, x.target).loss + lambda1 * lq / k + lambda2 * lc / k;
}

/// Central-difference gradient of the surrogate wrt one model parameter.
inline std::vector<double> surrogate_grad(const colt::ModelState& anchor, const colt::ToolCodebook& anchor_cb,
                                          colt::Param colt::ModelState::*member, const colt::Instance& x,
                                          const std::vector<std::size_t>& rows, double lambda1, double lambda2,
                                          bool straight_through, double h = 1e-5) {
    using namespace colt;
    return finite_difference_grad(
        [&](std::span<const double> v) {
            ModelState probe = anchor;
            std::copy(v.begin(), v.end(), (probe.*member).value.flat().begin());
            return surrogate_objective(probe, anchor_cb, anchor, anchor_cb, x, rows, lambda1, lambda2,
                                       straight_through);
        },
        (anchor.*member).value.data(), h);
}

inline std::vector<double> surrogate_codebook_grad(const colt::ModelState& anchor, const colt::ToolCodebook& anchor_cb,
                                                   const colt::Instance& x, const std::vector<std::size_t>& rows,
                                                   double lambda1, double lambda2, bool straight_through,
                                                   double h = 1e-5) {
    using namespace colt;
    return finite_difference_grad(
        [&](std::span<const double> v) {
            ToolCodebook probe = anchor_cb;
            std::copy(v.begin(), v.end(), probe.prompts.value.flat().begin());
            return surrogate_objective(anchor, probe, anchor, anchor_cb, x, rows, lambda1, lambda2, straight_through);
        },
        anchor_cb.prompts.value.data(), h);
}

}  // namespace oracles
