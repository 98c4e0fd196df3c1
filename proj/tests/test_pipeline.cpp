#include <gtest/gtest.h>

#include "colt/model.hpp"
#include "model_fixtures.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace colt;

namespace {

struct Grads {
    ModelState model;
    ToolCodebook codebook;
    PipelineLoss loss;
};

Grads backward(const ModelState& m, const ToolCodebook& cb, const Instance& x, const PipelineOptions& opt) {
    Grads g{m, cb, {}};
    for_each_param(g.model, [](const char*, Param& p) { p.zero_grad(); });
    g.codebook.prompts.zero_grad();
    g.loss = pipeline_loss(m, cb, x, opt, &g.model, &g.codebook, 1.0);
    return g;
}

}  // namespace

TEST(Pipeline, EndToEndGradientsWithFrozenSelection) {
    Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        const auto cfg = fixtures::tiny_config(5 + rng.index(4), 2 + rng.index(5), 3 + rng.index(4));
        const auto m = fixtures::random_model(cfg, 1000 + trial);
        const auto cb = init_codebook(6, cfg.width, 2000 + trial);
        const auto x = fixtures::random_instance(cfg, 1 + rng.index(3), 1 + rng.index(4), rng);
        PipelineOptions opt;
        opt.use_codebook = true;
        opt.top_k = 1 + rng.index(3);
        opt.lambda1 = 1.0;
        opt.lambda2 = 0.25;
        opt.forced_selection = select_topk(cb, encode_query(m, x.instruction), opt.top_k).indices;
        const auto g = backward(m, cb, x, opt);
        for (auto [name, member] : fixtures::all_model_params()) {
            const auto fd = oracles::surrogate_grad(m, cb, member, x, *opt.forced_selection, 1.0, 0.25, true);
            EXPECT_LT(relative_error((g.model.*member).grad.data(), fd), 1e-4) << name;
        }
        const auto fd_cb = oracles::surrogate_codebook_grad(m, cb, x, *opt.forced_selection, 1.0, 0.25, true);
        EXPECT_LT(relative_error(g.codebook.prompts.grad.data(), fd_cb), 1e-5);
    }
}

TEST(Pipeline, ProjectorGradientThroughLmLoss) {
    const auto cfg = fixtures::tiny_config(7, 4);
    const auto m = fixtures::random_model(cfg, 5);
    const auto cb = init_codebook(4, 4, 5);
    Rng rng(5);
    const auto x = fixtures::random_instance(cfg, 2, 3, rng);
    const auto g = backward(m, cb, x, PipelineOptions{});
    const auto fd = oracles::surrogate_grad(m, cb, &ModelState::projector_weight, x, {}, 0.0, 0.0, true);
    EXPECT_LT(relative_error(g.model.projector_weight.grad.data(), fd), 1e-5);
}

TEST(Pipeline, StopGradientRouting) {
    const auto cfg = fixtures::tiny_config(8, 4);
    const auto m = fixtures::random_model(cfg, 6);
    const auto cb = init_codebook(10, 4, 6);
    Rng rng(6);
    const auto x = fixtures::random_instance(cfg, 3, 3, rng);
    PipelineOptions opt;
    opt.use_codebook = true;
    opt.top_k = 3;

    const auto full = backward(m, cb, x, opt);
    for (std::size_t r = 0; r < cb.size(); ++r) {
        const auto& sel = full.loss.selection.indices;
        if (std::find(sel.begin(), sel.end(), r) != sel.end()) continue;
        for (double v : full.codebook.prompts.grad.row(r)) EXPECT_EQ(v, 0.0);
    }

    opt.lambda1 = 0.0;
    const auto no_quant = backward(m, cb, x, opt);
    for (double v : no_quant.codebook.prompts.grad.flat()) EXPECT_EQ(v, 0.0);

    opt.lambda1 = 1.0;
    opt.lambda2 = 0.0;
    opt.straight_through = false;
    const auto no_query = backward(m, cb, x, opt);
    for (double v : no_query.model.query_weight.grad.flat()) EXPECT_EQ(v, 0.0);
    for (double v : no_query.model.query_embedding.grad.flat()) EXPECT_EQ(v, 0.0);
}

TEST(Pipeline, VqWeightsOfZeroReduceToConditionedLmLoss) {
    const auto cfg = fixtures::tiny_config(8, 4);
    const auto m = fixtures::random_model(cfg, 7);
    const auto cb = init_codebook(10, 4, 7);
    Rng rng(7);
    const auto x = fixtures::random_instance(cfg, 3, 3, rng);
    PipelineOptions opt;
    opt.use_codebook = true;
    opt.lambda1 = opt.lambda2 = 0.0;
    const auto loss = pipeline_loss(m, cb, x, opt);
    const auto cond = build_conditioning(m, cb, x, opt);
    EXPECT_EQ(loss.total, decode_lm_loss(m, cond.rows, x.target).loss);
    EXPECT_GT(loss.quantization, 0.0);
}
