#include <gtest/gtest.h>

#include <cmath>

#include "colt/model.hpp"
#include "model_fixtures.hpp"
#include "test_support.hpp"

using namespace colt;
using fixtures::ParamMember;

namespace {

/// Finite-difference gradient of `objective` wrt one model parameter.
std::vector<double> fd_param(const ModelState& base, ParamMember member,
                             const std::function<double(const ModelState&)>& objective, double h = 1e-5) {
    const auto x0 = (base.*member).value.data();
    return finite_difference_grad(
        [&](std::span<const double> x) {
            ModelState probe = base;
            std::copy(x.begin(), x.end(), (probe.*member).value.flat().begin());
            return objective(probe);
        },
        x0, h);
}

void zero_all(ModelState& m) {
    for_each_param(m, [](const char*, Param& p) { p.zero_grad(); });
}

}  // namespace

TEST(Vocab, BuildAndLines) {
    const auto v = Vocab::build({"asr", "video-object-segmentation"}, {"Please segment the objects.", "asr output: done"});
    EXPECT_EQ(v.token(v.bos()), "<bos>");
    EXPECT_EQ(v.bos(), 1u);
    EXPECT_EQ(v.eos(), 2u);
    EXPECT_TRUE(v.contains("video-object-segmentation"));
    EXPECT_TRUE(v.contains("segment"));
    EXPECT_TRUE(v.contains("."));
    EXPECT_EQ(Vocab::from_lines(v.to_lines()), v);
    expect_error(ErrorKind::schema, [] { Vocab::from_lines("a\nb\n"); });
}

TEST(Vocab, StrictVersusLenientEncoding) {
    const auto v = Vocab::build({}, {"hello world"});
    EXPECT_EQ(v.encode("Hello there", false), (std::vector<std::size_t>{v.id("hello"), v.unk()}));
    expect_error(ErrorKind::schema, [&] { v.encode("Hello there", true); });
}

TEST(Tokenize, KeepsToolNamesWhole) {
    EXPECT_EQ(tokenize("Run action-recognition+asr, please."),
              (std::vector<std::string>{"run", "action-recognition+asr", ",", "please", "."}));
}

TEST(ProjectVisual, ZeroAndIdentity) {
    auto cfg = fixtures::tiny_config(6, 3);
    auto m = init_model(cfg, 1);
    Rng rng(2);
    const auto x = gaussian_tensor(2, 3, 1.0, rng);
    m.projector_weight.value.fill(0.0);
    const auto zero = project_visual(m, x);
    for (double v : zero.flat()) EXPECT_EQ(v, 0.0);
    m.projector_weight.value = Tensor2::identity(3);
    EXPECT_EQ(project_visual(m, x), x);
    expect_error(ErrorKind::shape, [&] { project_visual(m, Tensor2(2, 4)); });
}

TEST(EmbedText, LookupAndErrors) {
    const auto m = init_model(fixtures::tiny_config(6, 4), 3);
    EXPECT_EQ(embed_text(m, {}).rows(), 0u);
    const std::vector<std::size_t> one{4};
    const auto e = embed_text(m, one);
    EXPECT_TRUE(std::equal(e.row(0).begin(), e.row(0).end(), m.token_embedding.value.row(4).begin()));
    const std::vector<std::size_t> bad{6};
    expect_error(ErrorKind::index, [&] { embed_text(m, bad); });
}

TEST(EmbedText, GradientCountsOccurrences) {
    auto m = init_model(fixtures::tiny_config(6, 4), 3);
    const std::vector<std::size_t> ids{3, 5, 3, 3};
    Tensor2 ones(ids.size(), 4, 1.0);
    backward_embed_text(m, ids, ones);  // d/dE of sum of all entries
    for (std::size_t r = 0; r < 6; ++r) {
        const double expected = r == 3 ? 3.0 : (r == 5 ? 1.0 : 0.0);
        for (double g : m.token_embedding.grad.row(r)) EXPECT_EQ(g, expected);
    }
}

TEST(EncodeQuery, IdentityWeightAndRepeatedToken) {
    auto m = init_model(fixtures::tiny_config(8, 4), 5);
    m.query_weight.value = Tensor2::identity(4);
    const std::vector<std::size_t> ids{6, 6, 6};
    const auto q = encode_query(m, ids);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(q[i], m.query_embedding.value(6, i), 1e-15);
}

TEST(EncodeQuery, PermutationInvariantAndEmptyIsError) {
    const auto m = fixtures::random_model(fixtures::tiny_config(8, 4), 5);
    const std::vector<std::size_t> a{3, 4, 7}, b{7, 3, 4};
    const auto qa = encode_query(m, a), qb = encode_query(m, b);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(qa[i], qb[i], 1e-15);
    expect_error(ErrorKind::degenerate, [&] { encode_query(m, {}); });
}

TEST(EncodeQuery, WeightGradientThroughCommitmentLoss) {
    const auto cfg = fixtures::tiny_config(8, 4);
    auto m = fixtures::random_model(cfg, 9);
    const auto cb = init_codebook(5, 4, 2);
    const std::vector<std::size_t> ids{3, 4, 6};
    const auto enc = encode_query_detailed(m, ids);
    const auto sel = select_topk(cb, enc.query, 2);
    const auto vq = vq_losses(enc.query, sel, cb, 1.0, 0.25);
    zero_all(m);
    backward_encode_query(m, ids, enc, vq.grad_query);
    const auto objective = [&](const ModelState& p) {
        return 0.25 * vq_losses(encode_query(p, ids), sel, cb, 1.0, 0.25).commitment;
    };
    EXPECT_LT(relative_error(m.query_weight.grad.data(), fd_param(m, &ModelState::query_weight, objective)), 1e-5);
    EXPECT_LT(relative_error(m.query_embedding.grad.data(), fd_param(m, &ModelState::query_embedding, objective)), 1e-5);
}

TEST(AssembleSequence, OrderAndEmptyPrompts) {
    Tensor2 v(2, 2, 1.0), w(3, 2, 2.0), p(3, 2, 3.0);
    const auto seq = assemble_sequence(v, w, p, PositionPolicy::vision_text_tool);
    ASSERT_EQ(seq.rows(), 8u);
    const std::vector<double> expected{1, 1, 2, 2, 2, 3, 3, 3};
    for (std::size_t r = 0; r < 8; ++r) EXPECT_EQ(seq(r, 0), expected[r]);

    const auto no_tools = assemble_sequence(v, w, Tensor2(0, 2), PositionPolicy::vision_text_tool);
    EXPECT_EQ(no_tools.rows(), 5u);

    const auto first = assemble_sequence(v, w, p, PositionPolicy::tool_vision_text);
    EXPECT_EQ(first(0, 0), 3.0);
    EXPECT_EQ(first(3, 0), 1.0);
    const auto middle = assemble_sequence(v, w, p, PositionPolicy::vision_tool_text);
    EXPECT_EQ(middle(2, 0), 3.0);
    EXPECT_EQ(middle(5, 0), 2.0);

    // Same multiset of rows under every policy.
    for (auto pol : {PositionPolicy::tool_vision_text, PositionPolicy::vision_tool_text}) {
        auto a = assemble_sequence(v, w, p, pol).data();
        auto b = seq.data();
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
    }
    expect_error(ErrorKind::shape, [&] { assemble_sequence(v, Tensor2(1, 3), p, PositionPolicy::vision_text_tool); });
}

TEST(DecodeLmLoss, ZeroDecoderIsUniform) {
    auto cfg = fixtures::tiny_config(4, 3);
    auto m = init_model(cfg, 1);
    m.output_weight.value.fill(0.0);
    Rng rng(1);
    const auto cond = gaussian_tensor(3, 3, 1.0, rng);
    const std::vector<std::size_t> target{3, 0, 2};
    EXPECT_NEAR(decode_lm_loss(m, cond, target).loss, std::log(4.0), 1e-12);
}

TEST(DecodeLmLoss, SaturatedSingleToken) {
    auto m = init_model(fixtures::tiny_config(4, 3), 1);
    m.output_weight.value.fill(0.0);
    m.output_bias.value(0, 2) = 30.0;
    const std::vector<std::size_t> target{2};
    EXPECT_LT(decode_lm_loss(m, Tensor2(2, 3, 0.5), target).loss, 1e-9);
    expect_error(ErrorKind::degenerate, [&] { decode_lm_loss(m, Tensor2(2, 3), {}); });
}

TEST(DecodeLmLoss, AllGradientsMatchFiniteDifferences) {
    const auto cfg = fixtures::tiny_config(6, 4);
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        auto m = fixtures::random_model(cfg, 100 + trial);
        const auto x = fixtures::random_instance(cfg, 3, 3, rng);
        const auto cond = gaussian_tensor(4, 4, 1.0, rng);
        zero_all(m);
        const auto lm = decode_lm_loss(m, cond, x.target, &m, 1.0);
        for (auto [name, member] : fixtures::all_model_params()) {
            if (std::string(name).rfind("decoder.", 0) != 0) continue;
            const auto fd = fd_param(m, member, [&](const ModelState& p) { return decode_lm_loss(p, cond, x.target).loss; });
            EXPECT_LT(relative_error((m.*member).grad.data(), fd), 1e-5) << name;
        }
        const auto fd_cond = finite_difference_grad(
            [&](std::span<const double> c) {
                return decode_lm_loss(m, Tensor2(4, 4, std::vector<double>(c.begin(), c.end())), x.target).loss;
            },
            cond.data(), 1e-5);
        EXPECT_LT(relative_error(lm.grad_conditioning.data(), fd_cond), 1e-5);
    }
}

TEST(DecodeLmLoss, DuplicatedConditioningRowsLeaveLossUnchanged) {
    auto m = fixtures::random_model(fixtures::tiny_config(6, 2), 4);
    // Dyadic rationals keep both means exact.
    Tensor2 cond(2, 2, std::vector<double>{0.5, -1.25, 2.0, 0.75});
    Tensor2 doubled(4, 2, std::vector<double>{0.5, -1.25, 2.0, 0.75, 0.5, -1.25, 2.0, 0.75});
    const std::vector<std::size_t> target{3, 4, 2};
    EXPECT_EQ(decode_lm_loss(m, cond, target).loss, decode_lm_loss(m, doubled, target).loss);
}

TEST(Generate, ForcedEosAndDeterminism) {
    auto m = fixtures::random_model(fixtures::tiny_config(6, 3), 8);
    m.output_weight.value.fill(0.0);
    m.output_bias.value.fill(0.0);
    m.output_bias.value(0, m.config.eos_id) = 5.0;
    EXPECT_EQ(generate(m, Tensor2(2, 3, 1.0), 10), std::vector<std::size_t>{m.config.eos_id});

    auto r = fixtures::random_model(fixtures::tiny_config(6, 3), 9);
    Rng rng(3);
    const auto cond = gaussian_tensor(3, 3, 1.0, rng);
    EXPECT_EQ(generate(r, cond, 7), generate(r, cond, 7));
    EXPECT_LE(generate(r, cond, 7).size(), 7u);
    expect_error(ErrorKind::domain, [&] { generate(r, cond, 0); });
}

TEST(Generate, TiesGoToLowestId) {
    auto m = fixtures::random_model(fixtures::tiny_config(6, 3), 8);
    m.output_weight.value.fill(0.0);
    m.output_bias.value.fill(1.0);
    EXPECT_EQ(generate(m, Tensor2(1, 3, 1.0), 3), (std::vector<std::size_t>{0, 0, 0}));
}

TEST(Overfit, SingleInstanceLossFallsAndTargetIsReproduced) {
    const auto cfg = fixtures::tiny_config(10, 6, 16);
    auto m = init_model(cfg, 21);
    const auto cb = init_codebook(4, 6, 1);
    Rng rng(5);
    auto x = fixtures::random_instance(cfg, 3, 5, rng);
    PipelineOptions opt;
    double prev = pipeline_loss(m, cb, x, opt).lm;
    for (int step = 0; step < 400; ++step) {
        zero_all(m);
        ToolCodebook scratch = cb;
        const auto loss = pipeline_loss(m, cb, x, opt, &m, &scratch, 1.0);
        if (step < 100) {
            EXPECT_LE(loss.lm, prev + 1e-12) << "step " << step;
        }
        prev = loss.lm;
        for_each_param(m, [](const char*, Param& p) { adamw_step(p, 0.01); });
    }
    EXPECT_LT(pipeline_loss(m, cb, x, opt).lm, 0.05);
    const auto cond = build_conditioning(m, cb, x, opt);
    EXPECT_EQ(generate(m, cond.rows, x.target.size() + 3), x.target);
}

TEST(Pipeline, EmptyPromptSetEqualsPlainLmLoss) {
    const auto cfg = fixtures::tiny_config(8, 4);
    const auto m = fixtures::random_model(cfg, 13);
    const auto cb = init_codebook(5, 4, 13);
    Rng rng(13);
    const auto x = fixtures::random_instance(cfg, 3, 4, rng);
    PipelineOptions with_codebook;
    with_codebook.use_codebook = true;
    with_codebook.top_k = 0;
    with_codebook.lambda1 = with_codebook.lambda2 = 0.0;
    const auto cond = assemble_sequence(project_visual(m, x.visual_raw), embed_text(m, x.instruction), Tensor2(0, 4),
                                        PositionPolicy::vision_text_tool);
    EXPECT_EQ(pipeline_loss(m, cb, x, with_codebook).total, decode_lm_loss(m, cond, x.target).loss);
    EXPECT_EQ(pipeline_loss(m, cb, x, PipelineOptions{}).total, decode_lm_loss(m, cond, x.target).loss);
}
