#include <gtest/gtest.h>

#include "colt/metrics.hpp"
#include "test_support.hpp"

using namespace colt;

namespace {

// Independent re-derivation on a plain 0-based square array; the upper
// triangle is NaN so any stray read poisons the result.
struct Naive {
    std::vector<std::vector<double>> a;

    double aa(std::size_t k) const {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += a[k - 1][j];
        return s / static_cast<double>(k);
    }
    double f(std::size_t k, std::size_t j) const {
        double best = -1.0;
        for (std::size_t l = 0; l + 1 < k; ++l) {
            if (l + 1 >= j) best = std::max(best, a[l][j - 1]);
        }
        return best - a[k - 1][j - 1];
    }
    double af(std::size_t k) const {
        double s = 0.0;
        for (std::size_t j = 1; j <= k - 1; ++j) s += f(k, j);
        return s / static_cast<double>(k - 1);
    }
};

AccuracyMatrix hand_matrix() {
    AccuracyMatrix a(2);
    a.set(1, 1, 0.8);
    a.set(2, 1, 0.6);
    a.set(2, 2, 0.9);
    return a;
}

}  // namespace

TEST(ToolCallAccuracy, Modes) {
    const ToolCall asr{"asr", {}}, ar{"action-recognition", {}};
    EXPECT_TRUE(tool_call_correct({asr}, {asr}, ScoreMode::name_only));
    EXPECT_TRUE(tool_call_correct({asr}, {asr}, ScoreMode::strict));
    EXPECT_TRUE(tool_call_correct({asr, ar}, {ar, asr}, ScoreMode::name_only));
    EXPECT_TRUE(tool_call_correct({asr, ar}, {ar, asr}, ScoreMode::strict));
    const ToolCall en{"asr", {{"lang", "en"}}}, fr{"asr", {{"lang", "fr"}}};
    EXPECT_TRUE(tool_call_correct({en}, {fr}, ScoreMode::name_only));
    EXPECT_FALSE(tool_call_correct({en}, {fr}, ScoreMode::strict));
    EXPECT_TRUE(tool_call_correct({}, {}, ScoreMode::strict));
    EXPECT_FALSE(tool_call_correct({asr}, {}, ScoreMode::name_only));
    EXPECT_FALSE(tool_call_correct({asr, asr}, {asr, ar}, ScoreMode::name_only));  // multiset, not set
    EXPECT_FALSE(tool_call_correct({ar}, {ar, asr}, ScoreMode::name_only));        // composites all-or-nothing
}

TEST(ToolCallAccuracy, StrictNeverExceedsNameOnly) {
    Rng rng(3);
    const std::vector<std::string> names{"asr", "ocr", "action-recognition"};
    auto random_calls = [&] {
        std::vector<ToolCall> calls(rng.index(3));
        for (auto& c : calls) {
            c.api_name = names[rng.index(names.size())];
            if (rng.index(2)) c.api_params["lang"] = rng.index(2) ? "en" : "fr";
        }
        return calls;
    };
    for (int split = 0; split < 50; ++split) {
        std::vector<std::vector<ToolCall>> pred, ref;
        for (int i = 0; i < 20; ++i) {
            pred.push_back(random_calls());
            ref.push_back(random_calls());
        }
        EXPECT_LE(tool_call_accuracy(pred, ref, ScoreMode::strict), tool_call_accuracy(pred, ref, ScoreMode::name_only));
    }
    expect_error(ErrorKind::domain, [] { tool_call_accuracy({}, {}, ScoreMode::strict); });
}

TEST(Metrics, HandCase) {
    const auto a = hand_matrix();
    EXPECT_EQ(average_accuracy(a, 2), 0.75);
    EXPECT_EQ(average_accuracy(a, 1), 0.8);
    EXPECT_NEAR(forgetting(a, 2, 1), 0.2, 1e-15);
    EXPECT_NEAR(average_forgetting(a, 2), 0.2, 1e-15);
    EXPECT_EQ(average_forgetting(a, 2), 0.8 - 0.6);
}

TEST(Metrics, ConstantMatrix) {
    AccuracyMatrix a(5);
    for (std::size_t k = 1; k <= 5; ++k) {
        for (std::size_t j = 1; j <= k; ++j) a.set(k, j, 0.37);
    }
    for (std::size_t k = 1; k <= 5; ++k) EXPECT_NEAR(average_accuracy(a, k), 0.37, 1e-15);
    for (std::size_t k = 2; k <= 5; ++k) EXPECT_EQ(average_forgetting(a, k), 0.0);
}

TEST(Metrics, BoundariesAndErrors) {
    const auto a = hand_matrix();
    expect_error(ErrorKind::undefined_metric, [&] { average_forgetting(a, 1); });
    expect_error(ErrorKind::domain, [&] { forgetting(a, 2, 2); });
    AccuracyMatrix partial(2);
    partial.set(1, 1, 0.5);
    partial.set(2, 2, 0.5);
    expect_error(ErrorKind::incomplete_matrix, [&] { average_accuracy(partial, 2); });
    expect_error(ErrorKind::incomplete_matrix, [&] { metrics_report(partial); });
    expect_error(ErrorKind::index, [&] { partial.set(1, 2, 0.5); });
    expect_error(ErrorKind::domain, [&] { partial.set(2, 1, 1.5); });
}

TEST(Metrics, BackwardTransferIsNegativeForgetting) {
    AccuracyMatrix a(2);
    a.set(1, 1, 0.4);
    a.set(2, 1, 0.7);
    a.set(2, 2, 0.7);
    EXPECT_NEAR(forgetting(a, 2, 1), -0.3, 1e-15);
}

TEST(Metrics, OracleEquivalenceOnRandomMatrices) {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t t = 1 + rng.index(8);
        AccuracyMatrix a(t);
        Naive naive{std::vector<std::vector<double>>(t, std::vector<double>(t, std::nan("")))};
        for (std::size_t k = 1; k <= t; ++k) {
            for (std::size_t j = 1; j <= k; ++j) {
                const double v = rng.uniform();
                a.set(k, j, v);
                naive.a[k - 1][j - 1] = v;
            }
        }
        for (std::size_t k = 1; k <= t; ++k) {
            const double aa = average_accuracy(a, k);
            ASSERT_NEAR(aa, naive.aa(k), 1e-12);
            ASSERT_GE(aa, 0.0);
            ASSERT_LE(aa, 1.0);
            for (std::size_t j = 1; j < k; ++j) ASSERT_NEAR(forgetting(a, k, j), naive.f(k, j), 1e-12);
            if (k >= 2) {
                const double af = average_forgetting(a, k);
                ASSERT_NEAR(af, naive.af(k), 1e-12);
                ASSERT_GE(af, -1.0);
                ASSERT_LE(af, 1.0);
            }
        }
    }
}

TEST(Metrics, RowOfPastMaximaHasZeroForgetting) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t t = 2 + rng.index(6);
        AccuracyMatrix a(t + 1);
        for (std::size_t k = 1; k <= t; ++k) {
            for (std::size_t j = 1; j <= k; ++j) a.set(k, j, rng.uniform());
        }
        for (std::size_t j = 1; j <= t; ++j) {
            double best = 0.0;
            for (std::size_t l = j; l <= t; ++l) best = std::max(best, a.at(l, j));
            a.set(t + 1, j, best);
        }
        a.set(t + 1, t + 1, rng.uniform());
        for (std::size_t j = 1; j <= t; ++j) EXPECT_EQ(forgetting(a, t + 1, j), 0.0);
    }
}

TEST(MetricsReport, ShapesAndUndefinedAf) {
    AccuracyMatrix one(1);
    one.set(1, 1, 0.9);
    const auto r1 = metrics_report(one);
    EXPECT_EQ(r1.aa_final, 0.9);
    EXPECT_FALSE(r1.af_final.has_value());
    EXPECT_NE(metrics_csv(one).find("0.9,NA"), std::string::npos);

    AccuracyMatrix five(5);
    for (std::size_t k = 1; k <= 5; ++k) {
        for (std::size_t j = 1; j <= k; ++j) five.set(k, j, 0.1 * static_cast<double>(j));
    }
    const auto r5 = metrics_report(five);
    EXPECT_EQ(r5.average_accuracy.size(), 5u);
    EXPECT_EQ(r5.tool_curves.size(), 5u);
    EXPECT_EQ(r5.tool_curves[0].size(), 5u);
    EXPECT_EQ(r5.tool_curves[4].size(), 1u);
}

TEST(MetricsReport, CsvRoundTripIsExact) {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t t = 1 + rng.index(6);
        AccuracyMatrix a(t);
        for (std::size_t k = 1; k <= t; ++k) {
            for (std::size_t j = 1; j <= k; ++j) a.set(k, j, rng.uniform());
        }
        const auto csv = metrics_csv(a);
        EXPECT_EQ(parse_metrics_csv(csv), a);
        EXPECT_EQ(metrics_csv(parse_metrics_csv(csv)), csv);
    }
    const auto hand = metrics_csv(hand_matrix());
    EXPECT_EQ(hand, "k,j,accuracy\n1,1,0.8\n2,1,0.6\n2,2,0.9\n\nAA_final,AF_final\n0.75,0.20000000000000007\n");
    expect_error(ErrorKind::parse, [] { parse_metrics_csv("a,b\n"); });
}

TEST(MetricsReport, Table) {
    const auto table = metrics_table(hand_matrix());
    EXPECT_NE(table.find("0.750"), std::string::npos);
    EXPECT_NE(table.find("NA"), std::string::npos);
}
