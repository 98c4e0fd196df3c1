#pragma once

// Tool-call scoring and the continual-learning summaries: average accuracy
// AA_k, per-tool forgetting f_j^k and average forgetting AF_k over a
// lower-triangular accuracy matrix a(k, j). Indices are 1-based throughout.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "colt/dataset.hpp"
#include "colt/error.hpp"

namespace colt {

enum class ScoreMode { name_only, strict };

/// 1 when the predicted calls match the reference as a multiset (names only,
/// or names plus parameter maps in strict mode); order never matters.
inline bool tool_call_correct(const std::vector<ToolCall>& predicted, const std::vector<ToolCall>& reference,
                              ScoreMode mode) {
    if (predicted.size() != reference.size()) return false;
    auto key = [mode](const ToolCall& c) {
        std::string k = c.api_name;
        if (mode == ScoreMode::strict) {
            for (const auto& [name, value] : c.api_params) k += '\x1f' + name + '\x1e' + value;
        }
        return k;
    };
    std::vector<std::string> a, b;
    for (const auto& c : predicted) a.push_back(key(c));
    for (const auto& c : reference) b.push_back(key(c));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

/// Mean of tool_call_correct over a split.
inline double tool_call_accuracy(const std::vector<std::vector<ToolCall>>& predicted,
                                 const std::vector<std::vector<ToolCall>>& reference, ScoreMode mode) {
    if (predicted.size() != reference.size()) fail(ErrorKind::shape, "prediction/reference count mismatch");
    if (reference.empty()) fail(ErrorKind::domain, "tool_call_accuracy over an empty split");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < reference.size(); ++i) hits += tool_call_correct(predicted[i], reference[i], mode);
    return static_cast<double>(hits) / static_cast<double>(reference.size());
}

class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t steps) : steps_(steps), cells_(steps * steps) {}

    std::size_t steps() const noexcept { return steps_; }

    void set(std::size_t k, std::size_t j, double accuracy) {
        check_index(k, j);
        if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
            fail(ErrorKind::domain, "accuracy " + std::to_string(accuracy) + " outside [0, 1]");
        }
        cells_[offset(k, j)] = accuracy;
    }

    bool has(std::size_t k, std::size_t j) const {
        check_index(k, j);
        return cells_[offset(k, j)].has_value();
    }

    double at(std::size_t k, std::size_t j) const {
        check_index(k, j);
        const auto& c = cells_[offset(k, j)];
        if (!c) fail(ErrorKind::incomplete_matrix, "a(" + std::to_string(k) + "," + std::to_string(j) + ") missing");
        return *c;
    }

    bool row_complete(std::size_t k) const {
        for (std::size_t j = 1; j <= k; ++j) {
            if (!has(k, j)) return false;
        }
        return true;
    }

    bool complete() const {
        for (std::size_t k = 1; k <= steps_; ++k) {
            if (!row_complete(k)) return false;
        }
        return steps_ > 0;
    }

    friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;

private:
    void check_index(std::size_t k, std::size_t j) const {
        if (k < 1 || k > steps_ || j < 1 || j > k) {
            fail(ErrorKind::index, "a(" + std::to_string(k) + "," + std::to_string(j) + ") outside the lower triangle of " +
                                       std::to_string(steps_) + " steps");
        }
    }
    std::size_t offset(std::size_t k, std::size_t j) const { return (k - 1) * steps_ + (j - 1); }

    std::size_t steps_ = 0;
    std::vector<std::optional<double>> cells_;
};

inline double average_accuracy(const AccuracyMatrix& a, std::size_t k) {
    if (k < 1 || k > a.steps()) fail(ErrorKind::index, "AA_k: k out of range");
    double sum = 0.0;
    for (std::size_t j = 1; j <= k; ++j) sum += a.at(k, j);
    return sum / static_cast<double>(k);
}

/// Drop from the best accuracy on tool j seen at steps j..k-1 to a(k, j).
/// Negative values (backward transfer) are returned as-is.
inline double forgetting(const AccuracyMatrix& a, std::size_t k, std::size_t j) {
    if (j >= k) fail(ErrorKind::domain, "forgetting needs j < k (got j=" + std::to_string(j) + ", k=" + std::to_string(k) + ")");
    double best = a.at(j, j);
    for (std::size_t l = j + 1; l < k; ++l) best = std::max(best, a.at(l, j));
    return best - a.at(k, j);
}

inline double average_forgetting(const AccuracyMatrix& a, std::size_t k) {
    if (k < 2) fail(ErrorKind::undefined_metric, "AF_k is undefined for k < 2");
    double sum = 0.0;
    for (std::size_t j = 1; j < k; ++j) sum += forgetting(a, k, j);
    return sum / static_cast<double>(k - 1);
}

struct MetricsReport {
    std::vector<double> average_accuracy;                 // AA_1 .. AA_T
    std::vector<std::optional<double>> average_forgetting;  // AF_1 (undefined) .. AF_T
    double aa_final = 0.0;
    std::optional<double> af_final;
    std::vector<std::vector<double>> tool_curves;          // tool_curves[j-1] = a(j..T, j)
};

inline MetricsReport metrics_report(const AccuracyMatrix& a) {
    if (!a.complete()) fail(ErrorKind::incomplete_matrix, "accuracy matrix is not complete");
    MetricsReport r;
    const std::size_t t = a.steps();
    for (std::size_t k = 1; k <= t; ++k) {
        r.average_accuracy.push_back(average_accuracy(a, k));
        r.average_forgetting.push_back(k >= 2 ? std::optional<double>(average_forgetting(a, k)) : std::nullopt);
    }
    r.aa_final = r.average_accuracy.back();
    r.af_final = r.average_forgetting.back();
    for (std::size_t j = 1; j <= t; ++j) {
        std::vector<double> curve;
        for (std::size_t k = j; k <= t; ++k) curve.push_back(a.at(k, j));
        r.tool_curves.push_back(std::move(curve));
    }
    return r;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest decimal form that parses back to the same double.
inline std::string format_real(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline double parse_real(const std::string& s) {
    double x = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) fail(ErrorKind::parse, "bad number '" + s + "'");
    return x;
}

inline constexpr const char* kUndefined = "NA";

/// Matrix rows `k,j,accuracy`, a blank line, then the `AA_final,AF_final` block.
inline std::string metrics_csv(const AccuracyMatrix& a) {
    const auto r = metrics_report(a);
    std::string out = "k,j,accuracy\n";
    for (std::size_t k = 1; k <= a.steps(); ++k) {
        for (std::size_t j = 1; j <= k; ++j) {
            out += std::to_string(k) + "," + std::to_string(j) + "," + format_real(a.at(k, j)) + "\n";
        }
    }
    out += "\nAA_final,AF_final\n";
    out += format_real(r.aa_final) + "," + (r.af_final ? format_real(*r.af_final) : kUndefined) + "\n";
    return out;
}

/// Reads the matrix block of a metrics CSV; the summary block is recomputed, not trusted.
inline AccuracyMatrix parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "k,j,accuracy") fail(ErrorKind::parse, "metrics CSV lacks header");
    std::vector<std::tuple<std::size_t, std::size_t, double>> cells;
    std::size_t steps = 0;
    while (std::getline(in, line) && !line.empty()) {
        std::istringstream fields(line);
        std::string k, j, acc;
        if (!std::getline(fields, k, ',') || !std::getline(fields, j, ',') || !std::getline(fields, acc)) {
            fail(ErrorKind::parse, "bad metrics row '" + line + "'");
        }
        const auto kk = static_cast<std::size_t>(parse_real(k));
        cells.emplace_back(kk, static_cast<std::size_t>(parse_real(j)), parse_real(acc));
        steps = std::max(steps, kk);
    }
    AccuracyMatrix a(steps);
    for (const auto& [k, j, v] : cells) a.set(k, j, v);
    return a;
}

/// Human-readable matrix plus AA/AF per step.
inline std::string metrics_table(const AccuracyMatrix& a) {
    const auto r = metrics_report(a);
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << "step";
    for (std::size_t j = 1; j <= a.steps(); ++j) os << "  tool" << j;
    os << "     AA     AF\n";
    for (std::size_t k = 1; k <= a.steps(); ++k) {
        os << std::setw(4) << k;
        for (std::size_t j = 1; j <= a.steps(); ++j) {
            if (j <= k) {
                os << "  " << std::setw(5) << a.at(k, j);
            } else {
                os << "      -";
            }
        }
        os << "  " << std::setw(5) << r.average_accuracy[k - 1] << "  ";
        if (r.average_forgetting[k - 1]) {
            os << std::setw(5) << *r.average_forgetting[k - 1];
        } else {
            os << std::setw(5) << kUndefined;
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace colt
