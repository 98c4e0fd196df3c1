#pragma once

// Dense row-major matrices, a handful of differentiable primitives with
// hand-written gradients, AdamW and a cosine-decay learning-rate schedule.
// Everything is 64-bit; the gradient checks in tests rely on it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "colt/error.hpp"

namespace colt {

inline constexpr double kNormEpsilon = 1e-12;

class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            fail(ErrorKind::shape, "tensor data length " + std::to_string(data_.size()) +
                                       " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static Tensor2 identity(std::size_t n) {
        Tensor2 t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor2& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
    }

    friend bool operator==(const Tensor2&, const Tensor2&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// A trainable tensor with its gradient buffer and AdamW moments.
struct Param {
    Tensor2 value;
    Tensor2 grad;
    Tensor2 first_moment;
    Tensor2 second_moment;
    std::uint64_t step = 0;
    bool trainable = true;

    Param() = default;
    explicit Param(Tensor2 v)
        : value(std::move(v)),
          grad(value.rows(), value.cols()),
          first_moment(value.rows(), value.cols()),
          second_moment(value.rows(), value.cols()) {}

    void zero_grad() { grad.fill(0.0); }
    void reset_optimizer() {
        first_moment.fill(0.0);
        second_moment.fill(0.0);
        step = 0;
    }
};

// ---------------------------------------------------------------------------
// Deterministic random numbers. Only the raw mt19937_64 stream is used (its
// output is fixed by the standard); the distributions are written out here so
// corpora and runs are reproducible across standard libraries.

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) fail(ErrorKind::domain, "Rng::index with n == 0");
        return static_cast<std::size_t>(engine_() % n);
    }

    /// Standard normal via Box-Muller (one draw per call, no caching).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void restore(const std::string& state) {
        std::istringstream is(state);
        is >> engine_;
        if (!is) fail(ErrorKind::integrity, "bad RNG state");
    }

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

/// Mixes a string into a 64-bit seed (FNV-1a), used to derive per-item streams.
inline std::uint64_t hash_mix(std::uint64_t seed, std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline Tensor2 gaussian_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Tensor2 t(rows, cols);
    for (double& x : t.flat()) x = stddev * rng.normal();
    return t;
}

// ---------------------------------------------------------------------------
// Vector helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        fail(ErrorKind::shape, "cosine_similarity: lengths " + std::to_string(u.size()) + " and " +
                                   std::to_string(v.size()));
    }
    const double nu = norm(u);
    const double nv = norm(v);
    if (!(nu > kNormEpsilon) || !(nv > kNormEpsilon)) {
        fail(ErrorKind::degenerate, "cosine_similarity: zero-norm vector");
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

struct CrossEntropy {
    double loss = 0.0;
    std::vector<double> grad;  // softmax(logits) - onehot(target)
};

inline CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t target) {
    if (logits.size() < 2) fail(ErrorKind::shape, "softmax_cross_entropy needs at least 2 logits");
    if (target >= logits.size()) {
        fail(ErrorKind::index, "target " + std::to_string(target) + " out of range for " +
                                   std::to_string(logits.size()) + " logits");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    CrossEntropy out;
    out.grad.resize(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.grad[i] = std::exp(logits[i] - max_logit);
        denom += out.grad[i];
    }
    for (double& p : out.grad) p /= denom;
    out.loss = std::log(denom) - (logits[target] - max_logit);
    out.grad[target] -= 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// One decoupled-weight-decay Adam step. Frozen params are left untouched.
inline void adamw_step(Param& param, double lr, const AdamWConfig& cfg = {}) {
    if (!param.trainable) return;
    if (!param.grad.all_finite()) fail(ErrorKind::diverged, "non-finite gradient");

    param.step += 1;
    const double t = static_cast<double>(param.step);
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);

    auto value = param.value.flat();
    auto grad = param.grad.flat();
    auto m = param.first_moment.flat();
    auto v = param.second_moment.flat();
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        value[i] -= lr * cfg.weight_decay * value[i];
        value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    param.zero_grad();
}

struct LrSchedule {
    double base_lr = 1e-3;
    std::size_t total_steps = 1;
    std::size_t warmup_steps = 0;
};

/// Linear warmup, then half-cosine from base_lr down to 0 at total_steps.
inline double cosine_decay_lr(const LrSchedule& schedule, std::size_t step) {
    if (step > schedule.total_steps) {
        fail(ErrorKind::schedule_exhausted, "step " + std::to_string(step) + " > total " +
                                                std::to_string(schedule.total_steps));
    }
    if (step < schedule.warmup_steps) {
        return schedule.base_lr * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
    }
    const std::size_t span = schedule.total_steps - schedule.warmup_steps;
    if (span == 0) return schedule.base_lr;
    const double t = static_cast<double>(step - schedule.warmup_steps) / static_cast<double>(span);
    return 0.5 * schedule.base_lr * (1.0 + std::cos(std::numbers::pi * t));
}

/// Central differences; the reference every analytic gradient is tested against.
inline std::vector<double> finite_difference_grad(const std::function<double(std::span<const double>)>& f,
                                                  std::span<const double> x, double h) {
    if (!(h >= 1e-7 && h <= 1e-3)) fail(ErrorKind::domain, "finite-difference step outside [1e-7, 1e-3]");
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double up = f(probe);
        probe[i] = saved - h;
        const double down = f(probe);
        probe[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            fail(ErrorKind::oracle_failure, "objective not finite at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// ||a - b|| / max(||a||, ||b||), with 0 returned when both are zero.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
    const double scale = std::max(norm(a), norm(b));
    if (scale == 0.0) return 0.0;
    return std::sqrt(diff) / scale;
}

}  // namespace colt
