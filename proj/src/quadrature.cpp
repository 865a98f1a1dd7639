#include "bgsr/quadrature.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace bgsr::quad {
namespace {

constexpr double kRescale = 1e100;

// Laguerre L_{n-1}(x), L_n(x) by the three-term recurrence, with a running
// log scale so large x does not overflow.
struct LaguerrePair {
    double prev;
    double curr;
    double log_scale;
};

LaguerrePair laguerre_pair(int n, double x) {
    double p0 = 1.0;
    double p1 = 1.0 - x;
    double log_scale = 0.0;
    if (n == 0) return {0.0, 1.0, 0.0};
    for (int k = 1; k < n; ++k) {
        const double p2 = ((2.0 * k + 1.0 - x) * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
        if (std::abs(p1) > kRescale) {
            p0 /= kRescale;
            p1 /= kRescale;
            log_scale += std::log(kRescale);
        }
    }
    return {p0, p1, log_scale};
}

// log of sum_{k<n} L_k(x)^2. The Laguerre polynomials are orthonormal under
// e^{-x}, so the Gauss weight at a node is the reciprocal of this sum.
double log_christoffel_sum(int n, double x) {
    double p0 = 1.0;
    double p1 = 1.0 - x;
    double log_scale = 0.0;
    double sum = 1.0 + (n > 1 ? p1 * p1 : 0.0);
    for (int k = 1; k + 1 < n; ++k) {
        const double p2 = ((2.0 * k + 1.0 - x) * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
        if (std::abs(p1) > kRescale) {
            p0 /= kRescale;
            p1 /= kRescale;
            sum /= kRescale * kRescale;
            log_scale += 2.0 * std::log(kRescale);
        }
        sum += p1 * p1;
    }
    return std::log(sum) + log_scale;
}

Rule build_laguerre(int n) {
    Eigen::VectorXd diag(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 0; k < n; ++k) diag(k) = 2.0 * k + 1.0;
    for (int k = 1; k < n; ++k) sub(k - 1) = k;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    eig.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw std::runtime_error("Laguerre node computation failed");

    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    r.log_weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = eig.eigenvalues()(i);
        // Newton polish: L_n / L_n' = x / (n (1 - L_{n-1}/L_n)).
        for (int it = 0; it < 3; ++it) {
            const auto lp = laguerre_pair(n, x);
            const double step = x / (n * (1.0 - lp.prev / lp.curr));
            if (!std::isfinite(step)) break;
            x -= step;
            if (std::abs(step) <= 1e-16 * x) break;
        }
        const double lw = -log_christoffel_sum(n, x);
        r.nodes[i] = x;
        r.log_weights[i] = lw;
        r.weights[i] = std::exp(lw);
    }
    return r;
}

Rule build_legendre(int n) {
    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    r.log_weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 1; k < n; ++k) {
                const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double step = p1 / dp;
            x -= step;
            if (std::abs(step) < 1e-16) break;
        }
        // Recompute the derivative at the polished node for the weight.
        double p0 = 1.0;
        double p1 = x;
        for (int k = 1; k < n; ++k) {
            const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        r.nodes[i] = x;
        r.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        r.log_weights[i] = std::log(r.weights[i]);
    }
    return r;
}

const Rule& cached(int n, bool laguerre) {
    static std::mutex mu;
    static std::map<std::pair<int, bool>, std::unique_ptr<Rule>> cache;
    if (n < 1) throw std::invalid_argument("quadrature order must be positive");
    std::lock_guard lock(mu);
    auto& slot = cache[{n, laguerre}];
    if (!slot) slot = std::make_unique<Rule>(laguerre ? build_laguerre(n) : build_legendre(n));
    return *slot;
}

template <class AtOrder>
Estimate escalate(AtOrder&& at_order, const Options& opt) {
    double prev = at_order(opt.initial_order);
    int n = opt.initial_order;
    while (n < opt.max_order) {
        n *= 2;
        const double cur = at_order(n);
        if (std::abs(cur - prev) <= opt.rel_tol * std::abs(cur) + opt.abs_tol) return {cur, n, true};
        prev = cur;
    }
    return {prev, n, false};
}

}  // namespace

const Rule& gauss_legendre(int n) { return cached(n, false); }
const Rule& gauss_laguerre(int n) { return cached(n, true); }

Estimate exp_weighted(const std::function<double(double)>& g, double feature, double sharpness,
                      const Options& opt) {
    // Past this point e^{-t} is below 1e-26 and a step there is invisible.
    constexpr double kTailCut = 60.0;
    const bool split = feature > 0.0 && feature < kTailCut;
    const double t0 = split ? feature : 0.0;
    const double stretch = std::max(sharpness, 1.0);

    auto at_order = [&](int n) {
        double head = 0.0;
        if (split) {
            const Rule& leg = gauss_legendre(n);
            const double half = 0.5 * t0;
            for (int i = 0; i < n; ++i) {
                const double t = half * (leg.nodes[i] + 1.0);
                head += leg.weights[i] * g(t) * std::exp(-t);
            }
            head *= half;
        }
        const Rule& lag = gauss_laguerre(n);
        double tail = 0.0;
        const double shrink = 1.0 - 1.0 / stretch;
        for (int i = 0; i < n; ++i) {
            const double u = lag.nodes[i];
            const double lw = lag.log_weights[i] + u * shrink;
            if (lw < -740.0) continue;
            tail += std::exp(lw) * g(t0 + u / stretch);
        }
        tail *= std::exp(-t0) / stretch;
        return head + tail;
    };
    return escalate(at_order, opt);
}

Estimate legendre(const std::function<double(double)>& f, double a, double b, const Options& opt) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    auto at_order = [&](int n) {
        const Rule& leg = gauss_legendre(n);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += leg.weights[i] * f(mid + half * leg.nodes[i]);
        return s * half;
    };
    return escalate(at_order, opt);
}

}  // namespace bgsr::quad
