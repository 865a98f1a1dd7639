#pragma once

#include <functional>
#include <vector>

namespace bgsr::quad {

// Nodes and log-weights of an n-point rule. Log-weights keep the far
// Laguerre nodes usable after their plain weights underflow.
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::vector<double> log_weights;
};

// Cached, thread-safe. Legendre nodes are on [-1, 1].
const Rule& gauss_legendre(int n);
const Rule& gauss_laguerre(int n);

struct Options {
    int initial_order = 96;
    int max_order = 768;
    double rel_tol = 1e-10;
    double abs_tol = 1e-300;
};

struct Estimate {
    double value = 0.0;
    int order = 0;
    bool converged = false;
};

// Integral of g(t) exp(-t) over [0, inf).
//
// `feature` marks where g changes abruptly (a sigmoid step, say) and
// `sharpness` is the inverse width of that change in t units. The range is
// split at the feature: Gauss-Legendre on the head, Gauss-Laguerre on the
// tail with the tail variable stretched by max(sharpness, 1). A feature at
// t <= 0 or far out in the exponential tail is ignored.
Estimate exp_weighted(const std::function<double(double)>& g, double feature, double sharpness,
                      const Options& opt = {});

// Integral of f over [a, b] with order doubling.
Estimate legendre(const std::function<double(double)>& f, double a, double b,
                  const Options& opt = {});

}  // namespace bgsr::quad
