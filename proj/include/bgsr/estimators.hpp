#pragma once

// Asymptotic support-recovery performance of MAP-SBS, thresholded linear
// MMSE and thresholded Lasso through their decoupled scalar channels.
//
// A regularized estimator argmin_v gamma |y - A U v|^2 + sum f(v_i) decouples
// into Y = V0 + eta^{-1/2} Z followed by the scalar rule
// argmin_v xi |y - v|^2 + f(v). The pair (eta, xi) solves
//
//   chi   = gamma E[sigma^2(Y; xi)]
//   delta = E|V0 - vhat(Y; xi)|^2
//   xi    = gamma R(-chi)
//   eta   = (xi/gamma)^2 / (xi/gamma + R'(-chi) (delta - chi))
//
// where sigma^2 is the local curvature of the scalar rule.

#include "bgsr/ensembles.hpp"
#include "bgsr/replica.hpp"
#include "bgsr/scalar_channel.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace bgsr {

// The two expectations a scalar rule contributes to the system, both taken
// over the true channel Y = V0 + eta^{-1/2} Z.
struct ScalarRuleFunctionals {
    std::function<double(double eta, double xi)> sensitivity;  // E[sigma^2(Y; xi)]
    std::function<double(double eta, double xi)> mse;          // E|V0 - vhat(Y; xi)|^2
};

// How the curvature sigma^2 of complex soft thresholding is averaged.
//  Indicator: (1/xi) 1{|y| > t}, the real-valued expression carried over.
//  Divergence: (1/xi)(1 - t/(2|y|)) 1{|y| > t}, the mean of the radial and
//  tangential eigenvalues of the rule's Jacobian.
enum class LassoCurvature { Indicator, Divergence };
const char* to_string(LassoCurvature c);

// vhat = xi y / (1 + xi).
ScalarRuleFunctionals lmmse_rule(const BernoulliGaussianSource& src);
// Complex soft thresholding at level t = 1/(2 xi).
ScalarRuleFunctionals lasso_rule(const BernoulliGaussianSource& src,
                                 LassoCurvature curvature = LassoCurvature::Indicator);
// Posterior mean under the true prior but an assumed noise precision xi.
// At xi = eta both functionals equal mmse_bg.
ScalarRuleFunctionals posterior_mean_rule(const BernoulliGaussianSource& src);

// Lasso functionals in closed form.
double lasso_sensitivity(const BernoulliGaussianSource& src, double eta, double xi,
                         LassoCurvature curvature = LassoCurvature::Indicator);
double lasso_mse(const BernoulliGaussianSource& src, double eta, double xi);
// E[min_v xi |Y - v|^2 + |v|], the Moreau envelope of |.| averaged over Y.
double lasso_envelope_mean(const BernoulliGaussianSource& src, double eta, double xi);

struct MismatchedFixedPoint {
    double eta = 0.0;
    double xi = 0.0;
    double chi = 0.0;
    double delta = 0.0;
    double gamma = 0.0;
    double residual = 0.0;  // largest relative residual of the four equations
};

// Largest relative residual of the four equations at a candidate point.
double mismatched_residual(const Ensemble& e, const ScalarRuleFunctionals& rule, double gamma,
                           double eta, double xi, double chi, double delta);

struct PicardOptions {
    double damping = 0.5;
    int max_iterations = 20000;
    double tol = 1e-14;
};

// Damped iteration on (chi, delta). Throws NonConvergence when the budget
// runs out or the iterate leaves the domain.
MismatchedFixedPoint iterate_mismatched(const Ensemble& e, const ScalarRuleFunctionals& rule,
                                        double gamma, double chi0, double delta0,
                                        const PicardOptions& opt = {});

// Free energy of a mismatched solution with -E log q_Y supplied by the caller.
double mismatched_free_energy(const Ensemble& e, const MismatchedFixedPoint& fp,
                              double neg_log_density_mean);

struct LassoSolutions {
    std::vector<MismatchedFixedPoint> solutions;  // ascending in chi
    std::vector<double> free_energy;
    std::size_t selected = 0;
    // Several solutions were found and the choice relied on the envelope
    // stand-in for -E log q_Y.
    bool extrapolated_selection = false;
    const MismatchedFixedPoint& chosen() const { return solutions[selected]; }
};

// Every Lasso solution, found by a scan over chi with eta recovered from the
// chi equation by bisection. Throws NonConvergence if none is found.
LassoSolutions lasso_fixed_points(const SystemParams& sp, double gamma,
                                  LassoCurvature curvature = LassoCurvature::Indicator);
MismatchedFixedPoint lasso_fixed_point(const SystemParams& sp, double gamma,
                                       LassoCurvature curvature = LassoCurvature::Indicator);

struct ReducedFixedPoint {
    double eta;
    double xi;
};

// iid ensemble only: the two-equation form
//   1/eta = (1 + delta) / p,   1/xi = (1/gamma + E[sigma^2]) / p,
// solved by a scan over eta with xi from an inner bisection.
std::vector<ReducedFixedPoint> iid_reduced_fixed_points(const SystemParams& sp,
                                                        const ScalarRuleFunctionals& rule,
                                                        double gamma);

// Linear MMSE uses gamma = q px. Closed-form efficiency and xi = gamma eta.
double lmmse_gamma(const SystemParams& sp);
MismatchedFixedPoint lmmse_fixed_point(const SystemParams& sp);

// High-SNR limit of the MAP-SBS efficiency; 0 when p <= q.
double high_snr_efficiency(const Ensemble& e, double q);
// -R^{-1}(eta) at the high-SNR efficiency. Requires p > q.
double high_snr_mmse(const Ensemble& e, double q);

enum class EstimatorKind { MapSbs, ThresholdedLmmse, ThresholdedLasso };
const char* to_string(EstimatorKind k);

struct EstimatorReport {
    EstimatorKind kind;
    DecoupledChannel channel;
    double error_rate;
    double mse;
    double gamma_used = 0.0;  // zero for MAP-SBS
    std::size_t multiplicity = 1;
    bool extrapolated_selection = false;
};

enum class FixedPointBranch { Selected, Rightmost };

// Rightmost gives the curve conjectured for message passing.
EstimatorReport map_sbs_performance(const SystemParams& sp,
                                    FixedPointBranch branch = FixedPointBranch::Selected);
EstimatorReport lmmse_performance(const SystemParams& sp);
EstimatorReport lasso_performance(const SystemParams& sp, double gamma,
                                  LassoCurvature curvature = LassoCurvature::Indicator);

// Default candidate weights for the Lasso: 20 points, log-spaced on [1e-4, 1e2].
std::vector<double> lasso_gamma_grid(int points = 20, double lo = 1e-4, double hi = 1e2);
// Lowest error rate over the grid. Grid points that fail to converge are skipped.
EstimatorReport best_lasso_performance(const SystemParams& sp,
                                       const std::vector<double>& gammas = lasso_gamma_grid(),
                                       LassoCurvature curvature = LassoCurvature::Indicator);

}  // namespace bgsr
