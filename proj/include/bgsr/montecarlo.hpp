#pragma once

// Finite-n simulation of y = A U v + z with the estimators analysed
// asymptotically in estimators.hpp, and batch aggregation over trials.

#include "bgsr/estimators.hpp"
#include "bgsr/replica.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bgsr::mc {

using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using Rng = std::mt19937_64;

enum class MatrixKind { IidGaussian, Haar, Dft };
enum class SimEstimator { Lmmse, Lasso };
const char* to_string(MatrixKind k);
const char* to_string(SimEstimator e);

// Ensemble whose asymptotics describe the given matrix kind (DFT borrows Haar).
Ensemble asymptotic_ensemble(MatrixKind kind, double p);

struct SimConfig {
    int n = 100;
    MatrixKind matrix_kind = MatrixKind::Haar;
    SystemParams params;
    int trials = 200;
    std::uint64_t base_seed = 1;
    SimEstimator estimator = SimEstimator::Lmmse;
    std::optional<double> lasso_gamma;  // empty selects the per-trial heuristic
    LassoCurvature lasso_curvature = LassoCurvature::Indicator;  // for the asymptotic threshold
    int threads = 0;                    // 0 uses the hardware concurrency
};

// Independent stream for trial k, derived from (base_seed, k) by SplitMix64.
std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t k);

// Circular complex Gaussian with E|w|^2 = variance.
std::complex<double> complex_normal(Rng& rng, double variance);

CMatrix gen_sensing_matrix(MatrixKind kind, int n, Rng& rng);

struct ModelSample {
    CVector y;
    std::vector<char> mask;  // diagonal of A
    CMatrix u;
    CVector x;
    std::vector<char> b;
    CVector v() const;
    int measurements() const;
};

ModelSample sample_model(const SimConfig& cfg, Rng& rng);

// Rows of A U that A keeps, and the matching entries of y.
CMatrix observed_rows(const ModelSample& s);
CVector observed_values(const ModelSample& s);

// [gamma^{-1} I + U^H A U]^{-1} U^H A y with gamma = q px.
CVector lmmse_estimate(const CVector& y, const std::vector<char>& mask, const CMatrix& u, const SystemParams& sp);

struct LassoOptions {
    int max_iterations = 5000;
    double rel_tol = 1e-8;
    double certificate_tol = 1e-4;  // subgradient optimality, checked with rel_tol
    int power_iterations = 50;
    double lipschitz_margin = 1.01;
};

struct LassoSolution {
    CVector v;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    bool monotone = true;  // objective never increased
};

// argmin_v gamma |y - G v|^2 + sum |v_i| by proximal gradient. Converged
// means the objective has settled and the subgradient condition holds.
LassoSolution lasso_solve(const CVector& y, const CMatrix& g, double gamma, const LassoOptions& opt = {});
double lasso_objective(const CVector& y, const CMatrix& g, const CVector& v, double gamma);

// v + D G^H (y - G v) with D the inverse squared column norms. Throws
// DomainError if a column is degenerate.
CVector noisy_lasso(const CVector& v_hat, const CMatrix& g, const CVector& y);

// (1/20) max_i |(G^H y)_i|.
double lasso_gamma_heuristic(const CMatrix& g, const CVector& y);

// Number of positions where |w_i|^2 >= tau disagrees with b_i.
int count_support_errors(const CVector& w, const EnergyThreshold& th, const std::vector<char>& b);

struct TrialOutcome {
    int support_errors = 0;
    double squared_error = 0.0;  // |v_hat - v|^2 summed over components
    int measurements = 0;
    double gamma_used = 0.0;
    bool failed = false;
    std::string failure;
};

TrialOutcome run_trial(const SimConfig& cfg, std::uint64_t k);

struct RunSummary {
    double d_hat = 0.0;
    double d_ci95 = 0.0;
    double mse_hat = 0.0;
    double mean_gamma = 0.0;
    int completed = 0;
    int failed = 0;
    std::vector<TrialOutcome> per_trial;
};

// Trials run concurrently and are merged in index order, so the result does
// not depend on the thread count.
RunSummary run_trials(const SimConfig& cfg);

}  // namespace bgsr::mc
