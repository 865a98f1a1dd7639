#include "bgsr/montecarlo.hpp"

#include "bgsr/errors.hpp"
#include "bgsr/estimators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace bgsr::mc {
namespace {

constexpr int kUnitarityCheckMaxN = 256;
constexpr double kUnitarityTol = 1e-11;
constexpr int kMaxRedraws = 16;
constexpr double kDegenerateColumn = 1e-12;

std::complex<double> soft_threshold(std::complex<double> u, double level) {
    const double mag = std::abs(u);
    if (mag <= level) return {0.0, 0.0};
    return u * ((mag - level) / mag);
}

// How far v is from satisfying 0 in the subdifferential of the objective,
// back-projected residual G^H (y - G v).
double subgradient_violation(const CVector& v, const CVector& back, double gamma) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const std::complex<double> grad = 2.0 * gamma * back(i);
        const double mag = std::abs(v(i));
        worst = std::max(worst, mag == 0.0 ? std::abs(grad) - 1.0 : std::abs(grad - v(i) / mag));
    }
    return worst;
}

double unitarity_defect(const CMatrix& u) {
    const CMatrix gram = u.adjoint() * u;
    return (gram - CMatrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

// Largest eigenvalue of G^H G by power iteration from a fixed start.
double spectral_norm_sq(const CMatrix& g, int iterations) {
    CVector w = CVector::Constant(g.cols(), std::complex<double>(1.0, 0.0));
    w.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const CVector next = g.adjoint() * (g * w);
        lambda = next.norm();
        if (lambda == 0.0) return 0.0;
        w = next / lambda;
    }
    return lambda;
}

}  // namespace

const char* to_string(MatrixKind k) {
    switch (k) {
        case MatrixKind::IidGaussian: return "iid";
        case MatrixKind::Haar: return "haar";
        case MatrixKind::Dft: return "dft";
    }
    return "unknown";
}

const char* to_string(SimEstimator e) { return e == SimEstimator::Lmmse ? "lmmse" : "lasso"; }

Ensemble asymptotic_ensemble(MatrixKind kind, double p) {
    return kind == MatrixKind::IidGaussian ? Ensemble::iid(p) : Ensemble::haar(p);
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::uint64_t k) {
    // Two rounds of SplitMix64: one on the base seed, one on the trial index.
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    return mix(mix(base_seed) ^ (k * 0xD1B54A32D192ED03ULL + 1));
}

std::complex<double> complex_normal(Rng& rng, double variance) {
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * variance));
    const double re = nd(rng);
    const double im = nd(rng);
    return {re, im};
}

CMatrix gen_sensing_matrix(MatrixKind kind, int n, Rng& rng) {
    if (n < 2) throw DomainError("sensing matrix needs n >= 2");
    CMatrix u(n, n);
    switch (kind) {
        case MatrixKind::IidGaussian:
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) u(i, j) = complex_normal(rng, 1.0 / n);
            return u;
        case MatrixKind::Haar: {
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) u(i, j) = complex_normal(rng, 1.0);
            const Eigen::HouseholderQR<CMatrix> qr(u);
            CMatrix q = qr.householderQ();
            const CMatrix& r = qr.matrixQR();
            // Plain QR leaves the phases of diag(R) biased; rotating them out
            // makes the law of Q exactly Haar.
            for (int j = 0; j < n; ++j) {
                const std::complex<double> d = r(j, j);
                const double mag = std::abs(d);
                if (mag > 0.0) q.col(j) *= d / mag;
            }
            return q;
        }
        case MatrixKind::Dft: {
            const double scale = 1.0 / std::sqrt(static_cast<double>(n));
            for (int m = 0; m < n; ++m)
                for (int k = 0; k < n; ++k) {
                    // Reduce m k modulo n first so the angle is exact.
                    const long long idx = (static_cast<long long>(m) * k) % n;
                    const double angle = 2.0 * std::numbers::pi * static_cast<double>(idx) / n;
                    u(m, k) = std::polar(scale, angle);
                }
            return u;
        }
    }
    throw DomainError("unknown matrix kind");
}

CVector ModelSample::v() const {
    CVector out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = b[static_cast<std::size_t>(i)] ? x(i) : 0.0;
    return out;
}

int ModelSample::measurements() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }

ModelSample sample_model(const SimConfig& cfg, Rng& rng) {
    const int n = cfg.n;
    const double p = cfg.params.ensemble.p;
    const double q = cfg.params.q;
    ModelSample s;
    s.u = gen_sensing_matrix(cfg.matrix_kind, n, rng);
    std::bernoulli_distribution active(q);
    std::bernoulli_distribution kept(p);
    s.b.resize(static_cast<std::size_t>(n));
    s.mask.resize(static_cast<std::size_t>(n));
    s.x.resize(n);
    for (int i = 0; i < n; ++i) {
        s.b[static_cast<std::size_t>(i)] = active(rng) ? 1 : 0;
        s.x(i) = complex_normal(rng, cfg.params.px);
    }
    for (int i = 0; i < n; ++i) s.mask[static_cast<std::size_t>(i)] = kept(rng) ? 1 : 0;
    const CVector uv = s.u * s.v();
    s.y.resize(n);
    for (int i = 0; i < n; ++i) s.y(i) = (s.mask[static_cast<std::size_t>(i)] ? uv(i) : 0.0) + complex_normal(rng, 1.0);
    return s;
}

CMatrix observed_rows(const ModelSample& s) {
    const int m = s.measurements();
    CMatrix g(m, s.u.cols());
    int r = 0;
    for (Eigen::Index i = 0; i < s.u.rows(); ++i)
        if (s.mask[static_cast<std::size_t>(i)]) g.row(r++) = s.u.row(i);
    return g;
}

CVector observed_values(const ModelSample& s) {
    CVector out(s.measurements());
    int r = 0;
    for (Eigen::Index i = 0; i < s.y.size(); ++i)
        if (s.mask[static_cast<std::size_t>(i)]) out(r++) = s.y(i);
    return out;
}

CVector lmmse_estimate(const CVector& y, const std::vector<char>& mask, const CMatrix& u, const SystemParams& sp) {
    if (u.rows() != y.size() || static_cast<Eigen::Index>(mask.size()) != u.rows()) {
        throw DomainError("inconsistent dimensions in the linear MMSE solve");
    }
    CMatrix au = u;
    CVector ay = y;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) {
            au.row(i).setZero();
            ay(i) = 0.0;
        }
    }
    CMatrix system = au.adjoint() * au;
    system.diagonal().array() += 1.0 / lmmse_gamma(sp);
    const Eigen::LDLT<CMatrix> ldlt(system);
    if (ldlt.info() != Eigen::Success) throw std::runtime_error("linear MMSE factorization failed");
    CVector out = ldlt.solve(au.adjoint() * ay);
    if (!out.allFinite()) throw std::runtime_error("linear MMSE solve produced non-finite values");
    return out;
}

double lasso_objective(const CVector& y, const CMatrix& g, const CVector& v, double gamma) {
    return gamma * (y - g * v).squaredNorm() + v.cwiseAbs().sum();
}

LassoSolution lasso_solve(const CVector& y, const CMatrix& g, double gamma, const LassoOptions& opt) {
    if (!(gamma > 0.0)) throw DomainError("Lasso weight must be positive");
    LassoSolution sol;
    sol.v = CVector::Zero(g.cols());
    sol.objective = lasso_objective(y, g, sol.v, gamma);
    const double lipschitz = spectral_norm_sq(g, opt.power_iterations) * opt.lipschitz_margin;
    if (lipschitz == 0.0) {
        sol.converged = true;
        return sol;
    }
    // Step 1/(2 gamma L) on the smooth part gamma |y - G v|^2.
    const double level = 1.0 / (2.0 * gamma * lipschitz);
    double change = std::numeric_limits<double>::infinity();
    for (int it = 0;; ++it) {
        const CVector back = g.adjoint() * (y - g * sol.v);
        if (change < opt.rel_tol && subgradient_violation(sol.v, back, gamma) <= opt.certificate_tol) {
            sol.converged = true;
            break;
        }
        if (it == opt.max_iterations) break;
        const CVector forward = sol.v + back / lipschitz;
        CVector next(forward.size());
        for (Eigen::Index i = 0; i < forward.size(); ++i) next(i) = soft_threshold(forward(i), level);
        const double obj = lasso_objective(y, g, next, gamma);
        if (obj > sol.objective * (1.0 + 1e-14)) sol.monotone = false;
        change = std::abs(sol.objective - obj) / std::max(std::abs(sol.objective), 1e-300);
        sol.v = std::move(next);
        sol.objective = obj;
        sol.iterations = it + 1;
    }
    return sol;
}

CVector noisy_lasso(const CVector& v_hat, const CMatrix& g, const CVector& y) {
    const Eigen::VectorXd col_norm = g.colwise().squaredNorm().transpose();
    if ((col_norm.array() < kDegenerateColumn).any()) throw DomainError("degenerate column in the observed rows");
    const CVector back = g.adjoint() * (y - g * v_hat);
    return v_hat + (back.array() / col_norm.array().cast<std::complex<double>>()).matrix();
}

double lasso_gamma_heuristic(const CMatrix& g, const CVector& y) {
    if (g.rows() == 0) return 0.0;
    return (g.adjoint() * y).cwiseAbs().maxCoeff() / 20.0;
}

int count_support_errors(const CVector& w, const EnergyThreshold& th, const std::vector<char>& b) {
    int errors = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const bool declared = th.always_active || std::norm(w(i)) >= th.tau;
        if (declared != static_cast<bool>(b[static_cast<std::size_t>(i)])) ++errors;
    }
    return errors;
}

namespace {

// Second, independent tally used to cross-check count_support_errors.
int count_support_errors_vectorized(const CVector& w, const EnergyThreshold& th, const std::vector<char>& b) {
    Eigen::ArrayXi truth(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) truth(i) = b[static_cast<std::size_t>(i)];
    Eigen::ArrayXi declared = Eigen::ArrayXi::Ones(w.size());
    if (!th.always_active) declared = (w.array().abs2() >= th.tau).cast<int>();
    return (declared != truth).count();
}

TrialOutcome run_trial_impl(const SimConfig& cfg, std::uint64_t k) {
    Rng rng(trial_seed(cfg.base_seed, k));
    ModelSample s = sample_model(cfg, rng);
    // A heuristic weight of zero means y vanished on the observed rows; the
    // draw is degenerate and is replaced from the same stream.
    if (cfg.estimator == SimEstimator::Lasso && !cfg.lasso_gamma) {
        int redraws = 0;
        while (s.measurements() > 0 && !(lasso_gamma_heuristic(observed_rows(s), observed_values(s)) > 0.0)) {
            if (++redraws > kMaxRedraws) throw DomainError("observations vanish on every redraw");
            s = sample_model(cfg, rng);
        }
    }
    TrialOutcome out;
    out.measurements = s.measurements();
    if (cfg.matrix_kind != MatrixKind::IidGaussian && cfg.n <= kUnitarityCheckMaxN) {
        const double defect = unitarity_defect(s.u);
        if (defect > kUnitarityTol) throw std::runtime_error("sensing matrix failed the unitarity check");
    }
    const SystemParams asym = SystemParams::make(asymptotic_ensemble(cfg.matrix_kind, cfg.params.ensemble.p),
                                                 cfg.params.q, cfg.params.px);
    const CVector v = s.v();
    CVector estimate;
    CVector y_scale;
    EnergyThreshold th;

    if (cfg.estimator == SimEstimator::Lmmse) {
        out.gamma_used = lmmse_gamma(cfg.params);
        if (out.measurements == 0) {
            // Nothing observed: the estimate is zero and no component is declared.
            estimate = CVector::Zero(cfg.n);
            y_scale = estimate;
            th = EnergyThreshold{false, std::numeric_limits<double>::infinity()};
        } else {
            const MismatchedFixedPoint fp = lmmse_fixed_point(asym);
            estimate = lmmse_estimate(s.y, s.mask, s.u, cfg.params);
            y_scale = estimate * ((1.0 + fp.xi) / fp.xi);
            th = map_threshold(DecoupledChannel::make(asym.source(), fp.eta));
        }
    } else {
        const CMatrix g = observed_rows(s);
        const CVector y = observed_values(s);
        out.gamma_used = cfg.lasso_gamma ? *cfg.lasso_gamma : lasso_gamma_heuristic(g, y);
        if (out.measurements == 0 || !(out.gamma_used > 0.0)) {
            // Nothing observed: the estimate is zero and no component is declared.
            estimate = CVector::Zero(cfg.n);
            y_scale = estimate;
            th = EnergyThreshold{false, std::numeric_limits<double>::infinity()};
        } else {
            const LassoSolution sol = lasso_solve(y, g, out.gamma_used);
            if (!sol.converged) throw NonConvergence("Lasso iterations exhausted", sol.objective);
            estimate = sol.v;
            y_scale = noisy_lasso(sol.v, g, y);
            const MismatchedFixedPoint fp = lasso_fixed_point(asym, out.gamma_used, cfg.lasso_curvature);
            th = map_threshold(DecoupledChannel::make(asym.source(), fp.eta));
        }
    }
    out.support_errors = count_support_errors(y_scale, th, s.b);
    if (out.support_errors != count_support_errors_vectorized(y_scale, th, s.b)) {
        throw std::logic_error("support error tallies disagree");
    }
    out.squared_error = (estimate - v).squaredNorm();
    return out;
}

}  // namespace

TrialOutcome run_trial(const SimConfig& cfg, std::uint64_t k) {
    try {
        return run_trial_impl(cfg, k);
    } catch (const std::exception& e) {
        TrialOutcome out;
        out.failed = true;
        out.failure = e.what();
        return out;
    }
}

RunSummary run_trials(const SimConfig& cfg) {
    if (cfg.n < 2) throw DomainError("simulation needs n >= 2");
    if (cfg.trials < 1) throw DomainError("simulation needs at least one trial");
    RunSummary summary;
    summary.per_trial.resize(static_cast<std::size_t>(cfg.trials));

    unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min(workers, static_cast<unsigned>(cfg.trials)));
    std::atomic<int> next{0};
    auto work = [&] {
        for (int k = next++; k < cfg.trials; k = next++) {
            summary.per_trial[static_cast<std::size_t>(k)] = run_trial(cfg, static_cast<std::uint64_t>(k));
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    // Sums run in index order so the result is reproducible.
    double sum_d = 0.0;
    double sum_se = 0.0;
    double sum_gamma = 0.0;
    for (const TrialOutcome& t : summary.per_trial) {
        if (t.failed) {
            ++summary.failed;
            continue;
        }
        ++summary.completed;
        const double d = static_cast<double>(t.support_errors) / cfg.n;
        sum_d += d;
        sum_se += t.squared_error;
        sum_gamma += t.gamma_used;
    }
    const int m = summary.completed;
    if (m == 0) return summary;
    summary.d_hat = sum_d / m;
    summary.mse_hat = sum_se / m / cfg.n;
    summary.mean_gamma = sum_gamma / m;
    if (m > 1) {
        double ss = 0.0;
        for (const TrialOutcome& t : summary.per_trial) {
            if (t.failed) continue;
            const double dev = static_cast<double>(t.support_errors) / cfg.n - summary.d_hat;
            ss += dev * dev;
        }
        summary.d_ci95 = 1.96 * std::sqrt(ss / (m - 1) / m);
    }
    return summary;
}

}  // namespace bgsr::mc
