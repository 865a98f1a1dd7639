#include "bgsr/estimators.hpp"

#include "bgsr/errors.hpp"
#include "bgsr/quadrature.hpp"
#include "roots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace bgsr {
namespace {

using detail::bisect_log;

// The Lasso scan runs over log chi. Heavy thresholds push chi far below the
// smallest double, so the grid reaches deep and coarsens there.
constexpr double kLogChiFloor = -1e9;
constexpr double kLogChiCoarse = -60.0;
constexpr double kLogChiCeil = 28.0;
constexpr double kFineStep = 0.1;
constexpr int kCoarsePerDecade = 30;
constexpr int kReducedScanPoints = 2400;

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// e^{-u} - sqrt(pi u) erfc(sqrt u). The difference cancels for large u, so
// there the continued fraction of erfc is used to form it directly.
double soft_threshold_tail(double u) {
    if (u < 4.0) return std::exp(-u) - std::sqrt(std::numbers::pi * u) * std::erfc(std::sqrt(u));
    const double x = std::sqrt(u);
    double tail = 0.0;
    for (int k = 160; k >= 2; --k) tail = 0.5 * k / (x + tail);
    const double c = 0.5 / (x + tail);
    return std::exp(-u) * c / (x + c);
}

// log P[|Y| > t] contribution of one hypothesis, u = rate t^2, weighted by
// the curvature average.
double log_curvature_term(double u, LassoCurvature curvature) {
    if (curvature == LassoCurvature::Indicator || std::isinf(u)) return -u;
    if (u < 4.0) return std::log(std::exp(-u) - 0.5 * std::sqrt(std::numbers::pi * u) * std::erfc(std::sqrt(u)));
    const double x = std::sqrt(u);
    double tail = 0.0;
    for (int k = 160; k >= 2; --k) tail = 0.5 * k / (x + tail);
    const double c = 0.5 / (x + tail);
    // sqrt(pi u) erfc(sqrt u) = e^{-u} x / (x + c).
    return -u + std::log1p(-0.5 * x / (x + c));
}

// E over |Y|^2 ~ Exp(rate) of the Moreau envelope of |.| at weight xi.
double envelope_component(double rate, double xi) {
    const double t = 0.5 / xi;
    const double u = rate * t * t;
    const double quad_part = xi * (-std::expm1(-u) - u * std::exp(-u)) / rate;
    const double linear_part = 0.5 * t * std::exp(-u) + 0.5 * std::sqrt(std::numbers::pi / rate) * std::erfc(std::sqrt(u));
    return quad_part + linear_part;
}

// Integral of h(u) e^{-u} over [0, inf) where h contains a logistic step of
// width `width` at `step`. Segments grow geometrically away from the step.
double integrate_around_step(const std::function<double(double)>& h, double step, double width) {
    const quad::Options seg_opt{24, 384, 1e-13, 1e-300};
    auto weighted = [&](double u) { return h(u) * std::exp(-u); };
    const double far = step + 60.0;
    std::vector<double> cuts;
    if (step > 0.0 && step < 700.0) {
        for (double d = width; step - d > 0.0; d *= 2.0) cuts.push_back(step - d);
        cuts.push_back(0.0);
        std::reverse(cuts.begin(), cuts.end());
        cuts.push_back(step);
        for (double d = width; step + d < far; d *= 2.0) cuts.push_back(step + d);
    } else {
        cuts.push_back(0.0);
        for (double b = std::min(width, 1.0); b < 60.0; b *= 2.0) cuts.push_back(b);
    }
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) sum += quad::legendre(weighted, cuts[k], cuts[k + 1], seg_opt).value;
    const double b = cuts.back();
    if (b < 700.0) {
        sum += std::exp(-b) * quad::exp_weighted([&](double v) { return h(b + v); }, -1.0, 1.0).value;
    }
    return sum;
}

struct PosteriorMeanExpectations {
    double sensitivity;
    double mse;
};

// Functionals of the posterior mean computed under precision xi while the data
// follow precision eta. |Y|^2 is exponential given B0 in both hypotheses.
PosteriorMeanExpectations posterior_mean_expectations(const BernoulliGaussianSource& src, double eta, double xi) {
    if (!(eta > 0.0) || !(xi > 0.0)) throw DomainError("posterior-mean rule needs eta, xi > 0");
    const double q = src.q;
    const double px = src.px;
    const DecoupledChannel assumed{src, xi};
    const double gain_a = px * xi / (1.0 + px * xi);
    const double var_a = px / (1.0 + px * xi);
    const double gain_t = px * eta / (1.0 + px * eta);
    const double var_t = px / (1.0 + px * eta);
    const EnergyThreshold th = map_threshold(assumed);
    const double logit_slope = px * xi * assumed.mu();

    auto expect = [&](double rate, const std::function<double(double)>& f) {
        auto h = [&](double u) { return f(u / rate); };
        if (th.always_active) return integrate_around_step(h, -1.0, 1.0);
        return integrate_around_step(h, rate * th.tau, rate / logit_slope);
    };
    auto sens = [&](double s) {
        const double w = posterior_active(assumed, s);
        return w * var_a + w * (1.0 - w) * gain_a * gain_a * s;
    };
    const double rate_on = eta / (1.0 + px * eta);
    double sensitivity = q * expect(rate_on, sens);
    double mse = q * expect(rate_on, [&](double s) {
        const double d = gain_t - posterior_active(assumed, s) * gain_a;
        return var_t + d * d * s;
    });
    if (q < 1.0) {
        sensitivity += (1.0 - q) * expect(eta, sens);
        mse += (1.0 - q) * expect(eta, [&](double s) {
            const double w = posterior_active(assumed, s) * gain_a;
            return w * w * s;
        });
    }
    return {sensitivity, mse};
}

double rel_gap(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), std::numeric_limits<double>::min()});
    return std::abs(a - b) / scale;
}

// eta implied by the last equation, or NaN outside its domain.
double eta_from_system(const Ensemble& e, double gamma, double xi, double chi, double delta) {
    const double ratio = xi / gamma;
    const double den = ratio + r_transform_derivative(e, -chi) * (delta - chi);
    if (!(den > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return ratio * ratio / den;
}

void require_measurements(const SystemParams& sp) {
    if (sp.ensemble.p == 0.0) throw DomainError("estimator analysis needs p > 0");
}

}  // namespace

double lasso_sensitivity(const BernoulliGaussianSource& src, double eta, double xi, LassoCurvature curvature) {
    const double scale = 0.25 / (xi * xi);
    const double mu = eta / (1.0 + src.px * eta);
    double total = src.q * std::exp(log_curvature_term(mu * scale, curvature));
    if (src.q < 1.0) total += (1.0 - src.q) * std::exp(log_curvature_term(eta * scale, curvature));
    return total / xi;
}

double lasso_mse(const BernoulliGaussianSource& src, double eta, double xi) {
    const double scale = 0.25 / (xi * xi);
    const double g = src.px * eta;
    const double mu_s = eta / (1.0 + g) * scale;
    const double active = -g * std::expm1(-mu_s) + soft_threshold_tail(mu_s);
    double total = src.q * active;
    if (src.q < 1.0) total += (1.0 - src.q) * soft_threshold_tail(eta * scale);
    return total / eta;
}

double lasso_envelope_mean(const BernoulliGaussianSource& src, double eta, double xi) {
    const double mu = eta / (1.0 + src.px * eta);
    double total = src.q * envelope_component(mu, xi);
    if (src.q < 1.0) total += (1.0 - src.q) * envelope_component(eta, xi);
    return total;
}

ScalarRuleFunctionals lmmse_rule(const BernoulliGaussianSource& src) {
    const double energy = src.energy();
    return {[](double, double xi) { return 1.0 / (1.0 + xi); },
            [energy](double eta, double xi) { return (energy + xi * xi / eta) / ((1.0 + xi) * (1.0 + xi)); }};
}

const char* to_string(LassoCurvature c) { return c == LassoCurvature::Indicator ? "indicator" : "divergence"; }

ScalarRuleFunctionals lasso_rule(const BernoulliGaussianSource& src, LassoCurvature curvature) {
    return {[src, curvature](double eta, double xi) { return lasso_sensitivity(src, eta, xi, curvature); },
            [src](double eta, double xi) { return lasso_mse(src, eta, xi); }};
}

ScalarRuleFunctionals posterior_mean_rule(const BernoulliGaussianSource& src) {
    return {[src](double eta, double xi) { return posterior_mean_expectations(src, eta, xi).sensitivity; },
            [src](double eta, double xi) { return posterior_mean_expectations(src, eta, xi).mse; }};
}

double mismatched_residual(const Ensemble& e, const ScalarRuleFunctionals& rule, double gamma, double eta,
                           double xi, double chi, double delta) {
    const double eta_eq = eta_from_system(e, gamma, xi, chi, delta);
    if (std::isnan(eta_eq)) return std::numeric_limits<double>::infinity();
    return std::max({rel_gap(chi, gamma * rule.sensitivity(eta, xi)), rel_gap(delta, rule.mse(eta, xi)),
                     rel_gap(xi, gamma * r_transform(e, -chi)), rel_gap(eta, eta_eq)});
}

MismatchedFixedPoint iterate_mismatched(const Ensemble& e, const ScalarRuleFunctionals& rule, double gamma,
                                        double chi0, double delta0, const PicardOptions& opt) {
    if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
    double chi = chi0;
    double delta = delta0;
    double change = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iterations; ++it) {
        const double xi = gamma * r_transform(e, -chi);
        const double eta = eta_from_system(e, gamma, xi, chi, delta);
        if (!(xi > 0.0) || !(eta > 0.0) || !std::isfinite(eta)) {
            throw NonConvergence("mismatched iteration left the domain", change);
        }
        const double chi_next = gamma * rule.sensitivity(eta, xi);
        const double delta_next = rule.mse(eta, xi);
        change = std::max(rel_gap(chi, chi_next), rel_gap(delta, delta_next));
        if (change <= opt.tol) {
            MismatchedFixedPoint fp{eta, xi, chi_next, delta_next, gamma, 0.0};
            fp.residual = mismatched_residual(e, rule, gamma, eta, xi, chi_next, delta_next);
            return fp;
        }
        chi = (1.0 - opt.damping) * chi + opt.damping * chi_next;
        delta = (1.0 - opt.damping) * delta + opt.damping * delta_next;
    }
    throw NonConvergence("mismatched iteration budget exhausted", change);
}

double mismatched_free_energy(const Ensemble& e, const MismatchedFixedPoint& fp, double neg_log_density_mean) {
    const double xi = fp.xi;
    const double gamma = fp.gamma;
    const double ratio = xi / fp.eta;
    return std::log(xi / gamma) - ratio + gamma - xi * fp.chi + (ratio - 1.0) * xi * fp.chi / gamma +
           r_transform_integral(e, fp.chi) + neg_log_density_mean;
}

LassoSolutions lasso_fixed_points(const SystemParams& sp, double gamma, LassoCurvature curvature) {
    if (!(gamma > 0.0)) throw DomainError("Lasso weight must be positive");
    require_measurements(sp);
    const Ensemble& e = sp.ensemble;
    const BernoulliGaussianSource src = sp.source();
    const double q = src.q;

    // For fixed chi, xi is explicit and the chi equation pins eta because the
    // curvature-weighted survival P(|Y| > 1/(2 xi)) decreases in eta. Both sides of
    // that equation are compared in logs so that underflowing chi still works.
    struct Point {
        double chi = 0.0;
        double eta = 0.0;
        double xi = 0.0;
        double delta = 0.0;
        double residual = std::numeric_limits<double>::quiet_NaN();
    };
    const double log_q = std::log(q);
    const double log_off = q < 1.0 ? std::log1p(-q) : -std::numeric_limits<double>::infinity();
    auto evaluate = [&](double log_chi) {
        Point pt;
        pt.chi = std::exp(log_chi);
        const double r = r_transform(e, -pt.chi);
        pt.xi = gamma * r;
        if (!(pt.xi > 0.0)) return pt;
        const double log_target = log_chi + std::log(r);
        const double scale = 0.25 / (pt.xi * pt.xi);
        auto survival_gap = [&](double eta) {
            const double mu = eta / (1.0 + src.px * eta);
            return log_sum_exp(log_q + log_curvature_term(mu * scale, curvature),
                               log_off + log_curvature_term(eta * scale, curvature)) -
                   log_target;
        };
        const double lo = 1e-30;
        const double hi = 1e30;
        const double g_lo = survival_gap(lo);
        if (!(g_lo > 0.0) || !(survival_gap(hi) < 0.0)) return pt;
        pt.eta = bisect_log(survival_gap, lo, hi, g_lo);
        pt.delta = lasso_mse(src, pt.eta, pt.xi);
        const double eta_eq = eta_from_system(e, gamma, pt.xi, pt.chi, pt.delta);
        if (std::isnan(eta_eq)) return pt;
        pt.residual = std::log(eta_eq / pt.eta);
        return pt;
    };

    std::vector<double> grid;
    const int coarse = static_cast<int>(std::ceil(std::log10(kLogChiFloor / kLogChiCoarse) * kCoarsePerDecade));
    for (int k = coarse; k > 0; --k) grid.push_back(kLogChiCoarse * std::pow(kLogChiFloor / kLogChiCoarse, double(k) / coarse));
    for (double lc = kLogChiCoarse; lc <= kLogChiCeil; lc += kFineStep) grid.push_back(lc);

    std::vector<double> roots;
    auto add_root = [&](double a, double b, double r_a, double r_b) {
        if (r_a == 0.0) return;
        if (r_b == 0.0) {
            roots.push_back(b);
        } else if ((r_a > 0.0) != (r_b > 0.0)) {
            roots.push_back(detail::bisect([&](double lc) {
                const double v = evaluate(lc).residual;
                // A domain hole inside a bracket counts as the far side.
                return std::isfinite(v) ? v : r_b;
            }, a, b, r_a));
        }
    };
    // Near an edge of the feasible set eta runs off to 0 or infinity and the
    // residual can change sign within a grid step, so edges are resolved.
    auto edge_point = [&](double outside, double inside) {
        for (int it = 0; it < 200 && std::abs(inside - outside) > 1e-13 * std::max(1.0, std::abs(inside)); ++it) {
            const double mid = 0.5 * (outside + inside);
            (std::isfinite(evaluate(mid).residual) ? inside : outside) = mid;
        }
        return inside;
    };
    double r_prev = evaluate(grid.front()).residual;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double r = evaluate(grid[k]).residual;
        const bool ok_prev = std::isfinite(r_prev);
        const bool ok = std::isfinite(r);
        if (ok && ok_prev) {
            add_root(grid[k - 1], grid[k], r_prev, r);
        } else if (ok != ok_prev) {
            const double in = ok ? grid[k] : grid[k - 1];
            const double r_in = ok ? r : r_prev;
            const double edge = edge_point(ok ? grid[k - 1] : grid[k], in);
            const double r_edge = evaluate(edge).residual;
            if (edge != in && std::isfinite(r_edge)) {
                if (ok) {
                    add_root(edge, in, r_edge, r_in);
                } else {
                    add_root(in, edge, r_in, r_edge);
                }
            }
        }
        r_prev = r;
    }

    const ScalarRuleFunctionals rule = lasso_rule(src, curvature);
    LassoSolutions out;
    double worst = std::numeric_limits<double>::infinity();
    for (double log_chi : roots) {
        const Point pt = evaluate(log_chi);
        if (!std::isfinite(pt.residual)) continue;
        MismatchedFixedPoint fp{pt.eta, pt.xi, pt.chi, pt.delta, gamma, 0.0};
        fp.residual = mismatched_residual(e, rule, gamma, fp.eta, fp.xi, fp.chi, fp.delta);
        if (fp.residual > 1e-6) {
            worst = std::min(worst, fp.residual);
            continue;
        }
        out.solutions.push_back(fp);
        out.free_energy.push_back(mismatched_free_energy(e, fp, lasso_envelope_mean(src, fp.eta, fp.xi)));
    }
    if (out.solutions.empty()) throw NonConvergence("Lasso fixed-point scan found no solution", worst);
    out.selected = static_cast<std::size_t>(
        std::min_element(out.free_energy.begin(), out.free_energy.end()) - out.free_energy.begin());
    out.extrapolated_selection = out.solutions.size() > 1;
    return out;
}

MismatchedFixedPoint lasso_fixed_point(const SystemParams& sp, double gamma, LassoCurvature curvature) {
    return lasso_fixed_points(sp, gamma, curvature).chosen();
}

std::vector<ReducedFixedPoint> iid_reduced_fixed_points(const SystemParams& sp, const ScalarRuleFunctionals& rule,
                                                        double gamma) {
    if (sp.ensemble.kind != Ensemble::Kind::IidVar1OverN) throw DomainError("reduced system is for the iid ensemble");
    if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
    require_measurements(sp);
    const double p = sp.ensemble.p;

    // p - xi/gamma - xi E[sigma^2] falls from p to below zero as xi grows.
    auto xi_of = [&](double eta) {
        auto h = [&](double xi) { return p - xi / gamma - xi * rule.sensitivity(eta, xi); };
        const double lo = 1e-300;
        return bisect_log(h, lo, gamma * p, h(lo));
    };
    auto residual = [&](double eta) { return std::log(p / eta) - std::log1p(rule.mse(eta, xi_of(eta))); };

    const double lo = p * 1e-14;
    const double ratio = std::pow(p / lo, 1.0 / (kReducedScanPoints - 1));
    std::vector<ReducedFixedPoint> out;
    double eta_prev = lo;
    double r_prev = residual(lo);
    for (int k = 1; k < kReducedScanPoints; ++k) {
        const double eta = k + 1 == kReducedScanPoints ? p : lo * std::pow(ratio, k);
        const double r = residual(eta);
        if (r == 0.0) {
            out.push_back({eta, xi_of(eta)});
        } else if ((r > 0.0) != (r_prev > 0.0) && r_prev != 0.0) {
            const double root = bisect_log(residual, eta_prev, eta, r_prev);
            out.push_back({root, xi_of(root)});
        }
        eta_prev = eta;
        r_prev = r;
    }
    return out;
}

double lmmse_gamma(const SystemParams& sp) { return sp.q * sp.px; }

MismatchedFixedPoint lmmse_fixed_point(const SystemParams& sp) {
    require_measurements(sp);
    const double p = sp.ensemble.p;
    const double gamma = lmmse_gamma(sp);
    const double a = 1.0 + (1.0 - p) * gamma;
    double eta = 0.0;
    if (sp.ensemble.kind == Ensemble::Kind::Haar) {
        eta = p / a;
    } else {
        // Rationalized root of gamma eta^2 + a eta - p = 0.
        eta = 2.0 * p / (a + std::sqrt(a * a + 4.0 * p * gamma));
    }
    const double xi = gamma * eta;
    const ScalarRuleFunctionals rule = lmmse_rule(sp.source());
    MismatchedFixedPoint fp{eta, xi, gamma * rule.sensitivity(eta, xi), rule.mse(eta, xi), gamma, 0.0};
    fp.residual = mismatched_residual(sp.ensemble, rule, gamma, eta, xi, fp.chi, fp.delta);
    return fp;
}

double high_snr_efficiency(const Ensemble& e, double q) {
    const double p = e.p;
    if (!(p > q)) return 0.0;
    if (e.kind == Ensemble::Kind::Haar) return (p - q) / (1.0 - q);
    return p - q;
}

double high_snr_mmse(const Ensemble& e, double q) {
    if (!(e.p > q)) throw DomainError("high-SNR mmse needs p > q");
    return -r_transform_inverse(e, high_snr_efficiency(e, q));
}

const char* to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::MapSbs: return "map_sbs";
        case EstimatorKind::ThresholdedLmmse: return "lmmse";
        case EstimatorKind::ThresholdedLasso: return "lasso";
    }
    return "unknown";
}

EstimatorReport map_sbs_performance(const SystemParams& sp, FixedPointBranch branch) {
    const MatchedSolutions sols = solve_matched(sp);
    const FixedPointSolution& fp = branch == FixedPointBranch::Rightmost ? sols.last() : sols.chosen();
    const DecoupledChannel ch = DecoupledChannel::make(sp.source(), fp.eta);
    EstimatorReport rep{EstimatorKind::MapSbs, ch, support_error_rate(ch), mmse_bg(sp.source(), fp.eta)};
    rep.multiplicity = sols.solutions.size();
    return rep;
}

EstimatorReport lmmse_performance(const SystemParams& sp) {
    const MismatchedFixedPoint fp = lmmse_fixed_point(sp);
    const DecoupledChannel ch = DecoupledChannel::make(sp.source(), fp.eta);
    EstimatorReport rep{EstimatorKind::ThresholdedLmmse, ch, support_error_rate(ch), fp.delta};
    rep.gamma_used = fp.gamma;
    return rep;
}

EstimatorReport lasso_performance(const SystemParams& sp, double gamma, LassoCurvature curvature) {
    const LassoSolutions sols = lasso_fixed_points(sp, gamma, curvature);
    const MismatchedFixedPoint& fp = sols.chosen();
    const DecoupledChannel ch = DecoupledChannel::make(sp.source(), fp.eta);
    EstimatorReport rep{EstimatorKind::ThresholdedLasso, ch, support_error_rate(ch), fp.delta};
    rep.gamma_used = gamma;
    rep.multiplicity = sols.solutions.size();
    rep.extrapolated_selection = sols.extrapolated_selection;
    return rep;
}

std::vector<double> lasso_gamma_grid(int points, double lo, double hi) {
    if (points < 2 || !(lo > 0.0) || !(hi > lo)) throw DomainError("gamma grid needs points >= 2 and 0 < lo < hi");
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) grid[static_cast<std::size_t>(k)] = lo * std::pow(hi / lo, double(k) / (points - 1));
    return grid;
}

EstimatorReport best_lasso_performance(const SystemParams& sp, const std::vector<double>& gammas,
                                       LassoCurvature curvature) {
    bool found = false;
    EstimatorReport best{};
    for (double g : gammas) {
        try {
            const EstimatorReport rep = lasso_performance(sp, g, curvature);
            if (!found || rep.error_rate < best.error_rate) {
                best = rep;
                found = true;
            }
        } catch (const NonConvergence&) {
        }
    }
    if (!found) throw NonConvergence("no Lasso weight on the grid converged", std::numeric_limits<double>::quiet_NaN());
    return best;
}

}  // namespace bgsr
