#include "bgsr/replica.hpp"

#include "bgsr/errors.hpp"
#include "bgsr/quadrature.hpp"
#include "marchenko_pastur.hpp"
#include "roots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bgsr {
namespace {

constexpr int kScanPoints = 2000;
constexpr int kRefineFactor = 10;

bool is_haar(const SystemParams& sp) { return sp.ensemble.kind == Ensemble::Kind::Haar; }

using detail::bisect_log;

std::vector<double> crossings(const SystemParams& sp, int points) {
    const double span = 1.0 + sp.snr();
    const double lo = 1e-9 * span;
    const double hi = 10.0 * span / std::max(sp.ensemble.p, 1e-3);
    auto d = [&](double x) { return matched_mapping(sp, x) - x; };

    const double ratio = std::pow(hi / lo, 1.0 / (points - 1));
    std::vector<double> roots;
    double x_prev = lo;
    double d_prev = d(lo);
    for (int k = 1; k < points; ++k) {
        const double x = k == points - 1 ? hi : lo * std::pow(ratio, k);
        const double dx = d(x);
        if (d_prev == 0.0) {
            roots.push_back(x_prev);
        } else if ((dx > 0.0) != (d_prev > 0.0) && dx != 0.0) {
            roots.push_back(bisect_log(d, x_prev, x, d_prev));
        }
        x_prev = x;
        d_prev = dx;
    }
    if (d_prev == 0.0) roots.push_back(x_prev);
    return roots;
}

// Positive root nu of the Haar (alpha, nu) system.
double haar_nu(double p, double q, double px) {
    const double b = px * (p - q) - 1.0;
    const double c = 4.0 * p * px * (1.0 - q);
    const double disc = std::sqrt(b * b + c);
    if (b < 0.0) return 2.0 * p / (disc - b);
    return (b + disc) / (2.0 * px * (1.0 - q));
}

}  // namespace

SystemParams SystemParams::make(const Ensemble& e, double q, double px) {
    BernoulliGaussianSource::make(q, px);
    return {e, q, px};
}

double snr_db_to_px(double snr_db, double q) {
    if (!std::isfinite(snr_db)) throw DomainError("SNR must be finite");
    if (!(q > 0.0)) throw DomainError("q must be positive");
    return std::pow(10.0, snr_db / 10.0) / q;
}

SystemParams SystemParams::from_snr_db(const Ensemble& e, double q, double snr_db) {
    return make(e, q, snr_db_to_px(snr_db, q));
}

const char* to_string(Stability s) { return s == Stability::Stable ? "stable" : "unstable"; }

double matched_mapping(const SystemParams& sp, double inv_eta) {
    if (!(inv_eta > 0.0)) throw DomainError("mapping needs 1/eta > 0");
    const double chi = mmse_bg(sp.source(), 1.0 / inv_eta);
    return 1.0 / r_transform(sp.ensemble, -chi);
}

double free_energy_i1(const SystemParams& sp, double eta, double chi) {
    return mutual_info_bg(sp.source(), eta) + r_transform_integral(sp.ensemble, chi) - eta * chi;
}

MatchedSolutions solve_matched(const SystemParams& sp) {
    if (sp.ensemble.p == 0.0) throw NoSolution("no measurements (p = 0): the mapping has no finite fixed point");
    MatchedSolutions out;
    std::vector<double> roots = crossings(sp, kScanPoints);
    // The mapping starts above the diagonal and ends below it, so a
    // well-resolved scan crosses an odd number of times. An even count means
    // a near-tangent pair slipped between grid points.
    if (roots.size() % 2 == 0) {
        roots = crossings(sp, kScanPoints * kRefineFactor);
        out.tangency_suspected = roots.size() % 2 == 0;
    }
    if (roots.empty()) throw NoSolution("matched fixed-point scan found no crossing");

    for (double x : roots) {
        const double eta = 1.0 / x;
        const double chi = mmse_bg(sp.source(), eta);
        const double h = 1e-6 * x;
        const double slope = (matched_mapping(sp, x + h) - matched_mapping(sp, x - h)) / (2.0 * h);
        out.solutions.push_back({eta, chi, free_energy_i1(sp, eta, chi),
                                 std::abs(slope) < 1.0 ? Stability::Stable : Stability::Unstable, slope});
    }
    out.rightmost = out.solutions.size() - 1;
    out.selected = 0;
    for (std::size_t k = 1; k < out.solutions.size(); ++k) {
        if (out.solutions[k].free_energy_i1 < out.solutions[out.selected].free_energy_i1) out.selected = k;
    }
    return out;
}

AlphaNuSolution solve_alpha_nu_general(const SystemParams& sp) {
    const double p = sp.ensemble.p;
    const double q = sp.q;
    const double px = sp.px;
    if (p == 0.0) return {0.0, 0.0};

    // Given nu, the right-hand equality fixes t = 1/(1 + alpha nu px) and
    // hence alpha = q / ((1 + nu px) t); the residual is eta(alpha px) - t.
    auto alpha_of = [&](double nu) {
        const double t = q / (1.0 + nu * px) + 1.0 - q;
        return std::pair{q / ((1.0 + nu * px) * t), t};
    };
    auto resid = [&](double nu) {
        const auto [alpha, t] = alpha_of(nu);
        return eta_transform(sp.ensemble, alpha * px) - t;
    };
    const double r_hi = resid(p);
    // At p = 1 the root sits exactly on the endpoint; allow rounding there.
    if (r_hi < -1e-14) throw NoSolution("alpha-nu system: no sign change on (0, p]");
    if (r_hi <= 0.0) return {alpha_of(p).first, p};
    double lo = p * 1e-300;
    double r_lo = resid(lo);
    if (r_lo >= 0.0) return {alpha_of(lo).first, lo};
    const double nu = bisect_log(resid, lo, p, r_lo);
    return {alpha_of(nu).first, nu};
}

AlphaNuSolution solve_alpha_nu(const SystemParams& sp) {
    if (!is_haar(sp)) return solve_alpha_nu_general(sp);
    const double p = sp.ensemble.p;
    const double q = sp.q;
    const double px = sp.px;
    if (p == 0.0) return {0.0, 0.0};
    const double nu = haar_nu(p, q, px);
    if (p == 1.0) {
        // eta_R(x) = 1/(1+x) forces nu = 1; alpha then follows from the
        // right-hand equality.
        const double t = q / (1.0 + px) + 1.0 - q;
        return {(1.0 / t - 1.0) / px, 1.0};
    }
    return {(p - nu) / (nu * px * (1.0 - p)), nu};
}

double mutual_info_i2(const SystemParams& sp) {
    const double p = sp.ensemble.p;
    const double q = sp.q;
    const double px = sp.px;
    if (p == 0.0) return 0.0;
    if (is_haar(sp)) {
        const double nu = p == 1.0 ? 1.0 : haar_nu(p, q, px);
        return q * std::log1p(nu * px) + binary_divergence(p, nu);
    }
    // F(x, y) with x = p px, y = q / p.
    const auto t = detail::mp_terms(p * px, q / p);
    return q * std::log1p(t.x_minus) + p * std::log1p(t.xy_minus) - t.quarter_f / px;
}

double mutual_info_i2_general(const SystemParams& sp) {
    if (sp.ensemble.p == 0.0) return 0.0;
    const auto [alpha, nu] = solve_alpha_nu_general(sp);
    const double t = sp.q / (1.0 + nu * sp.px) + 1.0 - sp.q;
    return shannon_transform(sp.ensemble, alpha * sp.px) + sp.q * std::log1p(nu * sp.px) + std::log(t);
}

MutualInfoRate mutual_info_total(const SystemParams& sp) {
    if (sp.ensemble.p == 0.0) return {0.0, 0.0, 0.0, false};
    const auto sol = solve_matched(sp);
    const double i1 = sol.chosen().free_energy_i1;
    const double i2 = mutual_info_i2(sp);
    double i = i1 - i2;
    const double hq = binary_entropy(sp.q);
    bool exceeded = false;
    if (i > hq) {
        exceeded = i - hq > 1e-8;
        i = hq;
    }
    return {i, i1, i2, exceeded};
}

double bound_unitary_upper(const SystemParams& sp) {
    if (!is_haar(sp)) throw DomainError("the unitary bound applies to the Haar ensemble only");
    // I(V; V + Z) - q log(1 + px) is the support information at unit SNR scale.
    return support_info_bg(sp.source(), 1.0);
}

double bound_shannon_upper(const SystemParams& sp) { return shannon_transform(sp.ensemble, sp.snr()); }

double bound_mf_upper(const SystemParams& sp) { return mutual_info_bg(sp.source(), spectrum_mean(sp.ensemble)); }

double bound_sic_lower(const SystemParams& sp) {
    const double p = sp.ensemble.p;
    const auto src = sp.source();
    auto integrand = [&](double beta) {
        return mutual_info_bg(src, sic_multiuser_efficiency(sp.ensemble, sp.snr(), beta));
    };
    quad::Options opt;
    opt.initial_order = 64;
    opt.max_order = 1024;
    opt.rel_tol = 1e-9;
    // The efficiency bends sharply at beta = p when the SNR is high.
    if (p > 0.0 && p < 1.0) {
        return quad::legendre(integrand, 0.0, p, opt).value + quad::legendre(integrand, p, 1.0, opt).value;
    }
    return quad::legendre(integrand, 0.0, 1.0, opt).value;
}

double bound_shannon_info_upper(const SystemParams& sp) { return bound_shannon_upper(sp) - mutual_info_i2(sp); }

double information_upper_bound(const SystemParams& sp) {
    const double i2 = mutual_info_i2(sp);
    double ub = std::min({binary_entropy(sp.q), bound_shannon_upper(sp) - i2, bound_mf_upper(sp) - i2});
    if (is_haar(sp)) ub = std::min(ub, bound_unitary_upper(sp));
    return ub;
}

double distortion_lower_bound_from(double q, double info_upper) {
    if (!(q > 0.0 && q <= 0.5)) throw DomainError("the distortion bound assumes 0 < q <= 1/2");
    const double gap = binary_entropy(q) - info_upper;
    if (gap <= 0.0) return 0.0;
    return binary_entropy_inverse(std::min(gap, kLn2));
}

double distortion_lower_bound(const SystemParams& sp) {
    if (!(sp.q <= 0.5)) throw DomainError("the distortion bound assumes q <= 1/2");
    return distortion_lower_bound_from(sp.q, information_upper_bound(sp));
}

HighSnrCap high_snr_converse_check(const SystemParams& sp) {
    const double p = sp.ensemble.p;
    const double q = sp.q;
    if (p > q) throw DomainError("the high-SNR converse applies to p <= q");
    double cap = 0.0;
    if (p == q) {
        cap = -(1.0 - q) * std::log1p(-q);
    } else if (p > 0.0) {
        cap = -(1.0 - p) * std::log1p(-p) - (q - p) * std::log(q / (q - p));
    }
    return {cap, cap < binary_entropy(q)};
}

}  // namespace bgsr
