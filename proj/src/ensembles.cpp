#include "bgsr/ensembles.hpp"

#include "bgsr/errors.hpp"
#include "marchenko_pastur.hpp"

#include <cmath>
#include <string>

namespace bgsr {
namespace {

bool is_haar(const Ensemble& e) { return e.kind == Ensemble::Kind::Haar; }

// Haar with p in {0, 1} is a constant transform (R = 0 or R = I).
bool degenerate(const Ensemble& e) { return e.p == 0.0 || e.p == 1.0; }

double haar_root(double z, double p) {
    const double arg = (z - 1.0) * (z - 1.0) + 4.0 * z * p;
    if (arg < 0.0) throw DomainError("Haar R-transform: negative square-root argument at z=" + std::to_string(z));
    return std::sqrt(arg);
}

// Larger root of a x^2 - b x - c = 0 (c > 0, a > 0) written as
// (b + sqrt(b^2 + 4ac)) / (2a), switching to the conjugate form when b < 0.
double positive_root(double a, double b, double c) {
    const double disc = std::sqrt(b * b + 4.0 * a * c);
    if (b >= 0.0) return (b + disc) / (2.0 * a);
    return 2.0 * c / (disc - b);
}

}  // namespace

Ensemble Ensemble::make(Kind kind, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("sampling rate p must lie in [0, 1], got " + std::to_string(p));
    return Ensemble{kind, p};
}

const char* to_string(Ensemble::Kind kind) {
    return kind == Ensemble::Kind::Haar ? "haar" : "iid";
}

double r_transform(const Ensemble& e, double z) {
    const double p = e.p;
    if (!is_haar(e)) {
        if (z == 1.0) throw DomainError("iid R-transform has a pole at z=1");
        return p / (1.0 - z);
    }
    if (degenerate(e)) return p;
    // (z - 1 + S) / (2z) multiplied through by the conjugate; finite at z = 0.
    const double s = haar_root(z, p);
    return 2.0 * p / (1.0 - z + s);
}

double r_transform_derivative(const Ensemble& e, double z) {
    const double p = e.p;
    if (!is_haar(e)) {
        if (z == 1.0) throw DomainError("iid R-transform has a pole at z=1");
        return p / ((1.0 - z) * (1.0 - z));
    }
    if (degenerate(e)) return 0.0;
    const double s = haar_root(z, p);
    const double ds = (z - 1.0 + 2.0 * p) / s;
    const double den = 1.0 - z + s;
    return -2.0 * p * (ds - 1.0) / (den * den);
}

double r_transform_integral(const Ensemble& e, double chi) {
    if (!(chi >= 0.0)) throw DomainError("R-transform integral needs chi >= 0");
    const double p = e.p;
    if (!is_haar(e)) return p * std::log1p(chi);
    if (p == 0.0) return 0.0;
    if (p == 1.0) return chi;
    if (chi == 0.0) return 0.0;

    const double rho = std::sqrt((1.0 + chi) * (1.0 + chi) - 4.0 * chi * p);
    // Both log arguments can cancel to O(1 - p); rewrite those cases via
    // (u + rho)(rho - u) = rho^2 - u^2.
    const double u1 = 1.0 + chi - 2.0 * p;
    const double a1 = u1 >= 0.0 ? u1 + rho : 4.0 * p * (1.0 - p) / (rho - u1);
    const double u2 = 1.0 + chi * (1.0 - 2.0 * p);
    const double a2 = u2 >= 0.0 ? u2 + rho : 4.0 * chi * chi * p * (1.0 - p) / (rho - u2);
    const double lead = 1.0 + chi - rho;
    return 0.5 * (lead - 2.0 * p * std::log(2.0 * (1.0 - p)) + std::log1p(-p) -
                  (1.0 - 2.0 * p) * std::log(a1) + std::log(a2));
}

double eta_transform(const Ensemble& e, double x) {
    if (!(x >= 0.0)) throw DomainError("eta-transform needs x >= 0");
    const double p = e.p;
    if (is_haar(e)) return 1.0 - p + p / (1.0 + x);
    if (x == 0.0) return 1.0;
    // Positive root of x t^2 - ((1-p)x - 1) t - 1 = 0.
    return positive_root(x, (1.0 - p) * x - 1.0, 1.0);
}

double shannon_transform(const Ensemble& e, double x) {
    if (!(x >= 0.0)) throw DomainError("Shannon transform needs x >= 0");
    const double p = e.p;
    if (is_haar(e)) return p * std::log1p(x);
    if (x == 0.0 || p == 0.0) return 0.0;
    // Marchenko-Pastur closed form with aspect ratio p.
    const auto t = detail::mp_terms(x, p);
    return p * std::log1p(t.x_minus) + std::log1p(t.xy_minus) - t.quarter_f / x;
}

double spectrum_mean(const Ensemble& e) { return e.p; }

double sic_multiuser_efficiency(const Ensemble& e, double s, double beta) {
    if (!(s >= 0.0)) throw DomainError("SIC efficiency needs s >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("SIC efficiency needs beta in [0, 1]");
    const double p = e.p;
    if (s == 0.0) return p;
    const double b = (p - beta) * s - 1.0;
    // Both kinds solve a x^2 - b x - p = 0 with a = s (iid) or (1-beta)s
    // (Haar). When b < 0 the conjugate form never divides by a, which also
    // covers the Haar beta -> 1 limit p / (1 + (1-p)s).
    const double a = is_haar(e) ? (1.0 - beta) * s : s;
    if (b < 0.0) return 2.0 * p / (std::sqrt(b * b + 4.0 * a * p) - b);
    return (b + std::sqrt(b * b + 4.0 * a * p)) / (2.0 * a);
}

double r_transform_inverse(const Ensemble& e, double eta) {
    const double p = e.p;
    if (!(eta > 0.0)) throw DomainError("inverse R-transform needs eta > 0");
    if (p == 0.0) throw DomainError("R-transform is identically 0 at p=0 and has no inverse");
    if (!is_haar(e)) return 1.0 - p / eta;
    if (p == 1.0) throw DomainError("Haar R-transform is constant at p=1 and has no inverse");
    if (!(eta < 1.0)) throw DomainError("Haar inverse R-transform needs eta < 1");
    return (eta - p) / ((1.0 - eta) * eta);
}

}  // namespace bgsr
