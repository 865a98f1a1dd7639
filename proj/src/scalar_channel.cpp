#include "bgsr/scalar_channel.hpp"

#include "bgsr/errors.hpp"
#include "bgsr/quadrature.hpp"

#include <cmath>
#include <string>

namespace bgsr {
namespace {

// h(sigmoid(l)) without overflow for large |l|.
double entropy_of_logit(double l) {
    const double m = std::abs(l);
    const double e = std::exp(-m);
    return std::log1p(e) + m * e / (1.0 + e);
}

// Conditional entropy H(B | sqrt(a) V + Z). With b = 1 + a px, the posterior
// log-odds is l0 + (1 - 1/b) |y|^2 where l0 = log(q/(1-q)) - log b. Given
// B = 1, |y|^2 = b t with t ~ Exp(1); given B = 0, |y|^2 = t. Each branch is
// a sigmoid in t centred where the log-odds crosses zero.
double support_equivocation(const BernoulliGaussianSource& src, double a, const quad::Options& opt) {
    const double q = src.q;
    const double gain = a * src.px;  // b - 1, formed without cancellation
    const double log_b = std::log1p(gain);
    const double l0 = std::log(q) - std::log1p(-q) - log_b;

    auto branch = [&](double slope) {
        auto g = [&](double t) { return entropy_of_logit(l0 + slope * t); };
        const double feature = slope > 0.0 ? -l0 / slope : 0.0;
        return quad::exp_weighted(g, feature, slope, opt).value;
    };
    const double active = branch(gain);
    const double inactive = branch(gain / (1.0 + gain));
    return q * active + (1.0 - q) * inactive;
}

}  // namespace

BernoulliGaussianSource BernoulliGaussianSource::make(double q, double px) {
    if (!(q > 0.0 && q <= 1.0)) throw DomainError("activity probability q must lie in (0, 1], got " + std::to_string(q));
    if (!(px > 0.0) || !std::isfinite(px)) throw DomainError("signal power px must be positive and finite");
    return {q, px};
}

DecoupledChannel DecoupledChannel::make(const BernoulliGaussianSource& source, double eta) {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("decoupled channel eta must be finite and >= 0");
    return {source, eta};
}

double binary_entropy(double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("binary entropy needs x in [0, 1]");
    double h = 0.0;
    if (x > 0.0) h -= x * std::log(x);
    if (x < 1.0) h -= (1.0 - x) * std::log1p(-x);
    return h;
}

double binary_entropy_inverse(double y) {
    if (!(y >= 0.0) || !(y <= kLn2 + 1e-12)) throw DomainError("binary entropy inverse needs y in [0, ln 2]");
    if (y >= kLn2) return 0.5;
    double lo = 0.0;
    double hi = 0.5;
    while (hi - lo > 1e-15) {
        const double mid = 0.5 * (lo + hi);
        (binary_entropy(mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double binary_divergence(double a, double b) {
    if (!(a >= 0.0 && a <= 1.0) || !(b >= 0.0 && b <= 1.0)) throw DomainError("binary divergence needs arguments in [0, 1]");
    if (a == b) return 0.0;
    double d = 0.0;
    if (a > 0.0) {
        if (b == 0.0) throw DomainError("binary divergence is infinite");
        d += a * std::log(a / b);
    }
    if (a < 1.0) {
        if (b == 1.0) throw DomainError("binary divergence is infinite");
        d += (1.0 - a) * (std::log1p(-a) - std::log1p(-b));
    }
    return d;
}

double mutual_info_bg(const BernoulliGaussianSource& src, double a, const quad::Options& opt) {
    if (!(a >= 0.0)) throw DomainError("mutual information needs a >= 0");
    if (a == 0.0) return 0.0;
    const double log_b = std::log1p(a * src.px);
    if (src.q == 1.0) return log_b;
    return binary_entropy(src.q) + src.q * log_b - support_equivocation(src, a, opt);
}

double support_info_bg(const BernoulliGaussianSource& src, double a, const quad::Options& opt) {
    if (!(a >= 0.0)) throw DomainError("mutual information needs a >= 0");
    if (a == 0.0 || src.q == 1.0) return 0.0;
    return binary_entropy(src.q) - support_equivocation(src, a, opt);
}

double hurwitz_lerch_phi(double z, double s, double a, const quad::Options& opt) {
    if (!(z < 1.0)) throw DomainError("Lerch Phi needs z < 1");
    if (!(s > 0.0) || !(a > 0.0)) throw DomainError("Lerch Phi needs s > 0 and a > 0");
    // A narrow step (a < 1) is avoided by shifting a up one.
    if (a < 1.0) return std::pow(a, -s) + z * hurwitz_lerch_phi(z, s, a + 1.0, opt);
    // With u = a t the integrand is u^{s-1} e^{-u} / (1 - z e^{-u/a}); for
    // z < -1 the denominator switches regime at u = a log(-z).
    auto g = [&](double u) { return std::pow(u, s - 1.0) / (1.0 - z * std::exp(-u / a)); };
    const double feature = z < -1.0 ? a * std::log(-z) : 0.0;
    const double integral = quad::exp_weighted(g, feature, 1.0 / a, opt).value;
    return std::pow(a, -s) * integral / std::tgamma(s);
}

double mmse_bg(const BernoulliGaussianSource& src, double eta, const quad::Options& opt) {
    if (!(eta >= 0.0)) throw DomainError("mmse needs eta >= 0");
    const double q = src.q;
    const double px = src.px;
    if (eta == 0.0) return q * px;
    const double g = px * eta;
    if (q == 1.0) return px / (1.0 + g);
    // The Lerch form q[px - Phi(z, 2, 1/g) / (eta (1+g))] subtracts two
    // nearly equal terms at high SNR. One step of Phi(z,s,a) = a^-s + z Phi(z,s,a+1)
    // turns it into a sum of positive terms.
    const double z = -(1.0 + g) * (1.0 - q) / q;
    const double phi = hurwitz_lerch_phi(z, 2.0, 1.0 + 1.0 / g, opt);
    return q * px / (1.0 + g) + (1.0 - q) * phi / eta;
}

double posterior_active(const DecoupledChannel& ch, double y_sq) {
    if (!(y_sq >= 0.0)) throw DomainError("posterior needs |y|^2 >= 0");
    const double q = ch.source.q;
    if (q == 1.0) return 1.0;
    const double g = ch.eta * ch.source.px;
    // Log-odds of inactivity; evaluated on the side where exp cannot overflow.
    const double l = std::log1p(-q) - std::log(q) + std::log1p(g) - g * ch.mu() * y_sq;
    if (l > 0.0) {
        const double e = std::exp(-l);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(l));
}

EnergyThreshold map_threshold(const DecoupledChannel& ch) {
    if (!(ch.eta > 0.0)) throw DomainError("MAP threshold needs eta > 0");
    const double q = ch.source.q;
    if (q == 1.0) return {true, 0.0};
    const double g = ch.eta * ch.source.px;
    const double l = std::log1p(-q) - std::log(q) + std::log1p(g);
    if (l < 0.0) return {true, 0.0};
    return {false, l / (g * ch.mu())};
}

double detector_error_rate(const DecoupledChannel& ch, const EnergyThreshold& th) {
    const double q = ch.source.q;
    if (th.always_active) return 1.0 - q;
    const double miss = -std::expm1(-ch.mu() * th.tau);
    const double false_alarm = std::exp(-ch.eta * th.tau);
    return q * miss + (1.0 - q) * false_alarm;
}

double support_error_rate(const DecoupledChannel& ch) { return detector_error_rate(ch, map_threshold(ch)); }

}  // namespace bgsr
