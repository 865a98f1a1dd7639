#pragma once

#include "bgsr/quadrature.hpp"

// Scalar Bernoulli-Gaussian source V = X B observed through complex AWGN.
// X ~ CN(0, px), B ~ Bernoulli(q), noise CN(0, 1). Everything is in nats.

namespace bgsr {

struct BernoulliGaussianSource {
    double q;
    double px;

    // Throws DomainError unless 0 < q <= 1 and px > 0.
    static BernoulliGaussianSource make(double q, double px);
    double energy() const { return q * px; }
};

// Y = V + eta^{-1/2} Z.
struct DecoupledChannel {
    BernoulliGaussianSource source;
    double eta;

    static DecoupledChannel make(const BernoulliGaussianSource& source, double eta);
    // Precision of Y given an active component: eta / (1 + px eta).
    double mu() const { return eta / (1.0 + source.px * eta); }
};

constexpr double kLn2 = 0.69314718055994530942;
inline double nats_to_bits(double nats) { return nats / kLn2; }

double binary_entropy(double x);
// Inverse on the increasing branch, result in [0, 1/2]. Inputs above ln 2
// are clamped to ln 2.
double binary_entropy_inverse(double y);
double binary_divergence(double a, double b);

// I(V; sqrt(a) V + Z).
double mutual_info_bg(const BernoulliGaussianSource& src, double a, const quad::Options& opt = {});

// I(B; sqrt(a) V + Z), the information about the support alone.
double support_info_bg(const BernoulliGaussianSource& src, double a, const quad::Options& opt = {});

// E|V - E[V|Y]|^2 for Y = V + eta^{-1/2} Z. eta = 0 gives the prior energy.
double mmse_bg(const BernoulliGaussianSource& src, double eta, const quad::Options& opt = {});

// Lerch transcendent Phi(z, s, a) for z < 1, s > 0, a > 0, from its
// Laplace-type integral representation.
double hurwitz_lerch_phi(double z, double s, double a, const quad::Options& opt = {});

// P[B = 1 | |Y|^2 = y_sq].
double posterior_active(const DecoupledChannel& ch, double y_sq);

// Energy detector |y|^2 >= tau. When the prior favours activity so much
// that no observation can flip the decision, the detector is constant.
struct EnergyThreshold {
    bool always_active = false;
    double tau = 0.0;
};

EnergyThreshold map_threshold(const DecoupledChannel& ch);

// Error rate of the energy detector at the MAP threshold.
double support_error_rate(const DecoupledChannel& ch);

// Error rate of an energy detector with an arbitrary threshold.
double detector_error_rate(const DecoupledChannel& ch, const EnergyThreshold& th);

}  // namespace bgsr
