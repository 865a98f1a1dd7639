#pragma once

// Spectral transforms of R = U^H A^H A U for the two sensing ensembles.
// A is diagonal with iid Bernoulli(p) entries, so p is the sampling rate.
// All logarithms are natural.

namespace bgsr {

struct Ensemble {
    enum class Kind { IidVar1OverN, Haar };

    Kind kind;
    double p;

    // Throws DomainError unless 0 <= p <= 1.
    static Ensemble make(Kind kind, double p);
    static Ensemble iid(double p) { return make(Kind::IidVar1OverN, p); }
    static Ensemble haar(double p) { return make(Kind::Haar, p); }
};

const char* to_string(Ensemble::Kind kind);

double r_transform(const Ensemble& e, double z);
double r_transform_derivative(const Ensemble& e, double z);

// Integral of R(-w) for w in [0, chi].
double r_transform_integral(const Ensemble& e, double chi);

// E[1 / (1 + x X)] with X distributed as the limiting spectrum of R.
double eta_transform(const Ensemble& e, double x);

// E[log(1 + x X)].
double shannon_transform(const Ensemble& e, double x);

// Mean of the limiting spectrum, p for both kinds.
double spectrum_mean(const Ensemble& e);

// Multiuser efficiency eta(s; beta) of the successive-cancellation receiver.
double sic_multiuser_efficiency(const Ensemble& e, double s, double beta);

// The z with R(z) = eta, for eta in the range R takes on z <= 0.
double r_transform_inverse(const Ensemble& e, double eta);

}  // namespace bgsr
