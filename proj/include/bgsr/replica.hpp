#pragma once

// Replica-symmetric mutual information rate of y = A U V + z, its fixed
// points, and the information-theoretic bounds around it. Values in nats.

#include "bgsr/ensembles.hpp"
#include "bgsr/scalar_channel.hpp"

#include <cstddef>
#include <vector>

namespace bgsr {

struct SystemParams {
    Ensemble ensemble;
    double q;
    double px;

    static SystemParams make(const Ensemble& e, double q, double px);
    // SNR = q px, given in dB.
    static SystemParams from_snr_db(const Ensemble& e, double q, double snr_db);

    BernoulliGaussianSource source() const { return {q, px}; }
    double snr() const { return q * px; }
    SystemParams with_p(double p) const { return make(Ensemble::make(ensemble.kind, p), q, px); }
};

double snr_db_to_px(double snr_db, double q);

enum class Stability { Stable, Unstable };
const char* to_string(Stability s);

struct FixedPointSolution {
    double eta;
    double chi;
    double free_energy_i1;
    Stability stability;
    double slope;  // derivative of the mapping at the solution
};

struct MatchedSolutions {
    std::vector<FixedPointSolution> solutions;  // ascending in 1/eta
    std::size_t selected = 0;                   // minimum free energy
    std::size_t rightmost = 0;                  // largest 1/eta
    bool tangency_suspected = false;            // even crossing count survived refinement

    const FixedPointSolution& chosen() const { return solutions[selected]; }
    const FixedPointSolution& last() const { return solutions[rightmost]; }
};

// f(1/eta) = 1 / R(-mmse(eta)). Fixed points of f are the replica solutions.
double matched_mapping(const SystemParams& sp, double inv_eta);

// Every crossing of f with the diagonal, found by a sign-change scan over a
// geometric grid and refined by bisection. Throws NoSolution if none.
MatchedSolutions solve_matched(const SystemParams& sp);

// I(V; V + eta^{-1/2} Z) + int_0^chi R(-w) dw - eta chi.
double free_energy_i1(const SystemParams& sp, double eta, double chi);

struct AlphaNuSolution {
    double alpha;
    double nu;
};

// Closed form for Haar; the generic solver otherwise.
AlphaNuSolution solve_alpha_nu(const SystemParams& sp);
// Bisection on nu in (0, p] through the eta-transform, any ensemble.
AlphaNuSolution solve_alpha_nu_general(const SystemParams& sp);

// Ensemble-specific closed form.
double mutual_info_i2(const SystemParams& sp);
// V(alpha px) + q log(1 + nu px) - log(1 + alpha nu px) from the generic solver.
double mutual_info_i2_general(const SystemParams& sp);

struct MutualInfoRate {
    double i;
    double i1;
    double i2;
    bool exceeded_entropy;  // raw I exceeded h(q) by more than 1e-8 and was clipped
};

MutualInfoRate mutual_info_total(const SystemParams& sp);

// Upper bound on I for unitary sensing (Haar kind only): I(B; V + Z).
double bound_unitary_upper(const SystemParams& sp);
// Upper bounds on I1.
double bound_shannon_upper(const SystemParams& sp);
double bound_mf_upper(const SystemParams& sp);
// Lower bound on I1 from successive interference cancellation.
double bound_sic_lower(const SystemParams& sp);

// The Shannon bound carried over to I: V(q px) - I2.
double bound_shannon_info_upper(const SystemParams& sp);
// The tightest available upper bound on I.
double information_upper_bound(const SystemParams& sp);

// h^{-1}(h(q) - I_ub), clamped at 0. Requires q <= 1/2.
double distortion_lower_bound(const SystemParams& sp);
double distortion_lower_bound_from(double q, double info_upper);

struct HighSnrCap {
    double i_limit_upper;
    bool below_hq;
};

// Limit of the bound on I as px grows, for p <= q.
HighSnrCap high_snr_converse_check(const SystemParams& sp);

}  // namespace bgsr
