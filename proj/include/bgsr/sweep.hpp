#pragma once

// Parameter sweeps that produce the plot-ready tables behind the command-line
// tool. Every table has a fixed column order; missing values are empty cells
// explained by the row's flag column, never zeros.

#include "bgsr/estimators.hpp"
#include "bgsr/montecarlo.hpp"
#include "bgsr/replica.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bgsr::sweep {

enum class Axis { P, SnrDb, Gamma };
enum class Scale { Linear, Log };
enum class Units { Bits, Nats };
const char* to_string(Axis a);

struct SweepSpec {
    Axis axis = Axis::P;
    double start = 0.0;
    double stop = 1.0;
    int points = 40;
    Scale scale = Scale::Linear;
    Ensemble::Kind ensemble = Ensemble::Kind::Haar;
    // Values of the fields that are not swept.
    double p = 0.5;
    double q = 0.2;
    double snr_db = 20.0;
    Units units = Units::Nats;
    int threads = 0;  // 0 uses the hardware concurrency

    // Throws DomainError unless start < stop, points >= 2 and a log scale
    // starts above zero.
    void validate() const;
    std::vector<double> grid() const;
    // Params at one grid value; for the Gamma axis the value is not part of them.
    SystemParams params_at(double value) const;
};

// Cells are preformatted; an empty string is a missing value.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::pair<std::string, std::string>> footer;  // written as "# key=value"

    void write(std::ostream& os) const;
};

// Shortest round-trip decimal form, independent of the locale.
std::string format_number(double x);

// I and its bounds along the sweep.
Table info_table(const SweepSpec& spec);

struct FixedPointReport {
    Table mapping;    // inv_eta, mapping, free_energy
    Table solutions;  // one row per fixed point
};

// The matched mapping on a log grid spanning every solution, and the solutions.
FixedPointReport fixedpoint_report(const SystemParams& sp, int grid_points = 200);

// How the asymptotic Lasso curve picks its weight.
enum class GammaMode { Fixed, Best, Heuristic };
const char* to_string(GammaMode m);

struct LassoSetup {
    GammaMode mode = GammaMode::Best;
    double gamma = 1.0;                 // used by Fixed
    std::vector<double> grid = lasso_gamma_grid();  // used by Best
    int heuristic_n = 100;              // used by Heuristic
    int heuristic_draws = 200;
    std::uint64_t seed = 1;
    LassoCurvature curvature = LassoCurvature::Indicator;
};

// Mean of the data-dependent weight heuristic over model draws. Needs no
// Lasso solve, only G^H y.
double mean_heuristic_gamma(mc::MatrixKind kind, int n, const SystemParams& sp, int draws, std::uint64_t seed);

// Error rates of every estimator along the sweep. On the Gamma axis only the
// Lasso column varies.
Table distortion_table(const SweepSpec& spec, const LassoSetup& lasso);

struct SimulateSetup {
    mc::SimConfig base;
    std::vector<double> p_values;  // one row per value
    bool compare = false;
    // Second matrix kind run on an independent stream; its row gains the
    // z-score of the difference in error rate.
    std::optional<mc::MatrixKind> versus;
};

struct SimulateReport {
    Table summary;
    // trial_index, n, p, q, snr_db, matrix_kind, estimator, gamma_used,
    // support_errors, squared_error, failure
    Table per_trial;
};

// One summary row per sampling rate with the aggregated simulation and, when
// compare is set, the matching asymptotic values and z-scores.
SimulateReport simulate(const SimulateSetup& setup);

}  // namespace bgsr::sweep
