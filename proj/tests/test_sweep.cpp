#include "doctest.h"

#include "bgsr/errors.hpp"
#include "bgsr/replica.hpp"
#include "bgsr/scalar_channel.hpp"
#include "bgsr/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

using namespace bgsr;
using namespace bgsr::sweep;

namespace {

std::size_t column(const Table& t, const std::string& name) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    REQUIRE_MESSAGE(it != t.header.end(), "missing column " << name);
    return static_cast<std::size_t>(it - t.header.begin());
}

double cell(const Table& t, std::size_t row, const std::string& name) {
    const std::string& s = t.rows.at(row).at(column(t, name));
    REQUIRE_MESSAGE(!s.empty(), "empty cell " << name << " in row " << row);
    double x = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    REQUIRE(res.ec == std::errc{});
    REQUIRE(res.ptr == s.data() + s.size());
    return x;
}

std::string footer(const Table& t, const std::string& key) {
    for (const auto& [k, v] : t.footer)
        if (k == key) return v;
    FAIL("missing footer " << key);
    return {};
}

double footer_number(const Table& t, const std::string& key) { return std::stod(footer(t, key)); }

std::string render(const Table& t) {
    std::ostringstream os;
    t.write(os);
    return os.str();
}

SweepSpec p_sweep(Ensemble::Kind kind, double start, double stop, int points, double snr_db) {
    SweepSpec s;
    s.axis = Axis::P;
    s.start = start;
    s.stop = stop;
    s.points = points;
    s.ensemble = kind;
    s.q = 0.2;
    s.snr_db = snr_db;
    return s;
}

SystemParams haar(double p, double snr_db) { return SystemParams::from_snr_db(Ensemble::make(Ensemble::Kind::Haar, p), 0.2, snr_db); }

}  // namespace

TEST_CASE("number formatting is round-trip exact and locale independent") {
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(-2.0) == "-2");
    CHECK(format_number(std::nan("")).empty());
    for (double x : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -7.25e-9}) {
        const std::string s = format_number(x);
        CHECK(s.find(',') == std::string::npos);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == x);
    }
}

TEST_CASE("tables are written with a header, fixed columns and trailing newlines") {
    Table t;
    t.header = {"a", "b", "flag"};
    t.rows = {{"1", "", "b:NoSolution"}, {"2", "0.5", ""}};
    t.footer = {{"units", "nats"}};
    CHECK(render(t) == "a,b,flag\n1,,b:NoSolution\n2,0.5,\n# units=nats\n");
}

TEST_CASE("sweep specification validation and grids") {
    SweepSpec s = p_sweep(Ensemble::Kind::Haar, 0.2, 1.0, 5, 20.0);
    const auto g = s.grid();
    REQUIRE(g.size() == 5);
    CHECK(g.front() == 0.2);
    CHECK(g.back() == 1.0);
    CHECK(g[2] == 0.6);

    s.scale = Scale::Log;
    s.start = 1e-3;
    s.stop = 1.0;
    s.points = 4;
    const auto lg = s.grid();
    CHECK(lg.front() == 1e-3);
    CHECK(lg.back() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(lg[1] == doctest::Approx(1e-2).epsilon(1e-12));

    SweepSpec bad = s;
    bad.start = 0.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = s;
    bad.points = 1;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = s;
    bad.start = bad.stop;
    CHECK_THROWS_AS(bad.validate(), DomainError);

    SweepSpec snr = p_sweep(Ensemble::Kind::IidVar1OverN, 0.0, 30.0, 4, 0.0);
    snr.axis = Axis::SnrDb;
    snr.p = 0.4;
    const SystemParams sp = snr.params_at(10.0);
    CHECK(sp.ensemble.p == 0.4);
    CHECK(sp.snr() == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("info: units convert every information column and h(q) is reported") {
    SweepSpec s = p_sweep(Ensemble::Kind::Haar, 0.3, 1.0, 4, 10.0);
    const Table nats = info_table(s);
    s.units = Units::Bits;
    const Table bits = info_table(s);
    CHECK(footer(nats, "units") == "nats");
    CHECK(footer(bits, "units") == "bits");
    CHECK(footer_number(nats, "h_q") == doctest::Approx(binary_entropy(0.2)).epsilon(1e-15));
    CHECK(footer_number(bits, "h_q") == doctest::Approx(nats_to_bits(binary_entropy(0.2))).epsilon(1e-15));
    REQUIRE(nats.rows.size() == bits.rows.size());
    for (std::size_t r = 0; r < nats.rows.size(); ++r)
        for (const char* c : {"i_total", "i1", "i2", "ub_unitary", "ub_shannon", "ub_mf", "lb_sic"})
            CHECK(cell(bits, r, c) == doctest::Approx(cell(nats, r, c) / kLn2).epsilon(1e-14));
}

TEST_CASE("info: the full-rate row meets the unitary bound") {
    const Table t = info_table(p_sweep(Ensemble::Kind::Haar, 0.5, 1.0, 2, 20.0));
    const std::size_t last = t.rows.size() - 1;
    CHECK(cell(t, last, "p") == 1.0);
    CHECK(std::abs(cell(t, last, "i_total") - cell(t, last, "ub_unitary")) <= 1e-6);
}

TEST_CASE("info: iid sweeps leave the unitary column empty") {
    const Table t = info_table(p_sweep(Ensemble::Kind::IidVar1OverN, 0.5, 1.0, 2, 20.0));
    for (const auto& r : t.rows) CHECK(r[column(t, "ub_unitary")].empty());
    CHECK(footer(t, "rows_flagged") == "0");
}

TEST_CASE("info: near the entropy at p = 0.24 and 50 dB") {
    const Table t = info_table(p_sweep(Ensemble::Kind::Haar, 0.22, 0.26, 3, 50.0));
    const double hq = binary_entropy(0.2);
    CHECK(cell(t, 1, "p") == doctest::Approx(0.24));
    CHECK(cell(t, 1, "i_total") >= hq - 0.01);
    CHECK(cell(t, 0, "i_total") < hq - 0.05);
}

TEST_CASE("info: the interference-cancellation bound is close to i1 at 0 dB") {
    const Table t = info_table(p_sweep(Ensemble::Kind::Haar, 0.025, 1.0, 40, 0.0));
    double gap = 0.0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double d = cell(t, r, "i1") - cell(t, r, "lb_sic");
        CHECK(d >= -1e-8);
        gap = std::max(gap, d);
    }
    CHECK(footer_number(t, "max_gap_i1_minus_lb_sic") == doctest::Approx(gap).epsilon(1e-12));
    // Small relative to i1 itself, which ranges up to several tenths of a nat.
    CHECK(gap < 0.02);
}

TEST_CASE("info: unsolvable rows are flagged and left empty") {
    const Table t = info_table(p_sweep(Ensemble::Kind::Haar, 0.0, 1.0, 2, 20.0));
    const auto& row0 = t.rows.front();
    const std::string& flag = row0[column(t, "flag")];
    // Every cell is either a number or explained by the flag.
    for (std::size_t c = 1; c + 1 < row0.size(); ++c)
        if (row0[c].empty()) CHECK_MESSAGE(flag.find(t.header[c]) != std::string::npos, t.header[c]);
}

TEST_CASE("fixedpoint: solution tables around the transition") {
    struct Case {
        double p;
        std::size_t rows;
        bool selected_is_max;
    };
    for (const Case c : {Case{0.23, 3, true}, Case{0.24, 3, false}, Case{0.33, 1, true}}) {
        CAPTURE(c.p);
        const FixedPointReport rep = fixedpoint_report(haar(c.p, 50.0), 60);
        const Table& s = rep.solutions;
        REQUIRE(s.rows.size() == c.rows);
        std::size_t selected = s.rows.size();
        for (std::size_t r = 0; r < s.rows.size(); ++r)
            if (s.rows[r][column(s, "selected")] == "1") {
                CHECK(selected == s.rows.size());
                selected = r;
            }
        REQUIRE(selected < s.rows.size());
        std::size_t extreme = 0;
        for (std::size_t r = 1; r < s.rows.size(); ++r) {
            const bool better = c.selected_is_max ? cell(s, r, "inv_eta") > cell(s, extreme, "inv_eta")
                                                  : cell(s, r, "inv_eta") < cell(s, extreme, "inv_eta");
            if (better) extreme = r;
        }
        CHECK(selected == extreme);
        CHECK(footer(s, "solutions") == std::to_string(c.rows));

        // Each solution is a crossing of the mapping with the diagonal.
        const SystemParams sp = haar(c.p, 50.0);
        for (std::size_t r = 0; r < s.rows.size(); ++r) {
            const double x = cell(s, r, "inv_eta");
            CHECK(matched_mapping(sp, x) == doctest::Approx(x).epsilon(1e-8));
        }
        REQUIRE(rep.mapping.rows.size() == 60);
        CHECK(cell(rep.mapping, 0, "inv_eta") <= cell(s, 0, "inv_eta"));
        CHECK(cell(rep.mapping, 59, "inv_eta") >= cell(s, s.rows.size() - 1, "inv_eta"));
    }
}

TEST_CASE("distortion: MAP lies between the lower bound and LMMSE on every row") {
    LassoSetup lasso;
    lasso.mode = GammaMode::Fixed;
    lasso.gamma = 1.0;
    for (auto kind : {Ensemble::Kind::Haar, Ensemble::Kind::IidVar1OverN}) {
        CAPTURE(to_string(kind));
        const Table t = distortion_table(p_sweep(kind, 0.1, 1.0, 10, 20.0), lasso);
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            CAPTURE(r);
            CHECK(cell(t, r, "d_map") >= cell(t, r, "d_lower_bound") - 1e-12);
            CHECK(cell(t, r, "d_map") <= cell(t, r, "d_lmmse") + 1e-12);
        }
        CHECK(footer(t, "rows_map_above_lmmse") == "0");
        CHECK(footer(t, "rows_map_below_lower_bound") == "0");
    }
}

namespace {

void check_map_below_tuned_lasso(LassoCurvature curvature) {
    LassoSetup lasso;
    lasso.curvature = curvature;
    const Table t = distortion_table(p_sweep(Ensemble::Kind::Haar, 0.3, 1.0, 8, 20.0), lasso);
    int violations = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        CAPTURE(cell(t, r, "p"));
        const bool ok = cell(t, r, "d_map") <= cell(t, r, "d_lasso") * (1 + 1e-9);
        CHECK(ok);
        if (!ok) ++violations;
    }
    CHECK(footer(t, "rows_map_above_lasso") == std::to_string(violations));
    CHECK(footer(t, "lasso_curvature") == to_string(curvature));
}

}  // namespace

TEST_CASE("distortion: MAP is no worse than the tuned Lasso (divergence curvature)") {
    check_map_below_tuned_lasso(LassoCurvature::Divergence);
}

// With the indicator curvature the asymptotic Lasso error on the unitary
// ensemble drops below MAP for mid-range p; the curvature term undercounts
// the tangential derivative of the complex soft threshold.
TEST_CASE("distortion: MAP is no worse than the tuned Lasso (indicator curvature)" * doctest::should_fail()) {
    check_map_below_tuned_lasso(LassoCurvature::Indicator);
}

TEST_CASE("distortion: the Lasso-to-MAP gap grows with SNR") {
    for (auto curvature : {LassoCurvature::Indicator, LassoCurvature::Divergence}) {
        CAPTURE(to_string(curvature));
        LassoSetup lasso;
        lasso.curvature = curvature;
        const Table low = distortion_table(p_sweep(Ensemble::Kind::Haar, 0.3, 1.0, 8, 20.0), lasso);
        const Table high = distortion_table(p_sweep(Ensemble::Kind::Haar, 0.3, 1.0, 8, 50.0), lasso);
        CHECK(footer_number(high, "lasso_map_gap_log10_mean") > footer_number(low, "lasso_map_gap_log10_mean"));
    }
}

TEST_CASE("distortion: fixed-weight Lasso along the weight axis") {
    SweepSpec s = p_sweep(Ensemble::Kind::IidVar1OverN, 1e-2, 10.0, 4, 20.0);
    s.axis = Axis::Gamma;
    s.scale = Scale::Log;
    s.p = 0.6;
    const Table t = distortion_table(s, LassoSetup{});
    CHECK(t.header.front() == "gamma");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        CHECK(cell(t, r, "lasso_gamma") == cell(t, r, "gamma"));
        CHECK(cell(t, r, "d_map") == cell(t, 0, "d_map"));
    }
}

TEST_CASE("distortion: rows without measurements are flagged, never zero") {
    LassoSetup lasso;
    lasso.mode = GammaMode::Fixed;
    const Table t = distortion_table(p_sweep(Ensemble::Kind::Haar, 0.0, 1.0, 2, 20.0), lasso);
    const auto& row0 = t.rows.front();
    const std::string& flag = row0[column(t, "flag")];
    for (const char* c : {"d_map", "d_lmmse", "d_lasso"}) {
        CHECK(row0[column(t, c)].empty());
        CHECK(flag.find(c) != std::string::npos);
    }
    CHECK(footer_number(t, "rows_flagged") >= 1);
}

namespace {

SimulateSetup lmmse_setup(int trials, int threads) {
    SimulateSetup s;
    s.base.n = 100;
    s.base.matrix_kind = mc::MatrixKind::Haar;
    s.base.params = haar(0.6, 20.0);
    s.base.trials = trials;
    s.base.base_seed = 77;
    s.base.estimator = mc::SimEstimator::Lmmse;
    s.base.threads = threads;
    s.p_values = {0.4, 0.8};
    s.compare = true;
    return s;
}

}  // namespace

TEST_CASE("simulate: output is identical across runs and thread counts") {
    SimulateSetup a = lmmse_setup(12, 1);
    a.versus = mc::MatrixKind::Dft;
    SimulateSetup b = a;
    b.base.threads = 3;
    const SimulateReport ra = simulate(a), rb = simulate(b), rc = simulate(a);
    CHECK(render(ra.summary) == render(rb.summary));
    CHECK(render(ra.per_trial) == render(rb.per_trial));
    CHECK(render(ra.summary) == render(rc.summary));
    // Two kinds, two rates, twelve trials each.
    CHECK(ra.per_trial.rows.size() == 48);
    CHECK(footer(ra.summary, "warning").size() > 0);
}

TEST_CASE("simulate: LMMSE matches its asymptote and Haar matches DFT") {
    SimulateSetup s = lmmse_setup(200, 0);
    s.versus = mc::MatrixKind::Dft;
    const SimulateReport r = simulate(s);
    REQUIRE(r.summary.rows.size() == 4);
    for (std::size_t row = 0; row < r.summary.rows.size(); ++row) {
        CAPTURE(row);
        CHECK(cell(r.summary, row, "completed") == 200);
        const double err = std::abs(cell(r.summary, row, "d_hat") - cell(r.summary, row, "d_asymptotic"));
        CHECK(err <= std::max(2 * cell(r.summary, row, "d_ci95"), 0.02));
        if (r.summary.rows[row][column(r.summary, "matrix_kind")] == "dft")
            CHECK(std::abs(cell(r.summary, row, "z_versus")) <= 3.0);
    }
}
