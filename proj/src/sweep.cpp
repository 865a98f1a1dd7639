#include "bgsr/sweep.hpp"

#include "bgsr/errors.hpp"
#include "bgsr/scalar_channel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

namespace bgsr::sweep {
namespace {

constexpr double kOrderSlack = 1e-9;
// Independent stream for the comparison run of simulate.
constexpr std::uint64_t kVersusSeedOffset = 0x9E3779B97F4A7C15ULL;

// Evaluates f at every index on a small pool; results stay in index order.
template <class T>
std::vector<T> parallel_map(std::size_t count, int threads, const std::function<T(std::size_t)>& f) {
    std::vector<T> out(count);
    unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < count; i = next++) out[i] = f(i);
    };
    if (workers == 1) {
        work();
        return out;
    }
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    return out;
}

// Short tag naming the failure, e.g. "NoSolution".
std::string failure_tag(const std::exception& e) {
    if (dynamic_cast<const NoSolution*>(&e)) return "NoSolution";
    if (dynamic_cast<const NonConvergence*>(&e)) return "NonConvergence";
    if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
    return "Error";
}

struct Flags {
    std::vector<std::string> items;
    void add(const std::string& column, const std::exception& e) { items.push_back(column + ":" + failure_tag(e)); }
    void add(const std::string& text) { items.push_back(text); }
    std::string str() const {
        std::string s;
        for (const auto& it : items) s += (s.empty() ? "" : ";") + it;
        return s;
    }
};

// Runs f and formats its value, or leaves the cell empty and flags it.
std::string guarded(const std::string& column, Flags& flags, const std::function<double()>& f) {
    try {
        return format_number(f());
    } catch (const std::exception& e) {
        flags.add(column, e);
        return "";
    }
}

std::optional<double> parse(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    double x = 0.0;
    std::from_chars(cell.data(), cell.data() + cell.size(), x);
    return x;
}

// The dB value recovered from px carries rounding noise; 12 digits drop it.
std::string snr_db_cell(const SystemParams& sp) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, 10.0 * std::log10(sp.snr()), std::chars_format::general, 12);
    return std::string(buf, res.ptr);
}

}  // namespace

const char* to_string(Axis a) {
    switch (a) {
        case Axis::P: return "p";
        case Axis::SnrDb: return "snr_db";
        case Axis::Gamma: return "gamma";
    }
    return "?";
}

const char* to_string(GammaMode m) {
    switch (m) {
        case GammaMode::Fixed: return "fixed";
        case GammaMode::Best: return "best";
        case GammaMode::Heuristic: return "heuristic";
    }
    return "?";
}

void SweepSpec::validate() const {
    if (!(start < stop)) throw DomainError("sweep needs start < stop");
    if (points < 2) throw DomainError("sweep needs at least two points");
    if (scale == Scale::Log && !(start > 0.0)) throw DomainError("log sweep needs a positive start");
    if (axis != Axis::P && !(p >= 0.0 && p <= 1.0)) throw DomainError("p must lie in [0, 1]");
    if (!(q > 0.0 && q <= 1.0)) throw DomainError("q must lie in (0, 1]");
}

std::vector<double> SweepSpec::grid() const {
    validate();
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) {
        const double t = static_cast<double>(k) / (points - 1);
        g[static_cast<std::size_t>(k)] = scale == Scale::Linear
                                             ? (start * (points - 1 - k) + stop * k) / (points - 1)
                                             : start * std::pow(stop / start, t);
    }
    g.back() = stop;
    return g;
}

SystemParams SweepSpec::params_at(double value) const {
    const double p_here = axis == Axis::P ? value : p;
    const double snr_here = axis == Axis::SnrDb ? value : snr_db;
    return SystemParams::from_snr_db(Ensemble::make(ensemble, p_here), q, snr_here);
}

std::string format_number(double x) {
    if (std::isnan(x)) return "";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

void Table::write(std::ostream& os) const {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
        os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    for (const auto& [k, v] : footer) os << "# " << k << '=' << v << '\n';
}

Table info_table(const SweepSpec& spec) {
    const auto grid = spec.grid();
    if (spec.axis == Axis::Gamma) throw DomainError("info sweeps p or snr_db");
    const double scale = spec.units == Units::Bits ? 1.0 / kLn2 : 1.0;
    const bool haar = spec.ensemble == Ensemble::Kind::Haar;

    Table t;
    t.header = {to_string(spec.axis), "i_total", "i1", "i2", "ub_unitary", "ub_shannon", "ub_mf", "lb_sic", "flag"};
    t.rows = parallel_map<std::vector<std::string>>(grid.size(), spec.threads, [&](std::size_t i) {
        Flags flags;
        std::vector<std::string> row{format_number(grid[i])};
        SystemParams sp;
        try {
            sp = spec.params_at(grid[i]);
        } catch (const std::exception& e) {
            flags.add("params", e);
            row.resize(8);
            row.push_back(flags.str());
            return row;
        }
        std::string i_total, i1, i2;
        try {
            const MutualInfoRate m = mutual_info_total(sp);
            i_total = format_number(m.i * scale);
            i1 = format_number(m.i1 * scale);
            i2 = format_number(m.i2 * scale);
            if (m.exceeded_entropy) flags.add("i_total:clipped");
        } catch (const std::exception& e) {
            flags.add("i_total", e);
        }
        row.insert(row.end(), {i_total, i1, i2});
        row.push_back(haar ? guarded("ub_unitary", flags, [&] { return bound_unitary_upper(sp) * scale; }) : "");
        row.push_back(guarded("ub_shannon", flags, [&] { return bound_shannon_upper(sp) * scale; }));
        row.push_back(guarded("ub_mf", flags, [&] { return bound_mf_upper(sp) * scale; }));
        row.push_back(guarded("lb_sic", flags, [&] { return bound_sic_lower(sp) * scale; }));
        row.push_back(flags.str());
        return row;
    });

    double max_gap = 0.0;
    int flagged = 0;
    for (const auto& r : t.rows) {
        if (!r[8].empty()) ++flagged;
        const auto a = parse(r[2]);
        const auto b = parse(r[7]);
        if (a && b) max_gap = std::max(max_gap, *a - *b);
    }
    t.footer = {{"units", spec.units == Units::Bits ? "bits" : "nats"},
                {"ensemble", to_string(spec.ensemble)},
                {"q", format_number(spec.q)},
                {spec.axis == Axis::P ? "snr_db" : "p", format_number(spec.axis == Axis::P ? spec.snr_db : spec.p)},
                {"h_q", format_number(binary_entropy(spec.q) * scale)},
                {"max_gap_i1_minus_lb_sic", format_number(max_gap)},
                {"rows_flagged", std::to_string(flagged)}};
    return t;
}

FixedPointReport fixedpoint_report(const SystemParams& sp, int grid_points) {
    if (grid_points < 2) throw DomainError("mapping grid needs at least two points");
    const MatchedSolutions sols = solve_matched(sp);
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& s : sols.solutions) {
        lo = std::min(lo, 1.0 / s.eta);
        hi = std::max(hi, 1.0 / s.eta);
    }
    lo *= 0.5;
    hi *= 2.0;

    FixedPointReport out;
    out.mapping.header = {"inv_eta", "mapping", "free_energy"};
    const BernoulliGaussianSource src = sp.source();
    for (int k = 0; k < grid_points; ++k) {
        const double inv_eta = lo * std::pow(hi / lo, static_cast<double>(k) / (grid_points - 1));
        const double eta = 1.0 / inv_eta;
        out.mapping.rows.push_back({format_number(inv_eta), format_number(matched_mapping(sp, inv_eta)),
                                    format_number(free_energy_i1(sp, eta, mmse_bg(src, eta)))});
    }
    out.mapping.footer = {{"ensemble", to_string(sp.ensemble.kind)},
                          {"p", format_number(sp.ensemble.p)},
                          {"q", format_number(sp.q)},
                          {"snr_db", snr_db_cell(sp)},
                          {"solutions", std::to_string(sols.solutions.size())},
                          {"tangency_suspected", sols.tangency_suspected ? "1" : "0"}};

    out.solutions.header = {"inv_eta", "eta", "chi", "stability", "i1", "selected", "rightmost"};
    for (std::size_t i = 0; i < sols.solutions.size(); ++i) {
        const auto& s = sols.solutions[i];
        out.solutions.rows.push_back({format_number(1.0 / s.eta), format_number(s.eta), format_number(s.chi),
                                      to_string(s.stability), format_number(s.free_energy_i1),
                                      i == sols.selected ? "1" : "0", i == sols.rightmost ? "1" : "0"});
    }
    out.solutions.footer = out.mapping.footer;
    return out;
}

double mean_heuristic_gamma(mc::MatrixKind kind, int n, const SystemParams& sp, int draws, std::uint64_t seed) {
    if (draws < 1) throw DomainError("need at least one draw");
    mc::SimConfig cfg;
    cfg.n = n;
    cfg.matrix_kind = kind;
    cfg.params = sp;
    double sum = 0.0;
    int used = 0;
    for (int k = 0; k < draws; ++k) {
        mc::Rng rng(mc::trial_seed(seed, static_cast<std::uint64_t>(k)));
        const mc::ModelSample s = mc::sample_model(cfg, rng);
        const double g = mc::lasso_gamma_heuristic(mc::observed_rows(s), mc::observed_values(s));
        if (g > 0.0) {
            sum += g;
            ++used;
        }
    }
    if (used == 0) throw DomainError("every draw had vanishing observations");
    return sum / used;
}

Table distortion_table(const SweepSpec& spec, const LassoSetup& lasso) {
    const auto grid = spec.grid();
    const bool gamma_axis = spec.axis == Axis::Gamma;
    const mc::MatrixKind sim_kind =
        spec.ensemble == Ensemble::Kind::Haar ? mc::MatrixKind::Haar : mc::MatrixKind::IidGaussian;

    Table t;
    t.header = {to_string(spec.axis), "d_map", "d_amp_conjectured", "d_lmmse", "d_lasso",
                "d_lower_bound", "lasso_gamma", "lasso_multiplicity", "flag"};
    t.rows = parallel_map<std::vector<std::string>>(grid.size(), spec.threads, [&](std::size_t i) {
        Flags flags;
        std::vector<std::string> row{format_number(grid[i])};
        SystemParams sp;
        try {
            sp = spec.params_at(grid[i]);
        } catch (const std::exception& e) {
            flags.add("params", e);
            row.resize(8);
            row.push_back(flags.str());
            return row;
        }
        row.push_back(guarded("d_map", flags, [&] { return map_sbs_performance(sp).error_rate; }));
        row.push_back(guarded("d_amp_conjectured", flags,
                              [&] { return map_sbs_performance(sp, FixedPointBranch::Rightmost).error_rate; }));
        row.push_back(guarded("d_lmmse", flags, [&] { return lmmse_performance(sp).error_rate; }));

        std::string d_lasso, gamma_cell, mult;
        try {
            EstimatorReport rep;
            if (gamma_axis) {
                rep = lasso_performance(sp, grid[i], lasso.curvature);
            } else if (lasso.mode == GammaMode::Fixed) {
                rep = lasso_performance(sp, lasso.gamma, lasso.curvature);
            } else if (lasso.mode == GammaMode::Best) {
                rep = best_lasso_performance(sp, lasso.grid, lasso.curvature);
            } else {
                const double g = mean_heuristic_gamma(sim_kind, lasso.heuristic_n, sp, lasso.heuristic_draws,
                                                      lasso.seed);
                rep = lasso_performance(sp, g, lasso.curvature);
            }
            d_lasso = format_number(rep.error_rate);
            gamma_cell = format_number(rep.gamma_used);
            mult = std::to_string(rep.multiplicity);
            if (rep.extrapolated_selection) flags.add("d_lasso:extrapolated_selection");
        } catch (const std::exception& e) {
            flags.add("d_lasso", e);
        }
        row.insert(row.end(), {d_lasso});
        row.push_back(guarded("d_lower_bound", flags, [&] { return distortion_lower_bound(sp); }));
        row.insert(row.end(), {gamma_cell, mult});
        row.push_back(flags.str());
        return row;
    });

    int over_lasso = 0, over_lmmse = 0, under_bound = 0, flagged = 0, gap_rows = 0;
    double gap_sum = 0.0, gap_max = -std::numeric_limits<double>::infinity();
    for (const auto& r : t.rows) {
        if (!r[8].empty()) ++flagged;
        const auto map = parse(r[1]);
        const auto lmmse = parse(r[3]);
        const auto las = parse(r[4]);
        const auto lb = parse(r[5]);
        if (!map) continue;
        if (las && *map > *las * (1 + kOrderSlack)) ++over_lasso;
        if (lmmse && *map > *lmmse * (1 + kOrderSlack)) ++over_lmmse;
        if (lb && *map < *lb * (1 - kOrderSlack)) ++under_bound;
        if (las && *map > 0.0 && *las > 0.0) {
            const double gap = std::log10(*las / *map);
            gap_sum += gap;
            gap_max = std::max(gap_max, gap);
            ++gap_rows;
        }
    }
    t.footer = {{"ensemble", to_string(spec.ensemble)},
                {"q", format_number(spec.q)},
                {spec.axis == Axis::SnrDb ? "p" : "snr_db",
                 format_number(spec.axis == Axis::SnrDb ? spec.p : spec.snr_db)}};
    if (gamma_axis) t.footer.push_back({"p", format_number(spec.p)});
    t.footer.insert(t.footer.end(),
                    {{"lasso_gamma_mode", gamma_axis ? "swept" : to_string(lasso.mode)},
                     {"lasso_curvature", to_string(lasso.curvature)},
                     {"rows_map_above_lasso", std::to_string(over_lasso)},
                     {"rows_map_above_lmmse", std::to_string(over_lmmse)},
                     {"rows_map_below_lower_bound", std::to_string(under_bound)},
                     {"lasso_map_gap_log10_mean", gap_rows ? format_number(gap_sum / gap_rows) : ""},
                     {"lasso_map_gap_log10_max", gap_rows ? format_number(gap_max) : ""},
                     {"rows_flagged", std::to_string(flagged)}});
    return t;
}

namespace {

struct SimRow {
    mc::SimConfig cfg;
    mc::RunSummary run;
};

double mse_standard_error(const mc::SimConfig& cfg, const mc::RunSummary& run) {
    if (run.completed < 2) return std::numeric_limits<double>::quiet_NaN();
    double ss = 0.0;
    for (const auto& t : run.per_trial) {
        if (t.failed) continue;
        const double dev = t.squared_error / cfg.n - run.mse_hat;
        ss += dev * dev;
    }
    return std::sqrt(ss / (run.completed - 1) / run.completed);
}

}  // namespace

SimulateReport simulate(const SimulateSetup& setup) {
    if (setup.p_values.empty()) throw DomainError("no sampling rates to simulate");
    std::vector<SimRow> runs;
    for (double p : setup.p_values) {
        std::vector<mc::MatrixKind> kinds{setup.base.matrix_kind};
        if (setup.versus) kinds.push_back(*setup.versus);
        for (std::size_t j = 0; j < kinds.size(); ++j) {
            mc::SimConfig cfg = setup.base;
            cfg.matrix_kind = kinds[j];
            cfg.params = SystemParams::make(mc::asymptotic_ensemble(kinds[j], p), setup.base.params.q,
                                            setup.base.params.px);
            if (j == 1) cfg.base_seed = setup.base.base_seed + kVersusSeedOffset;
            runs.push_back({cfg, mc::run_trials(cfg)});
        }
    }

    SimulateReport out;
    Table& t = out.summary;
    t.header = {"p", "n", "matrix_kind", "estimator", "trials", "completed", "failed", "d_hat", "d_ci95",
                "mse_hat", "mean_gamma"};
    if (setup.compare) {
        t.header.insert(t.header.end(), {"d_asymptotic", "mse_asymptotic", "gamma_asymptotic", "z_d", "z_mse"});
    }
    if (setup.versus) t.header.push_back("z_versus");
    t.header.push_back("flag");

    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& [cfg, run] = runs[r];
        Flags flags;
        std::vector<std::string> row{format_number(cfg.params.ensemble.p), std::to_string(cfg.n),
                                     mc::to_string(cfg.matrix_kind), mc::to_string(cfg.estimator),
                                     std::to_string(cfg.trials), std::to_string(run.completed),
                                     std::to_string(run.failed)};
        const bool any = run.completed > 0;
        row.push_back(any ? format_number(run.d_hat) : "");
        row.push_back(any ? format_number(run.d_ci95) : "");
        row.push_back(any ? format_number(run.mse_hat) : "");
        row.push_back(any ? format_number(run.mean_gamma) : "");
        if (run.failed > 0) flags.add("failed_trials");
        if (!any) flags.add("no_completed_trials");

        if (setup.compare) {
            std::string d_asym, mse_asym, g_asym, z_d, z_mse;
            try {
                const SystemParams asym = SystemParams::make(
                    mc::asymptotic_ensemble(cfg.matrix_kind, cfg.params.ensemble.p), cfg.params.q, cfg.params.px);
                EstimatorReport rep;
                if (cfg.estimator == mc::SimEstimator::Lmmse) {
                    rep = lmmse_performance(asym);
                } else {
                    if (!any && !cfg.lasso_gamma) throw DomainError("no completed trial to average gamma over");
                    rep = lasso_performance(asym, cfg.lasso_gamma ? *cfg.lasso_gamma : run.mean_gamma,
                                            cfg.lasso_curvature);
                }
                d_asym = format_number(rep.error_rate);
                mse_asym = format_number(rep.mse);
                g_asym = format_number(rep.gamma_used);
                if (any) {
                    const double se_d = run.d_ci95 / 1.96;
                    if (se_d > 0.0) {
                        z_d = format_number((run.d_hat - rep.error_rate) / se_d);
                    } else {
                        flags.add("z_d:zero_variance");
                    }
                    const double se_m = mse_standard_error(cfg, run);
                    if (se_m > 0.0) {
                        z_mse = format_number((run.mse_hat - rep.mse) / se_m);
                    } else {
                        flags.add("z_mse:zero_variance");
                    }
                }
            } catch (const std::exception& e) {
                flags.add("asymptotic", e);
            }
            row.insert(row.end(), {d_asym, mse_asym, g_asym, z_d, z_mse});
        }
        if (setup.versus) {
            std::string z;
            if (r % 2 == 1) {
                const auto& a = runs[r - 1].run;
                const double se = std::hypot(a.d_ci95, run.d_ci95) / 1.96;
                if (a.completed > 0 && any && se > 0.0) {
                    z = format_number((run.d_hat - a.d_hat) / se);
                } else {
                    flags.add("z_versus:undefined");
                }
            }
            row.push_back(z);
        }
        row.push_back(flags.str());
        t.rows.push_back(std::move(row));
    }

    const mc::SimConfig& b = setup.base;
    t.footer = {{"q", format_number(b.params.q)},
                {"snr_db", snr_db_cell(b.params)},
                {"base_seed", std::to_string(b.base_seed)},
                {"lasso_gamma", b.lasso_gamma ? format_number(*b.lasso_gamma) : "heuristic"},
                {"lasso_curvature", to_string(b.lasso_curvature)}};
    if (b.trials < 30) t.footer.push_back({"warning", "fewer than 30 trials; the normal-approximation CI is unreliable"});

    out.per_trial.header = {"trial_index", "n", "p", "q", "snr_db", "matrix_kind", "estimator",
                            "gamma_used", "support_errors", "squared_error", "failure"};
    for (const auto& [cfg, run] : runs) {
        for (std::size_t k = 0; k < run.per_trial.size(); ++k) {
            const auto& tr = run.per_trial[k];
            std::string failure = tr.failure;
            std::replace(failure.begin(), failure.end(), ',', ';');
            std::replace(failure.begin(), failure.end(), '\n', ' ');
            out.per_trial.rows.push_back(
                {std::to_string(k), std::to_string(cfg.n), format_number(cfg.params.ensemble.p),
                 format_number(cfg.params.q), snr_db_cell(cfg.params), mc::to_string(cfg.matrix_kind),
                 mc::to_string(cfg.estimator), tr.failed ? "" : format_number(tr.gamma_used),
                 tr.failed ? "" : std::to_string(tr.support_errors), tr.failed ? "" : format_number(tr.squared_error),
                 failure});
        }
    }
    return out;
}

}  // namespace bgsr::sweep
