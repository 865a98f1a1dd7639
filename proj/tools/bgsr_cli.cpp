// Command-line front end: figure sweeps as CSV and simulation reports.

#include "bgsr/errors.hpp"
#include "bgsr/sweep.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

using namespace bgsr;

namespace {

struct Range {
    double start;
    double stop;
    std::optional<int> points;
};

// "start:stop" or "start:stop:points".
Range parse_range(const std::string& text) {
    Range r{};
    const auto a = text.find(':');
    if (a == std::string::npos) throw DomainError("range must look like start:stop[:points]");
    const auto b = text.find(':', a + 1);
    try {
        r.start = std::stod(text.substr(0, a));
        r.stop = std::stod(text.substr(a + 1, b == std::string::npos ? std::string::npos : b - a - 1));
        if (b != std::string::npos) r.points = std::stoi(text.substr(b + 1));
    } catch (const std::logic_error&) {
        throw DomainError("range must look like start:stop[:points]");
    }
    return r;
}

void emit(const sweep::Table& table, const std::string& path) {
    if (path.empty() || path == "-") {
        table.write(std::cout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    table.write(out);
    if (!out) throw std::runtime_error("failed writing " + path);
}

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const NoSolution*>(&e)) return "NoSolution";
    if (dynamic_cast<const NonConvergence*>(&e)) return "NonConvergence";
    if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
    if (dynamic_cast<const CLI::ParseError*>(&e)) return "UsageError";
    return "RuntimeError";
}

int fail(const std::string& command, const std::exception& e, int code) {
    const nlohmann::json line = {{"error", error_kind(e)}, {"command", command}, {"message", e.what()}};
    std::cerr << line.dump() << '\n';
    return code;
}

const std::map<std::string, sweep::Units> kUnits{{"bits", sweep::Units::Bits}, {"nats", sweep::Units::Nats}};
const std::map<std::string, LassoCurvature> kCurvature{{"indicator", LassoCurvature::Indicator},
                                                       {"divergence", LassoCurvature::Divergence}};
const std::map<std::string, sweep::GammaMode> kGammaMode{
    {"fixed", sweep::GammaMode::Fixed}, {"best", sweep::GammaMode::Best}, {"heuristic", sweep::GammaMode::Heuristic}};
const std::map<std::string, mc::MatrixKind> kMatrix{
    {"iid", mc::MatrixKind::IidGaussian}, {"haar", mc::MatrixKind::Haar}, {"dft", mc::MatrixKind::Dft}};
const std::map<std::string, mc::SimEstimator> kEstimator{{"lmmse", mc::SimEstimator::Lmmse},
                                                         {"lasso", mc::SimEstimator::Lasso}};

Ensemble::Kind analytic_kind(const std::string& name) {
    if (name == "iid") return Ensemble::Kind::IidVar1OverN;
    if (name == "haar") return Ensemble::Kind::Haar;
    throw DomainError("ensemble '" + name + "' is only available to simulate");
}

// Options shared by the sweep commands.
struct SweepOptions {
    std::string ensemble = "haar";
    double q = 0.2;
    double snr_db = 20.0;
    double p = 0.5;
    std::string p_range;
    std::string snr_range;
    int points = 40;
    bool log_scale = false;
    int threads = 0;
    std::string out;

    void attach(CLI::App* cmd) {
        cmd->add_option("--ensemble", ensemble, "Sensing ensemble")->check(CLI::IsMember({"iid", "haar", "dft"}));
        cmd->add_option("--q", q, "Activity probability");
        cmd->add_option("--snr-db", snr_db, "SNR = q px in dB");
        cmd->add_option("--p", p, "Sampling rate when it is not swept");
        cmd->add_option("--p-range", p_range, "Sweep p over start:stop[:points]");
        cmd->add_option("--snr-range", snr_range, "Sweep SNR in dB over start:stop[:points]");
        cmd->add_option("--points", points, "Sweep resolution");
        cmd->add_flag("--log", log_scale, "Log-spaced sweep");
        cmd->add_option("--threads", threads, "Worker threads, 0 for all cores");
        cmd->add_option("--out", out, "Output path, stdout by default");
    }

    sweep::SweepSpec spec() const {
        sweep::SweepSpec s;
        s.ensemble = analytic_kind(ensemble);
        s.q = q;
        s.snr_db = snr_db;
        s.p = p;
        s.points = points;
        s.scale = log_scale ? sweep::Scale::Log : sweep::Scale::Linear;
        s.threads = threads;
        if (!p_range.empty() && !snr_range.empty()) throw DomainError("sweep one axis at a time");
        Range r{1.0 / points, 1.0, std::nullopt};
        s.axis = sweep::Axis::P;
        if (!p_range.empty()) r = parse_range(p_range);
        if (!snr_range.empty()) {
            r = parse_range(snr_range);
            s.axis = sweep::Axis::SnrDb;
        }
        s.start = r.start;
        s.stop = r.stop;
        if (r.points) s.points = *r.points;
        return s;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Support recovery of sparsely sampled Bernoulli-Gaussian signals: asymptotics and simulation"};
    app.require_subcommand(1);

    SweepOptions info_opt;
    std::string units = "nats";
    auto* info = app.add_subcommand("info", "Mutual information rate and its bounds");
    info_opt.attach(info);
    info->add_option("--units", units, "Information units")->check(CLI::IsMember({"bits", "nats"}));

    SweepOptions fp_opt;
    int grid_points = 200;
    std::string table = "mapping";
    auto* fixedpoint = app.add_subcommand("fixedpoint", "Fixed-point mapping and its solutions at one p");
    fp_opt.attach(fixedpoint);
    fixedpoint->add_option("--grid-points", grid_points, "Points on the 1/eta grid");
    fixedpoint->add_option("--table", table, "Which table to print")->check(CLI::IsMember({"mapping", "solutions"}));

    SweepOptions dist_opt;
    std::string gamma_mode = "best";
    std::optional<double> gamma;
    std::string gamma_range;
    std::string curvature = "indicator";
    int heuristic_n = 100;
    int heuristic_draws = 200;
    std::uint64_t seed = 1;
    auto* distortion = app.add_subcommand("distortion", "Support recovery error rates of every estimator");
    dist_opt.attach(distortion);
    distortion->add_option("--gamma", gamma, "Lasso weight; implies --gamma-mode fixed");
    distortion->add_option("--gamma-mode", gamma_mode, "How the Lasso weight is chosen")
        ->check(CLI::IsMember({"fixed", "best", "heuristic"}));
    distortion->add_option("--gamma-range", gamma_range, "Sweep the Lasso weight over start:stop[:points], log-spaced");
    distortion->add_option("--lasso-curvature", curvature, "Curvature average of complex soft thresholding")
        ->check(CLI::IsMember({"indicator", "divergence"}));
    distortion->add_option("--n", heuristic_n, "Dimension for the heuristic weight");
    distortion->add_option("--trials", heuristic_draws, "Draws averaged by the heuristic weight");
    distortion->add_option("--seed", seed, "Seed for the heuristic weight");

    sweep::SimulateSetup sim;
    SweepOptions sim_opt;
    std::string estimator = "lmmse";
    std::string sim_gamma_mode = "heuristic";
    std::optional<double> sim_gamma;
    std::string sim_curvature = "indicator";
    std::string versus;
    std::string per_trial_out;
    auto* simulate = app.add_subcommand("simulate", "Finite-n Monte Carlo of thresholded LMMSE or Lasso");
    sim_opt.attach(simulate);
    simulate->add_option("--n", sim.base.n, "Dimension");
    simulate->add_option("--trials", sim.base.trials, "Trials per sampling rate");
    simulate->add_option("--seed", sim.base.base_seed, "Base seed");
    simulate->add_option("--estimator", estimator)->check(CLI::IsMember({"lmmse", "lasso"}));
    simulate->add_option("--gamma", sim_gamma, "Fixed Lasso weight; implies --gamma-mode fixed");
    simulate->add_option("--gamma-mode", sim_gamma_mode)->check(CLI::IsMember({"fixed", "heuristic"}));
    simulate->add_option("--lasso-curvature", sim_curvature)->check(CLI::IsMember({"indicator", "divergence"}));
    simulate->add_flag("--compare", sim.compare, "Add asymptotic values and z-scores");
    simulate->add_option("--versus", versus, "Also run this matrix kind and report the z-score of the difference")
        ->check(CLI::IsMember({"iid", "haar", "dft"}));
    simulate->add_option("--per-trial-out", per_trial_out, "Write per-trial rows to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("parse", e, e.get_exit_code() ? e.get_exit_code() : 2);
    }

    std::string command = app.get_subcommands().front()->get_name();
    try {
        if (*info) {
            auto spec = info_opt.spec();
            spec.units = kUnits.at(units);
            emit(sweep::info_table(spec), info_opt.out);
        } else if (*fixedpoint) {
            if (!fp_opt.p_range.empty() || !fp_opt.snr_range.empty()) throw DomainError("fixedpoint takes a single --p");
            const auto sp = SystemParams::from_snr_db(Ensemble::make(analytic_kind(fp_opt.ensemble), fp_opt.p),
                                                      fp_opt.q, fp_opt.snr_db);
            const auto rep = sweep::fixedpoint_report(sp, grid_points);
            emit(table == "mapping" ? rep.mapping : rep.solutions, fp_opt.out);
        } else if (*distortion) {
            auto spec = dist_opt.spec();
            if (!gamma_range.empty()) {
                if (!dist_opt.p_range.empty() || !dist_opt.snr_range.empty())
                    throw DomainError("sweep one axis at a time");
                const Range r = parse_range(gamma_range);
                spec.axis = sweep::Axis::Gamma;
                spec.start = r.start;
                spec.stop = r.stop;
                spec.scale = sweep::Scale::Log;
                if (r.points) spec.points = *r.points;
            }
            sweep::LassoSetup lasso;
            lasso.mode = gamma ? sweep::GammaMode::Fixed : kGammaMode.at(gamma_mode);
            if (lasso.mode == sweep::GammaMode::Fixed) {
                if (!gamma) throw DomainError("--gamma-mode fixed needs --gamma");
                lasso.gamma = *gamma;
            }
            lasso.curvature = kCurvature.at(curvature);
            lasso.heuristic_n = heuristic_n;
            lasso.heuristic_draws = heuristic_draws;
            lasso.seed = seed;
            emit(sweep::distortion_table(spec, lasso), dist_opt.out);
        } else if (*simulate) {
            if (!sim_opt.snr_range.empty()) throw DomainError("simulate sweeps p only");
            const mc::MatrixKind kind = kMatrix.at(sim_opt.ensemble);
            sim.base.matrix_kind = kind;
            sim.base.estimator = kEstimator.at(estimator);
            sim.base.threads = sim_opt.threads;
            sim.base.lasso_curvature = kCurvature.at(sim_curvature);
            if (sim_gamma || sim_gamma_mode == "fixed") {
                if (!sim_gamma) throw DomainError("--gamma-mode fixed needs --gamma");
                sim.base.lasso_gamma = *sim_gamma;
            }
            sim.base.params = SystemParams::from_snr_db(mc::asymptotic_ensemble(kind, sim_opt.p), sim_opt.q,
                                                        sim_opt.snr_db);
            if (sim_opt.p_range.empty()) {
                sim.p_values = {sim_opt.p};
            } else {
                const Range r = parse_range(sim_opt.p_range);
                sweep::SweepSpec spec;
                spec.start = r.start;
                spec.stop = r.stop;
                spec.points = r.points.value_or(sim_opt.points);
                spec.scale = sim_opt.log_scale ? sweep::Scale::Log : sweep::Scale::Linear;
                sim.p_values = spec.grid();
            }
            if (!versus.empty()) sim.versus = kMatrix.at(versus);
            const auto rep = sweep::simulate(sim);
            emit(rep.summary, sim_opt.out);
            if (!per_trial_out.empty()) emit(rep.per_trial, per_trial_out);
        }
    } catch (const std::exception& e) {
        return fail(command, e, 1);
    }
    return 0;
}
