#include "toda/experiment.hpp"

#include "toda/backlund.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <future>

namespace toda {

using nlohmann::json;

const char* kVersion = "todalab 0.1.0";

namespace {

PerturbationSpec::Shape parse_shape(const std::string& s) {
    if (s == "delta-spike") return PerturbationSpec::Shape::DeltaSpike;
    if (s == "gaussian-bump") return PerturbationSpec::Shape::GaussianBump;
    if (s == "projected-random") return PerturbationSpec::Shape::ProjectedRandom;
    throw std::invalid_argument("config: unknown perturbation.shape '" + s + "'");
}

} // namespace

ExperimentConfig parse_experiment(const KeyValueConfig& cfg_in) {
    KeyValueConfig cfg = cfg_in;
    ExperimentConfig ex;
    ex.raw = cfg.values;
    ex.kind = cfg.require_string("kind");
    ex.kappa = cfg.get_list("kappa");
    ex.gamma = cfg.get_list("gamma");
    ex.n_min = static_cast<int>(cfg.get_long("grid.n_min", ex.n_min));
    ex.n_max = static_cast<int>(cfg.get_long("grid.n_max", ex.n_max));
    ex.t = cfg.get_double("t", ex.t);
    ex.times = cfg.get_list("times");
    ex.t0 = cfg.get_double("t0", ex.t0);
    ex.t1 = cfg.get_double("t1", ex.t1);
    ex.dt = cfg.get_double("dt", ex.dt);
    ex.record_every = cfg.get_double("record_every", ex.record_every);
    ex.frame_a = cfg.get_double("frame.a", ex.frame_a);
    ex.frame_c = cfg.get_double("frame.c", ex.frame_c);
    ex.frame_T = cfg.get_double("frame.T", ex.frame_T);
    ex.perturbation.shape = parse_shape(cfg.get_string("perturbation.shape", "gaussian-bump"));
    ex.perturbation.amplitude = cfg.get_double("perturbation.amplitude", 1e-3);
    ex.perturbation.location = cfg.get_double("perturbation.location", 0.0);
    ex.perturbation.width = cfg.get_double("perturbation.width", 3.0);
    ex.perturbation.project = cfg.get_bool("perturbation.project", true);
    ex.control = cfg.get_bool("control", false);
    ex.derivatives = cfg.get_bool("derivatives", false);
    ex.kappa_new = cfg.get_double("backlund.kappa_new", 0.0);
    ex.gamma_new = cfg.get_double("backlund.gamma_new", 0.0);
    ex.delta_sweep = cfg.get_list("delta_sweep");
    ex.tube_radius = cfg.get_double("tube_radius", 0.05);
    ex.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 1));
    ex.threads = static_cast<int>(cfg.get_long("threads", 1));
    ex.scheme = cfg.get_string("integrator", "leapfrog");
    ex.unknown = cfg.unknown_keys();
    ex.perturbation.seed = ex.seed;
    return ex;
}

std::vector<Violation> validate(const ExperimentConfig& c) {
    std::vector<Violation> v;
    auto bad = [&](const std::string& field, const std::string& msg) {
        v.push_back({field, msg});
    };

    static const std::vector<std::string> kinds = {"soliton", "backlund", "linear-decay",
                                                   "resolution", "modulate"};
    if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
        bad("kind", "unknown experiment kind '" + c.kind + "'");
    for (const auto& k : c.unknown) bad(k, "unknown configuration key");

    for (double k : c.kappa)
        if (!(k > 0.0)) bad("kappa", "kappa must be positive");
    if (c.kappa.size() != c.gamma.size())
        bad("gamma", "kappa and gamma must have the same length");
    if (c.n_max - c.n_min < 16) bad("grid", "need n_max - n_min >= 16");
    if (!(c.dt > 0.0) || c.dt > 0.1) bad("dt", "dt must lie in (0, 0.1]");
    if (c.scheme != "leapfrog" && c.scheme != "implicit-midpoint")
        bad("integrator", "unknown integrator '" + c.scheme + "'");
    if (!(c.perturbation.amplitude > 0.0))
        bad("perturbation.amplitude", "amplitude must be positive");

    const bool needs_frame = (c.kind == "linear-decay" || c.kind == "modulate");
    if (needs_frame && !c.kappa.empty()) {
        const double kmin = *std::min_element(c.kappa.begin(), c.kappa.end());
        if (!(c.frame_a > 0.0) || !(c.frame_a < 2.0 * kmin))
            bad("frame.a", "the decay exponent must satisfy a in (0, 2 kappa_min)");
        if (!(c.frame_c > 1.0)) bad("frame.c", "the frame speed must satisfy c > 1");
    }
    if (c.kind == "backlund") {
        if (!(c.kappa_new > 0.0)) bad("backlund.kappa_new", "kappa_new must be positive");
        for (double k : c.kappa)
            if (c.kappa_new <= k) bad("backlund.kappa_new", "kappa_new must exceed every existing kappa");
    }
    if (c.kind == "resolution" && c.times.empty())
        bad("times", "resolution needs a ladder of evaluation times");
    if ((c.kind == "linear-decay" || c.kind == "modulate" || c.kind == "resolution" ||
         c.kind == "soliton" || c.kind == "backlund") && c.kappa.empty() &&
        c.kind != "linear-decay")
        bad("kappa", "at least one soliton is required");
    if (c.kind == "modulate" && !(c.t1 > c.t0)) bad("t1", "need t1 > t0");
    for (double d : c.delta_sweep)
        if (!(d > 0.0)) bad("delta_sweep", "sweep amplitudes must be positive");
    if (c.threads < 1) bad("threads", "threads must be at least 1");
    return v;
}

namespace {

json violations_json(const std::vector<Violation>& v) {
    json out = json::array();
    for (const auto& x : v) out.push_back({{"field", x.field}, {"message", x.message}});
    return out;
}

SolitonParams family_of(const ExperimentConfig& c) { return SolitonParams(c.kappa, c.gamma); }

LatticeGrid grid_of(const ExperimentConfig& c, const SolitonParams& p) {
    return p.m() > 0 ? soliton_grid(c.n_min, c.n_max, p) : LatticeGrid(c.n_min, c.n_max);
}

void write_manifest(const std::string& out_dir, const ExperimentConfig& c, const json& results,
                    const json& checks, double wall_seconds) {
    json manifest;
    manifest["config"] = c.raw;
    manifest["results"] = results;
    manifest["checks"] = checks;
    manifest["timing"] = {{"wall_seconds", wall_seconds}};
    manifest["version"] = kVersion;
    atomic_write(out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

json run_soliton(const ExperimentConfig& c, const std::string& out_dir, json& checks) {
    SolitonParams params = family_of(c);
    LatticeGrid grid = grid_of(c, params);
    FamilyEval fam = eval_family(params, c.t, grid,
                                 kState | kPdot | (c.derivatives ? kTangents : 0u));

    CsvTable table;
    table.header = {"n", "Q", "P"};
    if (c.derivatives)
        for (int l = 0; l < params.m(); ++l) {
            table.header.push_back("dQ_gamma" + std::to_string(l + 1));
            table.header.push_back("dP_gamma" + std::to_string(l + 1));
            table.header.push_back("dQ_kappa" + std::to_string(l + 1));
            table.header.push_back("dP_kappa" + std::to_string(l + 1));
        }
    for (int i = 0; i < grid.size(); ++i) {
        std::vector<double> row = {static_cast<double>(grid.site(i)), fam.state.Q[i],
                                   fam.state.P[i]};
        if (c.derivatives)
            for (int l = 0; l < params.m(); ++l) {
                row.push_back(fam.tangents[2 * l].q[i]);
                row.push_back(fam.tangents[2 * l].p[i]);
                row.push_back(fam.tangents[2 * l + 1].q[i]);
                row.push_back(fam.tangents[2 * l + 1].p[i]);
            }
        table.rows.push_back(std::move(row));
    }
    atomic_write(out_dir + "/profile.csv", table.to_string());

    auto rhs = toda_rhs(fam.state);
    double residual = 0.0;
    for (int i = 2; i < grid.size() - 2; ++i)
        residual = std::max(residual, std::abs(rhs.Pdot[i] - fam.Pdot[i]));
    const double jump = fam.state.Q[grid.size() - 1] - fam.state.Q[0];

    json results;
    results["total_jump"] = jump;
    results["expected_jump"] = params.total_jump();
    results["boundary_contamination"] = fam.state.boundary_contamination();
    results["equation_residual_sup"] = residual;
    checks["jump_matches"] = std::abs(jump - params.total_jump()) < 1e-6;
    checks["equation_residual_ok"] = residual <= 1e-8;
    return results;
}

json run_backlund(const ExperimentConfig& c, const std::string& out_dir, json& checks) {
    SolitonParams lower = family_of(c);
    SolitonParams upper = lower.with_soliton(c.kappa_new, c.gamma_new);
    LatticeGrid grid = grid_of(c, upper);
    BTPair pair = add_soliton(lower, c.kappa_new, c.gamma_new, c.t, grid);

    BTResidual res = bt_residual(pair);
    CsvTable table;
    table.header = {"n", "alpha", "beta", "F1", "F2"};
    for (int i = 0; i < grid.size(); ++i)
        table.add_row({static_cast<double>(grid.site(i)), pair.alpha[i], pair.beta[i], res.F1[i],
                       res.F2[i]});
    atomic_write(out_dir + "/backlund.csv", table.to_string());

    SemigroupT T = semigroup(pair);
    CsvTable st;
    st.header = {"n", "logT"};
    for (int i = 0; i < grid.size(); ++i)
        st.add_row({static_cast<double>(grid.site(i)), T.log_values[i]});
    atomic_write(out_dir + "/semigroup.csv", st.to_string());

    const Field g = soliton_derivative(upper, c.t, grid, ParamKind::Gamma, upper.m() - 1).q;
    const double kernel_rel = apply_operator(pair, BTOperator::Chat, g).norm() / g.norm();

    json results;
    results["bt_residual_sup"] = res.sup();
    results["semigroup_forward_slope"] = T.forward_slope();
    results["semigroup_backward_slope"] = T.backward_slope();
    results["expected_slope"] = 2.0 * c.kappa_new;
    results["chat_kernel_relative"] = kernel_rel;
    checks["bt_residual_ok"] = res.sup() <= 1e-6;
    checks["kernel_ok"] = kernel_rel <= 1e-6;
    checks["slopes_ok"] = std::abs(T.forward_slope() + 2.0 * c.kappa_new) < 0.05 &&
                          std::abs(T.backward_slope() - 2.0 * c.kappa_new) < 0.05;
    return results;
}

json decay_json(const DecayFit& fit) {
    return {{"fitted_rate", fit.rate},
            {"beta", fit.beta},
            {"fit_residual", fit.fit_residual},
            {"window_shortened", fit.window_shortened}};
}

json run_linear_decay(const ExperimentConfig& c, const std::string& out_dir, json& checks) {
    SolitonParams params = c.kappa.empty() ? SolitonParams() : family_of(c);
    LatticeGrid grid = grid_of(c, params);
    WeightFrame frame(c.frame_a, c.frame_c, c.frame_T, c.t0);

    auto one_run = [&](bool project, const std::string& tag) {
        PerturbationSpec spec = c.perturbation;
        spec.project = project;
        TangentField u0 = make_perturbation(spec, params, c.t0, grid);
        TangentTrajectory traj = integrate_linearized(params, u0, c.t0, c.t1, c.dt,
                                                      c.record_every);
        DecayFit fit = decay_rate(traj, frame);
        CsvTable table;
        table.header = {"t", "log_weighted_norm"};
        for (size_t i = 0; i < fit.times.size(); ++i)
            table.add_row({fit.times[i], fit.log_norms[i]});
        atomic_write(out_dir + "/decay_" + tag + ".csv", table.to_string());
        return fit;
    };

    DecayFit fit = one_run(c.perturbation.project, "main");
    json results;
    results["main"] = decay_json(fit);
    checks["rate_at_least_half_beta"] = fit.rate >= 0.5 * fit.beta;
    if (c.control && params.m() > 0) {
        DecayFit ctrl = one_run(false, "control");
        results["control"] = decay_json(ctrl);
        checks["control_fails_without_projection"] = ctrl.rate < 0.5 * ctrl.beta;
    }
    return results;
}

json run_resolution(const ExperimentConfig& c, const std::string& out_dir, json& checks) {
    SolitonParams params = family_of(c);
    LatticeGrid grid = grid_of(c, params);
    PhaseShifts z = phase_shifts(params);

    CsvTable table;
    table.header = {"t", "l1_residual", "boundary_flag"};
    std::vector<double> ts, logs;
    for (double t : c.times) {
        auto r = resolution_residual(params, t, grid);
        table.add_row({t, r.l1, r.boundary_flag ? 1.0 : 0.0});
        if (r.l1 > 0.0 && !r.boundary_flag) {
            ts.push_back(t);
            logs.push_back(std::log(r.l1));
        }
    }
    atomic_write(out_dir + "/resolution.csv", table.to_string());

    double slope = 0.0;
    if (ts.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (size_t i = 0; i < ts.size(); ++i) {
            sx += ts[i]; sy += logs[i]; sxx += ts[i] * ts[i]; sxy += ts[i] * logs[i];
        }
        const double n = static_cast<double>(ts.size());
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }

    json results;
    results["log_slope"] = slope;
    results["zeta_plus"] = std::vector<double>(z.zeta_plus.begin(), z.zeta_plus.end());
    results["zeta_minus"] = std::vector<double>(z.zeta_minus.begin(), z.zeta_minus.end());
    results["raw_plus"] = std::vector<double>(z.raw_plus.begin(), z.raw_plus.end());
    results["raw_minus"] = std::vector<double>(z.raw_minus.begin(), z.raw_minus.end());
    if (!c.times.empty()) {
        // fit the offsets at a time late enough that every pair of cores is
        // separated well beyond the fit windows
        double t_fit = *std::max_element(c.times.begin(), c.times.end());
        if (params.m() >= 2) {
            double min_dv = std::numeric_limits<double>::infinity();
            for (int j = 0; j + 1 < params.m(); ++j)
                min_dv = std::min(min_dv, params.speed(j + 1) - params.speed(j));
            t_fit = std::max(t_fit, 24.0 / min_dv);
        }
        double core_lo = 0.0, core_hi = 0.0;
        for (int j = 0; j < params.m(); ++j) {
            const double core =
                (t_fit * std::sinh(params.kappas[j]) - params.gammas[j]) / params.kappas[j];
            core_lo = std::min(core_lo, core);
            core_hi = std::max(core_hi, core);
        }
        LatticeGrid fit_grid = soliton_grid(static_cast<int>(core_lo) - 60,
                                            static_cast<int>(core_hi) + 60, params);
        Eigen::VectorXd fitted = fit_phase_offsets(params, t_fit, fit_grid);
        results["fit_time"] = t_fit;
        results["fitted_offsets"] = std::vector<double>(fitted.begin(), fitted.end());
        const Eigen::VectorXd& zref = (t_fit >= 0.0) ? z.zeta_plus : z.zeta_minus;
        results["fit_vs_zeta_max_error"] = (fitted - zref).cwiseAbs().maxCoeff();
        checks["offsets_match_determinant_formula"] =
            (fitted - zref).cwiseAbs().maxCoeff() <= 1e-4;
    }
    checks["residual_decays"] = slope < 0.0;
    return results;
}

json record_results(const ModulationRecord& rec, const std::string& csv_path) {
    CsvTable table;
    table.header = {"t"};
    const int dim = rec.samples.empty() ? 0 : static_cast<int>(rec.samples.front().xi.size());
    for (int j = 0; j < dim / 2; ++j) {
        table.header.push_back("gamma" + std::to_string(j + 1));
        table.header.push_back("kappa" + std::to_string(j + 1));
    }
    table.header.insert(table.header.end(),
                        {"v_flat", "v_weighted_log", "pairing_max", "R_weighted", "H"});
    for (const auto& s : rec.samples) {
        std::vector<double> row = {s.t};
        for (int j = 0; j < dim; ++j) row.push_back(s.xi[j]);
        row.insert(row.end(), {s.v_flat, s.v_weighted_log, s.pairing_max, s.R_weighted, s.h_value});
        table.rows.push_back(std::move(row));
    }
    atomic_write(csv_path, table.to_string());

    json out;
    out["samples"] = rec.samples.size();
    out["truncated"] = rec.truncated;
    if (rec.truncated) out["truncation_reason"] = rec.truncation_reason;
    out["decay_rate_weighted"] = rec.decay_rate_weighted;
    out["h_drift_max"] = rec.integ_meta.h_drift_max;
    if (!rec.samples.empty()) {
        const double t1 = rec.samples.back().t;
        const double span = t1 - rec.samples.front().t;
        out["xi_total_delta"] =
            (rec.samples.back().xi - rec.samples.front().xi).norm();
        out["xi_tail_delta"] = rec.xi_delta(t1 - span / 3.0, t1).cwiseAbs().maxCoeff();
        double pairing_max = 0.0;
        for (const auto& s : rec.samples) pairing_max = std::max(pairing_max, s.pairing_max);
        out["pairing_max"] = pairing_max;
    }
    return out;
}

json run_modulate(const ExperimentConfig& c, const std::string& out_dir, json& checks) {
    SolitonParams params = family_of(c);
    LatticeGrid grid = grid_of(c, params);

    std::vector<double> deltas = c.delta_sweep;
    if (deltas.empty()) deltas.push_back(c.perturbation.amplitude);

    auto run_one = [&](double delta) {
        StabilityConfig sc;
        sc.params = params;
        sc.grid = grid;
        sc.t0 = c.t0;
        sc.t1 = c.t1;
        sc.dt = c.dt;
        sc.record_every = c.record_every;
        sc.frame = WeightFrame(c.frame_a, c.frame_c, c.frame_T, c.t0);
        sc.perturbation = c.perturbation;
        sc.perturbation.amplitude = delta;
        sc.fit.tube_radius = c.tube_radius;
        sc.scheme = (c.scheme == "leapfrog") ? Integrator::Leapfrog : Integrator::ImplicitMidpoint;
        return run_stability_experiment(sc);
    };

    std::vector<ModulationRecord> records(deltas.size());
    if (c.threads > 1 && deltas.size() > 1) {
        std::vector<std::future<ModulationRecord>> futs;
        for (double d : deltas)
            futs.push_back(std::async(std::launch::async, run_one, d));
        for (size_t i = 0; i < futs.size(); ++i) records[i] = futs[i].get();
    } else {
        for (size_t i = 0; i < deltas.size(); ++i) records[i] = run_one(deltas[i]);
    }

    json results;
    results["deltas"] = deltas;
    json runs = json::array();
    bool all_complete = true, all_decay = true;
    std::vector<double> xi_moves;
    for (size_t i = 0; i < records.size(); ++i) {
        json r = record_results(records[i], out_dir + "/modulation_" + std::to_string(i) + ".csv");
        xi_moves.push_back(r["xi_total_delta"].is_null() ? 0.0
                                                          : r["xi_total_delta"].get<double>());
        all_complete = all_complete && !records[i].truncated;
        all_decay = all_decay && records[i].decay_rate_weighted > 0.0;
        runs.push_back(std::move(r));
    }
    results["runs"] = runs;
    checks["all_fits_complete"] = all_complete;
    checks["weighted_norm_decays"] = all_decay;

    if (xi_moves.size() >= 2) {
        // halving delta should quarter the final parameter shift, within a factor 2
        json scaling = json::array();
        bool quadratic = true;
        for (size_t i = 0; i + 1 < xi_moves.size(); ++i) {
            const double ratio_delta = deltas[i] / deltas[i + 1];
            const double expected = ratio_delta * ratio_delta;
            const double got = xi_moves[i] / std::max(xi_moves[i + 1], 1e-300);
            scaling.push_back({{"delta_ratio", ratio_delta}, {"xi_ratio", got},
                               {"expected", expected}});
            quadratic = quadratic && got > expected / 2.0 && got < expected * 2.0;
        }
        results["scaling"] = scaling;
        checks["xi_shift_scales_quadratically"] = quadratic;
    }
    return results;
}

} // namespace

int run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
    const auto t_start = std::chrono::steady_clock::now();
    const std::vector<Violation> violations = validate(config);
    if (!violations.empty()) return 2;

    json results, checks;
    int code = 0;
    try {
        if (config.kind == "soliton") results = run_soliton(config, out_dir, checks);
        else if (config.kind == "backlund") results = run_backlund(config, out_dir, checks);
        else if (config.kind == "linear-decay") results = run_linear_decay(config, out_dir, checks);
        else if (config.kind == "resolution") results = run_resolution(config, out_dir, checks);
        else results = run_modulate(config, out_dir, checks);
    } catch (const std::exception& e) {
        results["error"] = e.what();
        code = 1;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_manifest(out_dir, config, results, checks, wall);
    return code;
}

} // namespace toda
