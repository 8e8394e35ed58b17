#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "roughskew/asymptotics.hpp"
#include "roughskew/config.hpp"
#include "roughskew/fbm_engine.hpp"
#include "roughskew/models.hpp"
#include "roughskew/parallel.hpp"
#include "roughskew/pricing.hpp"

namespace roughskew::harness {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct RunReport {
    std::string command;
    std::vector<std::string> info;
    std::vector<CheckResult> checks;
    std::string out_dir;

    void add_info(std::string line) { info.push_back(std::move(line)); }
    void add_check(std::string name, bool passed, std::string detail) {
        checks.push_back({std::move(name), passed, std::move(detail)});
    }
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot open output file: " + p.string());
    return os;
}

inline std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

} // namespace detail

inline void write_config_echo(const std::filesystem::path& dir,
                              const std::map<std::string, std::string>& echo) {
    auto os = detail::open_out(dir / "config-echo.txt");
    for (const auto& [key, val] : echo) os << key << " = " << val << "\n";
}

inline void write_skew_csv(const std::filesystem::path& dir,
                           const std::vector<asymptotics::SkewEstimate>& rows) {
    auto os = detail::open_out(dir / "skew.csv");
    os << "theta,z,zeta,skew,skew_se\n";
    for (const auto& r : rows)
        os << fmt17(r.theta) << ',' << fmt17(r.z) << ',' << fmt17(r.zeta) << ','
           << fmt17(r.value) << ',' << fmt17(r.stderr_) << "\n";
}

inline void write_fit_summary(const std::filesystem::path& dir,
                              const asymptotics::PowerLawFit& fit) {
    auto os = detail::open_out(dir / "fit.txt");
    os << "slope = " << fmt17(fit.slope) << "\n"
       << "slope_se = " << fmt17(fit.slope_se) << "\n"
       << "intercept = " << fmt17(fit.log_intercept) << "\n"
       << "r2 = " << fmt17(fit.fit.r_squared) << "\n";
}

inline void write_quotes_csv(const std::filesystem::path& dir,
                             const std::vector<std::pair<pricing::PutQuote,
                                                         std::optional<pricing::IVPoint>>>& rows) {
    auto os = detail::open_out(dir / "quotes.csv");
    os << "theta,z,price,se,iv,iv_se\n";
    for (const auto& [q, iv] : rows) {
        os << fmt17(q.theta) << ',' << fmt17(q.k / std::sqrt(q.theta)) << ','
           << fmt17(q.price_over_spot) << ',' << fmt17(q.mc_stderr) << ',';
        if (iv)
            os << fmt17(iv->iv) << ',' << fmt17(iv->iv_stderr) << "\n";
        else
            os << "nan,nan\n";
    }
}

inline void write_report(const std::filesystem::path& dir, const RunReport& rep) {
    auto os = detail::open_out(dir / "report.txt");
    os << "command = " << rep.command << "\n";
    for (const auto& line : rep.info) os << line << "\n";
    for (const auto& c : rep.checks)
        os << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << "\n";
    os << "overall = " << (rep.all_passed() ? "PASS" : "FAIL") << "\n";
}

// Shared model/state assembly for all commands.
struct Workspace {
    ExperimentConfig cfg;
    models::ModelSpec spec;
    bool is_rough = false;
    fbm::QuadraturePtr quad;
    models::MarketState init;
};

inline Workspace make_workspace(const ExperimentConfig& cfg) {
    Workspace ws{cfg, models::model_zoo(cfg.model_name, cfg.model_params), false, nullptr, {}};
    ws.init.s = cfg.init_s;
    ws.init.y = cfg.init_y;
    ws.init.t = 0.0;
    if (const auto* rs = std::get_if<models::RoughSpec>(&ws.spec)) {
        ws.is_rough = true;
        ws.quad = fbm::build_quadrature(fbm::Hurst{rs->hurst}, cfg.quad_nodes, cfg.quad_beta_min,
                                        cfg.quad_beta_max);
        ws.init.bank = fbm::OUBank{ws.quad, std::vector<double>(ws.quad->size(), 0.0), 0.0};
    }
    return ws;
}

inline pricing::McOptions mc_options(const ExperimentConfig& cfg, double theta, bool resample) {
    pricing::McOptions opt;
    opt.n_paths = cfg.n_paths;
    opt.n_steps = cfg.n_steps_for(theta);
    opt.resample_bank = resample;
    opt.threads = parallel::resolve_threads(cfg.threads);
    return opt;
}

struct SweepOutcome {
    std::vector<asymptotics::SkewEstimate> estimates;
    std::optional<asymptotics::PowerLawFit> fit;
    std::size_t failures = 0;
};

// One skew estimate per maturity on the configured grid; failures for a single
// maturity are reported and skipped so partial results still reach disk.
inline SweepOutcome run_skew_sweep(const models::ModelSpec& spec,
                                   const models::MarketState& init,
                                   const ExperimentConfig& cfg, bool resample,
                                   std::uint64_t stream_salt, RunReport& rep) {
    SweepOutcome out;
    const auto thetas = cfg.theta_grid();
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        const double theta = thetas[i];
        numerics::RngStream rng(cfg.seed, stream_salt + i);
        try {
            out.estimates.push_back(asymptotics::skew_estimate(
                spec, init, cfg.z, cfg.zeta, theta, mc_options(cfg, theta, resample), rng));
        } catch (const std::exception& e) {
            ++out.failures;
            rep.add_info("theta " + fmt17(theta) + ": estimate failed: " + e.what());
        }
    }
    if (out.estimates.size() >= 4) {
        try {
            out.fit = asymptotics::fit_power_law(out.estimates);
        } catch (const std::exception& e) {
            rep.add_info(std::string("power-law fit unavailable: ") + e.what());
        }
    } else {
        rep.add_info("power-law fit skipped: only " + std::to_string(out.estimates.size()) +
                     " usable maturities");
    }
    return out;
}

// Magnitude of the short-maturity skew coefficient implied by the rough model's
// state-frozen coefficients: c_hat * Gamma(1/2-H) / ((1/2+H)(3/2+H)) * |rho * d_y log v|.
inline double rough_skew_coefficient_target(const models::RoughSpec& rs,
                                            const fbm::BetaQuadrature& quad, double s, double y) {
    const double h = rs.hurst;
    const double v = rs.v(s, y, 0.0);
    const double dlogv = rs.dv_dy(s, y, 0.0) / v;
    const double gamma_term = numerics::gamma_fn(0.5 - h) / ((0.5 + h) * (1.5 + h));
    return quad.c_hat() * gamma_term * std::abs(rs.rho(y) * dlogv);
}

// Regular-regime flat-skew level: (s d_s v + rho c d_y log v) / 2 at the initial state.
inline double regular_skew_level(const models::LsvSpec& ls, double s, double y) {
    const double v = ls.v(s, y, 0.0);
    const double eta = ls.c(s, y, 0.0) * ls.rho(s, y, 0.0);
    return 0.5 * (s * ls.dv_ds(s, y, 0.0) + eta * ls.dv_dy(s, y, 0.0) / v);
}

inline RunReport cmd_skew_term_structure(const KvConfig& kv) {
    auto cfg = ExperimentConfig::resolve(kv);
    kv.reject_unknown_keys();
    cfg.echo = kv.resolved();

    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    write_config_echo(dir, cfg.echo);

    RunReport rep;
    rep.command = "skew-term-structure";
    rep.out_dir = cfg.out_dir;

    auto ws = make_workspace(cfg);
    rep.add_info("model = " + cfg.model_name);

    const bool resample = ws.is_rough && cfg.resample_bank;
    auto sweep = run_skew_sweep(ws.spec, ws.init, cfg, resample, 0x5354u, rep);
    write_skew_csv(dir, sweep.estimates);
    if (sweep.failures > 0)
        rep.add_check("all_maturities_estimated", false,
                      std::to_string(sweep.failures) + " maturities failed; partial skew.csv written");

    if (!sweep.fit) {
        rep.add_check("power_law_fit", false, "no fit produced");
        write_report(dir, rep);
        return rep;
    }
    const auto& fit = *sweep.fit;
    write_fit_summary(dir, fit);
    rep.add_info("fitted exponent = " + detail::fmt6(fit.slope) + " +/- " +
                 detail::fmt6(fit.slope_se) + ", r2 = " + detail::fmt6(fit.fit.r_squared));

    if (ws.is_rough) {
        const auto& rs = std::get<models::RoughSpec>(ws.spec);
        const double target = rs.hurst - 0.5;
        const bool ok = std::abs(fit.slope - target) <= 0.05;
        rep.add_check("skew_exponent", ok,
                      "fitted " + detail::fmt6(fit.slope) + " vs H-1/2 = " + detail::fmt6(target) +
                          " (tolerance 0.05)");
        const double fitted_a = std::exp(fit.log_intercept);
        const double target_a =
            rough_skew_coefficient_target(rs, *ws.quad, cfg.init_s, cfg.init_y);
        rep.add_info("skew coefficient |A|: fitted " + detail::fmt6(fitted_a) + ", limit-law " +
                     detail::fmt6(target_a) + ", ratio " + detail::fmt6(fitted_a / target_a));
        rep.add_info("regime: skew diverges like theta^(H-1/2); a regular model would be flat "
                     "in sqrt(theta) units");
    } else {
        const auto& ls = std::get<models::LsvSpec>(ws.spec);
        const bool ok = std::abs(fit.slope) <= 0.05;
        rep.add_check("skew_exponent", ok,
                      "fitted " + detail::fmt6(fit.slope) +
                          " vs regular-regime 0 (tolerance 0.05)");
        const double level = regular_skew_level(ls, cfg.init_s, cfg.init_y);
        const auto& mid = sweep.estimates[sweep.estimates.size() / 2];
        const double tol = std::max(3.0 * mid.stderr_, 0.1 * std::sqrt(mid.theta));
        const bool lvl_ok = std::abs(mid.value - level) <= tol;
        rep.add_check("skew_level", lvl_ok,
                      "at theta = " + detail::fmt6(mid.theta) + ": measured " +
                          detail::fmt6(mid.value) + " vs limit " + detail::fmt6(level) +
                          " (tolerance " + detail::fmt6(tol) + ")");
        rep.add_info("regime: skew stays bounded as maturity shrinks; a rough model would "
                     "diverge like theta^(H-1/2)");
    }
    write_report(dir, rep);
    return rep;
}

inline RunReport cmd_price(const KvConfig& kv) {
    auto cfg = ExperimentConfig::resolve(kv);
    const double theta = kv.get_double("price.theta", 1e-2);
    kv.reject_unknown_keys();
    cfg.echo = kv.resolved();

    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    write_config_echo(dir, cfg.echo);

    RunReport rep;
    rep.command = "price";
    rep.out_dir = cfg.out_dir;

    auto ws = make_workspace(cfg);
    numerics::RngStream rng(cfg.seed, 0x9A1Cu);
    const auto opt = mc_options(cfg, theta, ws.is_rough && cfg.resample_bank);
    const auto quote = pricing::mc_put(ws.spec, ws.init, cfg.z, theta, opt.n_paths, opt.n_steps,
                                       rng, opt);
    rep.add_info("put price/spot = " + fmt17(quote.price_over_spot) + " (se " +
                 fmt17(quote.mc_stderr) + ") at z = " + fmt17(cfg.z) + ", theta = " +
                 fmt17(theta));
    std::optional<pricing::IVPoint> iv;
    try {
        iv = pricing::implied_vol(quote);
        rep.add_info("implied vol = " + fmt17(iv->iv) + " (se " + fmt17(iv->iv_stderr) + ")");
        rep.add_check("implied_vol_inverted", true, "iv = " + detail::fmt6(iv->iv));
    } catch (const std::exception& e) {
        rep.add_check("implied_vol_inverted", false, e.what());
    }
    write_quotes_csv(dir, {{quote, iv}});
    write_report(dir, rep);
    return rep;
}

inline RunReport cmd_simulate_fbm(const KvConfig& kv) {
    auto cfg = ExperimentConfig::resolve(kv);
    const double horizon = kv.get_double("fbm.horizon", 1.0);
    const auto n_steps = static_cast<std::size_t>(kv.get_u64("fbm.n_steps", 200));
    const auto n_dump = static_cast<std::size_t>(kv.get_u64("fbm.n_paths", 3));
    kv.reject_unknown_keys();
    cfg.echo = kv.resolved();
    if (!(horizon > 0.0)) throw std::invalid_argument("fbm.horizon must be positive");
    if (n_steps < 1 || n_dump < 1)
        throw std::invalid_argument("fbm.n_steps and fbm.n_paths must be >= 1");

    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    write_config_echo(dir, cfg.echo);

    RunReport rep;
    rep.command = "simulate-fbm";
    rep.out_dir = cfg.out_dir;

    auto ws = make_workspace(cfg);
    for (std::size_t i = 0; i < n_dump; ++i) {
        numerics::RngStream rng(cfg.seed, 0xF3A0u + i);
        models::PathBundle bundle;
        if (ws.is_rough) {
            auto state = ws.init;
            state.bank = fbm::init_bank_stationary(ws.quad, rng);
            bundle = models::simulate_rough(std::get<models::RoughSpec>(ws.spec), state, horizon,
                                            n_steps, rng);
        } else {
            bundle = models::simulate_lsv(std::get<models::LsvSpec>(ws.spec), ws.init, horizon,
                                          n_steps, rng);
        }
        const std::string stem = "path-" + std::to_string(i);
        auto os = detail::open_out(dir / (stem + ".csv"));
        models::write_path_csv(bundle, os);
        if (ws.is_rough)
            fbm::save_bank(*bundle.terminal.bank, dir / (stem + "-bank.txt"));
        rep.add_info("wrote " + stem + ".csv (" + std::to_string(n_steps) + " steps to t = " +
                     detail::fmt6(horizon) + ")");
    }
    rep.add_check("paths_written", true, std::to_string(n_dump) + " path files");
    write_report(dir, rep);
    return rep;
}

inline RunReport cmd_dynamic_consistency(const KvConfig& kv) {
    auto cfg = ExperimentConfig::resolve(kv);
    const double t_restart = kv.get_double("dynamic.t_restart", 0.5);
    const auto ks_paths = static_cast<std::size_t>(kv.get_u64("dynamic.ks_paths", 4000));
    kv.reject_unknown_keys();
    cfg.echo = kv.resolved();
    if (t_restart < 0.0) throw std::invalid_argument("dynamic.t_restart must be >= 0");
    if (ks_paths < 100) throw std::invalid_argument("dynamic.ks_paths must be >= 100");

    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    write_config_echo(dir, cfg.echo);

    RunReport rep;
    rep.command = "dynamic-consistency";
    rep.out_dir = cfg.out_dir;

    auto ws = make_workspace(cfg);
    if (!ws.is_rough)
        throw std::invalid_argument("dynamic-consistency requires a rough model; '" +
                                    cfg.model_name +
                                    "' carries no transferable volatility state");
    const auto& rs = std::get<models::RoughSpec>(ws.spec);

    models::MarketState restart_state = ws.init;
    if (t_restart > 0.0) {
        numerics::RngStream rng0(cfg.seed, 0xD15Cu);
        auto state0 = ws.init;
        state0.bank = fbm::init_bank_stationary(ws.quad, rng0);
        const auto warm = models::simulate_rough(rs, state0, t_restart,
                                                 std::max<std::size_t>(cfg.steps_per_theta, 50),
                                                 rng0);
        fbm::save_bank(*warm.terminal.bank, dir / "bank-restart.txt");
        restart_state = warm.terminal;
        restart_state.bank = fbm::load_bank(dir / "bank-restart.txt");
        rep.add_info("restart state at t = " + fmt17(t_restart) + ": S = " +
                     fmt17(restart_state.s) + ", Y = " + fmt17(restart_state.y));
    } else {
        rep.add_info("t_restart = 0: sweep runs from the unconditional initial state");
    }

    // Conditional skew sweep from the realized state: the exponent must match the
    // unconditional law even though level depends on the realized state.
    auto sweep = run_skew_sweep(ws.spec, restart_state, cfg, /*resample=*/t_restart == 0.0 &&
                                                                cfg.resample_bank,
                                0xD15C + 0x100u, rep);
    write_skew_csv(dir, sweep.estimates);
    if (sweep.fit) {
        write_fit_summary(dir, *sweep.fit);
        const double target = rs.hurst - 0.5;
        const bool ok = std::abs(sweep.fit->slope - target) <= 0.05;
        rep.add_check("conditional_skew_exponent", ok,
                      "fitted " + detail::fmt6(sweep.fit->slope) + " vs H-1/2 = " +
                          detail::fmt6(target) + " (tolerance 0.05)");
        rep.add_info("skew level tracks the realized state: fitted |A| = " +
                     detail::fmt6(std::exp(sweep.fit->log_intercept)) +
                     ", frozen-state coefficient " +
                     detail::fmt6(rough_skew_coefficient_target(rs, *ws.quad, restart_state.s,
                                                                restart_state.y)) +
                     " at Y = " + detail::fmt6(restart_state.y) + " vs " +
                     detail::fmt6(rough_skew_coefficient_target(rs, *ws.quad, ws.init.s,
                                                                ws.init.y)) +
                     " at Y = " + detail::fmt6(ws.init.y));
    } else {
        rep.add_check("conditional_skew_exponent", false, "no fit produced");
    }

    if (t_restart > 0.0) {
        // Restart-vs-continuous law check: S_{t+theta}/S_t from (a) paths continued
        // through a serialized snapshot and (b) paths continued in memory must agree.
        const double theta_ks = cfg.theta_max;
        const auto steps_a = std::max<std::size_t>(cfg.steps_per_theta, 50);
        const auto steps_b = cfg.steps_per_theta;
        std::vector<double> restarted(ks_paths), continuous(ks_paths);
        numerics::RngStream base_r(cfg.seed, 0xD15C + 0x200u);
        numerics::RngStream base_c(cfg.seed, 0xD15C + 0x300u);
        for (std::size_t j = 0; j < ks_paths; ++j) {
            {
                auto rng = base_r.split(j);
                auto st = ws.init;
                st.bank = fbm::init_bank_stationary(ws.quad, rng);
                const auto leg1 = models::simulate_rough(rs, st, t_restart, steps_a, rng);
                std::ostringstream snap;
                fbm::save_bank(*leg1.terminal.bank, snap);
                std::istringstream snap_in(snap.str());
                auto st2 = leg1.terminal;
                st2.bank = fbm::load_bank(snap_in);
                const auto leg2 = models::simulate_rough(rs, st2, theta_ks, steps_b, rng);
                restarted[j] = leg2.terminal.s / leg1.terminal.s;
            }
            {
                auto rng = base_c.split(j);
                auto st = ws.init;
                st.bank = fbm::init_bank_stationary(ws.quad, rng);
                const auto leg1 = models::simulate_rough(rs, st, t_restart, steps_a, rng);
                const auto bundle2 =
                    models::condition_and_restart(leg1, ws.spec, theta_ks, steps_b, rng);
                continuous[j] = bundle2.terminal.s / leg1.terminal.s;
            }
        }
        const auto ks = asymptotics::ks_two_sample(restarted, continuous);
        rep.add_check("restart_vs_continuous_ks", ks.p_value > 0.01,
                      "D = " + detail::fmt6(ks.statistic) + ", p = " +
                          detail::fmt6(ks.p_value) + " on S_(t+theta)/S_t at theta = " +
                          detail::fmt6(theta_ks) + " (reject below p = 0.01)");
    }
    write_report(dir, rep);
    return rep;
}

} // namespace roughskew::harness
