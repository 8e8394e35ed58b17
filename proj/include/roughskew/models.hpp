#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "roughskew/fbm_engine.hpp"
#include "roughskew/numerics.hpp"
#include "roughskew/rng.hpp"

namespace roughskew::models {

using fbm::OUBank;
using fbm::QuadraturePtr;
using numerics::RngStream;

using CoefFn = std::function<double(double s, double y, double t)>;

// Regular local-stochastic-vol family: scalar volatility factor y.
struct LsvSpec {
    CoefFn v;        // volatility v(s, y, t) > 0
    CoefFn dv_ds;    // analytic d v / d s
    CoefFn dv_dy;    // analytic d v / d y
    CoefFn b;        // drift of y
    CoefFn c;        // diffusion of y
    CoefFn rho;      // driver correlation, |rho| <= 1
    std::string name;
    std::string compliance;
    bool flagged = false;
};

// Rough fractional-vol family: y driven by W^H, Hurst in (0, 1/2).
struct RoughSpec {
    CoefFn v;
    CoefFn dv_ds;
    CoefFn dv_dy;
    std::function<double(double y)> b;
    std::function<double(double y)> rho;
    double hurst = 0.1;
    std::string name;
    std::string compliance;
    bool flagged = false;
};

using ModelSpec = std::variant<LsvSpec, RoughSpec>;

struct MarketState {
    double s = 1.0;
    double y = 0.0;
    std::optional<OUBank> bank;   // rough model Markov state
    double t = 0.0;
};

struct PathBundle {
    std::vector<double> grid;
    std::vector<double> s_path;
    std::vector<double> y_path;
    fbm::DriverPath driver;
    MarketState terminal;
};

// ---------------------------------------------------------------------------
// Derivative and regularity cross-checks (run at zoo construction)
// ---------------------------------------------------------------------------

namespace detail {

struct Probe {
    double s, y, t;
};

inline void check_derivative(double analytic, double fd, const char* which, double s,
                             double y, double t) {
    const double scale = std::max({std::abs(analytic), std::abs(fd), 1.0});
    if (std::abs(analytic - fd) > 1e-6 * scale) {
        std::ostringstream os;
        os << "model derivative check failed for " << which << " at (s=" << s << ", y=" << y
           << ", t=" << t << "): analytic " << analytic << " vs finite-difference " << fd;
        throw std::invalid_argument(os.str());
    }
}

template <typename VFn, typename DsFn, typename DyFn>
inline void check_v_derivatives(const VFn& v, const DsFn& dv_ds, const DyFn& dv_dy,
                                const std::vector<Probe>& probes) {
    for (const auto& p : probes) {
        const double hs = 1e-5 * std::max(1.0, std::abs(p.s));
        const double hy = 1e-5 * std::max(1.0, std::abs(p.y));
        const double fds = (v(p.s + hs, p.y, p.t) - v(p.s - hs, p.y, p.t)) / (2.0 * hs);
        const double fdy = (v(p.s, p.y + hy, p.t) - v(p.s, p.y - hy, p.t)) / (2.0 * hy);
        check_derivative(dv_ds(p.s, p.y, p.t), fds, "dv/ds", p.s, p.y, p.t);
        check_derivative(dv_dy(p.s, p.y, p.t), fdy, "dv/dy", p.s, p.y, p.t);
    }
}

inline std::vector<Probe> default_probes(std::uint64_t salt, bool positive_y) {
    RngStream rng(9001, salt);
    std::vector<Probe> out;
    out.reserve(100);
    for (int i = 0; i < 100; ++i) {
        Probe p;
        p.s = std::exp(0.3 * rng.normal());
        p.y = positive_y ? 0.04 * std::exp(0.5 * rng.normal()) + 0.001 : rng.normal();
        p.t = rng.uniform01();
        out.push_back(p);
    }
    return out;
}

inline void check_lipschitz(const std::function<double(double)>& b, const std::string& name) {
    double prev_y = -5.0, prev_b = b(-5.0);
    for (int i = 1; i <= 100; ++i) {
        const double y = -5.0 + 0.1 * i;
        const double by = b(y);
        if (!std::isfinite(by))
            throw std::invalid_argument("model '" + name + "': drift b not finite at y=" +
                                        std::to_string(y));
        if (std::abs(by - prev_b) > 1e6 * std::abs(y - prev_y))
            throw std::invalid_argument("model '" + name +
                                        "': drift b fails the Lipschitz probe near y=" +
                                        std::to_string(y));
        prev_y = y;
        prev_b = by;
    }
}

inline double get(const std::map<std::string, double>& params, const std::string& key,
                  double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Model zoo
// ---------------------------------------------------------------------------

inline ModelSpec model_zoo(const std::string& name,
                           const std::map<std::string, double>& params = {}) {
    using detail::get;
    if (name == "bs") {
        const double sigma0 = get(params, "sigma0", 0.2);
        if (!(sigma0 > 0.0))
            throw std::invalid_argument("model 'bs': sigma0 must be positive");
        LsvSpec spec;
        spec.v = [sigma0](double, double, double) { return sigma0; };
        spec.dv_ds = [](double, double, double) { return 0.0; };
        spec.dv_dy = [](double, double, double) { return 0.0; };
        spec.b = [](double, double, double) { return 0.0; };
        spec.c = [](double, double, double) { return 0.0; };
        spec.rho = [](double, double, double) { return 0.0; };
        spec.name = "bs";
        spec.compliance = "constant volatility; satisfies all regularity conditions";
        detail::check_v_derivatives(spec.v, spec.dv_ds, spec.dv_dy,
                                    detail::default_probes(1, false));
        return spec;
    }
    if (name == "lsv-linear") {
        const double sigma0 = get(params, "sigma0", 0.2);
        const double a = get(params, "a", 0.5);
        const double kappa = get(params, "kappa", 1.0);
        const double nu = get(params, "nu", 1.0);
        const double rho = get(params, "rho", -0.7);
        if (!(sigma0 > 0.0 && std::abs(a) < 1.0))
            throw std::invalid_argument("model 'lsv-linear': need sigma0 > 0 and |a| < 1");
        if (!(std::abs(rho) <= 1.0))
            throw std::invalid_argument("model 'lsv-linear': need |rho| <= 1");
        LsvSpec spec;
        spec.v = [sigma0, a](double, double y, double) {
            return sigma0 * (1.0 + a * std::tanh(y));
        };
        spec.dv_ds = [](double, double, double) { return 0.0; };
        spec.dv_dy = [sigma0, a](double, double y, double) {
            const double c = std::cosh(y);
            return sigma0 * a / (c * c);
        };
        spec.b = [kappa](double, double y, double) { return -kappa * y; };
        spec.c = [nu](double, double, double) { return nu; };
        spec.rho = [rho](double, double, double) { return rho; };
        spec.name = "lsv-linear";
        spec.compliance = "bounded v away from 0, Lipschitz drift, constant diffusion and "
                          "correlation; satisfies the regular-regime conditions";
        detail::check_v_derivatives(spec.v, spec.dv_ds, spec.dv_dy,
                                    detail::default_probes(2, false));
        return spec;
    }
    if (name == "rough-bounded" || name == "rough-exp") {
        const double sigma0 = get(params, "sigma0", 0.2);
        const double a = get(params, "a", 0.5);
        const double kappa = get(params, "kappa", 1.0);
        const double rho = get(params, "rho", -0.7);
        const double h = get(params, "h", 0.1);
        if (!(sigma0 > 0.0))
            throw std::invalid_argument("model '" + name + "': sigma0 must be positive");
        if (!(std::abs(rho) <= 1.0))
            throw std::invalid_argument("model '" + name + "': need |rho| <= 1");
        RoughSpec spec;
        spec.hurst = fbm::Hurst(h).h;
        if (name == "rough-bounded") {
            if (!(std::abs(a) < 1.0))
                throw std::invalid_argument("model 'rough-bounded': need |a| < 1");
            spec.v = [sigma0, a](double, double y, double) {
                return sigma0 * (1.0 + a * std::tanh(y));
            };
            spec.dv_dy = [sigma0, a](double, double y, double) {
                const double c = std::cosh(y);
                return sigma0 * a / (c * c);
            };
            spec.compliance = "v bounded in [sigma0(1-a), sigma0(1+a)], Lipschitz drift; "
                              "satisfies the rough-regime conditions";
        } else {
            spec.v = [sigma0](double, double y, double) { return sigma0 * std::exp(y); };
            spec.dv_dy = [sigma0](double, double y, double) { return sigma0 * std::exp(y); };
            spec.flagged = true;
            spec.compliance = "exponential volatility violates the linear-growth condition; "
                              "desk-scale experiments only";
        }
        spec.dv_ds = [](double, double, double) { return 0.0; };
        spec.b = [kappa](double y) { return -kappa * y; };
        spec.rho = [rho](double) { return rho; };
        spec.name = name;
        detail::check_v_derivatives(spec.v, spec.dv_ds, spec.dv_dy,
                                    detail::default_probes(3, false));
        detail::check_lipschitz(spec.b, name);
        return spec;
    }
    if (name == "heston-like") {
        const double kappa = get(params, "kappa", 2.0);
        const double m = get(params, "m", 0.04);
        const double xi = get(params, "xi", 0.3);
        const double rho = get(params, "rho", -0.5);
        constexpr double eps = 1e-8;
        if (!(m > 0.0 && xi >= 0.0))
            throw std::invalid_argument("model 'heston-like': need m > 0 and xi >= 0");
        LsvSpec spec;
        spec.v = [eps](double, double y, double) { return std::sqrt(std::max(y, eps)); };
        spec.dv_ds = [](double, double, double) { return 0.0; };
        spec.dv_dy = [eps](double, double y, double) {
            return y > eps ? 0.5 / std::sqrt(y) : 0.0;
        };
        spec.b = [kappa, m](double, double y, double) { return kappa * (m - y); };
        spec.c = [xi, eps](double, double y, double) { return xi * std::sqrt(std::max(y, eps)); };
        spec.rho = [rho](double, double, double) { return rho; };
        spec.name = "heston-like";
        spec.compliance = "square-root volatility with clamp v = sqrt(y v eps), eps = 1e-8; "
                          "y positivity is not enforced, the clamp keeps v finite";
        detail::check_v_derivatives(spec.v, spec.dv_ds, spec.dv_dy,
                                    detail::default_probes(4, true));
        return spec;
    }
    throw std::invalid_argument(
        "model_zoo: unknown model '" + name +
        "'; available: bs, lsv-linear, rough-bounded, rough-exp, heston-like");
}

inline const LsvSpec& as_lsv(const ModelSpec& spec) {
    if (const auto* p = std::get_if<LsvSpec>(&spec)) return *p;
    throw std::invalid_argument("expected a regular LSV model spec");
}

inline const RoughSpec& as_rough(const ModelSpec& spec) {
    if (const auto* p = std::get_if<RoughSpec>(&spec)) return *p;
    throw std::invalid_argument("expected a rough model spec");
}

// ---------------------------------------------------------------------------
// Path stepping cores
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void bad_vol(double v, double s, double y, double t) {
    std::ostringstream os;
    os << "simulation aborted: volatility " << v << " at state (s=" << s << ", y=" << y
       << ", t=" << t << ") is not positive and finite";
    throw std::runtime_error(os.str());
}

} // namespace detail

// One LSV path evolved with externally supplied standard-normal draws:
// per step draws[2*step] drives W (and y), draws[2*step+1] drives W-perp.
struct LsvPathCore {
    const LsvSpec* spec;
    double log_s, y, t;
    double b_driver = 0.0;   // accumulated Brownian B driving S

    LsvPathCore(const LsvSpec& sp, const MarketState& init)
        : spec(&sp), log_s(std::log(init.s)), y(init.y), t(init.t) {}

    void step(double dt, const double* draws) {
        const double s = std::exp(log_s);
        const double vol = spec->v(s, y, t);
        if (!(vol > 0.0) || !std::isfinite(vol)) detail::bad_vol(vol, s, y, t);
        const double rho = spec->rho(s, y, t);
        const double sq = std::sqrt(dt);
        const double dw = sq * draws[0];
        const double dwp = sq * draws[1];
        const double db = rho * dw + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * dwp;
        const double bval = spec->b(s, y, t);
        const double cval = spec->c(s, y, t);
        log_s += -0.5 * vol * vol * dt + vol * db;
        y += bval * dt + cval * dw;
        b_driver += db;
        t += dt;
    }

    static constexpr std::size_t draws_per_step(const LsvSpec&) { return 2; }
};

// One rough path: per step the first `rank` draws feed the exact OU-bank update
// (which yields dW), the last draw drives W-perp.
struct RoughPathCore {
    const RoughSpec* spec;
    OUBank bank;
    double log_s, y, t;
    double b_driver = 0.0;
    double wh = 0.0;         // W^H relative to the starting bank
    double last_dw = 0.0;    // driving Brownian increment of the latest step
    double dot_prev;

    RoughPathCore(const RoughSpec& sp, const MarketState& init)
        : spec(&sp),
          bank(init.bank ? *init.bank
                         : throw std::invalid_argument(
                               "rough simulation requires a MarketState bank")),
          log_s(std::log(init.s)), y(init.y), t(init.t) {
        dot_prev = omega_dot();
    }

    double omega_dot() const {
        const auto& om = bank.quadrature->omega();
        double acc = 0.0;
        for (std::size_t i = 0; i < om.size(); ++i) acc += om[i] * bank.z_values[i];
        return acc;
    }

    void step(double dt, const double* draws) {
        const auto& q = *bank.quadrature;
        const fbm::StepFactor& sf = q.step_factor(dt);
        const std::size_t n = q.size(), r = sf.rank;
        const double s = std::exp(log_s);
        const double vol = spec->v(s, y, t);
        if (!(vol > 0.0) || !std::isfinite(vol)) detail::bad_vol(vol, s, y, t);
        const double rho = spec->rho(y);

        const double* f = sf.f.a.data();
        double dw = 0.0;
        for (std::size_t k = 0; k < r; ++k) dw += f[n * r + k] * draws[k];
        last_dw = dw;
        const auto& om = q.omega();
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double inc = 0.0;
            const double* row = f + i * r;
            for (std::size_t k = 0; k < r; ++k) inc += row[k] * draws[k];
            const double zi = sf.decay[i] * bank.z_values[i] + inc;
            bank.z_values[i] = zi;
            dot += om[i] * zi;
        }
        bank.time += dt;
        const double dwh = dot - dot_prev;
        dot_prev = dot;

        const double dwp = std::sqrt(dt) * draws[r];
        const double db = rho * dw + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * dwp;
        log_s += -0.5 * vol * vol * dt + vol * db;
        y += spec->b(y) * dt + dwh;
        wh += dwh;
        b_driver += db;
        t += dt;
    }

    std::size_t draws_per_step(double dt) const {
        return bank.quadrature->step_factor(dt).rank + 1;
    }
};

// ---------------------------------------------------------------------------
// Bundle-producing simulators
// ---------------------------------------------------------------------------

inline PathBundle simulate_lsv(const LsvSpec& spec, const MarketState& init, double horizon,
                               std::size_t n_steps, RngStream& rng) {
    if (horizon < 0.0)
        throw std::domain_error("simulate_lsv: horizon must be non-negative");
    if (n_steps < 1) throw std::invalid_argument("simulate_lsv: need n_steps >= 1");
    PathBundle out;
    out.grid = {init.t};
    out.s_path = {init.s};
    out.y_path = {init.y};
    out.driver.times = {init.t};
    out.driver.wh = {0.0};
    LsvPathCore core(spec, init);
    if (horizon > 0.0) {
        const double dt = horizon / static_cast<double>(n_steps);
        for (std::size_t k = 0; k < n_steps; ++k) {
            double draws[2] = {rng.normal(), rng.normal()};
            core.step(dt, draws);
            out.grid.push_back(core.t);
            out.s_path.push_back(std::exp(core.log_s));
            out.y_path.push_back(core.y);
            out.driver.times.push_back(core.t);
            out.driver.dw.push_back(std::sqrt(dt) * draws[0]);
            out.driver.dw_perp.push_back(std::sqrt(dt) * draws[1]);
            out.driver.wh.push_back(0.0);
        }
    }
    out.terminal = MarketState{out.s_path.back(), core.y, std::nullopt, core.t};
    return out;
}

inline PathBundle simulate_rough(const RoughSpec& spec, const MarketState& init,
                                 double horizon, std::size_t n_steps, RngStream& rng) {
    if (horizon < 0.0)
        throw std::domain_error("simulate_rough: horizon must be non-negative");
    if (n_steps < 1) throw std::invalid_argument("simulate_rough: need n_steps >= 1");
    if (!init.bank)
        throw std::invalid_argument("simulate_rough: MarketState carries no OU bank");
    if (std::abs(init.bank->quadrature->hurst() - spec.hurst) > 1e-12)
        throw std::invalid_argument(
            "simulate_rough: bank quadrature Hurst differs from the model spec");
    PathBundle out;
    out.grid = {init.t};
    out.s_path = {init.s};
    out.y_path = {init.y};
    out.driver.times = {init.t};
    out.driver.wh = {0.0};
    RoughPathCore core(spec, init);
    if (horizon > 0.0) {
        const double dt = horizon / static_cast<double>(n_steps);
        const std::size_t nd = core.draws_per_step(dt);
        std::vector<double> draws(nd);
        for (std::size_t k = 0; k < n_steps; ++k) {
            for (auto& d : draws) d = rng.normal();
            core.step(dt, draws.data());
            out.grid.push_back(core.t);
            out.s_path.push_back(std::exp(core.log_s));
            out.y_path.push_back(core.y);
            out.driver.times.push_back(core.t);
            out.driver.dw.push_back(core.last_dw);
            out.driver.dw_perp.push_back(std::sqrt(dt) * draws[nd - 1]);
            out.driver.wh.push_back(core.wh);
        }
    }
    out.terminal = MarketState{out.s_path.back(), core.y, core.bank, core.t};
    return out;
}

inline PathBundle condition_and_restart(const PathBundle& bundle, const ModelSpec& spec,
                                        double horizon2, std::size_t n_steps2,
                                        RngStream& rng) {
    if (const auto* rough = std::get_if<RoughSpec>(&spec)) {
        if (!bundle.terminal.bank)
            throw std::invalid_argument(
                "condition_and_restart: terminal state carries no bank for a rough model");
        return simulate_rough(*rough, bundle.terminal, horizon2, n_steps2, rng);
    }
    return simulate_lsv(std::get<LsvSpec>(spec), bundle.terminal, horizon2, n_steps2, rng);
}

inline void write_path_csv(const PathBundle& bundle, std::ostream& os) {
    os << "t,S,Y,WH\n";
    char buf[128];
    for (std::size_t i = 0; i < bundle.grid.size(); ++i) {
        const double wh = i < bundle.driver.wh.size() ? bundle.driver.wh[i] : 0.0;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", bundle.grid[i],
                      bundle.s_path[i], bundle.y_path[i], wh);
        os << buf;
    }
}

} // namespace roughskew::models
