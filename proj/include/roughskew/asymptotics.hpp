#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "roughskew/fbm_engine.hpp"
#include "roughskew/models.hpp"
#include "roughskew/numerics.hpp"
#include "roughskew/pricing.hpp"

namespace roughskew::asymptotics {

using models::LsvSpec;
using models::MarketState;
using models::RoughSpec;
using numerics::RngStream;

// ---------------------------------------------------------------------------
// Regular-regime expansions
// ---------------------------------------------------------------------------

struct Theorem1Terms {
    double delta = 0.0;     // (e^{sqrt(theta) z} - 1) / sqrt(theta)
    double v_t = 0.0;
    double alpha_t = 0.0;   // (z/2)(v + s dv/ds + c rho dlog v/dy)
};

inline Theorem1Terms theorem1_terms(const LsvSpec& spec, const MarketState& state, double z,
                                    double theta) {
    if (!(theta > 0.0)) throw std::domain_error("theorem1_terms: theta must be positive");
    Theorem1Terms out;
    const double s = state.s, y = state.y, t = state.t;
    out.v_t = spec.v(s, y, t);
    out.delta = std::expm1(std::sqrt(theta) * z) / std::sqrt(theta);
    const double eta = spec.c(s, y, t) * spec.rho(s, y, t);
    const double dlogv_dy = spec.dv_dy(s, y, t) / out.v_t;
    out.alpha_t = 0.5 * z * (out.v_t + s * spec.dv_ds(s, y, t) + eta * dlogv_dy);
    return out;
}

// Price expansion normalized by S sqrt(theta).
inline double theorem1_price(const LsvSpec& spec, const MarketState& state, double z,
                              double theta) {
    const Theorem1Terms tt = theorem1_terms(spec, state, z, theta);
    const double u = tt.delta / tt.v_t;
    return tt.delta * numerics::norm_cdf(u) +
           (tt.v_t + tt.alpha_t * std::sqrt(theta)) * numerics::norm_pdf(u);
}

inline double theorem2_iv(const LsvSpec& spec, const MarketState& state, double z,
                          double theta) {
    const double s = state.s, y = state.y, t = state.t;
    const double v = spec.v(s, y, t);
    const double eta = spec.c(s, y, t) * spec.rho(s, y, t);
    const double dlogv_dy = spec.dv_dy(s, y, t) / v;
    return v + (s * spec.dv_ds(s, y, t) + eta * dlogv_dy) * std::sqrt(theta) * z * 0.5;
}

// ---------------------------------------------------------------------------
// F^theta functional
// ---------------------------------------------------------------------------

// Fixed integration window in the substituted variable: theta-independent by
// construction, so the law of the output inherits the exact theta-invariance
// of the scaled bank lookup.
inline constexpr double f_theta_x_min = 1e-6;
inline constexpr double f_theta_x_max = 1e3;
inline constexpr std::size_t f_theta_nodes = 181;

inline double f_theta(const models::OUBank& bank, double theta) {
    if (!(theta > 0.0)) throw std::domain_error("f_theta: theta must be positive");
    const auto& q = *bank.quadrature;
    const auto& beta = q.nodes();
    const double h = q.hurst();
    const double need_lo = f_theta_x_min / theta, need_hi = f_theta_x_max / theta;
    if (need_lo < beta.front() * (1.0 - 1e-9) || need_hi > beta.back() * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "f_theta: bank node range [" << beta.front() << ", " << beta.back()
           << "] cannot cover the scaled lookup for theta=" << theta << "; need nodes spanning ["
           << need_lo << ", " << need_hi << "]";
        throw std::invalid_argument(os.str());
    }
    const double lu = std::log(f_theta_x_min), hu = std::log(f_theta_x_max);
    const double du = (hu - lu) / static_cast<double>(f_theta_nodes - 1);
    const double inv_sqrt_theta = 1.0 / std::sqrt(theta);
    double acc = 0.0;
    std::size_t seg = 0;
    for (std::size_t m = 0; m < f_theta_nodes; ++m) {
        const double u = lu + du * static_cast<double>(m);
        const double x = std::exp(u);
        double w = x * du;
        if (m == 0 || m + 1 == f_theta_nodes) w *= 0.5;
        const double g = -(x + std::expm1(-x));          // 1 - x - e^{-x}
        const double target = x / theta;
        while (seg + 2 < beta.size() && beta[seg + 1] < target) ++seg;
        const double lb0 = std::log(beta[seg]), lb1 = std::log(beta[seg + 1]);
        double frac = (std::log(target) - lb0) / (lb1 - lb0);
        frac = std::min(1.0, std::max(0.0, frac));
        const double zval =
            (1.0 - frac) * bank.z_values[seg] + frac * bank.z_values[seg + 1];
        acc += w * std::pow(x, -1.5 - h) * g * inv_sqrt_theta * zval;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Rough-regime expansion
// ---------------------------------------------------------------------------

struct Theorem3Terms {
    double skew_coeff = 0.0;   // c_hat Gamma(1/2-H)/((1/2+H)(3/2+H)) rho dlog v/dy
    double f_theta = 0.0;      // the F^theta functional at the state's bank
    double alpha_theta = 0.0;  // skew_coeff * z + f_theta * dv/dy
    double z = 0.0;
    double iv = 0.0;           // v + alpha_theta * theta^H
    double price = 0.0;        // expansion value, normalized by S sqrt(theta)
};

inline Theorem3Terms theorem3_terms(const RoughSpec& spec, const MarketState& state, double z,
                                    double theta) {
    if (!state.bank)
        throw std::invalid_argument("theorem3_terms: state carries no OU bank");
    const auto& q = *state.bank->quadrature;
    if (std::abs(q.hurst() - spec.hurst) > 1e-12)
        throw std::invalid_argument("theorem3_terms: bank Hurst differs from the model spec");
    const double h = spec.hurst;
    const double s = state.s, y = state.y, t = state.t;
    const double v = spec.v(s, y, t);
    const double dvdy = spec.dv_dy(s, y, t);
    Theorem3Terms out;
    out.z = z;
    out.skew_coeff = q.c_hat() * numerics::gamma_fn(0.5 - h) /
                     ((0.5 + h) * (1.5 + h)) * spec.rho(y) * (dvdy / v);
    out.f_theta = f_theta(*state.bank, theta);
    out.alpha_theta = out.skew_coeff * z + out.f_theta * dvdy;
    const double th = std::pow(theta, h);
    out.iv = v + out.alpha_theta * th;
    const double delta = std::expm1(std::sqrt(theta) * z) / std::sqrt(theta);
    const double u = delta / v;
    out.price = delta * numerics::norm_cdf(u) +
                (v + out.alpha_theta * th) * numerics::norm_pdf(u);
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference skew estimator
// ---------------------------------------------------------------------------

struct SkewEstimate {
    double theta = 0.0;
    double z = 0.0;
    double zeta = 0.0;
    double value = 0.0;
    double stderr_ = 0.0;
};

inline SkewEstimate skew_estimate(const models::ModelSpec& spec, const MarketState& state,
                                  double z, double zeta, double theta,
                                  const pricing::McOptions& opt, const RngStream& rng) {
    if (z == zeta) throw std::invalid_argument("skew_estimate: need z != zeta");
    const double zs[2] = {z, zeta};
    const pricing::McBatch batch = pricing::mc_put_batch(spec, state, zs, theta, opt, rng);
    pricing::IVPoint iv_z, iv_zeta;
    try {
        iv_z = pricing::implied_vol(batch.quotes[0]);
    } catch (const std::exception& e) {
        throw std::runtime_error("skew_estimate: IV inversion failed at strike z=" +
                                 std::to_string(z) + ": " + e.what());
    }
    try {
        iv_zeta = pricing::implied_vol(batch.quotes[1]);
    } catch (const std::exception& e) {
        throw std::runtime_error("skew_estimate: IV inversion failed at strike zeta=" +
                                 std::to_string(zeta) + ": " + e.what());
    }
    const double dz = std::sqrt(theta) * (z - zeta);
    SkewEstimate out;
    out.theta = theta;
    out.z = z;
    out.zeta = zeta;
    out.value = (iv_z.iv - iv_zeta.iv) / dz;
    const double vega_z = pricing::bs_vega(batch.quotes[0].k, theta, iv_z.iv);
    const double vega_zeta = pricing::bs_vega(batch.quotes[1].k, theta, iv_zeta.iv);
    const double var = batch.cov(0, 0) / (vega_z * vega_z) +
                       batch.cov(1, 1) / (vega_zeta * vega_zeta) -
                       2.0 * batch.cov(0, 1) / (vega_z * vega_zeta);
    out.stderr_ = std::sqrt(std::max(var, 0.0)) / std::abs(dz);
    return out;
}

// ---------------------------------------------------------------------------
// Power-law fit
// ---------------------------------------------------------------------------

struct PowerLawFit {
    double slope = 0.0;
    double log_intercept = 0.0;   // log |A|
    double slope_se = 0.0;
    numerics::LinFit fit;
    std::vector<double> theta_grid;   // points that survived the noise filter
    std::size_t n_excluded = 0;
};

inline PowerLawFit fit_power_law(std::span<const SkewEstimate> estimates) {
    std::vector<double> xs, ys, thetas;
    std::size_t excluded = 0;
    int sign = 0;
    for (const auto& e : estimates) {
        if (e.value == 0.0 || e.stderr_ / std::abs(e.value) > 0.2) {
            ++excluded;
            continue;
        }
        const int s = e.value > 0.0 ? 1 : -1;
        if (sign == 0) sign = s;
        if (s != sign)
            throw std::invalid_argument(
                "fit_power_law: skew changes sign across the theta grid; a single power law "
                "presumes one sign");
        xs.push_back(std::log(e.theta));
        ys.push_back(std::log(std::abs(e.value)));
        thetas.push_back(e.theta);
    }
    if (xs.size() < 4)
        throw std::invalid_argument("fit_power_law: need at least 4 usable points, got " +
                                    std::to_string(xs.size()) + " (" +
                                    std::to_string(excluded) + " excluded as too noisy)");
    const auto [lo_it, hi_it] = std::minmax_element(thetas.begin(), thetas.end());
    if (*hi_it / *lo_it < 99.999)
        throw std::invalid_argument(
            "fit_power_law: usable theta points span fewer than 2 decades");
    PowerLawFit out;
    out.fit = numerics::least_squares_line(xs, ys);
    out.slope = out.fit.slope;
    out.log_intercept = out.fit.intercept;
    out.slope_se = numerics::slope_stderr(out.fit, xs);
    out.theta_grid = std::move(thetas);
    out.n_excluded = excluded;
    return out;
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 100 || b.size() < 100)
        throw std::invalid_argument("ks_two_sample: both samples need at least 100 points");
    std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < sa.size() && j < sb.size()) {
        const double x = std::min(sa[i], sb[j]);
        while (i < sa.size() && sa[i] <= x) ++i;
        while (j < sb.size() && sb[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    KsResult out;
    out.statistic = d;
    const double ne = std::sqrt(na * nb / (na + nb));
    const double lambda = (ne + 0.12 + 0.11 / ne) * d;
    if (lambda < 1e-3) {
        out.p_value = 1.0;
        return out;
    }
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * (k % 2 == 1 ? 1.0 : -1.0) *
                            std::exp(-2.0 * lambda * lambda * static_cast<double>(k) *
                                     static_cast<double>(k));
        p += term;
        if (std::abs(term) < 1e-12) break;
    }
    out.p_value = std::min(1.0, std::max(0.0, p));
    return out;
}

// ---------------------------------------------------------------------------
// Driver correlation probe (one exact bank step per draw)
// ---------------------------------------------------------------------------

// Estimates E[dB * dW^H] over [0, theta] with dB = rho dW + sqrt(1-rho^2) dW_perp.
inline std::pair<double, double> driver_corr_estimate(const fbm::QuadraturePtr& q,
                                                      double theta, double rho,
                                                      std::size_t n_draws, RngStream& rng) {
    if (n_draws < 2) throw std::invalid_argument("driver_corr_estimate: need n_draws >= 2");
    double sum = 0.0, sum2 = 0.0;
    const double rho_perp = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t i = 0; i < n_draws; ++i) {
        fbm::OUBank bank = fbm::init_bank_stationary(q, rng);
        const double dot0 = [&] {
            double acc = 0.0;
            for (std::size_t k = 0; k < q->size(); ++k)
                acc += q->omega()[k] * bank.z_values[k];
            return acc;
        }();
        const double dw = fbm::step_bank(bank, theta, rng);
        double dot1 = 0.0;
        for (std::size_t k = 0; k < q->size(); ++k)
            dot1 += q->omega()[k] * bank.z_values[k];
        const double dwh = dot1 - dot0;
        const double db = rho * dw + rho_perp * std::sqrt(theta) * rng.normal();
        const double prod = db * dwh;
        sum += prod;
        sum2 += prod * prod;
    }
    const double n = static_cast<double>(n_draws);
    const double mean = sum / n;
    const double var = (sum2 - n * mean * mean) / (n - 1.0);
    return {mean, std::sqrt(std::max(var, 0.0) / n)};
}

} // namespace roughskew::asymptotics
