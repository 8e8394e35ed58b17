#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "roughskew/models.hpp"
#include "roughskew/numerics.hpp"
#include "roughskew/parallel.hpp"
#include "roughskew/rng.hpp"

namespace roughskew::pricing {

using models::MarketState;
using models::ModelSpec;
using numerics::RngStream;

struct PutQuote {
    double k = 0.0;                // log-moneyness
    double theta = 0.0;            // time to maturity
    double price_over_spot = 0.0;  // P / S
    double mc_stderr = 0.0;
};

struct IVPoint {
    double z = 0.0;                // rescaled log-moneyness, k = sqrt(theta) * z
    double theta = 0.0;
    double iv = 0.0;
    double iv_stderr = 0.0;
};

// ---------------------------------------------------------------------------
// Black-Scholes put and vega (price normalized by spot)
// ---------------------------------------------------------------------------

inline double bs_put(double k, double theta, double sigma) {
    if (!(theta > 0.0))
        throw std::domain_error("bs_put: theta must be positive, got " + std::to_string(theta));
    if (!(sigma > 0.0))
        throw std::domain_error("bs_put: sigma must be positive, got " + std::to_string(sigma));
    const double st = sigma * std::sqrt(theta);
    const double d1 = (-k + 0.5 * sigma * sigma * theta) / st;
    const double d2 = d1 - st;
    return std::exp(k) * numerics::norm_cdf(-d2) - numerics::norm_cdf(-d1);
}

inline double bs_vega(double k, double theta, double sigma) {
    const double st = sigma * std::sqrt(theta);
    const double d1 = (-k + 0.5 * sigma * sigma * theta) / st;
    return std::sqrt(theta) * numerics::norm_pdf(d1);
}

// ---------------------------------------------------------------------------
// Implied volatility: safeguarded Newton
// ---------------------------------------------------------------------------

struct NoArbitrageError : std::runtime_error {
    enum class Kind { below_intrinsic, above_upper };
    Kind kind;
    NoArbitrageError(Kind kk, const std::string& what) : std::runtime_error(what), kind(kk) {}
};

struct IvConvergenceError : std::runtime_error {
    double lo, hi, f_lo, f_hi;
    IvConvergenceError(double l, double h, double fl, double fh, const std::string& what)
        : std::runtime_error(what), lo(l), hi(h), f_lo(fl), f_hi(fh) {}
};

inline IVPoint implied_vol(const PutQuote& quote) {
    const double k = quote.k, theta = quote.theta, price = quote.price_over_spot;
    if (!(theta > 0.0))
        throw std::domain_error("implied_vol: theta must be positive");
    const double intrinsic = std::max(std::exp(k) - 1.0, 0.0);
    const double upper = std::exp(k);
    if (!(price > intrinsic))
        throw NoArbitrageError(NoArbitrageError::Kind::below_intrinsic,
                               "implied_vol: price " + std::to_string(price) +
                                   " at or below intrinsic " + std::to_string(intrinsic));
    if (!(price < upper))
        throw NoArbitrageError(NoArbitrageError::Kind::above_upper,
                               "implied_vol: price " + std::to_string(price) +
                                   " at or above the upper bound " + std::to_string(upper));

    double lo = 1e-8, hi = 10.0;
    while (bs_put(k, theta, hi) < price) {
        hi *= 2.0;
        if (hi > 1e6) {
            std::ostringstream os;
            os << "implied_vol: cannot bracket price " << price << " (k=" << k
               << ", theta=" << theta << "), bs_put at sigma=1e6 still below target";
            throw IvConvergenceError(lo, hi, bs_put(k, theta, lo) - price,
                                     bs_put(k, theta, hi) - price, os.str());
        }
    }

    double sigma;
    if (std::abs(k) < 1e-12) {
        sigma = price * std::sqrt(2.0 * numerics::pi / theta);   // ATM expansion
        sigma = std::min(std::max(sigma, lo), hi);
    } else {
        sigma = 0.5 * (lo + hi);
    }

    // Ulp-scale relative tolerance: an absolute floor would let
    // astronomically small deep-OTM prices "converge" at wildly wrong sigma,
    // while anything much looser than ulp(price) wastes the conditioning of
    // near-intrinsic cells.  The bracket width is the backstop: bs_put is
    // strictly increasing in sigma, so a collapsed bracket pins sigma to
    // machine precision even when the residual tolerance is unreachable in
    // double arithmetic.
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() * price;
    const auto bracket_pinned = [&] {
        return hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi;
    };
    double f = bs_put(k, theta, sigma) - price;
    int newton_hits = 0;
    for (int it = 0; it < 200; ++it) {
        if (f > 0.0) hi = sigma;
        else lo = sigma;
        if (std::abs(f) <= tol && ++newton_hits >= 3) break;
        if (bracket_pinned()) break;
        const double vega = bs_vega(k, theta, sigma);
        // Newton on log(price): deep-OTM prices span hundreds of orders of
        // magnitude, where price-space Newton creeps; near the root
        // log1p(f/price)*p/vega collapses to the ordinary step f/vega.
        const double p_sigma = f + price;
        double next = (vega > 0.0 && p_sigma > 0.0)
                          ? sigma - std::log1p(f / price) * p_sigma / vega
                          : 0.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == sigma) break;
        sigma = next;
        f = bs_put(k, theta, sigma) - price;
    }
    if (std::abs(f) > tol && !bracket_pinned()) {
        std::ostringstream os;
        os << "implied_vol: no convergence within 200 iterations; residual " << f
           << " above tolerance " << tol << ", bracket [" << lo << ", " << hi
           << "] with bracket residuals [" << bs_put(k, theta, lo) - price << ", "
           << bs_put(k, theta, hi) - price << "]";
        throw IvConvergenceError(lo, hi, bs_put(k, theta, lo) - price,
                                 bs_put(k, theta, hi) - price, os.str());
    }
    IVPoint out;
    out.z = k / std::sqrt(theta);
    out.theta = theta;
    out.iv = sigma;
    const double vega = bs_vega(k, theta, sigma);
    out.iv_stderr = vega > 0.0 ? quote.mc_stderr / vega
                               : std::numeric_limits<double>::infinity();
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo conditional put pricer
// ---------------------------------------------------------------------------

struct McOptions {
    std::size_t n_paths = 10000;
    std::size_t n_steps = 50;
    bool resample_bank = false;   // rough only: fresh stationary bank per path
    int threads = 1;
    std::size_t block_pairs = 256;
};

// CRN batch: every strike priced on the same simulated paths; cov holds the
// covariance matrix of the mean estimators across strikes.
struct McBatch {
    std::vector<PutQuote> quotes;
    numerics::Matrix cov;
    double cv_sigma = 0.0;
};

namespace detail {

struct PairSums {
    std::vector<double> sum_q;    // per strike
    std::vector<double> sum_qq;   // m x m raw cross-products
    std::size_t pairs = 0;
};

template <typename RunMember>
inline void accumulate_pair(PairSums& acc, std::size_t m, RunMember&& member_payoffs,
                            std::vector<double>& qa, std::vector<double>& qb) {
    member_payoffs(false, qa);
    member_payoffs(true, qb);
    for (std::size_t i = 0; i < m; ++i) {
        const double q = 0.5 * (qa[i] + qb[i]);
        qa[i] = q;
        acc.sum_q[i] += q;
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) acc.sum_qq[i * m + j] += qa[i] * qa[j];
    acc.pairs += 1;
}

} // namespace detail

inline McBatch mc_put_batch(const ModelSpec& spec, const MarketState& init,
                            std::span<const double> zs, double theta, const McOptions& opt,
                            const RngStream& base_rng) {
    if (!(theta > 0.0))
        throw std::domain_error("mc_put: theta must be positive, got " + std::to_string(theta));
    if (opt.n_paths < 100)
        throw std::invalid_argument(
            "mc_put: n_paths below 100 refused, the stderr would be meaningless");
    if (opt.n_steps < 1) throw std::invalid_argument("mc_put: need n_steps >= 1");
    if (zs.empty()) throw std::invalid_argument("mc_put: no strikes given");

    const bool is_rough = std::holds_alternative<models::RoughSpec>(spec);
    if (is_rough && !init.bank)
        throw std::invalid_argument("mc_put: rough model requires a MarketState bank");
    if (!(init.s > 0.0) || !std::isfinite(init.s))
        throw std::invalid_argument("mc_put: initial spot must be positive and finite");

    // Strikes are relative to the initial spot and prices are quoted per unit
    // of spot, so the result is the smile of the return S_T / S_0.
    const std::size_t m = zs.size();
    const double sqrt_theta = std::sqrt(theta);
    const double inv_spot = 1.0 / init.s;
    std::vector<double> strikes(m);
    for (std::size_t i = 0; i < m; ++i) strikes[i] = std::exp(sqrt_theta * zs[i]);

    const double cv_sigma = is_rough
                                ? std::get<models::RoughSpec>(spec).v(init.s, init.y, init.t)
                                : std::get<models::LsvSpec>(spec).v(init.s, init.y, init.t);
    if (!(cv_sigma > 0.0) || !std::isfinite(cv_sigma))
        throw std::runtime_error("mc_put: control-variate volatility at the initial state is "
                                 "not positive and finite");

    const std::size_t pairs = (opt.n_paths + 1) / 2;
    const std::size_t block = std::max<std::size_t>(opt.block_pairs, 1);
    const std::size_t n_blocks = (pairs + block - 1) / block;
    const double dt = theta / static_cast<double>(opt.n_steps);

    std::vector<detail::PairSums> partial(n_blocks);

    auto run_blocks = [&](auto const& model, auto make_core, std::size_t draws_per_step,
                          std::size_t bank_draws) {
        parallel::for_blocks(n_blocks, parallel::resolve_threads(opt.threads),
                             [&](std::size_t b) {
            detail::PairSums acc;
            acc.sum_q.assign(m, 0.0);
            acc.sum_qq.assign(m * m, 0.0);
            const std::size_t p_begin = b * block;
            const std::size_t p_end = std::min(pairs, p_begin + block);
            std::vector<double> draws(bank_draws + opt.n_steps * draws_per_step);
            std::vector<double> qa(m), qb(m);
            for (std::size_t p = p_begin; p < p_end; ++p) {
                RngStream rng = base_rng.split(p);
                for (auto& d : draws) d = rng.normal();
                auto member_payoffs = [&](bool antithetic, std::vector<double>& q) {
                    if (antithetic)
                        for (auto& d : draws) d = -d;
                    auto core = make_core(model, draws.data());
                    const double* step_draws = draws.data() + bank_draws;
                    for (std::size_t s = 0; s < opt.n_steps; ++s)
                        core.step(dt, step_draws + s * draws_per_step);
                    const double r_T = std::exp(core.log_s) * inv_spot;
                    const double r_cv =
                        std::exp(-0.5 * cv_sigma * cv_sigma * theta + cv_sigma * core.b_driver);
                    for (std::size_t i = 0; i < m; ++i)
                        q[i] = std::max(strikes[i] - r_T, 0.0) -
                               std::max(strikes[i] - r_cv, 0.0);
                };
                detail::accumulate_pair(acc, m, member_payoffs, qa, qb);
            }
            partial[b] = std::move(acc);
        });
    };

    if (is_rough) {
        const auto& rough = std::get<models::RoughSpec>(spec);
        const auto& q0 = *init.bank->quadrature;
        const std::size_t rank_step = q0.step_factor(dt).rank;
        const std::size_t bank_draws = opt.resample_bank ? q0.stationary_rank() : 0;
        auto make_core = [&](const models::RoughSpec& sp, const double* d) {
            if (opt.resample_bank) {
                MarketState st = init;
                const std::size_t n = q0.size(), r = q0.stationary_rank();
                const numerics::Matrix& l = q0.stationary_factor();
                models::OUBank bank{init.bank->quadrature, std::vector<double>(n, 0.0),
                                    init.t};
                for (std::size_t i = 0; i < n; ++i) {
                    double acc = 0.0;
                    for (std::size_t kk = 0; kk < r; ++kk) acc += l(i, kk) * d[kk];
                    bank.z_values[i] = acc;
                }
                st.bank = std::move(bank);
                return models::RoughPathCore(sp, st);
            }
            return models::RoughPathCore(sp, init);
        };
        run_blocks(rough, make_core, rank_step + 1, bank_draws);
    } else {
        const auto& lsv = std::get<models::LsvSpec>(spec);
        auto make_core = [&](const models::LsvSpec& sp, const double*) {
            return models::LsvPathCore(sp, init);
        };
        run_blocks(lsv, make_core, 2, 0);
    }

    detail::PairSums total;
    total.sum_q.assign(m, 0.0);
    total.sum_qq.assign(m * m, 0.0);
    for (const auto& part : partial) {
        for (std::size_t i = 0; i < m; ++i) total.sum_q[i] += part.sum_q[i];
        for (std::size_t i = 0; i < m * m; ++i) total.sum_qq[i] += part.sum_qq[i];
        total.pairs += part.pairs;
    }

    const double np = static_cast<double>(total.pairs);
    McBatch out;
    out.cv_sigma = cv_sigma;
    out.cov = numerics::Matrix(m, m);
    std::vector<double> mean(m);
    for (std::size_t i = 0; i < m; ++i) mean[i] = total.sum_q[i] / np;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double c =
                (total.sum_qq[i * m + j] - np * mean[i] * mean[j]) / (np - 1.0) / np;
            out.cov(i, j) = c;
        }
    out.quotes.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        PutQuote& quote = out.quotes[i];
        quote.k = sqrt_theta * zs[i];
        quote.theta = theta;
        quote.price_over_spot = mean[i] + bs_put(quote.k, theta, cv_sigma);
        quote.mc_stderr = std::sqrt(std::max(out.cov(i, i), 0.0));
    }
    return out;
}

inline PutQuote mc_put(const ModelSpec& spec, const MarketState& init, double z, double theta,
                       std::size_t n_paths, std::size_t n_steps, const RngStream& rng,
                       const McOptions& extra = {}) {
    McOptions opt = extra;
    opt.n_paths = n_paths;
    opt.n_steps = n_steps;
    const double zs[1] = {z};
    return mc_put_batch(spec, init, zs, theta, opt, rng).quotes[0];
}

} // namespace roughskew::pricing
