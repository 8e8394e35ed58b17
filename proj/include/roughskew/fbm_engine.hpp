#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "roughskew/numerics.hpp"
#include "roughskew/rng.hpp"

namespace roughskew::fbm {

using numerics::Matrix;
using numerics::RngStream;
using numerics::SpdMatrix;

struct Hurst {
    double h;
    explicit Hurst(double value) : h(value) {
        if (!(h > 0.0 && h < 0.5))
            throw std::domain_error("Hurst: h must lie strictly in (0, 1/2), got " +
                                    std::to_string(value));
    }
};

// Joint Gaussian factor for one step of size dt: coordinates 0..n-1 are the OU
// innovations I^beta, coordinate n is the driving increment dW.
struct StepFactor {
    std::vector<double> decay;   // e^{-beta dt} per node
    Matrix f;                    // (n+1) x rank
    std::size_t rank = 0;
};

// Geometric beta-ladder with trapezoid-in-log weights; c_hat normalizes the
// discrete Var(W^H_1) to 1 under the analytic stationary kernel.
class BetaQuadrature {
public:
    BetaQuadrature(Hurst h, std::vector<double> nodes, std::vector<double> weights)
        : h_(h), beta_(std::move(nodes)), w_(std::move(weights)) {
        if (beta_.size() < 2)
            throw std::invalid_argument("BetaQuadrature: need at least 2 nodes, got " +
                                        std::to_string(beta_.size()));
        if (beta_.size() != w_.size())
            throw std::invalid_argument("BetaQuadrature: nodes/weights length mismatch");
        for (std::size_t i = 0; i < beta_.size(); ++i) {
            if (!(beta_[i] > 0.0))
                throw std::invalid_argument("BetaQuadrature: nodes must be positive");
            if (i > 0 && !(beta_[i] > beta_[i - 1]))
                throw std::invalid_argument("BetaQuadrature: nodes must be strictly increasing");
            if (!(w_[i] > 0.0))
                throw std::invalid_argument("BetaQuadrature: weights must be positive");
        }
        const std::size_t n = beta_.size();
        std::vector<double> raw(n);
        for (std::size_t i = 0; i < n; ++i)
            raw[i] = w_[i] * std::pow(beta_[i], -0.5 - h_.h);
        double var1 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                var1 += raw[i] * raw[j] * (2.0 - std::exp(-beta_[i]) - std::exp(-beta_[j])) /
                        (beta_[i] + beta_[j]);
        if (!(var1 > 0.0))
            throw std::runtime_error("BetaQuadrature: degenerate discrete variance");
        c_hat_ = 1.0 / std::sqrt(var1);
        omega_.resize(n);
        for (std::size_t i = 0; i < n; ++i) omega_[i] = c_hat_ * raw[i];

        SpdMatrix corr(n);
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = 1.0 / std::sqrt(2.0 * beta_[i]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                corr(i, j) = 1.0 / (beta_[i] + beta_[j]) / (d[i] * d[j]);
        auto fac = numerics::psd_factor(corr, 1e-12);
        if (fac.rank == 0)
            throw std::runtime_error(
                "BetaQuadrature: stationary Gram factorization failed; thin near-duplicate "
                "nodes or reduce the node count");
        stat_rank_ = fac.rank;
        stat_factor_ = Matrix(n, fac.rank);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < fac.rank; ++k)
                stat_factor_(i, k) = d[i] * fac.f(i, k);
    }

    double hurst() const { return h_.h; }
    std::size_t size() const { return beta_.size(); }
    const std::vector<double>& nodes() const { return beta_; }
    const std::vector<double>& weights() const { return w_; }
    const std::vector<double>& omega() const { return omega_; }
    double c_hat() const { return c_hat_; }
    const Matrix& stationary_factor() const { return stat_factor_; }
    std::size_t stationary_rank() const { return stat_rank_; }

    // Exact joint step factor for this dt, built once and cached.
    const StepFactor& step_factor(double dt) const {
        if (!(dt > 0.0))
            throw std::domain_error("step_factor: dt must be positive, got " +
                                    std::to_string(dt));
        std::lock_guard<std::mutex> lock(cache_mutex_);
        auto it = step_cache_.find(dt);
        if (it != step_cache_.end()) return it->second;

        const std::size_t n = beta_.size();
        SpdMatrix m(n + 1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                m(i, j) = -std::expm1(-(beta_[i] + beta_[j]) * dt) / (beta_[i] + beta_[j]);
        for (std::size_t i = 0; i < n; ++i)
            m(i, n) = m(n, i) = -std::expm1(-beta_[i] * dt) / beta_[i];
        m(n, n) = dt;

        std::vector<double> d(n + 1);
        for (std::size_t i = 0; i <= n; ++i) d[i] = std::sqrt(m(i, i));
        SpdMatrix corr(n + 1);
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t j = 0; j <= n; ++j) corr(i, j) = m(i, j) / (d[i] * d[j]);
        auto fac = numerics::psd_factor(corr, 1e-12);
        if (fac.rank == 0)
            throw std::runtime_error("step_factor: joint increment factorization failed");

        StepFactor sf;
        sf.rank = fac.rank;
        sf.decay.resize(n);
        for (std::size_t i = 0; i < n; ++i) sf.decay[i] = std::exp(-beta_[i] * dt);
        sf.f = Matrix(n + 1, fac.rank);
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t k = 0; k < fac.rank; ++k) sf.f(i, k) = d[i] * fac.f(i, k);
        auto [pos, inserted] = step_cache_.emplace(dt, std::move(sf));
        (void)inserted;
        return pos->second;
    }

private:
    Hurst h_;
    std::vector<double> beta_;
    std::vector<double> w_;
    std::vector<double> omega_;
    double c_hat_ = 0.0;
    Matrix stat_factor_;
    std::size_t stat_rank_ = 0;
    mutable std::mutex cache_mutex_;
    mutable std::map<double, StepFactor> step_cache_;
};

using QuadraturePtr = std::shared_ptr<const BetaQuadrature>;

inline QuadraturePtr build_quadrature(Hurst h, std::size_t n_nodes, double beta_min,
                                      double beta_max) {
    if (n_nodes < 2)
        throw std::invalid_argument("build_quadrature: need at least 2 nodes, got " +
                                    std::to_string(n_nodes));
    if (!(beta_min > 0.0 && beta_min < beta_max))
        throw std::invalid_argument("build_quadrature: require 0 < beta_min < beta_max");
    const double lo = std::log(beta_min), hi = std::log(beta_max);
    const double du = (hi - lo) / static_cast<double>(n_nodes - 1);
    std::vector<double> beta(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i)
        beta[i] = std::exp(lo + du * static_cast<double>(i));
    // thin near-duplicates (relative spacing < 1e-10) to keep the Gram matrix sane
    std::vector<double> kept;
    kept.reserve(n_nodes);
    for (double b : beta)
        if (kept.empty() || b - kept.back() > 1e-10 * b) kept.push_back(b);
    std::vector<double> w(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        w[i] = kept[i] * du;
        if (i == 0 || i + 1 == kept.size()) w[i] *= 0.5;
    }
    return std::make_shared<BetaQuadrature>(h, std::move(kept), std::move(w));
}

// ---------------------------------------------------------------------------
// OU bank state
// ---------------------------------------------------------------------------

struct OUBank {
    QuadraturePtr quadrature;
    std::vector<double> z_values;
    double time = 0.0;
};

namespace detail {
inline void require_same_quadrature(const OUBank& a, const OUBank& b, const char* who) {
    if (a.quadrature == b.quadrature) return;
    if (a.quadrature && b.quadrature && a.quadrature->nodes() == b.quadrature->nodes() &&
        std::abs(a.quadrature->hurst() - b.quadrature->hurst()) == 0.0)
        return;
    throw std::invalid_argument(std::string(who) + ": banks use different quadratures");
}
} // namespace detail

inline OUBank init_bank_stationary(QuadraturePtr q, RngStream& rng) {
    if (!q) throw std::invalid_argument("init_bank_stationary: null quadrature");
    const std::size_t n = q->size(), r = q->stationary_rank();
    const Matrix& l = q->stationary_factor();
    std::vector<double> xi(r);
    for (std::size_t k = 0; k < r; ++k) xi[k] = rng.normal();
    OUBank bank{std::move(q), std::vector<double>(n, 0.0), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < r; ++k) s += l(i, k) * xi[k];
        bank.z_values[i] = s;
    }
    return bank;
}

// Advances the bank by dt with the exact joint Gaussian update and returns the
// driving Brownian increment dW of the step.
inline double step_bank(OUBank& bank, double dt, RngStream& rng) {
    const auto& q = *bank.quadrature;
    const StepFactor& sf = q.step_factor(dt);
    const std::size_t n = q.size(), r = sf.rank;
    std::vector<double> xi(r);
    for (std::size_t k = 0; k < r; ++k) xi[k] = rng.normal();
    const double* f = sf.f.a.data();
    double dw = 0.0;
    for (std::size_t k = 0; k < r; ++k) dw += f[n * r + k] * xi[k];
    for (std::size_t i = 0; i < n; ++i) {
        double inc = 0.0;
        const double* row = f + i * r;
        for (std::size_t k = 0; k < r; ++k) inc += row[k] * xi[k];
        bank.z_values[i] = sf.decay[i] * bank.z_values[i] + inc;
    }
    bank.time += dt;
    return dw;
}

inline double wh_from_bank(const BetaQuadrature& q, const OUBank& bank_now,
                           const OUBank& bank_start) {
    detail::require_same_quadrature(bank_now, bank_start, "wh_from_bank");
    if (bank_now.quadrature.get() != &q && bank_now.quadrature->nodes() != q.nodes())
        throw std::invalid_argument("wh_from_bank: bank does not match the quadrature");
    const auto& om = q.omega();
    double s = 0.0;
    for (std::size_t i = 0; i < om.size(); ++i)
        s += om[i] * (bank_now.z_values[i] - bank_start.z_values[i]);
    return s;
}

// ---------------------------------------------------------------------------
// Analytic covariance helpers (stationary start)
// ---------------------------------------------------------------------------

// Cov(W^H_s, W^H_t) implied by the discrete quadrature.
inline double wh_cov_analytic(const BetaQuadrature& q, double s, double t) {
    if (s > t) std::swap(s, t);
    const auto& beta = q.nodes();
    const auto& om = q.omega();
    const std::size_t n = beta.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            acc += om[i] * om[j] *
                   (std::exp(-beta[j] * (t - s)) - std::exp(-beta[i] * s) -
                    std::exp(-beta[j] * t) + 1.0) /
                   (beta[i] + beta[j]);
    return acc;
}

inline double wh_variance_analytic(const BetaQuadrature& q, double t) {
    return wh_cov_analytic(q, t, t);
}

// Cov(W_t, W^H_t) implied by the discrete quadrature.
inline double wh_driver_cov_analytic(const BetaQuadrature& q, double t) {
    const auto& beta = q.nodes();
    const auto& om = q.omega();
    double acc = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i)
        acc += om[i] * (-std::expm1(-beta[i] * t)) / beta[i];
    return acc;
}

inline double fbm_cov_exact(double h, double s, double t) {
    return 0.5 * (std::pow(s, 2.0 * h) + std::pow(t, 2.0 * h) -
                  std::pow(std::abs(t - s), 2.0 * h));
}

// ---------------------------------------------------------------------------
// Exact Cholesky fBm sampler (independent oracle)
// ---------------------------------------------------------------------------

inline std::vector<double> sample_fbm_exact(Hurst h, const std::vector<double>& times,
                                            RngStream& rng) {
    const std::size_t n = times.size();
    if (n == 0) return {};
    if (n > 2000)
        throw std::invalid_argument(
            "sample_fbm_exact: grid longer than 2000; use the OU engine for long grids");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(times[i] > 0.0))
            throw std::invalid_argument("sample_fbm_exact: times must be strictly positive");
        if (i > 0 && !(times[i] > times[i - 1]))
            throw std::invalid_argument("sample_fbm_exact: times must be strictly increasing");
    }
    SpdMatrix cov(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cov(i, j) = fbm_cov_exact(h.h, times[i], times[j]);
    auto fac = numerics::psd_factor(cov, 1e-14);
    std::vector<double> xi(fac.rank), out(n, 0.0);
    for (std::size_t k = 0; k < fac.rank; ++k) xi[k] = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < fac.rank; ++k) s += fac.f(i, k) * xi[k];
        out[i] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lemma-style increment decomposition: history term + fresh innovation
// ---------------------------------------------------------------------------

// Returns (lhs, rhs): lhs is W^H_t computed from the stepped bank; rhs is
// W^H_s plus the history decay term plus the innovation term, all on the same
// quadrature and the same draws.  Equal up to rounding by construction.
inline std::pair<double, double> lemma1_decomposition_check(const QuadraturePtr& q,
                                                            const OUBank& bank_s, double s,
                                                            double t, RngStream& rng) {
    if (!(t > s))
        throw std::domain_error("lemma1_decomposition_check: need t > s, got t=" +
                                std::to_string(t) + " s=" + std::to_string(s));
    OUBank zero{q, std::vector<double>(q->size(), 0.0), 0.0};
    const double wh_s = wh_from_bank(*q, bank_s, zero);

    OUBank bank_t = bank_s;
    step_bank(bank_t, t - s, rng);
    const double lhs = wh_from_bank(*q, bank_t, zero);

    const auto& beta = q->nodes();
    const auto& om = q->omega();
    double history = 0.0, innovation = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
        const double decay = std::exp(-beta[i] * (t - s));
        history += om[i] * (decay - 1.0) * bank_s.z_values[i];
        innovation += om[i] * (bank_t.z_values[i] - decay * bank_s.z_values[i]);
    }
    return {lhs, wh_s + history + innovation};
}

// ---------------------------------------------------------------------------
// Driver path record
// ---------------------------------------------------------------------------

struct DriverPath {
    std::vector<double> times;     // 0 = t0 < ... < tm
    std::vector<double> dw;        // per-step increments of W
    std::vector<double> dw_perp;   // per-step increments of the independent W-perp
    std::vector<double> wh;        // W^H on the grid, wh[0] = 0
    std::vector<OUBank> bank_trace;
};

// ---------------------------------------------------------------------------
// Versioned plain-text bank snapshots
// ---------------------------------------------------------------------------

inline void save_bank(const OUBank& bank, std::ostream& os) {
    const auto& q = *bank.quadrature;
    char buf[64];
    os << "roughskew-bank v1\n";
    auto put = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << key << ' ' << buf << '\n';
    };
    put("hurst", q.hurst());
    put("time", bank.time);
    os << "nodes " << q.size() << '\n';
    for (std::size_t i = 0; i < q.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", q.nodes()[i]);
        os << buf << ' ';
        std::snprintf(buf, sizeof buf, "%.17g", q.weights()[i]);
        os << buf << ' ';
        std::snprintf(buf, sizeof buf, "%.17g", bank.z_values[i]);
        os << buf << '\n';
    }
}

inline void save_bank(const OUBank& bank, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_bank: cannot open " + path);
    save_bank(bank, os);
}

inline OUBank load_bank(std::istream& is) {
    std::string header;
    std::getline(is, header);
    if (header != "roughskew-bank v1")
        throw std::runtime_error("load_bank: unrecognized snapshot header '" + header + "'");
    std::string key;
    double h = 0.0, time = 0.0;
    std::size_t n = 0;
    is >> key >> h;
    if (key != "hurst") throw std::runtime_error("load_bank: expected 'hurst', got " + key);
    is >> key >> time;
    if (key != "time") throw std::runtime_error("load_bank: expected 'time', got " + key);
    is >> key >> n;
    if (key != "nodes") throw std::runtime_error("load_bank: expected 'nodes', got " + key);
    std::vector<double> beta(n), w(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> beta[i] >> w[i] >> z[i]))
            throw std::runtime_error("load_bank: truncated snapshot at node " +
                                     std::to_string(i));
    }
    auto q = std::make_shared<BetaQuadrature>(Hurst(h), std::move(beta), std::move(w));
    OUBank bank{std::move(q), std::move(z), time};
    return bank;
}

inline OUBank load_bank(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_bank: cannot open " + path);
    return load_bank(is);
}

} // namespace roughskew::fbm
