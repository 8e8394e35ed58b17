#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace roughskew::numerics {

inline constexpr double pi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Standard normal law
// ---------------------------------------------------------------------------

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi);
}

inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

// Acklam's rational approximation refined by one Halley step.
inline double norm_inv(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("norm_inv: p must lie in (0,1), got " + std::to_string(p));
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = norm_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// ---------------------------------------------------------------------------
// Gamma function (positive arguments)
// ---------------------------------------------------------------------------

namespace detail {
inline double lanczos_sum(double x) {
    static constexpr double coef[] = {0.99999999999980993,  676.5203681218851,
                                      -1259.1392167224028,  771.32342877765313,
                                      -176.61502916214059,  12.507343278686905,
                                      -0.13857109526572012, 9.9843695780195716e-6,
                                      1.5056327351493116e-7};
    double s = coef[0];
    for (int i = 1; i < 9; ++i) s += coef[i] / (x - 1.0 + i);
    return s;
}
} // namespace detail

inline double gamma_fn(double x) {
    if (!(x > 0.0))
        throw std::domain_error("gamma_fn: argument must be positive, got " + std::to_string(x));
    if (x < 0.5)
        return pi / (std::sin(pi * x) * gamma_fn(1.0 - x));
    const double g = 7.0;
    const double t = x + g - 0.5;
    return std::sqrt(2.0 * pi) * std::pow(t, x - 0.5) * std::exp(-t) * detail::lanczos_sum(x);
}

// ---------------------------------------------------------------------------
// Dense matrices
// ---------------------------------------------------------------------------

struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

struct SpdMatrix {
    std::size_t dim = 0;
    std::vector<double> e;

    SpdMatrix() = default;
    explicit SpdMatrix(std::size_t n) : dim(n), e(n * n, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return e[i * dim + j]; }
    double operator()(std::size_t i, std::size_t j) const { return e[i * dim + j]; }

    static SpdMatrix identity(std::size_t n) {
        SpdMatrix m(n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

struct FactorizationError : std::runtime_error {
    std::size_t pivot_index;
    FactorizationError(std::size_t idx, const std::string& what)
        : std::runtime_error(what), pivot_index(idx) {}
};

namespace detail {
inline void require_symmetric(const SpdMatrix& m, const char* who) {
    double amax = 0.0;
    for (double v : m.e) amax = std::max(amax, std::abs(v));
    for (std::size_t i = 0; i < m.dim; ++i)
        for (std::size_t j = i + 1; j < m.dim; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * std::max(amax, 1e-300)) {
                std::ostringstream os;
                os << who << ": matrix not symmetric at (" << i << "," << j << "): "
                   << m(i, j) << " vs " << m(j, i);
                throw std::invalid_argument(os.str());
            }
}
} // namespace detail

// Strict Cholesky: rejects any pivot below 1e-14 x max diagonal, naming the index.
inline Matrix cholesky(const SpdMatrix& m) {
    detail::require_symmetric(m, "cholesky");
    const std::size_t n = m.dim;
    double dmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) dmax = std::max(dmax, m(i, i));
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = m(j, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(j, k) * l(j, k);
        if (!(s > 1e-14 * dmax)) {
            std::ostringstream os;
            os << "cholesky: non-positive pivot " << s << " at index " << j
               << " (threshold " << 1e-14 * dmax << ")";
            throw FactorizationError(j, os.str());
        }
        l(j, j) = std::sqrt(s);
        for (std::size_t i = j + 1; i < n; ++i) {
            double t = m(i, j);
            for (std::size_t k = 0; k < j; ++k) t -= l(i, k) * l(j, k);
            l(i, j) = t / l(j, j);
        }
    }
    return l;
}

struct PsdFactor {
    Matrix f;          // dim x rank, rows in original order
    std::size_t rank = 0;
};

// Diagonal-pivoted, rank-revealing factorization of a positive semidefinite
// matrix: stops once the largest remaining diagonal drops below tol x initial
// max.  Tolerant of the near-singular Gram matrices the OU bank produces.
inline PsdFactor psd_factor(const SpdMatrix& m, double tol = 1e-12) {
    detail::require_symmetric(m, "psd_factor");
    const std::size_t n = m.dim;
    std::vector<double> a = m.e;
    std::vector<std::size_t> piv(n);
    for (std::size_t i = 0; i < n; ++i) piv[i] = i;
    Matrix l(n, n);
    double dmax0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) dmax0 = std::max(dmax0, a[i * n + i]);
    std::size_t rank = n;
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t kx = j;
        for (std::size_t i = j + 1; i < n; ++i)
            if (a[i * n + i] > a[kx * n + kx]) kx = i;
        if (!(a[kx * n + kx] > tol * dmax0)) {
            // Discarded curvature far beyond roundoff scale means the input
            // was indefinite, not merely rank-deficient.
            for (std::size_t i = j; i < n; ++i)
                if (a[i * n + i] < -1e-8 * dmax0)
                    throw FactorizationError(
                        piv[i], "psd_factor: matrix is indefinite at pivot " +
                                    std::to_string(piv[i]));
            rank = j;
            break;
        }
        if (kx != j) {
            for (std::size_t t = 0; t < n; ++t) std::swap(a[j * n + t], a[kx * n + t]);
            for (std::size_t t = 0; t < n; ++t) std::swap(a[t * n + j], a[t * n + kx]);
            for (std::size_t t = 0; t < j; ++t) std::swap(l(j, t), l(kx, t));
            std::swap(piv[j], piv[kx]);
        }
        const double d = std::sqrt(a[j * n + j]);
        l(j, j) = d;
        for (std::size_t i = j + 1; i < n; ++i) l(i, j) = a[i * n + j] / d;
        for (std::size_t i = j + 1; i < n; ++i)
            for (std::size_t k = j + 1; k <= i; ++k) {
                a[i * n + k] -= l(i, j) * l(k, j);
                a[k * n + i] = a[i * n + k];
            }
    }
    PsdFactor out;
    out.rank = rank;
    out.f = Matrix(n, rank);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < rank; ++j) out.f(piv[i], j) = l(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// Least-squares line
// ---------------------------------------------------------------------------

struct LinFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double residual_stderr = 0.0;
};

inline LinFit least_squares_line(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("least_squares_line: xs and ys differ in length");
    const std::size_t n = xs.size();
    if (n < 2)
        throw std::invalid_argument("least_squares_line: need at least 2 points, got " +
                                    std::to_string(n));
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) { mx += xs[i]; my += ys[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0)
        throw std::invalid_argument("least_squares_line: degenerate abscissae (all xs equal)");
    LinFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssres = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ssres += r * r;
    }
    if (syy > 0.0) {
        fit.r_squared = std::max(0.0, std::min(1.0, 1.0 - ssres / syy));
    } else {
        fit.r_squared = 1.0;   // constant ys are exactly collinear
    }
    fit.residual_stderr = n > 2 ? std::sqrt(ssres / static_cast<double>(n - 2)) : 0.0;
    return fit;
}

// Standard error of the fitted slope; companion to least_squares_line.
inline double slope_stderr(const LinFit& fit, std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n < 3) return 0.0;
    double mx = 0.0;
    for (double x : xs) mx += x;
    mx /= static_cast<double>(n);
    double sxx = 0.0;
    for (double x : xs) sxx += (x - mx) * (x - mx);
    return sxx > 0.0 ? fit.residual_stderr / std::sqrt(sxx) : 0.0;
}

} // namespace roughskew::numerics
