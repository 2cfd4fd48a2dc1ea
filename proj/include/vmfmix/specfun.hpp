// Apache License, Version 2.0, refer to LICENSE.txt
//
// Special functions for von Mises-Fisher densities and Dirichlet
// expectations: log I_nu(x), the log vMF normalizer log c_d(kappa),
// digamma, log-gamma, and the Bessel ratio A_d(kappa) = I_{d/2}/I_{d/2-1}
// with its inverse.
//
// Everything works in log space so that densities stay finite for
// kappa * mu'x far beyond the overflow point of exp().

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vmfmix {
namespace specfun {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline double log_gamma(double x);

namespace detail {

// Ascending series log I_nu(x) = log sum_m (x/2)^{nu+2m} / (m! Gamma(nu+m+1)).
// All terms are positive, so an online log-sum-exp accumulation has no
// cancellation. Terms grow until m(m+nu) ~ (x/2)^2 and decay fast after.
inline double log_bessel_i_series(double nu, double x) {
    const double lh = std::log(0.5 * x);
    double lt = nu * lh - log_gamma(nu + 1.0);
    double lmax = lt;
    double acc = 1.0;  // sum of exp(lt_m - lmax)
    for (int m = 1; m < 200000; ++m) {
        const double lratio = 2.0 * lh - std::log(double(m)) - std::log(nu + m);
        lt += lratio;
        if (lt > lmax) {
            acc = acc * std::exp(lmax - lt) + 1.0;
            lmax = lt;
        } else {
            const double e = std::exp(lt - lmax);
            acc += e;
            if (lratio < 0.0 && e < acc * 1e-18)
                break;
        }
    }
    return lmax + std::log(acc);
}

// Olver's large-order expansion:
//   I_nu(nu z) ~ exp(nu eta) / (sqrt(2 pi nu) (1+z^2)^{1/4}) sum_k u_k(t)/nu^k
// with t = 1/sqrt(1+z^2), eta = sqrt(1+z^2) + log(z / (1 + sqrt(1+z^2))).
// Terms through u_6 give full double precision for nu >= 50.
inline double log_bessel_i_uniform_asymp(double nu, double x) {
    const double z = x / nu;
    const double s = std::sqrt(1.0 + z * z);
    const double t = 1.0 / s;
    const double t2 = t * t;
    const double eta = s + std::log(z / (1.0 + s));

    const double u1 = t * (1.0 / 8.0 + t2 * (-5.0 / 24.0));
    const double u2 = t2 * (9.0 / 128.0 + t2 * (-77.0 / 192.0 + t2 * (385.0 / 1152.0)));
    const double u3 = t * t2 *
        (75.0 / 1024.0 +
         t2 * (-4563.0 / 5120.0 + t2 * (17017.0 / 9216.0 + t2 * (-85085.0 / 82944.0))));
    const double u4 = t2 * t2 *
        (3675.0 / 32768.0 +
         t2 * (-96833.0 / 40960.0 +
               t2 * (144001.0 / 16384.0 +
                     t2 * (-7436429.0 / 663552.0 + t2 * (37182145.0 / 7962624.0)))));
    const double u5 = t * t2 * t2 *
        (59535.0 / 262144.0 +
         t2 * (-67608983.0 / 9175040.0 +
               t2 * (250881631.0 / 5898240.0 +
                     t2 * (-108313205.0 / 1179648.0 +
                           t2 * (5391411025.0 / 63700992.0 +
                                 t2 * (-5391411025.0 / 191102976.0))))));
    const double u6 = t2 * t2 * t2 *
        (2401245.0 / 4194304.0 +
         t2 * (-388895895.0 / 14680064.0 +
               t2 * (1441372804469.0 / 6606028800.0 +
                     t2 * (-33010308331.0 / 47185920.0 +
                           t2 * (4445922195.0 / 4194304.0 +
                                 t2 * (-1169936192425.0 / 1528823808.0 +
                                       t2 * (5849680962125.0 / 27518828544.0)))))));

    const double inv = 1.0 / nu;
    const double series =
        1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * (u4 + inv * (u5 + inv * u6)))));
    return nu * eta - 0.5 * std::log(2.0 * kPi * nu) - 0.5 * std::log(s) + std::log(series);
}

// Moderate order, large argument: seed I at order >= 50 from the uniform
// expansion and recurse downward, I_{k-1} = I_{k+1} + (2k/x) I_k. The
// recurrence runs on exp(-x)-scaled values; all terms are positive, so it
// is stable and cannot overflow for x <= 1e6.
inline double log_bessel_i_downward(double nu, double x) {
    const int m = static_cast<int>(std::ceil(50.0 - nu));
    const double nu_hi = nu + m;
    double above = std::exp(log_bessel_i_uniform_asymp(nu_hi + 1.0, x) - x);
    double cur = std::exp(log_bessel_i_uniform_asymp(nu_hi, x) - x);
    for (int i = 0; i < m; ++i) {
        const double k = nu_hi - i;
        const double below = above + (2.0 * k / x) * cur;
        above = cur;
        cur = below;
    }
    return std::log(cur) + x;
}

}  // namespace detail

// log I_nu(x) for nu >= 0, x >= 0. Regime switch: ascending series for
// x < max(12, nu/2), large-order machinery otherwise. Returns -inf at
// x = 0 for nu > 0 (I_nu(0) = 0).
inline double log_bessel_i(double nu, double x) {
    if (!(nu >= 0.0))
        throw std::domain_error("log_bessel_i: order nu must be >= 0");
    if (!(x >= 0.0))
        throw std::domain_error("log_bessel_i: argument x must be >= 0");
    if (x == 0.0)
        return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (x < std::max(12.0, 0.5 * nu))
        return detail::log_bessel_i_series(nu, x);
    if (nu >= 50.0)
        return detail::log_bessel_i_uniform_asymp(nu, x);
    return detail::log_bessel_i_downward(nu, x);
}

// Digamma psi(x) = d/dx log Gamma(x), x > 0. Recurrence shift to x >= 10,
// then the Bernoulli asymptotic series.
inline double digamma(double x) {
    if (!(x > 0.0))
        throw std::domain_error("digamma: x must be > 0");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double tail = inv2 *
        (1.0 / 12.0 -
         inv2 * (1.0 / 120.0 -
                 inv2 * (1.0 / 252.0 -
                         inv2 * (1.0 / 240.0 -
                                 inv2 * (1.0 / 132.0 -
                                         inv2 * (691.0 / 32760.0 - inv2 * (1.0 / 12.0)))))));
    return acc + std::log(x) - 0.5 * inv - tail;
}

// log Gamma(x), x > 0, by the same shift-then-Stirling scheme.
inline double log_gamma(double x) {
    if (!(x > 0.0))
        throw std::domain_error("log_gamma: x must be > 0");
    double acc = 0.0;
    while (x < 10.0) {
        acc -= std::log(x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double tail = inv *
        (1.0 / 12.0 -
         inv2 * (1.0 / 360.0 -
                 inv2 * (1.0 / 1260.0 -
                         inv2 * (1.0 / 1680.0 -
                                 inv2 * (1.0 / 1188.0 -
                                         inv2 * (691.0 / 360360.0 - inv2 * (1.0 / 156.0)))))));
    return acc + (x - 0.5) * std::log(x) - x + 0.5 * std::log(2.0 * kPi) + tail;
}

// log c_d(kappa) with c_d(kappa) = kappa^{d/2-1} / ((2 pi)^{d/2} I_{d/2-1}(kappa)).
// At kappa = 0 the formula is 0/0 for d > 2; the analytic limit is the
// uniform density on S^{d-1}, log(Gamma(d/2) / (2 pi^{d/2})).
inline double log_vmf_normalizer(int dim, double kappa) {
    if (dim < 2)
        throw std::domain_error("log_vmf_normalizer: dim must be >= 2");
    if (!(kappa >= 0.0))
        throw std::domain_error("log_vmf_normalizer: kappa must be >= 0");
    const double nu = 0.5 * dim - 1.0;
    if (kappa == 0.0)
        return log_gamma(0.5 * dim) - std::log(2.0) - 0.5 * dim * std::log(kPi);
    return nu * std::log(kappa) - 0.5 * dim * std::log(2.0 * kPi) - log_bessel_i(nu, kappa);
}

// Mean resultant length of a vMF sample: A_d(kappa) = I_{d/2}(kappa) / I_{d/2-1}(kappa).
// Strictly increasing in kappa with range (0, 1).
inline double bessel_ratio_a(int dim, double kappa) {
    if (dim < 2)
        throw std::domain_error("bessel_ratio_a: dim must be >= 2");
    if (!(kappa > 0.0))
        throw std::domain_error("bessel_ratio_a: kappa must be > 0");
    const double nu = 0.5 * dim - 1.0;
    return std::exp(log_bessel_i(nu + 1.0, kappa) - log_bessel_i(nu, kappa));
}

// kappa such that A_d(kappa) = rbar, by bracketing bisection. Reference
// solver for the closed-form concentration update; |A_d(kappa) - rbar|
// <= 1e-10 on return.
inline double invert_bessel_ratio(int dim, double rbar) {
    if (dim < 2)
        throw std::domain_error("invert_bessel_ratio: dim must be >= 2");
    if (!(rbar > 0.0 && rbar < 1.0))
        throw std::domain_error("invert_bessel_ratio: rbar must lie in (0, 1)");
    double lo = 1e-300;
    double hi = 1.0;
    while (bessel_ratio_a(dim, hi) < rbar) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12)
            break;  // rbar this close to 1 exceeds any kappa of interest
    }
    for (int it = 0; it < 2000; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi)
            break;  // bracket collapsed to adjacent doubles
        (bessel_ratio_a(dim, mid) < rbar ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace specfun
}  // namespace vmfmix
