#pragma once

#include <algorithm>
#include <cmath>

namespace stss {

inline constexpr double kProbMin = 1e-10;
inline constexpr double kProbMax = 1.0 - 1e-10;
inline constexpr double kProbitArgMax = 8.0;
inline constexpr double kVarFloor = 1e-12;
inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double clamp_prob(double p) { return std::clamp(p, kProbMin, kProbMax); }

/// Standard normal CDF; argument clamped to [-8, 8].
inline double probit(double x) {
    x = std::clamp(x, -kProbitArgMax, kProbitArgMax);
    return clamp_prob(0.5 * std::erfc(-x * M_SQRT1_2));
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x - 0.5 * kLog2Pi); }

inline double log_normal_pdf_0(double mean, double var) {
    // log N(0 | mean, var)
    return -0.5 * (kLog2Pi + std::log(var) + mean * mean / var);
}

/// log Phi(u), stable for large negative u.
inline double log_probit_unclamped(double u) {
    if (u > -30.0) return std::log(0.5 * std::erfc(-u * M_SQRT1_2));
    // asymptotic expansion of the Mills ratio
    const double u2 = u * u;
    const double series = 1.0 - 1.0 / u2 + 3.0 / (u2 * u2) - 15.0 / (u2 * u2 * u2);
    return -0.5 * u2 - 0.5 * kLog2Pi - std::log(-u) + std::log(series);
}

/// Hazard N(u)/Phi(u); switches to the asymptotic branch for very negative u.
inline double gauss_hazard(double u) {
    if (u > -25.0) {
        const double cdf = 0.5 * std::erfc(-u * M_SQRT1_2);
        return normal_pdf(u) / cdf;
    }
    const double u2 = u * u;
    const double series = 1.0 - 1.0 / u2 + 3.0 / (u2 * u2) - 15.0 / (u2 * u2 * u2);
    return -u / series;
}

/// Standard normal quantile: Acklam's rational approximation plus one
/// Halley refinement, ~1e-15 absolute over the clamped range.
inline double probit_inverse(double p) {
    p = clamp_prob(p);
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= phigh) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // one Halley step
    const double e = 0.5 * std::erfc(-x * M_SQRT1_2) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

inline double logit(double p) {
    p = clamp_prob(p);
    return std::log(p) - std::log1p(-p);
}

inline double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// Scalar Gaussian cavity marginal.
struct Gaussian1d {
    double mean = 0.0;
    double var = 1.0;
};

/// Moments of a tilted distribution: zeroth moment in log domain, first
/// and second central moments, and (where applicable) the posterior
/// probability of z = 1.
struct TiltedMoments {
    double log_norm = 0.0;
    double mean = 0.0;
    double var = 0.0;
    double bernoulli_prob = 0.5;
};

/// Moments of Phi(gamma) * N(gamma | mean, var).
inline TiltedMoments probit_gaussian_moments(const Gaussian1d& cavity) {
    const double mu = cavity.mean, s2 = cavity.var;
    const double denom = std::sqrt(1.0 + s2);
    const double u = mu / denom;
    const double h = gauss_hazard(u); // N(u)/Phi(u)
    TiltedMoments out;
    out.log_norm = log_probit_unclamped(u);
    out.mean = mu + s2 * h / denom;
    out.var = s2 - s2 * s2 * h * (u + h) / (1.0 + s2);
    out.var = std::max(out.var, kVarFloor);
    out.bernoulli_prob = clamp_prob(std::exp(out.log_norm));
    return out;
}

/// Moments of the spike-and-slab tilted distribution
///   [ (1-p) delta(x) + p N(x|0,slab_var) ] * N(x | cavity).
/// cavity_p may sit exactly at 0 or 1, in which case the single-component
/// result is returned exactly.
inline TiltedMoments spike_slab_tilted_moments(const Gaussian1d& cavity_x, double cavity_p,
                                               double slab_var) {
    const double m = cavity_x.mean, v = cavity_x.var, tau = slab_var;
    TiltedMoments out;
    if (cavity_p >= 1.0) {
        out.bernoulli_prob = 1.0;
        out.mean = m * tau / (v + tau);
        out.var = std::max(v * tau / (v + tau), kVarFloor);
        out.log_norm = log_normal_pdf_0(m, v + tau);
        return out;
    }
    if (cavity_p <= 0.0) {
        out.bernoulli_prob = 0.0;
        out.mean = 0.0;
        out.var = 0.0;
        out.log_norm = log_normal_pdf_0(m, v);
        return out;
    }
    const double lw1 = std::log(cavity_p) + log_normal_pdf_0(m, v + tau);
    const double lw0 = std::log1p(-cavity_p) + log_normal_pdf_0(m, v);
    const double lmax = std::max(lw0, lw1);
    out.log_norm = lmax + std::log(std::exp(lw0 - lmax) + std::exp(lw1 - lmax));
    const double p = 1.0 / (1.0 + std::exp(lw0 - lw1));
    const double mean1 = m * tau / (v + tau);
    const double var1 = v * tau / (v + tau);
    out.bernoulli_prob = clamp_prob(p);
    out.mean = p * mean1;
    out.var = std::max(p * (var1 + mean1 * mean1) - out.mean * out.mean, kVarFloor);
    return out;
}

/// Moments over gamma of  sum_z q^z (1-q)^(1-z) Ber(z|Phi(gamma)) N(gamma|cavity).
/// The z = 0 branch uses Phi(-gamma), obtained by sign-flipping the cavity mean.
inline TiltedMoments bernoulli_probit_tilted_moments(const Gaussian1d& cavity_gamma,
                                                     double cavity_q) {
    cavity_q = clamp_prob(cavity_q);
    const TiltedMoments pos = probit_gaussian_moments(cavity_gamma);
    Gaussian1d flipped{-cavity_gamma.mean, cavity_gamma.var};
    TiltedMoments neg = probit_gaussian_moments(flipped);
    neg.mean = -neg.mean;

    const double lw1 = std::log(cavity_q) + pos.log_norm;
    const double lw0 = std::log1p(-cavity_q) + neg.log_norm;
    const double lmax = std::max(lw0, lw1);
    TiltedMoments out;
    out.log_norm = lmax + std::log(std::exp(lw0 - lmax) + std::exp(lw1 - lmax));
    const double w1 = 1.0 / (1.0 + std::exp(lw0 - lw1));
    const double w0 = 1.0 - w1;
    out.bernoulli_prob = clamp_prob(w1);
    out.mean = w1 * pos.mean + w0 * neg.mean;
    const double second =
        w1 * (pos.var + pos.mean * pos.mean) + w0 * (neg.var + neg.mean * neg.mean);
    out.var = std::max(second - out.mean * out.mean, kVarFloor);
    return out;
}

/// Normalized product of two Bernoulli distributions.
inline double combine_bernoulli(double p2, double p3) {
    p2 = clamp_prob(p2);
    p3 = clamp_prob(p3);
    const double num = p2 * p3;
    return clamp_prob(num / (num + (1.0 - p2) * (1.0 - p3)));
}

} // namespace stss
