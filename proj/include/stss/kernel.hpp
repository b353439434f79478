#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "stss/errors.hpp"

namespace stss {

enum class KernelKind { squared_exponential, diagonal };

/// Covariance function over the 1-d coefficient index grid.
/// The lengthscale is in index units and only used by squared_exponential.
/// jitter defaults to 1e-8 * variance when unset; squared-exponential Gram
/// matrices at D ~ 100 are near-singular for lengthscales above a few.
struct KernelSpec {
    KernelKind kind = KernelKind::squared_exponential;
    double variance = 1.0;
    double lengthscale = 5.0;
    std::optional<double> jitter; // nullopt -> 1e-8 * variance

    double resolved_jitter() const {
        return jitter.has_value() ? *jitter : 1e-8 * variance;
    }
};

inline KernelSpec diagonal_kernel(double variance = 1.0) {
    KernelSpec k;
    k.kind = KernelKind::diagonal;
    k.variance = variance;
    k.lengthscale = 1.0;
    return k;
}

inline KernelSpec se_kernel(double variance, double lengthscale) {
    KernelSpec k;
    k.kind = KernelKind::squared_exponential;
    k.variance = variance;
    k.lengthscale = lengthscale;
    return k;
}

/// Builds the D x D Gram matrix on indices 0..D-1.
/// K_ii = variance + jitter exactly; off-diagonals follow the kernel formula.
inline Eigen::MatrixXd build_covariance(const KernelSpec& spec, int D) {
    if (D < 1) throw ConfigError("build_covariance: D must be >= 1");
    if (!(spec.variance > 0.0)) throw ConfigError("build_covariance: variance must be positive");
    if (spec.kind == KernelKind::squared_exponential && !(spec.lengthscale > 0.0))
        throw ConfigError("build_covariance: lengthscale must be positive");
    const double jitter = spec.resolved_jitter();
    if (jitter < 0.0) throw ConfigError("build_covariance: jitter must be nonnegative");

    Eigen::MatrixXd K(D, D);
    if (spec.kind == KernelKind::diagonal) {
        K.setZero();
        K.diagonal().setConstant(spec.variance + jitter);
        return K;
    }
    const double inv2l2 = 0.5 / (spec.lengthscale * spec.lengthscale);
    for (int i = 0; i < D; ++i) {
        K(i, i) = spec.variance + jitter;
        for (int j = 0; j < i; ++j) {
            const double d = static_cast<double>(i - j);
            const double v = spec.variance * std::exp(-d * d * inv2l2);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

} // namespace stss
