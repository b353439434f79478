#pragma once

#include <Eigen/Dense>

#include "stss/errors.hpp"

namespace stss {

struct ScoreReport {
    double nmse = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

/// NMSE = sum (X - Xhat)^2 / sum X^2 over all entries.
inline double nmse(const Eigen::MatrixXd& X_true, const Eigen::MatrixXd& X_hat) {
    if (X_true.rows() != X_hat.rows() || X_true.cols() != X_hat.cols())
        throw ConfigError("nmse: shape mismatch");
    const double denom = X_true.squaredNorm();
    if (!(denom > 0.0)) throw ConfigError("nmse: X_true is identically zero");
    return (X_true - X_hat).squaredNorm() / denom;
}

/// Support recovery at a MAP threshold. Conventions for degenerate counts:
/// empty estimate and empty truth give F = 1; empty estimate against a
/// nonempty truth gives F = 0.
inline ScoreReport support_f_measure(const Eigen::MatrixXd& Z_true,
                                     const Eigen::MatrixXd& support_prob,
                                     double threshold = 0.5) {
    if (Z_true.rows() != support_prob.rows() || Z_true.cols() != support_prob.cols())
        throw ConfigError("support_f_measure: shape mismatch");
    long tp = 0, fp = 0, fn = 0;
    for (int t = 0; t < Z_true.cols(); ++t) {
        for (int i = 0; i < Z_true.rows(); ++i) {
            const bool hat = support_prob(i, t) > threshold;
            const bool tru = Z_true(i, t) != 0.0;
            if (hat && tru) ++tp;
            else if (hat && !tru) ++fp;
            else if (!hat && tru) ++fn;
        }
    }
    ScoreReport r;
    if (tp + fp == 0 && fn == 0) {
        r.precision = r.recall = r.f_measure = 1.0;
        return r;
    }
    r.precision = (tp + fp > 0) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall = (tp + fn > 0) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.f_measure = (r.precision + r.recall > 0.0)
                      ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                      : 0.0;
    return r;
}

} // namespace stss
