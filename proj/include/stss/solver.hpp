#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "stss/errors.hpp"
#include "stss/gaussian.hpp"
#include "stss/moments.hpp"
#include "stss/prior.hpp"

namespace stss {

struct SolverOptions {
    int max_iters = 200;
    double tol = 1e-6;       // max-abs change in x_mean and support_prob
    double damping = 0.7;    // fraction of the new site value
    double min_site_var = 1e-10;
    double vacuous_prec = 1e-8; // stand-in precision for inactive x-sites
    // Initialize the spike-slab Bernoulli log-odds from a pooled ridge-energy
    // support screen instead of zero. On hard instances (undersampled, strongly
    // correlated field) the cold-started fixed point over-sparsifies; seeding
    // the support beliefs from a cheap consistent estimate lands the iteration
    // in a markedly better basin. Off by default.
    bool support_screen_init = false;
};

/// EP approximation terms. Gaussian parts are stored in natural form
/// (precision, precision * mean); Bernoulli parts as log-odds. The chain
/// factors carry a forward message (moment form, always proper) and a
/// backward message (natural form, vacuous = zero).
struct Sites {
    Eigen::MatrixXd f2_prec, f2_h, f2_logodds;            // D x T
    Eigen::MatrixXd f3_prec, f3_h, f3_logodds;            // D x T
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> f3_active;
    std::vector<Eigen::VectorXd> f4_fwd_mean;             // per t
    std::vector<Eigen::MatrixXd> f4_fwd_cov;
    std::vector<Eigen::MatrixXd> f4_bwd_prec;
    std::vector<Eigen::VectorXd> f4_bwd_h;
};

/// Marginals of the joint approximation tracked between sweeps.
/// z_from_gamma is the z log-odds contribution from the gamma side: the f3
/// Bernoulli site once active, and the exact probit-integral message
/// Phi(mu / sqrt(1 + Sigma_ii)) while the site is still vacuous.
struct JointState {
    Eigen::MatrixXd x_mean, x_var;         // D x T
    Eigen::MatrixXd gamma_mean, gamma_var; // D x T
    std::vector<Eigen::MatrixXd> gamma_cov;
    Eigen::MatrixXd z_from_gamma, z_logodds, support; // D x T
};

struct Posterior {
    Eigen::MatrixXd x_mean;                 // D x T
    std::vector<Eigen::MatrixXd> x_cov;     // per t, D x D
    Eigen::MatrixXd support_prob;           // D x T
    Eigen::MatrixXd gamma_mean;             // D x T
    std::vector<Eigen::MatrixXd> gamma_cov; // per t, D x D
    int iterations = 0;
    bool converged = false;
    std::vector<double> max_delta_trace;
    std::vector<int> skipped_trace;
    std::vector<double> iter_ms;
};

namespace detail {

struct Workspace {
    Eigen::MatrixXd Sigma0;
    Eigen::MatrixXd Sigma0_inv;
    Eigen::MatrixXd AtY; // D x T
};

inline Workspace make_workspace(const MmvProblem& p, const PriorConfig& cfg) {
    Workspace ws;
    ws.Sigma0 = build_covariance(cfg.kernel, cfg.D);
    auto llt = chol_with_jitter(ws.Sigma0, "Sigma0");
    ws.Sigma0_inv = llt.solve(Eigen::MatrixXd::Identity(cfg.D, cfg.D));
    ws.Sigma0_inv = 0.5 * (ws.Sigma0_inv + ws.Sigma0_inv.transpose()).eval();
    ws.AtY = p.A.transpose() * p.Y;
    return ws;
}

/// Ridge-energy support screen used by SolverOptions::support_screen_init.
/// A per-column ridge estimate under the average prior variance gives a crude
/// coefficient-energy map; pooling it over the prior's spatial lengthscale and
/// temporal correlation window and thresholding at the prior's expected
/// sparsity yields +-4 log-odds seeds for the spike-slab Bernoulli sites.
inline Eigen::MatrixXd support_screen(const MmvProblem& p, const PriorConfig& cfg,
                                      const Eigen::MatrixXd& Sigma0) {
    const int D = cfg.D, T = cfg.T;
    double p_bar = 0.0;
    for (int i = 0; i < D; ++i)
        p_bar += probit(cfg.mu0(i) / std::sqrt(1.0 + Sigma0(i, i)));
    p_bar = std::min(std::max(p_bar / D, 1e-3), 1.0 - 1e-3);

    const double s_bar = p_bar * cfg.slab_var;
    Eigen::MatrixXd G = s_bar * (p.A * p.A.transpose());
    G.diagonal().array() += p.noise_var;
    Eigen::MatrixXd energy =
        (s_bar * p.A.transpose() * chol_with_jitter(G, "screen gram").solve(p.Y))
            .array()
            .square();

    // row-normalized Gaussian pooling along an axis; width < 0.5 is a no-op
    const auto pool = [](const Eigen::MatrixXd& M, double w, bool over_rows) {
        if (w < 0.5) return M;
        const int n = over_rows ? static_cast<int>(M.rows()) : static_cast<int>(M.cols());
        Eigen::MatrixXd K(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
                K(a, b) = std::exp(-0.5 * (a - b) * (a - b) / (w * w));
        K.array().colwise() /= K.rowwise().sum().array();
        return over_rows ? Eigen::MatrixXd(K * M) : Eigen::MatrixXd(M * K.transpose());
    };
    const double tw = cfg.alpha >= 1.0
                          ? static_cast<double>(T)
                          : std::min(0.3 * cfg.alpha / (1.0 - cfg.alpha),
                                     static_cast<double>(T));
    const double sw = cfg.kernel.kind == KernelKind::squared_exponential
                          ? 0.25 * cfg.kernel.lengthscale
                          : 0.0;
    energy = pool(pool(energy, tw, false), sw, true);

    std::vector<double> v(energy.data(), energy.data() + energy.size());
    const auto q = v.begin() + static_cast<std::ptrdiff_t>((1.0 - p_bar) * (v.size() - 1));
    std::nth_element(v.begin(), q, v.end());
    const double thr = *q;
    Eigen::MatrixXd logodds(D, T);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < D; ++i) logodds(i, t) = energy(i, t) > thr ? 4.0 : -4.0;
    return logodds;
}

} // namespace detail

inline Sites init_sites(const MmvProblem& problem, const PriorConfig& cfg,
                        const SolverOptions& opts = {}) {
    cfg.validate();
    if (problem.D() != cfg.D || problem.T() != cfg.T)
        throw ConfigError("init_sites: problem/config dimension mismatch");
    const int D = cfg.D, T = cfg.T;
    Sites s;
    s.f2_prec = Eigen::MatrixXd::Constant(D, T, opts.vacuous_prec);
    s.f2_h = Eigen::MatrixXd::Zero(D, T);
    s.f2_logodds = Eigen::MatrixXd::Zero(D, T);
    s.f3_prec = Eigen::MatrixXd::Zero(D, T);
    s.f3_h = Eigen::MatrixXd::Zero(D, T);
    s.f3_logodds = Eigen::MatrixXd::Zero(D, T);
    s.f3_active.setConstant(D, T, false);
    s.f4_fwd_mean.assign(T, Eigen::VectorXd::Zero(D));
    s.f4_fwd_cov.assign(T, Eigen::MatrixXd::Zero(D, D));
    s.f4_bwd_prec.assign(T, Eigen::MatrixXd::Zero(D, D));
    s.f4_bwd_h.assign(T, Eigen::VectorXd::Zero(D));
    // f4_{.,1} is exact: N(mu0, Sigma0). Remaining chain messages start
    // vacuous and are populated by the first forward-backward sweep.
    s.f4_fwd_mean[0] = cfg.mu0;
    s.f4_fwd_cov[0] = build_covariance(cfg.kernel, D);
    if (opts.support_screen_init)
        s.f2_logodds = detail::support_screen(problem, cfg, s.f4_fwd_cov[0]);
    return s;
}

/// One exact forward-backward Gaussian sweep over the chain factors.
/// Each f4_t couples (gamma_{t-1}, gamma_t); its EP update is exact
/// marginalization against the cavity formed by the f3 sites and the
/// opposite-direction message. Cost O(T D^3).
inline void update_f4_chain(Sites& s, const PriorConfig& cfg, const detail::Workspace& ws) {
    const int D = cfg.D, T = cfg.T;
    const double a = cfg.alpha, b = cfg.beta;
    const Eigen::VectorXd c = (1.0 - a) * cfg.mu0;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(D, D);

    // forward pass
    for (int t = 1; t < T; ++t) {
        if (a == 0.0) {
            s.f4_fwd_mean[t] = cfg.mu0;
            s.f4_fwd_cov[t] = b * ws.Sigma0;
            continue;
        }
        auto llt_prev = chol_with_jitter(s.f4_fwd_cov[t - 1], "forward message cov");
        Eigen::MatrixXd nat = llt_prev.solve(I);
        Eigen::VectorXd h = llt_prev.solve(s.f4_fwd_mean[t - 1]);
        nat.diagonal() += s.f3_prec.col(t - 1);
        h += s.f3_h.col(t - 1);
        nat = 0.5 * (nat + nat.transpose()).eval();
        auto llt_b = chol_with_jitter(nat, "forward belief precision");
        const Eigen::VectorXd m = llt_b.solve(h);
        Eigen::MatrixXd P = llt_b.solve(I);
        s.f4_fwd_mean[t] = c + a * m;
        s.f4_fwd_cov[t] = a * a * 0.5 * (P + P.transpose()) + b * ws.Sigma0;
    }

    // backward pass; the message into gamma_T stays vacuous
    for (int t = T - 1; t >= 1; --t) {
        if (a == 0.0) {
            s.f4_bwd_prec[t - 1].setZero();
            s.f4_bwd_h[t - 1].setZero();
            continue;
        }
        Eigen::MatrixXd Lam = s.f4_bwd_prec[t];
        Lam.diagonal() += s.f3_prec.col(t);
        Eigen::VectorXd h = s.f4_bwd_h[t] + s.f3_h.col(t);
        const Eigen::VectorXd hc = h - Lam * c;
        if (b == 0.0) {
            s.f4_bwd_prec[t - 1] = a * a * Lam;
            s.f4_bwd_h[t - 1] = a * hc;
        } else {
            Eigen::MatrixXd M = Lam + ws.Sigma0_inv / b;
            M = 0.5 * (M + M.transpose()).eval();
            auto llt = chol_with_jitter(M, "backward message matrix");
            Eigen::MatrixXd LamNew = Lam - Lam * llt.solve(Lam);
            s.f4_bwd_prec[t - 1] = a * a * 0.5 * (LamNew + LamNew.transpose());
            s.f4_bwd_h[t - 1] = a * (hc - Lam * llt.solve(hc));
        }
    }
}

/// Refreshes the joint approximation from the sites: per-t x marginals via
/// the rank-N Woodbury route, per-t gamma marginals by natural-parameter
/// addition of f3 sites and chain messages, z marginals by Bernoulli
/// combination.
inline void recompute_joint(const Sites& s, const MmvProblem& p, const PriorConfig& cfg,
                            const detail::Workspace& ws, JointState& j, bool update_x = true,
                            bool update_gamma = true, bool update_z = true) {
    const int D = cfg.D, T = cfg.T;
    if (j.x_mean.size() == 0) {
        j.x_mean.setZero(D, T);
        j.x_var.setZero(D, T);
        j.gamma_mean.setZero(D, T);
        j.gamma_var.setZero(D, T);
        j.gamma_cov.assign(T, Eigen::MatrixXd::Zero(D, D));
        j.z_from_gamma.setZero(D, T);
        j.z_logodds.setZero(D, T);
        j.support.setZero(D, T);
    }
    if (update_x) {
        Eigen::VectorXd mean(D), var(D);
        for (int t = 0; t < T; ++t) {
            woodbury_posterior_diag(p.A, p.noise_var, s.f2_prec.col(t), s.f2_h.col(t),
                                    ws.AtY.col(t), mean, var);
            j.x_mean.col(t) = mean;
            j.x_var.col(t) = var;
        }
    }
    if (update_gamma) {
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(D, D);
        for (int t = 0; t < T; ++t) {
            auto llt_f = chol_with_jitter(s.f4_fwd_cov[t], "forward message cov");
            Eigen::MatrixXd Lam = llt_f.solve(I) + s.f4_bwd_prec[t];
            Eigen::VectorXd h = llt_f.solve(s.f4_fwd_mean[t]) + s.f4_bwd_h[t];
            Lam.diagonal() += s.f3_prec.col(t);
            h += s.f3_h.col(t);
            Lam = 0.5 * (Lam + Lam.transpose()).eval();
            auto llt = chol_with_jitter(Lam, "gamma joint precision");
            Eigen::MatrixXd cov = llt.solve(I);
            j.gamma_cov[t] = 0.5 * (cov + cov.transpose());
            j.gamma_var.col(t) = j.gamma_cov[t].diagonal();
            j.gamma_mean.col(t) = llt.solve(h);
        }
    }
    if (update_z) {
        for (int t = 0; t < T; ++t) {
            for (int i = 0; i < D; ++i) {
                double zg;
                if (s.f3_active(i, t)) {
                    zg = s.f3_logodds(i, t);
                } else {
                    const double mu = j.gamma_mean(i, t);
                    const double v = j.gamma_var(i, t);
                    zg = logit(probit(mu / std::sqrt(1.0 + v)));
                }
                j.z_from_gamma(i, t) = zg;
                j.z_logodds(i, t) = s.f2_logodds(i, t) + zg;
                j.support(i, t) = clamp_prob(logistic(j.z_logodds(i, t)));
            }
        }
    }
}

namespace detail {
inline constexpr double kLogOddsClamp = 23.0; // logit(1 - 1e-10)

inline double damp(double fresh, double old, double d) { return d * fresh + (1.0 - d) * old; }
} // namespace detail

/// Parallel moment-matched update of the spike-and-slab sites. All sites
/// read the same pre-sweep joint. A site is skipped (kept at its previous
/// value) when the division would leave a nonpositive cavity or site
/// variance; the nonpositive-variance case is a routine no-op near
/// convergence, while an invalid cavity signals numerical trouble and
/// throws once more than half the sites hit it. Returns the total skip
/// count for diagnostics.
inline int update_f2_parallel(Sites& s, const JointState& j, const MmvProblem& p,
                              const PriorConfig& cfg, const SolverOptions& opts) {
    const int D = cfg.D, T = cfg.T;
    const double d = opts.damping;
    const double max_prec = 1.0 / opts.min_site_var;
    int skipped = 0, bad_cavity = 0;
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < D; ++i) {
            const double v = j.x_var(i, t), m = j.x_mean(i, t);
            const double cav_prec = 1.0 / v - s.f2_prec(i, t);
            if (!(cav_prec > 1e-14)) { ++skipped; ++bad_cavity; continue; }
            const double cav_h = m / v - s.f2_h(i, t);
            const Gaussian1d cav{cav_h / cav_prec, 1.0 / cav_prec};
            const double q_cav = clamp_prob(logistic(j.z_from_gamma(i, t)));
            const TiltedMoments tm = spike_slab_tilted_moments(cav, q_cav, cfg.slab_var);
            const double tv = std::max(tm.var, opts.min_site_var);
            const double new_prec = 1.0 / tv - cav_prec;
            if (!(new_prec > 0.0)) { ++skipped; continue; }
            const double new_h = tm.mean / tv - cav_h;
            s.f2_prec(i, t) = std::min(detail::damp(new_prec, s.f2_prec(i, t), d), max_prec);
            s.f2_h(i, t) = detail::damp(new_h, s.f2_h(i, t), d);
            const double new_odds = logit(tm.bernoulli_prob) - logit(q_cav);
            s.f2_logodds(i, t) =
                std::clamp(detail::damp(new_odds, s.f2_logodds(i, t), d),
                           -detail::kLogOddsClamp, detail::kLogOddsClamp);
        }
    }
    if (bad_cavity > D * T / 2)
        throw NumericalError("update_f2_parallel: more than 50% of sites have invalid cavities");
    return skipped;
}

/// Parallel moment-matched update of the Bernoulli-probit sites.
inline int update_f3_parallel(Sites& s, const JointState& j, const PriorConfig& cfg,
                              const SolverOptions& opts) {
    const int D = cfg.D, T = cfg.T;
    const double d = opts.damping;
    const double max_prec = 1.0 / opts.min_site_var;
    int skipped = 0, bad_cavity = 0;
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < D; ++i) {
            const double v = j.gamma_var(i, t), m = j.gamma_mean(i, t);
            const double cav_prec = 1.0 / v - s.f3_prec(i, t);
            if (!(cav_prec > 1e-14)) { ++skipped; ++bad_cavity; continue; }
            const double cav_h = m / v - s.f3_h(i, t);
            const Gaussian1d cav{cav_h / cav_prec, 1.0 / cav_prec};
            const double q_cav = clamp_prob(logistic(s.f2_logodds(i, t)));
            const TiltedMoments tm = bernoulli_probit_tilted_moments(cav, q_cav);
            const double tv = std::max(tm.var, opts.min_site_var);
            const double new_prec = 1.0 / tv - cav_prec;
            if (!(new_prec > 0.0)) { ++skipped; continue; }
            const double new_h = tm.mean / tv - cav_h;
            s.f3_prec(i, t) = std::min(detail::damp(new_prec, s.f3_prec(i, t), d), max_prec);
            s.f3_h(i, t) = detail::damp(new_h, s.f3_h(i, t), d);
            const double new_odds = logit(tm.bernoulli_prob) - logit(q_cav);
            s.f3_logodds(i, t) =
                std::clamp(detail::damp(new_odds, s.f3_logodds(i, t), d),
                           -detail::kLogOddsClamp, detail::kLogOddsClamp);
            s.f3_active(i, t) = true;
        }
    }
    if (bad_cavity > D * T / 2)
        throw NumericalError("update_f3_parallel: more than 50% of sites have invalid cavities");
    return skipped;
}

/// Full EP loop: f2 sweep -> joint -> f3 sweep -> joint -> chain sweep ->
/// joint, repeated until the max-abs change in x_mean and support_prob drops
/// below tol. Non-convergence is reported, not thrown.
inline Posterior solve(const MmvProblem& problem, const PriorConfig& cfg,
                       const SolverOptions& opts = {}, Sites* sites_out = nullptr,
                       JointState* joint_out = nullptr) {
    cfg.validate();
    if (problem.D() != cfg.D || problem.T() != cfg.T)
        throw ConfigError("solve: problem/config dimension mismatch");
    if (!(problem.noise_var > 0.0)) throw ConfigError("solve: noise_var must be positive");

    const detail::Workspace ws = detail::make_workspace(problem, cfg);
    Sites sites = init_sites(problem, cfg, opts);
    JointState joint;
    update_f4_chain(sites, cfg, ws);
    recompute_joint(sites, problem, cfg, ws, joint);

    Posterior post;
    Eigen::MatrixXd prev_x, prev_s;
    for (int it = 0; it < opts.max_iters; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        prev_x = joint.x_mean;
        prev_s = joint.support;

        int skipped = update_f2_parallel(sites, joint, problem, cfg, opts);
        recompute_joint(sites, problem, cfg, ws, joint, true, false, true);
        skipped += update_f3_parallel(sites, joint, cfg, opts);
        recompute_joint(sites, problem, cfg, ws, joint, false, true, true);
        update_f4_chain(sites, cfg, ws);
        recompute_joint(sites, problem, cfg, ws, joint, false, true, true);

        const double delta = std::max((joint.x_mean - prev_x).cwiseAbs().maxCoeff(),
                                      (joint.support - prev_s).cwiseAbs().maxCoeff());
        const auto t1 = std::chrono::steady_clock::now();
        post.max_delta_trace.push_back(delta);
        post.skipped_trace.push_back(skipped);
        post.iter_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        post.iterations = it + 1;
        if (delta <= opts.tol) {
            post.converged = true;
            break;
        }
    }

    post.x_mean = joint.x_mean;
    post.support_prob = joint.support;
    post.gamma_mean = joint.gamma_mean;
    post.gamma_cov = joint.gamma_cov;
    post.x_cov.resize(cfg.T);
    for (int t = 0; t < cfg.T; ++t) {
        GaussianNd g = woodbury_posterior(problem.A, problem.noise_var, sites.f2_prec.col(t),
                                          sites.f2_h.col(t), ws.AtY.col(t));
        post.x_cov[t] = std::move(g.cov);
    }
    if (sites_out) *sites_out = sites;
    if (joint_out) *joint_out = joint;
    return post;
}

/// Per-iteration diagnostics as CSV.
inline void write_diagnostics_csv(std::ostream& os, const Posterior& p) {
    os << "iteration,max_delta,skipped_sites,wall_ms\n";
    char buf[64];
    for (size_t k = 0; k < p.max_delta_trace.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", p.max_delta_trace[k]);
        os << (k + 1) << ',' << buf << ',' << p.skipped_trace[k] << ',';
        std::snprintf(buf, sizeof(buf), "%.3f", p.iter_ms[k]);
        os << buf << '\n';
    }
}

} // namespace stss
