// Benchmark and utility CLI for the spatio-temporal spike-and-slab solver.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stss/bench.hpp"
#include "stss/metrics.hpp"
#include "stss/prior.hpp"
#include "stss/solver.hpp"

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M) {
    std::ofstream os(path);
    char buf[64];
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", M(i, j));
            os << buf << (j + 1 < M.cols() ? "," : "");
        }
        os << '\n';
    }
}

struct PriorCliOptions {
    int D = 100, T = 100;
    double alpha = 0.99, beta = 1.0 - 0.99 * 0.99;
    double target_active = 20.0;
    double lengthscale = 5.0, variance = 1.0;
    double slab_var = 1.0;
    std::string kernel = "squared_exponential";

    void attach(CLI::App* app) {
        app->add_option("--D", D, "number of coefficients");
        app->add_option("--T", T, "number of measurement vectors");
        app->add_option("--alpha", alpha, "temporal correlation in [0,1]");
        app->add_option("--beta", beta, "innovation variance factor");
        app->add_option("--target-active", target_active, "expected active count per column");
        app->add_option("--lengthscale", lengthscale, "kernel lengthscale (index units)");
        app->add_option("--variance", variance, "kernel variance");
        app->add_option("--slab-var", slab_var, "slab variance tau0");
        app->add_option("--kernel", kernel, "squared_exponential or diagonal");
    }

    stss::PriorConfig build(double noise_var) const {
        stss::PriorConfig pc;
        pc.D = D;
        pc.T = T;
        pc.alpha = alpha;
        pc.beta = beta;
        pc.slab_var = slab_var;
        pc.noise_var = noise_var;
        pc.kernel = (kernel == "diagonal") ? stss::diagonal_kernel(variance)
                                           : stss::se_kernel(variance, lengthscale);
        pc.mu0 = Eigen::VectorXd::Constant(
            D, stss::calibrate_mu0_for_sparsity(target_active, D, variance));
        return pc;
    }
};

int run_selftest() {
    int failures = 0;
    auto check = [&](const char* name, bool ok, double worst) {
        std::printf("[%s] %-45s (max err %.3e)\n", ok ? "PASS" : "FAIL", name, worst);
        if (!ok) ++failures;
    };

    {
        stss::Rng rng(7);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const double mu = 10.0 * (rng.uniform() - 0.5);
            const double s2 = 1e-3 + 10.0 * rng.uniform();
            const auto got = stss::probit_gaussian_moments({mu, s2});
            const auto want = oracle::probit_gaussian_quadrature(mu, s2);
            worst = std::max({worst, std::abs(std::exp(got.log_norm) - want.z0),
                              std::abs(got.mean - want.mean), std::abs(got.var - want.var)});
        }
        check("probit-Gaussian moments vs quadrature", worst < 1e-8, worst);
    }
    {
        stss::Rng rng(8);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const double m = 10.0 * (rng.uniform() - 0.5);
            const double v = 1e-3 + 10.0 * rng.uniform();
            const double p = 1e-3 + (1.0 - 2e-3) * rng.uniform();
            const double tau = 0.1 + 3.0 * rng.uniform();
            const auto got = stss::spike_slab_tilted_moments({m, v}, p, tau);
            const auto want = oracle::spike_slab_quadrature(m, v, p, tau);
            worst = std::max({worst, std::abs(got.bernoulli_prob - want.prob),
                              std::abs(got.mean - want.mean), std::abs(got.var - want.var)});
        }
        check("spike-slab tilted moments vs enumeration", worst < 1e-8, worst);
    }
    {
        stss::Rng rng(9);
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const int N = 3 + static_cast<int>(rng.uniform() * 4);
            const int D = 10 + static_cast<int>(rng.uniform() * 10);
            Eigen::MatrixXd A(N, D);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < D; ++j) A(i, j) = rng.normal();
            Eigen::VectorXd r(D), h(D), y(N);
            for (int j = 0; j < D; ++j) { r(j) = 0.1 + rng.uniform(); h(j) = rng.normal(); }
            for (int i = 0; i < N; ++i) y(i) = rng.normal();
            const double nv = 0.5;
            const auto wb = stss::woodbury_posterior(A, nv, r, h, A.transpose() * y);
            const auto direct = oracle::dense_posterior(
                A.transpose() * A / nv, A.transpose() * y / nv,
                Eigen::MatrixXd(r.asDiagonal()), h);
            worst = std::max({worst, (wb.mean - direct.mean).cwiseAbs().maxCoeff(),
                              (wb.cov - direct.cov).cwiseAbs().maxCoeff()});
        }
        check("Woodbury posterior vs dense inversion", worst < 1e-8, worst);
    }
    {
        // stationarity recursion v_t = a^2 v_{t-1} + b with a^2 + b = 1
        const double a = 0.99, b = 1.0 - a * a;
        double v = 1.0, worst = 0.0;
        for (int t = 2; t <= 100; ++t) {
            v = a * a * v + b;
            worst = std::max(worst, std::abs(v - 1.0));
        }
        check("stationarity recursion v_t == 1", worst < 1e-12, worst);
    }
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatio-temporal spike-and-slab MMV solver and benchmark harness"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic problem file");
    PriorCliOptions synth_prior;
    synth_prior.attach(synth);
    std::string synth_out = "problem.stss";
    std::uint64_t synth_seed = 0;
    int synth_N = 40;
    double synth_snr = 10.0, synth_r = 0.0;
    std::string synth_kind = "gaussian_iid";
    synth->add_option("--out,-o", synth_out, "output problem file");
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--N", synth_N, "number of measurements per column");
    synth->add_option("--snr-db", synth_snr, "signal-to-noise ratio in dB");
    synth->add_option("--forward", synth_kind, "gaussian_iid or column_correlated");
    synth->add_option("--r", synth_r, "column correlation for column_correlated");

    // solve
    auto* solve_cmd = app.add_subcommand("solve", "solve a problem file");
    PriorCliOptions solve_prior;
    solve_prior.attach(solve_cmd);
    std::string solve_in, solve_out = ".";
    stss::SolverOptions solver_opts;
    solve_cmd->add_option("--in,-i", solve_in, "input problem file")->required();
    solve_cmd->add_option("--out", solve_out, "output directory");
    solve_cmd->add_option("--max-iters", solver_opts.max_iters, "EP iteration cap");
    solve_cmd->add_option("--tol", solver_opts.tol, "convergence tolerance");
    solve_cmd->add_option("--damping", solver_opts.damping, "site damping factor");
    solve_cmd->add_option("--vacuous-prec", solver_opts.vacuous_prec,
                          "initial precision of the coefficient sites");
    solve_cmd->add_flag("--support-screen-init", solver_opts.support_screen_init,
                        "seed support log-odds from a pooled ridge-energy screen");

    // exp1 / exp2
    std::string exp_config, exp_out = ".";
    std::uint64_t exp_seed = 0;
    int exp_threads = 0;
    bool seed_set = false, threads_set = false;
    auto add_exp_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", exp_config, "experiment config file (key = value lines)");
        cmd->add_option("--out", exp_out, "output directory");
        cmd->add_option("--seed", exp_seed, "base seed")->each([&](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--threads", exp_threads, "worker threads")->each([&](const std::string&) {
            threads_set = true;
        });
    };
    auto* exp1 = app.add_subcommand("exp1", "undersampling-ratio sweep benchmark");
    add_exp_flags(exp1);
    auto* exp2 = app.add_subcommand("exp2", "forward-matrix coherence sweep benchmark");
    add_exp_flags(exp2);

    auto* selftest = app.add_subcommand("selftest", "run oracle-equivalence checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            if (synth->count("--target-active") == 0 &&
                synth_prior.target_active >= synth_prior.D)
                synth_prior.target_active = 0.2 * synth_prior.D;
            stss::PriorConfig pc = synth_prior.build(1.0);
            const stss::ForwardKind kind = (synth_kind == "column_correlated")
                                               ? stss::ForwardKind::column_correlated
                                               : stss::ForwardKind::gaussian_iid;
            auto [prob, gt] = stss::sample_problem(pc, synth_N, kind, synth_r, synth_snr,
                                                   synth_seed);
            stss::write_problem_file(synth_out, prob, &gt);
            std::printf("wrote %s (N=%d D=%d T=%d noise_var=%g)\n", synth_out.c_str(),
                        prob.N(), prob.D(), prob.T(), prob.noise_var);
        } else if (*solve_cmd) {
            stss::GroundTruth gt;
            bool has_truth = false;
            const stss::MmvProblem prob = stss::read_problem_file(solve_in, &gt, &has_truth);
            solve_prior.D = prob.D();
            solve_prior.T = prob.T();
            // the default expected-active count assumes D = 100; rescale it
            // for smaller problems unless the user pinned a value
            if (solve_cmd->count("--target-active") == 0 &&
                solve_prior.target_active >= solve_prior.D)
                solve_prior.target_active = 0.2 * solve_prior.D;
            const stss::PriorConfig pc = solve_prior.build(prob.noise_var);
            const stss::Posterior post = stss::solve(prob, pc, solver_opts);
            fs::create_directories(solve_out);
            write_matrix_csv(solve_out + "/x_mean.csv", post.x_mean);
            write_matrix_csv(solve_out + "/support_prob.csv", post.support_prob);
            std::ofstream diag(solve_out + "/diagnostics.csv");
            stss::write_diagnostics_csv(diag, post);
            std::printf("iterations=%d converged=%d\n", post.iterations,
                        post.converged ? 1 : 0);
            if (has_truth) {
                const double e = stss::nmse(gt.X, post.x_mean);
                const auto sr = stss::support_f_measure(gt.Z, post.support_prob);
                std::printf("nmse=%.4f precision=%.4f recall=%.4f f=%.4f\n", e, sr.precision,
                            sr.recall, sr.f_measure);
            }
        } else if (*exp1 || *exp2) {
            stss::ExperimentConfig cfg;
            if (!exp_config.empty()) cfg = stss::read_experiment_config_file(exp_config);
            if (seed_set) cfg.base_seed = exp_seed;
            if (threads_set) cfg.threads = exp_threads;
            const int which = *exp1 ? 1 : 2;
            const auto rows =
                which == 1 ? stss::run_experiment1(cfg) : stss::run_experiment2(cfg);
            const auto aggs = stss::aggregate(rows);
            fs::create_directories(exp_out);
            const std::string stem = exp_out + "/exp" + std::to_string(which);
            std::ofstream ros(stem + "_results.csv");
            stss::write_results_csv(ros, rows);
            std::ofstream aos(stem + "_aggregate.csv");
            stss::write_aggregate_csv(aos, aggs);
            std::printf("wrote %s_results.csv (%zu rows) and %s_aggregate.csv (%zu cells)\n",
                        stem.c_str(), rows.size(), stem.c_str(), aggs.size());
        } else if (*selftest) {
            return run_selftest();
        }
    } catch (const stss::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
