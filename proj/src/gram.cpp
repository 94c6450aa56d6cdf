#include "regflow/gram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace rf {

Envelope build_envelope(const TimeGrid& grid, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("build_envelope: tau must be positive");
    Envelope env;
    env.tau = tau;
    env.samples.resize(grid.n_points);
    double peak = 0.0;
    for (int k = 0; k < grid.n_points; ++k) {
        const double t = grid.time(k);
        env.samples[k] = std::exp(-t * t / (2.0 * tau * tau));
        peak = std::max(peak, env.samples[k]);
    }
    for (double& s : env.samples) s /= peak;
    env.samples.front() = 0.0;
    env.samples.back() = 0.0;
    return env;
}

SpdMatrix assemble(const Envelope& envelope, const std::vector<std::vector<double>>& gradients,
                   double dt) {
    const size_t n = envelope.samples.size();
    for (const auto& g : gradients)
        if (g.size() != n) throw std::invalid_argument("assemble: gradient length mismatch");

    const int m = static_cast<int>(gradients.size());
    SpdMatrix gamma(m);
    std::vector<double> prod(n);
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
            for (size_t k = 0; k < n; ++k)
                prod[k] = envelope.samples[k] * gradients[i][k] * gradients[j][k];
            const double v = trapezoid(prod, dt);
            gamma.at(i, j) = v;
            gamma.at(j, i) = v;
        }
    return gamma;
}

double GramData::inverse_norm2() const {
    return 1.0 / (std::max(sigma_min_sq, 0.0) + eps * eps);
}

GramData regularize_and_diagnose(const SpdMatrix& gamma, double eps) {
    if (!(eps >= 0.0)) throw std::invalid_argument("regularize_and_diagnose: eps must be >= 0");
    GramData d;
    d.gamma = gamma;
    d.eps = eps;
    d.gamma_eps = gamma;
    for (int i = 0; i < gamma.dim; ++i) d.gamma_eps.at(i, i) += eps * eps;

    const RealEigPair e = symmetric_eig(gamma);
    d.eigenvalues = e.values;
    d.sigma_min_sq = e.values.front();
    d.sigma_max_sq = e.values.back();
    const double floor_min = std::max(d.sigma_min_sq, 0.0);
    d.cond = (d.sigma_max_sq + eps * eps) / (floor_min + eps * eps);
    d.g0 = gamma.at(0, 0);

    std::vector<double> e0(gamma.dim, 0.0);
    e0[0] = 1.0;
    try {
        d.x = spd_solve(d.gamma_eps, e0);
    } catch (const FactorizationError& err) {
        throw FactorizationError(
            err.pivot_index, err.pivot_value,
            "projection system is numerically singular (pivot " +
                std::to_string(err.pivot_index) + ", value " + std::to_string(err.pivot_value) +
                ", sigma_min_sq " + std::to_string(d.sigma_min_sq) +
                "); this is the documented unregularised failure mode, raise eps");
    }
    return d;
}

LemmaReport lemma_suite(int n_trials, int dim, unsigned seed) {
    if (n_trials < 1) throw std::invalid_argument("lemma_suite: need at least one trial");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> log_eps(-2.0, 0.5);

    LemmaReport report;
    report.worst_margin = std::numeric_limits<double>::infinity();
    std::vector<double> b(static_cast<size_t>(dim) * dim);

    for (int trial = 0; trial < n_trials; ++trial) {
        for (double& v : b) v = gauss(rng);
        SpdMatrix gamma(dim);
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) {
                double acc = 0.0;
                for (int k = 0; k < dim; ++k)
                    acc += b[static_cast<size_t>(k) * dim + i] * b[static_cast<size_t>(k) * dim + j];
                gamma.at(i, j) = acc;
                gamma.at(j, i) = acc;
            }
        const double eps = std::pow(10.0, log_eps(rng));
        const GramData d = regularize_and_diagnose(gamma, eps);

        // Full inverse of gamma_eps, one solve per basis vector.
        std::vector<std::vector<double>> inv(dim);
        std::vector<double> rhs(dim, 0.0);
        for (int k = 0; k < dim; ++k) {
            rhs.assign(dim, 0.0);
            rhs[k] = 1.0;
            inv[k] = spd_solve(d.gamma_eps, rhs);
        }

        const double upper = 1.0 / (d.sigma_min_sq + eps * eps);
        auto record = [&](double slack) {
            const double margin = slack / upper;
            report.worst_margin = std::min(report.worst_margin, margin);
            if (margin < -1e-12) ++report.violations;
        };
        for (int k = 0; k < dim; ++k) {
            const double lower = 1.0 / (gamma.at(k, k) + eps * eps);
            record(inv[k][k] - lower);
            record(upper - inv[k][k]);
        }
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j)
                record(std::sqrt(inv[i][i] * inv[j][j]) - std::abs(inv[i][j]));
        ++report.trials;
    }
    return report;
}

ShiftReport shift_suite(int n_trials, int dim, unsigned seed) {
    if (n_trials < 1) throw std::invalid_argument("shift_suite: need at least one trial");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    static constexpr double kEps[] = {1e-8, 1e-6, 1e-4, 1e-2, 1.0};

    ShiftReport report;
    std::vector<double> b(static_cast<size_t>(dim) * dim);
    for (int trial = 0; trial < n_trials; ++trial) {
        for (double& v : b) v = gauss(rng);
        SpdMatrix gamma(dim);
        double mean_diag = 0.0;
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) {
                double acc = 0.0;
                for (int k = 0; k < dim; ++k)
                    acc += b[static_cast<size_t>(k) * dim + i] * b[static_cast<size_t>(k) * dim + j];
                gamma.at(i, j) = acc;
                gamma.at(j, i) = acc;
                if (i == j) mean_diag += acc;
            }
        mean_diag /= dim;
        // Diagonal tempering keeps cond(gamma) below ~4e2 without changing
        // what the shift identity claims.
        for (int i = 0; i < dim; ++i) gamma.at(i, i) += 1e-2 * mean_diag;

        const RealEigPair raw = symmetric_eig(gamma);
        bool bad = false;
        for (double eps : kEps) {
            const GramData d = regularize_and_diagnose(gamma, eps);
            const RealEigPair shifted = symmetric_eig(d.gamma_eps);
            for (int k = 0; k < dim; ++k) {
                const double expect = raw.values[k] + eps * eps;
                const double rel = std::abs(shifted.values[k] - expect) / expect;
                report.worst_rel = std::max(report.worst_rel, rel);
                if (rel > 1e-12) bad = true;
            }
        }
        if (bad) ++report.violations;
        ++report.trials;
    }
    return report;
}

}  // namespace rf
