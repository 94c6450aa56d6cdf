#pragma once

#include <vector>

#include "regflow/model.hpp"

namespace rf {

// Gating envelope: max-normalised Gaussian with the two endpoint samples
// forced to exactly zero, so the flow cannot move the field at the horizon
// boundaries.
struct Envelope {
    std::vector<double> samples;
    double tau = 0.0;
};

Envelope build_envelope(const TimeGrid& grid, double tau);

// Everything the flow and the diagnostics need to know about one iterate's
// projection system.
struct GramData {
    SpdMatrix gamma;                  // (M+1) x (M+1), row 0 is the objective direction
    double eps = 0.0;
    SpdMatrix gamma_eps;              // gamma + eps^2 * I, entrywise exact
    std::vector<double> eigenvalues;  // of gamma, ascending, raw (may dip below 0)
    double sigma_min_sq = 0.0;
    double sigma_max_sq = 0.0;
    double cond = 0.0;  // (sigma_max_sq + eps^2) / (max(sigma_min_sq, 0) + eps^2)
    double g0 = 0.0;    // gamma[0][0]
    std::vector<double> x;  // solves gamma_eps * x = e0

    // Spectral norm of the inverse, from the shift identity. The flow's step
    // bound uses this instead of forming the inverse.
    double inverse_norm2() const;
};

// Gamma_{ll'} = trapezoid(S * c_l * c_l'). Upper triangle computed, lower
// mirrored, so the result is exactly symmetric.
SpdMatrix assemble(const Envelope& envelope, const std::vector<std::vector<double>>& gradients,
                   double dt);

GramData regularize_and_diagnose(const SpdMatrix& gamma, double eps);

// Randomised check of the inverse-entry bounds the step-size theory rests
// on: 1/(Gamma_kk + eps^2) <= [Gamma_eps^-1]_kk <= 1/(sigma_min^2 + eps^2)
// and the Cauchy-Schwarz bound on off-diagonal inverse entries. Margins are
// normalised by the upper bound so the slack threshold is scale-free.
struct LemmaReport {
    int trials = 0;
    int violations = 0;
    double worst_margin = 0.0;  // most negative normalised slack seen
};

LemmaReport lemma_suite(int n_trials, int dim, unsigned seed);

// Randomised check that regularisation shifts every eigenvalue by exactly
// eps^2. The generator tempers the random Gram matrices (cond <= ~4e2) so
// the 1e-12 relative tolerance probes the identity rather than the relative
// accuracy limit of the eigensolver on near-singular inputs.
struct ShiftReport {
    int trials = 0;
    int violations = 0;
    double worst_rel = 0.0;  // largest relative eigenvalue deviation seen
};

ShiftReport shift_suite(int n_trials, int dim, unsigned seed);

}  // namespace rf
