#include "regflow/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rf {

NonHermitianError::NonHermitianError(double defect_, const std::string& where)
    : NumericError(where + ": matrix is not Hermitian, symmetry defect " +
                   std::to_string(defect_)),
      defect(defect_) {}

FactorizationError::FactorizationError(int pivot_index_, double pivot_value_)
    : NumericError("factorization failed at pivot " + std::to_string(pivot_index_) +
                   " (value " + std::to_string(pivot_value_) +
                   "); matrix is not positive definite"),
      pivot_index(pivot_index_),
      pivot_value(pivot_value_) {}

FactorizationError::FactorizationError(int pivot_index_, double pivot_value_,
                                       const std::string& message)
    : NumericError(message), pivot_index(pivot_index_), pivot_value(pivot_value_) {}

CMatrix CMatrix::identity(int d) {
    CMatrix m(d);
    for (int i = 0; i < d; ++i) m.at(i, i) = 1.0;
    return m;
}

CMatrix multiply(const CMatrix& lhs, const CMatrix& rhs) {
    const int n = lhs.dim;
    CMatrix out(n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            const cplx lik = lhs.at(i, k);
            if (lik == cplx{}) continue;
            for (int j = 0; j < n; ++j) out.at(i, j) += lik * rhs.at(k, j);
        }
    }
    return out;
}

std::vector<cplx> apply(const CMatrix& m, std::span<const cplx> v) {
    const int n = m.dim;
    std::vector<cplx> out(n);
    for (int i = 0; i < n; ++i) {
        cplx acc{};
        for (int j = 0; j < n; ++j) acc += m.at(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

CMatrix adjoint(const CMatrix& m) {
    CMatrix out(m.dim);
    for (int i = 0; i < m.dim; ++i)
        for (int j = 0; j < m.dim; ++j) out.at(i, j) = std::conj(m.at(j, i));
    return out;
}

double frobenius_norm(const CMatrix& m) {
    double acc = 0.0;
    for (const cplx& z : m.a) acc += std::norm(z);
    return std::sqrt(acc);
}

double HermitianMatrix::symmetry_defect() const {
    double worst = 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            worst = std::max(worst, std::abs(at(i, j) - std::conj(at(j, i))));
    return worst;
}

void HermitianMatrix::require_hermitian(double tol) const {
    const double defect = symmetry_defect();
    if (defect > tol) throw NonHermitianError(defect, "hermitian_eig");
}

SpdMatrix SpdMatrix::identity(int d) {
    SpdMatrix m(d);
    for (int i = 0; i < d; ++i) m.at(i, i) = 1.0;
    return m;
}

double SpdMatrix::symmetry_defect() const {
    double worst = 0.0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            worst = std::max(worst, std::abs(at(i, j) - at(j, i)));
    return worst;
}

HermitianMatrix SpdMatrix::as_hermitian() const {
    HermitianMatrix h(dim);
    for (size_t k = 0; k < a.size(); ++k) h.a[k] = a[k];
    return h;
}

namespace {

// One cyclic sweep target: annihilate a_pq by the unitary plane rotation
// R = P*Q where P carries the phase of a_pq and Q is the real Jacobi
// rotation of the phase-flattened 2x2 block.
struct Rotation {
    double c;
    cplx s_conj_phase;  // s * exp(-i*phase(a_pq))
};

void rotate(HermitianMatrix& A, CMatrix& V, int p, int q) {
    const cplx gamma = A.at(p, q);
    const double r = std::abs(gamma);
    if (r == 0.0) return;
    const cplx phase = gamma / r;  // e^{i phi}
    const double alpha = A.at(p, p).real();
    const double beta = A.at(q, q).real();

    const double theta = (beta - alpha) / (2.0 * r);
    const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                     (std::abs(theta) + std::sqrt(1.0 + theta * theta));
    const double c = 1.0 / std::sqrt(1.0 + t * t);
    const double s = t * c;

    const cplx sp = s * std::conj(phase);
    const int n = A.dim;

    // Column update for rows outside the plane; Hermitian mirror afterwards.
    for (int i = 0; i < n; ++i) {
        if (i == p || i == q) continue;
        const cplx aip = A.at(i, p);
        const cplx aiq = A.at(i, q);
        const cplx nip = c * aip - sp * aiq;
        const cplx niq = s * aip + c * std::conj(phase) * aiq;
        A.at(i, p) = nip;
        A.at(p, i) = std::conj(nip);
        A.at(i, q) = niq;
        A.at(q, i) = std::conj(niq);
    }

    const double app = c * c * alpha + s * s * beta - 2.0 * c * s * r;
    const double aqq = s * s * alpha + c * c * beta + 2.0 * c * s * r;
    A.at(p, p) = app;
    A.at(q, q) = aqq;
    A.at(p, q) = 0.0;
    A.at(q, p) = 0.0;

    for (int i = 0; i < n; ++i) {
        const cplx vip = V.at(i, p);
        const cplx viq = V.at(i, q);
        V.at(i, p) = c * vip - sp * viq;
        V.at(i, q) = s * vip + c * std::conj(phase) * viq;
    }
}

}  // namespace

EigPair hermitian_eig(const HermitianMatrix& A, double herm_tol) {
    A.require_hermitian(herm_tol);
    const int n = A.dim;

    HermitianMatrix work = A;
    // Symmetrize the working copy so roundoff-level asymmetry cannot drift.
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const cplx avg = 0.5 * (work.at(i, j) + std::conj(work.at(j, i)));
            work.at(i, j) = avg;
            work.at(j, i) = std::conj(avg);
        }
        work.at(i, i) = work.at(i, i).real();
    }
    CMatrix V = CMatrix::identity(n);

    constexpr double kRelTol = 1e-15;
    constexpr int kMaxSweeps = 64;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double off = std::abs(work.at(p, q));
                if (off == 0.0) continue;
                const double dd =
                    std::sqrt(std::abs(work.at(p, p).real() * work.at(q, q).real()));
                if (off <= kRelTol * dd) continue;
                rotate(work, V, p, q);
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        return work.at(i, i).real() < work.at(j, j).real();
    });

    EigPair out;
    out.values.resize(n);
    out.vectors = CMatrix(n);
    for (int k = 0; k < n; ++k) {
        out.values[k] = work.at(order[k], order[k]).real();
        for (int i = 0; i < n; ++i) out.vectors.at(i, k) = V.at(i, order[k]);
    }
    return out;
}

RealEigPair symmetric_eig(const SpdMatrix& A) {
    const EigPair e = hermitian_eig(A.as_hermitian());
    RealEigPair out;
    out.dim = A.dim;
    out.values = e.values;
    out.vectors.resize(static_cast<size_t>(A.dim) * A.dim);
    for (int i = 0; i < A.dim; ++i)
        for (int k = 0; k < A.dim; ++k)
            out.vectors[static_cast<size_t>(i) * A.dim + k] = e.vectors.at(i, k).real();
    return out;
}

std::vector<double> spd_solve(const SpdMatrix& A, std::span<const double> b) {
    const int n = A.dim;
    if (static_cast<int>(b.size()) != n)
        throw NumericError("spd_solve: dimension mismatch");

    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(A.at(i, i)));
    const double pivot_floor = 1e-14 * max_diag;

    // Lower Cholesky factor, computed in place on a copy.
    std::vector<double> L(static_cast<size_t>(n) * n, 0.0);
    auto l = [&](int i, int j) -> double& { return L[static_cast<size_t>(i) * n + j]; };
    for (int k = 0; k < n; ++k) {
        double d = A.at(k, k);
        for (int j = 0; j < k; ++j) d -= l(k, j) * l(k, j);
        if (!(d > pivot_floor)) throw FactorizationError(k, d);
        l(k, k) = std::sqrt(d);
        for (int i = k + 1; i < n; ++i) {
            double v = A.at(i, k);
            for (int j = 0; j < k; ++j) v -= l(i, j) * l(k, j);
            l(i, k) = v / l(k, k);
        }
    }

    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) {
        double v = b[i];
        for (int j = 0; j < i; ++j) v -= l(i, j) * y[j];
        y[i] = v / l(i, i);
    }
    std::vector<double> x(n);
    for (int i = n - 1; i >= 0; --i) {
        double v = y[i];
        for (int j = i + 1; j < n; ++j) v -= l(j, i) * x[j];
        x[i] = v / l(i, i);
    }
    return x;
}

double trapezoid(std::span<const double> samples, double dt) {
    if (samples.size() < 2) throw NumericError("trapezoid: need at least 2 samples");
    if (!(dt > 0.0)) throw NumericError("trapezoid: dt must be positive");
    double acc = 0.0;
    for (double v : samples) acc += v;
    acc -= 0.5 * (samples.front() + samples.back());
    return acc * dt;
}

CMatrix matrix_exponential_step(const HermitianMatrix& A, double dt, double herm_tol) {
    return unitary_from_eig(hermitian_eig(A, herm_tol), dt);
}

CMatrix unitary_from_eig(const EigPair& e, double dt) {
    const int n = e.vectors.dim;
    CMatrix out(n);
    std::vector<cplx> ph(n);
    for (int k = 0; k < n; ++k)
        ph[k] = std::exp(cplx(0.0, -e.values[k] * dt));
    // V * diag(ph) * V^dagger
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            cplx acc{};
            for (int k = 0; k < n; ++k)
                acc += e.vectors.at(i, k) * ph[k] * std::conj(e.vectors.at(j, k));
            out.at(i, j) = acc;
        }
    return out;
}

}  // namespace rf
