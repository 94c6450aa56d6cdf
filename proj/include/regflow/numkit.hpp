#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rf {

using cplx = std::complex<double>;

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown when a matrix handed to a Hermitian routine is not Hermitian
// within tolerance. Carries the measured defect so callers can report it.
class NonHermitianError : public NumericError {
public:
    NonHermitianError(double defect, const std::string& where);
    double defect;
};

// Thrown when a Cholesky pivot collapses. pivot_index identifies the row,
// pivot_value is the offending (non-positive or underflowed) pivot.
class FactorizationError : public NumericError {
public:
    FactorizationError(int pivot_index, double pivot_value);
    FactorizationError(int pivot_index, double pivot_value, const std::string& message);
    int pivot_index;
    double pivot_value;
};

// Dense complex matrix, row-major. Used for propagators and rotation
// products; no structural invariant is enforced.
struct CMatrix {
    int dim = 0;
    std::vector<cplx> a;

    CMatrix() = default;
    explicit CMatrix(int d) : dim(d), a(static_cast<size_t>(d) * d) {}
    static CMatrix identity(int d);

    cplx& at(int i, int j) { return a[static_cast<size_t>(i) * dim + j]; }
    const cplx& at(int i, int j) const { return a[static_cast<size_t>(i) * dim + j]; }
};

CMatrix multiply(const CMatrix& lhs, const CMatrix& rhs);
std::vector<cplx> apply(const CMatrix& m, std::span<const cplx> v);
CMatrix adjoint(const CMatrix& m);
double frobenius_norm(const CMatrix& m);

// Hermitian matrix with an explicit symmetry-defect check. Construction does
// not validate; consumers that require Hermiticity call require_hermitian.
struct HermitianMatrix {
    int dim = 0;
    std::vector<cplx> a;

    HermitianMatrix() = default;
    explicit HermitianMatrix(int d) : dim(d), a(static_cast<size_t>(d) * d) {}

    cplx& at(int i, int j) { return a[static_cast<size_t>(i) * dim + j]; }
    const cplx& at(int i, int j) const { return a[static_cast<size_t>(i) * dim + j]; }

    double symmetry_defect() const;             // max_ij |a_ij - conj(a_ji)|
    void require_hermitian(double tol = 1e-13) const;
};

// Real symmetric positive (semi)definite matrix, row-major.
struct SpdMatrix {
    int dim = 0;
    std::vector<double> a;

    SpdMatrix() = default;
    explicit SpdMatrix(int d) : dim(d), a(static_cast<size_t>(d) * d, 0.0) {}
    static SpdMatrix identity(int d);

    double& at(int i, int j) { return a[static_cast<size_t>(i) * dim + j]; }
    const double& at(int i, int j) const { return a[static_cast<size_t>(i) * dim + j]; }

    double symmetry_defect() const;
    HermitianMatrix as_hermitian() const;
};

// Eigendecomposition result: values ascending, vectors the matching
// orthonormal columns (vectors.at(i, k) is component i of eigenvector k).
struct EigPair {
    std::vector<double> values;
    CMatrix vectors;
};

// Cyclic complex Jacobi with the relative off-diagonal stopping rule
// |a_pq| <= tol * sqrt(|a_pp*a_qq|). For positive definite inputs this
// delivers high relative accuracy in the small eigenvalues, which the
// spectral-shift checks depend on.
EigPair hermitian_eig(const HermitianMatrix& A, double herm_tol = 1e-13);

// Real symmetric path through the same Jacobi kernel.
struct RealEigPair {
    std::vector<double> values;
    std::vector<double> vectors;  // row-major dim x dim, columns are eigenvectors
    int dim = 0;

    double vec(int i, int k) const { return vectors[static_cast<size_t>(i) * dim + k]; }
};
RealEigPair symmetric_eig(const SpdMatrix& A);

// Cholesky solve for SPD systems. Throws FactorizationError when a pivot
// falls below 1e-14 times the largest diagonal entry, which is how a
// numerically singular unregularised Gram matrix surfaces.
std::vector<double> spd_solve(const SpdMatrix& A, std::span<const double> b);

// Composite trapezoidal rule on a uniform grid. Requires >= 2 samples.
double trapezoid(std::span<const double> samples, double dt);

// exp(-i*A*dt) for Hermitian A, via the eigendecomposition. Unitary to
// roundoff by construction.
CMatrix matrix_exponential_step(const HermitianMatrix& A, double dt, double herm_tol = 1e-13);

// Same exponential from an already computed eigendecomposition, for callers
// that reuse the eigensystem (per-slice propagation does).
CMatrix unitary_from_eig(const EigPair& e, double dt);

}  // namespace rf
