// SPDX-License-Identifier: Apache-2.0
//
// Dense symmetric linear algebra on Eigen storage: symmetric
// eigendecomposition (cyclic Jacobi), inverse p-th roots with damping,
// matrix products, and packed lower-triangular SPD storage.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "asopt/errors.hpp"

namespace asopt {

using Index = Eigen::Index;

/// Row-major dense matrix; the library's working scalar is double, tests
/// instantiate long double for extended-precision oracles.
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

enum class SymLayout { Full, PackedLower };

/// Symmetric matrix in either Full (row-major square buffer) or PackedLower
/// (lower triangle, row-major, dim·(dim+1)/2 entries) layout.
template <class Scalar>
class SymMatrix {
  public:
    SymMatrix() = default;

    /// Wraps a full square matrix; rejects asymmetry beyond 1e-12 relative.
    explicit SymMatrix(Mat<Scalar> full) : layout_(SymLayout::Full), full_(std::move(full)) {
        if (full_.rows() != full_.cols())
            throw ShapeMismatchError("SymMatrix: matrix is not square");
        dim_ = full_.rows();
        if (dim_ > 0) {
            const Scalar scale = full_.cwiseAbs().maxCoeff();
            const Scalar tol = Scalar(1e-12) * scale;
            for (Index i = 0; i < dim_; ++i)
                for (Index j = i + 1; j < dim_; ++j)
                    if (std::abs(full_(i, j) - full_(j, i)) > tol)
                        throw ShapeMismatchError("SymMatrix: input not symmetric within tolerance");
        }
    }

    SymMatrix(Index dim, Vec<Scalar> packed)
        : layout_(SymLayout::PackedLower), dim_(dim), packed_(std::move(packed)) {
        if (packed_.size() != dim_ * (dim_ + 1) / 2)
            throw ShapeMismatchError("SymMatrix: packed length != dim*(dim+1)/2");
    }

    static SymMatrix zero(Index dim) { return SymMatrix(Mat<Scalar>::Zero(dim, dim)); }
    static SymMatrix identity(Index dim) { return SymMatrix(Mat<Scalar>::Identity(dim, dim)); }

    Index dim() const { return dim_; }
    SymLayout layout() const { return layout_; }

    const Mat<Scalar>& full() const {
        require(SymLayout::Full);
        return full_;
    }
    Mat<Scalar>& full() {
        require(SymLayout::Full);
        return full_;
    }
    const Vec<Scalar>& packed() const {
        require(SymLayout::PackedLower);
        return packed_;
    }

    /// Full view regardless of layout (unpacks when needed).
    Mat<Scalar> to_full_matrix() const {
        if (layout_ == SymLayout::Full) return full_;
        Mat<Scalar> m(dim_, dim_);
        Index k = 0;
        for (Index i = 0; i < dim_; ++i)
            for (Index j = 0; j <= i; ++j) {
                m(i, j) = packed_[k];
                m(j, i) = packed_[k];
                ++k;
            }
        return m;
    }

  private:
    void require(SymLayout want) const {
        if (layout_ != want) throw LayoutMismatchError("SymMatrix: wrong layout for operation");
    }

    SymLayout layout_ = SymLayout::Full;
    Index dim_ = 0;
    Mat<Scalar> full_;
    Vec<Scalar> packed_;
};

/// Result of sym_eig: values ascending, vectors' columns are the matching
/// orthonormal eigenvectors.
template <class Scalar>
struct EigenPair {
    Vec<Scalar> values;
    Mat<Scalar> vectors;

    Index dim() const { return values.size(); }
    static EigenPair identity(Index n) {
        return {Vec<Scalar>::Ones(n), Mat<Scalar>::Identity(n, n)};
    }
};

/// Lower triangle packed row-major: (0,0), (1,0), (1,1), (2,0), ...
template <class Scalar>
SymMatrix<Scalar> pack_spd(const SymMatrix<Scalar>& m) {
    if (m.layout() != SymLayout::Full) throw LayoutMismatchError("pack_spd: expected Full layout");
    const Index n = m.dim();
    Vec<Scalar> packed(n * (n + 1) / 2);
    const Mat<Scalar>& f = m.full();
    Index k = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j <= i; ++j) packed[k++] = f(i, j);
    return SymMatrix<Scalar>(n, std::move(packed));
}

template <class Scalar>
SymMatrix<Scalar> unpack_spd(const SymMatrix<Scalar>& m) {
    if (m.layout() != SymLayout::PackedLower)
        throw LayoutMismatchError("unpack_spd: expected PackedLower layout");
    return SymMatrix<Scalar>(m.to_full_matrix());
}

template <class DA, class DB>
auto matmul(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b)
    -> Mat<typename DA::Scalar> {
    if (a.cols() != b.rows()) throw ShapeMismatchError("matmul: inner dimensions disagree");
    return a * b;
}

namespace detail {
template <class Scalar>
SymMatrix<Scalar> symmetrized(Mat<Scalar> m) {
    Mat<Scalar> s = (m + m.transpose()) / Scalar(2);
    return SymMatrix<Scalar>(std::move(s));
}
}  // namespace detail

/// G·Gᵀ (row-side gradient covariance).
template <class Derived>
auto gram_left(const Eigen::MatrixBase<Derived>& g) -> SymMatrix<typename Derived::Scalar> {
    using S = typename Derived::Scalar;
    if (!all_finite(g)) throw NonFiniteError("gram_left: non-finite input");
    Mat<S> p = g * g.transpose();
    return detail::symmetrized<S>(std::move(p));
}

/// Gᵀ·G (column-side gradient covariance).
template <class Derived>
auto gram_right(const Eigen::MatrixBase<Derived>& g) -> SymMatrix<typename Derived::Scalar> {
    using S = typename Derived::Scalar;
    if (!all_finite(g)) throw NonFiniteError("gram_right: non-finite input");
    Mat<S> p = g.transpose() * g;
    return detail::symmetrized<S>(std::move(p));
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Fixed budget of 30 sweeps; converged when the off-diagonal Frobenius norm
/// drops below 1e-12·‖m‖_F. Deterministic: plain sequential rotations, no
/// pivot search. Eigenvalues returned ascending.
template <class Scalar>
EigenPair<Scalar> sym_eig(const SymMatrix<Scalar>& m) {
    const Index n = m.dim();
    Mat<Scalar> a = m.to_full_matrix();
    if (!all_finite(a)) throw NonFiniteError("sym_eig: non-finite input");
    if (n == 0) return {Vec<Scalar>(0), Mat<Scalar>(0, 0)};

    // Rows of vt are the eigenvectors; keeps every rotation update contiguous
    // in row-major storage.
    Mat<Scalar> vt = Mat<Scalar>::Identity(n, n);
    const Scalar fro = a.norm();
    const Scalar tol = Scalar(1e-12) * fro;
    constexpr int kMaxSweeps = 30;

    auto off_diag_norm = [&]() {
        Scalar acc = 0;
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n; ++j) acc += a(i, j) * a(i, j);
        return std::sqrt(Scalar(2) * acc);
    };

    bool converged = (n == 1) || off_diag_norm() <= tol;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        for (Index p = 0; p < n - 1; ++p) {
            for (Index q = p + 1; q < n; ++q) {
                const Scalar apq = a(p, q);
                if (apq == Scalar(0)) continue;
                const Scalar app = a(p, p);
                const Scalar aqq = a(q, q);
                const Scalar tau = (aqq - app) / (Scalar(2) * apq);
                const Scalar t = (tau >= Scalar(0))
                                     ? Scalar(1) / (tau + std::sqrt(Scalar(1) + tau * tau))
                                     : Scalar(-1) / (-tau + std::sqrt(Scalar(1) + tau * tau));
                const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
                const Scalar s = t * c;

                Scalar* rp = a.data() + p * n;
                Scalar* rq = a.data() + q * n;
                for (Index i = 0; i < n; ++i) {
                    const Scalar x = rp[i];
                    const Scalar y = rq[i];
                    rp[i] = c * x - s * y;
                    rq[i] = s * x + c * y;
                }
                // Restore exact symmetry: rows carry the rotated values, the
                // (p,q) plane entries have closed forms.
                rp[p] = app - t * apq;
                rq[q] = aqq + t * apq;
                rp[q] = Scalar(0);
                rq[p] = Scalar(0);
                for (Index i = 0; i < n; ++i) {
                    a(i, p) = rp[i];
                    a(i, q) = rq[i];
                }

                Scalar* vp = vt.data() + p * n;
                Scalar* vq = vt.data() + q * n;
                for (Index i = 0; i < n; ++i) {
                    const Scalar x = vp[i];
                    const Scalar y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        converged = off_diag_norm() <= tol;
    }
    if (!converged) throw NoConvergenceError("sym_eig: Jacobi sweep budget exhausted");

    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index i, Index j) { return a(i, i) < a(j, j); });

    EigenPair<Scalar> out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        out.vectors.col(k) = vt.row(order[k]).transpose();
    }
    return out;
}

/// (m + damping·I)^(−1/root_order) via eigendecomposition.
template <class Scalar>
SymMatrix<Scalar> inv_root(const SymMatrix<Scalar>& m, int root_order, Scalar damping) {
    if (root_order < 1) throw ShapeMismatchError("inv_root: root_order must be >= 1");
    if (damping < Scalar(0)) throw NotPsdError("inv_root: negative damping");
    EigenPair<Scalar> eig = sym_eig(m);
    const Index n = eig.dim();
    Vec<Scalar> w(n);
    for (Index i = 0; i < n; ++i) {
        const Scalar damped = eig.values[i] + damping;
        if (damped <= Scalar(0))
            throw NotPsdError("inv_root: damped eigenvalue <= 0 at index " + std::to_string(i));
        w[i] = std::pow(damped, Scalar(-1) / Scalar(root_order));
    }
    Mat<Scalar> r = eig.vectors * w.asDiagonal() * eig.vectors.transpose();
    return detail::symmetrized<Scalar>(std::move(r));
}

}  // namespace asopt
