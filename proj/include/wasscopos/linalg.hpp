#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace wasscopos {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kSqrt2 = 1.4142135623730951;

// Scaled vectorization of a symmetric d x d matrix: lower triangle in
// column-major order with off-diagonal entries multiplied by sqrt(2), so
// svec(A)^T svec(B) = trace(AB).
inline int svec_len(int d) { return d * (d + 1) / 2; }

// Index of entry (i, j), i >= j, within svec of a d x d matrix.
inline int svec_index(int d, int i, int j) {
    if (i < j) std::swap(i, j);
    // offset of column j: sum_{c<j} (d - c)
    return j * d - j * (j - 1) / 2 + (i - j);
}

inline Vec svec(const Mat& a) {
    const int d = static_cast<int>(a.rows());
    Vec v(svec_len(d));
    int t = 0;
    for (int j = 0; j < d; ++j) {
        v[t++] = a(j, j);
        for (int i = j + 1; i < d; ++i) v[t++] = kSqrt2 * a(i, j);
    }
    return v;
}

inline Mat smat(const Vec& v, int d) {
    Mat a(d, d);
    int t = 0;
    for (int j = 0; j < d; ++j) {
        a(j, j) = v[t++];
        for (int i = j + 1; i < d; ++i) {
            a(i, j) = v[t] / kSqrt2;
            a(j, i) = a(i, j);
            ++t;
        }
    }
    return a;
}

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace wasscopos
