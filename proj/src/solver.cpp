#include "wasscopos/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <cstdio>
#include <cstdlib>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "wasscopos/log.hpp"

#include <nlohmann/json.hpp>

namespace wasscopos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec Jmul(const Vec& u) {
    Vec r = -u;
    r[0] = u[0];
    return r;
}

// ---- per-block Nesterov-Todd scalings ------------------------------------

struct BlockScaling {
    // nonneg
    Vec w;  // sqrt(s/x)
    // soc
    double eta = 1.0;
    Vec v;         // 2vv' - J is the unit-determinant part of W
    Mat soc_hinv;  // dense (W^-1)^2
    // psd
    Mat R, Rinv, Hhat;  // Hhat = R R'
    Vec sigma;          // scaled-point spectrum
    // all kinds
    Vec lambda;  // scaled point W x = W^-T s
};

double block_margin(const ConeBlock& blk, const Vec& x) {
    auto seg = x.segment(blk.offset, blk.len);
    switch (blk.kind) {
        case ConeKind::free_cone:
            return kInf;
        case ConeKind::nonneg:
            return seg.minCoeff();
        case ConeKind::soc:
            return seg[0] - seg.tail(blk.dim - 1).norm();
        case ConeKind::psd:
            return min_eigenvalue(smat(seg, blk.dim));
    }
    return kInf;
}

void block_unit(const ConeBlock& blk, Vec& x) {
    auto seg = x.segment(blk.offset, blk.len);
    switch (blk.kind) {
        case ConeKind::free_cone:
            break;
        case ConeKind::nonneg:
            seg.setOnes();
            break;
        case ConeKind::soc:
            seg.setZero();
            seg[0] = 1.0;
            break;
        case ConeKind::psd:
            seg = svec(Mat::Identity(blk.dim, blk.dim));
            break;
    }
}

int block_degree(const ConeBlock& blk) {
    switch (blk.kind) {
        case ConeKind::free_cone: return 0;
        case ConeKind::nonneg: return blk.dim;
        case ConeKind::soc: return 1;
        case ConeKind::psd: return blk.dim;
    }
    return 0;
}

// Cholesky factor with an eigenvalue-clamping fallback for iterates that
// have drifted to the cone boundary within roundoff.
Mat robust_chol(const Mat& a) {
    Eigen::LLT<Mat> llt(a);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    const double floor = std::max(1e-14, 1e-14 * es.eigenvalues().cwiseAbs().maxCoeff());
    Vec d = es.eigenvalues().cwiseMax(floor);
    Mat l = es.eigenvectors() * d.cwiseSqrt().asDiagonal();
    // re-triangularize via QR of l'
    Eigen::HouseholderQR<Mat> qr(l.transpose());
    Mat rfac = qr.matrixQR().triangularView<Eigen::Upper>();
    // fix signs so the diagonal is positive
    for (int i = 0; i < rfac.rows(); ++i)
        if (rfac(i, i) < 0) rfac.row(i) = -rfac.row(i);
    return rfac.transpose();
}

BlockScaling compute_scaling(const ConeBlock& blk, const Vec& x, const Vec& s) {
    BlockScaling sc;
    auto xs = x.segment(blk.offset, blk.len);
    auto ss = s.segment(blk.offset, blk.len);
    switch (blk.kind) {
        case ConeKind::free_cone:
            break;
        case ConeKind::nonneg: {
            sc.w = (ss.array() / xs.array()).sqrt();
            sc.lambda = (xs.array() * ss.array()).sqrt();
            break;
        }
        case ConeKind::soc: {
            const int d = blk.dim;
            const double gx = std::sqrt(std::max(1e-300, xs[0] * xs[0] - xs.tail(d - 1).squaredNorm()));
            const double gs = std::sqrt(std::max(1e-300, ss[0] * ss[0] - ss.tail(d - 1).squaredNorm()));
            Vec z = xs / gx, zt = ss / gs;
            const double gamma = std::sqrt((1.0 + z.dot(zt)) / 2.0);
            Vec wq = (Jmul(z) + zt) / (2.0 * gamma);  // unit hyperbolic norm
            Vec v(d);
            v[0] = std::sqrt((wq[0] + 1.0) / 2.0);
            v.tail(d - 1) = wq.tail(d - 1) / (2.0 * v[0]);
            sc.eta = std::sqrt(gs / gx);
            sc.v = v;
            // lambda = W x
            sc.lambda = sc.eta * (2.0 * v * v.dot(xs) - Jmul(Vec(xs)));
            // dense (W^-1)^2 for Schur assembly: W0^-1 = 2 (Jv)(Jv)' - J
            Mat j = -Mat::Identity(d, d);
            j(0, 0) = 1.0;
            Vec jv = Jmul(v);
            Mat w0inv = 2.0 * jv * jv.transpose() - j;
            sc.soc_hinv = (w0inv * w0inv) / (sc.eta * sc.eta);
            break;
        }
        case ConeKind::psd: {
            const int d = blk.dim;
            Mat X = smat(xs, d), S = smat(ss, d);
            Mat Lx = robust_chol(X), Ls = robust_chol(S);
            Eigen::JacobiSVD<Mat> svd(Ls.transpose() * Lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Vec sig = svd.singularValues().cwiseMax(1e-150);
            Vec isqrt = sig.cwiseSqrt().cwiseInverse();
            sc.R = Lx * svd.matrixV() * isqrt.asDiagonal();
            sc.Rinv = isqrt.asDiagonal() * svd.matrixU().transpose() * Ls.transpose();
            sc.Hhat = sc.R * sc.R.transpose();
            sc.sigma = sig;
            sc.lambda = svec(Mat(sig.asDiagonal()));
            break;
        }
    }
    return sc;
}

// y = W u, W^T u, W^-1 u, W^-T u restricted to one block.
enum class WOp { W, WT, Winv, WinvT };

Vec apply_w(const ConeBlock& blk, const BlockScaling& sc, const Vec& u, WOp op) {
    switch (blk.kind) {
        case ConeKind::free_cone:
            return u;
        case ConeKind::nonneg:
            if (op == WOp::W || op == WOp::WT) return sc.w.cwiseProduct(u);
            return u.cwiseQuotient(sc.w);
        case ConeKind::soc: {
            const Vec& v = sc.v;
            if (op == WOp::W || op == WOp::WT)
                return sc.eta * (2.0 * v * v.dot(u) - Jmul(u));
            Vec jv = Jmul(v);
            return (2.0 * jv * jv.dot(u) - Jmul(u)) / sc.eta;
        }
        case ConeKind::psd: {
            Mat U = smat(u, blk.dim);
            switch (op) {
                case WOp::W: return svec(sc.Rinv * U * sc.Rinv.transpose());
                case WOp::WT: return svec(sc.Rinv.transpose() * U * sc.Rinv);
                case WOp::Winv: return svec(sc.R * U * sc.R.transpose());
                case WOp::WinvT: return svec(sc.R.transpose() * U * sc.R);
            }
        }
    }
    return u;
}

Vec apply_hinv(const ConeBlock& blk, const BlockScaling& sc, const Vec& u) {
    switch (blk.kind) {
        case ConeKind::free_cone:
            return u;
        case ConeKind::nonneg:
            return u.cwiseQuotient(sc.w.cwiseProduct(sc.w));
        case ConeKind::soc:
            return sc.soc_hinv * u;
        case ConeKind::psd:
            return svec(sc.Hhat * smat(u, blk.dim) * sc.Hhat);
    }
    return u;
}

Vec jordan_mul(const ConeBlock& blk, const Vec& a, const Vec& b) {
    switch (blk.kind) {
        case ConeKind::free_cone:
            return Vec::Zero(a.size());
        case ConeKind::nonneg:
            return a.cwiseProduct(b);
        case ConeKind::soc: {
            Vec r(a.size());
            r[0] = a.dot(b);
            r.tail(a.size() - 1) = a[0] * b.tail(b.size() - 1) + b[0] * a.tail(a.size() - 1);
            return r;
        }
        case ConeKind::psd: {
            Mat A = smat(a, blk.dim), B = smat(b, blk.dim);
            return svec(0.5 * (A * B + B * A));
        }
    }
    return a;
}

// Solve lambda o u = d at the scaling point (lambda is diagonal for PSD).
Vec jordan_div_lambda(const ConeBlock& blk, const BlockScaling& sc, const Vec& d) {
    switch (blk.kind) {
        case ConeKind::free_cone:
            return Vec::Zero(d.size());
        case ConeKind::nonneg:
            return d.cwiseQuotient(sc.lambda);
        case ConeKind::soc: {
            const Vec& l = sc.lambda;
            const int n = static_cast<int>(l.size());
            const double l0 = l[0];
            const Vec lb = l.tail(n - 1);
            const double det = l0 * l0 - lb.squaredNorm();
            Vec u(n);
            u[0] = (l0 * d[0] - lb.dot(d.tail(n - 1))) / det;
            u.tail(n - 1) = (d.tail(n - 1) - u[0] * lb) / l0;
            return u;
        }
        case ConeKind::psd: {
            Mat D = smat(d, blk.dim);
            Mat U(blk.dim, blk.dim);
            for (int i = 0; i < blk.dim; ++i)
                for (int j = 0; j < blk.dim; ++j) U(i, j) = 2.0 * D(i, j) / (sc.sigma[i] + sc.sigma[j]);
            return svec(U);
        }
    }
    return d;
}

// Largest t with lambda + t v in the cone; lambda is the scaled point.
double step_to_boundary(const ConeBlock& blk, const BlockScaling& sc, const Vec& v) {
    switch (blk.kind) {
        case ConeKind::free_cone:
            return kInf;
        case ConeKind::nonneg: {
            double t = kInf;
            for (int i = 0; i < v.size(); ++i)
                if (v[i] < 0) t = std::min(t, -sc.lambda[i] / v[i]);
            return t;
        }
        case ConeKind::soc: {
            const Vec& l = sc.lambda;
            const int n = static_cast<int>(l.size());
            const double a = v[0] * v[0] - v.tail(n - 1).squaredNorm();
            const double b = 2.0 * (l[0] * v[0] - l.tail(n - 1).dot(v.tail(n - 1)));
            const double c = l[0] * l[0] - l.tail(n - 1).squaredNorm();
            double t = kInf;
            if (std::abs(a) < 1e-300) {
                if (b < 0) t = -c / b;
            } else {
                const double disc = b * b - 4.0 * a * c;
                if (disc >= 0) {
                    const double sq = std::sqrt(disc);
                    for (double root : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)})
                        if (root > 0) t = std::min(t, root);
                }
            }
            // also the linear face lambda0 + t v0 >= 0
            if (v[0] < 0) t = std::min(t, -l[0] / v[0]);
            return t;
        }
        case ConeKind::psd: {
            Mat V = smat(v, blk.dim);
            Vec si = sc.sigma.cwiseSqrt().cwiseInverse();
            Mat Vt = si.asDiagonal() * V * si.asDiagonal();
            const double lmin = min_eigenvalue(Vt);
            return lmin >= 0 ? kInf : -1.0 / lmin;
        }
    }
    return kInf;
}

// ---- KKT backends ---------------------------------------------------------
//
// Each iteration solves, twice, the linearized KKT system
//   A dx = d_p,   A'dy + ds = d_d,   W dx + W^-T ds = d_c  (conic),
// with ds = 0 on free coordinates. Eliminating ds via
//   ds = W'(d_c - W dx) = W'd_c - H dx,   H = W'W,
// leaves the symmetric quasidefinite system
//   [ -H   A' ] [dx]   [ d_d - W'd_c ]
//   [  A   0  ] [dy] = [ d_p ].
// Nonnegative variables whose column has a single entry are eliminated into
// the row diagonal, which keeps the per-sample systems small without the
// conditioning loss of a full Schur complement.

struct KktRhs {
    Vec d_p;  // m
    Vec d_d;  // n
    Vec d_c;  // n, conic coords only (scaled space)
};

struct KktStep {
    Vec dx, dy, ds;
};

// dense H = W'W for one block
Mat block_h_matrix(const ConeBlock& blk, const BlockScaling& sc) {
    switch (blk.kind) {
        case ConeKind::free_cone:
            return Mat::Zero(blk.len, blk.len);
        case ConeKind::nonneg:
            return Mat((sc.w.cwiseProduct(sc.w)).asDiagonal());
        case ConeKind::soc: {
            const int d = blk.dim;
            Mat j = -Mat::Identity(d, d);
            j(0, 0) = 1.0;
            Mat w0 = 2.0 * sc.v * sc.v.transpose() - j;
            return (sc.eta * sc.eta) * (w0 * w0);
        }
        case ConeKind::psd: {
            // congruence by G = R^-T R^-1 in svec coordinates
            const int d = blk.dim;
            const Mat G = sc.Rinv.transpose() * sc.Rinv;
            Mat out(svec_len(d), svec_len(d));
            int t = 0;
            for (int l = 0; l < d; ++l) {
                {
                    Mat col = G.col(l) * G.col(l).transpose();
                    out.col(t++) = svec(col);
                }
                for (int k = l + 1; k < d; ++k) {
                    Mat col = (G.col(k) * G.col(l).transpose() + G.col(l) * G.col(k).transpose()) / kSqrt2;
                    out.col(t++) = svec(col);
                }
            }
            return out;
        }
    }
    return Mat();
}

class KktBackend {
public:
    virtual ~KktBackend() = default;
    virtual void factor(const std::vector<BlockScaling>& sc) = 0;
    virtual KktStep solve_raw(const std::vector<BlockScaling>& sc, const KktRhs& rhs) = 0;
};

class IpmContext {
public:
    explicit IpmContext(const ConicProblem& p) : p_(p) {}

    Vec apply_w_all(const std::vector<BlockScaling>& sc, const Vec& u, WOp op) const {
        Vec r = Vec::Zero(u.size());
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind == ConeKind::free_cone) continue;
            r.segment(blk.offset, blk.len) = apply_w(blk, sc[k], u.segment(blk.offset, blk.len), op);
        }
        return r;
    }

    // g = d_d - W'd_c on conic coords, d_d on free coords
    Vec reduced_rhs(const std::vector<BlockScaling>& sc, const KktRhs& rhs) const {
        Vec g = rhs.d_d;
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind == ConeKind::free_cone) continue;
            g.segment(blk.offset, blk.len) -=
                apply_w(blk, sc[k], rhs.d_c.segment(blk.offset, blk.len), WOp::WT);
        }
        return g;
    }

    // Step recovery with iterative refinement against the full KKT system;
    // the factorization drifts once the scalings become extreme, and
    // refinement restores the lost digits.
    KktStep recover(KktBackend& kkt, const std::vector<BlockScaling>& sc, const KktRhs& rhs) const {
        KktStep st = kkt.solve_raw(sc, rhs);
        const double rhs_scale = 1.0 + rhs.d_p.norm() + rhs.d_d.norm() + rhs.d_c.norm();
        double prev_err = kInf;
        KktStep best = st;
        double best_err = kInf;
        for (int round = 0; round < 6; ++round) {
            KktRhs res;
            res.d_p = rhs.d_p - p_.A * st.dx;
            res.d_d = rhs.d_d - p_.A.transpose() * st.dy - st.ds;
            res.d_c = rhs.d_c - apply_w_all(sc, st.dx, WOp::W) - apply_w_all(sc, st.ds, WOp::WinvT);
            for (const auto& blk : p_.blocks)
                if (blk.kind == ConeKind::free_cone) res.d_c.segment(blk.offset, blk.len).setZero();
            const double err = res.d_p.norm() + res.d_d.norm() + res.d_c.norm();
            if (err < best_err) {
                best_err = err;
                best = st;
            }
            if (err <= 1e-13 * rhs_scale) break;
            if (err > 0.5 * prev_err && round > 0) break;  // stopped contracting
            prev_err = err;
            KktStep corr = kkt.solve_raw(sc, res);
            st.dx += corr.dx;
            st.dy += corr.dy;
            st.ds += corr.ds;
        }
        return best_err < kInf ? best : st;
    }

private:
    const ConicProblem& p_;
};

// Shared bookkeeping for the quasidefinite backends: which coordinates are
// kept as explicit unknowns and which nonnegative singleton columns fold
// into the row diagonal.
struct Elimination {
    struct Singleton {
        int coord;        // global coordinate
        int block;        // block index
        int index;        // coordinate within block
        int row;          // the single row it appears in
        double coef;
    };
    std::vector<int> kept;             // global coords kept as unknowns
    std::vector<int> kept_pos;         // coord -> position in kept, or -1
    std::vector<Singleton> singles;    // eliminated coords
    std::vector<int> single_of_coord;  // coord -> index into singles, or -1

    static Elimination build(const ConicProblem& p) {
        Elimination e;
        const int n = p.num_vars();
        std::vector<int> nnz(n, 0);
        std::vector<int> last_row(n, -1);
        std::vector<double> last_val(n, 0.0);
        for (int col = 0; col < p.A.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, col); it; ++it) {
                ++nnz[col];
                last_row[col] = static_cast<int>(it.row());
                last_val[col] = it.value();
            }
        e.kept_pos.assign(n, -1);
        e.single_of_coord.assign(n, -1);
        std::vector<int> coord_block(n);
        for (std::size_t k = 0; k < p.blocks.size(); ++k)
            for (int i = 0; i < p.blocks[k].len; ++i) coord_block[p.blocks[k].offset + i] = static_cast<int>(k);
        for (int c = 0; c < n; ++c) {
            const auto& blk = p.blocks[coord_block[c]];
            if (blk.kind == ConeKind::nonneg && nnz[c] == 1) {
                e.single_of_coord[c] = static_cast<int>(e.singles.size());
                e.singles.push_back({c, coord_block[c], c - blk.offset, last_row[c], last_val[c]});
            } else {
                e.kept_pos[c] = static_cast<int>(e.kept.size());
                e.kept.push_back(c);
            }
        }
        return e;
    }
};

// Dense augmented backend for problems with PSD or SOC blocks.
class AugDenseKkt : public KktBackend {
public:
    AugDenseKkt(const ConicProblem& p, const SolverOptions& opts)
        : p_(p), opts_(opts), elim_(Elimination::build(p)) {
        Ad_ = Mat(p.A);
        const int m = p.num_rows();
        const int nk = static_cast<int>(elim_.kept.size());
        Ak_ = Mat(m, nk);
        for (int i = 0; i < nk; ++i) Ak_.col(i) = Ad_.col(elim_.kept[i]);
        aug_.resize(nk + m, nk + m);
    }

    void factor(const std::vector<BlockScaling>& sc) override {
        const int m = p_.num_rows();
        const int nk = static_cast<int>(elim_.kept.size());
        aug_.setZero();
        // -H on kept coordinate pairs, blockwise
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind == ConeKind::free_cone) continue;
            if (blk.kind == ConeKind::nonneg) {
                for (int i = 0; i < blk.len; ++i) {
                    const int pos = elim_.kept_pos[blk.offset + i];
                    if (pos >= 0) aug_(pos, pos) = -sc[k].w[i] * sc[k].w[i];
                }
                continue;
            }
            Mat h = block_h_matrix(blk, sc[k]);
            for (int i = 0; i < blk.len; ++i) {
                const int pi = elim_.kept_pos[blk.offset + i];
                for (int j = 0; j < blk.len; ++j) {
                    const int pj = elim_.kept_pos[blk.offset + j];
                    aug_(pi, pj) = -h(i, j);
                }
            }
        }
        // row diagonal from eliminated singletons
        row_diag_ = Vec::Zero(m);
        for (const auto& s : elim_.singles) {
            const double h = sc[s.block].w[s.index] * sc[s.block].w[s.index];
            row_diag_[s.row] += s.coef * s.coef / h;
        }
        aug_.block(0, nk, nk, m) = Ak_.transpose();
        aug_.block(nk, 0, m, nk) = Ak_;
        aug_.bottomRightCorner(m, m).diagonal() = row_diag_;
        for (int i = 0; i < nk; ++i) aug_(i, i) -= opts_.static_reg * (1.0 + std::abs(aug_(i, i)));
        for (int i = 0; i < m; ++i)
            aug_(nk + i, nk + i) += opts_.static_reg * (1.0 + std::abs(row_diag_[i]));
        lu_.compute(aug_);
    }

    KktStep solve_raw(const std::vector<BlockScaling>& sc, const KktRhs& rhs) override {
        IpmContext ctx(p_);
        const int m = p_.num_rows();
        const int nk = static_cast<int>(elim_.kept.size());
        Vec g = ctx.reduced_rhs(sc, rhs);
        Vec rr(nk + m);
        for (int i = 0; i < nk; ++i) rr[i] = g[elim_.kept[i]];
        rr.tail(m) = rhs.d_p;
        for (const auto& s : elim_.singles) {
            const double h = sc[s.block].w[s.index] * sc[s.block].w[s.index];
            rr[nk + s.row] += s.coef * g[s.coord] / h;
        }
        Vec sol = lu_.solve(rr);
        KktStep st;
        st.dy = sol.tail(m);
        st.dx = Vec::Zero(p_.num_vars());
        for (int i = 0; i < nk; ++i) st.dx[elim_.kept[i]] = sol[i];
        for (const auto& s : elim_.singles) {
            const double h = sc[s.block].w[s.index] * sc[s.block].w[s.index];
            st.dx[s.coord] = (s.coef * st.dy[s.row] - g[s.coord]) / h;
        }
        Vec aty = p_.A.transpose() * st.dy;
        st.ds = Vec::Zero(p_.num_vars());
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind == ConeKind::free_cone) continue;
            st.ds.segment(blk.offset, blk.len) =
                rhs.d_d.segment(blk.offset, blk.len) - aty.segment(blk.offset, blk.len);
        }
        return st;
    }

private:
    const ConicProblem& p_;
    const SolverOptions& opts_;
    Elimination elim_;
    Mat Ad_, Ak_, aug_;
    Vec row_diag_;
    Eigen::PartialPivLU<Mat> lu_;
};

// Schur-complement backend for problems whose cones are all nonnegative;
// the m x m normal equations stay small even with many variables.
class SchurKkt : public KktBackend {
public:
    SchurKkt(const ConicProblem& p, const SolverOptions& opts) : p_(p), opts_(opts) {
        Ad_ = Mat(p.A);
        for (const auto& blk : p.blocks) {
            if (blk.kind == ConeKind::free_cone)
                for (int i = 0; i < blk.len; ++i) free_coords_.push_back(blk.offset + i);
            else if (blk.kind != ConeKind::nonneg)
                throw internal_error("SchurKkt expects nonneg/free blocks only");
        }
        const int m = p.num_rows();
        const int nf = static_cast<int>(free_coords_.size());
        Af_ = Mat(m, nf);
        for (int i = 0; i < nf; ++i) Af_.col(i) = Ad_.col(free_coords_[i]);
        aug_.resize(m + nf, m + nf);
    }

    void factor(const std::vector<BlockScaling>& sc) override {
        const int m = p_.num_rows();
        const int nf = static_cast<int>(free_coords_.size());
        hinv_ = Vec::Zero(p_.num_vars());
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind != ConeKind::nonneg) continue;
            hinv_.segment(blk.offset, blk.len) = (sc[k].w.cwiseProduct(sc[k].w)).cwiseInverse();
        }
        Mat N = Ad_ * hinv_.asDiagonal() * Ad_.transpose();
        aug_.setZero();
        aug_.topLeftCorner(m, m) = N;
        for (int i = 0; i < m; ++i) aug_(i, i) += opts_.static_reg * (1.0 + std::abs(N(i, i)));
        aug_.topRightCorner(m, nf) = Af_;
        aug_.bottomLeftCorner(nf, m) = Af_.transpose();
        aug_.bottomRightCorner(nf, nf).diagonal().array() -= opts_.static_reg;
        lu_.compute(aug_);
    }

    KktStep solve_raw(const std::vector<BlockScaling>& sc, const KktRhs& rhs) override {
        IpmContext ctx(p_);
        const int m = p_.num_rows();
        const int nf = static_cast<int>(free_coords_.size());
        // u = W^-1 d_c - H^-1 d_d on conic coords
        Vec u = Vec::Zero(p_.num_vars());
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind != ConeKind::nonneg) continue;
            Vec dc = rhs.d_c.segment(blk.offset, blk.len);
            Vec dd = rhs.d_d.segment(blk.offset, blk.len);
            u.segment(blk.offset, blk.len) =
                dc.cwiseQuotient(sc[k].w) -
                dd.cwiseProduct(hinv_.segment(blk.offset, blk.len));
        }
        Vec rr(m + nf);
        rr.head(m) = rhs.d_p - p_.A * u;
        for (int i = 0; i < nf; ++i) rr[m + i] = rhs.d_d[free_coords_[i]];
        Vec sol = lu_.solve(rr);
        KktStep st;
        st.dy = sol.head(m);
        Vec aty = p_.A.transpose() * st.dy;
        st.dx = u + hinv_.cwiseProduct(aty);
        for (int i = 0; i < nf; ++i) st.dx[free_coords_[i]] = sol[m + i];
        st.ds = Vec::Zero(p_.num_vars());
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind != ConeKind::nonneg) continue;
            st.ds.segment(blk.offset, blk.len) =
                rhs.d_d.segment(blk.offset, blk.len) - aty.segment(blk.offset, blk.len);
        }
        return st;
    }

private:
    const ConicProblem& p_;
    const SolverOptions& opts_;
    Mat Ad_, Af_, aug_;
    Vec hinv_;
    std::vector<int> free_coords_;
    Eigen::PartialPivLU<Mat> lu_;
};

// Block-angular backend: one quasidefinite system per sample group plus a
// bordered solve for the coupling variables.
class ArrowKkt : public KktBackend {
public:
    ArrowKkt(const ConicProblem& p, const SolverOptions& opts)
        : p_(p), opts_(opts), elim_(Elimination::build(p)) {
        const auto& st = *p.structure;
        const int ngroups = static_cast<int>(st.groups.size());
        groups_.resize(ngroups);

        std::vector<int> row_group(p.num_rows(), -1);
        for (int g = 0; g < ngroups; ++g) {
            const auto& gr = st.groups[g];
            groups_[g].row_begin = gr.row_begin;
            groups_[g].nrows = gr.row_end - gr.row_begin;
            for (int r = gr.row_begin; r < gr.row_end; ++r) row_group[r] = g;
        }
        for (int r = 0; r < p.num_rows(); ++r)
            if (row_group[r] < 0) throw internal_error("block-angular structure does not cover all rows");

        std::vector<int> var_group(p.num_vars(), -1);  // -2 = coupling
        for (int g = 0; g < ngroups; ++g)
            for (int v = st.groups[g].var_begin; v < st.groups[g].var_end; ++v) var_group[v] = g;
        for (int v : st.coupling_vars) var_group[v] = -2;

        std::vector<int> coord_block(p.num_vars());
        for (std::size_t k = 0; k < p.blocks.size(); ++k)
            for (int i = 0; i < p.blocks[k].len; ++i) coord_block[p.blocks[k].offset + i] = static_cast<int>(k);

        // coupling variables must be nonneg scalars; their columns may span
        // every group
        for (std::size_t k = 0; k < p.blocks.size(); ++k) {
            const auto& blk = p.blocks[k];
            const int g0 = var_group[blk.offset];
            for (int i = 1; i < blk.len; ++i)
                if (var_group[blk.offset + i] != g0)
                    throw internal_error("cone block straddles structure groups");
            if (g0 == -2) {
                if (blk.kind != ConeKind::nonneg)
                    throw internal_error("coupling variables must belong to nonneg blocks");
                for (int i = 0; i < blk.len; ++i)
                    coupling_.push_back({blk.offset + i, static_cast<int>(k), i});
            }
        }
        n_coupling_ = static_cast<int>(coupling_.size());
        std::vector<int> coupling_slot(p.num_vars(), -1);
        for (int j = 0; j < n_coupling_; ++j) coupling_slot[coupling_[j].coord] = j;

        // kept unknowns per group, in global kept order
        for (int c : elim_.kept) {
            const int g = var_group[c];
            if (g == -2) continue;
            if (g < 0) throw internal_error("kept variable outside any group");
            groups_[g].kept_coords.push_back(c);
        }
        for (auto& gr : groups_) {
            gr.kept_pos.assign(p.num_vars(), -1);
            for (std::size_t i = 0; i < gr.kept_coords.size(); ++i)
                gr.kept_pos[gr.kept_coords[i]] = static_cast<int>(i);
            gr.dim = static_cast<int>(gr.kept_coords.size()) + gr.nrows;
            gr.Aloc = Mat::Zero(gr.nrows, static_cast<int>(gr.kept_coords.size()));
            gr.U = Mat::Zero(gr.dim, n_coupling_);
        }

        // sweep the matrix once
        for (int col = 0; col < p.A.outerSize(); ++col) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, col); it; ++it) {
                const int r = static_cast<int>(it.row());
                const int g = row_group[r];
                auto& gr = groups_[g];
                const int lr = r - gr.row_begin;
                if (var_group[col] == -2) {
                    const int nk = static_cast<int>(gr.kept_coords.size());
                    gr.U(nk + lr, coupling_slot[col]) = it.value();
                    continue;
                }
                if (var_group[col] != g)
                    throw internal_error("matrix entry links a row to a foreign group variable");
                if (elim_.kept_pos[col] < 0) continue;  // eliminated singleton
                gr.Aloc(lr, gr.kept_pos[col]) = it.value();
            }
        }
        // eliminated singletons grouped for the row-diagonal updates
        for (const auto& s : elim_.singles) {
            const int g = row_group[s.row];
            groups_[g].singles.push_back(s);
        }
        // blocks per group for the H assembly
        for (std::size_t k = 0; k < p.blocks.size(); ++k) {
            const auto& blk = p.blocks[k];
            const int g0 = var_group[blk.offset];
            if (g0 >= 0 && blk.kind != ConeKind::free_cone) groups_[g0].conic_blocks.push_back(static_cast<int>(k));
        }
    }

    void factor(const std::vector<BlockScaling>& sc) override {
        for (auto& gr : groups_) {
            const int nk = static_cast<int>(gr.kept_coords.size());
            Mat K = Mat::Zero(gr.dim, gr.dim);
            for (int kb : gr.conic_blocks) {
                const auto& blk = p_.blocks[kb];
                if (blk.kind == ConeKind::nonneg) {
                    for (int i = 0; i < blk.len; ++i) {
                        const int pos = gr.kept_pos[blk.offset + i];
                        if (pos >= 0) K(pos, pos) = -sc[kb].w[i] * sc[kb].w[i];
                    }
                    continue;
                }
                Mat h = block_h_matrix(blk, sc[kb]);
                for (int i = 0; i < blk.len; ++i) {
                    const int pi = gr.kept_pos[blk.offset + i];
                    for (int j = 0; j < blk.len; ++j) K(pi, gr.kept_pos[blk.offset + j]) = -h(i, j);
                }
            }
            Vec rd = Vec::Zero(gr.nrows);
            for (const auto& s : gr.singles) {
                const double h = sc[s.block].w[s.index] * sc[s.block].w[s.index];
                rd[s.row - gr.row_begin] += s.coef * s.coef / h;
            }
            K.block(0, nk, nk, gr.nrows) = gr.Aloc.transpose();
            K.block(nk, 0, gr.nrows, nk) = gr.Aloc;
            K.bottomRightCorner(gr.nrows, gr.nrows).diagonal() = rd;
            for (int i = 0; i < nk; ++i) K(i, i) -= opts_.static_reg * (1.0 + std::abs(K(i, i)));
            for (int i = 0; i < gr.nrows; ++i)
                K(nk + i, nk + i) += opts_.static_reg * (1.0 + std::abs(rd[i]));
            gr.lu.compute(K);
            if (n_coupling_ > 0) gr.Z = gr.lu.solve(gr.U);
        }
        if (n_coupling_ > 0) {
            Mat cap = Mat::Zero(n_coupling_, n_coupling_);
            for (int j = 0; j < n_coupling_; ++j) {
                const auto& c = coupling_[j];
                cap(j, j) = sc[c.block].w[c.index] * sc[c.block].w[c.index];
            }
            for (auto& gr : groups_) cap.noalias() += gr.U.transpose() * gr.Z;
            cap_lu_.compute(cap);
        }
    }

    KktStep solve_raw(const std::vector<BlockScaling>& sc, const KktRhs& rhs) override {
        IpmContext ctx(p_);
        Vec g = ctx.reduced_rhs(sc, rhs);

        std::vector<Vec> rr(groups_.size());
        Vec t = Vec::Zero(n_coupling_);
        for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
            auto& gr = groups_[gi];
            const int nk = static_cast<int>(gr.kept_coords.size());
            rr[gi].resize(gr.dim);
            for (int i = 0; i < nk; ++i) rr[gi][i] = g[gr.kept_coords[i]];
            rr[gi].tail(gr.nrows) = rhs.d_p.segment(gr.row_begin, gr.nrows);
            for (const auto& s : gr.singles) {
                const double h = sc[s.block].w[s.index] * sc[s.block].w[s.index];
                rr[gi][nk + s.row - gr.row_begin] += s.coef * g[s.coord] / h;
            }
        }
        std::vector<Vec> wg(groups_.size());
        for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
            wg[gi] = groups_[gi].lu.solve(rr[gi]);
            if (n_coupling_ > 0) t.noalias() += groups_[gi].U.transpose() * wg[gi];
        }
        Vec dlam;
        if (n_coupling_ > 0) {
            Vec gl(n_coupling_);
            for (int j = 0; j < n_coupling_; ++j) gl[j] = g[coupling_[j].coord];
            dlam = cap_lu_.solve(t - gl);
            for (std::size_t gi = 0; gi < groups_.size(); ++gi)
                wg[gi].noalias() -= groups_[gi].Z * dlam;
        }

        KktStep st;
        st.dx = Vec::Zero(p_.num_vars());
        st.dy.resize(p_.num_rows());
        for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
            auto& gr = groups_[gi];
            const int nk = static_cast<int>(gr.kept_coords.size());
            for (int i = 0; i < nk; ++i) st.dx[gr.kept_coords[i]] = wg[gi][i];
            st.dy.segment(gr.row_begin, gr.nrows) = wg[gi].tail(gr.nrows);
        }
        for (int j = 0; j < n_coupling_; ++j) st.dx[coupling_[j].coord] = dlam[j];
        for (const auto& s : elim_.singles) {
            const double h = sc[s.block].w[s.index] * sc[s.block].w[s.index];
            st.dx[s.coord] = (s.coef * st.dy[s.row] - g[s.coord]) / h;
        }
        Vec aty = p_.A.transpose() * st.dy;
        st.ds = Vec::Zero(p_.num_vars());
        for (std::size_t k = 0; k < p_.blocks.size(); ++k) {
            const auto& blk = p_.blocks[k];
            if (blk.kind == ConeKind::free_cone) continue;
            st.ds.segment(blk.offset, blk.len) =
                rhs.d_d.segment(blk.offset, blk.len) - aty.segment(blk.offset, blk.len);
        }
        return st;
    }

private:
    struct Group {
        int row_begin = 0, nrows = 0, dim = 0;
        std::vector<int> kept_coords;
        std::vector<int> kept_pos;
        std::vector<int> conic_blocks;
        std::vector<Elimination::Singleton> singles;
        Mat Aloc, U, Z;
        Eigen::PartialPivLU<Mat> lu;
    };
    struct Coupling {
        int coord;
        int block;
        int index;
    };

    const ConicProblem& p_;
    const SolverOptions& opts_;
    Elimination elim_;
    std::vector<Group> groups_;
    std::vector<Coupling> coupling_;
    int n_coupling_ = 0;
    Eigen::PartialPivLU<Mat> cap_lu_;
};


// ---- presolve --------------------------------------------------------------

struct Presolve {
    bool reduced = false;
    bool inconsistent = false;
    std::vector<int> keep;  // kept row indices (original order)
};

Presolve presolve_rows(const Mat& A, const Vec& b, double pivot_tol) {
    Presolve ps;
    const int m = static_cast<int>(A.rows());
    if (m == 0) return ps;
    Eigen::ColPivHouseholderQR<Mat> qr;
    qr.setThreshold(pivot_tol);
    qr.compute(A.transpose());
    const int rank = static_cast<int>(qr.rank());
    if (rank >= m) return ps;
    ps.reduced = true;
    const auto& perm = qr.colsPermutation().indices();
    std::vector<char> is_kept(m, 0);
    for (int i = 0; i < rank; ++i) is_kept[perm[i]] = 1;
    for (int r = 0; r < m; ++r)
        if (is_kept[r]) ps.keep.push_back(r);

    Mat Ak(static_cast<int>(ps.keep.size()), A.cols());
    Vec bk(static_cast<int>(ps.keep.size()));
    for (std::size_t i = 0; i < ps.keep.size(); ++i) {
        Ak.row(static_cast<int>(i)) = A.row(ps.keep[i]);
        bk[static_cast<int>(i)] = b[ps.keep[i]];
    }
    Eigen::ColPivHouseholderQR<Mat> qr2(Ak.transpose());
    const double scale = 1.0 + b.cwiseAbs().maxCoeff();
    for (int r = 0; r < m; ++r) {
        if (is_kept[r]) continue;
        Vec w = qr2.solve(Vec(A.row(r).transpose()));
        if (std::abs(w.dot(bk) - b[r]) > 1e-7 * scale) {
            ps.inconsistent = true;
            return ps;
        }
    }
    return ps;
}

ConicProblem reduce_rows(const ConicProblem& p, const std::vector<int>& keep) {
    ConicProblem q = p;
    Mat Ad(p.A);
    Mat Ak(static_cast<int>(keep.size()), Ad.cols());
    Vec bk(static_cast<int>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        Ak.row(static_cast<int>(i)) = Ad.row(keep[i]);
        bk[static_cast<int>(i)] = p.b[keep[i]];
    }
    q.A = Ak.sparseView();
    q.b = bk;
    q.structure.reset();
    return q;
}

}  // namespace

void ConicProblem::validate() const {
    int total = 0;
    for (const auto& blk : blocks) total += blk.len;
    if (total != num_vars()) throw internal_error("cone blocks do not cover the variable vector");
    if (A.rows() != b.size()) throw internal_error("A and b row counts differ");
    if (A.cols() != c.size()) throw internal_error("A and c dimensions differ");
}

const char* status_name(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::unbounded: return "unbounded";
        case SolveStatus::max_iter: return "max_iter";
        case SolveStatus::numerical: return "numerical";
    }
    return "numerical";
}

ConicSolutionEx solve(const ConicProblem& problem0, const SolverOptions& opts) {
    // presolve: remove dependent equality rows on the unstructured path
    const ConicProblem* pp = &problem0;
    ConicProblem reduced;
    std::vector<int> kept_rows;
    bool row_reduced = false;
    if (opts.presolve && !(opts.use_structure && problem0.structure)) {
        Mat Ad(problem0.A);
        Presolve ps = presolve_rows(Ad, problem0.b, 1e-9);
        if (ps.inconsistent) {
            ConicSolutionEx sol;
            sol.status = SolveStatus::infeasible;
            sol.x = Vec::Zero(problem0.num_vars());
            sol.y = Vec::Zero(problem0.num_rows());
            sol.s = Vec::Zero(problem0.num_vars());
            return sol;
        }
        if (ps.reduced) {
            reduced = reduce_rows(problem0, ps.keep);
            kept_rows = ps.keep;
            row_reduced = true;
            pp = &reduced;
        }
    }
    const ConicProblem& p = *pp;

    const int n = p.num_vars();
    const int m = p.num_rows();

    IpmContext ctx(p);
    bool all_nonneg = true;
    for (const auto& blk : p.blocks)
        if (blk.kind == ConeKind::soc || blk.kind == ConeKind::psd) all_nonneg = false;
    std::unique_ptr<KktBackend> kkt;
    if (opts.use_structure && p.structure)
        kkt = std::make_unique<ArrowKkt>(p, opts);
    else if (all_nonneg)
        kkt = std::make_unique<SchurKkt>(p, opts);
    else
        kkt = std::make_unique<AugDenseKkt>(p, opts);

    int degree = 1;  // tau/kappa pair
    for (const auto& blk : p.blocks) degree += block_degree(blk);

    Vec e = Vec::Zero(n);
    for (const auto& blk : p.blocks) block_unit(blk, e);

    // Homogeneous self-dual model: a point (x, y, s, tau, kappa) with
    //   A x = b tau,  A'y + s = c tau,  b'y - c'x = kappa
    // and tau > 0 recovers an optimal pair (x, y, s)/tau. The embedding
    // always has the unit interior start, which matters here: the sample
    // membership constraints routinely have no strictly feasible point on
    // either side, so a plain path-follower has no central path to track.
    Vec x = e, s = e, y = Vec::Zero(m);
    double tau = 1.0, kappa = 1.0;

    std::vector<BlockScaling> sc(p.blocks.size());

    const double bnorm = p.b.norm(), cnorm = p.c.norm();
    const double res_scale = 1.0 + bnorm + cnorm;

    ConicSolutionEx sol;
    sol.status = SolveStatus::max_iter;

    double best_score = kInf;
    double stall_score = kInf;
    int stall_iter = 0;
    double mu0 = -1.0;
    int consecutive_tiny_steps = 0;

    auto record_candidate = [&](int iter) {
        const Vec xh = x / tau;
        const Vec yh = y / tau;
        const Vec sh = s / tau;
        const double pres = (p.A * xh - p.b).norm();
        const double dres = (p.A.transpose() * yh + sh - p.c).norm();
        const double pobj = p.c.dot(xh) + p.obj_offset;
        const double dobj = p.b.dot(yh) + p.obj_offset;
        const double gap = xh.dot(sh);
        const double denom = std::max({1.0, std::abs(pobj), std::abs(dobj)});
        const double relgap = std::max(gap, std::abs(pobj - dobj)) / denom;
        if (opts.record_trace) sol.trace.push_back({pobj, dobj, gap, pres, dres});
        const double score = std::max(pres, dres) / res_scale + relgap;
        if (score < best_score) {
            best_score = score;
            sol.x = xh;
            sol.y = yh;
            sol.s = sh;
            sol.primal_obj = pobj;
            sol.dual_obj = dobj;
            sol.primal_res = pres;
            sol.dual_res = dres;
            sol.rel_gap = relgap;
            sol.complementarity = gap / std::max(1, degree - 1);
            sol.iterations = iter;
        }
        return std::max(pres, dres) <= opts.feas_tol * res_scale && relgap <= opts.gap_tol;
    };

    for (int iter = 0; iter <= opts.max_iter; ++iter) {
        Vec rp = p.A * x - p.b * tau;
        Vec rd = p.A.transpose() * y + s - p.c * tau;
        const double rg = p.b.dot(y) - p.c.dot(x) - kappa;
        const double gap_h = x.dot(s) + tau * kappa;
        const double mu = gap_h / degree;
        if (mu0 < 0) mu0 = std::max(mu, 1e-12);

        if (record_candidate(iter)) {
            sol.status = SolveStatus::optimal;
            break;
        }
        if (iter == opts.max_iter) {
            sol.status = SolveStatus::max_iter;
            break;
        }

        // infeasibility and unboundedness show up as tau -> 0 with kappa
        // bounded away; classify by the certificate signs
        if (std::getenv("WASSCOPOS_KKT_DEBUG") != nullptr)
            std::fprintf(stderr, "hsd %d tau %.3e kappa %.3e mu %.3e\n", iter, tau, kappa, mu);
        if (tau < 1e-10 * std::max(1.0, kappa) && mu < 1e-8 * mu0) {
            if (p.b.dot(y) > 1e-10)
                sol.status = SolveStatus::infeasible;
            else if (p.c.dot(x) < -1e-10)
                sol.status = SolveStatus::unbounded;
            else
                sol.status = SolveStatus::numerical;
            break;
        }
        if (mu < 1e-26 * mu0) {
            sol.status = SolveStatus::numerical;
            break;
        }
        // stall detection on the de-homogenized merit
        if (best_score < 0.99 * stall_score) {
            stall_score = best_score;
            stall_iter = iter;
        } else if (iter - stall_iter > 20) {
            sol.status = SolveStatus::numerical;
            break;
        }

        for (std::size_t k = 0; k < p.blocks.size(); ++k) sc[k] = compute_scaling(p.blocks[k], x, s);
        kkt->factor(sc);

        Vec lambda = Vec::Zero(n);
        for (std::size_t k = 0; k < p.blocks.size(); ++k) {
            const auto& blk = p.blocks[k];
            if (blk.kind == ConeKind::free_cone) continue;
            lambda.segment(blk.offset, blk.len) = sc[k].lambda;
        }

        // constant-rhs solve shared by both directions:
        // [-H A'; A 0] (dxb, dyb) = (c, b)
        KktRhs rhs2{p.b, p.c, Vec::Zero(n)};
        KktStep st2 = ctx.recover(*kkt, sc, rhs2);
        const double denom_base = kappa / tau - p.c.dot(st2.dx) + p.b.dot(st2.dy);

        // assembles the full HSD direction for given residual scaling and
        // complementarity right-hand sides
        auto hsd_direction = [&](double eta, const Vec& d_c, double d_tk) {
            KktRhs rhs1{-eta * rp, -eta * rd, d_c};
            KktStep st1 = ctx.recover(*kkt, sc, rhs1);
            const double d_g = -eta * rg;
            double dtau = (d_g + d_tk / tau + p.c.dot(st1.dx) - p.b.dot(st1.dy)) / denom_base;
            KktStep st;
            st.dx = st1.dx + dtau * st2.dx;
            st.dy = st1.dy + dtau * st2.dy;
            // ds from the dual equation keeps it exact
            st.ds = -eta * rd + p.c * dtau - p.A.transpose() * st.dy;
            for (const auto& blk : p.blocks)
                if (blk.kind == ConeKind::free_cone) st.ds.segment(blk.offset, blk.len).setZero();
            const double dkappa = (d_tk - kappa * dtau) / tau;
            return std::tuple<KktStep, double, double>(std::move(st), dtau, dkappa);
        };

        auto boundary = [&](const KktStep& st, double dtau, double dkappa) {
            Vec wdx = ctx.apply_w_all(sc, st.dx, WOp::W);
            Vec wds = ctx.apply_w_all(sc, st.ds, WOp::WinvT);
            double a = kInf;
            for (std::size_t k = 0; k < p.blocks.size(); ++k) {
                const auto& blk = p.blocks[k];
                if (blk.kind == ConeKind::free_cone) continue;
                a = std::min(a, step_to_boundary(blk, sc[k], Vec(wdx.segment(blk.offset, blk.len))));
                a = std::min(a, step_to_boundary(blk, sc[k], Vec(wds.segment(blk.offset, blk.len))));
            }
            if (dtau < 0) a = std::min(a, -tau / dtau);
            if (dkappa < 0) a = std::min(a, -kappa / dkappa);
            return a;
        };

        // predictor
        auto [sta, dtau_a, dkappa_a] = hsd_direction(1.0, -lambda, -tau * kappa);
        const double a_aff = std::min(1.0, boundary(sta, dtau_a, dkappa_a));
        const double gap_aff = (x + a_aff * sta.dx).dot(s + a_aff * sta.ds) +
                               (tau + a_aff * dtau_a) * (kappa + a_aff * dkappa_a);
        const double sigma = std::pow(std::clamp(gap_aff / gap_h, 0.0, 1.0), 3.0);

        // corrector
        Vec wdxa = ctx.apply_w_all(sc, sta.dx, WOp::W);
        Vec wdsa = ctx.apply_w_all(sc, sta.ds, WOp::WinvT);
        auto corrector_rhs = [&](bool with_second_order) {
            Vec d_c = Vec::Zero(n);
            for (std::size_t k = 0; k < p.blocks.size(); ++k) {
                const auto& blk = p.blocks[k];
                if (blk.kind == ConeKind::free_cone) continue;
                Vec lam = sc[k].lambda;
                Vec q = -jordan_mul(blk, lam, lam);
                if (with_second_order)
                    q -= jordan_mul(blk, wdxa.segment(blk.offset, blk.len),
                                    wdsa.segment(blk.offset, blk.len));
                Vec tmp = Vec::Zero(n);
                block_unit(blk, tmp);
                q += sigma * mu * tmp.segment(blk.offset, blk.len);
                d_c.segment(blk.offset, blk.len) = jordan_div_lambda(blk, sc[k], q);
            }
            return d_c;
        };
        double d_tk = sigma * mu - tau * kappa - dtau_a * dkappa_a;
        auto [stc, dtau_c, dkappa_c] = hsd_direction(1.0 - sigma, corrector_rhs(true), d_tk);
        double amax = boundary(stc, dtau_c, dkappa_c);
        if (amax < 0.2 * std::min(a_aff, 1.0)) {
            // the second-order correction backfired near a degenerate face
            auto [stc2, dtau2, dkappa2] =
                hsd_direction(1.0 - sigma, corrector_rhs(false), sigma * mu - tau * kappa);
            const double amax2 = boundary(stc2, dtau2, dkappa2);
            if (amax2 > amax) {
                stc = std::move(stc2);
                dtau_c = dtau2;
                dkappa_c = dkappa2;
                amax = amax2;
            }
        }
        if (amax < 1e-6) {
            // blocked: take a pure centering step to re-open the cone margins
            Vec d_pure = Vec::Zero(n);
            for (std::size_t k = 0; k < p.blocks.size(); ++k) {
                const auto& blk = p.blocks[k];
                if (blk.kind == ConeKind::free_cone) continue;
                Vec lam = sc[k].lambda;
                Vec q = -jordan_mul(blk, lam, lam);
                Vec tmp = Vec::Zero(n);
                block_unit(blk, tmp);
                q += mu * tmp.segment(blk.offset, blk.len);
                d_pure.segment(blk.offset, blk.len) = jordan_div_lambda(blk, sc[k], q);
            }
            auto [stp, dtaup, dkappap] = hsd_direction(0.0, d_pure, mu - tau * kappa);
            const double amaxp = boundary(stp, dtaup, dkappap);
            if (amaxp > amax) {
                stc = std::move(stp);
                dtau_c = dtaup;
                dkappa_c = dkappap;
                amax = amaxp;
            }
        }

        if (std::getenv("WASSCOPOS_KKT_DEBUG") != nullptr && iter >= 23 && iter <= 28) {
            Vec wdx = ctx.apply_w_all(sc, stc.dx, WOp::W);
            Vec wds = ctx.apply_w_all(sc, stc.ds, WOp::WinvT);
            for (std::size_t k = 0; k < p.blocks.size(); ++k) {
                const auto& blk = p.blocks[k];
                if (blk.kind == ConeKind::free_cone) continue;
                double ax = step_to_boundary(blk, sc[k], Vec(wdx.segment(blk.offset, blk.len)));
                double as = step_to_boundary(blk, sc[k], Vec(wds.segment(blk.offset, blk.len)));
                if (std::min(ax, as) < 2 * amax) {
                    double lmin = sc[k].lambda.size() ? sc[k].lambda.minCoeff() : 0;
                    std::fprintf(stderr,
                                 "blk %zu kind %d iter %d ax %.2e as %.2e lambda_min %.2e mu %.2e\n",
                                 k, (int)blk.kind, iter, ax, as, lmin, mu);
                }
            }
            std::fprintf(stderr, "  tau %.2e kappa %.2e amax %.2e sigma %.2e\n", tau, kappa, amax, sigma);
        }
        const double alpha = std::min(1.0, opts.step_fraction * amax);
        if (alpha < 1e-10) {
            if (++consecutive_tiny_steps >= 8) {
                sol.status = SolveStatus::numerical;
                break;
            }
        } else {
            consecutive_tiny_steps = 0;
        }

        x += alpha * stc.dx;
        y += alpha * stc.dy;
        s += alpha * stc.ds;
        tau += alpha * dtau_c;
        kappa += alpha * dkappa_c;
    }

    // map the dual back to the original row space when presolve dropped rows
    if (row_reduced) {
        Vec yfull = Vec::Zero(problem0.num_rows());
        for (std::size_t i = 0; i < kept_rows.size(); ++i) yfull[kept_rows[i]] = sol.y[static_cast<int>(i)];
        sol.y = yfull;
    }
    return sol;
}

// ---- LP helpers -------------------------------------------------------------

namespace {

ConicProblem make_lp(const Vec& c, const Mat& A, const Vec& b, const std::vector<bool>* free_mask) {
    ConeProgramBuilder bld;
    const int n = static_cast<int>(c.size());
    // contiguous runs of identical kind become one block
    int i = 0;
    while (i < n) {
        const bool f = free_mask != nullptr && (*free_mask)[i];
        int j = i;
        while (j < n && (free_mask != nullptr && (*free_mask)[j]) == f) ++j;
        if (f)
            bld.add_free(j - i);
        else
            bld.add_nonneg(j - i);
        i = j;
    }
    for (int r = 0; r < A.rows(); ++r) {
        const int row = bld.add_row(b[r]);
        for (int col = 0; col < n; ++col) bld.add_coef(row, col, A(r, col));
    }
    for (int col = 0; col < n; ++col) bld.set_obj(col, c[col]);
    return bld.build();
}

}  // namespace

LpSolution solve_lp(const Vec& c, const Mat& A, const Vec& b, const std::vector<bool>* free_mask,
                    const SolverOptions& opts) {
    ConicProblem p = make_lp(c, A, b, free_mask);
    ConicSolutionEx cs = solve(p, opts);
    LpSolution out;
    out.status = cs.status;
    out.value = cs.primal_obj;
    out.x = cs.x;
    out.y = cs.y;
    return out;
}

LpSolution solve_lp_two_phase(const Vec& c, const Mat& A, const Vec& b,
                              const std::vector<bool>* free_mask, const SolverOptions& opts) {
    const int n = static_cast<int>(c.size());
    const int m = static_cast<int>(A.rows());
    // phase 1: min sum(a) s.t. Ax + D a = b with D = diag(sign(b))
    Mat A1(m, n + m);
    A1.leftCols(n) = A;
    A1.rightCols(m).setZero();
    for (int r = 0; r < m; ++r) A1(r, n + r) = b[r] >= 0 ? 1.0 : -1.0;
    Vec c1 = Vec::Zero(n + m);
    c1.tail(m).setOnes();
    std::vector<bool> mask1(n + m, false);
    if (free_mask != nullptr)
        for (int i = 0; i < n; ++i) mask1[i] = (*free_mask)[i];
    LpSolution ph1 = solve_lp(c1, A1, b, &mask1, opts);
    const double scale = 1.0 + b.cwiseAbs().sum();
    if (ph1.status != SolveStatus::optimal) {
        LpSolution out;
        out.status = ph1.status == SolveStatus::max_iter ? SolveStatus::max_iter : SolveStatus::numerical;
        return out;
    }
    if (ph1.value > 1e-7 * scale) {
        LpSolution out;
        out.status = SolveStatus::infeasible;
        return out;
    }
    return solve_lp(c, A, b, free_mask, opts);
}

std::string dump_problem_json(const ConicProblem& p) {
    nlohmann::json j;
    j["c"] = std::vector<double>(p.c.data(), p.c.data() + p.c.size());
    j["b"] = std::vector<double>(p.b.data(), p.b.data() + p.b.size());
    j["obj_offset"] = p.obj_offset;
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& blk : p.blocks) {
        const char* kind = blk.kind == ConeKind::free_cone  ? "free"
                           : blk.kind == ConeKind::nonneg   ? "nonneg"
                           : blk.kind == ConeKind::soc      ? "soc"
                                                            : "psd";
        blocks.push_back({{"kind", kind}, {"dim", blk.dim}});
    }
    j["blocks"] = blocks;
    j["comment"] =
        "min c'x s.t. A x = b, x in product of blocks; psd blocks are svec "
        "coordinates (lower triangle, column-major, off-diagonals * sqrt(2))";
    nlohmann::json trip = nlohmann::json::array();
    for (int col = 0; col < p.A.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(p.A, col); it; ++it)
            trip.push_back({it.row(), it.col(), it.value()});
    j["A_triplets"] = trip;
    return j.dump();
}

}  // namespace wasscopos
