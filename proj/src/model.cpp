#include "wasscopos/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "wasscopos/errors.hpp"
#include "wasscopos/log.hpp"

namespace wasscopos {

SupportCone SupportCone::orthant(int k) {
    if (k < 1) throw config_error("support dimension must be positive");
    return SupportCone(Kind::orthant, k, Mat());
}

SupportCone SupportCone::polyhedral(Mat P) {
    if (P.rows() < 1 || P.cols() < 1) throw config_error("polyhedral support needs a nonempty P");
    const int k = static_cast<int>(P.cols());
    return SupportCone(Kind::polyhedral, k, std::move(P));
}

SupportCone SupportCone::second_order(int k) {
    if (k < 2) throw config_error("second-order support needs dimension >= 2");
    return SupportCone(Kind::second_order, k, Mat());
}

bool SupportCone::orthant_like() const {
    if (kind_ == Kind::orthant) return true;
    if (kind_ != Kind::polyhedral) return false;
    if (P_.rows() != P_.cols()) return false;
    return P_.isIdentity(1e-14);
}

bool SupportCone::contains(const Vec& xi, double tol) const {
    if (xi.size() != dim_) return false;
    const double scale = 1.0 + xi.norm();
    switch (kind_) {
        case Kind::orthant:
            return xi.minCoeff() >= -tol * scale;
        case Kind::polyhedral:
            return (P_ * xi).minCoeff() >= -tol * scale * (1.0 + P_.cwiseAbs().maxCoeff());
        case Kind::second_order:
            return xi[0] >= xi.tail(dim_ - 1).norm() - tol * scale;
    }
    return false;
}

bool SupportCone::dual_contains(const Vec& s, double tol) const {
    if (s.size() != dim_) return false;
    const double scale = 1.0 + s.norm();
    switch (kind_) {
        case Kind::orthant:
            return s.minCoeff() >= -tol * scale;
        case Kind::second_order:
            return s[0] >= s.tail(dim_ - 1).norm() - tol * scale;
        case Kind::polyhedral: {
            // s in dual cone iff s = P' w for some w >= 0 (Farkas); decide by
            // a phase-1 least-slack LP:  min sum(a)  s.t. P' w + D a = s.
            const int p = static_cast<int>(P_.rows());
            const int k = dim_;
            Mat A(k, p + k);
            A.leftCols(p) = P_.transpose();
            A.rightCols(k).setZero();
            for (int i = 0; i < k; ++i) A(i, p + i) = s[i] >= 0 ? 1.0 : -1.0;
            Vec c = Vec::Zero(p + k);
            c.tail(k).setOnes();
            LpSolution sol = solve_lp(c, A, s);
            return sol.status == SolveStatus::optimal && sol.value <= tol * scale;
        }
    }
    return false;
}

Vec SupportCone::interior_ray() const {
    if (ray_cache_) return *ray_cache_;
    Vec ray;
    switch (kind_) {
        case Kind::orthant:
            ray = Vec::Ones(dim_);
            break;
        case Kind::second_order:
            ray = Vec::Zero(dim_);
            ray[0] = 1.0;
            break;
        case Kind::polyhedral: {
            // Chebyshev-style ray: max t s.t. P xi >= t 1, |xi_i| <= 1,
            // written with xi = xp - xm and slack variables.
            const int p = static_cast<int>(P_.rows());
            const int k = dim_;
            // vars: xp(k), xm(k), t(1), u(p), w(k); all >= 0
            // P(xp - xm) - 1 t - u = 0 ;  xp + xm + w = 1
            const int nv = 2 * k + 1 + p + k;
            Mat A = Mat::Zero(p + k, nv);
            Vec b = Vec::Zero(p + k);
            A.block(0, 0, p, k) = P_;
            A.block(0, k, p, k) = -P_;
            A.block(0, 2 * k, p, 1).setConstant(-1.0);
            A.block(0, 2 * k + 1, p, p) = -Mat::Identity(p, p);
            A.block(p, 0, k, k) = Mat::Identity(k, k);
            A.block(p, k, k, k) = Mat::Identity(k, k);
            A.block(p, 2 * k + 1 + p, k, k) = Mat::Identity(k, k);
            b.tail(k).setOnes();
            Vec c = Vec::Zero(nv);
            c[2 * k] = -1.0;
            LpSolution sol = solve_lp(c, A, b);
            if (sol.status != SolveStatus::optimal || -sol.value <= 1e-9)
                throw config_error("polyhedral support cone has empty interior");
            ray = sol.x.head(k) - sol.x.segment(k, k);
            ray /= ray.norm();
            break;
        }
    }
    ray_cache_ = ray;
    return ray;
}

Vec SupportCone::sample_point(Rng& rng) const {
    switch (kind_) {
        case Kind::orthant: {
            Vec v(dim_);
            for (int i = 0; i < dim_; ++i) v[i] = std::abs(rng.gaussian());
            return v;
        }
        case Kind::second_order: {
            Vec v(dim_);
            double nrm = 0;
            for (int i = 1; i < dim_; ++i) {
                v[i] = rng.gaussian();
                nrm += v[i] * v[i];
            }
            nrm = std::sqrt(nrm);
            const double t = std::abs(rng.gaussian()) + 1e-12;
            const double rho = rng.uniform01();
            if (nrm > 0) v.tail(dim_ - 1) *= t * rho / nrm;
            v[0] = t;
            return v;
        }
        case Kind::polyhedral: {
            const double pscale = 1.0 + P_.cwiseAbs().maxCoeff();
            for (int attempt = 0; attempt < 200; ++attempt) {
                Vec v(dim_);
                for (int i = 0; i < dim_; ++i) v[i] = rng.gaussian();
                v.normalize();
                if ((P_ * v).minCoeff() >= 0) return v;
            }
            // narrow cone: shrink gaussian noise around an interior ray
            Vec center = interior_ray();
            double sigma = 0.5;
            for (;;) {
                for (int attempt = 0; attempt < 50; ++attempt) {
                    Vec v = center;
                    for (int i = 0; i < dim_; ++i) v[i] += sigma * rng.gaussian();
                    if ((P_ * v).minCoeff() >= -1e-15 * pscale && v.norm() > 1e-12) return v / v.norm();
                }
                sigma *= 0.5;
                if (sigma < 1e-12) return center;
            }
        }
    }
    return Vec::Zero(dim_);
}

Vec SupportCone::sample_dual_point(Rng& rng) const {
    switch (kind_) {
        case Kind::orthant:
        case Kind::second_order:
            return sample_point(rng);  // self-dual
        case Kind::polyhedral: {
            Vec w(P_.rows());
            for (int i = 0; i < w.size(); ++i) w[i] = std::abs(rng.gaussian());
            Vec s = P_.transpose() * w;
            const double nrm = s.norm();
            return nrm > 1e-12 ? Vec(s / nrm) : s;
        }
    }
    return Vec::Zero(dim_);
}

void Dataset::validate() const {
    if (samples.empty()) throw config_error("dataset is empty");
    for (const auto& s : samples) {
        if (s.size() != k) throw config_error("dataset sample dimension differs from k");
        if (std::abs(s[0] - 1.0) > 1e-12) throw config_error("dataset sample is not homogenized (xi_1 != 1)");
    }
}

void MixedBinaryProgram::validate() const {
    std::ostringstream oss;
    if (A.rows() != b.size()) {
        oss << "A has " << A.rows() << " rows but b has " << b.size();
        throw config_error(oss.str());
    }
    if (F.rows() != A.cols()) {
        oss << "F has " << F.rows() << " rows but A has " << A.cols() << " columns";
        throw config_error(oss.str());
    }
    if (support.dim() != F.cols()) {
        oss << "support dimension " << support.dim() << " differs from F column count " << F.cols();
        throw config_error(oss.str());
    }
    for (std::size_t i = 0; i < binary_set.size(); ++i) {
        if (binary_set[i] < 0 || binary_set[i] >= n()) throw config_error("binary index out of range");
        if (i > 0 && binary_set[i] <= binary_set[i - 1]) throw config_error("binary_set must be sorted and unique");
    }
}

void MixedBinaryProgram::assert_bounded(const SolverOptions& opts) const {
    // nonemptiness via phase-1
    Vec c0 = Vec::Zero(n());
    LpSolution feas = solve_lp_two_phase(c0, A, b, nullptr, opts);
    if (feas.status == SolveStatus::infeasible) throw config_error("feasible set X is empty");
    if (feas.status != SolveStatus::optimal) throw solver_error("feasibility check did not converge");
    // trivial recession cone:  max e'd  s.t.  A d = 0, 0 <= d <= 1  has value 0
    const int nn = n();
    Mat Ar = Mat::Zero(m() + nn, 2 * nn);
    Ar.topLeftCorner(m(), nn) = A;
    Ar.bottomLeftCorner(nn, nn) = Mat::Identity(nn, nn);
    Ar.bottomRightCorner(nn, nn) = Mat::Identity(nn, nn);
    Vec br = Vec::Zero(m() + nn);
    br.tail(nn).setOnes();
    Vec cr = Vec::Zero(2 * nn);
    cr.head(nn).setConstant(-1.0);
    LpSolution rec = solve_lp(cr, Ar, br, nullptr, opts);
    if (rec.status != SolveStatus::optimal) throw solver_error("recession check did not converge");
    if (-rec.value > 1e-6 * nn) throw config_error("feasible set X is unbounded");
}

HomogenizedData homogenize(const MixedBinaryProgram& prog, const Dataset& samples) {
    prog.validate();
    samples.validate();
    const int k = prog.k(), n = prog.n(), m = prog.m();
    if (samples.k != k) {
        std::ostringstream oss;
        oss << "dataset dimension " << samples.k << " does not match F column count " << k;
        throw config_error(oss.str());
    }

    HomogenizedData h;
    h.k = k;
    h.n = n;
    h.m = m;

    h.E = Mat::Zero(m, k + n);
    h.E.col(0) = -prog.b;
    h.E.rightCols(n) = prog.A;

    h.g1 = Vec::Zero(k + n);
    h.g1[0] = 1.0;

    h.H_const = Mat::Zero(k + n, k + n);
    h.H_const.topRightCorner(k, n) = 0.5 * prog.F.transpose();
    h.H_const.bottomLeftCorner(n, k) = 0.5 * prog.F;

    for (int j : prog.binary_set) {
        Mat q = Mat::Zero(k + n, k + n);
        q(k + j, k + j) = 1.0;
        q(k + j, 0) -= 0.5;
        q(0, k + j) -= 0.5;
        h.Q.push_back(std::move(q));
    }

    for (const auto& xi : samples.samples) {
        Mat B = Mat::Identity(k, k);
        B -= xi * Vec::Unit(k, 0).transpose();
        B -= Vec::Unit(k, 0) * xi.transpose();
        B += xi.squaredNorm() * Vec::Unit(k, 0) * Vec::Unit(k, 0).transpose();
        Mat K = Mat::Zero(k + n, k + n);
        K.topLeftCorner(k, k) = -B;
        h.K.push_back(std::move(K));
    }
    return h;
}

MixedBinaryProgram enforce_binary_bounds(const MixedBinaryProgram& prog, bool implied) {
    prog.validate();
    MixedBinaryProgram out = prog;
    if (prog.bounds_enforced || implied || prog.binary_set.empty()) {
        out.bounds_enforced = true;
        return out;
    }
    const int nb = static_cast<int>(prog.binary_set.size());
    const int n = prog.n(), m = prog.m(), k = prog.k();
    out.A = Mat::Zero(m + nb, n + nb);
    out.A.topLeftCorner(m, n) = prog.A;
    for (int i = 0; i < nb; ++i) {
        out.A(m + i, prog.binary_set[i]) = 1.0;
        out.A(m + i, n + i) = 1.0;
    }
    out.b = Vec::Zero(m + nb);
    out.b.head(m) = prog.b;
    out.b.tail(nb).setOnes();
    out.F = Mat::Zero(n + nb, k);
    out.F.topRows(n) = prog.F;
    out.bounds_enforced = true;
    return out;
}

namespace {

// Best continuous completion for one binary assignment; returns the value of
// the residual problem or nothing when infeasible.
std::optional<DeterministicSolution> residual_solve(const Mat& A, const Vec& rhs, const Vec& obj,
                                                    const SolverOptions& opts) {
    const int nc = static_cast<int>(A.cols());
    const int m = static_cast<int>(A.rows());
    const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
    if (nc == 0) {
        if (rhs.cwiseAbs().maxCoeff() > 1e-8 * scale) return std::nullopt;
        return DeterministicSolution{0.0, Vec()};
    }
    if (nc == m) {
        Eigen::FullPivLU<Mat> lu(A);
        lu.setThreshold(1e-9);
        if (lu.rank() == nc) {
            Vec x = lu.solve(rhs);
            if ((A * x - rhs).cwiseAbs().maxCoeff() > 1e-8 * scale) return std::nullopt;
            if (x.minCoeff() < -1e-8) return std::nullopt;
            return DeterministicSolution{obj.dot(x), x};
        }
    }
    LpSolution sol = solve_lp_two_phase(-obj, A, rhs, nullptr, opts);
    if (sol.status == SolveStatus::infeasible) return std::nullopt;
    if (sol.status == SolveStatus::unbounded)
        throw config_error("scenario problem is unbounded; Assumption of bounded X violated");
    if (sol.status != SolveStatus::optimal) throw solver_error("residual LP did not converge");
    return DeterministicSolution{-sol.value, sol.x.head(nc)};
}

}  // namespace

DeterministicSolution solve_deterministic(const MixedBinaryProgram& prog, const Vec& xi,
                                          const SolverOptions& opts) {
    prog.validate();
    if (xi.size() != prog.k()) throw config_error("scenario vector has wrong dimension");
    if (std::abs(xi[0] - 1.0) > 1e-9) throw config_error("scenario vector must have xi_1 = 1");
    const Vec obj = prog.F * xi;
    const int n = prog.n();

    if (prog.binary_set.empty()) {
        LpSolution sol = solve_lp(-obj, prog.A, prog.b, nullptr, opts);
        if (sol.status != SolveStatus::optimal) {
            sol = solve_lp_two_phase(-obj, prog.A, prog.b, nullptr, opts);
            if (sol.status == SolveStatus::infeasible) throw config_error("feasible set X is empty");
            if (sol.status == SolveStatus::unbounded)
                throw config_error("scenario problem is unbounded; Assumption of bounded X violated");
            if (sol.status != SolveStatus::optimal) throw solver_error("scenario LP did not converge");
        }
        return {-sol.value, sol.x};
    }

    const int nb = static_cast<int>(prog.binary_set.size());
    if (nb > 25) throw config_error("binary enumeration limited to 25 variables");

    std::vector<int> cont;
    std::vector<char> is_binary(n, 0);
    for (int j : prog.binary_set) is_binary[j] = 1;
    for (int j = 0; j < n; ++j)
        if (!is_binary[j]) cont.push_back(j);

    Mat Ac(prog.m(), static_cast<int>(cont.size()));
    Vec objc(static_cast<int>(cont.size()));
    for (std::size_t i = 0; i < cont.size(); ++i) {
        Ac.col(static_cast<int>(i)) = prog.A.col(cont[i]);
        objc[static_cast<int>(i)] = obj[cont[i]];
    }

    bool found = false;
    DeterministicSolution best;
    best.value = -std::numeric_limits<double>::infinity();
    for (std::uint32_t bits = 0; bits < (1u << nb); ++bits) {
        Vec rhs = prog.b;
        double base = 0.0;
        for (int i = 0; i < nb; ++i) {
            if (bits & (1u << i)) {
                rhs -= prog.A.col(prog.binary_set[i]);
                base += obj[prog.binary_set[i]];
            }
        }
        auto res = residual_solve(Ac, rhs, objc, opts);
        if (!res) continue;
        const double value = base + res->value;
        if (!found || value > best.value) {
            found = true;
            best.value = value;
            best.x = Vec::Zero(n);
            for (int i = 0; i < nb; ++i)
                if (bits & (1u << i)) best.x[prog.binary_set[i]] = 1.0;
            for (std::size_t i = 0; i < cont.size(); ++i) best.x[cont[i]] = res->x.size() > 0 ? res->x[static_cast<int>(i)] : 0.0;
        }
    }
    if (!found) throw config_error("feasible set X is empty");
    return best;
}

}  // namespace wasscopos
