#include "wasscopos/cones.hpp"

#include <cmath>

#include "wasscopos/errors.hpp"

namespace wasscopos {

Mat SymAffine::value(const Vec& x) const {
    Mat g = constant;
    for (const auto& [var, coeff] : terms) g += x[var] * coeff;
    return g;
}

namespace {

// index of entry (i, j), i >= j, when symmetric entries are stored in the
// same lower-triangle column-major order as svec but unscaled
int tri_index(int d, int i, int j) { return svec_index(d, i, j); }

}  // namespace

namespace {

// full-space symmetric shape matrix contributed by one certificate variable
std::vector<std::pair<int, Mat>> certificate_shapes(const MembershipHandle& h, const Mat& P) {
    const int k = h.k, n = h.n, dim = h.dim;
    std::vector<std::pair<int, Mat>> shapes;
    auto unit = [&](int a, int b) {
        Mat e = Mat::Zero(dim, dim);
        e(a, b) = 1.0;
        e(b, a) = 1.0;
        return e;
    };
    if (h.orthant_like) {
        for (int b = 0; b < dim; ++b)
            for (int a = b; a < dim; ++a)
                shapes.emplace_back(h.S_offset + svec_index(dim, a, b), unit(a, b));
        return shapes;
    }
    if (h.kind == SupportCone::Kind::polyhedral) {
        for (int f = 0; f < h.p; ++f) {
            for (int e = f; e < h.p; ++e) {
                Mat s = Mat::Zero(dim, dim);
                Mat y = Mat::Zero(h.p, h.p);
                y(e, f) = 1.0;
                y(f, e) = 1.0;
                s.topLeftCorner(k, k) = P.transpose() * y * P;
                shapes.emplace_back(h.Y_offset + svec_index(h.p, e, f), std::move(s));
            }
        }
        for (int j = 0; j < n; ++j)
            for (int c = 0; c < h.p; ++c) {
                Mat s = Mat::Zero(dim, dim);
                s.row(k + j).head(k) = P.row(c);
                s.col(k + j).head(k) = P.row(c).transpose();
                shapes.emplace_back(h.W_offset + j * h.p + c, std::move(s));
            }
        for (int b = 0; b < n; ++b)
            for (int a = b; a < n; ++a)
                shapes.emplace_back(h.S22_offset + svec_index(n, a, b), unit(k + a, k + b));
        return shapes;
    }
    // second-order
    {
        Mat j = Mat::Zero(dim, dim);
        for (int i = 0; i < k; ++i) j(i, i) = i == 0 ? 1.0 : -1.0;
        shapes.emplace_back(h.tau_offset, std::move(j));
    }
    for (int t = 0; t < svec_len(k); ++t) {
        Vec e = Vec::Unit(svec_len(k), t);
        Mat s = Mat::Zero(dim, dim);
        s.topLeftCorner(k, k) = smat(e, k);
        shapes.emplace_back(h.M11_offset + t, std::move(s));
    }
    for (int j = 0; j < n; ++j)
        for (int b = 0; b < k; ++b) shapes.emplace_back(h.S21_offset + j * k + b, unit(k + j, b));
    for (int b = 0; b < n; ++b)
        for (int a = b; a < n; ++a)
            shapes.emplace_back(h.S22_offset + svec_index(n, a, b), unit(k + a, k + b));
    return shapes;
}

void allocate_certificates(ConeProgramBuilder& bld, MembershipHandle& h,
                           const SupportCone& support) {
    const int k = h.k, n_x = h.n, dim = h.dim;
    if (h.orthant_like) {
        h.S_offset = bld.add_nonneg(svec_len(dim));
        return;
    }
    if (support.kind() == SupportCone::Kind::polyhedral) {
        h.p = static_cast<int>(support.P().rows());
        h.Y_offset = bld.add_nonneg(svec_len(h.p));
        if (n_x > 0) {
            h.W_offset = bld.add_nonneg(n_x * h.p);
            h.S22_offset = bld.add_nonneg(svec_len(n_x));
        }
        return;
    }
    if (support.kind() == SupportCone::Kind::second_order) {
        h.tau_offset = bld.add_nonneg(1);
        h.M11_offset = bld.add_psd(k);
        if (n_x > 0) {
            h.S21_offset = bld.add_soc(k);
            for (int j = 1; j < n_x; ++j) bld.add_soc(k);
            h.S22_offset = bld.add_nonneg(svec_len(n_x));
        }
        return;
    }
    throw internal_error("unsupported cone variant");
}

MembershipHandle emit_membership_reduced(ConeProgramBuilder& bld, const SymAffine& target,
                                         const SupportCone& support, int n_x, const Mat& V) {
    const int k = support.dim();
    const int dim = k + n_x;
    if (target.dim != dim) throw internal_error("membership target dimension mismatch");
    if (V.rows() != dim || V.cols() < 1 || V.cols() > dim)
        throw internal_error("reduction basis has wrong shape");
    const int q = static_cast<int>(V.cols());

    MembershipHandle h;
    h.dim = dim;
    h.k = k;
    h.n = n_x;
    h.kind = support.kind();
    h.orthant_like = support.orthant_like();
    h.reduce_basis = V;

    h.M_offset = bld.add_psd(q);
    allocate_certificates(bld, h, support);

    auto shapes = certificate_shapes(h, support.P());
    std::vector<std::pair<int, Mat>> proj;
    proj.reserve(shapes.size());
    for (auto& [var, s] : shapes) proj.emplace_back(var, Mat(V.transpose() * s * V));

    Mat const_r = V.transpose() * target.constant * V;
    std::vector<std::pair<int, Mat>> terms_r;
    for (const auto& [var, coeff] : target.terms)
        terms_r.emplace_back(var, Mat(V.transpose() * coeff * V));

    for (int d = 0; d < q; ++d) {
        for (int c = d; c < q; ++c) {
            const int row = bld.add_row(-const_r(c, d));
            for (const auto& [var, coeff] : terms_r) bld.add_coef(row, var, coeff(c, d));
            bld.add_psd_entry_coef(row, h.M_offset, q, c, d, -1.0);
            for (const auto& [var, s] : proj) bld.add_coef(row, var, -s(c, d));
        }
    }
    return h;
}

}  // namespace

MembershipHandle emit_membership(ConeProgramBuilder& bld, const SymAffine& target,
                                 const SupportCone& support, int n_x, const Mat* reduce_basis) {
    if (reduce_basis != nullptr)
        return emit_membership_reduced(bld, target, support, n_x, *reduce_basis);
    const int k = support.dim();
    const int dim = k + n_x;
    if (target.dim != dim) throw internal_error("membership target dimension mismatch");
    for (const auto& [var, coeff] : target.terms)
        if (coeff.rows() != dim || coeff.cols() != dim)
            throw internal_error("membership coefficient dimension mismatch");

    MembershipHandle h;
    h.dim = dim;
    h.k = k;
    h.n = n_x;
    h.kind = support.kind();
    h.orthant_like = support.orthant_like();

    h.M_offset = bld.add_psd(dim);
    allocate_certificates(bld, h, support);

    const Mat& P = support.P();
    for (int b = 0; b < dim; ++b) {
        for (int a = b; a < dim; ++a) {
            const int row = bld.add_row(-target.constant(a, b));
            for (const auto& [var, coeff] : target.terms) bld.add_coef(row, var, coeff(a, b));
            bld.add_psd_entry_coef(row, h.M_offset, dim, a, b, -1.0);

            if (h.orthant_like) {
                bld.add_coef(row, h.S_offset + tri_index(dim, a, b), -1.0);
                continue;
            }
            if (h.kind == SupportCone::Kind::polyhedral) {
                if (a < k) {
                    // xi-block: S11 = P' Y P
                    for (int c = 0; c < h.p; ++c) {
                        for (int d = 0; d <= c; ++d) {
                            double coef = c == d ? P(c, a) * P(c, b)
                                                 : P(c, a) * P(d, b) + P(d, a) * P(c, b);
                            bld.add_coef(row, h.Y_offset + tri_index(h.p, c, d), -coef);
                        }
                    }
                } else if (b < k) {
                    // cross block: S21(a-k, :) = W(a-k, :) P
                    const int j = a - k;
                    for (int c = 0; c < h.p; ++c)
                        bld.add_coef(row, h.W_offset + j * h.p + c, -P(c, b));
                } else {
                    bld.add_coef(row, h.S22_offset + tri_index(n_x, a - k, b - k), -1.0);
                }
            } else {  // second-order
                if (a < k) {
                    // S11 = tau J + M11, J = Diag(1, -1, ..., -1)
                    if (a == b) bld.add_coef(row, h.tau_offset, a == 0 ? -1.0 : 1.0);
                    bld.add_psd_entry_coef(row, h.M11_offset, k, a, b, -1.0);
                } else if (b < k) {
                    bld.add_coef(row, h.S21_offset + (a - k) * k + b, -1.0);
                } else {
                    bld.add_coef(row, h.S22_offset + tri_index(n_x, a - k, b - k), -1.0);
                }
            }
        }
    }
    return h;
}

namespace {

Mat tri_to_sym(const Vec& x, int offset, int d) {
    Mat s(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = j; i < d; ++i) {
            s(i, j) = x[offset + tri_index(d, i, j)];
            s(j, i) = s(i, j);
        }
    return s;
}

}  // namespace

IADecomposition extract_decomposition(const MembershipHandle& h, const Vec& x,
                                      const SupportCone& support) {
    IADecomposition d;
    d.kind = h.kind;
    d.orthant_like = h.orthant_like;
    d.k = h.k;
    d.n = h.n;
    if (h.reduce_basis.size() > 0) {
        const int q = static_cast<int>(h.reduce_basis.cols());
        Mat mred = smat(x.segment(h.M_offset, svec_len(q)), q);
        d.M = h.reduce_basis * mred * h.reduce_basis.transpose();
    } else {
        d.M = smat(x.segment(h.M_offset, svec_len(h.dim)), h.dim);
    }

    if (h.orthant_like) {
        Mat s = tri_to_sym(x, h.S_offset, h.dim);
        d.S11 = s.topLeftCorner(h.k, h.k);
        d.S21 = h.n > 0 ? Mat(s.bottomLeftCorner(h.n, h.k)) : Mat::Zero(0, h.k);
        d.S22 = h.n > 0 ? Mat(s.bottomRightCorner(h.n, h.n)) : Mat::Zero(0, 0);
        d.Y = d.S11;  // with P = I the RLT certificate is S11 itself
        d.W = d.S21;
        return d;
    }
    if (h.kind == SupportCone::Kind::polyhedral) {
        d.Y = tri_to_sym(x, h.Y_offset, h.p);
        d.W = Mat::Zero(h.n, h.p);
        for (int j = 0; j < h.n; ++j)
            for (int c = 0; c < h.p; ++c) d.W(j, c) = x[h.W_offset + j * h.p + c];
        d.S22 = h.n > 0 ? tri_to_sym(x, h.S22_offset, h.n) : Mat::Zero(0, 0);
        d.S11 = support.P().transpose() * d.Y * support.P();
        d.S21 = d.W * support.P();
        return d;
    }
    d.tau = x[h.tau_offset];
    d.M11 = smat(x.segment(h.M11_offset, svec_len(h.k)), h.k);
    Mat J = -Mat::Identity(h.k, h.k);
    J(0, 0) = 1.0;
    d.S11 = d.tau * J + d.M11;
    d.S21 = Mat::Zero(h.n, h.k);
    for (int j = 0; j < h.n; ++j) d.S21.row(j) = x.segment(h.S21_offset + j * h.k, h.k).transpose();
    d.S22 = h.n > 0 ? tri_to_sym(x, h.S22_offset, h.n) : Mat::Zero(0, 0);
    return d;
}

Mat IADecomposition::s_matrix() const {
    const int dim = k + n;
    Mat s = Mat::Zero(dim, dim);
    s.topLeftCorner(k, k) = S11;
    if (n > 0) {
        s.bottomLeftCorner(n, k) = S21;
        s.topRightCorner(k, n) = S21.transpose();
        s.bottomRightCorner(n, n) = S22;
    }
    return s;
}

Mat IADecomposition::reconstruct() const { return s_matrix() + M; }

bool IADecomposition::verify_memberships(const SupportCone& support, double tol) const {
    const double mtol = tol * (1.0 + M.cwiseAbs().maxCoeff());
    if (min_eigenvalue(M) < -mtol) return false;
    if (n > 0 && S22.size() > 0 && S22.minCoeff() < -tol * (1.0 + S22.cwiseAbs().maxCoeff()))
        return false;
    if (orthant_like) {
        if (S11.size() > 0 && S11.minCoeff() < -tol * (1.0 + S11.cwiseAbs().maxCoeff())) return false;
        if (S21.size() > 0 && S21.minCoeff() < -tol * (1.0 + S21.cwiseAbs().maxCoeff())) return false;
        return true;
    }
    if (kind == SupportCone::Kind::polyhedral) {
        if (Y.size() > 0 && Y.minCoeff() < -tol * (1.0 + Y.cwiseAbs().maxCoeff())) return false;
        if (W.size() > 0 && W.minCoeff() < -tol * (1.0 + W.cwiseAbs().maxCoeff())) return false;
        return true;
    }
    if (tau < -tol) return false;
    if (min_eigenvalue(M11) < -tol * (1.0 + M11.cwiseAbs().maxCoeff())) return false;
    for (int j = 0; j < n; ++j) {
        Vec row = S21.row(j).transpose();
        if (!support.dual_contains(row, tol)) return false;
    }
    return true;
}

SpotCheckResult copositivity_spot_check(const Mat& G, const SupportCone& support, int n_x,
                                        int trials, double tol, Rng& rng) {
    if (trials < 1) throw config_error("spot check needs at least one trial");
    const int k = support.dim();
    if (G.rows() != k + n_x) throw internal_error("spot check dimension mismatch");
    const double gnorm = G.norm();
    SpotCheckResult res;
    res.pass = true;
    res.worst = std::numeric_limits<double>::infinity();
    Vec z(k + n_x);
    for (int t = 0; t < trials; ++t) {
        z.head(k) = support.sample_point(rng);
        for (int i = 0; i < n_x; ++i) z[k + i] = std::abs(rng.gaussian());
        const double nrm = z.norm();
        if (nrm < 1e-12) continue;
        z /= nrm;
        const double v = z.dot(G * z);
        res.worst = std::min(res.worst, v);
        if (v < -tol * (1.0 + gnorm)) res.pass = false;
    }
    return res;
}

}  // namespace wasscopos
