#pragma once

#include <vector>

#include "wasscopos/conic_program.hpp"
#include "wasscopos/model.hpp"
#include "wasscopos/rng.hpp"

namespace wasscopos {

// Affine symmetric-matrix expression in the scalar variables of a conic
// model: constant + sum_v x[var] * coeff_v.
struct SymAffine {
    int dim = 0;
    Mat constant;
    std::vector<std::pair<int, Mat>> terms;

    static SymAffine zero(int dim) { return {dim, Mat::Zero(dim, dim), {}}; }
    void add_term(int var, Mat coeff) { terms.emplace_back(var, std::move(coeff)); }
    Mat value(const Vec& x) const;
};

// Positions of the certificate variables created by emit_membership, enough
// to reconstruct and verify the decomposition afterwards.
struct MembershipHandle {
    int dim = 0;  // k + n
    int k = 0, n = 0;
    SupportCone::Kind kind = SupportCone::Kind::orthant;
    bool orthant_like = false;
    Mat reduce_basis;  // nonempty when the PSD slack lives on a subspace

    int M_offset = -1;  // PSD block, svec coordinates
    // orthant-like: single entrywise-nonnegative symmetric S
    int S_offset = -1;
    // general polyhedral: S11 = P'YP, S21 = WP
    int p = 0;
    int Y_offset = -1;
    int W_offset = -1;
    // second-order: S11 = tau J + M11, rows of S21 in the cone
    int tau_offset = -1;
    int M11_offset = -1;
    int S21_offset = -1;  // n consecutive soc(k) blocks
    // shared
    int S22_offset = -1;
};

// Slack decomposition G = S + M with the certificates named by the support
// kind; extracted from a solved model for verification.
struct IADecomposition {
    SupportCone::Kind kind = SupportCone::Kind::orthant;
    bool orthant_like = false;
    int k = 0, n = 0;
    Mat M;    // (k+n) PSD part
    Mat S11;  // k x k
    Mat S21;  // n x k
    Mat S22;  // n x n
    // certificates
    Mat Y;           // polyhedral
    Mat W;           // polyhedral
    double tau = 0;  // second-order
    Mat M11;         // second-order

    Mat s_matrix() const;     // the certificate part S alone
    Mat reconstruct() const;  // S + M
    // All certificate cone memberships within tol.
    bool verify_memberships(const SupportCone& support, double tol) const;
};

// Adds certificate variables and one linear equality per upper-triangle
// entry so that `target` lies in IA(support x R^n_+). For orthant-like
// supports the S11/S21 certificates degenerate to entrywise nonnegativity.
//
// With `reduce_basis` V (orthonormal columns), the PSD slack is posed on the
// subspace instead: V'(target - S)V must be PSD. Certificate variables keep
// their full-space meaning; only the matrix equality is projected. The
// emitted constraint then certifies nonnegativity of z'(target)z for cone
// points z in range(V).
MembershipHandle emit_membership(ConeProgramBuilder& bld, const SymAffine& target,
                                 const SupportCone& support, int n_x,
                                 const Mat* reduce_basis = nullptr);

IADecomposition extract_decomposition(const MembershipHandle& h, const Vec& x,
                                      const SupportCone& support);

struct SpotCheckResult {
    bool pass = false;
    double worst = 0.0;  // minimum of z'Gz over unit-norm samples
};

// Samples z in support x R^n_+ and checks z'Gz >= -tol * (1 + |G|) on
// normalized points; a probabilistic certificate, not a proof.
SpotCheckResult copositivity_spot_check(const Mat& G, const SupportCone& support, int n_x,
                                        int trials, double tol, Rng& rng);

}  // namespace wasscopos
