#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "wasscopos/errors.hpp"
#include "wasscopos/linalg.hpp"

namespace wasscopos {

enum class ConeKind { free_cone, nonneg, soc, psd };

struct ConeBlock {
    ConeKind kind;
    int dim;     // entries for free/nonneg, vector length for soc, matrix order for psd
    int offset;  // first coordinate in x
    int len;     // coordinates occupied (svec length for psd)
};

// Block-angular shape: equality rows split into groups whose variables are
// disjoint except for a few coupling variables shared by all groups. The
// interior-point solver exploits this in the Schur complement.
struct BlockAngularStructure {
    struct Group {
        int row_begin, row_end;  // half-open
        int var_begin, var_end;  // half-open, contiguous by construction
    };
    std::vector<Group> groups;
    std::vector<int> coupling_vars;  // coordinates outside every group range
};

// Standard-form cone program: min c'x  s.t.  A x = b,  x in K,
// K a product of free, nonnegative, second-order, and PSD blocks.
// PSD blocks are stored in svec coordinates (off-diagonals scaled by
// sqrt(2)) so that plain dot products are trace inner products.
struct ConicProblem {
    Vec c;
    Eigen::SparseMatrix<double> A;
    Vec b;
    std::vector<ConeBlock> blocks;
    double obj_offset = 0.0;
    std::optional<BlockAngularStructure> structure;

    int num_vars() const { return static_cast<int>(c.size()); }
    int num_rows() const { return static_cast<int>(b.size()); }

    void validate() const;
};

enum class SolveStatus { optimal, infeasible, unbounded, max_iter, numerical };

const char* status_name(SolveStatus s);

struct ConicSolution {
    SolveStatus status = SolveStatus::numerical;
    Vec x, y, s;
    double primal_obj = 0.0, dual_obj = 0.0;
    double primal_res = 0.0, dual_res = 0.0;  // absolute norms
    double rel_gap = 0.0;
    double complementarity = 0.0;  // <x,s>/degree
    int iterations = 0;

    bool certified() const { return status == SolveStatus::optimal; }
};

// Incremental construction of a ConicProblem. Variables are appended block
// by block; equality rows accumulate sparse coefficients. Matrix-entry
// helpers take care of the svec scaling for PSD blocks.
class ConeProgramBuilder {
public:
    int add_free(int n) { return add_block(ConeKind::free_cone, n, n); }
    int add_nonneg(int n) { return add_block(ConeKind::nonneg, n, n); }
    int add_soc(int dim) { return add_block(ConeKind::soc, dim, dim); }
    int add_psd(int dim) { return add_block(ConeKind::psd, dim, svec_len(dim)); }

    int add_row(double rhs) {
        rhs_.push_back(rhs);
        return static_cast<int>(rhs_.size()) - 1;
    }

    void add_coef(int row, int var, double coef) {
        if (coef != 0.0) triplets_.emplace_back(row, var, coef);
    }

    // Coefficient `coef` multiplying matrix entry (i, j) of a PSD block.
    // The contribution of the symmetric pair (i,j)/(j,i) must be passed as a
    // single call with the total coefficient on the (i, j) entry alone being
    // doubled by the caller when it means coef * (X_ij + X_ji).
    void add_psd_entry_coef(int row, int psd_offset, int dim, int i, int j, double coef) {
        const int idx = psd_offset + svec_index(dim, i, j);
        add_coef(row, idx, i == j ? coef : coef / kSqrt2);
    }

    void set_obj(int var, double coef) {
        obj_.resize(std::max<std::size_t>(obj_.size(), var + 1), 0.0);
        obj_[var] = coef;
    }

    void add_obj_offset(double v) { obj_offset_ += v; }

    int num_vars() const { return nvar_; }
    int num_rows() const { return static_cast<int>(rhs_.size()); }

    void begin_group() {
        group_row_begin_ = num_rows();
        group_var_begin_ = nvar_;
    }

    void end_group() {
        structure_.groups.push_back({group_row_begin_, num_rows(), group_var_begin_, nvar_});
    }

    ConicProblem build(bool with_structure = false) {
        ConicProblem p;
        p.c = Vec::Zero(nvar_);
        for (std::size_t i = 0; i < obj_.size(); ++i) p.c[static_cast<int>(i)] = obj_[i];
        p.b = Eigen::Map<const Vec>(rhs_.data(), static_cast<int>(rhs_.size()));
        p.A.resize(num_rows(), nvar_);
        p.A.setFromTriplets(triplets_.begin(), triplets_.end());
        p.blocks = blocks_;
        p.obj_offset = obj_offset_;
        if (with_structure) {
            structure_.coupling_vars = coupling_vars();
            p.structure = structure_;
        }
        p.validate();
        return p;
    }

private:
    int add_block(ConeKind kind, int dim, int len) {
        if (dim <= 0) throw internal_error("cone block dimension must be positive");
        blocks_.push_back({kind, dim, nvar_, len});
        nvar_ += len;
        return blocks_.back().offset;
    }

    std::vector<int> coupling_vars() const {
        std::vector<int> out;
        for (int v = 0; v < nvar_; ++v) {
            bool in_group = false;
            for (const auto& g : structure_.groups) {
                if (v >= g.var_begin && v < g.var_end) {
                    in_group = true;
                    break;
                }
            }
            if (!in_group) out.push_back(v);
        }
        return out;
    }

    int nvar_ = 0;
    std::vector<ConeBlock> blocks_;
    std::vector<Eigen::Triplet<double>> triplets_;
    std::vector<double> rhs_;
    std::vector<double> obj_;
    double obj_offset_ = 0.0;
    BlockAngularStructure structure_;
    int group_row_begin_ = 0;
    int group_var_begin_ = 0;
};

}  // namespace wasscopos
