#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "wasscopos/cones.hpp"
#include "wasscopos/model.hpp"
#include "wasscopos/solver.hpp"

namespace wasscopos {

struct BoundOptions {
    SolverOptions solver;
    int spot_check_trials = 2000;
    double spot_check_tol = 1e-6;
    std::uint64_t spot_check_seed = 20240;
    bool verify_certificates = true;  // decomposition + copositivity at the optimum
    // Pose the PSD slack on null(E). The equality rows force the dual moment
    // matrices onto that subspace anyway; solving there restores strict
    // feasibility on both sides and the row multipliers u are recovered
    // afterwards. The bound stays valid and can only tighten.
    bool facial_reduction = true;
};

// Variable positions inside the assembled cone program, for extraction and
// verification of the per-sample constraints.
struct BoundModelInfo {
    int lambda_index = -1;
    std::vector<int> alpha_index;
    std::vector<int> rho_index;  // empty when no trace bound
    std::vector<int> u_offset;   // unreduced mode only
    std::vector<int> v_offset;
    std::vector<SymAffine> targets;  // without the E'Diag(u)E part in reduced mode
    std::vector<MembershipHandle> memberships;
    bool reduced = false;
    Mat null_basis;  // orthonormal basis of null(E) in reduced mode
    Mat E;
    int N = 0;
    double epsilon = 0.0;
    std::optional<double> r;
};

struct BoundResult {
    double value = 0.0;
    double lambda = 0.0;
    Vec alpha;
    Vec row_multiplier;  // recovered u scale per sample in reduced mode
    SolveStatus status = SolveStatus::numerical;
    bool certified = false;
    bool spot_check_passed = true;
    double spot_check_worst = 0.0;
    double max_decomposition_error = 0.0;
    double epsilon = 0.0;
    int N = 0;
    std::optional<double> r;
    int iterations = 0;
    double runtime_ms = 0.0;
};

// Assembles the semidefinite upper-bound program over the sample set: one
// membership constraint per sample, coupled only through lambda. When r is
// absent the rho terms and the identity summand are omitted.
ConicProblem build(const MixedBinaryProgram& prog, const Dataset& dataset, double epsilon,
                   std::optional<double> r = std::nullopt, BoundModelInfo* info = nullptr,
                   bool facial_reduction = true);

BoundResult solve_bound(const MixedBinaryProgram& prog, const Dataset& dataset, double epsilon,
                        std::optional<double> r = std::nullopt, const BoundOptions& opts = {});

// Sample average of the exact scenario optima.
double saa_value(const MixedBinaryProgram& prog, const Dataset& dataset,
                 const SolverOptions& opts = {});

}  // namespace wasscopos
