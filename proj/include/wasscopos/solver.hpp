#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wasscopos/conic_program.hpp"

namespace wasscopos {

struct SolverOptions {
    double feas_tol = 1e-7;  // residual tolerance, scaled by 1 + |b| + |c|
    double gap_tol = 1e-7;   // relative duality gap
    int max_iter = 200;
    double step_fraction = 0.99;
    double static_reg = 1e-11;    // KKT regularization, scaled
    bool use_structure = true;    // exploit block-angular metadata when present
    bool presolve = true;         // drop dependent equality rows (dense path)
    bool record_trace = false;    // keep per-iteration objective pairs
};

struct IterateTrace {
    double primal_obj, dual_obj, gap, primal_res, dual_res;
};

struct ConicSolutionEx : ConicSolution {
    std::vector<IterateTrace> trace;
};

// Primal-dual predictor-corrector interior-point method with Nesterov-Todd
// scaling on second-order and PSD blocks.
ConicSolutionEx solve(const ConicProblem& problem, const SolverOptions& opts = {});

// ---- LP fast path -------------------------------------------------------

struct LpSolution {
    SolveStatus status = SolveStatus::numerical;
    double value = 0.0;
    Vec x;
    Vec y;
};

// min c'x  s.t.  A x = b,  x >= 0 except coordinates marked free.
LpSolution solve_lp(const Vec& c, const Mat& A, const Vec& b,
                    const std::vector<bool>* free_mask = nullptr,
                    const SolverOptions& opts = {});

// Same problem, but infeasibility is decided by an auxiliary phase-1 LP
// (minimize total artificial slack), which is always feasible and bounded.
LpSolution solve_lp_two_phase(const Vec& c, const Mat& A, const Vec& b,
                              const std::vector<bool>* free_mask = nullptr,
                              const SolverOptions& opts = {});

// Serialize the problem in a documented standard form for cross-checking
// against external solvers.
std::string dump_problem_json(const ConicProblem& problem);

}  // namespace wasscopos
