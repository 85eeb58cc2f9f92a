#include "wasscopos/transport.hpp"

#include <cmath>

#include "wasscopos/errors.hpp"

namespace wasscopos {

void DiscreteDistribution::validate() const {
    if (atoms.empty()) throw config_error("distribution has no atoms");
    if (weights.size() != size()) throw config_error("weights and atoms differ in count");
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw config_error("weights do not sum to 1");
    if (weights.minCoeff() < 0) throw config_error("weights must be nonnegative");
    const auto dim = atoms.front().size();
    for (const auto& a : atoms) {
        if (a.size() != dim) throw config_error("atoms differ in dimension");
        if (std::abs(a[0] - 1.0) > 1e-9) throw config_error("atom is not homogenized (xi_1 != 1)");
    }
}

DiscreteDistribution empirical(const Dataset& dataset) {
    dataset.validate();
    DiscreteDistribution d;
    d.atoms = dataset.samples;
    d.weights = Vec::Constant(dataset.size(), 1.0 / dataset.size());
    return d;
}

double wasserstein2(const DiscreteDistribution& q, const DiscreteDistribution& qp,
                    const SolverOptions& opts) {
    q.validate();
    qp.validate();
    if (q.atoms.front().size() != qp.atoms.front().size())
        throw config_error("distributions live in different dimensions");

    const int M = q.size(), Mp = qp.size();
    // transportation LP: min sum c_ij pi_ij with marginal equalities; one
    // marginal row is redundant and dropped by the solver presolve
    Vec c(M * Mp);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < Mp; ++j) c[i * Mp + j] = (q.atoms[i] - qp.atoms[j]).squaredNorm();

    Mat A = Mat::Zero(M + Mp, M * Mp);
    Vec b(M + Mp);
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < Mp; ++j) A(i, i * Mp + j) = 1.0;
        b[i] = q.weights[i];
    }
    for (int j = 0; j < Mp; ++j) {
        for (int i = 0; i < M; ++i) A(M + j, i * Mp + j) = 1.0;
        b[M + j] = qp.weights[j];
    }

    LpSolution sol = solve_lp(c, A, b, nullptr, opts);
    if (sol.status != SolveStatus::optimal)
        throw internal_error("transportation LP did not reach optimality");
    return std::sqrt(std::max(0.0, sol.value));
}

}  // namespace wasscopos
