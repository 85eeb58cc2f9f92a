#pragma once

#include <vector>

#include "wasscopos/model.hpp"

namespace wasscopos {

// Finitely supported distribution on the homogenized uncertainty space.
struct DiscreteDistribution {
    std::vector<Vec> atoms;  // each with leading coordinate 1
    Vec weights;             // nonnegative, summing to 1

    int size() const { return static_cast<int>(atoms.size()); }
    void validate() const;
};

// Uniform empirical distribution over the dataset samples; duplicates stay
// distinct atoms.
DiscreteDistribution empirical(const Dataset& dataset);

// Exact 2-Wasserstein distance via the transportation LP with squared
// Euclidean costs.
double wasserstein2(const DiscreteDistribution& q, const DiscreteDistribution& qp,
                    const SolverOptions& opts = {});

}  // namespace wasscopos
