#pragma once

#include <cstdint>
#include <vector>

#include "wasscopos/bound.hpp"
#include "wasscopos/model.hpp"

namespace wasscopos {

struct SplitPair {
    std::vector<int> train;
    std::vector<int> validation;
};

// K random (train, validation) partitions with |train| = n_train, drawn
// without replacement; reproducible from the seed.
std::vector<SplitPair> split(const Dataset& dataset, int K, int n_train, std::uint64_t seed);

struct CalibrationCurve {
    std::vector<double> grid;            // ascending radii
    std::vector<double> confidence;      // isotonic-adjusted empirical levels
    std::vector<double> confidence_raw;  // raw fractions per radius
    int K = 0;
    int n_train = 0;
    std::uint64_t seed = 0;
};

// Empirical confidence level per candidate radius: the fraction of splits
// where the trained bound covers the validation sample average. All radii
// share the same splits, which makes the raw curve monotone up to solver
// noise.
CalibrationCurve compute_curve(const MixedBinaryProgram& prog, const Dataset& dataset,
                               std::vector<double> grid, int K, int n_train, std::uint64_t seed,
                               const BoundOptions& opts = {}, int jobs = 1);

double empirical_confidence(const MixedBinaryProgram& prog, const Dataset& dataset, double epsilon,
                            int K, int n_train, std::uint64_t seed, const BoundOptions& opts = {},
                            int jobs = 1);

// Smallest grid radius whose confidence reaches 1 - beta; throws when the
// grid has none.
double select_radius(const CalibrationCurve& curve, double beta);

}  // namespace wasscopos
