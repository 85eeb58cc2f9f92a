#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wasscopos/linalg.hpp"
#include "wasscopos/rng.hpp"
#include "wasscopos/solver.hpp"

namespace wasscopos {

// Homogenized support cone for the uncertainty vector: the actual support is
// the slice {xi in cone : xi_1 = 1}.
class SupportCone {
public:
    enum class Kind { orthant, polyhedral, second_order };

    SupportCone() : SupportCone(Kind::orthant, 1, Mat()) {}

    static SupportCone orthant(int k);
    static SupportCone polyhedral(Mat P);
    static SupportCone second_order(int k);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    const Mat& P() const { return P_; }

    // True when the membership certificates may degenerate to entrywise
    // nonnegativity (orthant, or polyhedral with P = I).
    bool orthant_like() const;

    bool contains(const Vec& xi, double tol = 1e-9) const;
    bool dual_contains(const Vec& s, double tol = 1e-7) const;

    Vec sample_point(Rng& rng) const;       // random ray in the cone
    Vec sample_dual_point(Rng& rng) const;  // random ray in the dual cone

private:
    SupportCone(Kind kind, int dim, Mat P) : kind_(kind), dim_(dim), P_(std::move(P)) {}

    Vec interior_ray() const;

    Kind kind_;
    int dim_;
    Mat P_;  // polyhedral only
    mutable std::optional<Vec> ray_cache_;
};

// Samples of the uncertainty vector, stored homogenized (leading entry 1).
struct Dataset {
    int k = 0;
    std::vector<Vec> samples;

    int size() const { return static_cast<int>(samples.size()); }
    void validate() const;
};

// max (F xi)' x  s.t.  A x = b, x >= 0, x_j binary for j in binary_set.
struct MixedBinaryProgram {
    Mat A;
    Vec b;
    Mat F;
    std::vector<int> binary_set;  // 0-based, sorted
    SupportCone support;
    bool bounds_enforced = false;  // 0 <= x_j <= 1 implied or added for j in binary_set

    int n() const { return static_cast<int>(A.cols()); }
    int m() const { return static_cast<int>(A.rows()); }
    int k() const { return static_cast<int>(F.cols()); }

    void validate() const;

    // Checks that {Ax = b, x >= 0} is nonempty and has trivial recession
    // cone; throws otherwise.
    void assert_bounded(const SolverOptions& opts = {}) const;
};

// Matrix data of the homogenized inner problems: for z = (xi; x),
//   E z = 0 encodes Ax = b on the slice xi_1 = 1,
//   z' H_i(lambda) z = (F xi)' x - lambda |xi - xi_i|^2 with
//   H_i(lambda) = H_const + lambda K[i],
//   Q_j . zz' = x_j^2 - x_j xi_1.
struct HomogenizedData {
    int k = 0, n = 0, m = 0;
    Mat E;        // m x (k+n)
    Vec g1;       // k+n
    Mat H_const;  // k+n, symmetric
    std::vector<Mat> Q;  // one per binary index, in binary_set order
    std::vector<Mat> K;  // one per sample
};

HomogenizedData homogenize(const MixedBinaryProgram& prog, const Dataset& samples);

// Adds x_j + s_j = 1 rows for each binary index unless the bounds are
// already implied (network flow) or previously enforced.
MixedBinaryProgram enforce_binary_bounds(const MixedBinaryProgram& prog, bool implied = false);

struct DeterministicSolution {
    double value = 0.0;
    Vec x;
};

// Exact optimum of the scenario problem: LP when binary_set is empty,
// otherwise enumeration of all binary assignments with a residual LP each.
DeterministicSolution solve_deterministic(const MixedBinaryProgram& prog, const Vec& xi,
                                          const SolverOptions& opts = {});

}  // namespace wasscopos
