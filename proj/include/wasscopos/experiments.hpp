#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wasscopos/bound.hpp"
#include "wasscopos/calibrate.hpp"
#include "wasscopos/model.hpp"
#include "wasscopos/rng.hpp"

namespace wasscopos {

// Jointly lognormal uncertainty: zeta = exp(normal(mu, Sigma)). The derived
// moments follow the closed-form conversion for lognormal vectors.
struct LognormalSpec {
    Vec mu;         // mean of the underlying normal
    Mat Sigma;      // covariance of the underlying normal
    Vec mu_log;     // componentwise mean of exp
    Mat Sigma_log;  // componentwise covariance of exp
};

std::pair<Vec, Mat> moments_to_lognormal(const Vec& mu, const Mat& Sigma);
LognormalSpec make_lognormal(Vec mu, Mat Sigma);

// Random correlation matrix: eigenvalues drawn on the simplex scaled to sum
// d, rotated to a random basis, then driven to unit diagonal with Givens
// rotations (Bendel-Mickey / Davies-Higham).
Mat random_correlation(int d, Rng& rng);

// zeta from a joint normal conditioned on zeta >= 0, by rejection.
struct TruncatedNormalSpec {
    Vec mu;
    Mat Sigma;
};

struct DistributionSpec {
    enum class Kind { lognormal, truncated_normal };
    Kind kind = Kind::lognormal;
    LognormalSpec lognormal;
    TruncatedNormalSpec truncated;

    int zeta_dim() const;
    // Homogenized dataset: each sample is (1, zeta).
    Dataset sample(int N, Rng& rng) const;
    Vec sample_zeta(Rng& rng) const;
};

// The 7-arc / 6-node project network with 3 source-sink paths.
struct ProjectNetwork {
    static constexpr int num_nodes = 6;
    static constexpr int num_arcs = 7;
    static const std::array<std::pair<int, int>, 7>& arcs();  // 1-based nodes
    static Mat incidence();  // full 6 x 7 flow-balance matrix, source row first
};

struct CaseStudy {
    std::string name;
    MixedBinaryProgram prog;  // binary bounds already handled
    DistributionSpec dist;
};

// Draws a fresh distribution of the case family.
DistributionSpec draw_distribution(const std::string& case_name, Rng& rng);

// name in {ssa, project, knapsack}; the instance is fixed, the distribution
// parameters are drawn from the seed.
CaseStudy build_case(const std::string& name, std::uint64_t seed);

// Precompiled scenario oracle: X does not depend on xi, so the optimum is
// attained on a finite candidate list enumerated once. Values then reduce to
// a max of dot products, which makes large Monte Carlo runs cheap.
class ValueEvaluator {
public:
    explicit ValueEvaluator(const MixedBinaryProgram& prog);
    double value(const Vec& xi) const;
    int num_candidates() const { return static_cast<int>(gens_.size()); }

private:
    std::vector<Vec> gens_;  // F' x per candidate; value = max over dots with xi
};

// ---- trial harness ---------------------------------------------------------

std::vector<double> default_radius_grid();

struct ExperimentConfig {
    std::string case_name;
    std::vector<int> Ns;
    int trials = 100;
    double beta = 0.10;
    std::uint64_t seed = 0;
    int mc_samples = 100000;
    int K = 100;
    std::vector<double> grid = default_radius_grid();
    bool single_distribution = false;  // one underlying distribution for all trials
    int jobs = 1;
    BoundOptions bound_opts;
};

struct TrialRecord {
    std::string case_name;
    int N = 0;
    int trial = 0;
    double epsilon = 0.0;
    double v_wb = 0.0;
    double v_sb = 0.0;
    double saa = 0.0;
    double gap = 0.0;
    bool covered = false;
    double runtime_ms = 0.0;
    bool failed = false;
    std::string error;
};

struct CaseAggregate {
    std::string case_name;
    int N = 0;
    double epsilon = 0.0;
    int trials_ok = 0;
    int trials_failed = 0;
    double mean_gap = 0.0;
    double v_wb_q20 = 0.0, v_wb_q50 = 0.0, v_wb_q80 = 0.0;
    double coverage = 0.0;
};

struct ExperimentResult {
    std::vector<TrialRecord> trials;
    std::vector<CaseAggregate> aggregates;
    std::vector<std::pair<int, CalibrationCurve>> curves;  // per N
};

// Calibrates a radius per sample size on a fresh dataset, then runs
// independent trials: bound at the selected radius vs. a simulated expected
// optimal value, with gap and coverage statistics.
ExperimentResult run_trials(const ExperimentConfig& cfg);

// Monte Carlo estimate of the expected optimal value.
double simulate_expected_value(const MixedBinaryProgram& prog, const DistributionSpec& dist,
                               int samples, Rng& rng);

double quantile(std::vector<double> values, double p);

}  // namespace wasscopos
