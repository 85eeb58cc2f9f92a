#include "wasscopos/calibrate.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "wasscopos/errors.hpp"
#include "wasscopos/log.hpp"
#include "wasscopos/thread_pool.hpp"

namespace wasscopos {

std::vector<SplitPair> split(const Dataset& dataset, int K, int n_train, std::uint64_t seed) {
    dataset.validate();
    const int N = dataset.size();
    if (K < 1) throw config_error("split count K must be positive");
    if (n_train < 1 || n_train >= N) throw config_error("training size must satisfy 1 <= N_T < N");
    Rng rng = Rng::stream(seed, /*purpose=*/101);
    std::vector<SplitPair> out(K);
    std::vector<int> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < K; ++k) {
        rng.shuffle(idx);
        out[k].train.assign(idx.begin(), idx.begin() + n_train);
        out[k].validation.assign(idx.begin() + n_train, idx.end());
        std::sort(out[k].train.begin(), out[k].train.end());
        std::sort(out[k].validation.begin(), out[k].validation.end());
    }
    return out;
}

namespace {

Dataset subset(const Dataset& dataset, const std::vector<int>& idx) {
    Dataset d;
    d.k = dataset.k;
    d.samples.reserve(idx.size());
    for (int i : idx) d.samples.push_back(dataset.samples[i]);
    return d;
}

}  // namespace

CalibrationCurve compute_curve(const MixedBinaryProgram& prog, const Dataset& dataset,
                               std::vector<double> grid, int K, int n_train, std::uint64_t seed,
                               const BoundOptions& opts, int jobs) {
    if (grid.empty()) throw config_error("radius grid is empty");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.front() < 0) throw config_error("radii must be nonnegative");

    const auto splits = split(dataset, K, n_train, seed);
    const int E = static_cast<int>(grid.size());

    // validation sample averages, one per split
    std::vector<double> v_sb(K);
    std::vector<Dataset> trains(K);
    for (int k = 0; k < K; ++k) {
        v_sb[k] = saa_value(prog, subset(dataset, splits[k].validation), opts.solver);
        trains[k] = subset(dataset, splits[k].train);
    }

    // trained bounds for every (split, radius) pair
    std::vector<double> v_wb(K * E);
    std::vector<char> solved(K * E, 0);
    parallel_for_index(K * E, jobs, [&](int idx) {
        const int k = idx / E, e = idx % E;
        try {
            BoundResult r = solve_bound(prog, trains[k], grid[e], std::nullopt, opts);
            v_wb[idx] = r.value;
            solved[idx] = r.certified ? 1 : 0;
            if (!r.certified) {
                std::ostringstream oss;
                oss << "calibration solve (split " << k << ", eps " << grid[e]
                    << ") ended " << status_name(r.status) << "; counted as non-coverage";
                log_warn(oss.str());
            }
        } catch (const std::exception& ex) {
            solved[idx] = 0;
            log_warn(std::string("calibration solve failed: ") + ex.what());
        }
    });

    CalibrationCurve curve;
    curve.grid = grid;
    curve.K = K;
    curve.n_train = n_train;
    curve.seed = seed;
    curve.confidence_raw.resize(E);
    curve.confidence.resize(E);
    for (int e = 0; e < E; ++e) {
        int covered = 0;
        for (int k = 0; k < K; ++k) {
            const int idx = k * E + e;
            if (solved[idx] && v_wb[idx] >= v_sb[k]) ++covered;
        }
        curve.confidence_raw[e] = static_cast<double>(covered) / K;
    }
    // isotonic adjustment; with shared splits the raw curve is already
    // monotone unless a solve failed
    double running = 0.0;
    for (int e = 0; e < E; ++e) {
        if (curve.confidence_raw[e] + 1e-12 < running) {
            std::ostringstream oss;
            oss << "raw confidence dips at radius " << grid[e] << " (" << curve.confidence_raw[e]
                << " after " << running << ")";
            log_warn(oss.str());
        }
        running = std::max(running, curve.confidence_raw[e]);
        curve.confidence[e] = running;
    }
    return curve;
}

double empirical_confidence(const MixedBinaryProgram& prog, const Dataset& dataset, double epsilon,
                            int K, int n_train, std::uint64_t seed, const BoundOptions& opts,
                            int jobs) {
    CalibrationCurve c = compute_curve(prog, dataset, {epsilon}, K, n_train, seed, opts, jobs);
    return c.confidence.front();
}

double select_radius(const CalibrationCurve& curve, double beta) {
    if (curve.grid.empty()) throw config_error("calibration curve is empty");
    if (beta < 0 || beta > 1) throw config_error("beta must lie in [0, 1]");
    for (std::size_t e = 0; e < curve.grid.size(); ++e)
        if (curve.confidence[e] >= 1.0 - beta) return curve.grid[e];
    std::ostringstream oss;
    oss << "no radius on the grid reaches confidence " << (1.0 - beta)
        << "; extend the grid with larger radii";
    throw config_error(oss.str());
}

}  // namespace wasscopos
