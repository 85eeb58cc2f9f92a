#include "wasscopos/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wasscopos/errors.hpp"
#include "wasscopos/log.hpp"
#include "wasscopos/thread_pool.hpp"

namespace wasscopos {

namespace {

enum Purpose : std::uint64_t {
    p_case_dist = 7,
    p_calib_dist = 11,
    p_calib_data = 12,
    p_split = 13,
    p_trial_dist = 14,
    p_trial_data = 15,
    p_mc = 16,
};

std::uint64_t trial_key(int N, int t) { return static_cast<std::uint64_t>(N) * 1000003ULL + t; }

Mat robust_cholesky(const Mat& sigma) {
    Eigen::LLT<Mat> llt(sigma);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
    if (es.eigenvalues().minCoeff() < -1e-8 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
        throw config_error("covariance matrix is not positive semidefinite");
    Vec d = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * d.cwiseSqrt().asDiagonal();
}

}  // namespace

std::pair<Vec, Mat> moments_to_lognormal(const Vec& mu, const Mat& Sigma) {
    if (Sigma.rows() != mu.size() || Sigma.cols() != mu.size())
        throw config_error("mu and Sigma dimensions differ");
    const int d = static_cast<int>(mu.size());
    Vec mu_log(d);
    for (int i = 0; i < d; ++i) mu_log[i] = std::exp(mu[i] + 0.5 * Sigma(i, i));
    Mat sig_log(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            sig_log(i, j) = std::exp(mu[i] + mu[j] + 0.5 * (Sigma(i, i) + Sigma(j, j))) *
                            (std::exp(Sigma(i, j)) - 1.0);
    return {mu_log, sig_log};
}

LognormalSpec make_lognormal(Vec mu, Mat Sigma) {
    LognormalSpec spec;
    auto [ml, sl] = moments_to_lognormal(mu, Sigma);
    spec.mu = std::move(mu);
    spec.Sigma = std::move(Sigma);
    spec.mu_log = std::move(ml);
    spec.Sigma_log = std::move(sl);
    return spec;
}

Mat random_correlation(int d, Rng& rng) {
    if (d < 1) throw config_error("correlation dimension must be positive");
    if (d == 1) return Mat::Ones(1, 1);

    // eigenvalues on the simplex, scaled to trace d
    Vec lam(d);
    for (int i = 0; i < d; ++i) lam[i] = -std::log(std::max(1e-300, rng.uniform01()));
    lam *= d / lam.sum();

    // random orthogonal basis from QR of a gaussian matrix
    Mat g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = rng.gaussian();
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    Mat a = q * lam.asDiagonal() * q.transpose();

    // Givens rotations driving the diagonal to one while preserving the
    // spectrum; trace(a) = d guarantees a balancing pair exists
    for (int pass = 0; pass < d * d; ++pass) {
        int i = -1, j = -1;
        for (int t = 0; t < d && i < 0; ++t)
            if (a(t, t) < 1.0 - 1e-12) i = t;
        for (int t = 0; t < d && j < 0; ++t)
            if (a(t, t) > 1.0 + 1e-12) j = t;
        if (i < 0 || j < 0) break;
        const double aii = a(i, i), ajj = a(j, j), aij = a(i, j);
        const double disc = aij * aij - (aii - 1.0) * (ajj - 1.0);
        const double tan_t = (aij + std::sqrt(std::max(0.0, disc))) / (ajj - 1.0);
        const double c = 1.0 / std::sqrt(1.0 + tan_t * tan_t);
        const double s = tan_t * c;
        Vec rowi = a.row(i), rowj = a.row(j);
        a.row(i) = c * rowi - s * rowj;
        a.row(j) = s * rowi + c * rowj;
        Vec coli = a.col(i), colj = a.col(j);
        a.col(i) = c * coli - s * colj;
        a.col(j) = s * coli + c * colj;
        a(i, i) = 1.0;  // exact by construction of the rotation
    }
    a = symmetrize(a);
    a.diagonal().setOnes();
    return a;
}

int DistributionSpec::zeta_dim() const {
    return kind == Kind::lognormal ? static_cast<int>(lognormal.mu.size())
                                   : static_cast<int>(truncated.mu.size());
}

Vec DistributionSpec::sample_zeta(Rng& rng) const {
    if (kind == Kind::lognormal) {
        const int d = zeta_dim();
        Mat L = robust_cholesky(lognormal.Sigma);
        Vec z(d);
        for (int i = 0; i < d; ++i) z[i] = rng.gaussian();
        Vec zeta = (lognormal.mu + L * z).array().exp();
        return zeta;
    }
    const int d = zeta_dim();
    Mat L = robust_cholesky(truncated.Sigma);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        Vec z(d);
        for (int i = 0; i < d; ++i) z[i] = rng.gaussian();
        Vec zeta = truncated.mu + L * z;
        if (zeta.minCoeff() >= 0) return zeta;
    }
    throw config_error("truncated-normal rejection acceptance below 1e-4; change the parameters");
}

Dataset DistributionSpec::sample(int N, Rng& rng) const {
    if (N < 1) throw config_error("sample count must be positive");
    const int d = zeta_dim();
    Dataset out;
    out.k = d + 1;
    out.samples.reserve(N);
    Mat L = robust_cholesky(kind == Kind::lognormal ? lognormal.Sigma : truncated.Sigma);
    long attempts = 0;
    for (int s = 0; s < N; ++s) {
        Vec zeta;
        for (;;) {
            ++attempts;
            if (attempts > 10000L * N)
                throw config_error("truncated-normal rejection acceptance below 1e-4; change the parameters");
            Vec z(d);
            for (int i = 0; i < d; ++i) z[i] = rng.gaussian();
            if (kind == Kind::lognormal) {
                zeta = (lognormal.mu + L * z).array().exp();
                break;
            }
            zeta = truncated.mu + L * z;
            if (zeta.minCoeff() >= 0) break;
        }
        Vec xi(d + 1);
        xi[0] = 1.0;
        xi.tail(d) = zeta;
        out.samples.push_back(std::move(xi));
    }
    return out;
}

const std::array<std::pair<int, int>, 7>& ProjectNetwork::arcs() {
    static const std::array<std::pair<int, int>, 7> a = {
        {{1, 2}, {1, 3}, {2, 4}, {3, 4}, {3, 5}, {4, 6}, {5, 6}}};
    return a;
}

Mat ProjectNetwork::incidence() {
    Mat inc = Mat::Zero(num_nodes, num_arcs);
    const auto& as = arcs();
    for (int e = 0; e < num_arcs; ++e) {
        inc(as[e].first - 1, e) = 1.0;    // flow out
        inc(as[e].second - 1, e) = -1.0;  // flow in
    }
    return inc;
}

DistributionSpec draw_distribution(const std::string& case_name, Rng& rng) {
    DistributionSpec spec;
    if (case_name == "ssa" || case_name == "knapsack") {
        const int d = case_name == "ssa" ? 3 : 4;
        Vec mu(d);
        for (int i = 0; i < d; ++i) mu[i] = rng.uniform(0.0, 2.0);
        Mat corr = random_correlation(d, rng);
        const double sd = 0.25;
        Mat Sigma = sd * sd * corr;
        spec.kind = DistributionSpec::Kind::lognormal;
        spec.lognormal = make_lognormal(std::move(mu), std::move(Sigma));
        return spec;
    }
    if (case_name == "project") {
        const int d = ProjectNetwork::num_arcs;
        Vec mu(d);
        for (int i = 0; i < d; ++i) mu[i] = rng.uniform(0.0, 5.0);
        Mat corr = random_correlation(d, rng);  // unit standard deviations
        spec.kind = DistributionSpec::Kind::truncated_normal;
        spec.truncated = {std::move(mu), std::move(corr)};
        return spec;
    }
    throw config_error("unknown case name: " + case_name);
}

CaseStudy build_case(const std::string& name, std::uint64_t seed) {
    Rng rng = Rng::stream(seed, p_case_dist);
    CaseStudy cs;
    cs.name = name;
    cs.dist = draw_distribution(name, rng);

    if (name == "ssa") {
        const int n = 3, k = n + 1;
        Mat F = Mat::Zero(n, k);
        F.rightCols(n) = Mat::Identity(n, n);
        MixedBinaryProgram prog{Mat::Ones(1, n), Vec::Ones(1), F, {}, SupportCone::orthant(k)};
        cs.prog = enforce_binary_bounds(prog);  // vacuous, marks the flag
        return cs;
    }
    if (name == "project") {
        const int n = ProjectNetwork::num_arcs, k = n + 1;
        Mat inc = ProjectNetwork::incidence();
        // the balance rows sum to zero; drop the sink row
        Mat A = inc.topRows(ProjectNetwork::num_nodes - 1);
        Vec b = Vec::Zero(ProjectNetwork::num_nodes - 1);
        b[0] = 1.0;
        Mat F = Mat::Zero(n, k);
        F.rightCols(n) = Mat::Identity(n, n);
        MixedBinaryProgram prog{A, b, F, {}, SupportCone::orthant(k)};
        cs.prog = enforce_binary_bounds(prog, /*implied=*/true);
        return cs;
    }
    if (name == "knapsack") {
        const int items = 4;
        const int n = items + 1;  // capacity slack
        const int k = items + 1;
        Mat A(1, n);
        A << 5, 4, 6, 3, 1;
        Vec b(1);
        b << 10;
        Mat F = Mat::Zero(n, k);
        F.topRightCorner(items, items) = Mat::Identity(items, items);
        MixedBinaryProgram prog{A, b, F, {0, 1, 2, 3}, SupportCone::orthant(k)};
        cs.prog = enforce_binary_bounds(prog);
        return cs;
    }
    throw config_error("unknown case name: " + name);
}

// ---- precompiled scenario oracle -------------------------------------------

namespace {

// all basic feasible points of {A x = rhs, x >= 0}
void enumerate_vertices(const Mat& A, const Vec& rhs, std::vector<Vec>& out) {
    const int m = static_cast<int>(A.rows());
    const int nc = static_cast<int>(A.cols());
    const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
    if (nc == 0) {
        if (rhs.cwiseAbs().maxCoeff() <= 1e-8 * scale) out.push_back(Vec());
        return;
    }
    Eigen::ColPivHouseholderQR<Mat> rank_qr(A);
    rank_qr.setThreshold(1e-9);
    const int r = static_cast<int>(rank_qr.rank());
    if (r == 0) {
        if (rhs.cwiseAbs().maxCoeff() <= 1e-8 * scale) out.push_back(Vec::Zero(nc));
        return;
    }

    // combinations of r columns out of nc
    std::vector<int> comb(r);
    std::iota(comb.begin(), comb.end(), 0);
    double total = 1;
    for (int i = 0; i < r; ++i) total *= static_cast<double>(nc - i) / (i + 1);
    if (total > 200000)
        throw config_error("vertex enumeration too large for the precompiled oracle");

    Mat As(m, r);
    for (;;) {
        for (int i = 0; i < r; ++i) As.col(i) = A.col(comb[i]);
        Eigen::ColPivHouseholderQR<Mat> qr(As);
        qr.setThreshold(1e-9);
        if (qr.rank() == r) {
            Vec xs = qr.solve(rhs);
            if ((As * xs - rhs).cwiseAbs().maxCoeff() <= 1e-8 * scale && xs.minCoeff() >= -1e-9) {
                Vec x = Vec::Zero(nc);
                for (int i = 0; i < r; ++i) x[comb[i]] = std::max(0.0, xs[i]);
                out.push_back(std::move(x));
            }
        }
        // next combination
        int i = r - 1;
        while (i >= 0 && comb[i] == nc - r + i) --i;
        if (i < 0) break;
        ++comb[i];
        for (int j = i + 1; j < r; ++j) comb[j] = comb[j - 1] + 1;
    }
}

}  // namespace

ValueEvaluator::ValueEvaluator(const MixedBinaryProgram& prog) {
    prog.validate();
    const int n = prog.n();
    const int nb = static_cast<int>(prog.binary_set.size());
    if (nb > 25) throw config_error("binary enumeration limited to 25 variables");

    std::vector<int> cont;
    std::vector<char> is_binary(n, 0);
    for (int j : prog.binary_set) is_binary[j] = 1;
    for (int j = 0; j < n; ++j)
        if (!is_binary[j]) cont.push_back(j);
    Mat Ac(prog.m(), static_cast<int>(cont.size()));
    for (std::size_t i = 0; i < cont.size(); ++i) Ac.col(static_cast<int>(i)) = prog.A.col(cont[i]);

    for (std::uint32_t bits = 0; bits < (1u << nb); ++bits) {
        Vec rhs = prog.b;
        for (int i = 0; i < nb; ++i)
            if (bits & (1u << i)) rhs -= prog.A.col(prog.binary_set[i]);
        std::vector<Vec> verts;
        enumerate_vertices(Ac, rhs, verts);
        for (const auto& vx : verts) {
            Vec x = Vec::Zero(n);
            for (int i = 0; i < nb; ++i)
                if (bits & (1u << i)) x[prog.binary_set[i]] = 1.0;
            for (std::size_t i = 0; i < cont.size(); ++i) x[cont[i]] = vx.size() > 0 ? vx[static_cast<int>(i)] : 0.0;
            gens_.push_back(prog.F.transpose() * x);
        }
    }
    if (gens_.empty()) throw config_error("feasible set X is empty");
}

double ValueEvaluator::value(const Vec& xi) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& g : gens_) best = std::max(best, g.dot(xi));
    return best;
}

double simulate_expected_value(const MixedBinaryProgram& prog, const DistributionSpec& dist,
                               int samples, Rng& rng) {
    if (samples < 1) throw config_error("simulation needs at least one sample");
    ValueEvaluator eval(prog);
    const int d = dist.zeta_dim();
    Vec xi(d + 1);
    xi[0] = 1.0;
    double total = 0.0;
    for (int s = 0; s < samples; ++s) {
        xi.tail(d) = dist.sample_zeta(rng);
        total += eval.value(xi);
    }
    return total / samples;
}

// ---- trial harness ----------------------------------------------------------

std::vector<double> default_radius_grid() {
    return {0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0};
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(values.size() - 1, lo + 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

ExperimentResult run_trials(const ExperimentConfig& cfg) {
    if (cfg.trials < 1) throw config_error("trial count must be positive");
    CaseStudy base = build_case(cfg.case_name, cfg.seed);
    ValueEvaluator eval(base.prog);

    ExperimentResult result;
    for (int N : cfg.Ns) {
        if (N < 2) throw config_error("sample sizes must be at least 2 for calibration");

        Rng calib_dist_rng = Rng::stream(cfg.seed, p_calib_dist, N);
        DistributionSpec calib_dist =
            cfg.single_distribution ? base.dist : draw_distribution(cfg.case_name, calib_dist_rng);
        Rng calib_rng = Rng::stream(cfg.seed, p_calib_data, N);
        Dataset calib_data = calib_dist.sample(N, calib_rng);
        const int n_train = (N + 1) / 2;

        double eps = 0.0;
        bool calibrated = false;
        std::string calib_error;
        try {
            CalibrationCurve curve =
                compute_curve(base.prog, calib_data, cfg.grid, cfg.K, n_train,
                              Rng::stream(cfg.seed, p_split, N).next_u64(), cfg.bound_opts, cfg.jobs);
            result.curves.emplace_back(N, curve);
            eps = select_radius(curve, cfg.beta);
            calibrated = true;
        } catch (const std::exception& ex) {
            calib_error = ex.what();
            log_error(std::string("calibration failed for N=") + std::to_string(N) + ": " + calib_error);
        }

        std::vector<TrialRecord> records(cfg.trials);
        parallel_for_index(cfg.trials, cfg.jobs, [&](int t) {
            TrialRecord& rec = records[t];
            rec.case_name = cfg.case_name;
            rec.N = N;
            rec.trial = t;
            rec.epsilon = eps;
            if (!calibrated) {
                rec.failed = true;
                rec.error = "calibration: " + calib_error;
                return;
            }
            const auto t0 = std::chrono::steady_clock::now();
            try {
                Rng dist_rng = Rng::stream(cfg.seed, p_trial_dist, trial_key(N, t));
                DistributionSpec dist =
                    cfg.single_distribution ? base.dist : draw_distribution(cfg.case_name, dist_rng);
                Rng data_rng = Rng::stream(cfg.seed, p_trial_data, trial_key(N, t));
                Dataset data = dist.sample(N, data_rng);

                BoundResult br = solve_bound(base.prog, data, eps, std::nullopt, cfg.bound_opts);
                if (!br.certified) {
                    rec.failed = true;
                    rec.error = std::string("bound status ") + status_name(br.status);
                    return;
                }
                rec.v_wb = br.value;
                rec.saa = saa_value(base.prog, data, cfg.bound_opts.solver);

                Rng mc_rng = Rng::stream(cfg.seed, p_mc, trial_key(N, t));
                const int d = dist.zeta_dim();
                Vec xi(d + 1);
                xi[0] = 1.0;
                double total = 0.0;
                for (int s = 0; s < cfg.mc_samples; ++s) {
                    xi.tail(d) = dist.sample_zeta(mc_rng);
                    total += eval.value(xi);
                }
                rec.v_sb = total / cfg.mc_samples;
                rec.gap = (rec.v_wb - rec.v_sb) / rec.v_sb;
                rec.covered = rec.v_wb >= rec.v_sb;
            } catch (const std::exception& ex) {
                rec.failed = true;
                rec.error = ex.what();
            }
            rec.runtime_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        });

        CaseAggregate agg;
        agg.case_name = cfg.case_name;
        agg.N = N;
        agg.epsilon = eps;
        std::vector<double> wbs;
        double gap_sum = 0.0;
        int covered = 0;
        for (const auto& rec : records) {
            if (rec.failed) {
                ++agg.trials_failed;
                continue;
            }
            ++agg.trials_ok;
            wbs.push_back(rec.v_wb);
            gap_sum += rec.gap;
            if (rec.covered) ++covered;
        }
        if (agg.trials_ok > 0) {
            agg.mean_gap = gap_sum / agg.trials_ok;
            agg.v_wb_q20 = quantile(wbs, 0.20);
            agg.v_wb_q50 = quantile(wbs, 0.50);
            agg.v_wb_q80 = quantile(wbs, 0.80);
            agg.coverage = static_cast<double>(covered) / agg.trials_ok;
        }
        result.aggregates.push_back(agg);
        result.trials.insert(result.trials.end(), records.begin(), records.end());
    }
    return result;
}

}  // namespace wasscopos
