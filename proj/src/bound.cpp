#include "wasscopos/bound.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "wasscopos/errors.hpp"
#include "wasscopos/log.hpp"

namespace wasscopos {

namespace {

Mat nullspace_basis(const Mat& E) {
    Eigen::FullPivLU<Mat> lu(E);
    lu.setThreshold(1e-9);
    Mat ker = lu.kernel();  // (k+n) x q, not orthonormal
    Eigen::HouseholderQR<Mat> qr(ker);
    Mat Q = qr.householderQ();
    return Q.leftCols(ker.cols());
}

// Smallest t >= 0 with D + t E'E >= -tol, found by doubling and bisection;
// exists whenever D is PSD on null(E) up to tol.
double recover_row_multiplier(const Mat& D, const Mat& EtE, double tol) {
    auto ok = [&](double t) { return min_eigenvalue(D + t * EtE) >= -tol; };
    if (ok(0.0)) return 0.0;
    double hi = 1.0;
    while (!ok(hi)) {
        hi *= 10.0;
        if (hi > 1e14) return hi;  // give up; verification will flag it
    }
    double lo = 0.0;
    for (int i = 0; i < 50 && hi - lo > 1e-6 * (1.0 + hi); ++i) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace

ConicProblem build(const MixedBinaryProgram& prog, const Dataset& dataset, double epsilon,
                   std::optional<double> r, BoundModelInfo* info, bool facial_reduction) {
    if (epsilon < 0) throw config_error("radius must be nonnegative");
    if (r && *r <= 0) throw config_error("trace bound r must be positive");
    if (!prog.bounds_enforced && !prog.binary_set.empty())
        throw config_error("call enforce_binary_bounds (or flag the bounds implied) before building the bound");

    HomogenizedData h = homogenize(prog, dataset);
    const int N = dataset.size();
    const int dim = h.k + h.n;
    const int nb = static_cast<int>(prog.binary_set.size());

    ConeProgramBuilder bld;
    BoundModelInfo local;
    BoundModelInfo& inf = info != nullptr ? *info : local;
    inf = BoundModelInfo{};
    inf.N = N;
    inf.epsilon = epsilon;
    inf.r = r;
    inf.reduced = facial_reduction;
    inf.E = h.E;
    if (facial_reduction) inf.null_basis = nullspace_basis(h.E);
    const Mat* basis = facial_reduction ? &inf.null_basis : nullptr;

    inf.lambda_index = bld.add_nonneg(1);
    bld.set_obj(inf.lambda_index, epsilon * epsilon);

    for (int i = 0; i < N; ++i) {
        bld.begin_group();
        const int alpha = bld.add_free(1);
        bld.set_obj(alpha, 1.0 / N);
        inf.alpha_index.push_back(alpha);
        if (!facial_reduction) {
            const int u = bld.add_free(h.m);
            inf.u_offset.push_back(u);
        }
        int v = -1;
        if (nb > 0) {
            v = bld.add_free(nb);
            inf.v_offset.push_back(v);
        }
        int rho = -1;
        if (r) {
            rho = bld.add_nonneg(1);
            bld.set_obj(rho, *r / N);
            inf.rho_index.push_back(rho);
        }

        SymAffine target = SymAffine::zero(dim);
        target.constant = -h.H_const;
        target.add_term(alpha, h.g1 * h.g1.transpose());
        target.add_term(inf.lambda_index, -h.K[i]);
        if (!facial_reduction) {
            const int u = inf.u_offset.back();
            for (int t = 0; t < h.m; ++t) {
                Vec row = h.E.row(t).transpose();
                target.add_term(u + t, row * row.transpose());
            }
        }
        for (int j = 0; j < nb; ++j) target.add_term(v + j, h.Q[j]);
        if (r) target.add_term(rho, Mat::Identity(dim, dim));

        inf.targets.push_back(target);
        inf.memberships.push_back(emit_membership(bld, target, prog.support, h.n, basis));
        bld.end_group();
    }
    return bld.build(/*with_structure=*/true);
}

BoundResult solve_bound(const MixedBinaryProgram& prog, const Dataset& dataset, double epsilon,
                        std::optional<double> r, const BoundOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    BoundModelInfo info;
    ConicProblem p = build(prog, dataset, epsilon, r, &info, opts.facial_reduction);
    ConicSolutionEx sol = solve(p, opts.solver);

    BoundResult res;
    res.value = sol.primal_obj;
    res.lambda = sol.x.size() > 0 ? sol.x[info.lambda_index] : 0.0;
    res.alpha = Vec(info.N);
    for (int i = 0; i < info.N; ++i) res.alpha[i] = sol.x[info.alpha_index[i]];
    res.status = sol.status;
    res.certified = sol.status == SolveStatus::optimal;
    res.epsilon = epsilon;
    res.N = info.N;
    res.r = r;
    res.iterations = sol.iterations;
    res.row_multiplier = Vec::Zero(info.N);

    if (sol.status == SolveStatus::max_iter)
        log_warn("bound solve hit the iteration limit; best value is not certified");
    else if (sol.status != SolveStatus::optimal)
        log_warn(std::string("bound solve ended with status ") + status_name(sol.status));

    if (opts.verify_certificates && sol.x.size() > 0 &&
        (sol.status == SolveStatus::optimal || sol.status == SolveStatus::max_iter)) {
        const Mat EtE = info.E.transpose() * info.E;
        Rng rng(opts.spot_check_seed);
        double worst = std::numeric_limits<double>::infinity();
        bool pass = true;
        double max_err = 0.0;
        for (int i = 0; i < info.N; ++i) {
            IADecomposition dec = extract_decomposition(info.memberships[i], sol.x, prog.support);
            Mat g = info.targets[i].value(sol.x);
            const double scale = 1.0 + g.cwiseAbs().maxCoeff();
            if (info.reduced) {
                // recover the row multipliers and rebuild the full-space slack
                Mat D = g - dec.s_matrix();
                const double t = recover_row_multiplier(D, EtE, 1e-9 * scale);
                res.row_multiplier[i] = t;
                g += t * EtE;
                dec.M = D + t * EtE;
            }
            max_err = std::max(max_err, (dec.reconstruct() - g).cwiseAbs().maxCoeff() / scale);
            if (!dec.verify_memberships(prog.support, 1e-6)) pass = false;
            SpotCheckResult sc =
                copositivity_spot_check(g, prog.support, info.memberships[i].n,
                                        opts.spot_check_trials, opts.spot_check_tol, rng);
            worst = std::min(worst, sc.worst);
            pass = pass && sc.pass;
        }
        res.spot_check_passed = pass;
        res.spot_check_worst = worst;
        res.max_decomposition_error = max_err;
        if (!pass)
            log_warn("certificate verification failed at the reported optimum");
    }

    res.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

double saa_value(const MixedBinaryProgram& prog, const Dataset& dataset, const SolverOptions& opts) {
    dataset.validate();
    double total = 0.0;
    for (const auto& xi : dataset.samples) total += solve_deterministic(prog, xi, opts).value;
    return total / dataset.size();
}

}  // namespace wasscopos
