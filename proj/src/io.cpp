#include "wasscopos/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "wasscopos/errors.hpp"

namespace wasscopos {

namespace {

Mat parse_matrix(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j.front().is_array())
        throw config_error(name + " must be a nested (row-major) array");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j.front().size());
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols) throw config_error(name + " rows differ in length");
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

Vec parse_vector(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array()) throw config_error(name + " must be an array");
    Vec v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

nlohmann::json matrix_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw io_error("cannot parse " + path.string() + ": " + ex.what());
    }
    return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path.string());
    out << text;
    if (!out) throw io_error("write failed for " + path.string());
}

InstanceFile parse_instance(const nlohmann::json& j) {
    try {
        Mat A = parse_matrix(j.at("A"), "A");
        Vec b = parse_vector(j.at("b"), "b");
        Mat F = parse_matrix(j.at("F"), "F");
        std::vector<int> binary;
        if (j.contains("binary_set"))
            for (const auto& e : j.at("binary_set")) binary.push_back(e.get<int>() - 1);  // 1-based input
        std::sort(binary.begin(), binary.end());

        const auto& sup = j.at("support");
        const std::string type = sup.at("type").get<std::string>();
        const int k = static_cast<int>(F.cols());
        SupportCone support = SupportCone::orthant(k);
        if (type == "nonneg_orthant") {
            support = SupportCone::orthant(k);
        } else if (type == "polyhedral") {
            support = SupportCone::polyhedral(parse_matrix(sup.at("P"), "support.P"));
            if (support.dim() != k) throw config_error("support.P column count must equal k");
        } else if (type == "soc") {
            support = SupportCone::second_order(k);
        } else {
            throw config_error("unknown support type: " + type);
        }

        InstanceFile out{MixedBinaryProgram{std::move(A), std::move(b), std::move(F),
                                            std::move(binary), std::move(support)},
                         std::nullopt};
        if (j.contains("r")) out.r = j.at("r").get<double>();
        if (j.contains("binary_bounds_enforced"))
            out.prog.bounds_enforced = j.at("binary_bounds_enforced").get<bool>();
        out.prog.validate();
        return out;
    } catch (const nlohmann::json::exception& ex) {
        throw config_error(std::string("instance JSON: ") + ex.what());
    }
}

InstanceFile load_instance(const std::filesystem::path& path) { return parse_instance(load_json(path)); }

nlohmann::json instance_to_json(const MixedBinaryProgram& prog, std::optional<double> r) {
    nlohmann::json j;
    j["A"] = matrix_to_json(prog.A);
    j["b"] = std::vector<double>(prog.b.data(), prog.b.data() + prog.b.size());
    j["F"] = matrix_to_json(prog.F);
    nlohmann::json bs = nlohmann::json::array();
    for (int i : prog.binary_set) bs.push_back(i + 1);
    j["binary_set"] = bs;
    nlohmann::json sup;
    switch (prog.support.kind()) {
        case SupportCone::Kind::orthant:
            sup["type"] = "nonneg_orthant";
            break;
        case SupportCone::Kind::polyhedral:
            sup["type"] = "polyhedral";
            sup["P"] = matrix_to_json(prog.support.P());
            break;
        case SupportCone::Kind::second_order:
            sup["type"] = "soc";
            break;
    }
    j["support"] = sup;
    if (r) j["r"] = *r;
    j["binary_bounds_enforced"] = prog.bounds_enforced;
    return j;
}

Dataset parse_dataset(const nlohmann::json& j) {
    try {
        Dataset d;
        d.k = j.at("k").get<int>();
        if (d.k < 2) throw config_error("dataset k must be at least 2");
        for (const auto& row : j.at("samples")) {
            if (static_cast<int>(row.size()) != d.k - 1) {
                std::ostringstream oss;
                oss << "dataset sample has " << row.size() << " entries; expected k-1 = " << d.k - 1
                    << " (the leading 1 is added on load)";
                throw config_error(oss.str());
            }
            Vec xi(d.k);
            xi[0] = 1.0;
            for (int i = 1; i < d.k; ++i) xi[i] = row[i - 1].get<double>();
            d.samples.push_back(std::move(xi));
        }
        d.validate();
        return d;
    } catch (const nlohmann::json::exception& ex) {
        throw config_error(std::string("dataset JSON: ") + ex.what());
    }
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(load_json(path)); }

nlohmann::json dataset_to_json(const Dataset& dataset) {
    nlohmann::json j;
    j["k"] = dataset.k;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : dataset.samples) {
        nlohmann::json row = nlohmann::json::array();
        for (int i = 1; i < dataset.k; ++i) row.push_back(s[i]);
        rows.push_back(row);
    }
    j["samples"] = rows;
    return j;
}

DistributionSpec parse_distribution(const nlohmann::json& j) {
    try {
        const std::string type = j.at("type").get<std::string>();
        Vec mu = parse_vector(j.at("mu"), "mu");
        Mat sigma = parse_matrix(j.at("Sigma"), "Sigma");
        if (sigma.rows() != mu.size() || sigma.cols() != mu.size())
            throw config_error("Sigma must be square with mu's dimension");
        DistributionSpec spec;
        if (type == "lognormal") {
            spec.kind = DistributionSpec::Kind::lognormal;
            spec.lognormal = make_lognormal(std::move(mu), std::move(sigma));
        } else if (type == "truncated_normal") {
            spec.kind = DistributionSpec::Kind::truncated_normal;
            spec.truncated = {std::move(mu), std::move(sigma)};
        } else {
            throw config_error("unknown distribution type: " + type);
        }
        return spec;
    } catch (const nlohmann::json::exception& ex) {
        throw config_error(std::string("distribution JSON: ") + ex.what());
    }
}

DistributionSpec load_distribution(const std::filesystem::path& path) {
    return parse_distribution(load_json(path));
}

nlohmann::json bound_result_to_json(const BoundResult& r) {
    nlohmann::json j;
    j["epsilon"] = r.epsilon;
    j["N"] = r.N;
    j["value"] = r.value;
    j["lambda"] = r.lambda;
    j["status"] = status_name(r.status);
    j["runtime_ms"] = r.runtime_ms;
    j["certified"] = r.certified;
    j["spot_check_passed"] = r.spot_check_passed;
    if (r.r) j["r"] = *r.r;
    return j;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void append_curve_csv(std::string& out, const CalibrationCurve& curve) {
    for (std::size_t i = 0; i < curve.grid.size(); ++i) {
        out += format_double(curve.grid[i]);
        out += ',';
        out += format_double(curve.confidence[i]);
        out += ',';
        out += std::to_string(curve.K);
        out += ',';
        out += std::to_string(curve.n_train);
        out += ',';
        out += std::to_string(curve.seed);
        out += '\n';
    }
}

void write_curve_csv(const std::filesystem::path& path, const CalibrationCurve& curve) {
    std::string out = "epsilon,confidence,K,N_T,seed\n";
    append_curve_csv(out, curve);
    write_text(path, out);
}

std::string trials_csv(const std::vector<TrialRecord>& trials) {
    std::string out = "case,N,trial,epsilon,v_wb,v_sb,gap,covered,runtime_ms\n";
    for (const auto& t : trials) {
        out += t.case_name;
        out += ',' + std::to_string(t.N);
        out += ',' + std::to_string(t.trial);
        out += ',' + format_double(t.epsilon);
        if (t.failed) {
            out += ",nan,nan,nan,0," + format_double(t.runtime_ms) + '\n';
            continue;
        }
        out += ',' + format_double(t.v_wb);
        out += ',' + format_double(t.v_sb);
        out += ',' + format_double(t.gap);
        out += ',' + std::string(t.covered ? "1" : "0");
        out += ',' + format_double(t.runtime_ms);
        out += '\n';
    }
    return out;
}

std::string aggregates_csv(const std::vector<CaseAggregate>& aggregates) {
    std::string out =
        "case,N,epsilon,trials_ok,trials_failed,mean_gap,v_wb_q20,v_wb_q50,v_wb_q80,coverage\n";
    for (const auto& a : aggregates) {
        out += a.case_name;
        out += ',' + std::to_string(a.N);
        out += ',' + format_double(a.epsilon);
        out += ',' + std::to_string(a.trials_ok);
        out += ',' + std::to_string(a.trials_failed);
        out += ',' + format_double(a.mean_gap);
        out += ',' + format_double(a.v_wb_q20);
        out += ',' + format_double(a.v_wb_q50);
        out += ',' + format_double(a.v_wb_q80);
        out += ',' + format_double(a.coverage);
        out += '\n';
    }
    return out;
}

}  // namespace wasscopos
