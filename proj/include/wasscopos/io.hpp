#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "wasscopos/bound.hpp"
#include "wasscopos/calibrate.hpp"
#include "wasscopos/experiments.hpp"
#include "wasscopos/model.hpp"

namespace wasscopos {

// Instance JSON: {A: row-major nested arrays, b, F, binary_set (1-based),
// support: {type: "nonneg_orthant"|"polyhedral"|"soc", P?}, r?}.
struct InstanceFile {
    MixedBinaryProgram prog;
    std::optional<double> r;
};

InstanceFile parse_instance(const nlohmann::json& j);
InstanceFile load_instance(const std::filesystem::path& path);
nlohmann::json instance_to_json(const MixedBinaryProgram& prog, std::optional<double> r);

// Dataset JSON: {k, samples: [[zeta...]]}; the leading 1 is added on load,
// so each sample array has k-1 entries.
Dataset parse_dataset(const nlohmann::json& j);
Dataset load_dataset(const std::filesystem::path& path);
nlohmann::json dataset_to_json(const Dataset& dataset);

// Distribution-spec JSON: {type: "lognormal"|"truncated_normal", mu, Sigma}.
DistributionSpec parse_distribution(const nlohmann::json& j);
DistributionSpec load_distribution(const std::filesystem::path& path);

nlohmann::json bound_result_to_json(const BoundResult& r);

nlohmann::json load_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// 17-significant-digit formatting so CSV round-trips are bit-exact.
std::string format_double(double v);

void write_curve_csv(const std::filesystem::path& path, const CalibrationCurve& curve);
void append_curve_csv(std::string& out, const CalibrationCurve& curve);
std::string trials_csv(const std::vector<TrialRecord>& trials);
std::string aggregates_csv(const std::vector<CaseAggregate>& aggregates);

}  // namespace wasscopos
