#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "odereg/data.hpp"
#include "odereg/estimator.hpp"
#include "odereg/inference.hpp"
#include "odereg/mc_study.hpp"

namespace odereg {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Event CSV with header `subject_id,time,status,x1,...,xd`: one row per event
/// (status 1) and exactly one censoring row (status 0) per subject. Subjects
/// keep their order of first appearance; events are sorted. Every problem is
/// reported as a ValidationError naming the line and subject.
Dataset parse_events_csv(std::istream& in, const std::string& source = "<input>");
Dataset read_events_csv(const std::string& path);

void write_events_csv(const Dataset& data, std::ostream& out);
std::string events_csv(const Dataset& data);

/// Write through a temporary file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);

nlohmann::json fit_to_json(const FitResult& fit);
/// Model and estimate from a fit report.
void fit_from_json(const nlohmann::json& j, Model& model, ParamVector& theta);

nlohmann::json covariance_to_json(const Model& model, const ParamVector& theta, const CovarianceEstimate& cov,
                                  double ci_level);

std::string curve_csv(const CurveBand& band, const std::string& x_name, const std::string& value_name);
std::string mc_table_csv(const McSummary& summary);
std::string mc_curves_csv(const McCurve& curve);

}  // namespace odereg
