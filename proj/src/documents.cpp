#include "benchforge/documents.hpp"

namespace benchforge {

nlohmann::json scalar_json(const Scalar& v) {
  nlohmann::json j;
  std::visit([&](const auto& x) { j = x; }, v);
  return j;
}

nlohmann::json finding_json(const Finding& f) {
  return {{"severity", severity_name(f.severity)}, {"path", f.path}, {"message", f.message}};
}

nlohmann::json validation_json(const ValidationReport& report) {
  auto findings = nlohmann::json::array();
  for (const auto& f : report.findings) findings.push_back(finding_json(f));
  return {{"findings", findings}, {"error_count", report.error_count()}, {"runnable", report.runnable()}};
}

Finding syntax_finding(const ParseError& e) {
  std::string path = "$";
  if (e.line() > 0) path = "line " + std::to_string(e.line()) + ":" + std::to_string(e.column());
  return {Severity::error, path, e.message()};
}

nlohmann::json syntax_error_json(const ParseError& e) {
  ValidationReport report;
  report.findings.push_back(syntax_finding(e));
  return validation_json(report);
}

nlohmann::json form_json(const ParameterForm& form) {
  auto fields = nlohmann::json::array();
  for (const auto& f : form.fields) {
    nlohmann::json field = {{"key", f.key},
                            {"recipe", f.recipe},
                            {"type", param_type_name(f.type)},
                            {"description", f.description},
                            {"default", f.default_value ? scalar_json(*f.default_value) : nlohmann::json()},
                            {"effective", f.effective_value ? scalar_json(*f.effective_value) : nlohmann::json()}};
    auto groups = nlohmann::json::object();
    for (const auto& [g, v] : f.group_values) groups[g] = scalar_json(v);
    field["group_values"] = groups;
    fields.push_back(std::move(field));
  }
  return {{"fields", fields}};
}

}  // namespace benchforge
