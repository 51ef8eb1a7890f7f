#pragma once

#include <json.hpp>

#include "benchforge/definition.hpp"

namespace benchforge {

// JSON bodies shared by the HTTP service and the CLI's --json output.

nlohmann::json scalar_json(const Scalar& v);
nlohmann::json finding_json(const Finding& f);
/// {"findings":[...], "error_count":n, "runnable":bool}
nlohmann::json validation_json(const ValidationReport& report);
/// Validation document holding a single syntax finding.
nlohmann::json syntax_error_json(const ParseError& e);
Finding syntax_finding(const ParseError& e);
nlohmann::json form_json(const ParameterForm& form);

}  // namespace benchforge
