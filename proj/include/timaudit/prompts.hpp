#pragma once

#include <map>
#include <string>

#include "timaudit/gateway.hpp"

namespace timaudit::prompts {

// Raw template text for a judge prompt.  Placeholders look like {{name}} and
// are substituted by render().
const std::string& template_text(gateway::TemplateId id);

// Substitutes every {{name}} in the template with values.at(name).
// An unknown placeholder in the template or an unused key in the map is a
// config error: silent partial substitution would corrupt cache keys.
std::string render(gateway::TemplateId id,
                   const std::map<std::string, std::string>& values);

// Sampling defaults per template: evaluation prompts run at temperature 0;
// rewriting (Degradation) runs at 0.6 with two samples per call.
gateway::JudgeParams default_params(gateway::TemplateId id);

// Convenience: a fully-formed request for the given template.
gateway::JudgeRequest make_request(gateway::TemplateId id,
                                   const std::map<std::string, std::string>& values,
                                   const std::string& model_id);

}  // namespace timaudit::prompts
