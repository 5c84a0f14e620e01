#pragma once

// Gradient audit scopes for the gradcheck command: the primitive op suite
// plus finite-difference checks through KEA, the fusion stack, and the
// composed model graph.

#include "priorlane/gradcheck.hpp"

namespace priorlane {

std::vector<GradCase> kea_gradcheck_cases();
std::vector<GradCase> fusion_gradcheck_cases();
std::vector<GradCase> full_model_gradcheck_cases();

// scope: "ops" | "kea" | "fusion" | "full" ("full" = all of the above).
std::vector<GradCase> gradcheck_scope(const std::string& scope);

}  // namespace priorlane
