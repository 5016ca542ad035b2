#pragma once

#include <optional>
#include <string>

#include "mfh/harness.hpp"
#include "mfh/models.hpp"

namespace mfh {

struct LoadedModel {
  ModelSpec model;
  std::optional<NBodyState> initial;  // one-site F(0) if the file provides one
  CapacityLimits caps;
};

// Model file (YAML). Errors are ParseError (syntax, missing or mistyped keys)
// or ValidationError (well-formed but inadmissible data).
LoadedModel parse_model(const std::string& text);
LoadedModel load_model_file(const std::string& path);

// Study file; a relative model path is resolved against the study file's directory.
StudyConfig parse_study(const std::string& text, const std::string& base_dir = ".");
StudyConfig load_study_file(const std::string& path);

}  // namespace mfh
