#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "csim/pipeline.hpp"

namespace csim {

// Parses a pipeline configuration from JSON. Every config field has a fixed
// key; unknown keys anywhere in the document are rejected so typos cannot
// silently fall back to defaults.
PipelineConfig config_from_json_text(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

// Applies one `key=value` override with dotted paths (e.g.
// `batches.lambda1=0.5`). The value is parsed against the type the key has
// in the defaults; unknown keys and type mismatches are errors.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

std::string config_to_json_text(const PipelineConfig& cfg);

}  // namespace csim
