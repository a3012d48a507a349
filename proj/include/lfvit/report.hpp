#pragma once

#include <json.hpp>

#include "lfvit/engine.hpp"

namespace lfvit {

// Stable-field-order JSON views of the public result types. Timing fields are
// optional so the deterministic surfaces (cmd_infer) can exclude them.
using Json = nlohmann::ordered_json;

Json config_to_json(const ModelConfig& cfg);
Json region_to_json(const Region& r);
Json flops_to_json(const FlopsReport& f);
Json result_to_json(const InferenceResult& r, bool include_timing);
Json plan_to_json(const FocusPlan& p);
Json gca_to_json(const GcaMap& g);
Json ngca_to_json(const Tensor& ngca);
Json batch_to_json(const BatchReport& rep, const ModelConfig& cfg, bool include_timing);
Json error_to_json(const std::string& type, const std::string& message);

}  // namespace lfvit
