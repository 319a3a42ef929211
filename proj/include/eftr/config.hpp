#pragma once

// Run configurations and model checkpoints as JSON documents. Config files may
// be JSON or a TOML subset: [tables], dotted keys, strings, numbers, booleans
// and single-line arrays of scalars.

#include <string>

#include "eftr/bench.hpp"
#include "json.hpp"

namespace eftr {

using Json = nlohmann::json;

Json parse_toml(const std::string& text);
// Dispatches on the extension (.toml, otherwise JSON).
Json load_config_file(const std::string& path);

// `key.path=value`; the value is read as JSON when possible, else as a string.
void apply_override(Json& doc, const std::string& assignment);

Json to_json(const RunConfig& run);
// Unknown keys and type mismatches raise ConfigError naming the field.
RunConfig run_config_from_json(const Json& doc);
std::string config_hash(const RunConfig& run);

Json to_json(const DGPSpec& spec);
DGPSpec dgp_from_json(const Json& doc);
Json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& doc);

Json checkpoint_to_json(const TrainedModel& tm, const std::string& config_hash = "");
TrainedModel checkpoint_from_json(const Json& doc);

// Pretty JSON with a trailing newline.
std::string dump_json(const Json& doc);

}  // namespace eftr
