#pragma once

#include "drvc/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace drvc::experiment {

using io::json;

/// One subcommand's inputs after config loading and overrides.
struct Invocation {
  json config = json::object();
  std::optional<std::uint64_t> seed;
};

/// Names accepted by run().
const std::vector<std::string>& commands();

/// Whether the command needs --seed for this config.
bool needs_seed(const std::string& command, const json& config);

/// Default config for a command, with every accepted key present.
json default_config(const std::string& command);

/// Merges `overrides` into the defaults and rejects unknown keys (InvalidConfig).
json resolve_config(const std::string& command, const json& overrides);

/// FNV-1a of the resolved config and the seed.
std::string provenance_hash(const json& config, std::optional<std::uint64_t> seed);

/// Runs a command and writes its artifacts under config["out_dir"] (or the
/// file named by config["out"]). Returns a JSON summary.
json run(const std::string& command, const Invocation& inv);

}  // namespace drvc::experiment
