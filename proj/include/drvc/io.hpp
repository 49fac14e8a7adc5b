#pragma once

#include "drvc/datamodel.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace drvc::io {

using nlohmann::json;

/// Matrix with optional column header, as read from or written to CSV.
struct LabeledMatrix {
  std::vector<std::string> header;
  Matrix values;
};

/// Shortest decimal that round-trips an IEEE-754 double.
std::string format_double(double value);

/// A nonempty `comment` is written first as a `# ` line (provenance).
void write_csv(std::ostream& out, const Matrix& values, const std::vector<std::string>& header = {},
               const std::string& comment = {});
void write_csv(const std::filesystem::path& path, const Matrix& values,
               const std::vector<std::string>& header = {}, const std::string& comment = {});

/// Reads a numeric CSV. With `has_header`, the first row provides column ids.
/// Lines starting with '#' are skipped. Empty cells and NA/NaN become quiet
/// NaN. Throws InvalidCsv.
LabeledMatrix read_csv(std::istream& in, bool has_header = true);
LabeledMatrix read_csv(const std::filesystem::path& path, bool has_header = true);

void write_panel(const std::filesystem::path& path, const StandardizedPanel& panel,
                 const std::string& comment = {});

json to_json(const Partition& partition);
Partition partition_from_json(const json& doc);

json to_json(const BlockModelSpec& spec);
BlockModelSpec block_model_from_json(const json& doc);

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& doc);

void write_json(const std::filesystem::path& path, const json& doc);
json read_json(const std::filesystem::path& path);

/// FNV-1a over the compact dump of a JSON document, as 16 hex digits.
std::string config_hash(const json& doc);

}  // namespace drvc::io
