#include "drvc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace drvc::io {

std::string format_double(double value) {
  if (std::isnan(value)) return "NaN";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_csv(std::ostream& out, const Matrix& values, const std::vector<std::string>& header,
               const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
  if (!header.empty()) {
    if (static_cast<Index>(header.size()) != values.cols())
      throw Error(ErrorKind::InvalidInput, "CSV header width does not match matrix");
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Matrix& values,
               const std::vector<std::string>& header, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + path.string());
  write_csv(out, values, header, comment);
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row) {
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan")
    return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw Error(ErrorKind::InvalidCsv, "bad number '" + cell + "' on row " + std::to_string(row));
  return v;
}

}  // namespace

LabeledMatrix read_csv(std::istream& in, bool has_header) {
  LabeledMatrix out;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    auto cells = split_row(line);
    if (has_header && out.header.empty()) {
      out.header = cells;
      width = cells.size();
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw Error(ErrorKind::InvalidCsv, "ragged row " + std::to_string(line_no));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, line_no));
    rows.push_back(std::move(row));
  }
  out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      out.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return out;
}

LabeledMatrix read_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidCsv, "cannot open " + path.string());
  return read_csv(in, has_header);
}

void write_panel(const std::filesystem::path& path, const StandardizedPanel& panel,
                 const std::string& comment) {
  write_csv(path, panel.values(), panel.column_ids(), comment);
}

json to_json(const Partition& partition) {
  return json{{"K", partition.k()}, {"labels", partition.labels()}};
}

Partition partition_from_json(const json& doc) {
  try {
    return Partition(doc.at("labels").get<std::vector<int>>(), doc.at("K").get<int>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("partition JSON: ") + e.what());
  }
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Matrix matrix_from_json(const json& doc) {
  const Index r = doc.at("rows").get<Index>();
  const Index c = doc.at("cols").get<Index>();
  Matrix m(r, c);
  const auto& data = doc.at("data");
  if (static_cast<Index>(data.size()) != r) throw Error(ErrorKind::InvalidInput, "matrix rows");
  for (Index i = 0; i < r; ++i) {
    const auto& row = data.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != c) throw Error(ErrorKind::InvalidInput, "matrix cols");
    for (Index j = 0; j < c; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

namespace {
std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}
}  // namespace

json to_json(const BlockModelSpec& spec) {
  return json{{"K", spec.K},
              {"cluster_sizes", spec.cluster_sizes},
              {"factor_counts", spec.factor_counts},
              {"loadings", matrix_to_json(spec.loadings)},
              {"factor_cov", matrix_to_json(spec.factor_cov)},
              {"noise_var", to_std(spec.noise_var)},
              {"common_loading", to_std(spec.common_loading)},
              {"factor_pool_ids", spec.factor_pool_ids},
              {"seed", spec.seed}};
}

BlockModelSpec block_model_from_json(const json& doc) {
  try {
    BlockModelSpec spec;
    spec.K = doc.at("K").get<int>();
    spec.cluster_sizes = doc.at("cluster_sizes").get<std::vector<Index>>();
    spec.factor_counts = doc.at("factor_counts").get<std::vector<Index>>();
    spec.loadings = matrix_from_json(doc.at("loadings"));
    spec.factor_cov = matrix_from_json(doc.at("factor_cov"));
    spec.noise_var = from_std(doc.at("noise_var").get<std::vector<double>>());
    spec.common_loading = from_std(doc.at("common_loading").get<std::vector<double>>());
    spec.factor_pool_ids = doc.at("factor_pool_ids").get<std::vector<Index>>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, std::string("block model JSON: ") + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

std::string config_hash(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

}  // namespace drvc::io
