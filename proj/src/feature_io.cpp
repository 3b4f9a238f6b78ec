#include "inlik/feature_io.hpp"

#include <charconv>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "inlik/csv.hpp"
#include "inlik/error.hpp"
#include "inlik/numfmt.hpp"

namespace inlik {
namespace {

constexpr std::string_view kValidSuffix = "_valid";

double parse_double(const std::string& s, std::size_t row, const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(row, column, "not a number: '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> FeatureTable::column_names() const {
  std::vector<std::string> names;
  for (const auto& s : manifest) names.push_back(s.name);
  if (validity_columns) {
    for (const auto& s : manifest) names.push_back(s.name + std::string(kValidSuffix));
  }
  return names;
}

FeatureTable make_table(const std::vector<FeatureVector>& vectors, bool validity_columns) {
  FeatureTable table;
  table.validity_columns = validity_columns;
  if (vectors.empty()) return table;
  table.manifest = *vectors.front().manifest;
  const auto d = static_cast<Eigen::Index>(table.manifest.size());
  table.values.resize(static_cast<Eigen::Index>(vectors.size()), validity_columns ? 2 * d : d);
  for (std::size_t r = 0; r < vectors.size(); ++r) {
    const auto& v = vectors[r];
    if (v.manifest != vectors.front().manifest && *v.manifest != table.manifest)
      throw Error("feature vector '" + v.example_id + "' has a different manifest");
    table.ids.push_back(v.example_id);
    const auto row = static_cast<Eigen::Index>(r);
    for (Eigen::Index c = 0; c < d; ++c) {
      table.values(row, c) = v.values[static_cast<std::size_t>(c)];
      if (validity_columns) table.values(row, d + c) = v.valid[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
    }
  }
  return table;
}

bool uses_validity_columns(FeatureSet set) { return !is_baseline(set); }

FeatureSpec spec_for_name(std::string_view name) {
  static const auto index = [] {
    std::unordered_map<std::string, FeatureSpec> m;
    for (const auto& s : *full_manifest()) m.emplace(s.name, s);
    for (FeatureSet b : {FeatureSet::baseline_combined}) {
      for (const auto& s : *baseline_manifest(b)) m.emplace(s.name, s);
    }
    return m;
  }();
  auto it = index.find(std::string(name));
  if (it == index.end()) throw Error("unknown feature column '" + std::string(name) + "'");
  return it->second;
}

FeatureTable ablate(const FeatureTable& table, Measure measure, bool allow_missing) {
  const auto manifest = ablate(table.manifest, measure, allow_missing);
  const auto d = static_cast<Eigen::Index>(table.manifest.size());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < d; ++c) {
    if (table.manifest[static_cast<std::size_t>(c)].measure != measure) keep.push_back(c);
  }
  if (table.validity_columns) {
    const auto n = keep.size();
    for (std::size_t k = 0; k < n; ++k) keep.push_back(keep[k] + d);
  }
  FeatureTable out;
  out.ids = table.ids;
  out.manifest = *manifest;
  out.validity_columns = table.validity_columns;
  out.values = table.values(Eigen::all, keep);
  return out;
}

std::string manifest_hash(const std::vector<std::string>& columns) {
  std::string joined;
  for (const auto& c : columns) {
    joined += c;
    joined += '\n';
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(joined.data(), joined.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string manifest_hash(const FeatureTable& table) { return manifest_hash(table.column_names()); }

nlohmann::json manifest_json(const FeatureTable& table) {
  nlohmann::json entries = nlohmann::json::array();
  auto describe = [](const FeatureSpec& s, std::size_t index, bool flag) {
    nlohmann::json e;
    e["name"] = flag ? s.name + std::string(kValidSuffix) : s.name;
    e["measure"] = s.measure ? nlohmann::json(std::string(measure_name(*s.measure))) : nlohmann::json();
    e["granularity"] =
        s.granularity ? nlohmann::json(std::string(granularity_name(*s.granularity))) : nlohmann::json();
    if (flag) e["feature_kind"] = "validity";
    else if (s.aggregator) e["aggregator"] = std::string(aggregator_name(*s.aggregator));
    else e["feature_kind"] = s.kind;
    e["index"] = index;
    return e;
  };
  for (std::size_t i = 0; i < table.manifest.size(); ++i)
    entries.push_back(describe(table.manifest[i], i, false));
  if (table.validity_columns) {
    for (std::size_t i = 0; i < table.manifest.size(); ++i)
      entries.push_back(describe(table.manifest[i], table.manifest.size() + i, true));
  }
  return entries;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".manifest.json");
  return p;
}

void save_feature_table(const std::filesystem::path& csv_path, const FeatureTable& table) {
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error("cannot write " + csv_path.string());
    csv::Row header{"example_id"};
    for (auto& c : table.column_names()) header.push_back(std::move(c));
    csv::write_row(out, header);
    for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
      csv::Row row{table.ids[static_cast<std::size_t>(r)]};
      for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
        row.push_back(format_number(table.values(r, c)));
      }
      csv::write_row(out, row);
    }
  }
  std::ofstream out(manifest_path_for(csv_path), std::ios::binary);
  if (!out) throw Error("cannot write " + manifest_path_for(csv_path).string());
  out << manifest_json(table).dump(2) << '\n';
}

FeatureTable load_feature_table(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error("cannot open " + csv_path.string());
  const auto header = csv::read_row(in);
  if (!header || header->empty() || (*header)[0] != "example_id")
    throw ParseError(0, "example_id", "feature CSV must start with an example_id column");

  FeatureTable table;
  std::vector<std::string> columns(header->begin() + 1, header->end());
  std::size_t n_features = columns.size();
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto& c = columns[i];
    if (c.size() > kValidSuffix.size() && c.ends_with(kValidSuffix)) {
      n_features = i;
      break;
    }
  }
  for (std::size_t i = 0; i < n_features; ++i) table.manifest.push_back(spec_for_name(columns[i]));
  if (n_features != columns.size()) {
    table.validity_columns = true;
    if (columns.size() != 2 * n_features)
      throw ParseError(0, "", "validity columns do not mirror the feature columns");
    for (std::size_t i = 0; i < n_features; ++i) {
      if (columns[n_features + i] != columns[i] + std::string(kValidSuffix))
        throw ParseError(0, columns[n_features + i], "validity column out of order");
    }
  }

  std::vector<std::vector<double>> rows;
  std::size_t row_index = 0;
  while (auto row = csv::read_row(in)) {
    if (row->size() == 1 && (*row)[0].empty()) continue;
    if (row->size() != columns.size() + 1)
      throw ParseError(row_index, "", "expected " + std::to_string(columns.size() + 1) + " fields");
    table.ids.push_back((*row)[0]);
    std::vector<double> values;
    for (std::size_t c = 0; c < columns.size(); ++c)
      values.push_back(parse_double((*row)[c + 1], row_index, columns[c]));
    rows.push_back(std::move(values));
    ++row_index;
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return table;
}

}  // namespace inlik
