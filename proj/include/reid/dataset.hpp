#pragma once

// Visit records, CSV manifests with a JSON schema sidecar, patient-level
// splitting, and the seeded synthetic identity generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "reid/error.hpp"
#include "reid/io.hpp"
#include "reid/random.hpp"
#include "reid/tensor.hpp"

namespace reid {

enum class AttributeKind { categorical, numeric };

struct AttributeSpec {
  AttributeKind kind = AttributeKind::categorical;
  std::vector<std::string> values;  // categorical only

  bool operator==(const AttributeSpec&) const = default;
};

// Ordered by attribute name; this order is also the manifest column order.
using AttributeSchema = std::map<std::string, AttributeSpec>;
using AttributeValue = std::variant<std::string, double>;

struct Record {
  std::string image_id;
  std::string patient_id;
  std::map<std::string, AttributeValue> attributes;
  Vector features;

  bool operator==(const Record&) const = default;
};

struct DataSet {
  std::vector<Record> records;
  std::size_t ambient_dim = 0;
  AttributeSchema schema;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  bool operator==(const DataSet&) const = default;
};

inline std::string attribute_text(const AttributeValue& value) {
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  return format_double(std::get<double>(value));
}

namespace detail {

inline bool is_feature_column(std::string_view name) {
  if (name.size() < 2 || name[0] != 'f') return false;
  return std::all_of(name.begin() + 1, name.end(), [](char c) { return c >= '0' && c <= '9'; });
}

inline bool csv_safe(std::string_view text) {
  return text.find_first_of(",\"\r\n") == std::string_view::npos;
}

inline void check_csv_safe(std::string_view text, std::string_view what) {
  require(csv_safe(text), ErrorKind::invalid_argument,
          std::string(what) + " '" + std::string(text) + "' contains a comma, quote or newline");
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

inline void validate_schema(const AttributeSchema& schema) {
  for (const auto& [name, spec] : schema) {
    require(!name.empty(), ErrorKind::invalid_argument, "empty attribute name");
    detail::check_csv_safe(name, "attribute name");
    require(name != "image_id" && name != "patient_id" && !detail::is_feature_column(name),
            ErrorKind::invalid_argument, "attribute name '" + name + "' collides with a reserved column");
    if (spec.kind == AttributeKind::categorical) {
      require(!spec.values.empty(), ErrorKind::invalid_argument,
              "categorical attribute '" + name + "' declares no values");
      std::set<std::string> seen;
      for (const auto& v : spec.values) {
        detail::check_csv_safe(v, "attribute value");
        require(!v.empty(), ErrorKind::invalid_argument, "empty value in attribute '" + name + "'");
        require(seen.insert(v).second, ErrorKind::invalid_argument,
                "duplicate value '" + v + "' in attribute '" + name + "'");
      }
    }
  }
}

inline void validate_record(const Record& record, std::size_t ambient_dim, const AttributeSchema& schema) {
  require(!record.patient_id.empty(), ErrorKind::invalid_argument,
          "record '" + record.image_id + "' has an empty patient_id");
  require(record.features.size() == ambient_dim, ErrorKind::dimension_mismatch,
          "record '" + record.image_id + "' has " + std::to_string(record.features.size()) +
              " features, expected " + std::to_string(ambient_dim));
  require(record.attributes.size() == schema.size(), ErrorKind::invalid_argument,
          "record '" + record.image_id + "' does not carry exactly the schema attributes");
  for (const auto& [name, spec] : schema) {
    const auto it = record.attributes.find(name);
    require(it != record.attributes.end(), ErrorKind::invalid_argument,
            "record '" + record.image_id + "' is missing attribute '" + name + "'");
    if (spec.kind == AttributeKind::categorical) {
      const auto* s = std::get_if<std::string>(&it->second);
      require(s && std::find(spec.values.begin(), spec.values.end(), *s) != spec.values.end(),
              ErrorKind::invalid_argument,
              "record '" + record.image_id + "' has undeclared value for '" + name + "'");
    } else {
      const auto* d = std::get_if<double>(&it->second);
      require(d && std::isfinite(*d), ErrorKind::invalid_argument,
              "record '" + record.image_id + "' has a non-numeric value for '" + name + "'");
    }
  }
}

inline void validate_dataset(const DataSet& dataset) {
  require(dataset.ambient_dim > 0, ErrorKind::invalid_argument, "ambient_dim must be positive");
  validate_schema(dataset.schema);
  std::unordered_set<std::string> ids;
  for (const auto& record : dataset.records) {
    require(!record.image_id.empty(), ErrorKind::invalid_argument, "empty image_id");
    require(ids.insert(record.image_id).second, ErrorKind::invalid_argument,
            "duplicate image_id '" + record.image_id + "'");
    validate_record(record, dataset.ambient_dim, dataset.schema);
  }
}

// Patient -> indices of that patient's records, in record order.
inline std::map<std::string, std::vector<std::size_t>> group_by_patient(const DataSet& dataset) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    groups[dataset.records[i].patient_id].push_back(i);
  }
  return groups;
}

inline std::vector<std::string> patient_ids(const DataSet& dataset) {
  std::vector<std::string> ids;
  for (const auto& record : dataset.records) ids.push_back(record.patient_id);
  return ids;
}

inline DataSet subset(const DataSet& dataset, const std::vector<std::size_t>& indices) {
  DataSet out{{}, dataset.ambient_dim, dataset.schema};
  out.records.reserve(indices.size());
  for (auto i : indices) out.records.push_back(dataset.records.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

inline std::filesystem::path schema_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".schema.json");
  return p;
}

inline std::string schema_to_json(const DataSet& dataset) {
  nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
  for (const auto& [name, spec] : dataset.schema) {
    nlohmann::ordered_json entry;
    entry["kind"] = spec.kind == AttributeKind::categorical ? "categorical" : "numeric";
    entry["values"] = spec.values;
    attrs[name] = std::move(entry);
  }
  nlohmann::ordered_json doc;
  doc["attributes"] = std::move(attrs);
  doc["ambient_dim"] = dataset.ambient_dim;
  return doc.dump(2) + "\n";
}

struct ManifestSchema {
  AttributeSchema attributes;
  std::size_t ambient_dim = 0;
};

inline ManifestSchema parse_schema_json(std::string_view text, const std::string& source) {
  ManifestSchema out;
  try {
    const auto doc = nlohmann::json::parse(text);
    out.ambient_dim = doc.at("ambient_dim").get<std::size_t>();
    for (const auto& [name, entry] : doc.at("attributes").items()) {
      AttributeSpec spec;
      const auto kind = entry.at("kind").get<std::string>();
      if (kind == "categorical") {
        spec.kind = AttributeKind::categorical;
      } else if (kind == "numeric") {
        spec.kind = AttributeKind::numeric;
      } else {
        fail(ErrorKind::parse, source + ": attribute '" + name + "' has unknown kind '" + kind + "'");
      }
      if (entry.contains("values")) spec.values = entry.at("values").get<std::vector<std::string>>();
      if (spec.kind == AttributeKind::numeric) spec.values.clear();
      out.attributes.emplace(name, std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, source + ": " + e.what());
  }
  return out;
}

inline std::string manifest_to_csv(const DataSet& dataset) {
  validate_dataset(dataset);
  std::string out = "image_id,patient_id";
  for (const auto& [name, spec] : dataset.schema) out += "," + name;
  for (std::size_t j = 0; j < dataset.ambient_dim; ++j) out += ",f" + std::to_string(j);
  out += "\n";
  for (const auto& record : dataset.records) {
    detail::check_csv_safe(record.image_id, "image_id");
    detail::check_csv_safe(record.patient_id, "patient_id");
    out += record.image_id;
    out += ',';
    out += record.patient_id;
    for (const auto& [name, spec] : dataset.schema) {
      out += ',';
      out += attribute_text(record.attributes.at(name));
    }
    for (double v : record.features) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

// Parses manifest text. Without a schema, every attribute column is taken as
// categorical with values in first-seen order.
inline DataSet parse_manifest(std::string_view csv, const std::optional<ManifestSchema>& schema,
                              const std::string& source = "manifest") {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < csv.size()) {
    auto end = csv.find('\n', start);
    if (end == std::string_view::npos) end = csv.size();
    auto line = csv.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  require(!lines.empty(), ErrorKind::parse, source + ": missing header line");

  const auto header = detail::split_fields(lines.front());
  require(header.size() >= 2 && header[0] == "image_id" && header[1] == "patient_id", ErrorKind::parse,
          source + ": header must start with image_id,patient_id");
  std::vector<std::string> attr_columns;
  std::size_t col = 2;
  for (; col < header.size() && !detail::is_feature_column(header[col]); ++col) {
    attr_columns.emplace_back(header[col]);
  }
  const std::size_t feature_start = col;
  const std::size_t dim = header.size() - feature_start;
  for (std::size_t j = 0; j < dim; ++j) {
    require(header[feature_start + j] == "f" + std::to_string(j), ErrorKind::parse,
            source + ": expected feature column f" + std::to_string(j) + " at header position " +
                std::to_string(feature_start + j + 1));
  }

  DataSet dataset;
  if (schema) {
    dataset.schema = schema->attributes;
    dataset.ambient_dim = schema->ambient_dim;
    require(dim == schema->ambient_dim, ErrorKind::dimension_mismatch,
            source + ": header declares " + std::to_string(dim) + " feature columns but schema ambient_dim is " +
                std::to_string(schema->ambient_dim));
    require(std::set<std::string>(attr_columns.begin(), attr_columns.end()).size() == attr_columns.size() &&
                attr_columns.size() == dataset.schema.size() &&
                std::all_of(attr_columns.begin(), attr_columns.end(),
                            [&](const std::string& a) { return dataset.schema.count(a) == 1; }),
            ErrorKind::parse, source + ": attribute columns do not match the schema");
  } else {
    dataset.ambient_dim = dim;
    for (const auto& a : attr_columns) {
      require(dataset.schema.emplace(a, AttributeSpec{}).second, ErrorKind::parse,
              source + ": duplicate attribute column '" + a + "'");
    }
  }

  std::unordered_set<std::string> seen_ids;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = source + ": line " + std::to_string(li + 1) + " (row " + std::to_string(li) + ")";
    const auto fields = detail::split_fields(lines[li]);
    if (fields.size() != header.size()) {
      const bool feature_count_off = fields.size() >= feature_start;
      fail(feature_count_off ? ErrorKind::dimension_mismatch : ErrorKind::parse,
           where + ": expected " + std::to_string(header.size()) + " fields, found " +
               std::to_string(fields.size()) +
               (feature_count_off ? " (" + std::to_string(fields.size() - feature_start) + " feature values for " +
                                        std::to_string(dim) + " declared)"
                                  : std::string()));
    }
    Record record;
    record.image_id = std::string(fields[0]);
    record.patient_id = std::string(fields[1]);
    require(!record.image_id.empty(), ErrorKind::parse, where + ": empty image_id");
    require(!record.patient_id.empty(), ErrorKind::parse, where + ": empty patient_id");
    require(seen_ids.insert(record.image_id).second, ErrorKind::parse,
            where + ": duplicate image_id '" + record.image_id + "'");
    for (std::size_t a = 0; a < attr_columns.size(); ++a) {
      const auto& name = attr_columns[a];
      auto& spec = dataset.schema.at(name);
      const auto text = fields[2 + a];
      if (spec.kind == AttributeKind::numeric) {
        const auto value = parse_double(text);
        require(value && std::isfinite(*value), ErrorKind::parse,
                where + ": attribute '" + name + "' is not a finite number");
        record.attributes.emplace(name, *value);
      } else {
        std::string value(text);
        if (!schema && std::find(spec.values.begin(), spec.values.end(), value) == spec.values.end()) {
          require(!value.empty(), ErrorKind::parse, where + ": empty value for attribute '" + name + "'");
          spec.values.push_back(value);
        }
        require(std::find(spec.values.begin(), spec.values.end(), value) != spec.values.end(), ErrorKind::parse,
                where + ": value '" + value + "' not declared for attribute '" + name + "'");
        record.attributes.emplace(name, std::move(value));
      }
    }
    record.features.reserve(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      const auto value = parse_double(fields[feature_start + j]);
      require(value && std::isfinite(*value), ErrorKind::parse,
              where + ": feature f" + std::to_string(j) + " is not a finite number");
      record.features.push_back(*value);
    }
    dataset.records.push_back(std::move(record));
  }
  require(dataset.ambient_dim > 0, ErrorKind::parse, source + ": no feature columns");
  return dataset;
}

inline DataSet load_manifest(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::io, "manifest '" + path.string() + "' does not exist");
  const auto csv = read_file(path);
  std::optional<ManifestSchema> schema;
  const auto sidecar = schema_path_for(path);
  if (std::filesystem::exists(sidecar)) schema = parse_schema_json(read_file(sidecar), sidecar.string());
  return parse_manifest(csv, schema, path.string());
}

// Writes the manifest and its schema sidecar; both land or neither does.
inline void save_manifest(const DataSet& dataset, const std::filesystem::path& path) {
  OutputBatch batch;
  batch.add(path, manifest_to_csv(dataset));
  batch.add(schema_path_for(path), schema_to_json(dataset));
  batch.commit();
}

// ---------------------------------------------------------------------------
// Patient-disjoint splitting

// Shuffles the sorted distinct patient ids under `seed`, then slices them
// contiguously by cumulative fraction. Every part must receive a patient.
inline std::vector<DataSet> partition_by_patient(const DataSet& dataset, const std::vector<double>& fractions,
                                                 std::uint64_t seed) {
  require(!dataset.empty(), ErrorKind::invalid_argument, "cannot split an empty dataset");
  require(!fractions.empty(), ErrorKind::invalid_argument, "no split fractions");
  double total = 0.0;
  for (double f : fractions) {
    require(f > 0.0 && std::isfinite(f), ErrorKind::invalid_argument, "split fractions must be positive");
    total += f;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::invalid_argument, "split fractions must sum to 1");

  const auto groups = group_by_patient(dataset);
  std::vector<std::string> patients;
  for (const auto& [id, _] : groups) patients.push_back(id);
  Rng rng(seed);
  rng.shuffle(patients);

  const auto n = static_cast<double>(patients.size());
  std::vector<std::size_t> bounds{0};
  double cumulative = 0.0;
  for (std::size_t k = 0; k + 1 < fractions.size(); ++k) {
    cumulative += fractions[k];
    bounds.push_back(static_cast<std::size_t>(std::llround(cumulative * n)));
  }
  bounds.push_back(patients.size());

  std::map<std::string, std::size_t> part_of;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    require(bounds[k + 1] > bounds[k], ErrorKind::insufficient_data,
            "split " + std::to_string(k) + " would receive no patients (" + std::to_string(patients.size()) +
                " patients available)");
    for (std::size_t p = bounds[k]; p < bounds[k + 1]; ++p) part_of[patients[p]] = k;
  }
  std::vector<std::vector<std::size_t>> indices(fractions.size());
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    indices[part_of.at(dataset.records[i].patient_id)].push_back(i);
  }
  std::vector<DataSet> parts;
  for (const auto& idx : indices) parts.push_back(subset(dataset, idx));
  return parts;
}

struct SplitSpec {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct SplitResult {
  DataSet train;
  DataSet validation;
  DataSet test;
};

inline SplitResult split_by_patient(const DataSet& dataset, const SplitSpec& spec) {
  auto parts = partition_by_patient(dataset, {spec.train, spec.validation, spec.test}, spec.seed);
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

// ---------------------------------------------------------------------------
// Synthetic identities
//
// Visit features are P z + sum of attribute offsets + noise. P has orthogonal
// columns scaled so each ambient coordinate carries unit identity variance on
// average; attribute directions are orthogonal to P's column space (and to
// each other, while room remains) so identity and attribute signal can be
// tuned independently.

struct SyntheticAttribute {
  std::string name;
  AttributeKind kind = AttributeKind::categorical;
  std::vector<std::string> values;  // categorical only
  double signal_strength = 0.0;
};

struct OodShift {
  double offset_scale = 0.0;
  double noise_multiplier = 1.0;
};

struct SyntheticConfig {
  std::size_t num_identities = 50;
  std::size_t visits_min = 4;
  std::size_t visits_max = 4;
  std::size_t latent_dim = 8;
  std::size_t ambient_dim = 32;
  double visit_noise_sigma = 1.0;
  std::vector<SyntheticAttribute> attributes;
  std::uint64_t projection_seed = 0;
  std::uint64_t sample_seed = 0;
  std::optional<OodShift> ood_shift;
  std::string id_prefix = "P";
};

inline void validate(const SyntheticConfig& config) {
  require(config.num_identities > 0, ErrorKind::invalid_argument, "num_identities must be positive");
  require(config.visits_min > 0 && config.visits_min <= config.visits_max, ErrorKind::invalid_argument,
          "visits per identity must satisfy 0 < min <= max");
  require(config.latent_dim > 0, ErrorKind::invalid_argument, "latent_dim must be positive");
  require(config.ambient_dim >= config.latent_dim, ErrorKind::invalid_argument, "ambient_dim must be >= latent_dim");
  require(config.visit_noise_sigma >= 0.0 && std::isfinite(config.visit_noise_sigma), ErrorKind::invalid_argument,
          "visit_noise_sigma must be nonnegative");
  require(!config.id_prefix.empty() && detail::csv_safe(config.id_prefix), ErrorKind::invalid_argument,
          "id_prefix must be nonempty and CSV-safe");
  std::set<std::string> names;
  for (const auto& a : config.attributes) {
    require(names.insert(a.name).second, ErrorKind::invalid_argument, "duplicate attribute '" + a.name + "'");
    require(a.signal_strength >= 0.0 && std::isfinite(a.signal_strength), ErrorKind::invalid_argument,
            "signal_strength of '" + a.name + "' must be nonnegative");
  }
  if (config.ood_shift) {
    require(config.ood_shift->offset_scale >= 0.0 && config.ood_shift->noise_multiplier >= 0.0,
            ErrorKind::invalid_argument, "ood_shift parameters must be nonnegative");
  }
  AttributeSchema schema;
  for (const auto& a : config.attributes) schema[a.name] = {a.kind, a.kind == AttributeKind::categorical ? a.values : std::vector<std::string>{}};
  validate_schema(schema);
}

namespace detail {

// Gram-Schmidt step: a fresh Gaussian direction orthogonal to `basis` when
// the basis does not yet span the space, otherwise just a random unit vector.
inline Vector next_direction(Rng& rng, std::size_t dim, std::vector<Vector>& basis) {
  Vector v(dim);
  for (auto& x : v) x = rng.normal();
  if (basis.size() < dim) {
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dim; ++j) dot += v[j] * b[j];
        for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * b[j];
      }
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  if (basis.size() < dim) basis.push_back(v);
  return v;
}

inline std::string padded(std::size_t value, std::size_t width) {
  auto text = std::to_string(value);
  if (text.size() < width) text.insert(0, width - text.size(), '0');
  return text;
}

}  // namespace detail

inline DataSet generate_synthetic(const SyntheticConfig& config) {
  validate(config);
  const std::size_t m = config.ambient_dim;
  const std::size_t k = config.latent_dim;

  Rng projection_rng(config.projection_seed);
  std::vector<Vector> basis;
  const double column_scale = std::sqrt(static_cast<double>(m) / static_cast<double>(k));
  std::vector<Vector> columns;
  for (std::size_t c = 0; c < k; ++c) {
    auto v = detail::next_direction(projection_rng, m, basis);
    for (auto& x : v) x *= column_scale;
    columns.push_back(std::move(v));
  }
  // directions[a][v]: one per categorical value, or a single one for numeric.
  std::vector<std::vector<Vector>> directions;
  for (const auto& a : config.attributes) {
    const std::size_t count = a.kind == AttributeKind::categorical ? a.values.size() : 1;
    std::vector<Vector> dirs;
    for (std::size_t v = 0; v < count; ++v) dirs.push_back(detail::next_direction(projection_rng, m, basis));
    directions.push_back(std::move(dirs));
  }
  Vector offset(m, 0.0);
  double sigma = config.visit_noise_sigma;
  if (config.ood_shift) {
    std::vector<Vector> scratch;  // offset is not tied to the basis
    auto dir = detail::next_direction(projection_rng, m, scratch);
    for (std::size_t j = 0; j < m; ++j) offset[j] = config.ood_shift->offset_scale * dir[j];
    sigma *= config.ood_shift->noise_multiplier;
  }

  DataSet dataset;
  dataset.ambient_dim = m;
  for (const auto& a : config.attributes) {
    dataset.schema[a.name] = {a.kind, a.kind == AttributeKind::categorical ? a.values : std::vector<std::string>{}};
  }

  const std::size_t width = std::max<std::size_t>(5, std::to_string(config.num_identities - 1).size());
  const std::size_t visit_width = std::max<std::size_t>(2, std::to_string(config.visits_max - 1).size());
  Rng rng(config.sample_seed);
  for (std::size_t i = 0; i < config.num_identities; ++i) {
    Vector z(k);
    for (auto& x : z) x = rng.normal();
    const std::size_t visits = config.visits_min + rng.index(config.visits_max - config.visits_min + 1);

    Vector center = offset;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < m; ++j) center[j] += columns[c][j] * z[c];
    }
    std::map<std::string, AttributeValue> attributes;
    std::size_t radix = 1;  // mixed radix keeps categorical attributes balanced and uncorrelated
    for (std::size_t a = 0; a < config.attributes.size(); ++a) {
      const auto& spec = config.attributes[a];
      if (spec.kind == AttributeKind::categorical) {
        const std::size_t value = (i / radix) % spec.values.size();
        radix *= spec.values.size();
        attributes.emplace(spec.name, spec.values[value]);
        for (std::size_t j = 0; j < m; ++j) center[j] += spec.signal_strength * directions[a][value][j];
      } else {
        const double value = rng.normal();
        attributes.emplace(spec.name, value);
        for (std::size_t j = 0; j < m; ++j) center[j] += spec.signal_strength * value * directions[a][0][j];
      }
    }

    const std::string patient = config.id_prefix + detail::padded(i, width);
    for (std::size_t v = 0; v < visits; ++v) {
      Record record;
      record.patient_id = patient;
      record.image_id = patient + "_v" + detail::padded(v, visit_width);
      record.attributes = attributes;
      record.features = center;
      for (auto& x : record.features) x += sigma * rng.normal();
      dataset.records.push_back(std::move(record));
    }
  }
  return dataset;
}

}  // namespace reid
