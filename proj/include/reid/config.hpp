#pragma once

// Run configuration: one INI file with a section per pipeline stage, plus
// command-line overrides. See configs/desk.ini for every key.
//
//   [synthetic]   num_identities, visits_per_identity ("4" or "3-5"),
//                 latent_dim, ambient_dim, visit_noise_sigma,
//                 projection_seed, sample_seed, id_prefix
//   [attribute:<name>]  kind, values, signal_strength
//   [ood]         sample_seed, num_identities, offset_scale, noise_multiplier
//   [split]       train, validation, test, seed
//   [encoder]     hidden_dims, output_dim, normalize_output, init_seed
//   [train]       alpha, learning_rate, batch_size, epochs, triplets_per_batch,
//                 mining, seed, lr_decay, val_triplets, val_pairs
//   [eval]        settings, n_pos, n_neg, seed, fpr_targets, criterion,
//                 orientation, clamp_to_available
//   [probe]       task_attribute, bucket_boundaries, learning_rate, epochs,
//                 seed, l2_penalty, train_fraction

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "reid/dataset.hpp"
#include "reid/encoder.hpp"
#include "reid/error.hpp"
#include "reid/eval.hpp"
#include "reid/io.hpp"
#include "reid/metric.hpp"
#include "reid/probe.hpp"
#include "reid/random.hpp"
#include "reid/trainer.hpp"

namespace reid {

struct OodConfig {
  std::uint64_t sample_seed = 0;
  std::size_t num_identities = 0;  // 0: same as [synthetic]
  OodShift shift;
};

struct EvalSettings {
  EvalConfig config;
  std::vector<std::string> settings{"random"};
};

class RunConfig {
 public:
  static RunConfig from_text(const std::string& text, const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed = std::nullopt) {
    RunConfig cfg;
    std::istringstream in(text);
    try {
      boost::property_tree::ini_parser::read_ini(in, cfg.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      fail(ErrorKind::parse, std::string("config: ") + e.what());
    }
    for (const auto& o : overrides) cfg.apply_override(o);
    if (seed) cfg.override_seeds(*seed);
    cfg.check_known_keys();
    return cfg;
  }

  static RunConfig from_file(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                             std::optional<std::uint64_t> seed = std::nullopt) {
    require(std::filesystem::exists(path), ErrorKind::io, "config '" + path.string() + "' does not exist");
    return from_text(read_file(path), overrides, seed);
  }

  SyntheticConfig synthetic() const {
    SyntheticConfig c;
    c.num_identities = get_required<std::size_t>("synthetic", "num_identities");
    const auto visits = get_required<std::string>("synthetic", "visits_per_identity");
    const auto dash = visits.find('-');
    c.visits_min = parse_count(visits.substr(0, dash), "synthetic.visits_per_identity");
    c.visits_max = dash == std::string::npos ? c.visits_min
                                             : parse_count(visits.substr(dash + 1), "synthetic.visits_per_identity");
    c.latent_dim = get_required<std::size_t>("synthetic", "latent_dim");
    c.ambient_dim = get_required<std::size_t>("synthetic", "ambient_dim");
    c.visit_noise_sigma = get_required<double>("synthetic", "visit_noise_sigma");
    c.projection_seed = get_required<std::uint64_t>("synthetic", "projection_seed");
    c.sample_seed = get_required<std::uint64_t>("synthetic", "sample_seed");
    c.id_prefix = get_or<std::string>("synthetic", "id_prefix", c.id_prefix);
    for (const auto& [section, child] : tree_) {
      if (section.rfind("attribute:", 0) != 0) continue;
      SyntheticAttribute a;
      a.name = section.substr(10);
      const auto kind = get_required<std::string>(section, "kind");
      require(kind == "categorical" || kind == "numeric", ErrorKind::invalid_argument,
              section + ".kind must be categorical or numeric");
      a.kind = kind == "categorical" ? AttributeKind::categorical : AttributeKind::numeric;
      if (a.kind == AttributeKind::categorical) a.values = split_list(get_required<std::string>(section, "values"));
      a.signal_strength = get_required<double>(section, "signal_strength");
      c.attributes.push_back(std::move(a));
    }
    return c;
  }

  std::optional<OodConfig> ood() const {
    if (!has_section("ood")) return std::nullopt;
    OodConfig o;
    o.sample_seed = get_required<std::uint64_t>("ood", "sample_seed");
    o.num_identities = get_or<std::size_t>("ood", "num_identities", 0);
    o.shift.offset_scale = get_or<double>("ood", "offset_scale", 0.0);
    o.shift.noise_multiplier = get_or<double>("ood", "noise_multiplier", 1.0);
    return o;
  }

  SplitSpec split() const {
    SplitSpec s;
    s.train = get_or("split", "train", s.train);
    s.validation = get_or("split", "validation", s.validation);
    s.test = get_or("split", "test", s.test);
    s.seed = get_required<std::uint64_t>("split", "seed");
    return s;
  }

  // input_dim is left to the caller (taken from the data).
  EncoderConfig encoder() const {
    EncoderConfig e;
    const auto hidden = get_or<std::string>("encoder", "hidden_dims", "");
    for (const auto& h : split_list(hidden)) e.hidden_dims.push_back(parse_count(h, "encoder.hidden_dims"));
    e.output_dim = get_or("encoder", "output_dim", e.output_dim);
    e.normalize_output = get_or("encoder", "normalize_output", e.normalize_output);
    e.init_seed = get_required<std::uint64_t>("encoder", "init_seed");
    return e;
  }

  TrainConfig train() const {
    TrainConfig t;
    t.alpha = get_or("train", "alpha", t.alpha);
    t.learning_rate = get_or("train", "learning_rate", t.learning_rate);
    t.batch_size = get_or("train", "batch_size", t.batch_size);
    t.epochs = get_or("train", "epochs", t.epochs);
    t.triplets_per_batch = get_or("train", "triplets_per_batch", t.triplets_per_batch);
    t.mining = parse_mining_strategy(get_or<std::string>("train", "mining", to_string(t.mining)));
    t.seed = get_required<std::uint64_t>("train", "seed");
    t.lr_decay = get_or("train", "lr_decay", t.lr_decay);
    t.val_triplets = get_or("train", "val_triplets", t.val_triplets);
    t.val_pairs = get_or("train", "val_pairs", t.val_pairs);
    return t;
  }

  EvalSettings eval() const {
    EvalSettings s;
    auto& c = s.config;
    s.settings = split_list(get_or<std::string>("eval", "settings", "random"));
    c.n_pos = get_or("eval", "n_pos", c.n_pos);
    c.n_neg = get_or("eval", "n_neg", c.n_neg);
    c.seed = get_required<std::uint64_t>("eval", "seed");
    if (auto f = get_optional<std::string>("eval", "fpr_targets")) {
      c.fpr_targets.clear();
      for (const auto& v : split_list(*f)) c.fpr_targets.push_back(parse_real(v, "eval.fpr_targets"));
    }
    const auto criterion = get_or<std::string>("eval", "criterion", "max_accuracy");
    if (criterion == "max_accuracy") {
      c.criterion = ThresholdCriterion::max_accuracy();
    } else if (criterion.rfind("target_fpr:", 0) == 0) {
      c.criterion = ThresholdCriterion::target_fpr(parse_real(criterion.substr(11), "eval.criterion"));
    } else {
      fail(ErrorKind::invalid_argument, "eval.criterion must be max_accuracy or target_fpr:<value>");
    }
    const auto orientation = get_or<std::string>("eval", "orientation", "lower_is_same");
    require(orientation == "lower_is_same" || orientation == "higher_is_same", ErrorKind::invalid_argument,
            "eval.orientation must be lower_is_same or higher_is_same");
    c.orientation = orientation == "lower_is_same" ? ScoreOrientation::lower_is_same : ScoreOrientation::higher_is_same;
    c.clamp_to_available = get_or("eval", "clamp_to_available", c.clamp_to_available);
    return s;
  }

  ProbeConfig probe() const {
    ProbeConfig p;
    p.task_attribute = get_required<std::string>("probe", "task_attribute");
    if (auto b = get_optional<std::string>("probe", "bucket_boundaries")) {
      for (const auto& v : split_list(*b)) p.bucket_boundaries.push_back(parse_real(v, "probe.bucket_boundaries"));
    }
    p.learning_rate = get_or("probe", "learning_rate", p.learning_rate);
    p.epochs = get_or("probe", "epochs", p.epochs);
    p.seed = get_required<std::uint64_t>("probe", "seed");
    p.l2_penalty = get_or("probe", "l2_penalty", p.l2_penalty);
    p.train_fraction = get_or("probe", "train_fraction", p.train_fraction);
    return p;
  }

  static std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
      const auto first = item.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      const auto last = item.find_last_not_of(" \t");
      out.push_back(item.substr(first, last - first + 1));
    }
    return out;
  }

 private:
  boost::property_tree::ptree tree_;

  static inline const std::map<std::string, std::set<std::string>> kKnownKeys{
      {"synthetic", {"num_identities", "visits_per_identity", "latent_dim", "ambient_dim", "visit_noise_sigma",
                     "projection_seed", "sample_seed", "id_prefix"}},
      {"attribute:", {"kind", "values", "signal_strength"}},
      {"ood", {"sample_seed", "num_identities", "offset_scale", "noise_multiplier"}},
      {"split", {"train", "validation", "test", "seed"}},
      {"encoder", {"hidden_dims", "output_dim", "normalize_output", "init_seed"}},
      {"train", {"alpha", "learning_rate", "batch_size", "epochs", "triplets_per_batch", "mining", "seed", "lr_decay",
                 "val_triplets", "val_pairs"}},
      {"eval", {"settings", "n_pos", "n_neg", "seed", "fpr_targets", "criterion", "orientation", "clamp_to_available"}},
      {"probe", {"task_attribute", "bucket_boundaries", "learning_rate", "epochs", "seed", "l2_penalty",
                 "train_fraction"}},
  };

  void check_known_keys() const {
    for (const auto& [section, child] : tree_) {
      const auto lookup = section.rfind("attribute:", 0) == 0 ? std::string("attribute:") : section;
      const auto known = kKnownKeys.find(lookup);
      require(known != kKnownKeys.end(), ErrorKind::invalid_argument, "config: unknown section [" + section + "]");
      for (const auto& [key, _] : child) {
        require(known->second.count(key) == 1, ErrorKind::invalid_argument,
                "config: unknown field '" + section + "." + key + "'");
      }
    }
  }

  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    require(eq != std::string::npos && dot != std::string::npos && dot < eq, ErrorKind::invalid_argument,
            "override '" + assignment + "' is not of the form section.key=value");
    const auto section = assignment.substr(0, dot);
    const auto key = assignment.substr(dot + 1, eq - dot - 1);
    auto child = tree_.get_child_optional(boost::property_tree::ptree::path_type(section, '\0'));
    if (!child) {
      tree_.push_back({section, {}});
      child = tree_.get_child(boost::property_tree::ptree::path_type(section, '\0'));
    }
    child->put(boost::property_tree::ptree::path_type(key, '\0'), assignment.substr(eq + 1));
  }

  // Replaces every sampling seed; projection_seed (the fixed feature map) is kept.
  void override_seeds(std::uint64_t seed) {
    const auto text = std::to_string(seed);
    for (const char* s : {"synthetic.sample_seed=", "split.seed=", "encoder.init_seed=", "train.seed=", "eval.seed=",
                          "probe.seed="}) {
      apply_override(s + text);
    }
    if (has_section("ood")) apply_override("ood.sample_seed=" + std::to_string(derive_seed(seed, 0x00D)));
  }

  bool has_section(const std::string& section) const {
    return tree_.get_child_optional(boost::property_tree::ptree::path_type(section, '\0')).has_value();
  }

  template <typename T>
  std::optional<T> get_optional(const std::string& section, const std::string& key) const {
    const auto child = tree_.get_child_optional(boost::property_tree::ptree::path_type(section, '\0'));
    if (!child) return std::nullopt;
    const auto raw = child->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
    if (!raw) return std::nullopt;
    return convert<T>(*raw, section + "." + key);
  }

  template <typename T>
  T get_required(const std::string& section, const std::string& key) const {
    auto v = get_optional<T>(section, key);
    require(v.has_value(), ErrorKind::invalid_argument, "config: missing required field '" + section + "." + key + "'");
    return *v;
  }

  template <typename T>
  T get_or(const std::string& section, const std::string& key, T fallback) const {
    return get_optional<T>(section, key).value_or(std::move(fallback));
  }

  static std::size_t parse_count(const std::string& text, const std::string& field) {
    return convert<std::size_t>(text, field);
  }

  static double parse_real(const std::string& text, const std::string& field) {
    return convert<double>(text, field);
  }

  template <typename T>
  static T convert(std::string text, const std::string& field) {
    const auto first = text.find_first_not_of(" \t");
    const auto last = text.find_last_not_of(" \t");
    text = first == std::string::npos ? std::string() : text.substr(first, last - first + 1);
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "off" || text == "no") return false;
      fail(ErrorKind::invalid_argument, "config: '" + field + "' must be a boolean, got '" + text + "'");
    } else if constexpr (std::is_floating_point_v<T>) {
      const auto v = parse_double(text);
      require(v && std::isfinite(*v), ErrorKind::invalid_argument,
              "config: '" + field + "' must be a finite number, got '" + text + "'");
      return static_cast<T>(*v);
    } else {
      T value{};
      const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
      require(!text.empty() && result.ec == std::errc() && result.ptr == text.data() + text.size(),
              ErrorKind::invalid_argument, "config: '" + field + "' must be a nonnegative integer, got '" + text + "'");
      return value;
    }
  }
};

}  // namespace reid
