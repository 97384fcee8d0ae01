#include "cng/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cng/core/errors.hpp"

namespace cng {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError("config key '" + key + "': cannot use '" + value + "', expected " + expected);
}

std::size_t to_size(const std::string& key, const std::string& v, std::size_t min = 0) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || out < min)
    bad_value(key, v, "an integer >= " + std::to_string(min));
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an unsigned 64-bit integer");
  return out;
}

double to_double(const std::string& key, const std::string& v, double lo, double hi) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !(out >= lo && out <= hi)) {
    std::ostringstream range;
    range << "a number in [" << lo << ", " << hi << "]";
    bad_value(key, v, range.str());
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "True" || v == "true") return true;
  if (v == "False" || v == "false") return false;
  bad_value(key, v, "True or False");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') bad_value(key, v, "a list like [] or [8, 8]");
  std::vector<std::size_t> out;
  const std::string inner = trim(v.substr(1, v.size() - 2));
  if (!inner.empty() && inner.back() == ',') bad_value(key, v, "a list like [] or [8, 8]");
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, v, "a list like [] or [8, 8]");
    out.push_back(to_size(key, item, 1));
  }
  return out;
}

void require(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return;
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : " or ") + std::string(a);
  bad_value(key, v, list);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}
std::string fmt(bool v) { return v ? "True" : "False"; }
std::string fmt(std::size_t v) { return std::to_string(v); }

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

struct Key {
  const char* name;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

#define CNG_SIZE(name, field, min)                                                 \
  Key {                                                                            \
    name, [](const PipelineConfig& c) { return fmt(c.field); },                    \
        [](PipelineConfig& c, const std::string& v) { c.field = to_size(name, v, min); } \
  }
#define CNG_REAL(name, field, lo, hi)                                                     \
  Key {                                                                                   \
    name, [](const PipelineConfig& c) { return fmt(c.field); },                           \
        [](PipelineConfig& c, const std::string& v) { c.field = to_double(name, v, lo, hi); } \
  }
#define CNG_BOOL(name, field)                                                  \
  Key {                                                                        \
    name, [](const PipelineConfig& c) { return fmt(c.field); },                \
        [](PipelineConfig& c, const std::string& v) { c.field = to_bool(name, v); } \
  }
#define CNG_FIXED(name, value)                                                     \
  Key {                                                                            \
    name, [](const PipelineConfig&) { return std::string(value); },                \
        [](PipelineConfig&, const std::string& v) { require(name, v, {value}); }   \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      CNG_SIZE("max_span_width", model.span.max_span_width, 1),
      CNG_SIZE("num_span_type", model.span.num_span_type, 1),
      CNG_SIZE("entity_dim", model.span.entity_dim, 1),
      CNG_REAL("dropout_rate", model.dropout_rate, 0.0, 0.99),
      CNG_SIZE("num_hyperlink", model.graph.hyperlink.num_hyperlink, 1),
      CNG_SIZE("hyperlink_features_dim", model.graph.hyperlink.features_dim, 1),
      Key{"hyper_link_classifier_hidden_dim",
          [](const PipelineConfig& c) { return fmt_list(c.model.graph.hyperlink.hidden_dims); },
          [](PipelineConfig& c, const std::string& v) {
            c.model.graph.hyperlink.hidden_dims = to_list("hyper_link_classifier_hidden_dim", v);
          }},
      CNG_FIXED("hyper_link_classifier_activation", "ELU"),
      Key{"gumbel_sigmoid_tau",
          [](const PipelineConfig& c) { return fmt(c.train.tau_start) + " -> " + fmt(c.train.tau_floor); },
          [](PipelineConfig& c, const std::string& v) {
            const auto arrow = v.find("->");
            if (arrow == std::string::npos) bad_value("gumbel_sigmoid_tau", v, "'start -> floor', e.g. 0.5 -> 0.05");
            const double start = to_double("gumbel_sigmoid_tau", trim(v.substr(0, arrow)), 1e-6, 1e6);
            const std::string floor_text = trim(v.substr(arrow + 2));
            const double floor = to_double("gumbel_sigmoid_tau", floor_text, 0.0, start);
            if (floor <= 0.0) bad_value("gumbel_sigmoid_tau", v, "a positive floor (tau 0 is the hard threshold); try 0.05");
            c.train.tau_start = start;
            c.train.tau_floor = floor;
          }},
      CNG_BOOL("gumbel_sigmoid_hard", model.graph.gumbel_hard),
      CNG_SIZE("enricher_n_heads", model.graph.enricher.heads, 1),
      CNG_SIZE("enricher_num_layers", model.graph.enricher.num_layers, 1),
      CNG_SIZE("enricher_dim_feedforward", model.graph.enricher.dim_feedforward, 1),
      CNG_BOOL("enricher_use_cls", model.graph.enricher.use_cls),
      CNG_SIZE("enricher_max_len", model.graph.enricher.max_len, 1),
      CNG_REAL("enricher_padding_value", model.graph.enricher.padding_value, -1e9, 1e9),
      CNG_FIXED("hyper_graph_feature_extractor", "HGT"),
      CNG_SIZE("hyper_graph_hidden_dim", model.hgt.hidden_dim, 1),
      CNG_SIZE("hyper_graph_out_dim", model.hgt.out_dim, 1),
      CNG_SIZE("hyper_graph_heads", model.hgt.heads, 1),
      CNG_REAL("hyper_graph_dropout", model.hgt.dropout, 0.0, 0.99),
      CNG_SIZE("hgt_num_layers", model.hgt.num_layers, 1),
      CNG_FIXED("num_outputs", "1"),
      CNG_FIXED("optimizer", "AdamW"),
      CNG_REAL("weight_decay", train.weight_decay, 0.0, 1.0),
      CNG_REAL("learning_rate", train.learning_rate, 1e-12, 10.0),
      CNG_SIZE("batch_size", train.batch_size, 1),
      CNG_SIZE("epochs", train.epochs, 0),
      // Run, ablation and causal-stage keys.
      Key{"seed", [](const PipelineConfig& c) { return std::to_string(c.seed); },
          [](PipelineConfig& c, const std::string& v) { c.set_seed(to_u64("seed", v)); }},
      CNG_SIZE("embedding_dim", model.span.embedding_dim, 1),
      CNG_BOOL("enricher_enabled", model.graph.enricher.enabled),
      CNG_REAL("enricher_dropout", model.graph.enricher.dropout, 0.0, 0.99),
      CNG_BOOL("ablation_enricher", ablation_enricher),
      CNG_REAL("held_out_fraction", held_out_fraction, 0.0, 0.9),
      CNG_REAL("alpha", estimator.alpha, 0.0, 1e6),
      CNG_SIZE("confounder_dim", estimator.confounder_dim, 1),
      CNG_SIZE("interference_dim", estimator.interference_dim, 1),
      CNG_SIZE("interference_layers", estimator.interference_layers, 1),
      Key{"ite_mode",
          [](const PipelineConfig& c) { return std::string(c.estimator.ite_mode == IteMode::paired ? "paired" : "shared"); },
          [](PipelineConfig& c, const std::string& v) {
            require("ite_mode", v, {"paired", "shared"});
            c.estimator.ite_mode = v == "paired" ? IteMode::paired : IteMode::shared;
          }},
      CNG_SIZE("causal_epochs", causal.epochs, 0),
      CNG_SIZE("causal_batch_size", causal.batch_size, 1),
      CNG_REAL("causal_learning_rate", causal.learning_rate, 1e-12, 10.0),
      CNG_REAL("causal_weight_decay", causal.weight_decay, 0.0, 1.0),
      Key{"distill_direction", [](const PipelineConfig& c) { return to_string(c.distill_direction); },
          [](PipelineConfig& c, const std::string& v) {
            require("distill_direction", v, {"remove", "grow"});
            c.distill_direction = distill_direction_from_string(v);
          }},
      Key{"distill_scope", [](const PipelineConfig& c) { return std::string(c.distill_all ? "all" : "held_out"); },
          [](PipelineConfig& c, const std::string& v) {
            require("distill_scope", v, {"held_out", "all"});
            c.distill_all = v == "all";
          }},
      CNG_SIZE("synth_size", synth.size, 2),
      CNG_REAL("synth_trigger_rate", synth.trigger_rate, 0.0, 1.0),
      CNG_SIZE("synth_min_length", synth.min_length, 1),
      CNG_SIZE("synth_max_length", synth.max_length, 1),
      CNG_SIZE("synth_pattern_length", synth.pattern_length, 1),
      CNG_SIZE("synth_max_patterns", synth.max_patterns, 1),
      CNG_BOOL("report_csv", report_csv),
  };
  return table;
}

#undef CNG_SIZE
#undef CNG_REAL
#undef CNG_BOOL
#undef CNG_FIXED

const Key& find_key(const std::string& name) {
  for (const Key& k : keys())
    if (name == k.name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

// Widths that other components derive from the primary keys.
void sync(PipelineConfig& c) {
  const std::size_t d = c.model.span.entity_dim;
  c.model.graph.enricher.dim = d;
  c.model.graph.hyperlink.entity_dim = d;
  c.model.hgt.entity_in = d;
  c.model.hgt.relation_in = c.model.graph.hyperlink.features_dim;
  c.estimator.input_dim = d;
  c.synth.width = c.model.span.embedding_dim;
}

void validate(const PipelineConfig& c) {
  if (c.model.span.entity_dim % c.model.graph.enricher.heads != 0)
    throw ConfigError("enricher_n_heads must divide entity_dim");
  if (c.model.hgt.hidden_dim % c.model.hgt.heads != 0)
    throw ConfigError("hyper_graph_heads must divide hyper_graph_hidden_dim");
  if (c.synth.max_length < c.synth.min_length) throw ConfigError("synth_max_length must be >= synth_min_length");
  if (c.synth.pattern_length * c.synth.max_patterns > c.synth.min_length)
    throw ConfigError("synth_pattern_length * synth_max_patterns must fit in synth_min_length");
}

void assign(PipelineConfig& c, const std::string& key, const std::string& value) {
  find_key(key).set(c, value);
  sync(c);
}

}  // namespace

PipelineConfig::PipelineConfig() {
  train.batch_size = 500;
  train.epochs = 10;
  train.learning_rate = 1e-4;
  train.weight_decay = 1e-5;
  sync(*this);
  set_seed(0);
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  causal.seed = s;
  synth.seed = s;
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig c;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    assign(c, key, value);
  }
  validate(c);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(PipelineConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  assign(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  validate(config);
}

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Key& k : keys()) out.emplace_back(k.name, k.get(config));
  return out;
}

std::string format_config(const PipelineConfig& config) {
  std::string s;
  for (const auto& [k, v] : config_entries(config)) s += k + " = " + v + "\n";
  return s;
}

nlohmann::json to_json(const PipelineConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(config)) j[k] = v;
  return j;
}

}  // namespace cng
