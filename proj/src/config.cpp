#include "ssvmr/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ssvmr/error.hpp"

namespace ssvmr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config field '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config field '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config field '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_double(double d) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, d);
    if (std::stod(shorter) == d) return shorter;
  }
  return buf;
}

std::string fmt_ks(const std::vector<std::size_t>& ks) {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(ks[i]);
  }
  return out;
}

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

#define SSVMR_DOUBLE(name, member)                                                              \
  {name, Field{[](const TrainConfig& c) { return fmt_double(c.member); },                      \
               [](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }}}
#define SSVMR_SIZE(name, member)                                                                \
  {name, Field{[](const TrainConfig& c) { return std::to_string(c.member); },                  \
               [](TrainConfig& c, const std::string& k, const std::string& v) {                \
                 c.member = static_cast<decltype(c.member)>(parse_uint(k, v));                  \
               }}}
#define SSVMR_BOOL(name, member)                                                                \
  {name, Field{[](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); },  \
               [](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }}}
#define SSVMR_STRING(name, member)                                                              \
  {name, Field{[](const TrainConfig& c) { return c.member; },                                  \
               [](TrainConfig& c, const std::string&, const std::string& v) { c.member = v; }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> kFields{
      SSVMR_DOUBLE("lambda1", weights.lambda1),
      SSVMR_DOUBLE("lambda2", weights.lambda2),
      SSVMR_DOUBLE("lambda3", weights.lambda3),
      SSVMR_DOUBLE("lambda4", weights.lambda4),
      SSVMR_DOUBLE("margin", weights.margin),
      {"structure_sign",
       Field{[](const TrainConfig& c) {
               return std::string(c.weights.structure_sign == StructureSign::corrected ? "corrected" : "literal");
             },
             [](TrainConfig& c, const std::string& k, const std::string& v) {
               if (v == "corrected") c.weights.structure_sign = StructureSign::corrected;
               else if (v == "literal") c.weights.structure_sign = StructureSign::literal;
               else throw ConfigError("config field '" + k + "': expected corrected|literal, got '" + v + "'");
             }}},
      SSVMR_DOUBLE("temperature", temperature),
      SSVMR_DOUBLE("tau", tau),
      SSVMR_DOUBLE("lambda0", lambda0),
      SSVMR_DOUBLE("dropout", dropout),
      {"dropout_semantics",
       Field{[](const TrainConfig& c) {
               return std::string(c.dropout_semantics == DropoutSemantics::drop ? "drop" : "keep");
             },
             [](TrainConfig& c, const std::string& k, const std::string& v) {
               if (v == "drop") c.dropout_semantics = DropoutSemantics::drop;
               else if (v == "keep") c.dropout_semantics = DropoutSemantics::keep;
               else throw ConfigError("config field '" + k + "': expected drop|keep, got '" + v + "'");
             }}},
      SSVMR_DOUBLE("learning_rate", learning_rate),
      SSVMR_SIZE("batch_size", batch_size),
      SSVMR_SIZE("warmup_epochs", warmup_epochs),
      SSVMR_SIZE("epochs", epochs),
      SSVMR_SIZE("seed", seed),
      SSVMR_SIZE("hidden", hidden),
      SSVMR_SIZE("embed_dim", embed_dim),
      SSVMR_BOOL("back_retrieval", back_retrieval),
      SSVMR_BOOL("mixup", mixup),
      SSVMR_BOOL("rdrop", rdrop),
      SSVMR_BOOL("self_training", self_training),
      SSVMR_SIZE("n_spans", n_spans),
      {"mix_weight_convention",
       Field{[](const TrainConfig& c) {
               return std::string(c.mix_weight_convention == MixWeightConvention::literal ? "literal" : "swapped");
             },
             [](TrainConfig& c, const std::string& k, const std::string& v) {
               if (v == "literal") c.mix_weight_convention = MixWeightConvention::literal;
               else if (v == "swapped") c.mix_weight_convention = MixWeightConvention::swapped;
               else throw ConfigError("config field '" + k + "': expected literal|swapped, got '" + v + "'");
             }}},
      {"span_rounding",
       Field{[](const TrainConfig& c) {
               return std::string(c.span_rounding == SpanRounding::half_up ? "half_up" : "floor");
             },
             [](TrainConfig& c, const std::string& k, const std::string& v) {
               if (v == "half_up") c.span_rounding = SpanRounding::half_up;
               else if (v == "floor") c.span_rounding = SpanRounding::floor;
               else throw ConfigError("config field '" + k + "': expected half_up|floor, got '" + v + "'");
             }}},
      {"rdrop_scope",
       Field{[](const TrainConfig& c) { return std::string(c.rdrop_scope == RDropScope::noisy ? "noisy" : "all"); },
             [](TrainConfig& c, const std::string& k, const std::string& v) {
               if (v == "noisy") c.rdrop_scope = RDropScope::noisy;
               else if (v == "all") c.rdrop_scope = RDropScope::all;
               else throw ConfigError("config field '" + k + "': expected noisy|all, got '" + v + "'");
             }}},
      SSVMR_SIZE("reverse_epochs", reverse_epochs),
      SSVMR_SIZE("top_k_retrieved", top_k_retrieved),
      SSVMR_SIZE("refresh_every", refresh_every),
      SSVMR_SIZE("gmm_max_iters", gmm_max_iters),
      SSVMR_DOUBLE("gmm_tol", gmm_tol),
      SSVMR_SIZE("structure_full_max", structure_full_max),
      SSVMR_SIZE("structure_pairs", structure_pairs),
      SSVMR_SIZE("eval_every", eval_every),
      {"eval_ks", Field{[](const TrainConfig& c) { return fmt_ks(c.eval_ks); },
                        [](TrainConfig& c, const std::string& k, const std::string& v) {
                          std::vector<std::size_t> ks;
                          std::stringstream ss(v);
                          std::string item;
                          while (std::getline(ss, item, ',')) ks.push_back(parse_uint(k, trim(item)));
                          c.eval_ks = std::move(ks);
                        }}},
      SSVMR_STRING("train_video", train_video),
      SSVMR_STRING("train_music", train_music),
      SSVMR_STRING("train_manifest", train_manifest),
      SSVMR_STRING("test_video", test_video),
      SSVMR_STRING("test_music", test_music),
      SSVMR_STRING("test_manifest", test_manifest),
      SSVMR_STRING("out_dir", out_dir),
  };
  return kFields;
}

#undef SSVMR_DOUBLE
#undef SSVMR_SIZE
#undef SSVMR_BOOL
#undef SSVMR_STRING

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
  };
  const std::pair<const char*, double> nonneg[] = {{"lambda1", weights.lambda1}, {"lambda2", weights.lambda2},
                                                   {"lambda3", weights.lambda3}, {"lambda4", weights.lambda4},
                                                   {"margin", weights.margin}};
  for (const auto& [name, v] : nonneg) {
    if (!(v >= 0.0)) fail(name, "must be >= 0");
  }
  if (!(temperature > 0.0)) fail("temperature", "must be > 0");
  if (!(tau > 0.0 && tau < 1.0)) fail("tau", "must lie in (0, 1)");
  if (!(lambda0 > 0.0 && lambda0 <= 1.0)) fail("lambda0", "must lie in (0, 1]");
  if (dropout_semantics == DropoutSemantics::drop && !(dropout >= 0.0 && dropout < 1.0)) {
    fail("dropout", "drop rate must lie in [0, 1)");
  }
  if (dropout_semantics == DropoutSemantics::keep && !(dropout > 0.0 && dropout <= 1.0)) {
    fail("dropout", "keep rate must lie in (0, 1]");
  }
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (batch_size < 3) fail("batch_size", "must be >= 3");
  if (warmup_epochs > epochs) fail("warmup_epochs", "must not exceed epochs");
  if (hidden == 0) fail("hidden", "must be > 0");
  if (embed_dim == 0) fail("embed_dim", "must be > 0");
  if (n_spans == 0) fail("n_spans", "must be >= 1");
  if (top_k_retrieved == 0) fail("top_k_retrieved", "must be >= 1");
  if (refresh_every == 0) fail("refresh_every", "must be >= 1");
  if (gmm_max_iters == 0) fail("gmm_max_iters", "must be >= 1");
  if (!(gmm_tol > 0.0)) fail("gmm_tol", "must be > 0");
  if (structure_pairs == 0) fail("structure_pairs", "must be >= 1");
  if (eval_ks.empty()) fail("eval_ks", "must list at least one K");
  for (auto k : eval_ks) {
    if (k == 0) fail("eval_ks", "K must be >= 1");
  }
}

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown config field '" + key + "'");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace ssvmr
