#include "appgen/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "appgen/common.hpp"

namespace appgen {

namespace {

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool hashed = true;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
  throw Error("invalid-config", key + ": expected " + want + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, std::is_integral_v<T> ? "an integer" : "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>)
    return v ? "true" : "false";
  else if constexpr (std::is_floating_point_v<T>)
    return format_double(v);
  else
    return std::to_string(v);
}

template <class T, class Access>
Field number_field(Access access) {
  return {[access](const RunConfig& c) { return format_value<T>(access(const_cast<RunConfig&>(c))); },
          [access](RunConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>)
              access(c) = parse_bool("", v);
            else
              access(c) = parse_number<T>("", v);
          }};
}

#define APPGEN_FIELD(T, key, expr) \
  { key, number_field<T>([](RunConfig& c) -> T& { return c.expr; }) }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t{
        APPGEN_FIELD(std::uint64_t, "seed", seed),
        APPGEN_FIELD(int, "world.users", world.num_users),
        APPGEN_FIELD(int, "world.apps", world.num_apps),
        APPGEN_FIELD(int, "world.stations", world.num_stations),
        APPGEN_FIELD(int, "world.regions", world.num_regions),
        APPGEN_FIELD(int, "world.business_areas", world.num_business_areas),
        APPGEN_FIELD(int, "world.pois", world.num_pois),
        APPGEN_FIELD(int, "world.categories", world.num_categories),
        APPGEN_FIELD(int, "world.days", world.horizon_days),
        APPGEN_FIELD(std::int64_t, "world.start_epoch", world.start_epoch),
        APPGEN_FIELD(std::int64_t, "world.tz_offset", world.tz_offset_seconds),
        APPGEN_FIELD(double, "world.sessions_per_day", world.sessions_per_day),
        APPGEN_FIELD(double, "world.session_length", world.session_length),
        APPGEN_FIELD(double, "world.popularity_exponent", world.popularity_exponent),
        APPGEN_FIELD(double, "world.user_pref_sigma", world.user_pref_sigma),
        APPGEN_FIELD(double, "world.roam_probability", world.roam_probability),
        APPGEN_FIELD(double, "split.train", split[0]),
        APPGEN_FIELD(double, "split.validation", split[1]),
        APPGEN_FIELD(double, "split.test", split[2]),
        APPGEN_FIELD(int, "encoders.app_dim", skipgram.dim),
        APPGEN_FIELD(int, "encoders.window", skipgram.window),
        APPGEN_FIELD(int, "encoders.negatives", skipgram.negatives),
        APPGEN_FIELD(int, "encoders.epochs", skipgram.epochs),
        APPGEN_FIELD(double, "encoders.learning_rate", skipgram.learning_rate),
        APPGEN_FIELD(int, "encoders.kg_entity_dim", tucker.entity_dim),
        APPGEN_FIELD(int, "encoders.kg_relation_dim", tucker.relation_dim),
        APPGEN_FIELD(int, "encoders.kg_epochs", tucker.epochs),
        APPGEN_FIELD(int, "encoders.kg_negatives", tucker.negatives),
        APPGEN_FIELD(int, "encoders.kg_batch_size", tucker.batch_size),
        APPGEN_FIELD(double, "encoders.kg_learning_rate", tucker.learning_rate),
        APPGEN_FIELD(int, "model.window", model.window),
        APPGEN_FIELD(int, "model.attn_dim", model.attn_dim),
        APPGEN_FIELD(int, "model.value_dim", model.value_dim),
        APPGEN_FIELD(bool, "model.standardize_apps", model.standardize_apps),
        APPGEN_FIELD(int, "diffusion.steps", model.diffusion_steps),
        APPGEN_FIELD(double, "diffusion.beta_start", model.beta_start),
        APPGEN_FIELD(double, "diffusion.beta_end", model.beta_end),
        APPGEN_FIELD(double, "diffusion.lambda_alpha", model.lambda_alpha),
        APPGEN_FIELD(int, "diffusion.channels", model.channels),
        APPGEN_FIELD(int, "diffusion.blocks", model.blocks),
        APPGEN_FIELD(int, "diffusion.step_hidden", model.step_hidden),
        APPGEN_FIELD(double, "train.learning_rate", model.learning_rate),
        APPGEN_FIELD(double, "train.final_lr_fraction", model.final_lr_fraction),
        APPGEN_FIELD(int, "train.batch_size", model.batch_size),
        APPGEN_FIELD(int, "train.epochs", model.epochs),
        APPGEN_FIELD(int, "analysis.k_clusters", analysis.k_clusters),
        APPGEN_FIELD(double, "analysis.min_support", analysis.min_support),
        APPGEN_FIELD(int, "analysis.top_m", analysis.top_m),
        APPGEN_FIELD(bool, "analysis.downstream", analysis.downstream),
    };
    t["world.rules"] = {[](const RunConfig& c) { return format_rules(c.world.planted_rules); },
                        [](RunConfig& c, const std::string& v) { c.world.planted_rules = parse_rules(v); }};
    t["model.variant"] = {[](const RunConfig& c) { return to_string(c.model.variant); },
                          [](RunConfig& c, const std::string& v) { c.model.variant = ablation_from_string(v); }};
    t["paths.run_dir"] = {[](const RunConfig& c) { return c.run_dir.string(); },
                          [](RunConfig& c, const std::string& v) { c.run_dir = v; }, false};
    return t;
  }();
  return table;
}

#undef APPGEN_FIELD

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  world.num_users = 100;
  world.num_apps = 20;
  world.num_stations = 16;
  world.num_regions = 4;
  world.num_business_areas = 4;
  world.num_pois = 30;
  world.num_categories = 5;
  world.horizon_days = 5;
  world.planted_rules = parse_rules("time 3 16,17,18,19 10; seq 1 7 0.9");
  skipgram.dim = 16;
  tucker.entity_dim = 16;
  tucker.relation_dim = 16;
  tucker.epochs = 50;
  model.attn_dim = 32;
  model.value_dim = 32;
  model.step_hidden = 32;
  model.batch_size = 32;
  model.learning_rate = 3e-3;
  model.epochs = 20;
}

WorldSpec RunConfig::world_spec() const {
  WorldSpec w = world;
  w.seed = derive_seed(seed, "world");
  return w;
}

SkipGramOptions RunConfig::skipgram_options() const {
  SkipGramOptions o = skipgram;
  o.seed = derive_seed(seed, "skipgram");
  return o;
}

TuckerOptions RunConfig::tucker_options() const {
  TuckerOptions o = tucker;
  o.seed = derive_seed(seed, "tucker");
  return o;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.seed = derive_seed(seed, "model");
  m.tz_offset_seconds = world.tz_offset_seconds;
  return m;
}

std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, "split"); }
std::uint64_t RunConfig::generate_seed() const { return derive_seed(seed, "generate"); }
std::uint64_t RunConfig::analysis_seed() const { return derive_seed(seed, "analysis"); }

void RunConfig::validate() const {
  try {
    appgen::validate(world_spec());
    model_config().validate();
  } catch (const Error& e) {
    throw Error("invalid-config", e.what());
  }
  for (double r : split)
    if (!(r >= 0.0)) throw Error("invalid-config", "split ratios must be non-negative");
  if (split[0] <= 0.0 || split[2] <= 0.0) throw Error("invalid-config", "split.train and split.test must be positive");
  if (skipgram.dim < 1 || skipgram.window < 1 || skipgram.negatives < 1 || skipgram.epochs < 1 ||
      !(skipgram.learning_rate > 0.0))
    throw Error("invalid-config", "encoders.* skip-gram settings must be positive");
  if (tucker.entity_dim < 1 || tucker.relation_dim < 1 || tucker.epochs < 1 || tucker.negatives < 1 ||
      tucker.batch_size < 1 || !(tucker.learning_rate > 0.0))
    throw Error("invalid-config", "encoders.kg_* settings must be positive");
  if (analysis.k_clusters < 1 || analysis.k_clusters > world.num_stations)
    throw Error("invalid-config", "analysis.k_clusters must lie in [1, world.stations]");
  if (!(analysis.min_support > 0.0 && analysis.min_support <= 1.0))
    throw Error("invalid-config", "analysis.min_support must lie in (0, 1]");
  if (analysis.top_m < 1) throw Error("invalid-config", "analysis.top_m must be >= 1");
}

void set_key(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw Error("unknown-key", "unknown config key '" + key + "'");
  try {
    it->second.set(config, value);
  } catch (const Error& e) {
    std::string msg = e.what();
    if (msg.rfind(": expected", 0) == 0) msg = key + msg;
    else msg = key + ": " + msg;
    throw Error("invalid-config", msg);
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : fields()) keys.push_back(k);
  return keys;
}

void apply_config_text(RunConfig& config, std::istream& in, const std::string& origin) {
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("invalid-config", origin + " line " + std::to_string(n) + ": expected key = value");
    set_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing-config", "cannot open config " + path.string());
  apply_config_text(config, in, path.string());
}

std::string canonical_text(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields())
    if (field.hashed) out += key + "=" + field.get(config) + "\n";
  return out;
}

std::string config_hash(const RunConfig& config) { return hex64(fnv1a(canonical_text(config))); }

}  // namespace appgen
