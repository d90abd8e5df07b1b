#include "xbarsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "xbarsim/devices.hpp"
#include "xbarsim/mitigation.hpp"
#include "xbarsim/records.hpp"

#ifndef XBARSIM_VERSION
#define XBARSIM_VERSION "0.0.0"
#endif

namespace xbarsim {

using Json = nlohmann::ordered_json;

std::ostream& operator<<(std::ostream& out, const Diagnostic& d) {
  return out << d.field << ": " << d.message;
}

namespace {

// ---- JSON tree <-> config ----

Json optional_json(const auto& value) { return value ? Json(*value) : Json(nullptr); }

Json to_json(const ExperimentConfig& c) {
  const ExperimentConfig::NonidealitySection& n = c.nonidealities;
  Json j;
  j["seed"] = c.seed;
  j["repetitions"] = c.repetitions;
  j["dataset"] = {{"source", c.dataset.source},         {"path", c.dataset.path},
                  {"test_path", c.dataset.test_path},   {"train_size", c.dataset.train_size},
                  {"test_size", c.dataset.test_size},   {"pixel_noise", c.dataset.pixel_noise}};
  j["network"] = {{"layers", c.network.layers},
                  {"activations", c.network.activations},
                  {"weights_file", c.network.weights_file},
                  {"crossbar_file", c.network.crossbar_file}};
  j["training"] = {{"eta", c.training.eta},           {"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size}, {"loss", c.training.loss},
                   {"noise_mode", c.training.noise_mode}, {"sigma_w", c.training.sigma_w}};
  j["device"] = {{"preset", c.device.preset},
                 {"on_off_ratio", optional_json(c.device.on_off_ratio)},
                 {"g_off", optional_json(c.device.g_off)},
                 {"bits", optional_json(c.device.bits)},
                 {"drift_nu", optional_json(c.device.drift_nu)}};
  j["mapping"] = {{"scheme", c.mapping.scheme},
                  {"power", c.mapping.power},
                  {"input_range", c.mapping.input_range}};
  j["nonidealities"] = {
      {"quantization", {{"enabled", n.quantize}, {"bits", n.bits}}},
      {"programming", {{"enabled", n.program_pulses}, {"max_pulses", n.max_pulses}}},
      {"d2d", {{"sigma", n.d2d_sigma}}},
      {"stuck", {{"p_stuck", n.p_stuck}, {"mode", n.stuck_mode}}},
      {"drift", {{"t_seconds", n.drift_t}}},
      {"iv", {{"gamma", n.iv_gamma}}},
      {"rtn", {{"delta", n.rtn_delta}, {"tau_high", n.rtn_tau_high}, {"tau_low", n.rtn_tau_low}}}};
  j["interconnect"] = {{"r_word", c.interconnect.r_word},
                       {"r_bit", c.interconnect.r_bit},
                       {"biasing", c.interconnect.biasing},
                       {"tile_rows", c.interconnect.tile_rows},
                       {"tile_cols", c.interconnect.tile_cols}};
  j["read"] = {{"v_read", c.read.v_read},
               {"n_avg", c.read.n_avg},
               {"encoding", to_string(c.read.encoding)},
               {"pulse_slots", c.read.pulse_slots}};
  j["mitigation"] = {{"compensate_stuck", c.mitigation.compensate_stuck},
                     {"row_ordering", c.mitigation.row_ordering},
                     {"ensemble_size", c.mitigation.ensemble_size}};
  j["sweep"] = {{"path", c.sweep.paths}, {"values", c.sweep.values}};
  return j;
}

template <typename T>
std::optional<T> optional_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

int int_from(const Json& j) {
  return j.is_number_float() ? static_cast<int>(j.get<double>()) : j.get<int>();
}

// Assumes a tree that already passed the type checks.
ExperimentConfig from_json(const Json& j) {
  ExperimentConfig c;
  c.seed = j["seed"].is_number_float() ? static_cast<std::uint64_t>(j["seed"].get<double>())
                                       : j["seed"].get<std::uint64_t>();
  c.repetitions = int_from(j["repetitions"]);
  const Json& d = j["dataset"];
  c.dataset = {d["source"], d["path"], d["test_path"], int_from(d["train_size"]),
               int_from(d["test_size"]), d["pixel_noise"]};
  const Json& net = j["network"];
  c.network.layers.clear();
  for (const Json& v : net["layers"]) c.network.layers.push_back(int_from(v));
  c.network.activations = net["activations"].get<std::vector<std::string>>();
  c.network.weights_file = net["weights_file"];
  c.network.crossbar_file = net["crossbar_file"];
  const Json& t = j["training"];
  c.training = {t["eta"], int_from(t["epochs"]), int_from(t["batch_size"]), t["loss"],
                t["noise_mode"], t["sigma_w"]};
  const Json& dev = j["device"];
  c.device.preset = dev["preset"];
  c.device.on_off_ratio = optional_from<double>(dev["on_off_ratio"]);
  c.device.g_off = optional_from<double>(dev["g_off"]);
  c.device.bits = dev["bits"].is_null() ? std::nullopt : std::optional<int>(int_from(dev["bits"]));
  c.device.drift_nu = optional_from<double>(dev["drift_nu"]);
  const Json& m = j["mapping"];
  c.mapping = {m["scheme"], m["power"], m["input_range"]};
  const Json& n = j["nonidealities"];
  c.nonidealities.quantize = n["quantization"]["enabled"];
  c.nonidealities.bits = int_from(n["quantization"]["bits"]);
  c.nonidealities.program_pulses = n["programming"]["enabled"];
  c.nonidealities.max_pulses = int_from(n["programming"]["max_pulses"]);
  c.nonidealities.d2d_sigma = n["d2d"]["sigma"];
  c.nonidealities.p_stuck = n["stuck"]["p_stuck"];
  c.nonidealities.stuck_mode = n["stuck"]["mode"];
  c.nonidealities.drift_t = n["drift"]["t_seconds"];
  c.nonidealities.iv_gamma = n["iv"]["gamma"];
  c.nonidealities.rtn_delta = n["rtn"]["delta"];
  c.nonidealities.rtn_tau_high = n["rtn"]["tau_high"];
  c.nonidealities.rtn_tau_low = n["rtn"]["tau_low"];
  const Json& w = j["interconnect"];
  c.interconnect = {w["r_word"], w["r_bit"], w["biasing"], int_from(w["tile_rows"]),
                    int_from(w["tile_cols"])};
  const Json& r = j["read"];
  c.read.v_read = r["v_read"];
  c.read.n_avg = int_from(r["n_avg"]);
  c.read.encoding = input_encoding_from_string(r["encoding"]);
  c.read.pulse_slots = int_from(r["pulse_slots"]);
  const Json& mit = j["mitigation"];
  c.mitigation = {mit["compensate_stuck"], mit["row_ordering"], int_from(mit["ensemble_size"])};
  const Json& s = j["sweep"];
  c.sweep.paths = s["path"].is_string() ? std::vector<std::string>{s["path"].get<std::string>()}
                                        : s["path"].get<std::vector<std::string>>();
  c.sweep.values = s["values"].get<std::vector<double>>();
  return c;
}

const Json& default_tree() {
  static const Json tree = to_json(ExperimentConfig{});
  return tree;
}

// ---- schema checks ----

enum class Kind { Object, Bool, String, Integer, Unsigned, Number, NullableNumber,
                  NullableInteger, IntegerList, StringList, NumberList, PathList };

Kind kind_of(const std::string& path, const Json& def) {
  static const std::map<std::string, Kind> special = {
      {"seed", Kind::Unsigned},
      {"device.bits", Kind::NullableInteger},
      {"network.layers", Kind::IntegerList},
      {"network.activations", Kind::StringList},
      {"sweep.values", Kind::NumberList},
      {"sweep.path", Kind::PathList},
  };
  if (const auto it = special.find(path); it != special.end()) return it->second;
  if (def.is_object()) return Kind::Object;
  if (def.is_boolean()) return Kind::Bool;
  if (def.is_string()) return Kind::String;
  if (def.is_null()) return Kind::NullableNumber;
  if (def.is_number_integer()) return Kind::Integer;
  return Kind::Number;
}

bool integral(const Json& j) {
  if (j.is_number_integer()) return true;
  return j.is_number_float() && std::isfinite(j.get<double>()) &&
         j.get<double>() == std::floor(j.get<double>()) && std::abs(j.get<double>()) < 2e9;
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void check_types(const Json& user, const Json& def, const std::string& path,
                 std::vector<Diagnostic>& out) {
  auto bad = [&](const char* expected) { out.push_back({path, std::string("expected ") + expected}); };
  switch (kind_of(path, def)) {
    case Kind::Object:
      if (!user.is_object()) return bad("an object");
      for (const auto& [key, value] : user.items()) {
        if (!def.contains(key)) {
          out.push_back({join(path, key), "unknown field"});
        } else {
          check_types(value, def[key], join(path, key), out);
        }
      }
      return;
    case Kind::Bool:
      if (!user.is_boolean()) bad("true or false");
      return;
    case Kind::String:
      if (!user.is_string()) bad("a string");
      return;
    case Kind::Integer:
      if (!integral(user)) bad("an integer");
      return;
    case Kind::Unsigned:
      if (!(user.is_number_unsigned() ||
            (integral(user) && !user.is_number_integer() && user.get<double>() >= 0))) {
        bad("a non-negative integer");
      }
      return;
    case Kind::Number:
      if (!user.is_number()) bad("a number");
      return;
    case Kind::NullableNumber:
      if (!user.is_null() && !user.is_number()) bad("a number or null");
      return;
    case Kind::NullableInteger:
      if (!user.is_null() && !integral(user)) bad("an integer or null");
      return;
    case Kind::IntegerList:
      if (!user.is_array() || !std::all_of(user.begin(), user.end(), integral)) {
        bad("a list of integers");
      }
      return;
    case Kind::StringList:
      if (!user.is_array() ||
          !std::all_of(user.begin(), user.end(), [](const Json& v) { return v.is_string(); })) {
        bad("a list of strings");
      }
      return;
    case Kind::NumberList:
      if (!user.is_array() ||
          !std::all_of(user.begin(), user.end(), [](const Json& v) { return v.is_number(); })) {
        bad("a list of numbers");
      }
      return;
    case Kind::PathList:
      if (!user.is_string() &&
          !(user.is_array() &&
            std::all_of(user.begin(), user.end(), [](const Json& v) { return v.is_string(); }))) {
        bad("a parameter path or a list of paths");
      }
      return;
  }
}

void merge_into(Json& target, const Json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && target.contains(key) && target[key].is_object()) {
      merge_into(target[key], value);
    } else {
      target[key] = value;
    }
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream in(path);
  std::string part;
  while (std::getline(in, part, '.')) parts.push_back(part);
  return parts;
}

// Numeric leaf addressed by a dotted path, or nullptr.
const Json* numeric_leaf(const Json& tree, const std::string& path) {
  const Json* node = &tree;
  for (const std::string& part : split_path(path)) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  const Kind kind = kind_of(path, *node);
  const bool numeric = kind == Kind::Integer || kind == Kind::Unsigned || kind == Kind::Number ||
                       kind == Kind::NullableNumber || kind == Kind::NullableInteger;
  return numeric ? node : nullptr;
}

bool integer_leaf(const std::string& path) {
  const Json* leaf = numeric_leaf(default_tree(), path);
  if (!leaf) return false;
  const Kind kind = kind_of(path, *leaf);
  return kind == Kind::Integer || kind == Kind::Unsigned || kind == Kind::NullableInteger;
}

Json set_leaf(Json tree, const std::string& path, double value) {
  Json* node = &tree;
  for (const std::string& part : split_path(path)) node = &(*node)[part];
  if (integer_leaf(path)) {
    *node = static_cast<std::int64_t>(value);
  } else {
    *node = value;
  }
  return tree;
}

template <typename F>
void check_name(std::vector<Diagnostic>& out, const std::string& field, const std::string& name,
                F&& resolve) {
  try {
    resolve(name);
  } catch (const Error& e) {
    std::string message = e.what();
    if (const auto colon = message.find(": "); colon != std::string::npos) message.erase(0, colon + 2);
    out.push_back({field, message});
  }
}

void check_ranges(const ExperimentConfig& c, std::vector<Diagnostic>& out) {
  auto require = [&](bool ok, const std::string& field, const std::string& message) {
    if (!ok) out.push_back({field, message});
  };
  require(c.repetitions >= 1, "repetitions", "must be >= 1");

  require(c.dataset.source == "builtin" || c.dataset.source == "file", "dataset.source",
          "must be builtin or file");
  require(c.dataset.source != "file" || !c.dataset.path.empty(), "dataset.path",
          "required when dataset.source is file");
  require(c.dataset.train_size >= 1, "dataset.train_size", "must be >= 1");
  require(c.dataset.test_size >= 1, "dataset.test_size", "must be >= 1");
  require(c.dataset.pixel_noise >= 0.0, "dataset.pixel_noise", "must be >= 0");

  const auto& layers = c.network.layers;
  require(layers.size() >= 2, "network.layers", "needs an input and an output size");
  require(std::all_of(layers.begin(), layers.end(), [](int n) { return n >= 1; }),
          "network.layers", "sizes must be >= 1");
  if (layers.size() >= 2 && c.dataset.source == "builtin") {
    require(layers.front() == 64, "network.layers", "built-in digits have 64 inputs");
    require(layers.back() == 10, "network.layers", "built-in digits have 10 classes");
  }
  require(c.network.activations.size() + 1 == layers.size(), "network.activations",
          "needs one entry per layer (" + std::to_string(layers.empty() ? 0 : layers.size() - 1) +
              ")");
  for (std::size_t l = 0; l < c.network.activations.size(); ++l) {
    check_name(out, "network.activations[" + std::to_string(l) + "]", c.network.activations[l],
               activation_from_string);
  }

  require(c.training.eta > 0.0, "training.eta", "must be > 0");
  require(c.training.epochs >= 1, "training.epochs", "must be >= 1");
  require(c.training.batch_size >= 1, "training.batch_size", "must be >= 1");
  check_name(out, "training.loss", c.training.loss, loss_from_string);
  check_name(out, "training.noise_mode", c.training.noise_mode, noise_mode_from_string);
  require(c.training.sigma_w >= 0.0, "training.sigma_w", "must be >= 0");
  if (c.training.loss == "cross_entropy" && !c.network.activations.empty()) {
    require(c.network.activations.back() == "softmax", "training.loss",
            "cross_entropy needs a softmax output layer");
  }

  check_name(out, "device.preset", c.device.preset, preset);
  if (c.device.on_off_ratio) require(*c.device.on_off_ratio > 1.0, "device.on_off_ratio", "must be > 1");
  if (c.device.g_off) require(*c.device.g_off > 0.0, "device.g_off", "must be > 0");
  if (c.device.bits) require(*c.device.bits >= 1, "device.bits", "must be >= 1");
  if (c.device.drift_nu) require(*c.device.drift_nu >= 0.0, "device.drift_nu", "must be >= 0");

  check_name(out, "mapping.scheme", c.mapping.scheme, mapping_variant_from_string);
  require(c.mapping.power > 0.0, "mapping.power", "must be > 0");
  require(c.mapping.input_range > 0.0, "mapping.input_range", "must be > 0");

  const auto& n = c.nonidealities;
  require(n.bits >= 0, "nonidealities.quantization.bits", "must be >= 0");
  require(n.max_pulses >= 0, "nonidealities.programming.max_pulses", "must be >= 0");
  require(n.d2d_sigma >= 0.0, "nonidealities.d2d.sigma", "must be >= 0");
  require(n.p_stuck >= 0.0 && n.p_stuck <= 1.0, "nonidealities.stuck.p_stuck",
          "must lie in [0, 1]");
  check_name(out, "nonidealities.stuck.mode", n.stuck_mode, stuck_mode_from_string);
  require(n.drift_t >= 1.0, "nonidealities.drift.t_seconds", "must be >= 1");
  require(n.iv_gamma >= 0.0, "nonidealities.iv.gamma", "must be >= 0");
  require(n.rtn_delta >= 0.0, "nonidealities.rtn.delta", "must be >= 0");
  require(n.rtn_tau_high >= 1.0, "nonidealities.rtn.tau_high", "must be >= 1");
  require(n.rtn_tau_low >= 1.0, "nonidealities.rtn.tau_low", "must be >= 1");

  require(c.interconnect.r_word >= 0.0, "interconnect.r_word", "must be >= 0");
  require(c.interconnect.r_bit >= 0.0, "interconnect.r_bit", "must be >= 0");
  check_name(out, "interconnect.biasing", c.interconnect.biasing, biasing_from_string);
  require(c.interconnect.tile_rows >= 0, "interconnect.tile_rows", "must be >= 0");
  require(c.interconnect.tile_cols >= 0, "interconnect.tile_cols", "must be >= 0");

  require(c.read.v_read > 0.0, "read.v_read", "must be > 0");
  require(c.read.n_avg >= 1, "read.n_avg", "must be >= 1");
  require(c.read.pulse_slots >= 0, "read.pulse_slots", "must be >= 0");

  const std::string& order = c.mitigation.row_ordering;
  require(order == "none" || order == "intensity" || order == "sensitivity",
          "mitigation.row_ordering", "must be none, intensity or sensitivity");
  require(c.mitigation.ensemble_size >= 1, "mitigation.ensemble_size", "must be >= 1");
  require(!c.mitigation.compensate_stuck || c.mapping.scheme == "differential_pair",
          "mitigation.compensate_stuck", "requires mapping.scheme differential_pair");
  if (!c.network.crossbar_file.empty()) {
    require(order == "none", "mitigation.row_ordering",
            "must be none when network.crossbar_file is set");
    require(c.mitigation.ensemble_size == 1, "mitigation.ensemble_size",
            "must be 1 when network.crossbar_file is set");
  }
}

void check_sweep(const Json& merged, const ExperimentConfig& c, std::vector<Diagnostic>& out) {
  if (c.sweep.paths.empty() != c.sweep.values.empty()) {
    out.push_back({"sweep", "path and values must be given together"});
    return;
  }
  bool resolvable = true;
  for (const std::string& path : c.sweep.paths) {
    if (!numeric_leaf(default_tree(), path) || path == "seed") {
      out.push_back({"sweep.path", "'" + path + "' is not a numeric parameter"});
      resolvable = false;
    }
  }
  if (!resolvable) return;
  std::set<double> seen;
  for (const double value : c.sweep.values) {
    if (!seen.insert(value).second) {
      out.push_back({"sweep.values", "duplicate value " + format_double(value)});
    }
    Json point = merged;
    for (const std::string& path : c.sweep.paths) {
      if (integer_leaf(path) && value != std::floor(value)) {
        out.push_back({path, "sweep value " + format_double(value) + " is not an integer"});
      }
      point = set_leaf(std::move(point), path, value);
    }
    std::vector<Diagnostic> nested;
    check_ranges(from_json(point), nested);
    for (Diagnostic& d : nested) {
      out.push_back({d.field, "at sweep value " + format_double(value) + ": " + d.message});
    }
  }
}

struct Parsed {
  std::vector<Diagnostic> diagnostics;
  ExperimentConfig config;
};

Parsed parse_and_check(const std::string& text) {
  Parsed result;
  Json user;
  try {
    user = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) line += text[k] == '\n';
    std::string message = e.what();
    if (const auto at = message.find("parse error"); at != std::string::npos) message.erase(0, at);
    result.diagnostics.push_back({"line " + std::to_string(line), message});
    return result;
  }
  check_types(user, default_tree(), "", result.diagnostics);
  if (!result.diagnostics.empty()) return result;
  Json merged = default_tree();
  merge_into(merged, user);
  check_name(result.diagnostics, "read.encoding", merged["read"]["encoding"].get<std::string>(),
             input_encoding_from_string);
  if (!result.diagnostics.empty()) return result;
  try {
    result.config = from_json(merged);
  } catch (const std::exception& e) {
    result.diagnostics.push_back({"config", e.what()});
    return result;
  }
  check_ranges(result.config, result.diagnostics);
  check_sweep(merged, result.config, result.diagnostics);
  return result;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cli", "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

std::string format_diagnostics(const std::vector<Diagnostic>& diagnostics) {
  std::ostringstream msg;
  for (std::size_t k = 0; k < diagnostics.size(); ++k) msg << (k ? "; " : "") << diagnostics[k];
  return msg.str();
}

}  // namespace

std::vector<Diagnostic> validate_config_text(const std::string& text) {
  return parse_and_check(text).diagnostics;
}

std::vector<Diagnostic> validate_config_file(const std::filesystem::path& path) {
  return validate_config_text(read_text(path));
}

ExperimentConfig parse_config(const std::string& text) {
  Parsed parsed = parse_and_check(text);
  if (!parsed.diagnostics.empty()) throw ConfigError("cli", format_diagnostics(parsed.diagnostics));
  return parsed.config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text(path));
}

std::string serialize_config(const ExperimentConfig& config) {
  return to_json(config).dump(2) + "\n";
}

ExperimentConfig with_parameter(const ExperimentConfig& config, const std::string& path,
                                double value) {
  if (!numeric_leaf(default_tree(), path)) {
    throw ConfigError("cli", "'" + path + "' is not a numeric parameter");
  }
  return from_json(set_leaf(to_json(config), path, value));
}

std::string config_digest(const ExperimentConfig& config) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : to_json(config).dump()) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return buffer;
}

std::uint64_t task_seed(std::uint64_t seed, std::size_t sweep_index, int repetition) {
  return mix64(mix64(seed) ^ mix64((static_cast<std::uint64_t>(sweep_index) << 32) |
                                   static_cast<std::uint32_t>(repetition)));
}

DeviceModel device_model(const ExperimentConfig& config) {
  DeviceModel model = preset(config.device.preset);
  if (config.device.on_off_ratio) model.on_off_ratio = *config.device.on_off_ratio;
  if (config.device.g_off) model.g_off = *config.device.g_off;
  if (config.device.bits) model.bits = *config.device.bits;
  if (config.device.drift_nu) model.drift_nu = *config.device.drift_nu;
  return model;
}

CrossbarConfig crossbar_config(const ExperimentConfig& c) {
  const DeviceModel device = device_model(c);
  const ConductanceWindow window = device.window();
  const double k_v = c.read.v_read / c.mapping.input_range;
  // Weight ranges are refitted per layer when the network is programmed.
  MappingScheme scheme = MappingScheme::differential_pair(window, 1.0, k_v);
  switch (mapping_variant_from_string(c.mapping.scheme)) {
    case MappingVariant::DifferentialPair:
      break;
    case MappingVariant::Naive:
      scheme = MappingScheme::naive(window, -1.0, 1.0, k_v);
      break;
    case MappingVariant::NonlinearPower:
      scheme = MappingScheme::nonlinear_power(window, -1.0, 1.0, c.mapping.power, k_v);
      break;
  }
  NonidealityConfig ni;
  ni.quantize = c.nonidealities.quantize;
  ni.bits = c.nonidealities.bits;
  ni.program_pulses = c.nonidealities.program_pulses;
  ni.max_pulses = c.nonidealities.max_pulses;
  ni.d2d.sigma = c.nonidealities.d2d_sigma;
  ni.stuck = {c.nonidealities.p_stuck, stuck_mode_from_string(c.nonidealities.stuck_mode)};
  ni.drift_time = c.nonidealities.drift_t;
  ni.iv_gamma = c.nonidealities.iv_gamma;
  ni.rtn = {c.nonidealities.rtn_delta, c.nonidealities.rtn_tau_high, c.nonidealities.rtn_tau_low};
  CrossbarConfig out{scheme, device, ni,
                     {c.interconnect.r_word, c.interconnect.r_bit,
                      biasing_from_string(c.interconnect.biasing)},
                     std::nullopt};
  if (c.interconnect.tile_rows > 0 || c.interconnect.tile_cols > 0) {
    constexpr int kUnbounded = 1 << 30;
    out.tiles = TileSpec{c.interconnect.tile_rows > 0 ? c.interconnect.tile_rows : kUnbounded,
                         c.interconnect.tile_cols > 0 ? c.interconnect.tile_cols : kUnbounded};
  }
  return out;
}

TrainConfig train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.eta = c.training.eta;
  t.epochs = c.training.epochs;
  t.batch_size = c.training.batch_size;
  t.loss = loss_from_string(c.training.loss);
  t.noise_mode = noise_mode_from_string(c.training.noise_mode);
  t.sigma_w = c.training.sigma_w;
  if (t.noise_mode == NoiseMode::Aware) t.aware_crossbar = crossbar_config(c);
  t.aware_read = c.read;
  t.seed = c.seed;
  return t;
}

DatasetSplit load_dataset(const ExperimentConfig& c, const std::filesystem::path& base_dir) {
  if (c.dataset.source == "builtin") {
    return synthetic_digits(c.seed, c.dataset.train_size, c.dataset.test_size,
                            c.dataset.pixel_noise);
  }
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  Dataset train = load_delimited(resolve(c.dataset.path));
  Dataset test = c.dataset.test_path.empty() ? train : load_delimited(resolve(c.dataset.test_path));
  const int classes = std::max(train.num_classes, test.num_classes);
  train.num_classes = test.num_classes = classes;
  if (train.features.cols() != test.features.cols()) {
    throw IoError("dataset", "training and test files have different feature counts");
  }
  return {std::move(train), std::move(test)};
}

void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.sweep_value != b.sweep_value) return a.sweep_value < b.sweep_value;
    if (a.repetition != b.repetition) return a.repetition < b.repetition;
    return a.metric < b.metric;
  });
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows,
                       const std::string& digest) {
  out << "sweep_value,repetition,seed,metric,value,config_digest\n";
  for (const ResultRow& row : rows) {
    out << (row.sweep_value ? format_double(*row.sweep_value) : "") << ',' << row.repetition << ','
        << row.seed << ',' << row.metric << ',' << format_double(row.value) << ',' << digest
        << '\n';
  }
}

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kTaskStream = 0x7461736bULL;

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

// Runs body(k) for k < n on up to `jobs` threads; the first failure by index is rethrown.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        body(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Model {
  DatasetSplit data;
  Mlp net;
  double final_loss = 0.0;
};

void check_network_fits(const Mlp& net, const DatasetSplit& data) {
  if (net.input_size() != data.train.features.cols() ||
      net.output_size() != data.train.num_classes) {
    throw ConfigError("cli", "network shape " + std::to_string(net.input_size()) + " -> " +
                                 std::to_string(net.output_size()) + " does not fit the dataset (" +
                                 std::to_string(data.train.features.cols()) + " features, " +
                                 std::to_string(data.train.num_classes) + " classes)");
  }
}

Mlp initial_network(const ExperimentConfig& c, const std::filesystem::path& base_dir) {
  if (!c.network.weights_file.empty()) {
    std::ifstream in(resolve_path(base_dir, c.network.weights_file));
    if (!in) throw IoError("cli", "cannot read " + c.network.weights_file);
    return read_weights(in).net;
  }
  std::vector<Activation> activations;
  for (const std::string& a : c.network.activations) activations.push_back(activation_from_string(a));
  return Mlp::create(c.network.layers, activations, RandomStream(c.seed, kInitStream));
}

// Loads saved weights as-is, or trains from a seeded initialization.
Model build_model(const ExperimentConfig& c, const std::filesystem::path& base_dir,
                  bool always_train) {
  Model model{load_dataset(c, base_dir), initial_network(c, base_dir), 0.0};
  check_network_fits(model.net, model.data);
  const Samples train = model.data.train.samples();
  if (always_train || c.network.weights_file.empty()) {
    TrainResult trained = train_sgd(std::move(model.net), train, train_config(c));
    model.net = std::move(trained.net);
  }
  model.final_loss = mean_loss(model.net, train, loss_from_string(c.training.loss));
  return model;
}

std::string model_key(const ExperimentConfig& c) {
  const Json j = to_json(c);
  return Json{j["seed"], j["dataset"], j["network"], j["training"]}.dump();
}

// Mean |a_l| over the training set for every layer input (bias included).
std::vector<Vector> expected_layer_inputs(const Mlp& net, const Matrix& inputs) {
  std::vector<Vector> sums;
  for (const DenseLayer& layer : net.layers()) sums.push_back(Vector::Zero(layer.weights.rows()));
  for (Eigen::Index s = 0; s < inputs.rows(); ++s) {
    Vector h = inputs.row(s).transpose();
    for (std::size_t l = 0; l < net.depth(); ++l) {
      Vector a(h.size() + 1);
      a << h, 1.0;
      sums[l] += a.cwiseAbs();
      h = activate(net.layers()[l].activation, matvec_ref(a, net.layers()[l].weights));
    }
  }
  for (Vector& v : sums) v /= static_cast<double>(inputs.rows());
  return sums;
}

struct Deployment {
  std::vector<std::vector<Crossbar>> members;
  std::vector<std::vector<Eigen::Index>> row_order;  // empty when unordered
  std::vector<Matrix> targets;                       // physical weights per layer
};

Deployment deploy(const ExperimentConfig& c, const Model& model, const RandomStream& lineage,
                  const std::optional<CrossbarRecord>& record) {
  const CrossbarConfig base = crossbar_config(c);
  Deployment out;
  if (record) {
    out.members.push_back(restore_crossbars(*record, base, lineage.fork(0)));
    for (const DenseLayer& layer : model.net.layers()) out.targets.push_back(layer.weights);
    if (out.members[0].size() != model.net.depth()) {
      throw ConfigError("cli", "crossbar record has " + std::to_string(out.members[0].size()) +
                                   " arrays for a " + std::to_string(model.net.depth()) +
                                   "-layer network");
    }
    return out;
  }

  Mlp physical = model.net;
  if (c.mitigation.row_ordering != "none") {
    std::vector<Permutation> orders;
    if (c.mitigation.row_ordering == "intensity") {
      for (const Vector& scores : expected_layer_inputs(model.net, model.data.train.features)) {
        orders.push_back(order_rows_by_intensity(scores));
      }
    } else {
      const SensitivityMap map = sensitivity(model.net, model.data.train.samples(), c.training.eta,
                                             loss_from_string(c.training.loss));
      for (std::size_t l = 0; l < model.net.depth(); ++l) {
        orders.push_back(order_rows_by_sensitivity(map, l));
      }
    }
    for (std::size_t l = 0; l < model.net.depth(); ++l) {
      const Matrix& w = model.net.layers()[l].weights;
      Matrix& p = physical.layers()[l].weights;
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        p.row(r) = w.row(orders[l].forward()[static_cast<std::size_t>(r)]);
      }
      out.row_order.push_back(orders[l].forward());
    }
  }
  for (const DenseLayer& layer : physical.layers()) out.targets.push_back(layer.weights);

  for (int k = 0; k < c.mitigation.ensemble_size; ++k) {
    std::vector<Crossbar> arrays =
        program_network(physical, base, lineage.fork(static_cast<std::uint64_t>(k)));
    if (c.mitigation.compensate_stuck) {
      for (std::size_t l = 0; l < arrays.size(); ++l) {
        arrays[l] = compensate_stuck(arrays[l], out.targets[l]).crossbar;
      }
    }
    out.members.push_back(std::move(arrays));
  }
  return out;
}

using Metrics = std::vector<std::pair<std::string, double>>;

Metrics infer_metrics(const ExperimentConfig& c, const Model& model, const Deployment& d) {
  const Dataset& test = model.data.test;
  Eigen::Index correct = 0;
  Eigen::Index exact_correct = 0;
  double dev_sum = 0.0;
  double dev_max = 0.0;
  for (Eigen::Index s = 0; s < test.size(); ++s) {
    const Vector x = test.features.row(s).transpose();
    std::vector<EnsembleMember> members;
    for (const std::vector<Crossbar>& arrays : d.members) {
      members.push_back({&model.net, CrossbarBackend{arrays, c.read, static_cast<std::uint64_t>(s),
                                                     d.row_order}});
    }
    const Vector y = ensemble_predict(members, x);
    const Vector y_exact = forward(model.net, x);
    const int label = test.labels[static_cast<std::size_t>(s)];
    correct += argmax(y) == label;
    exact_correct += argmax(y_exact) == label;
    const Vector dev = (y - y_exact).cwiseAbs();
    dev_sum += dev.mean();
    dev_max = std::max(dev_max, dev.maxCoeff());
  }
  const auto n = static_cast<double>(test.size());
  Metrics m{{"accuracy", static_cast<double>(correct) / n},
            {"exact_accuracy", static_cast<double>(exact_correct) / n},
            {"mean_abs_dev", dev_sum / n},
            {"max_abs_dev", dev_max}};
  for (std::size_t l = 0; l < d.targets.size(); ++l) {
    m.emplace_back("weight_error_l" + std::to_string(l),
                   weight_errors(d.members[0][l], d.targets[l]).mean());
  }
  return m;
}

struct Context {
  ExperimentConfig config;
  std::filesystem::path base_dir;
  std::filesystem::path out_dir;
  std::string digest;
  int jobs = 1;
};

RandomStream task_lineage(const Context& ctx, std::size_t sweep_index, int repetition) {
  return RandomStream(task_seed(ctx.config.seed, sweep_index, repetition), kTaskStream);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cli", "cannot write " + path.string());
  out << content;
  if (!out) throw IoError("cli", "failed writing " + path.string());
}

void write_outputs(const Context& ctx, const std::string& subcommand, std::vector<ResultRow> rows) {
  sort_rows(rows);
  std::ostringstream csv;
  write_results_csv(csv, rows, ctx.digest);
  write_file(ctx.out_dir / "results.csv", csv.str());
  std::ostringstream meta;
  meta << "version " << XBARSIM_VERSION << '\n'
       << "subcommand " << subcommand << '\n'
       << "config_digest " << ctx.digest << '\n'
       << "seed " << ctx.config.seed << '\n';
  write_file(ctx.out_dir / "run.meta", meta.str());
}

void append_metrics(std::vector<ResultRow>& rows, std::optional<double> sweep_value, int rep,
                    std::uint64_t seed, const Metrics& metrics) {
  for (const auto& [name, value] : metrics) rows.push_back({sweep_value, rep, seed, name, value});
}

std::optional<CrossbarRecord> crossbar_record(const ExperimentConfig& c,
                                              const std::filesystem::path& base_dir) {
  if (c.network.crossbar_file.empty()) return std::nullopt;
  std::ifstream in(resolve_path(base_dir, c.network.crossbar_file));
  if (!in) throw IoError("cli", "cannot read " + c.network.crossbar_file);
  return read_crossbars(in);
}

// Infer metrics for every (sweep point, repetition).
std::vector<ResultRow> evaluate(const Context& ctx, const std::vector<ExperimentConfig>& points,
                                const std::vector<std::optional<double>>& sweep_values) {
  std::vector<std::string> keys;
  std::map<std::string, std::size_t> key_index;
  std::vector<std::size_t> point_model(points.size());
  for (std::size_t s = 0; s < points.size(); ++s) {
    const std::string key = model_key(points[s]);
    const auto [it, fresh] = key_index.emplace(key, keys.size());
    if (fresh) keys.push_back(key);
    point_model[s] = it->second;
  }
  std::vector<std::size_t> first_point(keys.size());
  for (std::size_t s = points.size(); s-- > 0;) first_point[point_model[s]] = s;
  std::vector<std::optional<Model>> models(keys.size());
  parallel_for(keys.size(), ctx.jobs, [&](std::size_t k) {
    models[k] = build_model(points[first_point[k]], ctx.base_dir, false);
  });

  const int reps = ctx.config.repetitions;
  std::vector<std::vector<ResultRow>> per_task(points.size() * static_cast<std::size_t>(reps));
  parallel_for(per_task.size(), ctx.jobs, [&](std::size_t t) {
    const std::size_t s = t / static_cast<std::size_t>(reps);
    const int rep = static_cast<int>(t % static_cast<std::size_t>(reps));
    const ExperimentConfig& c = points[s];
    const Model& model = *models[point_model[s]];
    const Deployment d = deploy(c, model, task_lineage(ctx, s, rep), crossbar_record(c, ctx.base_dir));
    append_metrics(per_task[t], sweep_values[s], rep, task_seed(c.seed, s, rep),
                   infer_metrics(c, model, d));
  });
  std::vector<ResultRow> rows;
  for (auto& task : per_task) rows.insert(rows.end(), task.begin(), task.end());
  return rows;
}

void run_infer(const Context& ctx) {
  write_outputs(ctx, "infer", evaluate(ctx, {ctx.config}, {std::nullopt}));
}

void run_sweep(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (c.sweep.paths.empty()) throw ConfigError("cli", "sweep: no sweep.path configured");
  std::vector<ExperimentConfig> points;
  std::vector<std::optional<double>> values;
  for (const double value : c.sweep.values) {
    ExperimentConfig point = c;
    for (const std::string& path : c.sweep.paths) point = with_parameter(point, path, value);
    points.push_back(std::move(point));
    values.emplace_back(value);
  }
  write_outputs(ctx, "sweep", evaluate(ctx, points, values));
}

void run_program(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (c.mitigation.row_ordering != "none" || c.mitigation.ensemble_size != 1) {
    throw ConfigError("cli", "program saves one unordered network: set mitigation.row_ordering "
                             "none and mitigation.ensemble_size 1");
  }
  const Model model = build_model(c, ctx.base_dir, false);
  const Deployment d = deploy(c, model, task_lineage(ctx, 0, 0), std::nullopt);
  std::ostringstream state;
  write_crossbars(state, d.members[0], {ctx.digest, c.seed});
  write_file(ctx.out_dir / "crossbar.state", state.str());

  Metrics metrics;
  for (std::size_t l = 0; l < d.targets.size(); ++l) {
    const Crossbar& xbar = d.members[0][l];
    metrics.emplace_back("weight_error_l" + std::to_string(l),
                         weight_errors(xbar, d.targets[l]).mean());
    metrics.emplace_back("stuck_cells_l" + std::to_string(l),
                         static_cast<double>(xbar.mask_plus().count() + xbar.mask_minus().count()));
  }
  std::vector<ResultRow> rows;
  append_metrics(rows, std::nullopt, 0, task_seed(c.seed, 0, 0), metrics);
  write_outputs(ctx, "program", std::move(rows));
}

void run_train(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  const Model model = build_model(c, ctx.base_dir, true);
  std::ostringstream weights;
  write_weights(weights, model.net, {ctx.digest, c.seed});
  write_file(ctx.out_dir / "weights.state", weights.str());

  const Metrics clean{{"final_loss", model.final_loss},
                      {"test_accuracy", accuracy(model.net, model.data.test)},
                      {"train_accuracy", accuracy(model.net, model.data.train)}};
  std::vector<std::vector<ResultRow>> per_rep(static_cast<std::size_t>(c.repetitions));
  parallel_for(per_rep.size(), ctx.jobs, [&](std::size_t k) {
    const int rep = static_cast<int>(k);
    const Deployment d = deploy(c, model, task_lineage(ctx, 0, rep), std::nullopt);
    const Metrics inferred = infer_metrics(c, model, d);
    Metrics metrics = clean;
    metrics.emplace_back("crossbar_accuracy", inferred.front().second);
    append_metrics(per_rep[k], std::nullopt, rep, task_seed(c.seed, 0, rep), metrics);
  });
  std::vector<ResultRow> rows;
  for (auto& r : per_rep) rows.insert(rows.end(), r.begin(), r.end());
  write_outputs(ctx, "train", std::move(rows));
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (const char ch : text) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return quoted + "\"";
}

void run_report(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (c.mapping.scheme != "differential_pair") {
    throw ConfigError("cli", "report: compensation needs mapping.scheme differential_pair");
  }
  const std::string provenance = ctx.digest + "," + std::to_string(c.seed);
  std::ostringstream devices;
  devices << "name,on_off_min,on_off_max,on_off_nominal,g_off_s,g_on_s,bits,"
             "programming_linearity,drift_nu,drift,inference,training,write_voltage,"
             "write_time_ns,read_time_ns,write_energy,retention,endurance,integration_density,"
             "config_digest,seed\n";
  for (const std::string& name : preset_names()) {
    const DeviceModel d = preset(name);
    devices << csv_field(d.name) << ',' << format_double(d.on_off_min) << ','
            << format_double(d.on_off_max) << ',' << format_double(d.on_off_ratio) << ','
            << format_double(d.g_off) << ',' << format_double(d.g_on()) << ',' << d.bits << ','
            << to_string(d.linearity) << ',' << format_double(d.drift_nu) << ','
            << csv_field(d.drift_label) << ',' << to_string(d.inference) << ','
            << to_string(d.training) << ',' << csv_field(d.write_voltage) << ','
            << csv_field(d.write_time_ns) << ',' << csv_field(d.read_time_ns) << ','
            << csv_field(d.write_energy) << ',' << csv_field(d.retention) << ','
            << csv_field(d.endurance) << ',' << csv_field(d.integration_density) << ','
            << provenance << '\n';
  }
  write_file(ctx.out_dir / "devices.csv", devices.str());

  ExperimentConfig uncompensated = c;
  uncompensated.mitigation = {false, "none", 1};
  const Model model = build_model(c, ctx.base_dir, false);
  std::vector<std::string> reports(static_cast<std::size_t>(c.repetitions));
  std::vector<std::vector<ResultRow>> per_rep(reports.size());
  parallel_for(reports.size(), ctx.jobs, [&](std::size_t k) {
    const int rep = static_cast<int>(k);
    const Deployment d = deploy(uncompensated, model, task_lineage(ctx, 0, rep), std::nullopt);
    std::ostringstream out;
    double before = 0.0;
    double after = 0.0;
    double adjusted = 0.0;
    double both = 0.0;
    double cells = 0.0;
    for (std::size_t l = 0; l < d.targets.size(); ++l) {
      const CompensationResult fixed = compensate_stuck(d.members[0][l], d.targets[l]);
      fixed.report.write_csv(out, "", std::to_string(l) + "," + std::to_string(rep) + "," +
                                          provenance);
      before += weight_errors(d.members[0][l], d.targets[l]).sum();
      after += weight_errors(fixed.crossbar, d.targets[l]).sum();
      adjusted += static_cast<double>(fixed.report.adjusted.size());
      both += static_cast<double>(fixed.report.both_stuck.size());
      cells += static_cast<double>(d.targets[l].size());
    }
    reports[k] = out.str();
    append_metrics(per_rep[k], std::nullopt, rep, task_seed(c.seed, 0, rep),
                   {{"adjusted_cells", adjusted},
                    {"both_stuck_cells", both},
                    {"weight_error_after", after / cells},
                    {"weight_error_before", before / cells}});
  });
  // One header, then every layer and repetition in order.
  std::ostringstream compensation;
  compensation << "row,col,side,new_value_s,residual,layer,repetition,config_digest,seed\n";
  for (const std::string& report : reports) {
    std::istringstream lines(report);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("row,col,", 0) != 0) compensation << line << '\n';
    }
  }
  write_file(ctx.out_dir / "compensation.csv", compensation.str());
  std::vector<ResultRow> rows;
  for (auto& r : per_rep) rows.insert(rows.end(), r.begin(), r.end());
  write_outputs(ctx, "report", std::move(rows));
}

}  // namespace

int run(const RunOptions& options, std::ostream& log, std::ostream& err) {
  static const std::set<std::string> known = {"program", "infer", "sweep", "train", "report",
                                              "validate"};
  if (!known.count(options.subcommand)) {
    err << "error: unknown subcommand '" << options.subcommand << "'\n";
    return 2;
  }
  std::vector<Diagnostic> diagnostics;
  std::string text;
  try {
    text = read_text(options.config_path);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  const Parsed parsed = parse_and_check(text);
  for (const Diagnostic& d : parsed.diagnostics) err << options.config_path.string() << ": " << d << '\n';
  if (options.subcommand == "validate") {
    if (parsed.diagnostics.empty()) log << options.config_path.string() << ": ok\n";
    return parsed.diagnostics.empty() ? 0 : 2;
  }
  if (!parsed.diagnostics.empty()) return 2;

  Context ctx;
  ctx.config = parsed.config;
  if (options.seed) ctx.config.seed = *options.seed;
  ctx.base_dir = options.config_path.parent_path();
  ctx.out_dir = options.out_dir;
  ctx.digest = config_digest(ctx.config);
  ctx.jobs = std::max(1, options.jobs);
  try {
    std::filesystem::create_directories(ctx.out_dir);
    if (options.subcommand == "program") run_program(ctx);
    if (options.subcommand == "infer") run_infer(ctx);
    if (options.subcommand == "sweep") run_sweep(ctx);
    if (options.subcommand == "train") run_train(ctx);
    if (options.subcommand == "report") run_report(ctx);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: cli: " << e.what() << '\n';
    return 1;
  }
  log << options.subcommand << ": wrote " << ctx.out_dir.string() << " (config " << ctx.digest
      << ", seed " << ctx.config.seed << ")\n";
  return 0;
}

}  // namespace xbarsim
