#include "cheblap/config.hpp"

#include <algorithm>
#include <istream>
#include <set>

#include "cheblap/error.hpp"
#include "cheblap/text_io.hpp"

namespace cheblap {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "K", "kind", "sym", "orth", "mode", "seed",
      "channels", "blocks", "final_relu", "chunks", "ref_joints", "tll_penalty", "init_noise", "deterministic",
      "threads"};
  return keys;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

Error config_error(const std::string& msg) { return Error(ErrorCode::ConfigError, msg); }

long long as_int(const std::string& key, const std::string& v) {
  try {
    return io::parse_integer(v, "config key '" + key + "'");
  } catch (const Error& e) {
    throw config_error(e.what());
  }
}

double as_double(const std::string& key, const std::string& v) {
  try {
    return io::parse_double(v, "config key '" + key + "'");
  } catch (const Error& e) {
    throw config_error(e.what());
  }
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw config_error("config key '" + key + "' must be 0 or 1, got '" + v + "'");
}

}  // namespace

KeyValues parse_config_text(std::istream& in, const std::string& source) {
  io::LineReader reader(in, source);
  KeyValues out;
  std::string line;
  while (reader.next(line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(reader.where() + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_keys().count(key)) throw config_error(reader.where() + ": unknown config key '" + key + "'");
    if (out.count(key)) throw config_error(reader.where() + ": duplicate config key '" + key + "'");
    out[key] = value;
  }
  return out;
}

TrainConfig resolve_config(const KeyValues& file, const KeyValues& overrides) {
  KeyValues merged = file;
  for (const auto& [k, v] : overrides) {
    if (!known_keys().count(k)) throw config_error("unknown config key '" + k + "'");
    merged[k] = v;
  }
  for (const char* key : kRequiredKeys) {
    if (!merged.count(key)) throw config_error(std::string("missing required config key '") + key + "'");
  }

  TrainConfig c;
  for (const auto& [key, v] : merged) {
    if (key == "epochs") c.epochs = static_cast<int>(as_int(key, v));
    else if (key == "batch_size") c.batch_size = static_cast<int>(as_int(key, v));
    else if (key == "lr") c.lr = as_double(key, v);
    else if (key == "beta1") c.beta1 = as_double(key, v);
    else if (key == "beta2") c.beta2 = as_double(key, v);
    else if (key == "adam_eps") c.adam_eps = as_double(key, v);
    else if (key == "K") c.order = static_cast<int>(as_int(key, v));
    else if (key == "kind") {
      auto f = parse_family(v);
      if (!f) throw config_error("config key 'kind' must be one of comb, ndrw, drw, ndn, dn; got '" + v + "'");
      c.kind = *f;
    } else if (key == "sym") c.sym = as_bool(key, v);
    else if (key == "orth") c.orth = as_bool(key, v);
    else if (key == "mode") c.mode = parse_mode(v);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int(key, v));
    else if (key == "channels") c.channels = static_cast<int>(as_int(key, v));
    else if (key == "blocks") c.blocks = static_cast<int>(as_int(key, v));
    else if (key == "final_relu") c.final_relu = as_bool(key, v);
    else if (key == "chunks") c.chunks = static_cast<int>(as_int(key, v));
    else if (key == "ref_joints") {
      std::string spaced = v;
      std::replace(spaced.begin(), spaced.end(), ',', ' ');
      auto tokens = io::split_whitespace(spaced);
      if (tokens.size() != 3) throw config_error("config key 'ref_joints' needs three joint indices");
      for (int i = 0; i < 3; ++i) c.ref_joints[i] = as_int(key, std::string(tokens[i]));
    } else if (key == "tll_penalty") c.tll_penalty = as_double(key, v);
    else if (key == "init_noise") c.init_noise = as_double(key, v);
    else if (key == "deterministic") c.deterministic = as_bool(key, v);
    else if (key == "threads") c.threads = static_cast<int>(as_int(key, v));
  }

  if (c.epochs < 1) throw config_error("epochs must be positive");
  if (c.batch_size < 1) throw config_error("batch_size must be positive");
  if (!(c.lr > 0.0)) throw config_error("lr must be positive");
  if (c.order < 1 || c.order > kMaxOrder) throw config_error("K must be in [1, 32]");
  if (c.channels < 1 || c.blocks < 1) throw config_error("channels and blocks must be positive");
  if (c.chunks < 1) throw config_error("chunks must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw config_error("Adam betas must be in [0, 1)");
  }
  if (c.tll_penalty < 0.0 || c.init_noise < 0.0) throw config_error("tll_penalty and init_noise must be >= 0");
  if (c.threads < 0) throw config_error("threads must be >= 0");
  return c;
}

std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& c) {
  auto d = [](double x) { return io::format_double(x); };
  auto b = [](bool x) { return std::string(x ? "1" : "0"); };
  std::string lower(family_name(c.kind));
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return {{"epochs", std::to_string(c.epochs)},
          {"batch_size", std::to_string(c.batch_size)},
          {"lr", d(c.lr)},
          {"beta1", d(c.beta1)},
          {"beta2", d(c.beta2)},
          {"adam_eps", d(c.adam_eps)},
          {"K", std::to_string(c.order)},
          {"kind", lower},
          {"sym", b(c.sym)},
          {"orth", b(c.orth)},
          {"mode", to_string(c.mode)},
          {"seed", std::to_string(c.seed)},
          {"channels", std::to_string(c.channels)},
          {"blocks", std::to_string(c.blocks)},
          {"final_relu", b(c.final_relu)},
          {"chunks", std::to_string(c.chunks)},
          {"ref_joints", std::to_string(c.ref_joints[0]) + " " + std::to_string(c.ref_joints[1]) + " " +
                             std::to_string(c.ref_joints[2])},
          {"tll_penalty", d(c.tll_penalty)},
          {"init_noise", d(c.init_noise)},
          {"deterministic", b(c.deterministic)},
          {"threads", std::to_string(c.threads)}};
}

}  // namespace cheblap
