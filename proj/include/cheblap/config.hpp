#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "cheblap/graph.hpp"
#include "cheblap/model.hpp"

namespace cheblap {

using KeyValues = std::map<std::string, std::string>;

struct TrainConfig {
  int epochs = 1800;
  int batch_size = 200;
  double lr = 0.01;  // initial global learning rate nu(0)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int order = 4;  // K
  LaplacianFamily kind = LaplacianFamily::Ndrw;
  bool sym = true;
  bool orth = true;
  Mode mode = Mode::Learned;
  std::uint64_t seed = 1;
  int channels = 64;
  int blocks = 1;
  bool final_relu = true;
  int chunks = 4;  // M
  std::array<Index, 3> ref_joints{1, 3, 6};
  double tll_penalty = 1e-2;
  double init_noise = 0.01;
  bool deterministic = false;
  int threads = 0;  // 0: hardware concurrency (capped by CHEBLAP_THREADS)

  LaplacianKind laplacian_kind() const { return {kind, sym}; }
};

// Keys every configuration must provide (from the file or a flag).
inline constexpr std::array<const char*, 3> kRequiredKeys = {"K", "kind", "mode"};

// `key = value` lines; '#' starts a comment. Unknown or duplicate keys are
// ConfigError.
KeyValues parse_config_text(std::istream& in, const std::string& source);

// Applies defaults < file < overrides and validates the result.
TrainConfig resolve_config(const KeyValues& file, const KeyValues& overrides = {});

// Canonical key/value listing of a config (every key, fixed order).
std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& cfg);

}  // namespace cheblap
