#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cheblap/skeleton.hpp"

namespace cheblap {

// Synthetic interaction data. Joints are paired by a hidden interaction graph
// whose partners are never within two skeleton hops. Each pair carries a
// common smooth random displacement (the same on both joints) and a sinusoid with a random
// per-sequence phase; the class decides, pair by pair, whether the two
// joints oscillate in phase or in anti-phase. Differences along hidden edges
// cancel the shared displacement and expose the class, while skeleton
// neighbours and raw chunk means do not.
struct SynthSpec {
  int classes = 2;
  int train_per_class = 100;
  int test_per_class = 50;
  Index joints = 15;
  int frames = 40;
  std::uint64_t seed = 7;
  double signal_amplitude = 0.2;   // meters
  double shared_noise = 0.05;      // meters, per pair
  double jitter = 0.004;           // meters, iid per coordinate
  bool random_similarity = true;
};

struct SynthDataset {
  std::vector<SkeletonSequence> sequences;  // train then test, balanced per class
  std::vector<bool> is_test;
  EdgeList skeleton;
  EdgeList hidden;
  std::array<Index, 3> reference_joints{1, 3, 6};
};

SynthDataset synth_generate(const SynthSpec& spec);

inline constexpr const char* kHiddenEdgesFile = "hidden_edges.txt";

// Writes manifest.txt, edges.txt, hidden_edges.txt and seq/NNNN.txt.
void write_dataset_dir(const std::filesystem::path& dir, const SynthDataset& data);

// Normalized, chunked graphs split into train/test, without a disk round trip.
Dataset to_dataset(const SynthDataset& data, int chunks);

}  // namespace cheblap
