#include "cheblap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdio>
#include <random>

#include "cheblap/error.hpp"
#include "cheblap/text_io.hpp"

namespace cheblap {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Rest pose of the 15-joint SBU skeleton, meters, y up, facing -z.
Matrix sbu_rest_pose() {
  Matrix p(15, 3);
  p << 0.00, 1.68, 0.00,   // head
      0.00, 1.50, 0.00,    // neck
      0.00, 1.15, 0.02,    // torso
      0.19, 1.43, 0.00,    // L shoulder
      0.27, 1.16, 0.03,    // L elbow
      0.31, 0.90, 0.06,    // L hand
      -0.19, 1.43, 0.00,   // R shoulder
      -0.27, 1.16, 0.03,   // R elbow
      -0.31, 0.90, 0.06,   // R hand
      0.10, 0.92, 0.00,    // L hip
      0.12, 0.50, 0.02,    // L knee
      0.12, 0.08, 0.00,    // L foot
      -0.10, 0.92, 0.00,   // R hip
      -0.12, 0.50, 0.02,   // R knee
      -0.12, 0.08, 0.00;   // R foot
  return p;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace

SynthDataset synth_generate(const SynthSpec& spec) {
  if (spec.classes < 2 || spec.train_per_class < 0 || spec.test_per_class < 0 || spec.frames < 1) {
    throw Error(ErrorCode::ConfigError, "synthetic spec needs >= 2 classes, >= 1 frame and nonnegative counts");
  }
  if (spec.joints < 7) throw Error(ErrorCode::ConfigError, "synthetic skeletons need at least 7 joints");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthDataset data;
  Matrix rest;
  const Index n = spec.joints;
  if (n == 15) {
    rest = sbu_rest_pose();
    data.skeleton = sbu_skeleton_edges();
  } else {
    // Chain skeleton over a random pose; joints 1, 3, 6 stay well apart.
    rest = Matrix(n, 3);
    for (Index j = 0; j < n; ++j) {
      rest(j, 0) = 0.4 * (unit(rng) - 0.5);
      rest(j, 1) = 1.8 * static_cast<double>(n - j) / static_cast<double>(n);
      rest(j, 2) = 0.1 * (unit(rng) - 0.5);
    }
    rest.row(1) << 0.0, 1.5, 0.0;
    rest.row(3) << 0.2, 1.42, 0.0;
    rest.row(6) << -0.2, 1.42, 0.0;
    for (Index j = 0; j + 1 < n; ++j) data.skeleton.emplace_back(j, j + 1);
  }
  data.reference_joints = {1, 3, 6};

  // Hidden pairs: a matching over the non-reference joints whose partners are
  // at least three skeleton hops apart, so that no handcrafted neighbourhood
  // ever holds both. Falls back to two hops for small chain skeletons.
  std::vector<std::vector<Index>> hops(n, std::vector<Index>(n, n + 1));
  {
    std::vector<std::vector<Index>> nbr(n);
    for (auto [a, b] : data.skeleton) {
      nbr[a].push_back(b);
      nbr[b].push_back(a);
    }
    for (Index src = 0; src < n; ++src) {
      std::vector<Index> queue{src};
      hops[src][src] = 0;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        for (Index v : nbr[queue[q]]) {
          if (hops[src][v] > n) {
            hops[src][v] = hops[src][queue[q]] + 1;
            queue.push_back(v);
          }
        }
      }
    }
  }
  std::vector<Index> free;
  for (Index j = 0; j < n; ++j) {
    if (std::find(data.reference_joints.begin(), data.reference_joints.end(), j) == data.reference_joints.end()) {
      free.push_back(j);
    }
  }
  constexpr int kAttempts = 2000;
  bool placed = false;
  for (Index min_hops : {Index{3}, Index{2}}) {
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      std::shuffle(free.begin(), free.end(), rng);
      data.hidden.clear();
      placed = true;
      for (std::size_t i = 0; i + 1 < free.size(); i += 2) {
        if (hops[free[i]][free[i + 1]] < min_hops) {
          placed = false;
          break;
        }
        data.hidden.emplace_back(std::min(free[i], free[i + 1]), std::max(free[i], free[i + 1]));
      }
    }
    if (placed) break;
  }
  if (!placed) throw Error(ErrorCode::ConfigError, "could not place a hidden graph off the skeleton");
  std::sort(data.hidden.begin(), data.hidden.end());
  const std::size_t pairs = data.hidden.size();

  // Fixed oscillation direction per pair; per-class phase pattern
  // (class 0 all in phase, class 1 all anti-phase, further classes random).
  std::vector<Eigen::RowVector3d> direction(pairs);
  for (auto& d : direction) d = Eigen::RowVector3d(gauss(rng), gauss(rng), gauss(rng)).normalized();
  std::vector<std::vector<bool>> anti(spec.classes, std::vector<bool>(pairs));
  for (int c = 0; c < spec.classes; ++c) {
    for (std::size_t p = 0; p < pairs; ++p) anti[c][p] = c == 1 ? true : (c == 0 ? false : unit(rng) < 0.5);
  }

  const double two_pi = 2.0 * kPi;
  auto make_sequence = [&](int label) {
    SkeletonSequence seq;
    seq.label = label;
    seq.reference_joints = data.reference_joints;
    const int t_count = spec.frames;
    // Per-pair phase and shared displacement: three harmonics per coordinate.
    std::vector<double> phase(pairs);
    std::vector<std::array<std::array<double, 3>, 3>> amp(pairs), shift(pairs);
    for (std::size_t p = 0; p < pairs; ++p) {
      phase[p] = two_pi * unit(rng);
      for (int h = 0; h < 3; ++h)
        for (int d = 0; d < 3; ++d) {
          amp[p][h][d] = spec.shared_noise * gauss(rng) / (h + 1);
          shift[p][h][d] = two_pi * unit(rng);
        }
    }
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    Eigen::RowVector3d offset = Eigen::RowVector3d::Zero();
    double scale = 1.0;
    if (spec.random_similarity) {
      rot = random_rotation(rng);
      offset = Eigen::RowVector3d(gauss(rng), gauss(rng), gauss(rng));
      scale = 0.5 + 1.5 * unit(rng);
    }
    for (int t = 0; t < t_count; ++t) {
      const double tau = static_cast<double>(t) / t_count;
      Matrix f = rest;
      for (std::size_t p = 0; p < pairs; ++p) {
        Eigen::RowVector3d shared;
        for (int d = 0; d < 3; ++d) {
          double s = 0.0;
          for (int h = 0; h < 3; ++h) s += amp[p][h][d] * std::sin(two_pi * (h + 1) * tau + shift[p][h][d]);
          shared(d) = s;
        }
        const double su = std::sin(two_pi * tau + phase[p]);
        const double sv = anti[label][p] ? -su : su;
        f.row(data.hidden[p].first) += shared + spec.signal_amplitude * su * direction[p];
        f.row(data.hidden[p].second) += shared + spec.signal_amplitude * sv * direction[p];
      }
      for (Index j = 0; j < n; ++j)
        for (int d = 0; d < 3; ++d) f(j, d) += spec.jitter * gauss(rng);
      f = scale * (f * rot.transpose());
      f.rowwise() += offset;
      seq.frames.push_back(std::move(f));
    }
    return seq;
  };

  for (int split = 0; split < 2; ++split) {
    const int per_class = split == 0 ? spec.train_per_class : spec.test_per_class;
    for (int i = 0; i < per_class; ++i) {
      for (int c = 0; c < spec.classes; ++c) {
        data.sequences.push_back(make_sequence(c));
        data.is_test.push_back(split == 1);
      }
    }
  }
  return data;
}

void write_dataset_dir(const std::filesystem::path& dir, const SynthDataset& data) {
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq/%05zu.txt", i);
    auto out = io::open_output(dir / name);
    write_sequence(out, data.sequences[i]);
    entries.push_back({name, data.sequences[i].label, data.is_test[i]});
  }
  auto manifest = io::open_output(dir / kManifestFile);
  write_manifest(manifest, entries);
  auto edges = io::open_output(dir / kEdgesFile);
  write_edge_list(edges, data.skeleton);
  auto hidden = io::open_output(dir / kHiddenEdgesFile);
  write_edge_list(hidden, data.hidden);
}

Dataset to_dataset(const SynthDataset& data, int chunks) {
  Dataset ds;
  ds.nodes = data.sequences.empty() ? 0 : data.sequences.front().joint_count();
  ds.features = 3 * chunks;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    TrajectoryGraph g = build_graph(normalize_sequence(data.sequences[i]), data.skeleton, chunks);
    ds.num_classes = std::max(ds.num_classes, g.label + 1);
    (data.is_test[i] ? ds.test : ds.train).push_back(std::move(g));
  }
  return ds;
}

}  // namespace cheblap
