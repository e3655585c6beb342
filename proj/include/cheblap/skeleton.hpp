#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cheblap/matrix.hpp"

namespace cheblap {

using Edge = std::pair<Index, Index>;
using EdgeList = std::vector<Edge>;

// T frames of n joints, each frame an n x 3 matrix of coordinates.
struct SkeletonSequence {
  std::vector<Matrix> frames;
  std::array<Index, 3> reference_joints{1, 3, 6};  // (p1, p2, p3)
  int label = 0;

  Index frame_count() const { return static_cast<Index>(frames.size()); }
  Index joint_count() const { return frames.empty() ? 0 : frames.front().rows(); }
};

struct TrajectoryGraph {
  Matrix psi;         // s x n, s = 3M
  Matrix adjacency;   // n x n handcrafted graph
  int label = 0;
};

// Distance between p2 and p3 after normalization.
inline constexpr double kReferenceWidth = 1.0;

// Similarity transform (translation, rotation, scale) estimated on frame 0:
// (p2+p3)/2 goes to the origin, p2-p3 to +x, the (p1,p2,p3) plane onto x-y
// with p1 on the +y side, and |p2-p3| to kReferenceWidth. Applied to all frames.
SkeletonSequence normalize_sequence(const SkeletonSequence& seq);

// Node descriptors from M equal chunks; chunk c covers frames
// [floor(cT/M), floor((c+1)T/M)). Row 3c+d of column j is the mean of
// coordinate d of joint j over chunk c.
Matrix temporal_chunk(const SkeletonSequence& seq, int chunks);

// Symmetric 0/1 adjacency from an undirected edge list.
Matrix adjacency_from_edges(const EdgeList& edges, Index n);

TrajectoryGraph build_graph(const SkeletonSequence& normalized, const EdgeList& edges, int chunks);

// 15-joint SBU skeleton (0-based): head, neck, torso, L shoulder/elbow/hand,
// R shoulder/elbow/hand, L hip/knee/foot, R hip/knee/foot.
EdgeList sbu_skeleton_edges();
// Two SBU skeletons side by side (30 nodes), no cross-person edges.
EdgeList sbu_two_person_edges();
// 21-joint FPHA hand: wrist, five MCP joints, then PIP/DIP/TIP per finger.
EdgeList fpha_hand_edges();

// ---- text formats ----

// Sequence file: `T n`, then T lines of 3n values (x y z per joint).
SkeletonSequence read_sequence(std::istream& in, const std::string& source);
void write_sequence(std::ostream& out, const SkeletonSequence& seq);

// Edge list: one `i j` per line, 0-based.
EdgeList read_edge_list(std::istream& in, const std::string& source);
void write_edge_list(std::ostream& out, const EdgeList& edges);

struct ManifestEntry {
  std::string path;
  int label = 0;
  bool test = false;
};
// `relative_path label split` per line, split in {train, test}.
std::vector<ManifestEntry> read_manifest(std::istream& in, const std::string& source);
void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries);

struct LoadOptions {
  EdgeList edges;
  std::array<Index, 3> reference_joints{1, 3, 6};
  int chunks = 4;
};

struct Dataset {
  std::vector<TrajectoryGraph> train;
  std::vector<TrajectoryGraph> test;
  int num_classes = 0;
  Index nodes = 0;
  Index features = 0;
};

// Loads every manifest entry (paths relative to the manifest's directory),
// normalizes and chunks it. Output order follows the manifest.
Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& opts);

// Data directory layout: manifest.txt + edges.txt + the sequence files.
inline constexpr const char* kManifestFile = "manifest.txt";
inline constexpr const char* kEdgesFile = "edges.txt";
Dataset load_dataset_dir(const std::filesystem::path& dir, std::array<Index, 3> reference_joints, int chunks);

}  // namespace cheblap
