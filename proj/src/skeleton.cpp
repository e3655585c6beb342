#include "cheblap/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "cheblap/error.hpp"
#include "cheblap/exact_sum.hpp"
#include "cheblap/text_io.hpp"

namespace cheblap {

namespace {

Eigen::RowVector3d joint(const Matrix& frame, Index j) { return frame.row(j); }

void check_sequence(const SkeletonSequence& seq) {
  if (seq.frames.empty()) throw Error(ErrorCode::TooShort, "sequence has no frames");
  const Index n = seq.joint_count();
  for (const auto& f : seq.frames) {
    if (f.rows() != n || f.cols() != 3) throw Error(ErrorCode::ShapeMismatch, "frames must all be n x 3");
    if (!f.allFinite()) throw Error(ErrorCode::NonFinite, "sequence has non-finite coordinates");
  }
}

}  // namespace

SkeletonSequence normalize_sequence(const SkeletonSequence& seq) {
  check_sequence(seq);
  const Index n = seq.joint_count();
  for (Index r : seq.reference_joints) {
    if (r < 0 || r >= n) throw Error(ErrorCode::IndexOutOfRange, "reference joint " + std::to_string(r) + " out of range");
  }
  const Matrix& f0 = seq.frames.front();
  const Eigen::RowVector3d p1 = joint(f0, seq.reference_joints[0]);
  const Eigen::RowVector3d p2 = joint(f0, seq.reference_joints[1]);
  const Eigen::RowVector3d p3 = joint(f0, seq.reference_joints[2]);
  const double area = 0.5 * (p2 - p1).cross(p3 - p1).norm();
  const double width = (p2 - p3).norm();
  if (!(area > 1e-9) || !(width > 1e-12)) {
    throw Error(ErrorCode::DegenerateReference, "reference joints are collinear or coincident in frame 0");
  }
  const Eigen::RowVector3d origin = 0.5 * (p2 + p3);
  const Eigen::Vector3d e1 = ((p2 - p3) / width).transpose();
  const Eigen::Vector3d w = (p1 - origin).transpose();
  const Eigen::Vector3d e3 = e1.cross(w).normalized();
  const Eigen::Vector3d e2 = e3.cross(e1);
  Eigen::Matrix3d rot;
  rot.col(0) = e1;
  rot.col(1) = e2;
  rot.col(2) = e3;
  const double gamma = kReferenceWidth / width;

  SkeletonSequence out = seq;
  for (auto& f : out.frames) f = gamma * ((f.rowwise() - origin) * rot);
  return out;
}

Matrix temporal_chunk(const SkeletonSequence& seq, int chunks) {
  if (chunks < 1) throw Error(ErrorCode::InvalidOrder, "chunk count must be >= 1");
  check_sequence(seq);
  const Index t_count = seq.frame_count();
  if (t_count < chunks) {
    throw Error(ErrorCode::TooShort, "sequence has " + std::to_string(t_count) + " frames, fewer than " +
                                         std::to_string(chunks) + " chunks");
  }
  const Index n = seq.joint_count();
  Matrix psi(3 * chunks, n);
  std::vector<double> buf;
  for (int c = 0; c < chunks; ++c) {
    const Index begin = c * t_count / chunks;
    const Index end = (c + 1) * t_count / chunks;
    const auto count = static_cast<double>(end - begin);
    for (Index j = 0; j < n; ++j) {
      for (int d = 0; d < 3; ++d) {
        buf.clear();
        for (Index t = begin; t < end; ++t) buf.push_back(seq.frames[t](j, d));
        psi(3 * c + d, j) = exact_sum(buf) / count;
      }
    }
  }
  return psi;
}

Matrix adjacency_from_edges(const EdgeList& edges, Index n) {
  Matrix a = Matrix::Zero(n, n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw Error(ErrorCode::IndexOutOfRange, "edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                                  ") outside " + std::to_string(n) + " joints");
    }
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

TrajectoryGraph build_graph(const SkeletonSequence& normalized, const EdgeList& edges, int chunks) {
  TrajectoryGraph g;
  g.adjacency = adjacency_from_edges(edges, normalized.joint_count());
  g.psi = temporal_chunk(normalized, chunks);
  g.label = normalized.label;
  return g;
}

EdgeList sbu_skeleton_edges() {
  return {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {4, 5}, {1, 6}, {6, 7}, {7, 8},
          {2, 9}, {9, 10}, {10, 11}, {2, 12}, {12, 13}, {13, 14}};
}

EdgeList sbu_two_person_edges() {
  EdgeList e = sbu_skeleton_edges();
  const std::size_t one = e.size();
  for (std::size_t i = 0; i < one; ++i) e.emplace_back(e[i].first + 15, e[i].second + 15);
  return e;
}

EdgeList fpha_hand_edges() {
  EdgeList e;
  for (Index f = 0; f < 5; ++f) {
    const Index mcp = 1 + f;
    const Index pip = 6 + 3 * f;
    e.emplace_back(0, mcp);
    e.emplace_back(mcp, pip);
    e.emplace_back(pip, pip + 1);
    e.emplace_back(pip + 1, pip + 2);
  }
  return e;
}

SkeletonSequence read_sequence(std::istream& in, const std::string& source) {
  io::LineReader reader(in, source);
  const std::string head_text = reader.expect("'T n' header");
  auto head = io::split_whitespace(head_text);
  if (head.size() != 2) throw Error(ErrorCode::ParseError, reader.where() + ": expected 'T n'");
  const long long t_count = io::parse_integer(head[0], reader.where());
  const long long n = io::parse_integer(head[1], reader.where());
  if (t_count < 1 || n < 1) throw Error(ErrorCode::ParseError, reader.where() + ": T and n must be positive");
  SkeletonSequence seq;
  seq.frames.reserve(t_count);
  for (long long t = 0; t < t_count; ++t) {
    const std::string tokens_text = reader.expect("frame");
    auto tokens = io::split_whitespace(tokens_text);
    if (static_cast<long long>(tokens.size()) != 3 * n) {
      throw Error(ErrorCode::ParseError, reader.where() + ": expected " + std::to_string(3 * n) + " values, got " +
                                             std::to_string(tokens.size()));
    }
    Matrix f(n, 3);
    for (long long j = 0; j < n; ++j)
      for (int d = 0; d < 3; ++d) f(j, d) = io::parse_double(tokens[3 * j + d], reader.where());
    if (!f.allFinite()) throw Error(ErrorCode::ParseError, reader.where() + ": non-finite coordinate");
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

void write_sequence(std::ostream& out, const SkeletonSequence& seq) {
  out << seq.frame_count() << ' ' << seq.joint_count() << '\n';
  for (const auto& f : seq.frames) {
    for (Index j = 0; j < f.rows(); ++j) {
      for (int d = 0; d < 3; ++d) {
        if (j || d) out << ' ';
        out << io::format_double(f(j, d));
      }
    }
    out << '\n';
  }
}

EdgeList read_edge_list(std::istream& in, const std::string& source) {
  io::LineReader reader(in, source);
  EdgeList edges;
  std::string line;
  while (reader.next(line)) {
    auto tokens = io::split_whitespace(line);
    if (tokens.size() != 2) throw Error(ErrorCode::ParseError, reader.where() + ": expected 'i j'");
    edges.emplace_back(io::parse_integer(tokens[0], reader.where()), io::parse_integer(tokens[1], reader.where()));
  }
  return edges;
}

void write_edge_list(std::ostream& out, const EdgeList& edges) {
  for (const auto& [i, j] : edges) out << i << ' ' << j << '\n';
}

std::vector<ManifestEntry> read_manifest(std::istream& in, const std::string& source) {
  io::LineReader reader(in, source);
  std::vector<ManifestEntry> out;
  std::string line;
  while (reader.next(line)) {
    auto tokens = io::split_whitespace(line);
    if (tokens.size() != 3) throw Error(ErrorCode::ParseError, reader.where() + ": expected 'path label split'");
    ManifestEntry e;
    e.path = std::string(tokens[0]);
    const long long label = io::parse_integer(tokens[1], reader.where());
    if (label < 0) throw Error(ErrorCode::ParseError, reader.where() + ": negative label");
    e.label = static_cast<int>(label);
    if (tokens[2] == "train") {
      e.test = false;
    } else if (tokens[2] == "test") {
      e.test = true;
    } else {
      throw Error(ErrorCode::ParseError, reader.where() + ": split must be 'train' or 'test'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(std::ostream& out, const std::vector<ManifestEntry>& entries) {
  for (const auto& e : entries) out << e.path << ' ' << e.label << ' ' << (e.test ? "test" : "train") << '\n';
}

Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& opts) {
  auto in = io::open_input(manifest);
  const auto entries = read_manifest(in, manifest.string());
  const auto base = manifest.parent_path();
  Dataset ds;
  for (const auto& e : entries) {
    const auto path = base / e.path;
    auto seq_in = io::open_input(path);
    SkeletonSequence seq = read_sequence(seq_in, path.string());
    seq.label = e.label;
    seq.reference_joints = opts.reference_joints;
    if (ds.nodes == 0) {
      ds.nodes = seq.joint_count();
    } else if (seq.joint_count() != ds.nodes) {
      throw Error(ErrorCode::ParseError, path.string() + ": joint count differs from earlier sequences");
    }
    TrajectoryGraph g = build_graph(normalize_sequence(seq), opts.edges, opts.chunks);
    ds.num_classes = std::max(ds.num_classes, e.label + 1);
    (e.test ? ds.test : ds.train).push_back(std::move(g));
  }
  ds.features = 3 * opts.chunks;
  return ds;
}

Dataset load_dataset_dir(const std::filesystem::path& dir, std::array<Index, 3> reference_joints, int chunks) {
  auto edges_in = io::open_input(dir / kEdgesFile);
  LoadOptions opts;
  opts.edges = read_edge_list(edges_in, (dir / kEdgesFile).string());
  opts.reference_joints = reference_joints;
  opts.chunks = chunks;
  return load_dataset(dir / kManifestFile, opts);
}

}  // namespace cheblap
