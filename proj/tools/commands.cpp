#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "cheblap/config.hpp"
#include "cheblap/error.hpp"
#include "cheblap/gradcheck.hpp"
#include "cheblap/model.hpp"
#include "cheblap/skeleton.hpp"
#include "cheblap/synth.hpp"
#include "cheblap/text_io.hpp"
#include "cheblap/train.hpp"

namespace cheblap::cli {
namespace fs = std::filesystem;

namespace {

// Failure in a given stage of a command, already mapped to an exit code.
struct StageError {
  int code;
  std::string message;
};

template <class F>
auto stage(int code, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError{code, e.what()};
  } catch (const std::ios_base::failure& e) {
    throw StageError{code, e.what()};
  }
}

struct SharedFlags {
  std::string config;
  std::string data;
  std::string out;
  std::string mode;
  std::string kind;
  int sym = -1;
  int orth = -1;
  int order = -1;
  long long seed = -1;
  bool deterministic = false;
  std::vector<std::string> sets;  // key=value
};

void add_shared(CLI::App& cmd, SharedFlags& f, bool needs_out) {
  cmd.add_option("--config", f.config, "Configuration file of key = value lines");
  cmd.add_option("--data", f.data, "Dataset directory holding manifest.txt and edges.txt");
  auto* out = cmd.add_option("--out", f.out, "Output directory");
  if (needs_out) out->required();
  cmd.add_option("--mode", f.mode, "Graph mode")->check(CLI::IsMember({"hl", "ml", "tll", "learned"}, CLI::ignore_case));
  cmd.add_option("--kind", f.kind, "Laplacian family")
      ->check(CLI::IsMember({"comb", "ndrw", "drw", "ndn", "dn"}, CLI::ignore_case));
  cmd.add_option("--sym", f.sym, "Symmetrize the adjacency (0 or 1)")->check(CLI::IsMember({0, 1}));
  cmd.add_option("--orth", f.orth, "Spectral rescaling, or the Gram penalty in tll mode (0 or 1)")
      ->check(CLI::IsMember({0, 1}));
  cmd.add_option("--K", f.order, "Chebyshev order")->check(CLI::PositiveNumber);
  cmd.add_option("--seed", f.seed, "Random seed")->check(CLI::NonNegativeNumber);
  cmd.add_flag("--deterministic", f.deterministic, "Single-threaded, bitwise reproducible run");
  cmd.add_option("--set", f.sets, "Extra config override key=value (repeatable)");
}

KeyValues overrides_of(const SharedFlags& f) {
  KeyValues o;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::ConfigError, "--set expects key=value, got '" + kv + "'");
    if (!o.emplace(kv.substr(0, eq), kv.substr(eq + 1)).second) {
      throw Error(ErrorCode::ConfigError, "duplicate override for '" + kv.substr(0, eq) + "'");
    }
  }
  if (!f.mode.empty()) o["mode"] = f.mode;
  if (!f.kind.empty()) o["kind"] = f.kind;
  if (f.sym >= 0) o["sym"] = std::to_string(f.sym);
  if (f.orth >= 0) o["orth"] = std::to_string(f.orth);
  if (f.order >= 0) o["K"] = std::to_string(f.order);
  if (f.seed >= 0) o["seed"] = std::to_string(f.seed);
  if (f.deterministic) o["deterministic"] = "1";
  return o;
}

TrainConfig load_config(const SharedFlags& f) {
  KeyValues file;
  if (!f.config.empty()) {
    auto in = io::open_input(f.config);
    file = parse_config_text(in, f.config);
  }
  return resolve_config(file, overrides_of(f));
}

Dataset load_data(const std::string& dir, const TrainConfig& cfg) {
  if (dir.empty()) throw Error(ErrorCode::MissingFile, "--data is required");
  return load_dataset_dir(dir, cfg.ref_joints, cfg.chunks);
}

std::string fmt(double v) { return io::format_double(v); }

void print_eval(std::ostream& out, const std::string& name, const EvalResult& r) {
  out << name << ": class_accuracy " << fmt(r.class_accuracy) << " sample_accuracy " << fmt(r.sample_accuracy)
      << '\n';
}

std::string value_of(const ConfigEcho& echo, const std::string& key) {
  for (const auto& [k, v] : echo)
    if (k == key) return v;
  return {};
}

// Chunk count and reference joints recorded in a checkpoint, defaults otherwise.
TrainConfig preprocessing_of(const ConfigEcho& echo) {
  KeyValues kv{{"K", "1"}, {"kind", "ndrw"}, {"mode", "learned"}};
  for (const char* key : {"chunks", "ref_joints"}) {
    const std::string v = value_of(echo, key);
    if (!v.empty()) kv[key] = v;
  }
  return resolve_config(kv);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = io::open_input(path);
  return read_checkpoint(in, path);
}

// ---- train ----

int cmd_train(const SharedFlags& f, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = stage(kExitConfig, [&] { return load_config(f); });
  const Dataset data = stage(kExitData, [&] { return load_data(f.data, cfg); });

  const auto t0 = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.warn = [&](const std::string& w) { err << "warning: " << w << '\n'; };
  TrainResult result = stage(kExitNumerical, [&] { return train(cfg, data, hooks); });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  stage(kExitFailure, [&] {
    const fs::path dir(f.out);
    const ConfigEcho echo = config_echo(cfg);
    {
      auto ck = io::open_output(dir / kCheckpointFile);
      write_checkpoint(ck, result.params, echo);
    }
    {
      auto log = io::open_output(dir / kMetricsFile);
      log << "# epoch loss lr train_acc test_acc gram_offdiag\n";
      write_metrics_log(log, result.metrics);
    }
    auto man = io::open_output(dir / kRunManifestFile);
    for (const auto& [k, v] : echo) man << k << " = " << v << '\n';
    man << "data = " << f.data << '\n';
    man << "train_sequences = " << data.train.size() << '\n';
    man << "test_sequences = " << data.test.size() << '\n';
    man << "workers = " << worker_count(cfg) << '\n';
    man << "wall_time_s = " << fmt(wall) << '\n';
    man << "train_class_accuracy = " << fmt(result.train_eval.class_accuracy) << '\n';
    if (result.test_eval) {
      man << "test_class_accuracy = " << fmt(result.test_eval->class_accuracy) << '\n';
      man << "test_sample_accuracy = " << fmt(result.test_eval->sample_accuracy) << '\n';
    }
    return 0;
  });

  print_eval(out, "train", result.train_eval);
  if (result.test_eval) print_eval(out, "test", *result.test_eval);
  out << "wrote " << (fs::path(f.out) / kCheckpointFile).string() << '\n';
  return kExitOk;
}

// ---- eval ----

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, std::ostream& out) {
  const Checkpoint ck = stage(kExitData, [&] { return load_checkpoint(checkpoint); });
  const TrainConfig pre = stage(kExitConfig, [&] { return preprocessing_of(ck.config); });
  const Dataset data = stage(kExitData, [&] { return load_data(data_dir, pre); });
  stage(kExitData, [&] {
    if (data.nodes != ck.params.config.nodes || data.features != ck.params.config.features) {
      throw Error(ErrorCode::ShapeMismatch, "dataset shape does not match the checkpoint");
    }
    return 0;
  });
  auto report = [&](const std::string& name, const std::vector<TrajectoryGraph>& split) {
    if (split.empty()) return;
    const EvalResult r = stage(kExitNumerical, [&] { return evaluate(ck.params, split); });
    print_eval(out, name, r);
    out << "confusion (rows true, columns predicted):\n";
    for (const auto& row : r.confusion) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "  ") << row[c];
      out << '\n';
    }
  };
  report("train", data.train);
  report("test", data.test);
  return kExitOk;
}

// ---- gradcheck ----

struct GradcheckFlags {
  int n = 5;
  int order = 4;
  std::string kinds = "all";
  long long seed = 1;
  int seeds = 1;
  double h = 1e-5;
  double threshold = 1e-4;
  std::string pipeline = "model";
  int orth = 1;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckFlags& f, std::ostream& out) {
  GradcheckOptions o = stage(kExitConfig, [&] {
    if (f.n < 2 || f.n > 16) throw Error(ErrorCode::ConfigError, "--n must lie in [2, 16]");
    if (f.order < 1 || f.order > kMaxOrder) throw Error(ErrorCode::InvalidOrder, "--K out of range");
    GradcheckOptions opts;
    opts.n = f.n;
    opts.order = f.order;
    opts.seed = static_cast<std::uint64_t>(f.seed);
    opts.seeds = f.seeds;
    opts.h = f.h;
    opts.threshold = f.threshold;
    opts.orthogonal = f.orth != 0;
    opts.pipeline = f.pipeline == "surrogate" ? GradcheckPipeline::Surrogate : GradcheckPipeline::Model;
    if (f.kinds != "all") {
      std::stringstream ss(f.kinds);
      std::string item;
      while (std::getline(ss, item, ',')) opts.kinds.push_back(parse_kind(item));
    }
    if (f.corrupt) {
      opts.corrupt = [](Matrix& g) { g(0, g.cols() - 1) += 1e-2 * (1.0 + std::abs(g(0, g.cols() - 1))); };
    }
    return opts;
  });
  const GradcheckReport report = stage(kExitNumerical, [&] { return run_gradcheck(o); });
  print_gradcheck(out, report);
  return report.passed() ? kExitOk : kExitFailure;
}

// ---- synth ----

int cmd_synth(const SynthSpec& spec, const std::string& out_dir, std::ostream& out) {
  const SynthDataset data = stage(kExitConfig, [&] { return synth_generate(spec); });
  stage(kExitFailure, [&] {
    write_dataset_dir(out_dir, data);
    return 0;
  });
  out << "wrote " << data.sequences.size() << " sequences, " << data.hidden.size() << " hidden edges to " << out_dir
      << '\n';
  return kExitOk;
}

// ---- inspect ----

struct RankedEdge {
  Index i;
  Index j;
  double weight;
};

int cmd_inspect(const std::string& checkpoint, const std::string& out_dir, const std::string& hidden_path,
                int top, std::ostream& out) {
  const Checkpoint ck = stage(kExitData, [&] { return load_checkpoint(checkpoint); });
  const ModelParams& p = ck.params;
  const Index n = p.config.nodes;

  // Learned graph: the single adjacency, the TLL mean, or the handcrafted graph for ML.
  Matrix learned = p.handcrafted;
  if (!p.adjacency.empty()) {
    learned = Matrix::Zero(n, n);
    for (const auto& a : p.adjacency) learned += a.values();
    learned /= static_cast<double>(p.adjacency.size());
  }
  const OperatorState op = stage(kExitNumerical, [&] { return prepare_operator(p); });
  LaplacianOperator dump{op.built.front(), p.config.kind, false, std::nullopt};
  if (p.config.orthogonal && p.config.mode != Mode::TLL) dump = rescale_spectrum(dump, *op.bounds);

  std::vector<RankedEdge> ranked;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (p.handcrafted(i, j) != 0.0 || p.handcrafted(j, i) != 0.0) continue;
      const double w = learned(i, j) + learned(j, i);
      if (w > 0.0) ranked.push_back({i, j, w});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedEdge& a, const RankedEdge& b) { return a.weight > b.weight; });

  stage(kExitFailure, [&] {
    const fs::path dir(out_dir);
    {
      auto f = io::open_output(dir / "learned_adjacency.txt");
      write_adjacency(f, learned);
    }
    {
      auto f = io::open_output(dir / "laplacian.txt");
      write_laplacian_dump(f, dump);
    }
    auto f = io::open_output(dir / "off_skeleton_edges.txt");
    f << "# i j weight (A_ij + A_ji), strongest first\n";
    for (const auto& e : ranked) f << e.i << ' ' << e.j << ' ' << fmt(e.weight) << '\n';
    return 0;
  });

  out << "mode " << to_string(p.config.mode) << ", " << ranked.size() << " off-skeleton edges\n";
  for (std::size_t r = 0; r < ranked.size() && static_cast<int>(r) < top; ++r) {
    out << "  " << ranked[r].i << ' ' << ranked[r].j << ' ' << fmt(ranked[r].weight) << '\n';
  }
  if (!hidden_path.empty()) {
    const EdgeList hidden = stage(kExitData, [&] {
      auto in = io::open_input(hidden_path);
      return read_edge_list(in, hidden_path);
    });
    std::set<Edge> truth;
    for (auto [a, b] : hidden) truth.insert({std::min(a, b), std::max(a, b)});
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranked.size() && r < truth.size(); ++r) hits += truth.count({ranked[r].i, ranked[r].j});
    out << "hidden-edge hit rate " << hits << '/' << truth.size() << " in the top " << truth.size() << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chebyshev graph convolution with learned Laplacians for skeleton action recognition", "cheblap"};
  app.require_subcommand(1);

  SharedFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, metrics log and run manifest");
  add_shared(*train_cmd, train_flags, true);

  std::string eval_ckpt, eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory")->required();

  GradcheckFlags gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic graph gradients with central differences");
  gc_cmd->add_option("--n", gc.n, "Node count (at most 16)")->capture_default_str();
  gc_cmd->add_option("--K", gc.order, "Chebyshev order")->capture_default_str();
  gc_cmd->add_option("--kinds", gc.kinds, "Comma-separated kinds such as ndrw,s-dn, or all")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "First random seed")->capture_default_str();
  gc_cmd->add_option("--seeds", gc.seeds, "Random instances per kind")->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--step", gc.h, "Finite-difference step")->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--threshold", gc.threshold, "Maximum relative error")->capture_default_str();
  gc_cmd->add_option("--pipeline", gc.pipeline, "model or surrogate loss")
      ->check(CLI::IsMember({"model", "surrogate"}))
      ->capture_default_str();
  gc_cmd->add_option("--orth", gc.orth, "Rescale the operator (bounds held fixed)")
      ->check(CLI::IsMember({0, 1}))
      ->capture_default_str();
  gc_cmd->add_flag("--corrupt", gc.corrupt, "Perturb one analytic entry (negative control)");

  SynthSpec spec;
  std::string synth_out;
  int train_per_class = spec.train_per_class;
  int test_per_class = spec.test_per_class;
  long long synth_seed = static_cast<long long>(spec.seed);
  int joints = static_cast<int>(spec.joints);
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with a hidden interaction graph");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "Random seed")->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--classes", spec.classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--train-per-class", train_per_class, "Training sequences per class")->capture_default_str();
  synth_cmd->add_option("--test-per-class", test_per_class, "Test sequences per class")->capture_default_str();
  synth_cmd->add_option("--joints", joints, "Joint count (15 uses the SBU skeleton)")->capture_default_str();
  synth_cmd->add_option("--frames", spec.frames, "Frames per sequence")->capture_default_str();
  synth_cmd->add_option("--signal", spec.signal_amplitude, "Hidden-pair oscillation amplitude")->capture_default_str();
  synth_cmd->add_option("--noise", spec.shared_noise, "Shared per-pair displacement amplitude")->capture_default_str();
  synth_cmd->add_option("--jitter", spec.jitter, "Per-coordinate noise")->capture_default_str();

  std::string inspect_ckpt, inspect_out, inspect_hidden;
  int inspect_top = 10;
  auto* inspect_cmd = app.add_subcommand("inspect", "Dump the learned graph and rank its off-skeleton edges");
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "Checkpoint file")->required();
  inspect_cmd->add_option("--out", inspect_out, "Output directory")->required();
  inspect_cmd->add_option("--hidden", inspect_hidden, "Edge list of known interactions to score against");
  inspect_cmd->add_option("--top", inspect_top, "Edges to print")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, out, err);
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, out);
    if (*gc_cmd) return cmd_gradcheck(gc, out);
    if (*synth_cmd) {
      spec.train_per_class = train_per_class;
      spec.test_per_class = test_per_class;
      spec.seed = static_cast<std::uint64_t>(synth_seed);
      spec.joints = joints;
      return cmd_synth(spec, synth_out, out);
    }
    if (*inspect_cmd) return cmd_inspect(inspect_ckpt, inspect_out, inspect_hidden, inspect_top, out);
  } catch (const StageError& e) {
    err << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cheblap::cli
