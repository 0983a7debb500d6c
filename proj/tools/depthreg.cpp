#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "depthreg/depthreg.hpp"
#include "depthreg/log.hpp"

namespace fs = std::filesystem;
using namespace depthreg;

namespace {

// Exit codes.
enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kMaxIterations = 3,
  kLinearFailure = 4,
  kNonFinite = 5,
  kNoOverlap = 6,
  kJacobianThreshold = 7,
  kEvalFailure = 8,
};

// Raised for frame/pose bookkeeping problems in the input set.
struct InputError : Error {
  using Error::Error;
};

// Files are written as name.tmp and renamed into place only after all of
// them succeed, so a failed run leaves nothing behind.
class StagedOutputs {
 public:
  explicit StagedOutputs(fs::path dir) : dir_(std::move(dir)) {}
  ~StagedOutputs() {
    std::error_code ec;
    for (const auto& f : staged_) fs::remove(temp(f), ec);
  }

  std::string stage(const std::string& name) {
    fs::create_directories(dir_);
    staged_.push_back(name);
    return temp(name).string();
  }

  void write_text(const std::string& name, const std::string& text) {
    const auto path = stage(name);
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw IoError("cannot write: " + path);
  }

  void commit() {
    for (const auto& f : staged_) fs::rename(temp(f), dir_ / f);
    staged_.clear();
  }

 private:
  fs::path temp(const std::string& name) const { return dir_ / (name + ".tmp"); }

  fs::path dir_;
  std::vector<std::string> staged_;
};

std::vector<std::string> expand_cloud_paths(const std::vector<std::string>& inputs) {
  std::vector<std::string> paths;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".ply" || ext == ".xyz")) found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) throw IoError("no .ply or .xyz files in " + in);
      paths.insert(paths.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      paths.push_back(in);
    } else {
      throw IoError("no such file or directory: " + in);
    }
  }
  return paths;
}

std::vector<PointCloud> load_clouds(const std::vector<std::string>& inputs) {
  std::vector<PointCloud> clouds;
  for (const auto& path : expand_cloud_paths(inputs)) {
    auto r = io::read_cloud(path);
    if (r.dropped) spdlog::warn("{}: dropped {} non-finite points", path, r.dropped);
    clouds.push_back(std::move(r.cloud));
  }
  return clouds;
}

// Initial poses in cloud order, matched by frame id.
std::vector<Pose> match_poses(const std::vector<PointCloud>& clouds, const std::vector<io::TrajectoryRecord>& traj) {
  std::vector<Pose> poses;
  for (const auto& c : clouds) {
    const auto it = std::find_if(traj.begin(), traj.end(), [&](const auto& r) { return r.frame_id == c.frame_id; });
    if (it == traj.end()) throw InputError("no initial pose for frame '" + c.frame_id + "'");
    poses.push_back(it->pose);
  }
  return poses;
}

std::vector<io::TrajectoryRecord> to_records(const std::vector<PointCloud>& clouds, const std::vector<Pose>& poses) {
  std::vector<io::TrajectoryRecord> out;
  for (std::size_t i = 0; i < clouds.size(); ++i) out.push_back({clouds[i].frame_id, poses[i]});
  return out;
}

io::CloudFormat parse_cloud_format(const std::string& name) {
  if (name == "ply") return io::CloudFormat::PlyBinaryLE;
  if (name == "ply-ascii") return io::CloudFormat::PlyAscii;
  return io::CloudFormat::XyzText;
}

// ---- register ---------------------------------------------------------------

struct RegisterArgs {
  std::vector<std::string> clouds;
  std::string init;
  bool identity_init = false;
  double scale = 1.0;
  double resolution = 0.05;
  int margin = 4;
  double wd = 1.0;
  std::optional<double> ws;
  int max_iters = 50;
  bool pure_gn = false;
  double damping = 1e-4;
  int threads = 1;
  std::optional<double> huber;
  bool pcg = false;
  bool reinit_map = false;
  std::string gradient = "node";
  bool omit_timing = false;
  std::string out_dir;
};

int cmd_register(const RegisterArgs& a) {
  const auto clouds = load_clouds(a.clouds);
  if (clouds.size() < 2) throw InputError("registration needs at least 2 frames, got " + std::to_string(clouds.size()));
  const std::vector<Pose> initial = a.identity_init ? std::vector<Pose>(clouds.size(), Pose::identity())
                                                    : match_poses(clouds, io::read_trajectory(a.init, a.scale));

  RegistrationConfig cfg;
  cfg.resolution = a.resolution;
  cfg.margin = a.margin;
  cfg.depth_weight = a.wd;
  cfg.smooth_weight = a.ws;
  cfg.problem.threads = a.threads;
  cfg.problem.huber = a.huber;
  cfg.problem.gradient = a.gradient == "bilinear" ? GradientMode::Bilinear : GradientMode::NodeInterpolated;
  cfg.solver.max_iterations = a.max_iters;
  cfg.solver.damping = !a.pure_gn;
  cfg.solver.lambda_initial = a.damping;
  cfg.solver.linear_solver = a.pcg ? LinearSolverKind::ConjugateGradient : LinearSolverKind::SparseDirect;
  cfg.solver.reinitialize_map = a.reinit_map;
  cfg.solver.record_timing = !a.omit_timing;

  const auto result = register_clouds(clouds, initial, cfg);
  const auto& state = result.solution.state;
  const auto& report = result.solution.report;

  nlohmann::json j = to_json(report);
  j["frames"] = clouds.size();
  j["points"] = [&] {
    std::size_t n = 0;
    for (const auto& c : clouds) n += c.size();
    return n;
  }();
  j["weights"] = {{"depth", result.weights.depth}, {"smooth", result.weights.smooth}};
  j["grid"] = {{"rows", result.geometry.rows},
               {"cols", result.geometry.cols},
               {"resolution", result.geometry.resolution},
               {"origin", {result.geometry.origin.x(), result.geometry.origin.y()}}};
  j["gradient"] = a.gradient;

  StagedOutputs out(a.out_dir);
  io::write_trajectory(to_records(clouds, state.poses), out.stage("trajectory.txt"));
  out.write_text("report.json", j.dump(2) + "\n");
  out.write_text("report.txt", to_text(report));
  io::write_cloud(io::merge_clouds(clouds, state.poses), out.stage("merged.ply"), io::CloudFormat::PlyBinaryLE);
  write_depth_map_csv(state.map, out.stage("depthmap.csv"));
  write_depth_map_pgm(state.map, out.stage("depthmap.pgm"));
  out.commit();

  std::cout << to_text(report);
  switch (report.termination) {
    case Termination::ConvergedStep:
    case Termination::ConvergedCost:
      return kOk;
    case Termination::MaxIterations:
      return kMaxIterations;
    case Termination::LinearSolverFailure:
      std::cerr << "linear solver failure: " << report.message << "\n";
      return kLinearFailure;
  }
  return kOk;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string scene;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string format = "ply";
  std::string out_dir;
};

int cmd_synth(const SynthArgs& a) {
  synth::SceneSpec spec;
  if (!a.scene.empty()) {
    spec = io::read_scene_spec(a.scene);
  } else if (a.preset == "bumps") {
    spec = synth::bumps_scene();
  } else {
    spec = synth::industrial_scene();
  }
  if (a.seed) spec.seed = *a.seed;
  const auto scene = synth::generate(spec);

  const auto format = parse_cloud_format(a.format);
  const std::string ext = format == io::CloudFormat::XyzText ? ".xyz" : ".ply";
  StagedOutputs out(a.out_dir);
  StagedOutputs cloud_out(fs::path(a.out_dir) / "clouds");
  for (const auto& c : scene.clouds) io::write_cloud(c, cloud_out.stage(c.frame_id + ext), format);
  io::write_trajectory(to_records(scene.clouds, scene.initial), out.stage("initial.txt"));
  io::write_trajectory(to_records(scene.clouds, scene.ground_truth), out.stage("ground_truth.txt"));
  io::write_scene_spec(spec, out.stage("scene.cfg"));
  cloud_out.commit();
  out.commit();
  std::cout << "wrote " << scene.clouds.size() << " frames to " << a.out_dir << "\n";
  return kOk;
}

// ---- check-jacobian ---------------------------------------------------------

struct CheckArgs {
  RandomProblemSpec problem;
  double wd = 1.0;
  double ws = 0.3;
  double step = 1e-6;
  double corrupt = 0.0;
  std::string gradient = "bilinear";
};

int cmd_check_jacobian(const CheckArgs& a) {
  ProblemOptions opts;
  opts.weights = {a.wd, a.ws};
  opts.gradient = a.gradient == "node" ? GradientMode::NodeInterpolated : GradientMode::Bilinear;
  const auto rp = make_random_problem(a.problem);
  const auto c = check_jacobian(rp.state, rp.clouds, opts, a.step, a.corrupt);
  constexpr double kTol = 1e-5;
  std::printf("J_P  %.3e\nJ_D  %.3e\nJ_S  %.3e\n(%d x %d, threshold %.0e)\n", c.pose_error, c.map_error,
              c.smoothing_error, c.rows, c.cols, kTol);
  const bool ok = c.pose_error < kTol && c.map_error < kTol && c.smoothing_error == 0.0;
  std::puts(ok ? "PASS" : "FAIL");
  return ok ? kOk : kJacobianThreshold;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string estimate;
  std::string truth;
  std::string markers;
  std::string references;
  double scale = 1.0;
  int anchor = 0;
  bool no_align = false;
  bool json = false;
  std::optional<double> max_mae_trans;
  std::optional<double> max_mae_rot;
};

int cmd_eval(const EvalArgs& a) {
  const auto est = io::read_trajectory(a.estimate, a.scale);
  nlohmann::json j;
  bool within = true;
  if (!a.truth.empty()) {
    const auto truth = io::read_trajectory(a.truth, a.scale);
    const auto aligned = a.no_align ? est : eval::align_gauge(est, truth, a.anchor);
    const auto s = eval::pose_errors(aligned, truth);
    if (a.json) {
      j["poses"] = eval::to_json(s);
    } else {
      std::cout << eval::to_table(s);
    }
    if (a.max_mae_trans && !(s.mae_trans <= *a.max_mae_trans)) within = false;
    if (a.max_mae_rot && !(s.mae_rot <= *a.max_mae_rot)) within = false;
  }
  if (!a.markers.empty()) {
    const auto obs = eval::read_marker_observations(a.markers);
    const auto refs = eval::read_marker_references(a.references);
    const auto errors = eval::marker_distance_errors(obs, est, refs);
    if (a.json) {
      j["markers"] = eval::to_json(errors)["marker_pairs"];
    } else {
      std::cout << (a.truth.empty() ? "" : "\n") << eval::to_table(errors);
    }
  }
  if (a.json) std::cout << j.dump(2) << "\n";
  if (!within) {
    std::cerr << "error above threshold\n";
    return kEvalFailure;
  }
  return kOk;
}

// ---- export -----------------------------------------------------------------

struct ExportArgs {
  std::vector<std::string> clouds;
  std::string trajectory;
  double scale = 1.0;
  std::string format = "ply";
  double resolution = 0.05;
  int margin = 4;
  bool depth_map = false;
  std::string out_dir;
};

int cmd_export(const ExportArgs& a) {
  const auto clouds = load_clouds(a.clouds);
  const auto poses = match_poses(clouds, io::read_trajectory(a.trajectory, a.scale));
  const auto format = parse_cloud_format(a.format);
  StagedOutputs out(a.out_dir);
  io::write_cloud(io::merge_clouds(clouds, poses),
                  out.stage(format == io::CloudFormat::XyzText ? "merged.xyz" : "merged.ply"), format);
  if (a.depth_map) {
    const auto map = initialize(clouds, poses, fit_bounds(clouds, poses, a.resolution, a.margin));
    write_depth_map_csv(map, out.stage("depthmap.csv"));
    write_depth_map_pgm(map, out.stage("depthmap.pgm"));
  }
  out.commit();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging_from_env();

  CLI::App app{"Correspondence-free multiview registration of 2.5D point clouds"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file with one [subcommand] section of flag = value lines");

  RegisterArgs reg;
  auto* r = app.add_subcommand("register", "Jointly optimise frame poses and the depth map");
  r->add_option("--clouds", reg.clouds, "Cloud files or directories of .ply/.xyz (sorted by name)")->required();
  auto* init = r->add_option("--init", reg.init, "Initial trajectory (frame_id tx ty tz qx qy qz qw)");
  auto* ident = r->add_flag("--identity-init", reg.identity_init, "Start every frame at the identity pose");
  init->excludes(ident);
  r->add_option("--scale", reg.scale, "Multiplier for trajectory translations")->check(CLI::PositiveNumber);
  r->add_option("--resolution", reg.resolution, "Map cell size s, metres")->check(CLI::PositiveNumber);
  r->add_option("--margin", reg.margin, "Map padding in cells")->check(CLI::NonNegativeNumber);
  r->add_option("--wd", reg.wd, "Depth weight")->check(CLI::NonNegativeNumber);
  r->add_option("--ws", reg.ws, "Smoothing weight (default 0.01 x mean points per observed cell)")
      ->check(CLI::NonNegativeNumber);
  r->add_option("--max-iters", reg.max_iters, "Iteration limit")->check(CLI::PositiveNumber);
  r->add_flag("--pure-gn", reg.pure_gn, "Undamped Gauss-Newton");
  r->add_option("--damping", reg.damping, "Initial Levenberg damping")->check(CLI::PositiveNumber);
  r->add_option("--threads", reg.threads, "Worker threads for residual evaluation")->check(CLI::PositiveNumber);
  r->add_option("--huber", reg.huber, "Huber threshold on depth residuals, metres")->check(CLI::PositiveNumber);
  r->add_flag("--pcg", reg.pcg, "Preconditioned conjugate gradient instead of sparse LDLT");
  r->add_flag("--reinit-map", reg.reinit_map, "Rebuild the map from current poses every iteration");
  r->add_option("--gradient", reg.gradient, "Map slope in the pose Jacobian")
      ->check(CLI::IsMember({"node", "bilinear"}));
  r->add_flag("--omit-timing", reg.omit_timing, "Zero per-iteration timings so reports compare byte for byte");
  r->add_option("--out-dir", reg.out_dir, "Output directory")->required();

  SynthArgs syn;
  auto* s = app.add_subcommand("synth", "Generate a synthetic scene");
  auto* scene = s->add_option("--scene", syn.scene, "Scene spec file (key = value)");
  auto* preset = s->add_option("--preset", syn.preset, "Built-in scene")->check(CLI::IsMember({"bumps", "industrial"}));
  scene->excludes(preset);
  s->add_option("--seed", syn.seed, "Override the spec seed");
  s->add_option("--format", syn.format, "Cloud file format")->check(CLI::IsMember({"ply", "ply-ascii", "xyz"}));
  s->add_option("--out-dir", syn.out_dir, "Output directory")->required();

  CheckArgs chk;
  auto* c = app.add_subcommand("check-jacobian", "Compare analytic and finite-difference Jacobians");
  c->add_option("--seed", chk.problem.seed, "Random problem seed");
  c->add_option("--frames", chk.problem.frames)->check(CLI::Range(2, 100));
  c->add_option("--grid", chk.problem.grid, "Nodes per side")->check(CLI::Range(4, 200));
  c->add_option("--points", chk.problem.points_per_frame)->check(CLI::PositiveNumber);
  c->add_option("--wd", chk.wd)->check(CLI::NonNegativeNumber);
  c->add_option("--ws", chk.ws)->check(CLI::NonNegativeNumber);
  c->add_option("--step", chk.step, "Central-difference step")->check(CLI::PositiveNumber);
  c->add_option("--corrupt", chk.corrupt, "Add this to one analytic entry (fault injection)");
  c->add_option("--gradient", chk.gradient)->check(CLI::IsMember({"node", "bilinear"}));

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Pose and marker errors of an estimated trajectory");
  e->add_option("--estimate", ev.estimate, "Estimated trajectory")->required();
  auto* truth = e->add_option("--truth", ev.truth, "Ground-truth trajectory");
  auto* markers = e->add_option("--markers", ev.markers, "Marker observations (marker_id frame_id x y z)");
  auto* refs = e->add_option("--references", ev.references, "Marker references (marker_a marker_b dx dy dz)");
  markers->needs(refs);
  refs->needs(markers);
  e->add_option("--scale", ev.scale, "Multiplier for trajectory translations")->check(CLI::PositiveNumber);
  e->add_option("--anchor", ev.anchor, "Frame index used for gauge alignment")->check(CLI::NonNegativeNumber);
  e->add_flag("--no-align", ev.no_align, "Compare without gauge alignment");
  e->add_flag("--json", ev.json, "Print JSON instead of tables");
  e->add_option("--max-mae-trans", ev.max_mae_trans, "Fail (exit 8) above this translation MAE, metres")->needs(truth);
  e->add_option("--max-mae-rot", ev.max_mae_rot, "Fail (exit 8) above this rotation MAE, radians")->needs(truth);

  ExportArgs ex;
  auto* x = app.add_subcommand("export", "Merged cloud (and optionally a depth map) from clouds plus poses");
  x->add_option("--clouds", ex.clouds, "Cloud files or directories")->required();
  x->add_option("--trajectory", ex.trajectory, "Trajectory file")->required();
  x->add_option("--scale", ex.scale)->check(CLI::PositiveNumber);
  x->add_option("--format", ex.format)->check(CLI::IsMember({"ply", "ply-ascii", "xyz"}));
  x->add_option("--resolution", ex.resolution)->check(CLI::PositiveNumber);
  x->add_option("--margin", ex.margin)->check(CLI::NonNegativeNumber);
  x->add_flag("--depth-map", ex.depth_map, "Also write depthmap.csv and depthmap.pgm");
  x->add_option("--out-dir", ex.out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (r->parsed()) {
      if (!reg.identity_init && reg.init.empty()) {
        std::cerr << "register: one of --init or --identity-init is required\n";
        return kUsage;
      }
      return cmd_register(reg);
    }
    if (s->parsed()) {
      if (syn.scene.empty() && syn.preset.empty()) {
        std::cerr << "synth: one of --scene or --preset is required\n";
        return kUsage;
      }
      return cmd_synth(syn);
    }
    if (c->parsed()) return cmd_check_jacobian(chk);
    if (e->parsed()) {
      if (ev.truth.empty() && ev.markers.empty()) {
        std::cerr << "eval: give --truth and/or --markers with --references\n";
        return kUsage;
      }
      return cmd_eval(ev);
    }
    if (x->parsed()) return cmd_export(ex);
  } catch (const NoOverlapError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kNoOverlap;
  } catch (const NonFiniteError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kNonFinite;
  } catch (const InputError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kIo;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kIo;
  } catch (const InvalidArgument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return e->parsed() ? kEvalFailure : kUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
