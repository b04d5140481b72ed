#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "percam/body_model.hpp"
#include "percam/io_util.hpp"
#include "percam/metrics.hpp"
#include "percam/parallel.hpp"
#include "percam/projection.hpp"
#include "percam/rasterizer.hpp"
#include "percam/scenegen.hpp"
#include "percam/solver.hpp"
#include "percam/types.hpp"

namespace {

using namespace percam;
namespace fs = std::filesystem;

// Removes declared output files when a command dies partway, so failed runs
// never leave files that look complete.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (armed_)
      for (const auto& p : paths_) {
        std::error_code ec;
        fs::remove(p, ec);
      }
  }
  void track(const fs::path& p) { paths_.push_back(p); }
  void commit() { armed_ = false; }

 private:
  std::vector<fs::path> paths_;
  bool armed_ = true;
};

BodyModel resolve_model(const std::string& model_path, const fs::path& dataset_hint) {
  if (!model_path.empty()) return load_model(model_path);
  if (!dataset_hint.empty()) {
    const fs::path candidate = dataset_hint / "model.json";
    if (fs::exists(candidate)) return load_model(candidate.string());
  }
  return make_default_model();
}

struct GenArgs {
  GenConfig cfg;
  std::string out_dir;
  std::string model_path;
  int threads = 1;
};

struct SolveArgs {
  std::string mesh_path, mask_path, out_path;
  double tz = 1.0;
  bool refine = false;
  CameraSolveConfig cfg;
};

struct EvalArgs {
  std::string manifest_path, pred_path, model_path;
  std::string out_csv, out_json;
  int threads = 1;
};

struct DistortionArgs {
  std::string model_path, out_path;
  std::vector<double> tz_grid{0.3, 0.5, 1.0, 2.0, 5.0, 10.0};
};

struct RoundtripArgs {
  GenConfig cfg;
  std::string out_dir;
  std::string model_path;
  int threads = 1;
  bool refine = false;
  CameraSolveConfig solve_cfg;
};

int run_gen(const GenArgs& args) {
  const BodyModel model = resolve_model(args.model_path, {});
  OutputGuard guard;
  const fs::path root(args.out_dir);
  guard.track(root / "manifest.jsonl");
  guard.track(root / "model.json");
  const Manifest manifest = generate_dataset(args.cfg, model, args.out_dir, args.threads);
  save_model(model, (root / "model.json").string());
  guard.commit();
  for (const auto& skip : manifest.skipped)
    std::cout << "skipped record " << skip.record_index << ": " << skip.reason << "\n";
  std::cout << "wrote " << manifest.records.size() << " records ("
            << manifest.skipped.size() << " skipped) to " << args.out_dir << "\n";
  return 0;
}

int run_solve(const SolveArgs& args) {
  const Mesh mesh = load_obj(args.mesh_path);
  const SilhouetteMask mask = load_pgm(args.mask_path);
  CameraSolveResult result = solve_camera(mesh, mask, args.tz, args.cfg);
  if (args.refine) result = refine_tz(mesh, mask, result, args.cfg);
  const double iou = std::max(0.0, 1.0 - result.final_objective);

  OutputGuard guard;
  guard.track(args.out_path);
  nlohmann::json doc;
  doc["f_px"] = round9(result.f_px);
  doc["tx_m"] = round9(result.tx);
  doc["ty_m"] = round9(result.ty);
  doc["tz_m"] = round9(result.tz);
  doc["iou"] = round9(iou);
  doc["iters"] = result.iters_used;
  doc["converged"] = result.converged;
  std::ofstream out(args.out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + args.out_path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + args.out_path);
  guard.commit();

  std::cout << "f=" << format9(result.f_px) << " px, t=(" << format9(result.tx)
            << ", " << format9(result.ty) << ", " << format9(result.tz)
            << ") m, soft IoU=" << format9(iou) << ", iters=" << result.iters_used
            << (result.converged ? ", converged" : ", iteration cap") << "\n";
  return 0;
}

void print_report_summary(const MetricReport& report) {
  std::cout << "evaluated " << report.rows.size() << " records, "
            << report.warning_count << " warnings\n";
  for (const auto& id : report.missing_ids)
    std::cout << "missing prediction for " << id << "\n";
  std::cout << "mean:   E_f=" << format9(report.mean.e_f)
            << " E_Txy=" << format9(report.mean.e_txy)
            << " m, mIoU=" << format9(report.mean.miou_pct) << "%\n";
  std::cout << "median: E_f=" << format9(report.median.e_f)
            << " E_Txy=" << format9(report.median.e_txy)
            << " m, mIoU=" << format9(report.median.miou_pct) << "%\n";
}

int run_eval(const EvalArgs& args) {
  const fs::path dataset_dir = fs::path(args.manifest_path).parent_path();
  const Manifest manifest = load_manifest(args.manifest_path);
  const auto predictions = load_predictions(args.pred_path);
  const BodyModel model = resolve_model(args.model_path, dataset_dir);
  const MetricReport report = evaluate_dataset(manifest.records, predictions, model,
                                               dataset_dir.string(), args.threads);
  const std::string csv =
      args.out_csv.empty() ? (dataset_dir / "report.csv").string() : args.out_csv;
  const std::string js =
      args.out_json.empty() ? (dataset_dir / "report.json").string() : args.out_json;
  OutputGuard guard;
  guard.track(csv);
  guard.track(js);
  write_report_csv(report, csv);
  write_report_json(report, js);
  guard.commit();
  print_report_summary(report);
  return 0;
}

int run_distortion(const DistortionArgs& args) {
  const BodyModel model = resolve_model(args.model_path, {});
  const Mesh mesh = synthesize(model, Shape::zero(model.shape_count()),
                               Pose::zero(model.joint_count()));
  OutputGuard guard;
  guard.track(args.out_path);
  std::ofstream out(args.out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + args.out_path);
  out << "tz_m,distortion\n";
  for (const double tz : args.tz_grid) {
    const double d = distortion_magnitude(mesh, tz);
    out << format9(tz) << ',' << format9(d) << '\n';
    std::cout << "Tz=" << format9(tz) << " m -> distortion " << format9(d) << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + args.out_path);
  guard.commit();
  return 0;
}

int run_roundtrip(const RoundtripArgs& args) {
  const BodyModel model = resolve_model(args.model_path, {});
  const fs::path root(args.out_dir);
  OutputGuard guard;
  guard.track(root / "manifest.jsonl");
  guard.track(root / "model.json");
  guard.track(root / "predictions.jsonl");
  guard.track(root / "report.csv");
  guard.track(root / "report.json");

  const Manifest manifest = generate_dataset(args.cfg, model, args.out_dir, args.threads);
  save_model(model, (root / "model.json").string());

  struct SolveSlot {
    std::optional<PredictionRecord> pred;
    std::string error;
  };
  std::vector<SolveSlot> slots(manifest.records.size());
  parallel_for(manifest.records.size(), args.threads, [&](size_t i) {
    const SceneRecord& rec = manifest.records[i];
    try {
      const Mesh mesh = synthesize(model, rec.shape, rec.pose);
      const SilhouetteMask mask = load_pgm((root / rec.mask_path).string());
      CameraSolveResult result = solve_camera(mesh, mask, rec.t.tz, args.solve_cfg);
      if (args.refine) result = refine_tz(mesh, mask, result, args.solve_cfg);
      // Stored at 9 significant digits; score the stored values so re-running
      // eval on the written predictions reproduces this report exactly.
      slots[i].pred = PredictionRecord{
          rec.id, round9(result.f_px),
          Vec3(round9(result.tx), round9(result.ty), round9(result.tz)),
          std::nullopt, std::nullopt};
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });

  std::vector<PredictionRecord> predictions;
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].pred) {
      predictions.push_back(*slots[i].pred);
    } else {
      std::cout << manifest.records[i].id << ": solve failed: " << slots[i].error
                << "\n";
    }
  }
  save_predictions(predictions, (root / "predictions.jsonl").string());

  const MetricReport report = evaluate_dataset(manifest.records, predictions, model,
                                               args.out_dir, args.threads);
  write_report_csv(report, (root / "report.csv").string());
  write_report_json(report, (root / "report.json").string());
  guard.commit();

  for (const auto& row : report.rows)
    std::cout << row.id << ": E_f=" << format9(row.e_f)
              << " E_Txy=" << format9(row.e_txy)
              << " m, mIoU=" << format9(row.miou_pct) << "%\n";
  print_report_summary(report);
  return 0;
}

void add_solver_options(CLI::App* cmd, CameraSolveConfig& cfg) {
  cmd->add_option("--sigma", cfg.sigma_px, "smoothing sigma in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-iters", cfg.max_iters, "iteration cap")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "percam: synthetic body scenes, silhouette camera solving, and evaluation.\n"
      "Environment overrides: PERCAM_SEED (--seed), PERCAM_THREADS (--threads)."};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; CLI flags take precedence");

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a labeled synthetic dataset");
  gen_cmd->add_option("--n", gen.cfg.n_records, "record count")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.cfg.global_seed, "global RNG seed")
      ->envname("PERCAM_SEED")
      ->capture_default_str();
  gen_cmd->add_option("--size", gen.cfg.image_size, "square image size in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--model", gen.model_path, "body model JSON (default: built-in)");
  gen_cmd->add_option("--near-fraction", gen.cfg.near_fraction,
                      "fraction of records in the near depth band")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  gen_cmd->add_option("--pose-angle-max", gen.cfg.pose_angle_max,
                      "per-joint pose angle bound, radians")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gen_cmd->add_option("--threads", gen.threads, "worker threads")
      ->envname("PERCAM_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  SolveArgs solve;
  CLI::App* solve_cmd =
      app.add_subcommand("solve", "fit camera params to one mesh + mask pair");
  solve_cmd->add_option("--mesh", solve.mesh_path, "OBJ mesh")
      ->required();
  solve_cmd->add_option("--mask", solve.mask_path, "target PGM mask")
      ->required();
  solve_cmd->add_option("--tz", solve.tz, "initial depth in meters")
      ->required()
      ->check(CLI::PositiveNumber);
  solve_cmd->add_flag("--refine-tz", solve.refine, "unlock Tz after the initial solve");
  solve_cmd->add_option("--out", solve.out_path, "result JSON path")->required();
  add_solver_options(solve_cmd, solve.cfg);

  EvalArgs eval;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "score a predictions file against a dataset");
  eval_cmd->add_option("--manifest", eval.manifest_path, "dataset manifest.jsonl")
      ->required();
  eval_cmd->add_option("--pred", eval.pred_path, "predictions JSON-lines")
      ->required();
  eval_cmd->add_option("--model", eval.model_path,
                       "body model JSON (default: dataset model.json, else built-in)");
  eval_cmd->add_option("--out-csv", eval.out_csv, "report CSV (default: beside manifest)");
  eval_cmd->add_option("--out-json", eval.out_json, "report JSON (default: beside manifest)");
  eval_cmd->add_option("--threads", eval.threads, "worker threads")
      ->envname("PERCAM_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  DistortionArgs distortion;
  CLI::App* distortion_cmd = app.add_subcommand(
      "distortion", "perspective-vs-orthographic distortion over a depth grid");
  distortion_cmd
      ->add_option("--model", distortion.model_path, "body model JSON (default: built-in)");
  distortion_cmd->add_option("--tz-grid", distortion.tz_grid, "depths in meters")
      ->delimiter(',')
      ->capture_default_str();
  distortion_cmd->add_option("--out", distortion.out_path, "output CSV path")->required();

  RoundtripArgs roundtrip;
  CLI::App* roundtrip_cmd = app.add_subcommand(
      "roundtrip", "generate scenes, solve each camera, and score the recovery");
  roundtrip_cmd->add_option("--n", roundtrip.cfg.n_records, "record count")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  roundtrip_cmd->add_option("--seed", roundtrip.cfg.global_seed, "global RNG seed")
      ->envname("PERCAM_SEED")
      ->capture_default_str();
  roundtrip_cmd->add_option("--size", roundtrip.cfg.image_size, "square image size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  roundtrip_cmd->add_option("--out", roundtrip.out_dir, "output directory")->required();
  roundtrip_cmd
      ->add_option("--model", roundtrip.model_path, "body model JSON (default: built-in)");
  roundtrip_cmd->add_flag("--refine-tz", roundtrip.refine,
                          "unlock Tz after each initial solve");
  roundtrip_cmd->add_option("--threads", roundtrip.threads, "worker threads")
      ->envname("PERCAM_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_solver_options(roundtrip_cmd, roundtrip.solve_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(gen_cmd)) return run_gen(gen);
    if (app.got_subcommand(solve_cmd)) return run_solve(solve);
    if (app.got_subcommand(eval_cmd)) return run_eval(eval);
    if (app.got_subcommand(distortion_cmd)) return run_distortion(distortion);
    if (app.got_subcommand(roundtrip_cmd)) return run_roundtrip(roundtrip);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const SolverDivergedError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const BehindCameraError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const EmptySilhouetteError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const DegenerateGeometryError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
