#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "egs/error.hpp"
#include "egs/image_entropy.hpp"
#include "egs/io.hpp"
#include "egs/neighborhood.hpp"
#include "egs/optimizer.hpp"
#include "egs/pipeline.hpp"
#include "egs/ray.hpp"
#include "egs/synth.hpp"

namespace {

using namespace egs;

constexpr double kMaxEntropyBits = 8.0;  // 256-bin histograms

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

std::string sibling_path(const std::string& base, const std::string& suffix) {
  std::filesystem::path p(base);
  const std::string stem = (p.parent_path() / p.stem()).string();
  return stem + suffix;
}

struct ChannelStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

ChannelStats raster_stats(const Raster& r) {
  ChannelStats s;
  if (r.data.empty()) return s;
  s.min = r.data[0];
  s.max = r.data[0];
  double sum = 0.0;
  for (double v : r.data) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
  }
  s.mean = sum / static_cast<double>(r.data.size());
  return s;
}

int cmd_entropy_map(const std::string& image_path, int levels, const std::string& out_path) {
  const GrayImage image = read_pgm(image_path);
  const EntropyPyramid pyramid = build_pyramid(image, levels, 6.0);

  Raster stacked(image.width, image.height, levels);
  for (int l = 0; l < levels; ++l) {
    const Raster& raw = pyramid.levels[l].raw;
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) stacked.at(x, y, l) = raw.at(x, y);
    }
  }
  write_fer1(out_path, stacked);

  nlohmann::json level_stats = nlohmann::json::array();
  std::vector<std::string> previews;
  for (int l = 0; l < levels; ++l) {
    const auto& level = pyramid.levels[l];
    const ChannelStats s = raster_stats(level.raw);
    level_stats.push_back({{"level", level.scale},
                           {"window", level.window},
                           {"min", s.min},
                           {"mean", s.mean},
                           {"max", s.max}});
    GrayImage preview(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const double v = std::clamp(level.raw.at(x, y) / kMaxEntropyBits, 0.0, 1.0);
        preview.at(x, y) = static_cast<std::uint8_t>(std::llround(v * 255.0));
      }
    }
    const std::string preview_path =
        sibling_path(out_path, "_level" + std::to_string(level.scale) + ".pgm");
    write_pgm(preview_path, preview);
    previews.push_back(preview_path);
  }

  print_json({{"image", image_path},
              {"levels", level_stats},
              {"outputs", {{"raster", out_path}, {"previews", previews}}}});
  return 0;
}

int cmd_weights(const std::string& image_path, int levels, double beta, double threshold,
                const std::string& out_path) {
  const GrayImage image = read_pgm(image_path);
  const EntropyPyramid pyramid = build_pyramid(image, levels, beta);

  Raster stacked(image.width, image.height, levels);
  for (int l = 0; l < levels; ++l) {
    const Raster& w = pyramid.levels[l].weight;
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) stacked.at(x, y, l) = w.at(x, y);
    }
  }
  write_fer1(out_path, stacked);

  const ConcentrationStats stats = concentration_stats(pyramid, threshold);
  const std::string concentration_path = sibling_path(out_path, "_concentration.fer1");
  write_fer1(concentration_path, stats.concentration);

  print_json({{"image", image_path},
              {"levels", levels},
              {"beta", beta},
              {"threshold", threshold},
              {"fraction_all", stats.fraction_all},
              {"fraction_textured", stats.fraction_textured},
              {"n_textured", stats.n_textured},
              {"outputs", {{"weights", out_path}, {"concentration", concentration_path}}}});
  return 0;
}

struct SnriOptions {
  std::string scene_path;
  std::string out_path;  // empty -> stdout
  int k = 50;
  double sigma_min = 0.0;
  bool has_sigma_min = false;
  double epsilon_tangent = 0.0;
  bool has_epsilon_tangent = false;
  double decay_rate = 0.0;
  bool has_decay_rate = false;
  double epsilon_stability = 0.01;
  double coupling_beta = 0.0;
  bool has_coupling_beta = false;
  double eta_floor = 0.0;
};

int cmd_snri(const SnriOptions& opt) {
  const std::vector<GaussianPrimitive> prims = load_scene_csv(opt.scene_path);
  if (prims.empty()) throw UsageError("scene '" + opt.scene_path + "' has no primitives");

  double sigma_min = opt.sigma_min;
  if (!opt.has_sigma_min) {
    // Default floor: the smallest scale component present, so no clamping.
    sigma_min = prims[0].scale.minCoeff();
    for (const auto& p : prims) sigma_min = std::min(sigma_min, p.scale.minCoeff());
    if (sigma_min <= 0.0) {
      throw UsageError("scene contains non-positive scales; pass --sigma-min explicitly");
    }
  }
  Scene scene(prims, sigma_min);
  if (opt.has_epsilon_tangent) scene.epsilon_tangent = opt.epsilon_tangent;
  if (opt.has_decay_rate) scene.decay_rate = opt.decay_rate;

  ThresholdParams params = ThresholdParams::defaults(scene.sigma_min);
  params.epsilon_stability = opt.epsilon_stability;
  if (opt.has_coupling_beta) params.coupling_beta = opt.coupling_beta;
  params.eta_floor = opt.eta_floor;

  const NeighborGraph graph = build_knn(scene, opt.k);
  const std::vector<double> snri_values = snri_all(scene, graph);
  const std::vector<double> entropies = neighborhood_entropy_all(scene, graph);
  const std::vector<double> eta = adaptive_threshold_all(scene, graph, params);

  std::string out = "index,snri,entropy,eta\n";
  char buf[160];
  for (std::size_t i = 0; i < snri_values.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i, snri_values[i],
                  entropies[i], eta[i]);
    out += buf;
  }
  if (opt.out_path.empty()) {
    std::cout << out;
  } else {
    write_file_bytes(opt.out_path, out);
  }
  return 0;
}

int cmd_optimize(const std::string& config_path, const std::string& out_override) {
  RunConfig config = load_run_config(config_path, /*strict=*/true, nullptr);
  if (!out_override.empty()) config.output_dir = out_override;

  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory '" + config.output_dir +
                  "': " + ec.message());
  }
  const std::filesystem::path dir(config.output_dir);

  const RunResult result = run_optimization(config);

  write_file_bytes((dir / "config_resolved.json").string(),
                   run_config_to_json(config).dump(2) + "\n");
  write_scene_csv((dir / "scene_initial.csv").string(), result.initial_scene);
  write_scene_csv((dir / "scene_final.csv").string(), result.final_scene);
  {
    JsonlWriter metrics((dir / "metrics.jsonl").string());
    for (const auto& row : result.metrics) metrics.write_row(row);
  }
  {
    JsonlWriter monitor((dir / "monitor.jsonl").string());
    for (const MonitorRow& row : result.monitor) {
      monitor.write_row({{"iteration", row.iteration},
                         {"total_loss", row.total_loss},
                         {"mean_entropy", row.mean_entropy},
                         {"v", row.v}});
    }
  }
  write_file_bytes((dir / "summary.json").string(), result.summary.dump(2) + "\n");

  print_json(result.summary);
  return 0;
}

struct BenchOptions {
  long primitives = 20000;
  long rays = 10000;
  int samples = 128;
  int k = 50;
  long gaussians = 50;  // per-sample mixture size in the analytic model
  std::uint64_t seed = 1234;
};

int cmd_bench(const BenchOptions& opt) {
  using clock = std::chrono::steady_clock;
  const auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  // Closed-form per-iteration operation counts. The reference operating
  // point (1e6 rays, 128 samples, 50-component mixtures vs 1e5 primitives
  // with K=50) must evaluate to 6.4e9 vs 5e6: a 1280x ratio.
  const std::uint64_t paper_ray = ray_cost_model(1000000, 128, 50);
  const std::uint64_t paper_neigh = neighborhood_cost_model(100000, 50);
  const std::uint64_t req_ray =
      ray_cost_model(static_cast<std::uint64_t>(opt.rays),
                     static_cast<std::uint64_t>(opt.samples),
                     static_cast<std::uint64_t>(opt.gaussians));
  const std::uint64_t req_neigh = neighborhood_cost_model(
      static_cast<std::uint64_t>(opt.primitives), static_cast<std::uint64_t>(opt.k));

  const Scene scene =
      make_noisy_plane(static_cast<int>(opt.primitives), 0.05, opt.seed, 2.0);

  auto t0 = clock::now();
  const NeighborGraph graph = build_knn(scene, opt.k);
  const double knn_seconds = seconds_since(t0);

  t0 = clock::now();
  const std::vector<double> entropies = neighborhood_entropy_all(scene, graph);
  const double neigh_seconds = seconds_since(t0);
  double neigh_sum = 0.0;
  for (double h : entropies) neigh_sum += h;

  // The exact quadrature oracle over random rays crossing the populated slab.
  Rng rng(opt.seed + 17);
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(opt.rays));
  for (long i = 0; i < opt.rays; ++i) {
    const Vec3 origin(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 6.0);
    const Vec3 target(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0);
    rays.emplace_back(origin, (target - origin).normalized(), 1e-4, 20.0);
  }
  t0 = clock::now();
  double ray_sum = 0.0;
  for (const Ray& ray : rays) ray_sum += ray_entropy(scene, ray, opt.samples);
  const double ray_seconds = seconds_since(t0);

  const nlohmann::json out = {
      {"model",
       {{"paper",
         {{"rays", 1000000},
          {"samples", 128},
          {"gaussians_per_sample", 50},
          {"primitives", 100000},
          {"k", 50},
          {"ray_ops", paper_ray},
          {"neighborhood_ops", paper_neigh},
          {"speedup", static_cast<double>(paper_ray) / static_cast<double>(paper_neigh)}}},
        {"requested",
         {{"rays", opt.rays},
          {"samples", opt.samples},
          {"gaussians_per_sample", opt.gaussians},
          {"primitives", opt.primitives},
          {"k", opt.k},
          {"ray_ops", req_ray},
          {"neighborhood_ops", req_neigh},
          {"speedup", static_cast<double>(req_ray) / static_cast<double>(req_neigh)}}}}},
      {"measured",
       {{"primitives", opt.primitives},
        {"rays", opt.rays},
        {"samples", opt.samples},
        {"k", opt.k},
        {"knn_build_seconds", knn_seconds},
        {"neighborhood_seconds", neigh_seconds},
        {"ray_seconds", ray_seconds},
        {"speedup_measured", ray_seconds / neigh_seconds},
        {"mean_neighborhood_entropy", neigh_sum / static_cast<double>(entropies.size())},
        {"mean_ray_entropy", ray_sum / static_cast<double>(opt.rays)}}}};
  print_json(out);
  return 0;
}

int cmd_gradcheck(const std::string& terms_csv, int seeds, std::uint64_t base_seed,
                  bool corrupt, const std::string& out_path) {
  std::vector<std::string> terms;
  if (terms_csv == "all") {
    terms = {"sparsity", "depth", "normal", "align", "photometric", "quadratic"};
  } else {
    std::size_t start = 0;
    while (start <= terms_csv.size()) {
      std::size_t end = terms_csv.find(',', start);
      if (end == std::string::npos) end = terms_csv.size();
      const std::string term = terms_csv.substr(start, end - start);
      if (!term.empty()) terms.push_back(term);
      start = end + 1;
    }
    if (terms.empty()) throw UsageError("--terms is empty");
  }

  const GradCheckReport report = run_gradcheck(terms, seeds, base_seed, corrupt);

  nlohmann::json term_json;
  for (const auto& [name, t] : report.terms) {
    term_json[name] = {{"max_rel_error", t.max_rel_error},
                       {"tolerance", t.tolerance},
                       {"pass", t.pass},
                       {"worst_seed", t.worst_seed},
                       {"worst_primitive", t.worst_primitive},
                       {"worst_param", t.worst_param},
                       {"analytic_at_worst", t.analytic_at_worst},
                       {"numeric_at_worst", t.numeric_at_worst}};
  }
  const nlohmann::json out = {
      {"pass", report.pass}, {"seeds", seeds}, {"seconds", report.seconds}, {"terms", term_json}};
  print_json(out);
  if (!out_path.empty()) write_file_bytes(out_path, out.dump(2) + "\n");
  return report.pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-field regularization toolkit for Gaussian primitive scenes"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads,
                 "Upper bound on worker threads (evaluation stays ordered and deterministic)");

  struct {
    std::string image, out;
    int levels = 3;
  } em;
  auto* em_cmd =
      app.add_subcommand("entropy-map", "Multi-scale local entropy maps of a grayscale image");
  em_cmd->add_option("--image", em.image, "Input PGM (binary P5)")->required();
  em_cmd->add_option("--levels", em.levels, "Number of levels (windows 2^l + 1)")
      ->capture_default_str();
  em_cmd->add_option("--out", em.out, "Output FER1 raster, one channel per level")->required();

  struct {
    std::string image, out;
    int levels = 3;
    double beta = 6.0;
    double threshold = 0.6;
  } wt;
  auto* wt_cmd =
      app.add_subcommand("weights", "Competitive multi-scale entropy weights of an image");
  wt_cmd->add_option("--image", wt.image, "Input PGM (binary P5)")->required();
  wt_cmd->add_option("--levels", wt.levels, "Number of levels")->capture_default_str();
  wt_cmd->add_option("--beta", wt.beta, "Softmax sharpness")->capture_default_str();
  wt_cmd->add_option("--threshold", wt.threshold, "Concentration threshold")
      ->capture_default_str();
  wt_cmd->add_option("--out", wt.out, "Output FER1 raster, one weight channel per level")
      ->required();

  SnriOptions sn;
  auto* sn_cmd = app.add_subcommand(
      "snri", "Per-primitive redundancy index, neighborhood entropy, and threshold");
  sn_cmd->add_option("--scene", sn.scene_path, "Scene CSV")->required();
  sn_cmd->add_option("--k", sn.k, "Neighbors per primitive")->capture_default_str();
  auto* sn_sigma = sn_cmd->add_option("--sigma-min", sn.sigma_min,
                                      "Scale floor (default: smallest scale in the scene)");
  auto* sn_eps = sn_cmd->add_option("--epsilon-tangent", sn.epsilon_tangent,
                                    "Normal-offset threshold (default 0.5*sigma_min)");
  auto* sn_decay =
      sn_cmd->add_option("--decay-rate", sn.decay_rate, "Decay rate (default 1/sigma_min^2)");
  sn_cmd->add_option("--epsilon-stability", sn.epsilon_stability, "Threshold stability margin")
      ->capture_default_str();
  auto* sn_beta = sn_cmd->add_option("--coupling-beta", sn.coupling_beta,
                                     "Redundancy coupling (default -sigma_min^2)");
  sn_cmd->add_option("--eta-floor", sn.eta_floor, "Threshold floor")->capture_default_str();
  sn_cmd->add_option("--out", sn.out_path, "Output CSV path (default: stdout)");

  struct {
    std::string config, out;
  } op;
  auto* op_cmd = app.add_subcommand("optimize", "Run the full optimization schedule");
  op_cmd->add_option("--config", op.config, "Run configuration JSON")->required();
  op_cmd->add_option("--out", op.out, "Override the config's output directory");

  BenchOptions bn;
  auto* bn_cmd = app.add_subcommand(
      "bench", "Cost model and measured wall clock for both entropy paths");
  bn_cmd->add_option("--primitives", bn.primitives, "Scene size for the measured paths")
      ->capture_default_str();
  bn_cmd->add_option("--rays", bn.rays, "Ray count for the quadrature oracle")
      ->capture_default_str();
  bn_cmd->add_option("--samples", bn.samples, "Quadrature samples per ray")
      ->capture_default_str();
  bn_cmd->add_option("--k", bn.k, "Neighbors per primitive")->capture_default_str();
  bn_cmd->add_option("--gaussians", bn.gaussians, "Per-sample mixture size in the model")
      ->capture_default_str();
  bn_cmd->add_option("--seed", bn.seed, "Scene/ray seed")->capture_default_str();

  struct {
    std::string terms = "all";
    std::string out;
    int seeds = 20;
    std::uint64_t base_seed = 12345;
    bool corrupt = false;
  } gc;
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "Finite-difference validation of every analytic loss gradient");
  gc_cmd->add_option("--terms", gc.terms, "'all' or comma-separated term names")
      ->capture_default_str();
  gc_cmd->add_option("--seeds", gc.seeds, "Fixture count")->capture_default_str();
  gc_cmd->add_option("--base-seed", gc.base_seed, "Fixture seed base")->capture_default_str();
  gc_cmd->add_option("--out", gc.out, "Also write the JSON report to this path");
  gc_cmd->add_flag("--corrupt-gradients", gc.corrupt,
                   "Deliberately bias analytic gradients (harness negative control)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (em_cmd->parsed()) return cmd_entropy_map(em.image, em.levels, em.out);
    if (wt_cmd->parsed()) return cmd_weights(wt.image, wt.levels, wt.beta, wt.threshold, wt.out);
    if (sn_cmd->parsed()) {
      sn.has_sigma_min = sn_sigma->count() > 0;
      sn.has_epsilon_tangent = sn_eps->count() > 0;
      sn.has_decay_rate = sn_decay->count() > 0;
      sn.has_coupling_beta = sn_beta->count() > 0;
      return cmd_snri(sn);
    }
    if (op_cmd->parsed()) return cmd_optimize(op.config, op.out);
    if (bn_cmd->parsed()) return cmd_bench(bn);
    if (gc_cmd->parsed())
      return cmd_gradcheck(gc.terms, gc.seeds, gc.base_seed, gc.corrupt, gc.out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
