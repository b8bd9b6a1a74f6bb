#include "egs/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "egs/error.hpp"
#include "egs/image_entropy.hpp"
#include "egs/render.hpp"

namespace egs {

namespace {

GrayImage raster_to_gray(const Raster& raster) {
  GrayImage gray(raster.width, raster.height);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      double v = 0.0;
      for (int c = 0; c < raster.channels; ++c) v += raster.at(x, y, c);
      v /= raster.channels;
      v = std::clamp(v, 0.0, 1.0);
      gray.pixels[static_cast<std::size_t>(y) * raster.width + x] =
          static_cast<std::uint8_t>(std::llround(v * 255.0));
    }
  }
  return gray;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

ThresholdParams threshold_params(const NeighborhoodConfig& cfg, double sigma_min) {
  ThresholdParams params = ThresholdParams::defaults(sigma_min);
  params.epsilon_stability = cfg.epsilon_stability;
  if (cfg.coupling_beta) params.coupling_beta = *cfg.coupling_beta;
  params.eta_floor = cfg.eta_floor;
  return params;
}

nlohmann::json breakdown_json(const LossBreakdown& b) {
  return nlohmann::json{{"photometric", b.photometric}, {"sparsity", b.sparsity},
                        {"depth", b.depth},             {"normal", b.normal},
                        {"align", b.align},             {"total", b.total}};
}

// Entropy/threshold statistics of a scene under a freshly built graph.
struct SceneEntropyStats {
  double mean_entropy = 0.0;
  double fraction_within_threshold = 0.0;
};

SceneEntropyStats scene_entropy_stats(const Scene& scene, int k,
                                      const ThresholdParams& params) {
  const NeighborGraph graph = build_knn(scene, k);
  const std::vector<double> entropies = neighborhood_entropy_all(scene, graph);
  const std::vector<double> eta = adaptive_threshold_all(scene, graph, params);
  SceneEntropyStats stats;
  stats.mean_entropy = mean_of(entropies);
  std::size_t within = 0;
  for (std::size_t i = 0; i < entropies.size(); ++i) {
    if (entropies[i] <= eta[i]) ++within;
  }
  stats.fraction_within_threshold =
      entropies.empty() ? 0.0 : static_cast<double>(within) / entropies.size();
  return stats;
}

}  // namespace

Scene build_scene(const SceneConfig& cfg, std::uint64_t seed) {
  Scene scene;
  if (cfg.generator == "noisy_plane") {
    scene = make_noisy_plane(cfg.n, cfg.noise_sigma, seed, cfg.extent);
  } else if (cfg.generator == "stacked") {
    scene = make_stacked_scene(cfg.n, cfg.spacing, seed);
  } else if (cfg.generator == "tangential") {
    scene = make_tangential_scene(cfg.n, seed);
  } else if (cfg.generator == "sphere") {
    scene = make_sphere(cfg.n, cfg.radius, cfg.noise_sigma, seed);
  } else if (cfg.generator == "csv") {
    if (cfg.path.empty()) {
      throw UsageError("scene.generator 'csv' requires scene.path");
    }
    scene = Scene(load_scene_csv(cfg.path), cfg.sigma_min);
  } else {
    throw UsageError("unknown scene.generator '" + cfg.generator +
                     "'; expected noisy_plane, stacked, tangential, sphere, or csv");
  }
  if (cfg.epsilon_tangent) scene.epsilon_tangent = *cfg.epsilon_tangent;
  if (cfg.decay_rate) scene.decay_rate = *cfg.decay_rate;
  return scene;
}

std::vector<Camera> build_camera_rig(const CameraRigConfig& cfg) {
  if (cfg.count < 1) throw UsageError("cameras.count must be >= 1");
  if (cfg.width < 2 || cfg.height < 2) {
    throw UsageError("cameras.width and cameras.height must be >= 2");
  }
  if (cfg.distance <= 0.0) throw UsageError("cameras.distance must be positive");
  if (cfg.focal <= 0.0) throw UsageError("cameras.focal must be positive");
  std::vector<Camera> cameras;
  cameras.push_back(make_lookat_camera(Vec3(0, 0, cfg.distance), Vec3::Zero(), Vec3(0, 1, 0),
                                       cfg.focal, cfg.width, cfg.height));
  const int ring = cfg.count - 1;
  for (int i = 0; i < ring; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / ring;
    const Vec3 eye(cfg.ring_radius * std::cos(angle), cfg.ring_radius * std::sin(angle),
                   cfg.distance);
    cameras.push_back(
        make_lookat_camera(eye, Vec3::Zero(), Vec3(0, 1, 0), cfg.focal, cfg.width, cfg.height));
  }
  return cameras;
}

std::optional<SurfaceDescriptor> generator_surface(const SceneConfig& cfg) {
  if (cfg.generator == "noisy_plane") {
    return SurfaceDescriptor::plane(Vec3(0, 0, 1), 0.0);
  }
  if (cfg.generator == "sphere") {
    return SurfaceDescriptor::sphere(Vec3::Zero(), cfg.radius);
  }
  return std::nullopt;
}

RunResult run_optimization(const RunConfig& cfg) {
  if (cfg.rays.stride < 1) throw UsageError("rays.stride must be >= 1");
  if (cfg.optimizer.log_every < 1) throw UsageError("optimizer.log_every must be >= 1");

  RunResult result;
  result.initial_scene = build_scene(cfg.scene, cfg.seed);
  const Scene& initial = result.initial_scene;

  Supervision sup;
  sup.cameras = build_camera_rig(cfg.cameras);
  for (const Camera& camera : sup.cameras) {
    sup.rays.push_back(make_camera_rays(camera, cfg.rays.stride));
  }

  const bool need_targets =
      cfg.losses.photometric || cfg.losses.align || cfg.losses.image_guidance;
  if (need_targets) {
    // Supervision images come from the noise-free counterpart scene when the
    // generator has one, otherwise from the initial scene itself.
    SceneConfig clean = cfg.scene;
    if (clean.generator == "noisy_plane" || clean.generator == "sphere") {
      clean.noise_sigma = 0.0;
    }
    const Scene target_scene = build_scene(clean, cfg.seed);
    for (const Camera& camera : sup.cameras) {
      const RenderGeometry geometry = build_render_geometry(target_scene, camera);
      const Raster image = render_image(geometry, target_scene);
      const GrayImage gray = raster_to_gray(image);
      if (cfg.losses.photometric) sup.target_images.push_back(image);
      if (cfg.losses.align) {
        const EntropyPyramid pyramid =
            build_pyramid(gray, cfg.pyramid.levels, cfg.pyramid.beta);
        std::vector<Raster> targets;
        std::vector<Raster> weights;
        if (sup.align_windows.empty()) {
          for (const auto& level : pyramid.levels) sup.align_windows.push_back(level.window);
        }
        for (const auto& level : pyramid.levels) {
          targets.push_back(level.normalized);
          weights.push_back(level.weight);
        }
        sup.align_targets.push_back(std::move(targets));
        sup.align_weights.push_back(std::move(weights));
      }
      if (cfg.losses.image_guidance) {
        sup.guidance_maps.push_back(local_entropy_map(gray, cfg.pyramid.guidance_window));
      }
    }
    if (cfg.losses.align) {
      sup.lambda_levels.assign(static_cast<std::size_t>(cfg.pyramid.levels),
                               1.0 / cfg.pyramid.levels);
    }
  }

  LossConfig loss_config;
  loss_config.photometric = cfg.losses.photometric;
  loss_config.sparsity = cfg.losses.sparsity;
  loss_config.depth = cfg.losses.depth;
  loss_config.normal = cfg.losses.normal;
  loss_config.align = cfg.losses.align;
  loss_config.lambda_sparsity = cfg.losses.lambda_sparsity;
  loss_config.lambda_align = cfg.losses.lambda_align;
  loss_config.ssim_mix = cfg.losses.ssim_mix;

  Schedule schedule;
  schedule.total_iterations = cfg.schedule.total_iterations;
  schedule.geom_start_fraction = cfg.schedule.geom_start_fraction;
  schedule.entropy_start_fraction = cfg.schedule.entropy_start_fraction;
  schedule.knn_freeze_fraction = cfg.schedule.knn_freeze_fraction;
  schedule.entropy_update_interval = cfg.schedule.entropy_update_interval;

  const ThresholdParams thresholds = threshold_params(cfg.neighborhood, initial.sigma_min);

  TrainerOptions options;
  options.k = cfg.neighborhood.k;
  options.thresholds = thresholds;
  options.learning_rates.center = cfg.optimizer.lr_center;
  options.learning_rates.scale = cfg.optimizer.lr_scale;
  options.learning_rates.rotation = cfg.optimizer.lr_rotation;
  options.learning_rates.opacity = cfg.optimizer.lr_opacity;
  options.learning_rates.color = cfg.optimizer.lr_color;
  options.beta_v = cfg.optimizer.beta_v;
  options.image_guidance = cfg.losses.image_guidance;

  Trainer trainer(initial, schedule, loss_config, sup, options);

  const long total = cfg.schedule.total_iterations;
  LossBreakdown last;
  const auto t0 = std::chrono::steady_clock::now();
  if (total == 0) {
    result.metrics.push_back(nlohmann::json{{"iteration", 0}});
  }
  for (long i = 0; i < total; ++i) {
    last = trainer.step();
    if (i % cfg.optimizer.log_every == 0 || i == total - 1) {
      nlohmann::json row = breakdown_json(last);
      row["iteration"] = i;
      row["mean_entropy"] = trainer.mean_cached_entropy();
      row["cache_age"] = trainer.cache().age;
      result.metrics.push_back(std::move(row));
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  result.final_scene = trainer.current_scene();
  result.monitor = trainer.monitor();

  const std::optional<SurfaceDescriptor> surface = generator_surface(cfg.scene);
  const SceneEntropyStats initial_stats =
      scene_entropy_stats(initial, cfg.neighborhood.k, thresholds);
  SceneEntropyStats final_stats =
      scene_entropy_stats(result.final_scene, cfg.neighborhood.k, thresholds);
  // The threshold inequality is the constraint the optimizer actually enforces,
  // so it is checked against the optimizer's own bookkeeping: the frozen
  // neighbor topology and thresholds recomputed from the final scene in one
  // coherent snapshot. The fresh-graph mean above stays as the entropy metric
  // so initial/final means are computed on an identical basis.
  if (trainer.graph() != nullptr) {
    trainer.refresh_entropy_cache();
    const std::vector<double> entropies =
        neighborhood_entropy_all(result.final_scene, *trainer.graph());
    const std::vector<double>& eta = trainer.cache().eta;
    std::size_t within = 0;
    for (std::size_t i = 0; i < entropies.size(); ++i) {
      if (entropies[i] <= eta[i]) ++within;
    }
    final_stats.fraction_within_threshold =
        entropies.empty() ? 0.0
                          : static_cast<double>(within) / entropies.size();
  }

  nlohmann::json summary;
  summary["generator"] = cfg.scene.generator;
  summary["seed"] = cfg.seed;
  summary["iterations"] = total;
  summary["primitives"] = result.final_scene.primitives.size();

  nlohmann::json initial_json;
  initial_json["mean_neighborhood_entropy"] = initial_stats.mean_entropy;
  nlohmann::json final_json;
  final_json["mean_neighborhood_entropy"] = final_stats.mean_entropy;
  final_json["fraction_within_threshold"] = final_stats.fraction_within_threshold;
  if (surface) {
    try {
      initial_json["surface_rms"] = surface_rms(initial, *surface);
    } catch (const NumericError&) {
      initial_json["surface_rms"] = nullptr;
    }
    try {
      final_json["surface_rms"] = surface_rms(result.final_scene, *surface);
    } catch (const NumericError&) {
      final_json["surface_rms"] = nullptr;
    }
  }
  final_json["loss"] = total > 0 ? breakdown_json(last) : nlohmann::json();
  summary["initial"] = initial_json;
  summary["final"] = final_json;
  summary["timing"] = {{"seconds_total", seconds},
                       {"seconds_per_iteration", total > 0 ? seconds / total : 0.0}};
  result.summary = summary;
  return result;
}

}  // namespace egs
