#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egs/core.hpp"
#include "egs/losses.hpp"
#include "egs/neighborhood.hpp"
#include "egs/raster.hpp"
#include "egs/ray.hpp"

namespace egs {

// Iteration schedule. Geometry losses (depth, normal) switch on at
// geom_start_fraction * total; entropy-coupled terms (sparsity, align) at
// entropy_start_fraction * total, which must equal knn_freeze_fraction: the
// neighbor graph is built exactly once, when the entropy terms activate, and
// stays frozen afterwards.
struct Schedule {
  long total_iterations = 3000;
  double geom_start_fraction = 0.5;
  double entropy_start_fraction = 2.0 / 3.0;
  double knn_freeze_fraction = 2.0 / 3.0;
  int entropy_update_interval = 10;  // cache refresh period N

  void validate() const;
  long geom_start_iteration() const;
  long entropy_start_iteration() const;
};

struct LearningRates {
  double center = 1e-3;
  double scale = 1e-3;
  double rotation = 1e-3;
  double opacity = 5e-2;
  double color = 1e-2;
};

// Delayed per-primitive quantities. `age` counts optimizer steps since the
// last refresh and stays within [0, N-1] between steps.
struct EntropyCache {
  bool valid = false;
  int age = 0;
  std::vector<double> entropies;      // neighborhood entropies H_k
  std::vector<double> snri;
  std::vector<double> eta;            // adaptive thresholds
  std::vector<double> image_entropy;  // per-primitive footprint entropies
  std::vector<double> image_weights;  // entropy-guided weights w_k
  std::vector<std::vector<Raster>> rendered_maps;  // per camera, per window
};

struct MonitorRow {
  long iteration = 0;
  double total_loss = 0.0;
  double mean_entropy = 0.0;  // mean cached neighborhood entropy, 0 before valid
  double v = 0.0;             // total_loss + beta_v * mean_entropy
};

// Everything the losses observe besides the scene.
struct Supervision {
  std::vector<Camera> cameras;
  std::vector<Raster> target_images;            // per camera, for photometric
  std::vector<std::vector<PixelRay>> rays;      // per camera, for depth/normal
  std::vector<Raster> guidance_maps;            // per camera, screen-space entropy
  std::vector<std::vector<Raster>> align_targets;  // per camera, per level
  std::vector<std::vector<Raster>> align_weights;  // per camera, per level
  std::vector<int> align_windows;
  std::vector<double> lambda_levels;
};

struct TrainerOptions {
  int k = 50;
  ThresholdParams thresholds;
  LearningRates learning_rates;
  double beta_v = 0.1;           // descent monitor coupling
  bool image_guidance = false;   // use footprint entropies for sparsity weights
};

class Trainer {
 public:
  Trainer(Scene scene, Schedule schedule, LossConfig loss_config, Supervision supervision,
          TrainerOptions options);

  // One optimization step: evaluate gated losses, validate finiteness, apply
  // reparameterized gradient updates, advance the cache age (refreshing when
  // it reaches the update interval). Returns the evaluated breakdown.
  LossBreakdown step();

  // Recompute every cached quantity from the current scene (requires the
  // frozen neighbor graph, i.e. the entropy phase must have started).
  void refresh_entropy_cache();

  // Loss gating as of a given iteration.
  LossConfig effective_config(long iteration) const;

  long iteration() const { return iteration_; }
  const Scene& current_scene() const { return scene_; }
  const NeighborGraph* graph() const { return graph_ ? &*graph_ : nullptr; }
  const EntropyCache& cache() const { return cache_; }
  const std::vector<MonitorRow>& monitor() const { return monitor_; }
  const Supervision& supervision() const { return supervision_; }
  double mean_cached_entropy() const;

 private:
  LossBreakdown evaluate(const LossConfig& gated);
  void apply_update(const SceneGrads& grads);

  Scene scene_;
  Schedule schedule_;
  LossConfig loss_config_;
  Supervision supervision_;
  TrainerOptions options_;
  long iteration_ = 0;
  std::optional<NeighborGraph> graph_;
  EntropyCache cache_;
  std::vector<MonitorRow> monitor_;
};

// --- finite-difference validation of the analytic gradients ----------------

struct GradCheckTermReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  int worst_seed = -1;
  int worst_primitive = -1;
  int worst_param = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckReport {
  std::map<std::string, GradCheckTermReport> terms;
  double seconds = 0.0;
  bool pass = false;
};

// Central differences with step 1e-5 on randomized small fixtures.
// Known terms: "sparsity", "depth", "normal", "align", "photometric"
// (L1-only), plus "quadratic" (a closed-form harness self-test that must
// agree to 1e-10). Tolerances: 1e-4 per term, 1e-3 for align.
// `corrupt_gradients` deliberately biases every analytic gradient so the
// check must fail (a negative control for the harness itself).
GradCheckReport run_gradcheck(const std::vector<std::string>& terms, int n_seeds,
                              std::uint64_t base_seed, bool corrupt_gradients = false);

}  // namespace egs
