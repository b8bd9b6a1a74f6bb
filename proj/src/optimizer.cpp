#include "egs/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "egs/error.hpp"
#include "egs/image_entropy.hpp"
#include "egs/render.hpp"

namespace egs {

void Schedule::validate() const {
  if (total_iterations < 0) throw UsageError("schedule: total_iterations must be >= 0");
  if (entropy_update_interval < 1) {
    throw UsageError("schedule: entropy_update_interval must be >= 1");
  }
  auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!in_unit(geom_start_fraction) || !in_unit(entropy_start_fraction) ||
      !in_unit(knn_freeze_fraction)) {
    throw UsageError("schedule: phase fractions must lie in [0, 1]");
  }
  if (geom_start_fraction > entropy_start_fraction) {
    throw UsageError("schedule: geometry phase must not start after the entropy phase");
  }
  if (std::abs(knn_freeze_fraction - entropy_start_fraction) > 1e-12) {
    throw UsageError(
        "schedule: knn_freeze_fraction must equal entropy_start_fraction (the "
        "neighbor graph freezes exactly when the entropy terms activate)");
  }
}

long Schedule::geom_start_iteration() const {
  return std::llround(geom_start_fraction * static_cast<double>(total_iterations));
}

long Schedule::entropy_start_iteration() const {
  return std::llround(entropy_start_fraction * static_cast<double>(total_iterations));
}

Trainer::Trainer(Scene scene, Schedule schedule, LossConfig loss_config,
                 Supervision supervision, TrainerOptions options)
    : scene_(std::move(scene)),
      schedule_(schedule),
      loss_config_(loss_config),
      supervision_(std::move(supervision)),
      options_(options) {
  schedule_.validate();
  if (scene_.primitives.empty()) throw UsageError("trainer: scene has no primitives");
  const bool needs_cameras = loss_config_.photometric || loss_config_.normal ||
                             loss_config_.align || options_.image_guidance;
  if (needs_cameras && supervision_.cameras.empty()) {
    throw UsageError("trainer: enabled losses require at least one camera");
  }
  if ((loss_config_.depth || loss_config_.normal) &&
      supervision_.rays.size() != supervision_.cameras.size()) {
    throw UsageError("trainer: depth/normal losses require one ray bundle per camera");
  }
  if (loss_config_.photometric &&
      supervision_.target_images.size() != supervision_.cameras.size()) {
    throw UsageError("trainer: photometric loss requires one target image per camera");
  }
  if (loss_config_.align &&
      (supervision_.align_targets.size() != supervision_.cameras.size() ||
       supervision_.align_weights.size() != supervision_.cameras.size() ||
       supervision_.align_windows.empty() ||
       supervision_.lambda_levels.size() != supervision_.align_windows.size())) {
    throw UsageError("trainer: align loss requires per-camera pyramids and level weights");
  }
  if (options_.image_guidance &&
      supervision_.guidance_maps.size() != supervision_.cameras.size()) {
    throw UsageError("trainer: image guidance requires one guidance map per camera");
  }
}

LossConfig Trainer::effective_config(long iteration) const {
  LossConfig gated = loss_config_;
  const bool geom = iteration >= schedule_.geom_start_iteration();
  const bool entropy = iteration >= schedule_.entropy_start_iteration();
  gated.depth = gated.depth && geom;
  gated.normal = gated.normal && geom;
  gated.sparsity = gated.sparsity && entropy;
  gated.align = gated.align && entropy;
  return gated;
}

double Trainer::mean_cached_entropy() const {
  if (!cache_.valid || cache_.entropies.empty()) return 0.0;
  double sum = 0.0;
  for (double h : cache_.entropies) sum += h;
  return sum / static_cast<double>(cache_.entropies.size());
}

void Trainer::refresh_entropy_cache() {
  if (!graph_) {
    throw ContractError("trainer: cache refresh requires the frozen neighbor graph");
  }
  cache_.entropies = neighborhood_entropy_all(scene_, *graph_);
  cache_.snri = snri_all(scene_, *graph_);
  cache_.eta = adaptive_threshold_all(scene_, *graph_, options_.thresholds);

  if (options_.image_guidance) {
    const std::size_t n = scene_.primitives.size();
    cache_.image_entropy.assign(n, 0.0);
    std::vector<int> hits(n, 0);
    for (std::size_t cam = 0; cam < supervision_.cameras.size(); ++cam) {
      const PrimitiveImageEntropy pe = primitive_image_entropy(
          scene_, supervision_.cameras[cam], supervision_.guidance_maps[cam]);
      for (std::size_t i = 0; i < n; ++i) {
        if (pe.status[i] != FootprintStatus::kBehindCamera) {
          cache_.image_entropy[i] += pe.value[i];
          hits[i] += 1;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (hits[i] > 0) cache_.image_entropy[i] /= hits[i];
    }
    cache_.image_weights = entropy_guided_weights(cache_.image_entropy);
  } else {
    cache_.image_entropy.assign(scene_.primitives.size(), 0.0);
    cache_.image_weights.assign(scene_.primitives.size(), 1.0);
  }

  // Screen-space snapshots of the cached entropies, one smoothed raster per
  // align window (or a single 3-pixel window when align is unused).
  cache_.rendered_maps.clear();
  std::vector<int> windows(supervision_.align_windows.begin(),
                           supervision_.align_windows.end());
  if (windows.empty()) windows.push_back(3);
  for (const Camera& cam : supervision_.cameras) {
    const RenderGeometry geometry = build_render_geometry(scene_, cam);
    EntropyMapRender render =
        render_entropy_levels(geometry, scene_, cache_.entropies, windows);
    cache_.rendered_maps.push_back(std::move(render.smoothed));
  }

  cache_.age = 0;
  cache_.valid = true;
}

LossBreakdown Trainer::evaluate(const LossConfig& gated) {
  LossInputs in;
  in.scene = &scene_;
  in.graph = graph_ ? &*graph_ : nullptr;
  in.cameras = supervision_.cameras;
  in.target_images = supervision_.target_images;
  in.rays = &supervision_.rays;
  if (gated.sparsity) {
    in.eta = cache_.eta;
    in.image_weights = cache_.image_weights;
  }
  if (gated.align) {
    in.cached_entropies = cache_.entropies;
    in.align_windows = supervision_.align_windows;
    in.align_targets = &supervision_.align_targets;
    in.align_weights = &supervision_.align_weights;
    in.lambda_levels = supervision_.lambda_levels;
  }
  return total_loss(in, gated);
}

void Trainer::apply_update(const SceneGrads& grads) {
  const LearningRates& lr = options_.learning_rates;
  for (std::size_t i = 0; i < scene_.primitives.size(); ++i) {
    GaussianPrimitive& p = scene_.primitives[i];
    p.center -= lr.center * grads.center[i];
    for (int a = 0; a < 3; ++a) {
      // Log-space step keeps scales positive: s <- s * exp(-lr * dL/ds * s).
      p.scale[a] *= std::exp(-lr.scale * grads.scale[i][a] * p.scale[a]);
    }
    p.rotation -= lr.rotation * grads.rotation[i];
    const double norm = p.rotation.norm();
    if (!(norm > 1e-12)) {
      throw NumericError("trainer: rotation collapsed to zero norm");
    }
    p.rotation /= norm;
    {
      // Logit-space step keeps opacity inside (0, 1).
      const double o = std::clamp(p.opacity, 1e-6, 1.0 - 1e-6);
      const double u = logit(o) - lr.opacity * grads.opacity[i] * o * (1.0 - o);
      p.opacity = sigmoid(u);
    }
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(p.color[c], 1e-6, 1.0 - 1e-6);
      const double u = logit(v) - lr.color * grads.color[i][c] * v * (1.0 - v);
      p.color[c] = sigmoid(u);
    }
  }
}

LossBreakdown Trainer::step() {
  const long iter = iteration_;
  const LossConfig gated = effective_config(iter);
  const bool entropy_phase = iter >= schedule_.entropy_start_iteration();
  const bool needs_cache = gated.sparsity || gated.align;

  if (entropy_phase && (loss_config_.sparsity || loss_config_.align) && !graph_) {
    graph_ = build_knn(scene_, options_.k, iter);
    graph_->frozen = true;
    refresh_entropy_cache();
  }
  if (needs_cache && !cache_.valid) {
    throw ContractError("trainer: entropy terms active without a valid cache");
  }

  LossBreakdown result = evaluate(gated);

  struct TermValue {
    const char* name;
    double value;
  };
  const TermValue values[] = {{"photometric", result.photometric},
                              {"sparsity", result.sparsity},
                              {"depth", result.depth},
                              {"normal", result.normal},
                              {"align", result.align},
                              {"total", result.total}};
  for (const TermValue& tv : values) {
    if (!std::isfinite(tv.value)) {
      throw NumericError(std::string("trainer: non-finite loss term '") + tv.name +
                         "' at iteration " + std::to_string(iter));
    }
  }
  for (std::size_t i = 0; i < result.grads.size(); ++i) {
    for (int p = 0; p < SceneGrads::kParamsPerPrimitive; ++p) {
      if (!std::isfinite(result.grads.component(i, p))) {
        throw NumericError("trainer: non-finite gradient for primitive " +
                           std::to_string(i) + ", parameter " + std::to_string(p) +
                           " at iteration " + std::to_string(iter));
      }
    }
  }

  apply_update(result.grads);
  iteration_ += 1;

  MonitorRow row;
  row.iteration = iter;
  row.total_loss = result.total;
  row.mean_entropy = mean_cached_entropy();
  row.v = row.total_loss + options_.beta_v * row.mean_entropy;
  monitor_.push_back(row);

  if (cache_.valid) {
    cache_.age += 1;
    if (cache_.age >= schedule_.entropy_update_interval) refresh_entropy_cache();
  }
  return result;
}

}  // namespace egs
