#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "egs/io.hpp"
#include "egs/optimizer.hpp"
#include "egs/synth.hpp"

namespace egs {

// Everything a full optimization run produces, kept in memory; callers decide
// what to persist. All fields are deterministic functions of the config
// except summary["timing"], which isolates the wall-clock readings.
struct RunResult {
  Scene initial_scene;
  Scene final_scene;
  std::vector<nlohmann::json> metrics;  // one row per logging interval
  std::vector<MonitorRow> monitor;      // one row per iteration
  nlohmann::json summary;
};

// Build a scene from the config's generator section. Generators carry their
// own scale floors; `sigma_min` applies when loading from csv.
Scene build_scene(const SceneConfig& config, std::uint64_t seed);

// Camera rig: the first camera looks straight down the z axis from
// `distance`; any others sit on a horizontal ring of radius `ring_radius` at
// the same height, all aimed at the origin.
std::vector<Camera> build_camera_rig(const CameraRigConfig& config);

// Analytic surface for generators that have one (noisy_plane, sphere).
std::optional<SurfaceDescriptor> generator_surface(const SceneConfig& config);

// Run the full schedule described by the config and collect metrics,
// per-iteration monitor rows, and a summary with initial/final surface and
// entropy statistics.
RunResult run_optimization(const RunConfig& config);

}  // namespace egs
