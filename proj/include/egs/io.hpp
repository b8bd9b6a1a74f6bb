#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "egs/core.hpp"
#include "egs/raster.hpp"

namespace egs {

// --- PGM (binary grayscale, P5, maxval 255) ---------------------------------

GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);

// Parse from an in-memory byte buffer (the file readers defer to these).
GrayImage parse_pgm(const std::string& bytes, const std::string& origin);

// --- FER1 (float entropy raster, little-endian) ------------------------------
// Layout: "FER1" magic, u32 width, u32 height, u32 channels, then
// width*height*channels float32 values, row-major, channel-interleaved.

Raster read_fer1(const std::string& path);
void write_fer1(const std::string& path, const Raster& raster);

// --- primitive point clouds (CSV) -------------------------------------------
// Header is exactly:
//   x,y,z,sx,sy,sz,qw,qx,qy,qz,opacity,r,g,b,weight
// Values are written with %.9g so a round trip preserves 1e-7 relative
// accuracy.

std::string serialize_scene_csv(const Scene& scene);
std::vector<GaussianPrimitive> parse_scene_csv(const std::string& text,
                                               const std::string& origin);
void write_scene_csv(const std::string& path, const Scene& scene);
std::vector<GaussianPrimitive> load_scene_csv(const std::string& path);

// Write-only ASCII PLY export of the same per-primitive fields.
void write_ply_ascii(const std::string& path, const Scene& scene);

// --- run configuration --------------------------------------------------------

struct SceneConfig {
  std::string generator = "noisy_plane";  // noisy_plane | stacked | tangential | sphere | csv
  std::string path;                       // source file when generator == "csv"
  int n = 500;
  double noise_sigma = 0.1;
  double extent = 2.0;
  double spacing = 0.1;
  double radius = 1.0;
  double sigma_min = 0.03;
  std::optional<double> epsilon_tangent;  // default: 0.5 * sigma_min
  std::optional<double> decay_rate;       // default: 1 / sigma_min^2
};

struct CameraRigConfig {
  int count = 1;
  double distance = 6.0;     // eye distance from the origin
  double ring_radius = 0.0;  // horizontal offset of ring cameras
  double focal = 125.0;
  int width = 96;
  int height = 96;
};

struct RayGridConfig {
  int stride = 4;
};

struct NeighborhoodConfig {
  int k = 50;
  double epsilon_stability = 0.01;
  std::optional<double> coupling_beta;  // default: -sigma_min^2
  double eta_floor = 0.0;
};

struct PyramidConfig {
  int levels = 3;
  double beta = 6.0;
  int guidance_window = 9;
};

struct LossesFileConfig {
  bool photometric = true;
  bool depth = true;
  bool normal = true;
  bool sparsity = true;
  bool align = true;
  bool image_guidance = false;
  double lambda_sparsity = 0.1;
  double lambda_align = 0.05;
  double ssim_mix = 0.2;
};

struct ScheduleConfig {
  long total_iterations = 3000;
  double geom_start_fraction = 0.5;
  double entropy_start_fraction = 2.0 / 3.0;
  double knn_freeze_fraction = 2.0 / 3.0;
  int entropy_update_interval = 10;
};

struct OptimizerFileConfig {
  double lr_center = 1e-3;
  double lr_scale = 1e-3;
  double lr_rotation = 1e-3;
  double lr_opacity = 5e-2;
  double lr_color = 1e-2;
  double beta_v = 0.1;
  int log_every = 10;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "run_out";
  SceneConfig scene;
  CameraRigConfig cameras;
  RayGridConfig rays;
  NeighborhoodConfig neighborhood;
  PyramidConfig pyramid;
  LossesFileConfig losses;
  ScheduleConfig schedule;
  OptimizerFileConfig optimizer;
};

// Strict parsing rejects unknown keys with a UsageError naming the key and
// section; lenient parsing records them as warnings instead. Type mismatches
// always raise UsageError naming the field.
RunConfig parse_run_config(const nlohmann::json& j, bool strict,
                           std::vector<std::string>* warnings);
RunConfig load_run_config(const std::string& path, bool strict,
                          std::vector<std::string>* warnings);
nlohmann::json run_config_to_json(const RunConfig& config);

// --- misc ---------------------------------------------------------------------

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

// Line-per-record JSON writer with sorted keys (nlohmann's default ordering).
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);
  void write_row(const nlohmann::json& row);

 private:
  std::ofstream out_;
  std::string path_;
};

}  // namespace egs
