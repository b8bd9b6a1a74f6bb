#include "egs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "egs/error.hpp"

namespace egs {

namespace {

constexpr double kDiskRadial = 0.4;
constexpr double kDiskThickness = 0.05;

GaussianPrimitive make_disk(const Vec3& center, Rng& rng) {
  GaussianPrimitive p;
  p.center = center;
  p.scale = Vec3(kDiskRadial, kDiskRadial, kDiskThickness);
  p.opacity = rng.uniform(0.4, 0.9);
  p.color = Vec3(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8));
  return p;
}

// Unit quaternion rotating +z onto `dir` (dir unit length).
Vec4 quaternion_z_to(const Vec3& dir) {
  const Vec3 z(0, 0, 1);
  const double d = z.dot(dir);
  if (d < -1.0 + 1e-12) return Vec4(0, 1, 0, 0);  // 180 degrees about x
  const Vec3 c = z.cross(dir);
  Vec4 q(1.0 + d, c.x(), c.y(), c.z());
  return q / q.norm();
}

}  // namespace

Scene make_stacked_scene(int n, double spacing, std::uint64_t seed) {
  if (n < 2) throw UsageError("stacked scene requires n >= 2");
  if (!(spacing > 0.0)) throw UsageError("stacked scene requires positive spacing");
  Rng rng(seed);
  std::vector<GaussianPrimitive> prims;
  prims.reserve(n);
  for (int i = 0; i < n; ++i) {
    prims.push_back(make_disk(Vec3(0, 0, i * spacing), rng));
  }
  return Scene(std::move(prims), kDiskThickness);
}

Scene make_tangential_scene(int n, std::uint64_t seed) {
  if (n < 2) throw UsageError("tangential scene requires n >= 2");
  Rng rng(seed);
  std::vector<GaussianPrimitive> prims;
  prims.reserve(n);
  for (int i = 0; i < n; ++i) {
    prims.push_back(make_disk(Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0), rng));
  }
  return Scene(std::move(prims), kDiskThickness);
}

Scene make_noisy_plane(int n, double noise_sigma, std::uint64_t seed, double extent) {
  if (n < 2) throw UsageError("noisy plane requires n >= 2");
  if (noise_sigma < 0.0) throw UsageError("noisy plane requires noise_sigma >= 0");
  if (!(extent > 0.0)) throw UsageError("noisy plane requires positive extent");
  Rng rng(seed);
  std::vector<GaussianPrimitive> prims;
  prims.reserve(n);
  for (int i = 0; i < n; ++i) {
    GaussianPrimitive p;
    p.center = Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                    noise_sigma > 0.0 ? rng.normal(0.0, noise_sigma) : 0.0);
    p.scale = Vec3(0.12, 0.12, 0.03);
    p.opacity = rng.uniform(0.3, 0.7);
    p.color = Vec3(rng.uniform(0.35, 0.65), rng.uniform(0.35, 0.65),
                   rng.uniform(0.35, 0.65));
    prims.push_back(p);
  }
  return Scene(std::move(prims), 0.03);
}

Scene make_sphere(int n, double radius, double noise_sigma, std::uint64_t seed) {
  if (n < 2) throw UsageError("sphere scene requires n >= 2");
  if (!(radius > 0.0)) throw UsageError("sphere scene requires positive radius");
  if (noise_sigma < 0.0) throw UsageError("sphere scene requires noise_sigma >= 0");
  Rng rng(seed);
  const double tangential = 0.7 * radius * std::sqrt(4.0 * std::numbers::pi / n);
  const double thickness = 0.02 * radius;
  std::vector<GaussianPrimitive> prims;
  prims.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec3 dir;
    do {
      dir = Vec3(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.normal(0.0, 1.0));
    } while (dir.norm() < 1e-9);
    dir.normalize();
    const double r = radius + (noise_sigma > 0.0 ? rng.normal(0.0, noise_sigma) : 0.0);
    GaussianPrimitive p;
    p.center = dir * r;
    p.scale = Vec3(tangential, tangential, thickness);
    p.rotation = quaternion_z_to(dir);
    p.opacity = rng.uniform(0.3, 0.7);
    p.color = Vec3(rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8));
    prims.push_back(p);
  }
  return Scene(std::move(prims), thickness);
}

GrayImage make_composite_image(int width, int height) {
  if (width < 64 || height < 64) {
    throw UsageError("composite image requires width and height >= 64");
  }
  if (width % 2 != 0) throw UsageError("composite image requires even width");
  GrayImage img(width, height);
  const int half = width / 2;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (x < half) {
        img.at(x, y) = 128;
      } else {
        const int bx = (x - half) / 2;
        const int by = y / 2;
        img.at(x, y) = ((bx + by) % 2 == 0) ? 255 : 0;
      }
    }
  }
  return img;
}

NoisePreset noise_preset(const std::string& name) {
  if (name == "none") return {"none", 0.0, 0.0, 0.0, 0.0};
  if (name == "light") return {"light", 0.5, 8.0, 2.0, 0.002};
  if (name == "medium") return {"medium", 1.0, 15.0, 4.0, 0.01};
  if (name == "heavy") return {"heavy", 1.5, 25.0, 8.0, 0.02};
  if (name == "realistic_sensor") return {"realistic_sensor", 1.3, 12.0, 6.0, 0.008};
  throw UsageError("unknown noise preset '" + name +
                   "' (known: none, light, medium, heavy, realistic_sensor)");
}

GrayImage add_sensor_noise(const GrayImage& image, const NoisePreset& preset,
                           std::uint64_t seed) {
  if (preset.shot_scale < 0.0 || preset.gaussian_std < 0.0 || preset.dark_scale < 0.0 ||
      preset.impulse_prob < 0.0 || preset.impulse_prob > 1.0) {
    throw UsageError("sensor noise preset parameters out of range");
  }
  Rng rng(seed);
  GrayImage out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      double v = image.at(x, y);
      if (preset.shot_scale > 0.0) {
        v += rng.normal(0.0, 1.0) * preset.shot_scale * std::sqrt(std::max(v, 0.0));
      }
      if (preset.gaussian_std > 0.0) {
        v += rng.normal(0.0, preset.gaussian_std);
      }
      if (preset.dark_scale > 0.0) {
        v += std::abs(rng.normal(0.0, preset.dark_scale));
      }
      if (preset.impulse_prob > 0.0 && rng.uniform(0.0, 1.0) < preset.impulse_prob) {
        v = rng.uniform(0.0, 1.0) < 0.5 ? 0.0 : 255.0;
      }
      out.at(x, y) = static_cast<std::uint8_t>(std::llround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return out;
}

SurfaceDescriptor SurfaceDescriptor::plane(const Vec3& normal, double offset) {
  SurfaceDescriptor s;
  s.kind = Kind::kPlane;
  s.normal = normal.normalized();
  s.offset = offset;
  return s;
}

SurfaceDescriptor SurfaceDescriptor::sphere(const Vec3& center, double radius) {
  SurfaceDescriptor s;
  s.kind = Kind::kSphere;
  s.center = center;
  s.radius = radius;
  return s;
}

double surface_rms(const Scene& scene, const SurfaceDescriptor& surface,
                   double opacity_threshold) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const GaussianPrimitive& p : scene.primitives) {
    if (p.opacity < opacity_threshold) continue;
    double d = 0.0;
    if (surface.kind == SurfaceDescriptor::Kind::kPlane) {
      d = surface.normal.dot(p.center) - surface.offset;
    } else {
      d = (p.center - surface.center).norm() - surface.radius;
    }
    acc += d * d;
    ++count;
  }
  if (count == 0) {
    throw NumericError("surface_rms: no opacity-dominant primitives at this threshold");
  }
  return std::sqrt(acc / static_cast<double>(count));
}

double chamfer_distance(const Scene& a, const Scene& b) {
  if (a.primitives.empty() || b.primitives.empty()) {
    throw UsageError("chamfer distance requires non-empty scenes");
  }
  auto one_sided = [](const Scene& from, const Scene& to) {
    double acc = 0.0;
    for (const GaussianPrimitive& p : from.primitives) {
      double best = std::numeric_limits<double>::infinity();
      for (const GaussianPrimitive& q : to.primitives) {
        best = std::min(best, (p.center - q.center).norm());
      }
      acc += best;
    }
    return acc / static_cast<double>(from.primitives.size());
  };
  return 0.5 * (one_sided(a, b) + one_sided(b, a));
}

Camera make_lookat_camera(const Vec3& eye, const Vec3& target, const Vec3& up_hint,
                          double focal_px, int width, int height) {
  if (!(focal_px > 0.0)) throw UsageError("camera focal length must be positive");
  if (width < 1 || height < 1) throw UsageError("camera resolution must be positive");
  const Vec3 forward_raw = target - eye;
  if (forward_raw.norm() < 1e-12) {
    throw UsageError("camera eye and target coincide");
  }
  const Vec3 z = forward_raw.normalized();
  Vec3 up = up_hint;
  if (z.cross(up).norm() < 1e-8) {
    up = std::abs(z.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  }
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);

  Camera cam;
  Mat3 rot;
  rot.row(0) = x;
  rot.row(1) = y;
  rot.row(2) = z;
  cam.world_to_camera = Mat4::Identity();
  cam.world_to_camera.topLeftCorner<3, 3>() = rot;
  cam.world_to_camera.topRightCorner<3, 1>() = -(rot * eye);
  cam.focal = Vec2(focal_px, focal_px);
  cam.principal_point = Vec2((width - 1) / 2.0, (height - 1) / 2.0);
  cam.resolution = {width, height};
  return cam;
}

}  // namespace egs
