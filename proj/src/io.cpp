#include "egs/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "egs/error.hpp"

namespace egs {

namespace {

// Header tokenizer for PGM: skips whitespace and '#' comments, returns the
// next token and advances `pos`.
std::string next_pgm_token(const std::string& bytes, std::size_t* pos,
                           const std::string& origin) {
  std::size_t i = *pos;
  while (i < bytes.size()) {
    const char c = bytes[i];
    if (c == '#') {
      while (i < bytes.size() && bytes[i] != '\n') ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else {
      break;
    }
  }
  if (i >= bytes.size()) {
    throw IoError(origin + ": truncated header at byte offset " + std::to_string(i));
  }
  std::size_t start = i;
  while (i < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[i])) &&
         bytes[i] != '#') {
    ++i;
  }
  *pos = i;
  return bytes.substr(start, i - start);
}

int parse_pgm_int(const std::string& token, const char* what, const std::string& origin) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw IoError(origin + ": invalid " + std::string(what) + " token '" + token + "'");
  }
}

void append_u32_le(std::string* out, std::uint32_t v) {
  out->push_back(static_cast<char>(v & 0xff));
  out->push_back(static_cast<char>((v >> 8) & 0xff));
  out->push_back(static_cast<char>((v >> 16) & 0xff));
  out->push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const std::string& bytes, std::size_t offset) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + 3])) << 24);
}

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

const char* kCsvHeader = "x,y,z,sx,sy,sz,qw,qx,qy,qz,opacity,r,g,b,weight";

}  // namespace

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return ss.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

GrayImage parse_pgm(const std::string& bytes, const std::string& origin) {
  std::size_t pos = 0;
  const std::string magic = next_pgm_token(bytes, &pos, origin);
  if (magic == "P2") {
    throw IoError(origin + ": magic 'P2' is ASCII grayscale; only binary 'P5' is supported");
  }
  if (magic == "P6") {
    throw IoError(origin + ": magic 'P6' is a binary color PPM; expected grayscale 'P5'");
  }
  if (magic != "P5") {
    throw IoError(origin + ": bad magic '" + magic + "'; expected binary grayscale 'P5'");
  }
  const int width = parse_pgm_int(next_pgm_token(bytes, &pos, origin), "width", origin);
  const int height = parse_pgm_int(next_pgm_token(bytes, &pos, origin), "height", origin);
  const int maxval = parse_pgm_int(next_pgm_token(bytes, &pos, origin), "maxval", origin);
  if (width < 1 || height < 1) {
    throw IoError(origin + ": non-positive dimensions " + std::to_string(width) + "x" +
                  std::to_string(height));
  }
  if (maxval != 255) {
    throw IoError(origin + ": maxval " + std::to_string(maxval) +
                  " unsupported; expected 255");
  }
  if (pos >= bytes.size() ||
      !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw IoError(origin + ": missing whitespace after maxval at byte offset " +
                  std::to_string(pos));
  }
  pos += 1;  // exactly one whitespace byte separates header and pixels
  const std::size_t expected = static_cast<std::size_t>(width) * height;
  const std::size_t available = bytes.size() - pos;
  if (available < expected) {
    throw IoError(origin + ": expected " + std::to_string(expected) +
                  " pixel bytes after header (offset " + std::to_string(pos) +
                  "), found " + std::to_string(available));
  }
  GrayImage img(width, height);
  std::memcpy(img.pixels.data(), bytes.data() + pos, expected);
  return img;
}

GrayImage read_pgm(const std::string& path) {
  return parse_pgm(read_file_bytes(path), "PGM '" + path + "'");
}

void write_pgm(const std::string& path, const GrayImage& image) {
  if (image.width < 1 || image.height < 1) {
    throw UsageError("write_pgm: image has no pixels");
  }
  std::string bytes = "P5\n" + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n255\n";
  bytes.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  write_file_bytes(path, bytes);
}

Raster read_fer1(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  const std::string origin = "FER1 '" + path + "'";
  if (bytes.size() < 16) {
    throw IoError(origin + ": file is " + std::to_string(bytes.size()) +
                  " bytes, smaller than the 16-byte header");
  }
  if (bytes.compare(0, 4, "FER1") != 0) {
    throw IoError(origin + ": bad magic '" + bytes.substr(0, 4) + "'; expected 'FER1'");
  }
  const std::uint32_t width = read_u32_le(bytes, 4);
  const std::uint32_t height = read_u32_le(bytes, 8);
  const std::uint32_t channels = read_u32_le(bytes, 12);
  if (width == 0 || height == 0 || channels == 0) {
    throw IoError(origin + ": zero dimension in header");
  }
  const std::size_t count =
      static_cast<std::size_t>(width) * height * channels;
  const std::size_t expected = 16 + count * 4;
  if (bytes.size() != expected) {
    throw IoError(origin + ": payload size mismatch; header implies " +
                  std::to_string(expected) + " bytes, file has " +
                  std::to_string(bytes.size()));
  }
  Raster out(static_cast<int>(width), static_cast<int>(height), static_cast<int>(channels));
  for (std::size_t i = 0; i < count; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 16 + i * 4, 4);
    out.data[i] = static_cast<double>(f);
  }
  return out;
}

void write_fer1(const std::string& path, const Raster& raster) {
  if (raster.width < 1 || raster.height < 1 || raster.channels < 1) {
    throw UsageError("write_fer1: raster has no data");
  }
  std::string bytes = "FER1";
  append_u32_le(&bytes, static_cast<std::uint32_t>(raster.width));
  append_u32_le(&bytes, static_cast<std::uint32_t>(raster.height));
  append_u32_le(&bytes, static_cast<std::uint32_t>(raster.channels));
  bytes.reserve(bytes.size() + raster.data.size() * 4);
  for (double v : raster.data) {
    const float f = static_cast<float>(v);
    char raw[4];
    std::memcpy(raw, &f, 4);
    bytes.append(raw, 4);
  }
  write_file_bytes(path, bytes);
}

std::string serialize_scene_csv(const Scene& scene) {
  std::string out = kCsvHeader;
  out.push_back('\n');
  for (const GaussianPrimitive& p : scene.primitives) {
    const double fields[15] = {p.center.x(),   p.center.y(),   p.center.z(),
                               p.scale.x(),    p.scale.y(),    p.scale.z(),
                               p.rotation[0],  p.rotation[1],  p.rotation[2],
                               p.rotation[3],  p.opacity,      p.color.x(),
                               p.color.y(),    p.color.z(),    p.weight};
    for (int i = 0; i < 15; ++i) {
      if (i > 0) out.push_back(',');
      out += format_g9(fields[i]);
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<GaussianPrimitive> parse_scene_csv(const std::string& text,
                                               const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw IoError(origin + ": bad header '" + line + "'; expected '" + kCsvHeader + "'");
  }
  static const char* kFieldNames[15] = {"x",  "y",  "z",  "sx", "sy",      "sz", "qw", "qx",
                                        "qy", "qz", "opacity", "r",  "g",  "b",  "weight"};
  std::vector<GaussianPrimitive> prims;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double fields[15];
    std::size_t start = 0;
    for (int f = 0; f < 15; ++f) {
      std::size_t end = line.find(',', start);
      const bool last = f == 14;
      if (!last && end == std::string::npos) {
        throw IoError(origin + ": line " + std::to_string(line_no) +
                      ": expected 15 fields, found " + std::to_string(f + 1));
      }
      if (last) {
        if (end != std::string::npos) {
          throw IoError(origin + ": line " + std::to_string(line_no) +
                        ": more than 15 fields");
        }
        end = line.size();
      }
      const std::string token = line.substr(start, end - start);
      try {
        std::size_t used = 0;
        fields[f] = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw IoError(origin + ": line " + std::to_string(line_no) + ": field '" +
                      kFieldNames[f] + "' is not a number: '" + token + "'");
      }
      start = end + 1;
    }
    GaussianPrimitive p;
    p.center = Vec3(fields[0], fields[1], fields[2]);
    p.scale = Vec3(fields[3], fields[4], fields[5]);
    p.rotation = Vec4(fields[6], fields[7], fields[8], fields[9]);
    p.opacity = fields[10];
    p.color = Vec3(fields[11], fields[12], fields[13]);
    p.weight = fields[14];
    prims.push_back(p);
  }
  return prims;
}

void write_scene_csv(const std::string& path, const Scene& scene) {
  write_file_bytes(path, serialize_scene_csv(scene));
}

std::vector<GaussianPrimitive> load_scene_csv(const std::string& path) {
  return parse_scene_csv(read_file_bytes(path), "scene csv '" + path + "'");
}

void write_ply_ascii(const std::string& path, const Scene& scene) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " +
                    std::to_string(scene.primitives.size()) + "\n";
  static const char* kProps[15] = {"x",  "y",  "z",  "sx",      "sy",  "sz", "qw", "qx",
                                   "qy", "qz", "opacity", "red", "green", "blue", "weight"};
  for (const char* prop : kProps) {
    out += "property double ";
    out += prop;
    out.push_back('\n');
  }
  out += "end_header\n";
  for (const GaussianPrimitive& p : scene.primitives) {
    const double fields[15] = {p.center.x(),   p.center.y(),   p.center.z(),
                               p.scale.x(),    p.scale.y(),    p.scale.z(),
                               p.rotation[0],  p.rotation[1],  p.rotation[2],
                               p.rotation[3],  p.opacity,      p.color.x(),
                               p.color.y(),    p.color.z(),    p.weight};
    for (int i = 0; i < 15; ++i) {
      if (i > 0) out.push_back(' ');
      out += format_g9(fields[i]);
    }
    out.push_back('\n');
  }
  write_file_bytes(path, out);
}

// --- run configuration ---------------------------------------------------------

namespace {

// Tracks which keys a section consumed so unknown keys can be reported.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw UsageError("config: section '" + path_ + "' must be a JSON object");
    }
  }

  template <typename T>
  void get(const char* key, T* out) {
    known_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, key, out);
  }

  void get_optional(const char* key, std::optional<double>* out) {
    known_.push_back(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    double v = 0.0;
    read(*it, key, &v);
    *out = v;
  }

  nlohmann::json subsection(const char* key) {
    known_.push_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nlohmann::json::object() : *it;
  }

  void finish(bool strict, std::vector<std::string>* warnings) const {
    for (const auto& item : j_.items()) {
      if (std::find(known_.begin(), known_.end(), item.key()) != known_.end()) continue;
      const std::string msg =
          "config: unknown key '" + item.key() + "' in section '" + path_ + "'";
      if (strict) throw UsageError(msg);
      if (warnings != nullptr) warnings->push_back(msg);
    }
  }

 private:
  void fail_type(const char* key, const char* want) const {
    throw UsageError("config: field '" + path_ + "." + key + "' must be " + want);
  }
  void read(const nlohmann::json& v, const char* key, bool* out) {
    if (!v.is_boolean()) fail_type(key, "a boolean");
    *out = v.get<bool>();
  }
  void read(const nlohmann::json& v, const char* key, int* out) {
    if (!v.is_number_integer()) fail_type(key, "an integer");
    *out = v.get<int>();
  }
  void read(const nlohmann::json& v, const char* key, long* out) {
    if (!v.is_number_integer()) fail_type(key, "an integer");
    *out = v.get<long>();
  }
  void read(const nlohmann::json& v, const char* key, std::uint64_t* out) {
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0)) {
      fail_type(key, "a non-negative integer");
    }
    *out = v.get<std::uint64_t>();
  }
  void read(const nlohmann::json& v, const char* key, double* out) {
    if (!v.is_number()) fail_type(key, "a number");
    *out = v.get<double>();
  }
  void read(const nlohmann::json& v, const char* key, std::string* out) {
    if (!v.is_string()) fail_type(key, "a string");
    *out = v.get<std::string>();
  }

  // Held by value: subsection() hands back temporaries, and a reference here
  // would dangle as soon as the caller's constructor expression ended.
  nlohmann::json j_;
  std::string path_;
  std::vector<std::string> known_;
};

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j, bool strict,
                           std::vector<std::string>* warnings) {
  RunConfig cfg;
  Section root(j, "<root>");
  root.get("seed", &cfg.seed);
  root.get("output_dir", &cfg.output_dir);

  {
    Section s(root.subsection("scene"), "scene");
    s.get("generator", &cfg.scene.generator);
    s.get("path", &cfg.scene.path);
    s.get("n", &cfg.scene.n);
    s.get("noise_sigma", &cfg.scene.noise_sigma);
    s.get("extent", &cfg.scene.extent);
    s.get("spacing", &cfg.scene.spacing);
    s.get("radius", &cfg.scene.radius);
    s.get("sigma_min", &cfg.scene.sigma_min);
    s.get_optional("epsilon_tangent", &cfg.scene.epsilon_tangent);
    s.get_optional("decay_rate", &cfg.scene.decay_rate);
    s.finish(strict, warnings);
  }
  {
    Section s(root.subsection("cameras"), "cameras");
    s.get("count", &cfg.cameras.count);
    s.get("distance", &cfg.cameras.distance);
    s.get("ring_radius", &cfg.cameras.ring_radius);
    s.get("focal", &cfg.cameras.focal);
    s.get("width", &cfg.cameras.width);
    s.get("height", &cfg.cameras.height);
    s.finish(strict, warnings);
  }
  {
    Section s(root.subsection("rays"), "rays");
    s.get("stride", &cfg.rays.stride);
    s.finish(strict, warnings);
  }
  {
    Section s(root.subsection("neighborhood"), "neighborhood");
    s.get("k", &cfg.neighborhood.k);
    s.get("epsilon_stability", &cfg.neighborhood.epsilon_stability);
    s.get_optional("coupling_beta", &cfg.neighborhood.coupling_beta);
    s.get("eta_floor", &cfg.neighborhood.eta_floor);
    s.finish(strict, warnings);
  }
  {
    Section s(root.subsection("pyramid"), "pyramid");
    s.get("levels", &cfg.pyramid.levels);
    s.get("beta", &cfg.pyramid.beta);
    s.get("guidance_window", &cfg.pyramid.guidance_window);
    s.finish(strict, warnings);
  }
  {
    Section s(root.subsection("losses"), "losses");
    s.get("photometric", &cfg.losses.photometric);
    s.get("depth", &cfg.losses.depth);
    s.get("normal", &cfg.losses.normal);
    s.get("sparsity", &cfg.losses.sparsity);
    s.get("align", &cfg.losses.align);
    s.get("image_guidance", &cfg.losses.image_guidance);
    s.get("lambda_sparsity", &cfg.losses.lambda_sparsity);
    s.get("lambda_align", &cfg.losses.lambda_align);
    s.get("ssim_mix", &cfg.losses.ssim_mix);
    s.finish(strict, warnings);
  }
  {
    Section s(root.subsection("schedule"), "schedule");
    s.get("total_iterations", &cfg.schedule.total_iterations);
    s.get("geom_start_fraction", &cfg.schedule.geom_start_fraction);
    s.get("entropy_start_fraction", &cfg.schedule.entropy_start_fraction);
    s.get("knn_freeze_fraction", &cfg.schedule.knn_freeze_fraction);
    s.get("entropy_update_interval", &cfg.schedule.entropy_update_interval);
    s.finish(strict, warnings);
  }
  {
    Section s(root.subsection("optimizer"), "optimizer");
    s.get("lr_center", &cfg.optimizer.lr_center);
    s.get("lr_scale", &cfg.optimizer.lr_scale);
    s.get("lr_rotation", &cfg.optimizer.lr_rotation);
    s.get("lr_opacity", &cfg.optimizer.lr_opacity);
    s.get("lr_color", &cfg.optimizer.lr_color);
    s.get("beta_v", &cfg.optimizer.beta_v);
    s.get("log_every", &cfg.optimizer.log_every);
    s.finish(strict, warnings);
  }
  root.finish(strict, warnings);
  return cfg;
}

RunConfig load_run_config(const std::string& path, bool strict,
                          std::vector<std::string>* warnings) {
  const std::string bytes = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
  return parse_run_config(j, strict, warnings);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["scene"] = {{"generator", cfg.scene.generator}, {"path", cfg.scene.path},
                {"n", cfg.scene.n},                 {"noise_sigma", cfg.scene.noise_sigma},
                {"extent", cfg.scene.extent},       {"spacing", cfg.scene.spacing},
                {"radius", cfg.scene.radius},       {"sigma_min", cfg.scene.sigma_min}};
  if (cfg.scene.epsilon_tangent) j["scene"]["epsilon_tangent"] = *cfg.scene.epsilon_tangent;
  if (cfg.scene.decay_rate) j["scene"]["decay_rate"] = *cfg.scene.decay_rate;
  j["cameras"] = {{"count", cfg.cameras.count},
                  {"distance", cfg.cameras.distance},
                  {"ring_radius", cfg.cameras.ring_radius},
                  {"focal", cfg.cameras.focal},
                  {"width", cfg.cameras.width},
                  {"height", cfg.cameras.height}};
  j["rays"] = {{"stride", cfg.rays.stride}};
  j["neighborhood"] = {{"k", cfg.neighborhood.k},
                       {"epsilon_stability", cfg.neighborhood.epsilon_stability},
                       {"eta_floor", cfg.neighborhood.eta_floor}};
  if (cfg.neighborhood.coupling_beta) {
    j["neighborhood"]["coupling_beta"] = *cfg.neighborhood.coupling_beta;
  }
  j["pyramid"] = {{"levels", cfg.pyramid.levels},
                  {"beta", cfg.pyramid.beta},
                  {"guidance_window", cfg.pyramid.guidance_window}};
  j["losses"] = {{"photometric", cfg.losses.photometric},
                 {"depth", cfg.losses.depth},
                 {"normal", cfg.losses.normal},
                 {"sparsity", cfg.losses.sparsity},
                 {"align", cfg.losses.align},
                 {"image_guidance", cfg.losses.image_guidance},
                 {"lambda_sparsity", cfg.losses.lambda_sparsity},
                 {"lambda_align", cfg.losses.lambda_align},
                 {"ssim_mix", cfg.losses.ssim_mix}};
  j["schedule"] = {{"total_iterations", cfg.schedule.total_iterations},
                   {"geom_start_fraction", cfg.schedule.geom_start_fraction},
                   {"entropy_start_fraction", cfg.schedule.entropy_start_fraction},
                   {"knn_freeze_fraction", cfg.schedule.knn_freeze_fraction},
                   {"entropy_update_interval", cfg.schedule.entropy_update_interval}};
  j["optimizer"] = {{"lr_center", cfg.optimizer.lr_center},
                    {"lr_scale", cfg.optimizer.lr_scale},
                    {"lr_rotation", cfg.optimizer.lr_rotation},
                    {"lr_opacity", cfg.optimizer.lr_opacity},
                    {"lr_color", cfg.optimizer.lr_color},
                    {"beta_v", cfg.optimizer.beta_v},
                    {"log_every", cfg.optimizer.log_every}};
  return j;
}

JsonlWriter::JsonlWriter(const std::string& path) : out_(path, std::ios::trunc), path_(path) {
  if (!out_) throw IoError("cannot open '" + path + "' for writing");
}

void JsonlWriter::write_row(const nlohmann::json& row) {
  out_ << row.dump() << '\n';
  if (!out_) throw IoError("write failure on '" + path_ + "'");
}

}  // namespace egs
