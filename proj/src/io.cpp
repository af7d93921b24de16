// Copyright 2026 the stereoflow authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sflow/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "FMAP serialization assumes a little-endian host");

namespace sflow {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw IoError(path.string() + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) fail(path, "cannot open for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) fail(path, "cannot open for reading");
  return is;
}

void finish_write(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) fail(path, "write failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, true);
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) fail(path, "read failed");
  return ss.str();
}

// Whitespace-token scanner for numeric text files; '#' starts a comment.
struct TokenScanner {
  std::filesystem::path path;
  std::string text;
  size_t pos = 0;

  explicit TokenScanner(const std::filesystem::path& p)
      : path(p), text(read_text_file(p)) {}

  bool next(std::string* tok) {
    while (pos < text.size()) {
      const char c = text[pos];
      if (c == '#') {
        while (pos < text.size() && text[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= text.size()) return false;
    const size_t start = pos;
    while (pos < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
    }
    *tok = text.substr(start, pos - start);
    return true;
  }

  double next_double(const char* what) {
    std::string tok;
    if (!next(&tok)) fail(path, std::string("unexpected end of file, expected ") + what);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(tok.c_str(), &end);
    if (errno != 0 || end != tok.c_str() + tok.size()) {
      fail(path, "bad number '" + tok + "' for " + what);
    }
    return v;
  }
};

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

// ---- float maps ----

void write_fmap(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.empty()) fail(path, "refusing to write an empty float map");
  std::ofstream os = open_out(path, true);
  os << "FMAP\n" << img.width() << " " << img.height() << " " << img.channels()
     << "\n";
  std::vector<float> raw(img.data().size());
  for (size_t i = 0; i < raw.size(); ++i) raw[i] = float(img.data()[i]);
  os.write(reinterpret_cast<const char*>(raw.data()),
           std::streamsize(raw.size() * sizeof(float)));
  finish_write(os, path);
}

ImageBuffer read_fmap(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, true);
  std::string magic;
  int w = 0, h = 0, c = 0;
  is >> magic >> w >> h >> c;
  if (!is || magic != "FMAP") fail(path, "not an FMAP file");
  if (w <= 0 || h <= 0 || c <= 0 || double(w) * h * c > 5e8) {
    fail(path, "implausible FMAP dimensions");
  }
  is.get();  // the single newline after the header
  std::vector<float> raw(size_t(w) * h * c);
  is.read(reinterpret_cast<char*>(raw.data()),
          std::streamsize(raw.size() * sizeof(float)));
  if (is.gcount() != std::streamsize(raw.size() * sizeof(float))) {
    fail(path, "truncated FMAP payload");
  }
  ImageBuffer img(w, h, c);
  for (size_t i = 0; i < raw.size(); ++i) img.data()[i] = double(raw[i]);
  return img;
}

void write_fmap_depth(const std::filesystem::path& path, const DepthMap& d) {
  ImageBuffer img(d.width, d.height, 1);
  for (size_t i = 0; i < d.depth.size(); ++i) {
    img.data()[i] = d.valid[i] ? d.depth[i] : std::nan("");
  }
  write_fmap(path, img);
}

DepthMap read_fmap_depth(const std::filesystem::path& path) {
  const ImageBuffer img = read_fmap(path);
  if (img.channels() != 1) fail(path, "depth map must have one channel");
  DepthMap d(img.width(), img.height());
  for (size_t i = 0; i < d.depth.size(); ++i) {
    const double v = img.data()[i];
    if (std::isfinite(v)) {
      d.depth[i] = v;
      d.valid[i] = 1;
    }
  }
  return d;
}

void write_fmap_flow(const std::filesystem::path& path, const FlowField3D& f) {
  ImageBuffer img(f.width, f.height, 3);
  img.data() = f.data;
  write_fmap(path, img);
}

FlowField3D read_fmap_flow(const std::filesystem::path& path) {
  const ImageBuffer img = read_fmap(path);
  if (img.channels() != 3) fail(path, "flow field must have three channels");
  FlowField3D f(img.width(), img.height());
  for (size_t i = 0; i < f.data.size(); ++i) {
    const double v = img.data()[i];
    f.data[i] = std::isfinite(v) ? v : 0.0;
  }
  return f;
}

// ---- PNM ----

void write_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    fail(path, "PNM supports 1 or 3 channels");
  }
  std::ofstream os = open_out(path, true);
  os << (img.channels() == 3 ? "P6" : "P5") << "\n"
     << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw(img.data().size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(img.data()[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  finish_write(os, path);
}

namespace {

// PNM header fields may be separated by whitespace or '#' comments.
int pnm_header_int(std::ifstream& is, const std::filesystem::path& path) {
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      c = is.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) fail(path, "malformed PNM header");
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1000000) fail(path, "implausible PNM header value");
    c = is.get();
  }
  return int(v);
}

ImageBuffer read_pnm_impl(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, true);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (!is || m0 != 'P' || (m1 != '5' && m1 != '6')) fail(path, "not a P5/P6 file");
  const int channels = m1 == '6' ? 3 : 1;
  const int w = pnm_header_int(is, path);
  const int h = pnm_header_int(is, path);
  const int maxval = pnm_header_int(is, path);
  if (maxval != 255) fail(path, "only maxval 255 is supported");
  std::vector<unsigned char> raw(size_t(w) * h * channels);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (is.gcount() != std::streamsize(raw.size())) fail(path, "truncated PNM payload");
  ImageBuffer img(w, h, channels);
  for (size_t i = 0; i < raw.size(); ++i) img.data()[i] = raw[i] / 255.0;
  return img;
}

}  // namespace

ImageBuffer read_pnm(const std::filesystem::path& path) {
  return read_pnm_impl(path);
}

void write_mask_pgm(const std::filesystem::path& path, const OcclusionMask& m) {
  ImageBuffer img(m.width, m.height, 1);
  for (size_t i = 0; i < m.w.size(); ++i) img.data()[i] = m.w[i] ? 1.0 : 0.0;
  write_pnm(path, img);
}

OcclusionMask read_mask_pgm(const std::filesystem::path& path) {
  const ImageBuffer img = read_pnm_impl(path);
  if (img.channels() != 1) fail(path, "mask must be a single-channel PGM");
  OcclusionMask m(img.width(), img.height());
  for (size_t i = 0; i < m.w.size(); ++i) m.w[i] = img.data()[i] >= 0.5 ? 1 : 0;
  return m;
}

// ---- cameras ----

void write_cameras(const std::filesystem::path& path, const CameraRig& rig) {
  std::ofstream os = open_out(path, false);
  os << "# per camera: fx fy cx cy, then the 3x4 world-from-camera pose\n"
     << "# (row-major, wrapped at three values per line)\n"
     << "# camera order: left_t right_t left_t1 right_t1\n";
  const Intrinsics& K = rig.intrinsics;
  for (int cam = 0; cam < 4; ++cam) {
    const RigidTransform& T = rig.world_from_camera[cam];
    os << fmt_double(K.fx) << " " << fmt_double(K.fy) << " " << fmt_double(K.cx)
       << " " << fmt_double(K.cy) << "\n";
    double m[12];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r * 4 + c] = T.rotation(r, c);
      m[r * 4 + 3] = T.translation[r];
    }
    for (int i = 0; i < 12; i += 3) {
      os << fmt_double(m[i]) << " " << fmt_double(m[i + 1]) << " "
         << fmt_double(m[i + 2]) << "\n";
    }
  }
  finish_write(os, path);
}

CameraRig read_cameras(const std::filesystem::path& path) {
  TokenScanner sc(path);
  CameraRig rig;
  for (int cam = 0; cam < 4; ++cam) {
    Intrinsics K;
    K.fx = sc.next_double("fx");
    K.fy = sc.next_double("fy");
    K.cx = sc.next_double("cx");
    K.cy = sc.next_double("cy");
    if (!K.is_valid()) fail(path, "invalid intrinsics");
    if (cam == 0) {
      rig.intrinsics = K;
    } else if (K.fx != rig.intrinsics.fx || K.fy != rig.intrinsics.fy ||
               K.cx != rig.intrinsics.cx || K.cy != rig.intrinsics.cy) {
      fail(path, "all four cameras must share one set of intrinsics");
    }
    RigidTransform T;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double v = sc.next_double("pose entry");
        if (c < 3) {
          T.rotation(r, c) = v;
        } else {
          T.translation[r] = v;
        }
      }
    }
    if (!T.is_rigid(1e-6)) fail(path, "pose rotation is not orthonormal");
    rig.world_from_camera[cam] = T;
  }
  std::string extra;
  if (sc.next(&extra)) fail(path, "trailing content after four cameras");
  return rig;
}

// ---- RoI list ----

void write_rois(const std::filesystem::path& path, const std::vector<RoiBox>& rois) {
  std::ofstream os = open_out(path, false);
  os << "# x y w h, one box per line\n";
  for (const RoiBox& b : rois) {
    os << fmt_double(b.x) << " " << fmt_double(b.y) << " " << fmt_double(b.w)
       << " " << fmt_double(b.h) << "\n";
  }
  finish_write(os, path);
}

std::vector<RoiBox> read_rois(const std::filesystem::path& path) {
  TokenScanner sc(path);
  std::vector<RoiBox> rois;
  std::string tok;
  while (true) {
    const size_t mark = sc.pos;
    if (!sc.next(&tok)) break;
    sc.pos = mark;
    RoiBox b;
    b.x = sc.next_double("box x");
    b.y = sc.next_double("box y");
    b.w = sc.next_double("box w");
    b.h = sc.next_double("box h");
    if (!b.is_valid()) fail(path, "invalid box (need finite values, w > 0, h > 0)");
    rois.push_back(b);
  }
  return rois;
}

// ---- key = value files ----

KeyValueFile KeyValueFile::parse_file(const std::filesystem::path& path) {
  return parse_text(read_text_file(path), path.string());
}

KeyValueFile KeyValueFile::parse_text(const std::string& text,
                                      const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(origin + ":" + std::to_string(lineno) +
                    ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key.find_first_of(" \t") != std::string::npos) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": bad key '" + key + "'");
    }
    if (kv.entries_.count(key)) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                    key + "'");
    }
    kv.entries_[key] = Entry{value, lineno, false};
  }
  return kv;
}

bool KeyValueFile::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

std::string KeyValueFile::get_string(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw IoError(origin_ + ": missing required key '" + key + "'");
  }
  it->second.consumed = true;
  return it->second.value;
}

std::string KeyValueFile::get_string(const std::string& key,
                                     const std::string& fallback) {
  return has(key) ? get_string(key) : fallback;
}

double KeyValueFile::get_double(const std::string& key) {
  auto it = entries_.find(key);
  const std::string raw = get_string(key);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(raw.c_str(), &end);
  if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty()) {
    throw IoError(origin_ + ":" + std::to_string(it->second.line) + ": key '" +
                  key + "' is not a number: '" + raw + "'");
  }
  return v;
}

double KeyValueFile::get_double(const std::string& key, double fallback) {
  return has(key) ? get_double(key) : fallback;
}

long KeyValueFile::get_long(const std::string& key) {
  auto it = entries_.find(key);
  const std::string raw = get_string(key);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(raw.c_str(), &end, 10);
  if (errno != 0 || end != raw.c_str() + raw.size() || raw.empty()) {
    throw IoError(origin_ + ":" + std::to_string(it->second.line) + ": key '" +
                  key + "' is not an integer: '" + raw + "'");
  }
  return v;
}

long KeyValueFile::get_long(const std::string& key, long fallback) {
  return has(key) ? get_long(key) : fallback;
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key,
                                              size_t expect_n) {
  auto it = entries_.find(key);
  const std::string raw = get_string(key);
  std::istringstream is(raw);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(tok.c_str(), &end);
    if (errno != 0 || end != tok.c_str() + tok.size()) {
      throw IoError(origin_ + ":" + std::to_string(it->second.line) + ": key '" +
                    key + "' holds a bad number: '" + tok + "'");
    }
    out.push_back(v);
  }
  if (out.size() != expect_n) {
    throw IoError(origin_ + ":" + std::to_string(it->second.line) + ": key '" +
                  key + "' needs " + std::to_string(expect_n) + " values, got " +
                  std::to_string(out.size()));
  }
  return out;
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, e] : entries_) out.push_back(k);
  return out;
}

void KeyValueFile::require_all_consumed() const {
  for (const auto& [k, e] : entries_) {
    if (!e.consumed) {
      throw IoError(origin_ + ":" + std::to_string(e.line) + ": unknown key '" +
                    k + "'");
    }
  }
}

// ---- scene specs ----

namespace {

TextureSpec texture_from_values(const std::vector<double>& v) {
  TextureSpec t;
  t.seed = uint64_t(v[0]);
  t.base = v[1];
  t.checker_amp = v[2];
  t.checker_cell = v[3];
  t.noise_amp = v[4];
  t.noise_cell = v[5];
  t.noise2_amp = v[6];
  t.noise2_cell = v[7];
  return t;
}

std::string texture_to_values(const TextureSpec& t) {
  std::string s = std::to_string(t.seed);
  for (double v : {t.base, t.checker_amp, t.checker_cell, t.noise_amp,
                   t.noise_cell, t.noise2_amp, t.noise2_cell}) {
    s += " " + fmt_double(v);
  }
  return s;
}

}  // namespace

SceneSpec parse_scene_spec(const std::filesystem::path& path) {
  KeyValueFile kv = KeyValueFile::parse_file(path);
  SceneSpec spec;
  spec.name = kv.get_string("name", path.stem().string());
  spec.width = int(kv.get_long("width", spec.width));
  spec.height = int(kv.get_long("height", spec.height));
  if (kv.has("intrinsics")) {
    const std::vector<double> v = kv.get_doubles("intrinsics", 4);
    spec.intrinsics = Intrinsics{v[0], v[1], v[2], v[3]};
  }
  spec.baseline = kv.get_double("baseline", spec.baseline);
  spec.seed = uint64_t(kv.get_long("seed", long(spec.seed)));

  Vec3 ego_t = Vec3::Zero(), ego_r = Vec3::Zero();
  if (kv.has("ego_translation")) {
    const std::vector<double> v = kv.get_doubles("ego_translation", 3);
    ego_t = Vec3(v[0], v[1], v[2]);
  }
  if (kv.has("ego_rotation")) {
    const std::vector<double> v = kv.get_doubles("ego_rotation", 3);
    ego_r = Vec3(v[0], v[1], v[2]);
  }
  spec.ego = RigidTransform::from_axis_angle(ego_r, ego_t);

  spec.background.depth = kv.get_double("background_depth", spec.background.depth);
  spec.background.tilt_x = kv.get_double("background_tilt_x", 0.0);
  spec.background.tilt_y = kv.get_double("background_tilt_y", 0.0);
  if (kv.has("background_texture")) {
    spec.background.texture =
        texture_from_values(kv.get_doubles("background_texture", 8));
  }

  const long n_objects = kv.get_long("n_objects", 0);
  if (n_objects < 0 || n_objects > 64) {
    throw IoError(path.string() + ": n_objects out of range");
  }
  for (long i = 1; i <= n_objects; ++i) {
    const std::string base = "object_" + std::to_string(i);
    const std::vector<double> v = kv.get_doubles(base, 13);
    ObjectSpec obj;
    obj.center = Vec3(v[0], v[1], v[2]);
    obj.half_w = v[3];
    obj.half_h = v[4];
    obj.tilt_x = v[5];
    obj.tilt_y = v[6];
    obj.motion = Vec3(v[7], v[8], v[9]);
    obj.rotation = Vec3(v[10], v[11], v[12]);
    obj.texture.seed = spec.seed + uint64_t(i) * 7919u;
    if (kv.has(base + "_texture")) {
      obj.texture = texture_from_values(kv.get_doubles(base + "_texture", 8));
    }
    spec.objects.push_back(obj);
  }
  kv.require_all_consumed();
  return spec;
}

void write_scene_spec(const std::filesystem::path& path, const SceneSpec& spec) {
  std::ofstream os = open_out(path, false);
  os << "name = " << spec.name << "\n"
     << "width = " << spec.width << "\n"
     << "height = " << spec.height << "\n"
     << "intrinsics = " << fmt_double(spec.intrinsics.fx) << " "
     << fmt_double(spec.intrinsics.fy) << " " << fmt_double(spec.intrinsics.cx)
     << " " << fmt_double(spec.intrinsics.cy) << "\n"
     << "baseline = " << fmt_double(spec.baseline) << "\n"
     << "seed = " << spec.seed << "\n";
  // Round-tripping the pose through axis-angle keeps the file human-editable;
  // shipped scenes use small rotations where the form is exact.
  const Eigen::AngleAxisd aa(spec.ego.rotation);
  const Vec3 r = aa.axis() * aa.angle();
  os << "ego_translation = " << fmt_double(spec.ego.translation.x()) << " "
     << fmt_double(spec.ego.translation.y()) << " "
     << fmt_double(spec.ego.translation.z()) << "\n"
     << "ego_rotation = " << fmt_double(r.x()) << " " << fmt_double(r.y()) << " "
     << fmt_double(r.z()) << "\n"
     << "background_depth = " << fmt_double(spec.background.depth) << "\n"
     << "background_tilt_x = " << fmt_double(spec.background.tilt_x) << "\n"
     << "background_tilt_y = " << fmt_double(spec.background.tilt_y) << "\n"
     << "background_texture = " << texture_to_values(spec.background.texture)
     << "\n"
     << "n_objects = " << spec.objects.size() << "\n";
  for (size_t i = 0; i < spec.objects.size(); ++i) {
    const ObjectSpec& o = spec.objects[i];
    os << "object_" << (i + 1) << " =";
    for (double v : {o.center.x(), o.center.y(), o.center.z(), o.half_w, o.half_h,
                     o.tilt_x, o.tilt_y, o.motion.x(), o.motion.y(), o.motion.z(),
                     o.rotation.x(), o.rotation.y(), o.rotation.z()}) {
      os << " " << fmt_double(v);
    }
    os << "\n";
    os << "object_" << (i + 1) << "_texture = " << texture_to_values(o.texture)
       << "\n";
  }
  finish_write(os, path);
}

// ---- bundle directories ----

namespace {

struct ManifestEntry {
  std::string role, file;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const std::filesystem::path mp = dir / "manifest.txt";
  TokenScanner sc(mp);
  std::vector<ManifestEntry> out;
  std::string role, file;
  while (sc.next(&role)) {
    if (!sc.next(&file)) fail(mp, "manifest entry '" + role + "' names no file");
    if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
      fail(mp, "manifest file names must stay inside the bundle: '" + file + "'");
    }
    out.push_back({role, file});
  }
  return out;
}

RoiBox mask_bbox(const OcclusionMask& m) {
  int min_x = m.width, min_y = m.height, max_x = -1, max_y = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (max_x < 0) return RoiBox{0, 0, 0, 0};
  return RoiBox{double(min_x), double(min_y), double(max_x - min_x + 1),
                double(max_y - min_y + 1)};
}

}  // namespace

void write_bundle(const std::filesystem::path& dir, const GroundTruthBundle& b) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> manifest;
  const auto add = [&](const std::string& role, const std::string& file) {
    manifest.push_back({role, file});
  };

  write_scene_spec(dir / "scene.txt", b.spec);
  add("scene", "scene.txt");
  write_cameras(dir / "cameras.txt", b.rig);
  add("cameras", "cameras.txt");

  const std::pair<const char*, const ImageBuffer*> views[4] = {
      {"left_t", &b.frames.left_t},
      {"right_t", &b.frames.right_t},
      {"left_t1", &b.frames.left_t1},
      {"right_t1", &b.frames.right_t1},
  };
  for (const auto& [name, img] : views) {
    write_fmap(dir / (std::string(name) + ".fmap"), *img);
    add(name, std::string(name) + ".fmap");
    write_pnm(dir / (std::string(name) + ".pgm"), *img);
    add("preview", std::string(name) + ".pgm");
  }

  write_fmap_depth(dir / "depth_t.fmap", b.depth_t);
  add("depth_t", "depth_t.fmap");
  write_fmap_depth(dir / "depth_t1.fmap", b.depth_t1);
  add("depth_t1", "depth_t1.fmap");
  write_fmap_flow(dir / "flow.fmap", b.flow);
  add("flow", "flow.fmap");

  for (size_t i = 0; i < b.instance_masks.size(); ++i) {
    char name[40];
    std::snprintf(name, sizeof(name), "instance_%02zu.pgm", i);
    write_mask_pgm(dir / name, b.instance_masks[i]);
    add("instance_mask", name);
  }
  write_mask_pgm(dir / "occ_lr_t.pgm", b.occ_lr_t);
  add("occ_lr_t", "occ_lr_t.pgm");
  write_mask_pgm(dir / "occ_lr_t1.pgm", b.occ_lr_t1);
  add("occ_lr_t1", "occ_lr_t1.pgm");
  write_mask_pgm(dir / "occ_temporal.pgm", b.occ_temporal);
  add("occ_temporal", "occ_temporal.pgm");

  std::vector<RoiBox> rois;
  for (const OcclusionMask& m : b.instance_masks) {
    const RoiBox box = mask_bbox(m);
    if (box.is_valid()) rois.push_back(box);
  }
  write_rois(dir / "rois.txt", rois);
  add("rois", "rois.txt");

  std::ofstream os = open_out(dir / "manifest.txt", false);
  for (const ManifestEntry& e : manifest) os << e.role << " " << e.file << "\n";
  finish_write(os, dir / "manifest.txt");
}

GroundTruthBundle read_bundle(const std::filesystem::path& dir) {
  GroundTruthBundle b;
  bool have[16] = {};
  enum { kScene, kCams, kL, kR, kL1, kR1, kDt, kDt1, kFlow, kOlr, kOlr1, kOt };
  for (const ManifestEntry& e : read_manifest(dir)) {
    const std::filesystem::path p = dir / e.file;
    if (e.role == "scene") {
      b.spec = parse_scene_spec(p);
      have[kScene] = true;
    } else if (e.role == "cameras") {
      b.rig = read_cameras(p);
      have[kCams] = true;
    } else if (e.role == "left_t") {
      b.frames.left_t = read_fmap(p);
      have[kL] = true;
    } else if (e.role == "right_t") {
      b.frames.right_t = read_fmap(p);
      have[kR] = true;
    } else if (e.role == "left_t1") {
      b.frames.left_t1 = read_fmap(p);
      have[kL1] = true;
    } else if (e.role == "right_t1") {
      b.frames.right_t1 = read_fmap(p);
      have[kR1] = true;
    } else if (e.role == "depth_t") {
      b.depth_t = read_fmap_depth(p);
      have[kDt] = true;
    } else if (e.role == "depth_t1") {
      b.depth_t1 = read_fmap_depth(p);
      have[kDt1] = true;
    } else if (e.role == "flow") {
      b.flow = read_fmap_flow(p);
      have[kFlow] = true;
    } else if (e.role == "instance_mask") {
      b.instance_masks.push_back(read_mask_pgm(p));
    } else if (e.role == "occ_lr_t") {
      b.occ_lr_t = read_mask_pgm(p);
      have[kOlr] = true;
    } else if (e.role == "occ_lr_t1") {
      b.occ_lr_t1 = read_mask_pgm(p);
      have[kOlr1] = true;
    } else if (e.role == "occ_temporal") {
      b.occ_temporal = read_mask_pgm(p);
      have[kOt] = true;
    } else if (e.role == "preview" || e.role == "rois") {
      if (!std::filesystem::exists(p)) fail(p, "file named in manifest is missing");
    } else {
      fail(dir / "manifest.txt", "unknown manifest role '" + e.role + "'");
    }
  }
  for (int i = kScene; i <= kOt; ++i) {
    if (!have[i]) fail(dir / "manifest.txt", "bundle is missing a required entry");
  }
  return b;
}

std::vector<RoiBox> bundle_rois(const std::filesystem::path& dir) {
  for (const ManifestEntry& e : read_manifest(dir)) {
    if (e.role == "rois") return read_rois(dir / e.file);
  }
  fail(dir / "manifest.txt", "bundle has no rois entry");
}

// ---- DirLock ----

DirLock::DirLock(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  lock_path_ = dir / ".sfe_lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw IoError(lock_path_.string() +
                  ": output directory is already in use (remove the lock file "
                  "if no other run is active)");
  }
  ::close(fd);
  held_ = true;
}

DirLock::~DirLock() {
  if (held_) ::unlink(lock_path_.c_str());
}

}  // namespace sflow
