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

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sflow/image.hpp"
#include "sflow/synth.hpp"

// On-disk formats. Everything is either plain text or the FMAP raw float
// format below; PPM/PGM images are 8-bit previews and masks, float maps are
// the authoritative numeric carriers.
//
// FMAP layout: "FMAP\n", then an ASCII header "width height channels\n",
// then width*height*channels little-endian float32, row-major with
// interleaved channels. NaN marks invalid samples.

namespace sflow {

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// ---- float maps ----
void write_fmap(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_fmap(const std::filesystem::path& path);

void write_fmap_depth(const std::filesystem::path& path, const DepthMap& d);
DepthMap read_fmap_depth(const std::filesystem::path& path);

void write_fmap_flow(const std::filesystem::path& path, const FlowField3D& f);
FlowField3D read_fmap_flow(const std::filesystem::path& path);

// ---- 8-bit previews / masks ----
// 3-channel buffers -> binary PPM (P6); 1-channel -> PGM (P5).
void write_pnm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_pnm(const std::filesystem::path& path);

void write_mask_pgm(const std::filesystem::path& path, const OcclusionMask& m);
OcclusionMask read_mask_pgm(const std::filesystem::path& path);

// ---- cameras ----
// Text file; per camera one "fx fy cx cy" line followed by the 3x4
// world-from-camera pose, row-major, formatted three values per line across
// four lines. Rig order: left_t, right_t, left_t1, right_t1.
void write_cameras(const std::filesystem::path& path, const CameraRig& rig);
CameraRig read_cameras(const std::filesystem::path& path);

// ---- RoI list ----
// One "x y w h" box per line; '#' comments.
void write_rois(const std::filesystem::path& path, const std::vector<RoiBox>& rois);
std::vector<RoiBox> read_rois(const std::filesystem::path& path);

// ---- flat key = value files ----
// '#' comments, keys unique, values may hold several whitespace-separated
// tokens. Consumers must reject unknown keys (see require_all_consumed).
class KeyValueFile {
 public:
  static KeyValueFile parse_file(const std::filesystem::path& path);
  static KeyValueFile parse_text(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key);
  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key);
  double get_double(const std::string& key, double fallback);
  long get_long(const std::string& key);
  long get_long(const std::string& key, long fallback);
  std::vector<double> get_doubles(const std::string& key, size_t expect_n);

  std::vector<std::string> keys() const;
  // Throws IoError naming file, line and key for any key never read.
  void require_all_consumed() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
  };
  std::string origin_;
  std::map<std::string, Entry> entries_;
};

// ---- scene specs ----
SceneSpec parse_scene_spec(const std::filesystem::path& path);
void write_scene_spec(const std::filesystem::path& path, const SceneSpec& spec);

// ---- ground-truth bundle directories ----
// A bundle directory holds manifest.txt naming every file: the four views as
// float maps plus PNM previews, GT depth/flow float maps, instance and
// occlusion masks, cameras.txt and rois.txt.
void write_bundle(const std::filesystem::path& dir, const GroundTruthBundle& b);
GroundTruthBundle read_bundle(const std::filesystem::path& dir);
std::vector<RoiBox> bundle_rois(const std::filesystem::path& dir);

// ---- output-directory lock ----
// Guards against two writers sharing an output directory. Created with
// O_EXCL; removed on destruction.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path lock_path_;
  bool held_ = false;
};

}  // namespace sflow
