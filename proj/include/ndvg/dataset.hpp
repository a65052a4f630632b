#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ndvg/camera.hpp"
#include "ndvg/grid.hpp"
#include "ndvg/image.hpp"

namespace ndvg {

struct Frame {
  std::string file_path;  // relative to the manifest directory, extension optional
  Eigen::Matrix4d cam_to_world = Eigen::Matrix4d::Identity();
  double time = 0.0;
};

// Posed image collection in the common transforms_*.json layout
// (camera_angle_x + per-frame transform_matrix) extended with a per-frame
// `time` in [0,1]. Optional root keys: `background` (color the images are
// composited over), `scene_bbox` ({"min":[...],"max":[...]}) and explicit
// `w`/`h`.
struct DatasetManifest {
  double camera_angle_x = 0.0;
  std::vector<Frame> train_frames;
  std::vector<Frame> test_frames;
  Vec3<double> background{1.0, 1.0, 1.0};
  std::optional<Aabb<double>> scene_bbox;
  std::optional<int> width, height;
};

// Loads either a single transforms JSON (frames become the train split) or a
// dataset directory containing transforms_train.json and, optionally,
// transforms_test.json. Validates rotations (orthonormal within 1e-4) and
// times (within [0,1]) with diagnostics naming the offending frame.
DatasetManifest load_manifest(const std::string& path);

// Writes transforms_train.json (+ transforms_test.json when the split is
// non-empty) under `dir`; load_manifest(dir) round-trips losslessly.
void save_manifest(const DatasetManifest& m, const std::string& dir);

// Manifest plus decoded images. Pixel data is composited over the manifest
// background; all images must share one size, which also resolves the pinhole
// intrinsics from camera_angle_x.
struct Dataset {
  DatasetManifest manifest;
  std::string root;
  int width = 0, height = 0;
  std::vector<Image> train_images;
  std::vector<Image> test_images;

  Camera<double> camera(const Frame& f) const {
    return Camera<double>::from_fov(width, height, manifest.camera_angle_x, f.cam_to_world);
  }
};

Dataset load_dataset(const std::string& path);

// Resolves a frame's image path against the dataset root, appending ".png"
// when the stored path has no extension.
std::string frame_image_path(const std::string& root, const Frame& f);

}  // namespace ndvg
