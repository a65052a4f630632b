#include "ndvg/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace ndvg {

namespace {

Frame parse_frame(const ordered_json& j, const std::string& split, size_t idx) {
  const std::string where = split + " frame " + std::to_string(idx);
  check(j.contains("file_path"), where + ": missing key 'file_path'");
  check(j.contains("transform_matrix"), where + ": missing key 'transform_matrix'");
  check(j.contains("time"), where + ": missing key 'time'");
  Frame f;
  f.file_path = j.at("file_path").get<std::string>();
  const auto& tm = j.at("transform_matrix");
  check(tm.is_array() && tm.size() == 4, where + ": transform_matrix must be 4 rows");
  for (int r = 0; r < 4; ++r) {
    check(tm[r].is_array() && tm[r].size() == 4,
          where + ": transform_matrix row " + std::to_string(r) + " must have 4 entries");
    for (int c = 0; c < 4; ++c) f.cam_to_world(r, c) = tm[r][c].get<double>();
  }
  f.time = j.at("time").get<double>();
  check(f.time >= 0.0 && f.time <= 1.0,
        where + " ('" + f.file_path + "'): time " + std::to_string(f.time) +
            " out of range [0,1]");
  const Eigen::Matrix3d R = f.cam_to_world.topLeftCorner<3, 3>();
  check((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-4,
        where + " ('" + f.file_path + "'): rotation is not orthonormal");
  check((f.cam_to_world.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() < 1e-9,
        where + " ('" + f.file_path + "'): bottom row must be [0,0,0,1]");
  return f;
}

void parse_transforms(const std::string& path, const std::string& split, DatasetManifest& m,
                      std::vector<Frame>& out) {
  std::ifstream in(path);
  check(in.good(), "cannot open manifest '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    check(false, "manifest '" + path + "' is not valid JSON: " + e.what());
  }
  check(j.contains("camera_angle_x"), "manifest '" + path + "': missing key 'camera_angle_x'");
  const double angle = j.at("camera_angle_x").get<double>();
  check(angle > 0.0 && angle < 3.14159, "manifest '" + path + "': camera_angle_x out of range");
  if (m.camera_angle_x == 0.0) m.camera_angle_x = angle;
  check(std::abs(m.camera_angle_x - angle) < 1e-12,
        "manifest '" + path + "': camera_angle_x differs between splits");
  check(j.contains("frames"), "manifest '" + path + "': missing key 'frames'");
  const auto& frames = j.at("frames");
  check(frames.is_array(), "manifest '" + path + "': 'frames' must be an array");
  for (size_t i = 0; i < frames.size(); ++i) out.push_back(parse_frame(frames[i], split, i));
  if (j.contains("background")) {
    const auto& bg = j.at("background");
    check(bg.is_array() && bg.size() == 3, "manifest '" + path + "': background must be [r,g,b]");
    for (int c = 0; c < 3; ++c) m.background[c] = bg[c].get<double>();
  }
  if (j.contains("scene_bbox")) {
    const auto& bb = j.at("scene_bbox");
    check(bb.contains("min") && bb.contains("max") && bb.at("min").size() == 3 &&
              bb.at("max").size() == 3,
          "manifest '" + path + "': scene_bbox needs 3-element 'min' and 'max'");
    Aabb<double> box;
    for (int c = 0; c < 3; ++c) {
      box.min[c] = bb.at("min")[c].get<double>();
      box.max[c] = bb.at("max")[c].get<double>();
    }
    box.validate();
    m.scene_bbox = box;
  }
  if (j.contains("w")) m.width = j.at("w").get<int>();
  if (j.contains("h")) m.height = j.at("h").get<int>();
}

ordered_json frame_json(const Frame& f) {
  ordered_json j;
  j["file_path"] = f.file_path;
  j["time"] = f.time;
  ordered_json tm = ordered_json::array();
  for (int r = 0; r < 4; ++r) {
    ordered_json row = ordered_json::array();
    for (int c = 0; c < 4; ++c) row.push_back(f.cam_to_world(r, c));
    tm.push_back(row);
  }
  j["transform_matrix"] = tm;
  return j;
}

void write_transforms(const DatasetManifest& m, const std::vector<Frame>& frames,
                      const std::string& path) {
  ordered_json j;
  j["camera_angle_x"] = m.camera_angle_x;
  j["background"] = {m.background[0], m.background[1], m.background[2]};
  if (m.scene_bbox) {
    j["scene_bbox"] = {
        {"min", {m.scene_bbox->min[0], m.scene_bbox->min[1], m.scene_bbox->min[2]}},
        {"max", {m.scene_bbox->max[0], m.scene_bbox->max[1], m.scene_bbox->max[2]}}};
  }
  if (m.width) j["w"] = *m.width;
  if (m.height) j["h"] = *m.height;
  ordered_json fr = ordered_json::array();
  for (const Frame& f : frames) fr.push_back(frame_json(f));
  j["frames"] = fr;
  std::ofstream out(path);
  check(out.good(), "cannot write manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  DatasetManifest m;
  if (fs::is_directory(path)) {
    const fs::path train = fs::path(path) / "transforms_train.json";
    check(fs::exists(train), "dataset directory '" + path + "' has no transforms_train.json");
    parse_transforms(train.string(), "train", m, m.train_frames);
    const fs::path test = fs::path(path) / "transforms_test.json";
    if (fs::exists(test)) parse_transforms(test.string(), "test", m, m.test_frames);
  } else {
    parse_transforms(path, "train", m, m.train_frames);
  }
  check(!m.train_frames.empty(), "manifest '" + path + "' declares no training frames");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& dir) {
  fs::create_directories(dir);
  write_transforms(m, m.train_frames, (fs::path(dir) / "transforms_train.json").string());
  if (!m.test_frames.empty())
    write_transforms(m, m.test_frames, (fs::path(dir) / "transforms_test.json").string());
}

std::string frame_image_path(const std::string& root, const Frame& f) {
  fs::path p = fs::path(root) / f.file_path;
  if (!p.has_extension()) p += ".png";
  return p.string();
}

Dataset load_dataset(const std::string& path) {
  Dataset d;
  d.manifest = load_manifest(path);
  d.root = fs::is_directory(path) ? path : fs::path(path).parent_path().string();
  auto load_split = [&](const std::vector<Frame>& frames, std::vector<Image>& images,
                        const char* split) {
    for (size_t i = 0; i < frames.size(); ++i) {
      const Vec3f bg = d.manifest.background.cast<float>();
      Image img = load_png(frame_image_path(d.root, frames[i]), bg);
      if (d.width == 0) {
        d.width = img.width;
        d.height = img.height;
      }
      check(img.width == d.width && img.height == d.height,
            std::string(split) + " frame " + std::to_string(i) + " ('" + frames[i].file_path +
                "'): image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                ", expected " + std::to_string(d.width) + "x" + std::to_string(d.height));
      images.push_back(std::move(img));
    }
  };
  load_split(d.manifest.train_frames, d.train_images, "train");
  load_split(d.manifest.test_frames, d.test_images, "test");
  if (d.manifest.width) {
    check(*d.manifest.width == d.width && d.manifest.height &&
              *d.manifest.height == d.height,
          "declared image size disagrees with the decoded images");
  }
  return d;
}

}  // namespace ndvg
