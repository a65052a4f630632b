#include "ndvg/scene.hpp"

#include <filesystem>
#include <random>

#include "ndvg/rendering.hpp"

namespace fs = std::filesystem;

namespace ndvg {

double ScenePrimitive::distance(const Vec3<double>& p, double t) const {
  const Vec3<double> q = p - center_at(t);
  if (shape == Shape::Sphere) return q.norm() - half[0];
  const Vec3<double> d = q.cwiseAbs() - half;
  const Vec3<double> outside = d.cwiseMax(0.0);
  return outside.norm() + std::min(d.maxCoeff(), 0.0);
}

void SyntheticScene::eval(const Vec3<double>& p, double t, double& sigma,
                          Vec3<double>& rgb) const {
  sigma = 0.0;
  Vec3<double> acc = Vec3<double>::Zero();
  for (const ScenePrimitive& prim : prims) {
    const double d = prim.distance(p, t);
    // linear occupancy ramp over the falloff band around the surface
    const double s = clamp(0.5 - d / (2.0 * prim.falloff), 0.0, 1.0);
    if (s <= 0.0) continue;
    const double contrib = prim.density * s;
    sigma += contrib;
    acc += contrib * prim.color;
  }
  rgb = sigma > 0.0 ? Vec3<double>(acc / sigma) : Vec3<double>::Zero();
}

Image render_ground_truth(const SyntheticScene& scene, const Camera<double>& cam, double t,
                          int k_quad) {
  check(k_quad >= 256, "ground-truth quadrature needs at least 256 samples per ray");
  Image img(cam.width, cam.height);
  auto eval = [&](const Vec3<double>& p, const Vec3<double>&, double& sigma,
                  Vec3<double>& rgb) { scene.eval(p, t, sigma, rgb); };
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      const Ray<double> ray = cam.make_ray(double(u), double(v));
      const Vec3<double> c = march_fields(eval, ray, scene.bbox, k_quad, scene.background);
      for (int ch = 0; ch < 3; ++ch) img.at(u, v, ch) = float(c[ch]);
    }
  return img;
}

namespace {

SyntheticScene build_scene(const std::string& name) {
  SyntheticScene s;
  s.background = Vec3<double>(0, 0, 0);
  if (name == "translating-sphere") {
    ScenePrimitive ball;
    ball.shape = ScenePrimitive::Shape::Sphere;
    ball.center = Vec3<double>(-0.45, 0.0, 0.0);
    ball.half = Vec3<double>(0.32, 0.32, 0.32);
    ball.velocity = Vec3<double>(0.9, 0.0, 0.0);
    ball.density = 60.0;
    ball.color = Vec3<double>(0.85, 0.35, 0.25);
    s.prims.push_back(ball);
  } else if (name == "bouncing-ball") {
    ScenePrimitive ball;
    ball.shape = ScenePrimitive::Shape::Sphere;
    ball.center = Vec3<double>(0.0, -0.45, 0.0);
    ball.half = Vec3<double>(0.3, 0.3, 0.3);
    ball.bounce_amp = 0.75;
    ball.density = 60.0;
    ball.color = Vec3<double>(0.3, 0.6, 0.9);
    s.prims.push_back(ball);
    ScenePrimitive floor;
    floor.shape = ScenePrimitive::Shape::Box;
    floor.center = Vec3<double>(0.0, -0.95, 0.0);
    floor.half = Vec3<double>(0.9, 0.08, 0.9);
    floor.density = 60.0;
    floor.color = Vec3<double>(0.55, 0.5, 0.45);
    s.prims.push_back(floor);
  } else if (name == "occluder") {
    // a box sweeps left-to-right through a region that is empty at the
    // canonical time; a static sphere anchors the canonical content
    ScenePrimitive box;
    box.shape = ScenePrimitive::Shape::Box;
    box.center = Vec3<double>(-0.62, 0.0, 0.0);
    box.half = Vec3<double>(0.22, 0.28, 0.28);
    box.velocity = Vec3<double>(1.24, 0.0, 0.0);
    box.density = 60.0;
    box.color = Vec3<double>(0.25, 0.45, 0.85);
    s.prims.push_back(box);
    ScenePrimitive anchor;
    anchor.shape = ScenePrimitive::Shape::Sphere;
    anchor.center = Vec3<double>(0.0, -0.62, 0.3);
    anchor.half = Vec3<double>(0.24, 0.24, 0.24);
    anchor.density = 60.0;
    anchor.color = Vec3<double>(0.85, 0.7, 0.3);
    s.prims.push_back(anchor);
  } else if (name == "static") {
    ScenePrimitive ball;
    ball.shape = ScenePrimitive::Shape::Sphere;
    ball.center = Vec3<double>(-0.3, 0.1, 0.0);
    ball.half = Vec3<double>(0.3, 0.3, 0.3);
    ball.density = 60.0;
    ball.color = Vec3<double>(0.8, 0.4, 0.3);
    s.prims.push_back(ball);
    ScenePrimitive box;
    box.shape = ScenePrimitive::Shape::Box;
    box.center = Vec3<double>(0.45, -0.25, 0.1);
    box.half = Vec3<double>(0.22, 0.22, 0.22);
    box.density = 60.0;
    box.color = Vec3<double>(0.35, 0.65, 0.4);
    s.prims.push_back(box);
  } else {
    check(false, "unknown scene spec '" + name +
                     "' (known: translating-sphere, bouncing-ball, occluder, static)");
  }
  return s;
}

}  // namespace

GeneratedScene gen_scene(const SceneSpec& spec) {
  check(spec.train_views >= 1 && spec.time_steps >= 1 && spec.width >= 8 && spec.height >= 8,
        "scene spec needs at least 1 view, 1 time step and 8x8 images");
  GeneratedScene g;
  g.scene = build_scene(spec.name);
  g.manifest.camera_angle_x = 0.6911;
  g.manifest.background = g.scene.background;
  g.manifest.scene_bbox = g.scene.bbox;
  g.manifest.width = spec.width;
  g.manifest.height = spec.height;

  std::mt19937 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const double radius = 3.1, height = 0.85;
  const double golden = 2.399963229728653;

  char buf[64];
  for (int i = 0; i < spec.train_views; ++i) {
    Frame f;
    // decorrelate viewpoint from time so every time step is seen from
    // several directions
    const double angle = golden * i + jitter(rng);
    f.cam_to_world = look_at_origin(angle, radius + jitter(rng), height + jitter(rng));
    f.time = spec.time_steps == 1 ? 0.0 : double(i % spec.time_steps) / (spec.time_steps - 1);
    std::snprintf(buf, sizeof(buf), "./train/r_%03d", i);
    f.file_path = buf;
    g.manifest.train_frames.push_back(f);
  }
  for (int i = 0; i < spec.test_views; ++i) {
    Frame f;
    const double angle = golden * (i + 0.5) + 0.37 + jitter(rng);
    f.cam_to_world = look_at_origin(angle, radius + jitter(rng), height + jitter(rng));
    f.time = spec.test_views == 1 ? 0.5 : double(i) / (spec.test_views - 1);
    std::snprintf(buf, sizeof(buf), "./test/r_%03d", i);
    f.file_path = buf;
    g.manifest.test_frames.push_back(f);
  }
  return g;
}

void write_scene_dataset(const GeneratedScene& g, const SceneSpec& spec,
                         const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "train");
  fs::create_directories(fs::path(out_dir) / "test");
  save_manifest(g.manifest, out_dir);
  auto render_split = [&](const std::vector<Frame>& frames) {
    for (const Frame& f : frames) {
      const Camera<double> cam =
          Camera<double>::from_fov(spec.width, spec.height, g.manifest.camera_angle_x,
                                   f.cam_to_world);
      const Image img = render_ground_truth(g.scene, cam, f.time, spec.k_quad);
      save_png(frame_image_path(out_dir, f), img);
    }
  };
  render_split(g.manifest.train_frames);
  render_split(g.manifest.test_frames);
}

}  // namespace ndvg
