#pragma once

#include <string>
#include <vector>

#include "ndvg/dataset.hpp"
#include "ndvg/grid.hpp"
#include "ndvg/image.hpp"

namespace ndvg {

// Analytic primitive with an affine-plus-sinusoid trajectory. Density ramps
// linearly from `density` inside the surface to 0 over `falloff` so the
// fields stay continuous in space and time.
struct ScenePrimitive {
  enum class Shape { Sphere, Box };
  Shape shape = Shape::Sphere;
  Vec3<double> center{0, 0, 0};
  Vec3<double> half{0.3, 0.3, 0.3};  // sphere radius in x, box half-extents
  Vec3<double> velocity{0, 0, 0};    // linear drift, per unit time
  double bounce_amp = 0.0;           // vertical offset bounce_amp * sin(pi t)
  double density = 40.0;
  Vec3<double> color{0.8, 0.8, 0.8};
  double falloff = 0.04;

  Vec3<double> center_at(double t) const {
    Vec3<double> c = center + t * velocity;
    c[1] += bounce_amp * std::sin(3.14159265358979323846 * t);
    return c;
  }
  // signed distance to the surface at time t (negative inside)
  double distance(const Vec3<double>& p, double t) const;
};

// Closed-form dynamic scene: density and color evaluable at any point and
// time, used both to render training imagery and as the reference the model
// is judged against.
struct SyntheticScene {
  std::vector<ScenePrimitive> prims;
  Vec3<double> background{0, 0, 0};
  Aabb<double> bbox{Vec3<double>(-1.2, -1.2, -1.2), Vec3<double>(1.2, 1.2, 1.2)};

  void eval(const Vec3<double>& p, double t, double& sigma, Vec3<double>& rgb) const;
};

// Dense-quadrature volume rendering of the analytic fields through the same
// compositing kernel the model uses. k_quad is the per-ray sample count.
Image render_ground_truth(const SyntheticScene& scene, const Camera<double>& cam, double t,
                          int k_quad);

struct SceneSpec {
  std::string name;           // translating-sphere | bouncing-ball | occluder | static
  uint32_t seed = 0;
  int train_views = 30;
  int time_steps = 10;
  int test_views = 10;
  int width = 64, height = 64;
  int k_quad = 384;
};

struct GeneratedScene {
  SyntheticScene scene;
  DatasetManifest manifest;
};

// Builds the named scene with cameras on a circle; deterministic per seed.
// Throws on an unknown name.
GeneratedScene gen_scene(const SceneSpec& spec);

// Renders every frame of the generated dataset and writes PNGs plus
// transforms JSONs under out_dir.
void write_scene_dataset(const GeneratedScene& g, const SceneSpec& spec,
                         const std::string& out_dir);

}  // namespace ndvg
