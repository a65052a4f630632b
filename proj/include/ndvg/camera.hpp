#pragma once

#include <Eigen/Dense>

#include "ndvg/common.hpp"

namespace ndvg {

template <typename T>
struct Ray {
  Vec3<T> o;
  Vec3<T> d;  // unit length
  T t = T(0);
  Vec3<T> target = Vec3<T>::Zero();  // training supervision only
};

// Pinhole camera looking down its local -z axis, x right, y up in camera
// space. Pixel (u,v) rays pass through the pixel center (u+0.5, v+0.5).
template <typename T>
struct Camera {
  int width = 0, height = 0;
  T fx = T(0), fy = T(0), cx = T(0), cy = T(0);
  Eigen::Matrix<T, 4, 4> cam_to_world = Eigen::Matrix<T, 4, 4>::Identity();

  void validate() const {
    check(width > 0 && height > 0, "camera image size must be positive");
    check(fx > T(0) && fy > T(0), "camera focal lengths must be positive");
    const Eigen::Matrix<T, 3, 3> R = cam_to_world.template topLeftCorner<3, 3>();
    const Eigen::Matrix<T, 3, 3> E = R * R.transpose() - Eigen::Matrix<T, 3, 3>::Identity();
    check(E.cwiseAbs().maxCoeff() <= T(1e-4), "camera rotation is not orthonormal");
    check(std::abs(cam_to_world(3, 0)) + std::abs(cam_to_world(3, 1)) +
                  std::abs(cam_to_world(3, 2)) <= T(1e-6) &&
              std::abs(cam_to_world(3, 3) - T(1)) <= T(1e-6),
          "camera pose bottom row must be (0,0,0,1)");
  }

  // u,v are fractional pixel coordinates measured from the top-left corner.
  Ray<T> make_ray(T u, T v) const {
    Vec3<T> dir_cam((u + T(0.5) - cx) / fx, -(v + T(0.5) - cy) / fy, T(-1));
    const Eigen::Matrix<T, 3, 3> R = cam_to_world.template topLeftCorner<3, 3>();
    Ray<T> r;
    r.o = cam_to_world.template topRightCorner<3, 1>();
    r.d = (R * dir_cam).normalized();
    return r;
  }

  static Camera from_fov(int w, int h, T camera_angle_x,
                         const Eigen::Matrix<T, 4, 4>& pose) {
    Camera c;
    c.width = w;
    c.height = h;
    c.fx = c.fy = T(0.5) * T(w) / std::tan(T(0.5) * camera_angle_x);
    c.cx = T(0.5) * T(w);
    c.cy = T(0.5) * T(h);
    c.cam_to_world = pose;
    c.validate();
    return c;
  }

  template <typename U>
  Camera<U> cast() const {
    Camera<U> c;
    c.width = width;
    c.height = height;
    c.fx = U(fx);
    c.fy = U(fy);
    c.cx = U(cx);
    c.cy = U(cy);
    c.cam_to_world = cam_to_world.template cast<U>();
    return c;
  }
};

// Places a camera on a circle of the given radius in the y=height plane,
// aimed at the origin (world up = +y).
template <typename T>
inline Eigen::Matrix<T, 4, 4> look_at_origin(T angle, T radius, T height) {
  const Vec3<T> eye(radius * std::cos(angle), height, radius * std::sin(angle));
  const Vec3<T> forward = (-eye).normalized();  // camera -z
  Vec3<T> up(T(0), T(1), T(0));
  Vec3<T> right = forward.cross(up).normalized();
  up = right.cross(forward);
  Eigen::Matrix<T, 4, 4> m = Eigen::Matrix<T, 4, 4>::Identity();
  m.template block<3, 1>(0, 0) = right;
  m.template block<3, 1>(0, 1) = up;
  m.template block<3, 1>(0, 2) = -forward;
  m.template block<3, 1>(0, 3) = eye;
  return m;
}

}  // namespace ndvg
