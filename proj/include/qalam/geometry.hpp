// Copyright 2026 The Qalam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Planar geometry for tracking boxes through image warps. Transforms are
// 3x3 homogeneous matrices acting on column vectors (x, y, 1).

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace qalam::geometry {

template <typename Scalar>
using Transform = Eigen::Matrix<Scalar, 3, 3>;

template <typename Scalar>
using Points = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;

/// Axis-aligned box, top-left origin, y down.
template <typename Scalar>
struct Box {
  Scalar x{}, y{}, w{}, h{};

  Scalar right() const { return x + w; }
  Scalar bottom() const { return y + h; }

  /// Corners as columns: top-left, top-right, bottom-right, bottom-left.
  Eigen::Matrix<Scalar, 2, 4> corners() const {
    Eigen::Matrix<Scalar, 2, 4> c;
    c << x, right(), right(), x,
         y, y, bottom(), bottom();
    return c;
  }

  template <typename Other>
  Box<Other> cast() const {
    return {static_cast<Other>(x), static_cast<Other>(y), static_cast<Other>(w), static_cast<Other>(h)};
  }

  bool operator==(const Box&) const = default;
};

using PixelBox = Box<int>;

/// Applies `t` to each column and divides by the homogeneous coordinate.
template <typename Scalar, typename Derived>
Points<Scalar> apply(const Transform<Scalar>& t, const Eigen::MatrixBase<Derived>& pts) {
  Eigen::Matrix<Scalar, 3, Eigen::Dynamic> h(3, pts.cols());
  h.template topRows<2>() = pts.template cast<Scalar>();
  h.row(2).setOnes();
  const Eigen::Matrix<Scalar, 3, Eigen::Dynamic> m = t * h;
  return m.template topRows<2>().array().rowwise() / m.row(2).array();
}

template <typename Derived>
auto hull(const Eigen::MatrixBase<Derived>& pts) {
  using Scalar = typename Derived::Scalar;
  const auto lo = pts.rowwise().minCoeff();
  const auto hi = pts.rowwise().maxCoeff();
  return Box<Scalar>{lo(0), lo(1), hi(0) - lo(0), hi(1) - lo(1)};
}

/// Axis-aligned hull of the transformed corners.
template <typename Scalar>
Box<Scalar> transform_box(const Box<Scalar>& box, const Transform<Scalar>& t) {
  return hull(apply<Scalar>(t, box.corners()));
}

/// Smallest integer box containing `b`.
template <typename Scalar>
PixelBox enclosing_pixels(const Box<Scalar>& b) {
  const int x0 = static_cast<int>(std::floor(b.x));
  const int y0 = static_cast<int>(std::floor(b.y));
  const int x1 = static_cast<int>(std::ceil(b.right()));
  const int y1 = static_cast<int>(std::ceil(b.bottom()));
  return {x0, y0, x1 - x0, y1 - y0};
}

inline PixelBox clamp(const PixelBox& b, int width, int height) {
  const int x0 = std::clamp(b.x, 0, width), y0 = std::clamp(b.y, 0, height);
  const int x1 = std::clamp(b.right(), 0, width), y1 = std::clamp(b.bottom(), 0, height);
  return {x0, y0, x1 - x0, y1 - y0};
}

template <typename Scalar>
Transform<Scalar> translation(Scalar dx, Scalar dy) {
  Transform<Scalar> t = Transform<Scalar>::Identity();
  t(0, 2) = dx;
  t(1, 2) = dy;
  return t;
}

template <typename Scalar>
struct ExpandedRotation {
  Transform<Scalar> transform;
  int width = 0;
  int height = 0;
};

/// Rotation by `degrees` about the centre of a width x height canvas,
/// translated into a canvas grown (rounded up to whole pixels) to hold the
/// whole rotated image. Positive angles turn counter-clockwise on screen,
/// the convention of cv::getRotationMatrix2D.
template <typename Scalar>
ExpandedRotation<Scalar> rotation_expanding(Scalar degrees, int width, int height) {
  const Scalar rad = degrees * std::numbers::pi_v<Scalar> / Scalar(180);
  const Scalar c = std::cos(rad), s = std::sin(rad);
  Transform<Scalar> r = Transform<Scalar>::Identity();
  r(0, 0) = c;
  r(0, 1) = s;
  r(1, 0) = -s;
  r(1, 1) = c;
  ExpandedRotation<Scalar> out;
  // Tolerance keeps exact multiples of 90 degrees from growing by a pixel.
  const Scalar eps = Scalar(1e-9);
  out.width = static_cast<int>(std::ceil(std::abs(width * c) + std::abs(height * s) - eps));
  out.height = static_cast<int>(std::ceil(std::abs(width * s) + std::abs(height * c) - eps));
  out.transform = translation<Scalar>(Scalar(out.width) / 2, Scalar(out.height) / 2) * r *
                  translation<Scalar>(-Scalar(width) / 2, -Scalar(height) / 2);
  return out;
}

}  // namespace qalam::geometry
