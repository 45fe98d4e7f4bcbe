#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dc3d/error.hpp"

namespace dc3d::geom {

using Vec3 = std::array<float, 3>;

/// Axis-aligned box given by center and full edge lengths (meters).
struct Box3 {
  Vec3 center{0, 0, 0};
  Vec3 lengths{1, 1, 1};

  float min_corner(int axis) const { return center[static_cast<std::size_t>(axis)] - 0.5f * lengths[static_cast<std::size_t>(axis)]; }
  float max_corner(int axis) const { return center[static_cast<std::size_t>(axis)] + 0.5f * lengths[static_cast<std::size_t>(axis)]; }
  double volume() const {
    return static_cast<double>(lengths[0]) * lengths[1] * lengths[2];
  }
};

/// Directed edge in a proposal graph.
struct Edge {
  int src = 0;
  int dst = 0;
  bool operator==(const Edge&) const = default;
};

/// Intersection volume over union volume; 0 for disjoint boxes.
double box_iou(const Box3& a, const Box3& b);

/// Greedy non-maximum suppression. Boxes are visited by descending score
/// (ties broken by lower index); a box is kept iff its IoU with every
/// already-kept box stays below `iou_threshold`. Returns kept indices in
/// visit order.
std::vector<int> nms(const std::vector<Box3>& boxes, const std::vector<float>& scores,
                     float iou_threshold);

/// Directed edges i->j to the min(k, n-1) nearest other points of each point
/// by Euclidean distance; ties broken by lower index. No self loops.
std::vector<Edge> knn_graph(const std::vector<Vec3>& centers, int k);

/// Equal-width 30-degree bins over [0, 180) -> class in {0..5}.
int orientation_bin(float angle_deg);

struct CameraIntrinsics {
  float fx = 1170.0f;
  float fy = 1170.0f;
  float cx = 648.0f;
  float cy = 484.0f;
  int width = 1296;
  int height = 968;
};

struct CameraPose {
  Vec3 origin{0, 0, 0};
  Vec3 look_at{0, 0, 1};
  CameraIntrinsics intrinsics;
};

/// Camera placed on the horizontal circle of radius 0.99 m around the target
/// center at height 1.70 m, aimed at the target center. Resamples the circle
/// angle (up to 64 attempts) until the origin falls inside `scene_bounds`;
/// PlacementError when no attempt lands inside.
CameraPose estimate_viewpoint(const Box3& target, const Box3& scene_bounds, std::uint64_t seed,
                              const CameraIntrinsics& intrinsics = {});

struct PixelBox {
  float min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

/// Pinhole projection of the 8 box corners; returns their axis-aligned pixel
/// bounding rectangle clamped to the image. VisibilityError when the box
/// center is not strictly in front of the camera.
PixelBox project_box(const Box3& box, const CameraPose& cam);

}  // namespace dc3d::geom
