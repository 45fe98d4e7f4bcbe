#include "dc3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dc3d/rng.hpp"

namespace dc3d::geom {

double box_iou(const Box3& a, const Box3& b) {
  double inter = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double a_c = a.center[static_cast<std::size_t>(axis)];
    const double a_l = a.lengths[static_cast<std::size_t>(axis)];
    const double b_c = b.center[static_cast<std::size_t>(axis)];
    const double b_l = b.lengths[static_cast<std::size_t>(axis)];
    const double lo = std::max(a_c - a_l / 2.0, b_c - b_l / 2.0);
    const double hi = std::min(a_c + a_l / 2.0, b_c + b_l / 2.0);
    if (hi <= lo) return 0.0;
    inter *= hi - lo;
  }
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<int> nms(const std::vector<Box3>& boxes, const std::vector<float>& scores,
                     float iou_threshold) {
  if (boxes.size() != scores.size()) throw ArgumentError("nms: box/score count mismatch");
  if (!(iou_threshold >= 0.0f && iou_threshold <= 1.0f)) {
    throw ArgumentError("nms: iou threshold must lie in [0,1]");
  }
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int l, int r) {
    if (scores[static_cast<std::size_t>(l)] != scores[static_cast<std::size_t>(r)]) {
      return scores[static_cast<std::size_t>(l)] > scores[static_cast<std::size_t>(r)];
    }
    return l < r;
  });
  std::vector<int> kept;
  for (int idx : order) {
    bool suppressed = false;
    for (int k : kept) {
      if (box_iou(boxes[static_cast<std::size_t>(idx)], boxes[static_cast<std::size_t>(k)]) >=
          static_cast<double>(iou_threshold)) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

std::vector<Edge> knn_graph(const std::vector<Vec3>& centers, int k) {
  if (centers.empty()) throw ArgumentError("knn_graph: empty point set");
  if (k < 1) throw ArgumentError("knn_graph: k must be >= 1");
  const int n = static_cast<int>(centers.size());
  std::vector<Edge> edges;
  std::vector<std::pair<double, int>> dist;
  dist.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    dist.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d = static_cast<double>(centers[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)]) -
                         centers[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
        d2 += d * d;
      }
      dist.emplace_back(d2, j);
    }
    std::sort(dist.begin(), dist.end());
    const int take = std::min(k, n - 1);
    for (int t = 0; t < take; ++t) edges.push_back({i, dist[static_cast<std::size_t>(t)].second});
  }
  return edges;
}

int orientation_bin(float angle_deg) {
  if (!(angle_deg >= 0.0f && angle_deg < 180.0f)) {
    throw ArgumentError("orientation angle must lie in [0,180)");
  }
  const int bin = static_cast<int>(angle_deg / 30.0f);
  return std::min(bin, 5);
}

CameraPose estimate_viewpoint(const Box3& target, const Box3& scene_bounds, std::uint64_t seed,
                              const CameraIntrinsics& intrinsics) {
  constexpr float kCameraHeight = 1.70f;
  constexpr float kHorizontalRadius = 0.99f;
  constexpr int kMaxAttempts = 64;

  Rng rng(seed);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    Vec3 origin{target.center[0] + kHorizontalRadius * static_cast<float>(std::cos(theta)),
                target.center[1] + kHorizontalRadius * static_cast<float>(std::sin(theta)),
                kCameraHeight};
    bool inside = true;
    for (int axis = 0; axis < 3; ++axis) {
      if (origin[static_cast<std::size_t>(axis)] < scene_bounds.min_corner(axis) ||
          origin[static_cast<std::size_t>(axis)] > scene_bounds.max_corner(axis)) {
        inside = false;
        break;
      }
    }
    if (inside) {
      CameraPose pose;
      pose.origin = origin;
      pose.look_at = target.center;
      pose.intrinsics = intrinsics;
      return pose;
    }
  }
  throw PlacementError("no viewpoint inside the scene bounds after 64 attempts");
}

namespace {

Vec3 subv(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 crossv(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
float dotv(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 normv(const Vec3& a) {
  const float n = std::sqrt(dotv(a, a));
  return {a[0] / n, a[1] / n, a[2] / n};
}

}  // namespace

PixelBox project_box(const Box3& box, const CameraPose& cam) {
  const Vec3 forward = normv(subv(cam.look_at, cam.origin));
  Vec3 world_up{0, 0, 1};
  if (std::abs(dotv(forward, world_up)) > 0.999f) world_up = {0, 1, 0};
  const Vec3 right = normv(crossv(forward, world_up));
  const Vec3 up = crossv(right, forward);

  const Vec3 center_rel = subv(box.center, cam.origin);
  if (dotv(center_rel, forward) <= 0.0f) {
    throw VisibilityError("box center is not in front of the camera");
  }

  PixelBox out;
  out.min_x = out.min_y = 1e30f;
  out.max_x = out.max_y = -1e30f;
  for (int cx = 0; cx < 2; ++cx) {
    for (int cy = 0; cy < 2; ++cy) {
      for (int cz = 0; cz < 2; ++cz) {
        Vec3 corner{box.center[0] + (cx ? 0.5f : -0.5f) * box.lengths[0],
                    box.center[1] + (cy ? 0.5f : -0.5f) * box.lengths[1],
                    box.center[2] + (cz ? 0.5f : -0.5f) * box.lengths[2]};
        const Vec3 rel = subv(corner, cam.origin);
        // A corner of a huge box may fall behind the camera even when the
        // center check passed; clamp its depth rather than dividing by <= 0.
        const float depth = std::max(dotv(rel, forward), 1e-4f);
        const float u = cam.intrinsics.cx + cam.intrinsics.fx * dotv(rel, right) / depth;
        const float v = cam.intrinsics.cy - cam.intrinsics.fy * dotv(rel, up) / depth;
        out.min_x = std::min(out.min_x, u);
        out.max_x = std::max(out.max_x, u);
        out.min_y = std::min(out.min_y, v);
        out.max_y = std::max(out.max_y, v);
      }
    }
  }
  out.min_x = std::clamp(out.min_x, 0.0f, static_cast<float>(cam.intrinsics.width));
  out.max_x = std::clamp(out.max_x, 0.0f, static_cast<float>(cam.intrinsics.width));
  out.min_y = std::clamp(out.min_y, 0.0f, static_cast<float>(cam.intrinsics.height));
  out.max_y = std::clamp(out.max_y, 0.0f, static_cast<float>(cam.intrinsics.height));
  return out;
}

}  // namespace dc3d::geom
