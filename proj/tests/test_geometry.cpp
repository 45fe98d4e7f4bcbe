#include <algorithm>
#include <cmath>

#include "dc3d/geometry.hpp"
#include "dc3d/rng.hpp"
#include "doctest.h"

using namespace dc3d;
using geom::Box3;

namespace {

// Reference IoU by direct interval arithmetic, kept independent of box_iou.
double iou_reference(const Box3& a, const Box3& b) {
  double inter = 1.0, va = 1.0, vb = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double a_lo = a.center[static_cast<std::size_t>(axis)] - a.lengths[static_cast<std::size_t>(axis)] / 2.0;
    const double a_hi = a.center[static_cast<std::size_t>(axis)] + a.lengths[static_cast<std::size_t>(axis)] / 2.0;
    const double b_lo = b.center[static_cast<std::size_t>(axis)] - b.lengths[static_cast<std::size_t>(axis)] / 2.0;
    const double b_hi = b.center[static_cast<std::size_t>(axis)] + b.lengths[static_cast<std::size_t>(axis)] / 2.0;
    inter *= std::max(0.0, std::min(a_hi, b_hi) - std::max(a_lo, b_lo));
    va *= a_hi - a_lo;
    vb *= b_hi - b_lo;
  }
  const double uni = va + vb - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Reference NMS: literal greedy walk over score-sorted boxes.
std::vector<int> nms_reference(const std::vector<Box3>& boxes, const std::vector<float>& scores,
                               float threshold) {
  std::vector<int> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int l, int r) { return scores[static_cast<std::size_t>(l)] > scores[static_cast<std::size_t>(r)]; });
  std::vector<int> kept;
  for (int i : order) {
    bool ok = true;
    for (int k : kept) {
      if (iou_reference(boxes[static_cast<std::size_t>(i)], boxes[static_cast<std::size_t>(k)]) >= threshold) ok = false;
    }
    if (ok) kept.push_back(i);
  }
  return kept;
}

Box3 random_box(Rng& rng) {
  return Box3{{static_cast<float>(rng.uniform(-3, 3)), static_cast<float>(rng.uniform(-3, 3)),
               static_cast<float>(rng.uniform(-3, 3))},
              {static_cast<float>(rng.uniform(0.2, 2.5)), static_cast<float>(rng.uniform(0.2, 2.5)),
               static_cast<float>(rng.uniform(0.2, 2.5))}};
}

}  // namespace

TEST_CASE("box iou basics") {
  Box3 a{{0, 0, 0}, {2, 2, 2}};
  CHECK(geom::box_iou(a, a) == 1.0);

  Box3 far{{10, 0, 0}, {2, 2, 2}};
  CHECK(geom::box_iou(a, far) == 0.0);

  Box3 shifted{{1, 0, 0}, {2, 2, 2}};
  CHECK(geom::box_iou(a, shifted) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("box iou is symmetric, bounded and matches the reference") {
  Rng rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    Box3 a = random_box(rng), b = random_box(rng);
    const double ab = geom::box_iou(a, b);
    CHECK(ab == geom::box_iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(ab == doctest::Approx(iou_reference(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("nms basic behavior") {
  Box3 a{{0, 0, 0}, {2, 2, 2}};
  CHECK(geom::nms({a}, {0.5f}, 0.5f) == std::vector<int>{0});

  // Two identical boxes: only the higher-scored survives.
  CHECK(geom::nms({a, a}, {0.9f, 0.8f}, 0.5f) == std::vector<int>{0});
  CHECK(geom::nms({a, a}, {0.8f, 0.9f}, 0.5f) == std::vector<int>{1});

  Box3 far{{10, 0, 0}, {2, 2, 2}};
  CHECK(geom::nms({a, far}, {0.9f, 0.8f}, 0.5f) == std::vector<int>{0, 1});

  CHECK_THROWS_AS(geom::nms({a}, {0.5f}, 1.5f), ArgumentError);
  CHECK_THROWS_AS(geom::nms({a}, {0.5f, 0.6f}, 0.5f), ArgumentError);
}

TEST_CASE("nms equals the greedy reference on random instances") {
  Rng rng(22);
  for (int trial = 0; trial < 3000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    std::vector<Box3> boxes;
    std::vector<float> scores;
    for (int i = 0; i < n; ++i) {
      boxes.push_back(random_box(rng));
      scores.push_back(static_cast<float>(rng.uniform(0, 1)));
    }
    const float threshold = static_cast<float>(rng.uniform(0.05, 0.95));
    const auto kept = geom::nms(boxes, scores, threshold);
    CHECK(kept == nms_reference(boxes, scores, threshold));

    // Kept order descends in score and no kept pair overlaps past the gate.
    for (std::size_t i = 1; i < kept.size(); ++i) {
      CHECK(scores[static_cast<std::size_t>(kept[i - 1])] >= scores[static_cast<std::size_t>(kept[i])]);
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        CHECK(geom::box_iou(boxes[static_cast<std::size_t>(kept[i])], boxes[static_cast<std::size_t>(kept[j])]) <
              threshold);
      }
    }
  }
}

TEST_CASE("knn graph topology") {
  using geom::Edge;
  std::vector<geom::Vec3> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK(geom::knn_graph(two, 1) == std::vector<Edge>{{0, 1}, {1, 0}});

  // Collinear points at x = 0, 1, 3 with k = 1.
  std::vector<geom::Vec3> line = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  CHECK(geom::knn_graph(line, 1) == std::vector<Edge>{{0, 1}, {1, 0}, {2, 1}});

  // k >= n-1 gives the complete directed graph without self loops.
  std::vector<geom::Vec3> four = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 3}};
  const auto edges = geom::knn_graph(four, 10);
  CHECK(edges.size() == 12);
  for (const auto& e : edges) CHECK(e.src != e.dst);

  // Out-degree is exactly min(k, n-1) for every node.
  Rng rng(5);
  std::vector<geom::Vec3> pts;
  for (int i = 0; i < 9; ++i) {
    pts.push_back({static_cast<float>(rng.uniform(-4, 4)), static_cast<float>(rng.uniform(-4, 4)),
                   static_cast<float>(rng.uniform(-4, 4))});
  }
  for (int k : {1, 3, 8, 20}) {
    std::vector<int> degree(pts.size(), 0);
    for (const auto& e : geom::knn_graph(pts, k)) ++degree[static_cast<std::size_t>(e.src)];
    for (int d : degree) CHECK(d == std::min(k, static_cast<int>(pts.size()) - 1));
  }

  // Distance ties break toward the lower index.
  std::vector<geom::Vec3> tie = {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}};
  const auto tied = geom::knn_graph(tie, 1);
  CHECK(tied[0] == Edge{0, 1});

  CHECK_THROWS_AS(geom::knn_graph({}, 1), ArgumentError);
  CHECK_THROWS_AS(geom::knn_graph(two, 0), ArgumentError);
}

TEST_CASE("orientation bins partition [0,180)") {
  CHECK(geom::orientation_bin(0.0f) == 0);
  CHECK(geom::orientation_bin(45.0f) == 1);
  CHECK(geom::orientation_bin(179.9f) == 5);
  CHECK(geom::orientation_bin(29.999f) == 0);
  CHECK(geom::orientation_bin(30.0f) == 1);

  CHECK_THROWS_AS(geom::orientation_bin(180.0f), ArgumentError);
  CHECK_THROWS_AS(geom::orientation_bin(-0.01f), ArgumentError);

  // Every angle lands in exactly one class.
  for (float angle = 0.0f; angle < 180.0f; angle += 0.37f) {
    const int bin = geom::orientation_bin(angle);
    CHECK(bin >= 0);
    CHECK(bin <= 5);
    CHECK(angle >= 30.0f * static_cast<float>(bin));
    CHECK(angle < 30.0f * static_cast<float>(bin + 1));
  }
}

TEST_CASE("viewpoint estimation samples the 0.99 m circle at 1.70 m height") {
  Box3 target{{0, 0, 0.5f}, {1, 1, 1}};
  Box3 room{{0, 0, 1.5f}, {12, 12, 3}};
  for (std::uint64_t seed = 0; seed < 32; ++seed) {
    const auto pose = geom::estimate_viewpoint(target, room, seed);
    const double dx = pose.origin[0] - target.center[0];
    const double dy = pose.origin[1] - target.center[1];
    CHECK(std::sqrt(dx * dx + dy * dy) == doctest::Approx(0.99).epsilon(1e-5));
    CHECK(pose.origin[2] == doctest::Approx(1.70));
    CHECK(pose.look_at == target.center);
  }

  // A scene too small to contain the circle cannot be sampled.
  Box3 tiny{{0, 0, 0.5f}, {0.5f, 0.5f, 3.0f}};
  CHECK_THROWS_AS(geom::estimate_viewpoint(target, tiny, 1), PlacementError);
}

TEST_CASE("box projection") {
  geom::CameraPose cam;
  cam.origin = {0, 0, 0};
  cam.look_at = {2, 0, 0};
  cam.intrinsics = {500.0f, 500.0f, 320.0f, 240.0f, 640, 480};

  // On-axis box projects to a rectangle centered at the principal point.
  Box3 ahead{{2, 0, 0}, {1, 1, 1}};
  const auto rect = geom::project_box(ahead, cam);
  CHECK((rect.min_x + rect.max_x) / 2 == doctest::Approx(320.0));
  CHECK((rect.min_y + rect.max_y) / 2 == doctest::Approx(240.0));

  // Thin on-axis box 2 m ahead with focal 500: half width 500*0.5/2 = 125.
  Box3 thin{{2, 0, 0}, {1e-4f, 1, 1}};
  const auto flat = geom::project_box(thin, cam);
  CHECK((flat.max_x - flat.min_x) / 2 == doctest::Approx(125.0).epsilon(1e-3));
  CHECK((flat.max_y - flat.min_y) / 2 == doctest::Approx(125.0).epsilon(1e-3));

  // The cube's near face dominates the rectangle: half width 500*0.5/1.5.
  CHECK((rect.max_x - rect.min_x) / 2 == doctest::Approx(500.0 * 0.5 / 1.5).epsilon(1e-4));

  Box3 behind{{-2, 0, 0}, {1, 1, 1}};
  CHECK_THROWS_AS(geom::project_box(behind, cam), VisibilityError);
}
