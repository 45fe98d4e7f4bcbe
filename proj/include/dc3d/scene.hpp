#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dc3d/error.hpp"
#include "dc3d/geometry.hpp"

namespace dc3d::scene {

constexpr int kFeatureDim = 128;
constexpr int kPointDim = 135;  // xyz + 132 extra features
constexpr int kNumClasses = 18;
constexpr int kMaxProposals = 256;

/// Annotated ground-truth object: axis-aligned box, class, 128-d feature,
/// captions, and optional pairwise orientation labels in degrees [0,180).
struct ObjectRecord {
  int id = 0;
  geom::Vec3 center{0, 0, 0};
  geom::Vec3 lengths{1, 1, 1};
  int semantic_class = 0;
  std::vector<float> feature;                 // exactly 128 entries
  std::vector<std::string> captions;
  std::map<int, float> orientation_labels;    // neighbor object id -> angle
  bool orientation_masked = false;

  geom::Box3 box() const { return {center, lengths}; }
};

/// Detected proposal as ingested (the detection backbone lives elsewhere).
struct Proposal {
  geom::Vec3 center{0, 0, 0};
  geom::Vec3 lengths{1, 1, 1};
  int semantic_class = 0;
  std::vector<float> feature;  // exactly 128 entries
  float objectness = 1.0f;

  geom::Box3 box() const { return {center, lengths}; }
};

/// Proposal list capped at 256 entries, objectness kept per item.
struct ProposalSet {
  std::vector<Proposal> items;
};

struct Scene {
  std::string scene_id;
  std::vector<ObjectRecord> objects;
  bool has_detections = false;
  std::vector<Proposal> detections;
  std::vector<std::vector<float>> points;  // optional; rows of width 135
  float detection_loss = 0.0f;             // optional precomputed backbone loss
};

/// Parses and fully validates a scene file (UTF-8 JSON). Parse failures are
/// FormatError; invariant violations are ValidationError with a field path.
Scene load_scene(const std::filesystem::path& path);
Scene parse_scene(const std::string& json_text);

void save_scene(const Scene& scene, const std::filesystem::path& path);
std::string scene_to_json(const Scene& scene);

/// Ground-truth boxes and features standing in for a detector (objectness 1).
ProposalSet oracle_proposals(const Scene& scene);
/// Ingested detections capped to the top `max_proposals` by objectness
/// (ties keep the lower index).
ProposalSet detected_proposals(const Scene& scene, int max_proposals = kMaxProposals);

/// Rotates object centers about the scene centroid by independent per-axis
/// angles uniform in [-5,5] degrees, then translates all centers by one
/// uniform offset with each component in [-0.5, 0.5] m. Boxes stay axis
/// aligned; ids, classes, features, lengths and captions are untouched.
Scene augment_scene(const Scene& scene, std::uint64_t seed);

/// Smallest axis-aligned box containing every object box of the scene.
geom::Box3 scene_bounds(const Scene& scene);

}  // namespace dc3d::scene
