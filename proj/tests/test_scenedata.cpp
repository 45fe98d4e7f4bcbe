#include <cmath>
#include <filesystem>
#include <fstream>

#include "dc3d/scene.hpp"
#include "dc3d/synthetic.hpp"
#include "dc3d/vocab.hpp"
#include "doctest.h"

using namespace dc3d;

namespace {

std::string minimal_scene_json(int feature_width = 128, bool duplicate_ids = false) {
  std::string feature = "[";
  for (int i = 0; i < feature_width; ++i) feature += (i ? ",0.5" : "0.5");
  feature += "]";
  std::string obj = R"({"id": ID, "center": [0,0,0], "lengths": [1,1,1],
                        "semantic_class": 4, "feature": )" + feature +
                    R"(, "captions": ["a red chair"]})";
  std::string first = obj, second = obj;
  first.replace(first.find("ID"), 2, "0");
  second.replace(second.find("ID"), 2, duplicate_ids ? "0" : "1");
  return R"({"scene_id": "s0", "objects": [)" + first + "," + second + "]}";
}

}  // namespace

TEST_CASE("scene parsing accepts a minimal scene and rejects bad fields") {
  scene::Scene s = scene::parse_scene(minimal_scene_json());
  CHECK(s.scene_id == "s0");
  CHECK(s.objects.size() == 2);
  CHECK(s.objects[0].captions.size() == 1);
  CHECK_FALSE(s.has_detections);

  CHECK_THROWS_AS(scene::parse_scene("not json"), FormatError);
  CHECK_THROWS_AS(scene::parse_scene(minimal_scene_json(127)), ValidationError);
  CHECK_THROWS_AS(scene::parse_scene(minimal_scene_json(128, true)), ValidationError);

  // The validation error names the offending field.
  try {
    scene::parse_scene(minimal_scene_json(127));
    CHECK(false);
  } catch (const ValidationError& e) {
    CHECK(e.field == "objects[0].feature");
  }
}

TEST_CASE("scene save/load round trip is field exact") {
  synth::SyntheticSpec spec;
  spec.num_scenes = 3;
  spec.objects_per_scene = 4;
  spec.seed = 99;
  spec.mask_fraction = 0.3f;
  auto scenes = synth::make_synthetic_scenes(spec);
  scenes[0].detection_loss = 0.125f;
  scenes[0].has_detections = true;
  scene::Proposal det;
  det.center = {1, 2, 0.5f};
  det.lengths = {1, 1, 1};
  det.semantic_class = 3;
  det.feature.assign(128, 0.25f);
  det.objectness = 0.875f;
  scenes[0].detections.push_back(det);
  scenes[0].points.push_back(std::vector<float>(135, 0.5f));

  const auto dir = std::filesystem::temp_directory_path() / "dc3d_scene_roundtrip";
  std::filesystem::create_directories(dir);
  for (const auto& s : scenes) {
    const auto path = dir / (s.scene_id + ".json");
    scene::save_scene(s, path);
    scene::Scene loaded = scene::load_scene(path);
    CHECK(loaded.scene_id == s.scene_id);
    REQUIRE(loaded.objects.size() == s.objects.size());
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      const auto& a = s.objects[i];
      const auto& b = loaded.objects[i];
      CHECK(a.id == b.id);
      CHECK(a.center == b.center);
      CHECK(a.lengths == b.lengths);
      CHECK(a.semantic_class == b.semantic_class);
      CHECK(a.feature == b.feature);
      CHECK(a.captions == b.captions);
      CHECK(a.orientation_labels == b.orientation_labels);
      CHECK(a.orientation_masked == b.orientation_masked);
    }
    CHECK(loaded.has_detections == s.has_detections);
    REQUIRE(loaded.detections.size() == s.detections.size());
    for (std::size_t i = 0; i < s.detections.size(); ++i) {
      CHECK(loaded.detections[i].feature == s.detections[i].feature);
      CHECK(loaded.detections[i].objectness == s.detections[i].objectness);
    }
    CHECK(loaded.points == s.points);
    CHECK(loaded.detection_loss == s.detection_loss);
  }
}

TEST_CASE("vocabulary build order and encoding") {
  // "a a b": only "a" reaches min_count 2, "b" becomes UNK.
  auto v = scene::Vocabulary::build({"a a b"}, 2);
  CHECK(v.size() == 5);
  CHECK(v.index_of("a") == 4);
  CHECK(v.index_of("b") == scene::Vocabulary::kUnk);

  auto v1 = scene::Vocabulary::build({"x"}, 1);
  CHECK(v1.size() == 5);

  // Empty captions contribute nothing.
  auto v2 = scene::Vocabulary::build({"", "", "x"}, 1);
  CHECK(v2.size() == 5);

  // Frequency desc, then token asc.
  auto v3 = scene::Vocabulary::build({"b b c a a"}, 1);
  CHECK(v3.index_of("a") == 4);
  CHECK(v3.index_of("b") == 5);
  CHECK(v3.index_of("c") == 6);
}

TEST_CASE("caption encoding truncates, wraps and maps unknowns") {
  auto v = scene::Vocabulary::build({"the chair is red"}, 1);

  auto empty = scene::encode_caption("", v);
  CHECK(empty == scene::TokenSequence{scene::Vocabulary::kSos, scene::Vocabulary::kEos});

  std::string long_caption;
  for (int i = 0; i < 40; ++i) long_caption += "the ";
  auto truncated = scene::encode_caption(long_caption, v);
  CHECK(truncated.size() == 32);
  CHECK(truncated.front() == scene::Vocabulary::kSos);
  CHECK(truncated.back() == scene::Vocabulary::kEos);

  auto unk = scene::encode_caption("the zebra", v);
  CHECK(unk[1] == v.index_of("the"));
  CHECK(unk[2] == scene::Vocabulary::kUnk);

  // Tokenization lowercases and strips surrounding punctuation.
  CHECK(scene::tokenize("The chair, (red)!") == std::vector<std::string>{"the", "chair", "red"});

  // Encode/decode reproduces the lowercased truncated stream in-vocabulary.
  auto seq = scene::encode_caption("The chair IS red.", v);
  CHECK(scene::decode_caption(seq, v) == "the chair is red");
}

TEST_CASE("vocabulary file round trip") {
  auto v = scene::Vocabulary::build({"the chair is red the chair"}, 1);
  const auto path = std::filesystem::temp_directory_path() / "dc3d_vocab.txt";
  v.save(path);
  auto loaded = scene::Vocabulary::load(path);
  CHECK(loaded == v);
}

TEST_CASE("embedding table alignment and validation") {
  auto v = scene::Vocabulary::build({"alpha beta"}, 1);

  std::string good = "alpha";
  for (int i = 0; i < 300; ++i) good += " " + std::to_string(0.001 * i);
  good += "\nunrelated";
  for (int i = 0; i < 300; ++i) good += " 1.0";
  good += "\n";

  auto table = scene::parse_embeddings(good, v);
  CHECK(table.table.shape() == diff::Shape{v.size(), 300});
  // "alpha" gets its row verbatim, "beta" and reserved tokens the zero row.
  CHECK(table.table.at(static_cast<std::int64_t>(v.index_of("alpha")) * 300 + 1) == doctest::Approx(0.001));
  CHECK(table.table.at(static_cast<std::int64_t>(v.index_of("beta")) * 300 + 1) == 0.0f);
  CHECK(table.table.at(scene::Vocabulary::kSos * 300 + 1) == 0.0f);

  std::string bad = "alpha";
  for (int i = 0; i < 299; ++i) bad += " 0.5";
  CHECK_THROWS_AS(scene::parse_embeddings(bad + "\n", v), FormatError);
}

TEST_CASE("augmentation is seeded, bounded and preserves everything but centers") {
  synth::SyntheticSpec spec;
  spec.num_scenes = 1;
  spec.objects_per_scene = 6;
  spec.seed = 5;
  auto scn = synth::make_synthetic_scenes(spec)[0];

  auto a = scene::augment_scene(scn, 1234);
  auto b = scene::augment_scene(scn, 1234);
  auto c = scene::augment_scene(scn, 1235);

  REQUIRE(a.objects.size() == scn.objects.size());
  bool any_center_moved = false;
  for (std::size_t i = 0; i < scn.objects.size(); ++i) {
    CHECK(a.objects[i].center == b.objects[i].center);  // same seed, same output
    if (a.objects[i].center != c.objects[i].center) any_center_moved = true;
    CHECK(a.objects[i].id == scn.objects[i].id);
    CHECK(a.objects[i].semantic_class == scn.objects[i].semantic_class);
    CHECK(a.objects[i].feature == scn.objects[i].feature);
    CHECK(a.objects[i].lengths == scn.objects[i].lengths);
    CHECK(a.objects[i].captions == scn.objects[i].captions);
  }
  CHECK(any_center_moved);

  // Displacement bound: 0.5 m translation plus the small-angle rotation arm.
  double max_radius = 0.0;
  geom::Vec3 centroid{0, 0, 0};
  for (const auto& o : scn.objects) {
    for (int ax = 0; ax < 3; ++ax) centroid[static_cast<std::size_t>(ax)] += o.center[static_cast<std::size_t>(ax)];
  }
  for (int ax = 0; ax < 3; ++ax) centroid[static_cast<std::size_t>(ax)] /= static_cast<float>(scn.objects.size());
  for (const auto& o : scn.objects) {
    double r2 = 0;
    for (int ax = 0; ax < 3; ++ax) {
      const double d = o.center[static_cast<std::size_t>(ax)] - centroid[static_cast<std::size_t>(ax)];
      r2 += d * d;
    }
    max_radius = std::max(max_radius, std::sqrt(r2));
  }
  // Three sequential 5-degree rotations displace at most ~3*sin(5deg)*r.
  const double rotation_arm = 3.0 * std::sin(5.0 * 3.14159265 / 180.0) * max_radius;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    auto aug = scene::augment_scene(scn, seed);
    for (std::size_t i = 0; i < scn.objects.size(); ++i) {
      for (int ax = 0; ax < 3; ++ax) {
        const double moved = std::abs(aug.objects[i].center[static_cast<std::size_t>(ax)] -
                                      scn.objects[i].center[static_cast<std::size_t>(ax)]);
        CHECK(moved <= 0.5 + rotation_arm + 1e-4);
      }
    }
  }
}

TEST_CASE("proposal sets: oracle passthrough and detection cap") {
  synth::SyntheticSpec spec;
  spec.num_scenes = 1;
  spec.objects_per_scene = 3;
  auto scn = synth::make_synthetic_scenes(spec)[0];

  auto oracle = scene::oracle_proposals(scn);
  REQUIRE(oracle.items.size() == 3);
  CHECK(oracle.items[0].objectness == 1.0f);
  CHECK(oracle.items[0].feature == scn.objects[0].feature);

  // Detections above the cap keep the highest-objectness entries.
  scn.has_detections = true;
  for (int i = 0; i < 10; ++i) {
    scene::Proposal p;
    p.center = {static_cast<float>(i), 0, 0};
    p.lengths = {1, 1, 1};
    p.semantic_class = 0;
    p.feature.assign(128, 0.0f);
    p.objectness = static_cast<float>(i) / 10.0f;
    scn.detections.push_back(p);
  }
  auto capped = scene::detected_proposals(scn, 4);
  REQUIRE(capped.items.size() == 4);
  for (const auto& p : capped.items) CHECK(p.objectness >= 0.6f);
}
