#include "dc3d/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dc3d/rng.hpp"

namespace dc3d::synth {

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {
      "bathtub", "bed",     "bookshelf", "cabinet", "chair",  "counter",
      "curtain", "desk",    "door",      "dresser", "picture", "refrigerator",
      "shelf",   "sink",    "sofa",      "table",   "toilet", "window"};
  return names;
}

namespace {

// 128-d feature: class one-hot, scaled center, orientation sin/cos, noise.
std::vector<float> make_feature(int semantic_class, const geom::Vec3& center, float room_extent,
                                float yaw_deg, float noise, Rng& rng) {
  std::vector<float> f(scene::kFeatureDim, 0.0f);
  f[static_cast<std::size_t>(semantic_class)] = 1.0f;
  for (int a = 0; a < 3; ++a) {
    f[18 + static_cast<std::size_t>(a)] = center[static_cast<std::size_t>(a)] / room_extent;
  }
  const double yaw = yaw_deg * 3.14159265358979323846 / 180.0;
  f[21] = static_cast<float>(std::cos(yaw));
  f[22] = static_cast<float>(std::sin(yaw));
  for (std::size_t i = 23; i < f.size(); ++i) {
    f[i] = static_cast<float>(rng.normal() * noise);
  }
  return f;
}

float angular_deviation(float yaw_a, float yaw_b) {
  float d = std::fabs(yaw_a - yaw_b);
  d = std::fmod(d, 360.0f);
  if (d > 180.0f) d = 360.0f - d;
  return std::min(d, 179.99f);
}

}  // namespace

std::vector<scene::Scene> make_synthetic_scenes(const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.num_classes > static_cast<int>(class_names().size())) {
    throw ArgumentError("synthetic class count must lie in [2,18]");
  }
  Rng rng(spec.seed);
  std::vector<scene::Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(spec.num_scenes));

  const float half = spec.room_extent / 2.0f - 1.0f;
  for (int s = 0; s < spec.num_scenes; ++s) {
    scene::Scene scn;
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03d", spec.id_prefix.c_str(), s);
    scn.scene_id = name;

    std::vector<geom::Vec3> centers;
    std::vector<float> yaws;
    for (int o = 0; o < spec.objects_per_scene; ++o) {
      // Rejection-sample centers so nearest neighbors stay unambiguous.
      geom::Vec3 c;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        c = {static_cast<float>(rng.uniform(-half, half)), static_cast<float>(rng.uniform(-half, half)),
             static_cast<float>(rng.uniform(0.3, 1.2))};
        bool ok = true;
        for (const auto& prev : centers) {
          const double dx = c[0] - prev[0], dy = c[1] - prev[1], dz = c[2] - prev[2];
          if (std::sqrt(dx * dx + dy * dy + dz * dz) < 1.8) {
            ok = false;
            break;
          }
        }
        if (ok) break;
      }
      centers.push_back(c);
      yaws.push_back(static_cast<float>(rng.uniform(0.0, 360.0)));

      scene::ObjectRecord obj;
      obj.id = o;
      obj.center = c;
      obj.lengths = {static_cast<float>(rng.uniform(0.6, 1.4)), static_cast<float>(rng.uniform(0.6, 1.4)),
                     static_cast<float>(rng.uniform(0.6, 1.4))};
      obj.semantic_class = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.num_classes)));
      obj.feature = make_feature(obj.semantic_class, c, spec.room_extent, yaws.back(),
                                 spec.feature_noise, rng);
      obj.orientation_masked = rng.uniform() < spec.mask_fraction;
      scn.objects.push_back(std::move(obj));
    }

    // Captions name the class of the nearest other object.
    for (int o = 0; o < spec.objects_per_scene; ++o) {
      int nearest = -1;
      double best = 1e30;
      for (int j = 0; j < spec.objects_per_scene; ++j) {
        if (j == o) continue;
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const double d = static_cast<double>(centers[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)]) -
                           centers[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
          d2 += d * d;
        }
        if (d2 < best) {
          best = d2;
          nearest = j;
        }
      }
      auto& obj = scn.objects[static_cast<std::size_t>(o)];
      const std::string own = class_names()[static_cast<std::size_t>(obj.semantic_class)];
      if (nearest >= 0) {
        const std::string other =
            class_names()[static_cast<std::size_t>(scn.objects[static_cast<std::size_t>(nearest)].semantic_class)];
        obj.captions.push_back("the " + own + " is next to the " + other + ".");
      } else {
        obj.captions.push_back("the " + own + " is alone.");
      }
      for (int j = 0; j < spec.objects_per_scene; ++j) {
        if (j == o) continue;
        obj.orientation_labels[j] =
            angular_deviation(yaws[static_cast<std::size_t>(o)], yaws[static_cast<std::size_t>(j)]);
      }
    }
    scenes.push_back(std::move(scn));
  }
  return scenes;
}

scene::Vocabulary vocabulary_of(const std::vector<scene::Scene>& scenes) {
  std::vector<std::string> corpus;
  for (const auto& scn : scenes) {
    for (const auto& obj : scn.objects) {
      for (const auto& caption : obj.captions) corpus.push_back(caption);
    }
  }
  return scene::Vocabulary::build(corpus, 1);
}

std::string synthetic_embeddings_text(const scene::Vocabulary& vocab, std::uint64_t seed) {
  std::ostringstream out;
  for (const auto& token : vocab.content_tokens()) {
    std::uint64_t h = seed;
    for (char c : token) h = h * 1099511628211ull + static_cast<unsigned char>(c);
    Rng rng(h);
    out << token;
    for (int d = 0; d < scene::kEmbeddingDim; ++d) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), " %.4f", rng.uniform(-0.5, 0.5));
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace dc3d::synth
