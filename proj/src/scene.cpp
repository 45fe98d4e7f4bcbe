#include "dc3d/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dc3d/rng.hpp"
#include "json.hpp"

namespace dc3d::scene {

namespace {

using nlohmann::ordered_json;

float require_finite(double v, const std::string& path) {
  if (!std::isfinite(v)) throw ValidationError(path, "value must be finite");
  return static_cast<float>(v);
}

geom::Vec3 parse_vec3(const ordered_json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(path, "expected an array of 3 numbers");
  geom::Vec3 v;
  for (int i = 0; i < 3; ++i) v[static_cast<std::size_t>(i)] = require_finite(j[static_cast<std::size_t>(i)].get<double>(), path);
  return v;
}

std::vector<float> parse_feature(const ordered_json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array");
  if (j.size() != kFeatureDim) {
    throw ValidationError(path, "feature width must be exactly " + std::to_string(kFeatureDim) +
                                    ", got " + std::to_string(j.size()));
  }
  std::vector<float> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(require_finite(v.get<double>(), path));
  return out;
}

ObjectRecord parse_object(const ordered_json& j, const std::string& path) {
  ObjectRecord o;
  o.id = j.at("id").get<int>();
  o.center = parse_vec3(j.at("center"), path + ".center");
  o.lengths = parse_vec3(j.at("lengths"), path + ".lengths");
  for (int a = 0; a < 3; ++a) {
    if (!(o.lengths[static_cast<std::size_t>(a)] > 0.0f)) {
      throw ValidationError(path + ".lengths", "box lengths must be positive");
    }
  }
  o.semantic_class = j.at("semantic_class").get<int>();
  if (o.semantic_class < 0 || o.semantic_class >= kNumClasses) {
    throw ValidationError(path + ".semantic_class", "class must lie in [0," + std::to_string(kNumClasses) + ")");
  }
  o.feature = parse_feature(j.at("feature"), path + ".feature");
  if (j.contains("captions")) {
    for (const auto& c : j.at("captions")) o.captions.push_back(c.get<std::string>());
  }
  if (j.contains("orientation_labels")) {
    for (const auto& [key, val] : j.at("orientation_labels").items()) {
      const float angle = require_finite(val.get<double>(), path + ".orientation_labels");
      if (!(angle >= 0.0f && angle < 180.0f)) {
        throw ValidationError(path + ".orientation_labels[" + key + "]", "angle must lie in [0,180)");
      }
      o.orientation_labels[std::stoi(key)] = angle;
    }
  }
  if (j.contains("orientation_masked")) o.orientation_masked = j.at("orientation_masked").get<bool>();
  return o;
}

Proposal parse_detection(const ordered_json& j, const std::string& path) {
  Proposal p;
  p.center = parse_vec3(j.at("center"), path + ".center");
  p.lengths = parse_vec3(j.at("lengths"), path + ".lengths");
  for (int a = 0; a < 3; ++a) {
    if (!(p.lengths[static_cast<std::size_t>(a)] > 0.0f)) {
      throw ValidationError(path + ".lengths", "box lengths must be positive");
    }
  }
  p.semantic_class = j.at("semantic_class").get<int>();
  if (p.semantic_class < 0 || p.semantic_class >= kNumClasses) {
    throw ValidationError(path + ".semantic_class", "class must lie in [0," + std::to_string(kNumClasses) + ")");
  }
  p.feature = parse_feature(j.at("feature"), path + ".feature");
  p.objectness = require_finite(j.at("objectness").get<double>(), path + ".objectness");
  if (p.objectness < 0.0f || p.objectness > 1.0f) {
    throw ValidationError(path + ".objectness", "objectness must lie in [0,1]");
  }
  return p;
}

}  // namespace

Scene parse_scene(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene file is not valid JSON: ") + e.what());
  }
  Scene s;
  try {
    s.scene_id = j.at("scene_id").get<std::string>();
    const auto& objects = j.at("objects");
    std::set<int> seen_ids;
    for (std::size_t i = 0; i < objects.size(); ++i) {
      const std::string path = "objects[" + std::to_string(i) + "]";
      ObjectRecord o = parse_object(objects[i], path);
      if (!seen_ids.insert(o.id).second) {
        throw ValidationError(path + ".id", "duplicate object id " + std::to_string(o.id));
      }
      s.objects.push_back(std::move(o));
    }
    // Orientation labels must point at objects that exist.
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      for (const auto& [nbr, angle] : s.objects[i].orientation_labels) {
        (void)angle;
        if (!seen_ids.count(nbr)) {
          throw ValidationError("objects[" + std::to_string(i) + "].orientation_labels",
                                "references unknown object id " + std::to_string(nbr));
        }
      }
    }
    if (j.contains("detections")) {
      s.has_detections = true;
      const auto& dets = j.at("detections");
      for (std::size_t i = 0; i < dets.size(); ++i) {
        s.detections.push_back(parse_detection(dets[i], "detections[" + std::to_string(i) + "]"));
      }
    }
    if (j.contains("points")) {
      const auto& pts = j.at("points");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& row = pts[i];
        if (!row.is_array() || row.size() != kPointDim) {
          throw ValidationError("points[" + std::to_string(i) + "]",
                                "point width must be exactly " + std::to_string(kPointDim));
        }
        std::vector<float> r;
        r.reserve(kPointDim);
        for (const auto& v : row) r.push_back(require_finite(v.get<double>(), "points"));
        s.points.push_back(std::move(r));
      }
    }
    if (j.contains("detection_loss")) {
      s.detection_loss = require_finite(j.at("detection_loss").get<double>(), "detection_loss");
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scene file is missing or mistypes a field: ") + e.what());
  }
  return s;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

namespace {

ordered_json vec3_json(const geom::Vec3& v) {
  return ordered_json::array({v[0], v[1], v[2]});
}

ordered_json feature_json(const std::vector<float>& f) {
  ordered_json a = ordered_json::array();
  for (float v : f) a.push_back(v);
  return a;
}

}  // namespace

std::string scene_to_json(const Scene& s) {
  ordered_json j;
  j["scene_id"] = s.scene_id;
  j["objects"] = ordered_json::array();
  for (const auto& o : s.objects) {
    ordered_json jo;
    jo["id"] = o.id;
    jo["center"] = vec3_json(o.center);
    jo["lengths"] = vec3_json(o.lengths);
    jo["semantic_class"] = o.semantic_class;
    jo["feature"] = feature_json(o.feature);
    jo["captions"] = o.captions;
    if (!o.orientation_labels.empty()) {
      ordered_json labels;
      for (const auto& [nbr, angle] : o.orientation_labels) labels[std::to_string(nbr)] = angle;
      jo["orientation_labels"] = labels;
    }
    if (o.orientation_masked) jo["orientation_masked"] = true;
    j["objects"].push_back(std::move(jo));
  }
  if (s.has_detections) {
    j["detections"] = ordered_json::array();
    for (const auto& d : s.detections) {
      ordered_json jd;
      jd["center"] = vec3_json(d.center);
      jd["lengths"] = vec3_json(d.lengths);
      jd["semantic_class"] = d.semantic_class;
      jd["feature"] = feature_json(d.feature);
      jd["objectness"] = d.objectness;
      j["detections"].push_back(std::move(jd));
    }
  }
  if (!s.points.empty()) {
    j["points"] = ordered_json::array();
    for (const auto& row : s.points) {
      ordered_json jr = ordered_json::array();
      for (float v : row) jr.push_back(v);
      j["points"].push_back(std::move(jr));
    }
  }
  if (s.detection_loss != 0.0f) j["detection_loss"] = s.detection_loss;
  return j.dump(2);
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write scene file " + path.string());
  out << scene_to_json(scene) << "\n";
}

ProposalSet oracle_proposals(const Scene& scene) {
  ProposalSet set;
  for (const auto& o : scene.objects) {
    Proposal p;
    p.center = o.center;
    p.lengths = o.lengths;
    p.semantic_class = o.semantic_class;
    p.feature = o.feature;
    p.objectness = 1.0f;
    set.items.push_back(std::move(p));
    if (static_cast<int>(set.items.size()) >= kMaxProposals) break;
  }
  return set;
}

ProposalSet detected_proposals(const Scene& scene, int max_proposals) {
  const int cap = std::min(max_proposals, kMaxProposals);
  ProposalSet set;
  set.items = scene.detections;
  if (static_cast<int>(set.items.size()) > cap) {
    std::vector<int> order(set.items.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int l, int r) {
      if (set.items[static_cast<std::size_t>(l)].objectness != set.items[static_cast<std::size_t>(r)].objectness) {
        return set.items[static_cast<std::size_t>(l)].objectness > set.items[static_cast<std::size_t>(r)].objectness;
      }
      return l < r;
    });
    order.resize(static_cast<std::size_t>(cap));
    std::sort(order.begin(), order.end());
    std::vector<Proposal> kept;
    kept.reserve(order.size());
    for (int i : order) kept.push_back(set.items[static_cast<std::size_t>(i)]);
    set.items = std::move(kept);
  }
  return set;
}

Scene augment_scene(const Scene& scene, std::uint64_t seed) {
  Rng rng(seed);
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  const double ax = rng.uniform(-5.0, 5.0) * kDegToRad;
  const double ay = rng.uniform(-5.0, 5.0) * kDegToRad;
  const double az = rng.uniform(-5.0, 5.0) * kDegToRad;
  const double tx = rng.uniform(-0.5, 0.5);
  const double ty = rng.uniform(-0.5, 0.5);
  const double tz = rng.uniform(-0.5, 0.5);

  // Rz * Ry * Rx composed row by row.
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  const double rot[3][3] = {
      {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
      {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
      {-sy, cy * sx, cy * cx},
  };

  geom::Vec3 centroid{0, 0, 0};
  if (!scene.objects.empty()) {
    for (const auto& o : scene.objects) {
      for (int a = 0; a < 3; ++a) centroid[static_cast<std::size_t>(a)] += o.center[static_cast<std::size_t>(a)];
    }
    for (int a = 0; a < 3; ++a) {
      centroid[static_cast<std::size_t>(a)] /= static_cast<float>(scene.objects.size());
    }
  }

  Scene out = scene;
  const double shift[3] = {tx, ty, tz};
  for (auto& o : out.objects) {
    double rel[3];
    for (int a = 0; a < 3; ++a) {
      rel[a] = static_cast<double>(o.center[static_cast<std::size_t>(a)]) - centroid[static_cast<std::size_t>(a)];
    }
    for (int a = 0; a < 3; ++a) {
      double v = 0.0;
      for (int b = 0; b < 3; ++b) v += rot[a][b] * rel[b];
      o.center[static_cast<std::size_t>(a)] = static_cast<float>(v + centroid[static_cast<std::size_t>(a)] + shift[a]);
    }
  }
  return out;
}

geom::Box3 scene_bounds(const Scene& scene) {
  if (scene.objects.empty()) return {};
  geom::Vec3 lo{1e30f, 1e30f, 1e30f}, hi{-1e30f, -1e30f, -1e30f};
  for (const auto& o : scene.objects) {
    const geom::Box3 b = o.box();
    for (int a = 0; a < 3; ++a) {
      lo[static_cast<std::size_t>(a)] = std::min(lo[static_cast<std::size_t>(a)], b.min_corner(a));
      hi[static_cast<std::size_t>(a)] = std::max(hi[static_cast<std::size_t>(a)], b.max_corner(a));
    }
  }
  geom::Box3 bounds;
  for (int a = 0; a < 3; ++a) {
    bounds.center[static_cast<std::size_t>(a)] = 0.5f * (lo[static_cast<std::size_t>(a)] + hi[static_cast<std::size_t>(a)]);
    bounds.lengths[static_cast<std::size_t>(a)] =
        std::max(1e-3f, hi[static_cast<std::size_t>(a)] - lo[static_cast<std::size_t>(a)]);
  }
  return bounds;
}

}  // namespace dc3d::scene
