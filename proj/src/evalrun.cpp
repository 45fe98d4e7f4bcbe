#include "dc3d/evalrun.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dc3d/vocab.hpp"
#include "json.hpp"

namespace dc3d::eval {

namespace {

using nlohmann::ordered_json;

std::string threshold_key(double k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", k);
  return buf;
}

}  // namespace

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prediction file " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("prediction file is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw FormatError("prediction file must be a JSON array");
  std::vector<PredictionRecord> out;
  try {
    for (const auto& item : j) {
      PredictionRecord r;
      r.scene_id = item.at("scene_id").get<std::string>();
      const auto& box = item.at("box");
      for (int a = 0; a < 3; ++a) {
        r.box.center[static_cast<std::size_t>(a)] = box.at("center").at(static_cast<std::size_t>(a)).get<float>();
        r.box.lengths[static_cast<std::size_t>(a)] = box.at("lengths").at(static_cast<std::size_t>(a)).get<float>();
      }
      r.semantic_class = item.at("class").get<int>();
      r.objectness = item.at("objectness").get<float>();
      r.caption = item.at("caption").get<std::string>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("prediction record is malformed: ") + e.what());
  }
  return out;
}

void save_predictions(const std::vector<PredictionRecord>& predictions,
                      const std::filesystem::path& path) {
  ordered_json j = ordered_json::array();
  for (const auto& r : predictions) {
    ordered_json item;
    item["scene_id"] = r.scene_id;
    item["box"]["center"] = {r.box.center[0], r.box.center[1], r.box.center[2]};
    item["box"]["lengths"] = {r.box.lengths[0], r.box.lengths[1], r.box.lengths[2]};
    item["class"] = r.semantic_class;
    item["objectness"] = r.objectness;
    item["caption"] = r.caption;
    j.push_back(std::move(item));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write prediction file " + path.string());
  out << j.dump(2) << "\n";
}

EvalReport evaluate_predictions(const std::vector<scene::Scene>& scenes,
                                const std::vector<PredictionRecord>& predictions,
                                const std::vector<double>& thresholds) {
  EvalReport report;
  report.thresholds = thresholds;

  // Per-object assignment and caption collection, scene by scene.
  std::vector<metrics::TokenList> candidates;
  std::vector<metrics::RefSet> refs;
  std::vector<double> ious;
  std::map<int, std::vector<std::pair<float, bool>>> pooled_matches;
  std::map<int, int> gt_counts;

  for (const auto& scn : scenes) {
    std::vector<const PredictionRecord*> scene_preds;
    for (const auto& p : predictions) {
      if (p.scene_id == scn.scene_id) scene_preds.push_back(&p);
    }
    if (scn.objects.empty()) continue;

    std::vector<geom::Box3> pred_boxes, gt_boxes;
    for (const auto* p : scene_preds) pred_boxes.push_back(p->box);
    for (const auto& o : scn.objects) gt_boxes.push_back(o.box());
    const auto assignment = metrics::assign_predictions(pred_boxes, gt_boxes);

    for (std::size_t i = 0; i < scn.objects.size(); ++i) {
      const auto& object = scn.objects[i];
      ObjectEvalRecord rec;
      rec.scene_id = scn.scene_id;
      rec.object_id = object.id;
      rec.iou = assignment[i].iou;
      if (assignment[i].prediction >= 0) {
        rec.caption = scene_preds[static_cast<std::size_t>(assignment[i].prediction)]->caption;
      }
      report.objects.push_back(rec);

      candidates.push_back(scene::tokenize(rec.caption));
      metrics::RefSet ref_set;
      for (const auto& caption : object.captions) ref_set.push_back(scene::tokenize(caption));
      refs.push_back(std::move(ref_set));
      ious.push_back(rec.iou);
    }

    // Detection matches pooled per class across scenes (boxes only compare
    // within their own scene).
    std::set<int> scene_classes;
    for (const auto& o : scn.objects) scene_classes.insert(o.semantic_class);
    for (int cls : scene_classes) {
      std::vector<metrics::ClassedDetection> preds_c;
      std::vector<metrics::ClassedTruth> gts_c;
      for (const auto* p : scene_preds) {
        if (p->semantic_class == cls) preds_c.push_back({p->box, cls, p->objectness});
      }
      for (const auto& o : scn.objects) {
        if (o.semantic_class == cls) gts_c.push_back({o.box(), cls});
      }
      auto matches = metrics::greedy_matches(preds_c, gts_c, 0.5);
      auto& pool = pooled_matches[cls];
      pool.insert(pool.end(), matches.begin(), matches.end());
      gt_counts[cls] += static_cast<int>(gts_c.size());
    }
  }

  report.num_objects = static_cast<int>(candidates.size());
  if (report.num_objects == 0) return report;

  // Per-object metric scores; the CIDEr idf table spans this run's refs.
  metrics::CiderScorer cider_scorer(refs);
  std::map<std::string, std::vector<double>> per_metric;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const bool empty_refs = refs[i].empty();
    const double c = empty_refs ? 0.0 : cider_scorer.score(i, candidates[i]);
    const double b = empty_refs ? 0.0 : metrics::bleu4(candidates[i], refs[i]);
    const double m = empty_refs ? 0.0 : metrics::meteor(candidates[i], refs[i]);
    const double r = empty_refs ? 0.0 : metrics::rouge_l(candidates[i], refs[i]);
    per_metric["cider"].push_back(c);
    per_metric["bleu4"].push_back(b);
    per_metric["meteor"].push_back(m);
    per_metric["rouge_l"].push_back(r);
    report.objects[i].scores = {{"cider", c}, {"bleu4", b}, {"meteor", m}, {"rouge_l", r}};
  }

  for (const auto& [name, scores] : per_metric) {
    for (double k : thresholds) {
      report.combined[name][threshold_key(k)] = metrics::m_at_kiou(scores, ious, k);
    }
  }

  double map_total = 0.0;
  int map_classes = 0;
  for (const auto& [cls, matches] : pooled_matches) {
    if (gt_counts[cls] == 0) continue;
    map_total += metrics::average_precision(matches, gt_counts[cls]);
    ++map_classes;
  }
  report.map_at_half = map_classes > 0 ? map_total / map_classes : 0.0;
  return report;
}

EvalReport run_evaluation(model::Model& model, const std::vector<scene::Scene>& scenes,
                          const EvalOptions& options,
                          std::vector<PredictionRecord>* predictions_out) {
  std::vector<PredictionRecord> predictions;
  for (const auto& scn : scenes) {
    const bool oracle_mode = !(options.use_detections && scn.has_detections);
    scene::ProposalSet ps =
        oracle_mode ? scene::oracle_proposals(scn) : scene::detected_proposals(scn);

    if (!oracle_mode && !ps.items.empty()) {
      std::vector<geom::Box3> boxes;
      std::vector<float> scores;
      for (const auto& p : ps.items) {
        boxes.push_back(p.box());
        scores.push_back(p.objectness);
      }
      std::vector<int> kept = geom::nms(boxes, scores, static_cast<float>(options.nms_threshold));
      std::sort(kept.begin(), kept.end());
      scene::ProposalSet filtered;
      for (int idx : kept) filtered.items.push_back(ps.items[static_cast<std::size_t>(idx)]);
      ps = std::move(filtered);
    }
    if (ps.items.empty()) continue;

    for (const auto& pc : model::caption_proposals(ps, model)) {
      PredictionRecord r;
      r.scene_id = scn.scene_id;
      r.box = pc.box;
      r.semantic_class = pc.semantic_class;
      r.objectness = pc.objectness;
      r.caption = pc.caption;
      predictions.push_back(std::move(r));
    }
  }
  if (predictions_out != nullptr) *predictions_out = predictions;
  return evaluate_predictions(scenes, predictions, options.thresholds);
}

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  j["num_objects"] = report.num_objects;
  j["thresholds"] = report.thresholds;
  j["metrics"] = ordered_json::object();
  for (const char* name : {"cider", "bleu4", "meteor", "rouge_l"}) {
    auto it = report.combined.find(name);
    if (it == report.combined.end()) continue;
    ordered_json entry = ordered_json::object();
    for (const auto& [key, value] : it->second) entry[key] = value;
    j["metrics"][name] = std::move(entry);
  }
  j["map"]["0.50"] = report.map_at_half;
  j["objects"] = ordered_json::array();
  for (const auto& rec : report.objects) {
    ordered_json o;
    o["scene_id"] = rec.scene_id;
    o["object_id"] = rec.object_id;
    o["iou"] = rec.iou;
    o["caption"] = rec.caption;
    ordered_json scores = ordered_json::object();
    for (const char* name : {"cider", "bleu4", "meteor", "rouge_l"}) {
      auto sit = rec.scores.find(name);
      if (sit != rec.scores.end()) scores[name] = sit->second;
    }
    o["scores"] = std::move(scores);
    ordered_json gates = ordered_json::object();
    for (double k : report.thresholds) gates[threshold_key(k)] = rec.iou > k ? 1 : 0;
    o["gates"] = std::move(gates);
    j["objects"].push_back(std::move(o));
  }
  return j.dump(2);
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report file " + path.string());
  out << report_to_json(report) << "\n";
}

std::vector<scene::Scene> load_scene_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("scene directory does not exist: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<scene::Scene> scenes;
  scenes.reserve(files.size());
  for (const auto& f : files) scenes.push_back(scene::load_scene(f));
  return scenes;
}

}  // namespace dc3d::eval
