#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dc3d/metrics.hpp"
#include "dc3d/model.hpp"
#include "dc3d/scene.hpp"

namespace dc3d::eval {

/// One prediction line of the interchange format.
struct PredictionRecord {
  std::string scene_id;
  geom::Box3 box;
  int semantic_class = 0;
  float objectness = 1.0f;
  std::string caption;
};

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::vector<PredictionRecord>& predictions,
                      const std::filesystem::path& path);

struct ObjectEvalRecord {
  std::string scene_id;
  int object_id = 0;
  double iou = 0.0;
  std::string caption;                  // assigned prediction caption
  std::map<std::string, double> scores; // metric name -> m_i
};

struct EvalReport {
  std::vector<double> thresholds;
  // metric name -> threshold key ("0.25") -> m@kIoU
  std::map<std::string, std::map<std::string, double>> combined;
  double map_at_half = 0.0;
  int num_objects = 0;
  std::vector<ObjectEvalRecord> objects;
};

struct EvalOptions {
  std::vector<double> thresholds{0.25, 0.5};
  double nms_threshold = 0.25;
  bool use_detections = true;  // oracle boxes are used when a scene has none
};

/// Per-GT-object caption evaluation gated on IoU plus detection mAP@0.5.
/// Detection-mode scenes run NMS first; oracle-mode scenes skip it.
EvalReport run_evaluation(model::Model& model, const std::vector<scene::Scene>& scenes,
                          const EvalOptions& options,
                          std::vector<PredictionRecord>* predictions_out = nullptr);

/// Scores externally produced predictions against the scenes' ground truth.
EvalReport evaluate_predictions(const std::vector<scene::Scene>& scenes,
                                const std::vector<PredictionRecord>& predictions,
                                const std::vector<double>& thresholds);

void write_report(const EvalReport& report, const std::filesystem::path& path);
std::string report_to_json(const EvalReport& report);

/// Scene files (*.json) of a directory, sorted by filename.
std::vector<scene::Scene> load_scene_dir(const std::filesystem::path& dir);

}  // namespace dc3d::eval
