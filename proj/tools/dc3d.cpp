#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dc3d/checkpoint.hpp"
#include "dc3d/evalrun.hpp"
#include "dc3d/retrieval.hpp"
#include "dc3d/synthetic.hpp"
#include "dc3d/training.hpp"
#include "json.hpp"

namespace {

using dc3d::ValidationError;
using nlohmann::json;

struct TrainFileConfig {
  std::string data_dir;
  std::string checkpoint_out = "model.ckpt";
  std::string log_out;
  std::string embeddings;
  bool save_optimizer_state = false;
  dc3d::training::TrainingConfig train;
};

TrainFileConfig read_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dc3d::IoError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw dc3d::FormatError(std::string("config file is not valid JSON: ") + e.what());
  }

  TrainFileConfig cfg;
  cfg.data_dir = j.at("data_dir").get<std::string>();
  cfg.checkpoint_out = j.value("checkpoint_out", cfg.checkpoint_out);
  cfg.log_out = j.value("log_out", cfg.log_out);
  cfg.embeddings = j.value("embeddings", cfg.embeddings);
  cfg.save_optimizer_state = j.value("save_optimizer_state", false);

  auto& t = cfg.train;
  t.lr = j.value("lr", t.lr);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.max_iterations = j.value("max_iterations", t.max_iterations);
  t.seed = j.value("seed", t.seed);
  t.k_neighbors = j.value("k_neighbors", t.k_neighbors);
  t.graph_steps = j.value("graph_steps", t.graph_steps);
  t.max_proposals = j.value("max_proposals", t.max_proposals);
  t.augmentation = j.value("augmentation", t.augmentation);
  t.use_detections = j.value("use_detections", t.use_detections);
  t.use_attention = j.value("use_attention", t.use_attention);
  t.use_graph = j.value("use_graph", t.use_graph);
  t.weights.alpha = j.value("loss_alpha", t.weights.alpha);
  t.weights.beta = j.value("loss_beta", t.weights.beta);
  t.weights.gamma = j.value("loss_gamma", t.weights.gamma);
  t.vocab_min_count = j.value("vocab_min_count", t.vocab_min_count);
  t.accuracy_check_interval = j.value("accuracy_check_interval", t.accuracy_check_interval);
  t.accuracy_target = j.value("accuracy_target", t.accuracy_target);

  if (!(t.lr > 0.0f)) throw ValidationError("lr", "learning rate must be positive");
  if (t.weight_decay < 0.0f) throw ValidationError("weight_decay", "must be non-negative");
  if (t.max_iterations < 1) throw ValidationError("max_iterations", "must be at least 1");
  if (t.k_neighbors < 1) throw ValidationError("k_neighbors", "must be at least 1");
  if (t.graph_steps < 0) throw ValidationError("graph_steps", "must be non-negative");
  if (t.max_proposals < 1 || t.max_proposals > dc3d::scene::kMaxProposals) {
    throw ValidationError("max_proposals", "must lie in [1,256]");
  }
  if (t.weights.alpha < 0.0f || t.weights.beta < 0.0f || t.weights.gamma < 0.0f) {
    throw ValidationError("loss weights", "must be non-negative");
  }
  return cfg;
}

int cmd_train(const std::string& config_path) {
  TrainFileConfig cfg = read_train_config(config_path);
  auto scenes = dc3d::eval::load_scene_dir(cfg.data_dir);
  if (scenes.empty()) throw dc3d::IoError("no scene files in " + cfg.data_dir);

  std::vector<std::string> corpus;
  for (const auto& s : scenes) {
    for (const auto& o : s.objects) {
      for (const auto& c : o.captions) corpus.push_back(c);
    }
  }
  if (corpus.empty()) throw ValidationError("objects.captions", "training data has no captions");
  auto vocab = dc3d::scene::Vocabulary::build(corpus, cfg.train.vocab_min_count);
  auto embeddings = cfg.embeddings.empty() ? dc3d::scene::zero_embeddings(vocab)
                                           : dc3d::scene::load_embeddings(cfg.embeddings, vocab);

  dc3d::model::ModelConfig mc;
  mc.k_neighbors = cfg.train.k_neighbors;
  mc.graph_steps = cfg.train.graph_steps;
  mc.use_graph = cfg.train.use_graph;
  mc.use_attention = cfg.train.use_attention;
  auto model = dc3d::model::init_model(mc, vocab, embeddings, cfg.train.seed);

  dc3d::diff::AdamState opt;
  auto result = dc3d::training::train(scenes, model, opt, cfg.train);

  if (!cfg.log_out.empty()) {
    std::ofstream log(cfg.log_out);
    if (!log) throw dc3d::IoError("cannot write loss log " + cfg.log_out);
    log << "iteration\ttotal\tdetection\torientation\tdescription\n";
    for (std::size_t i = 0; i < result.iterations.size(); ++i) {
      const auto& it = result.iterations[i];
      log << i << "\t" << it.total << "\t" << it.detection << "\t" << it.orientation << "\t"
          << it.description << "\n";
    }
  }
  dc3d::ckpt::save_checkpoint(model, cfg.checkpoint_out,
                              cfg.save_optimizer_state ? &opt : nullptr);
  std::cout << "trained " << result.completed_iterations << " iterations, checkpoint written to "
            << cfg.checkpoint_out << "\n";
  if (!result.iterations.empty()) {
    std::cout << "final loss " << result.iterations.back().total << " (description "
              << result.iterations.back().description << ")\n";
  }
  return 0;
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw dc3d::ArgumentError("no IoU thresholds given");
  return out;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& ious,
             const std::string& out_path, double nms_threshold, const std::string& predictions_path) {
  auto loaded = dc3d::ckpt::load_checkpoint(checkpoint);
  auto scenes = dc3d::eval::load_scene_dir(data_dir);

  // A vocabulary file shipped with the data must agree with the checkpoint.
  const auto vocab_file = std::filesystem::path(data_dir) / "vocab.txt";
  if (std::filesystem::exists(vocab_file)) {
    auto data_vocab = dc3d::scene::Vocabulary::load(vocab_file);
    if (!(data_vocab == loaded.model.vocab)) {
      throw dc3d::CompatibilityError("vocabulary of " + vocab_file.string() +
                                     " does not match the checkpoint");
    }
  }

  dc3d::eval::EvalOptions options;
  options.thresholds = parse_thresholds(ious);
  options.nms_threshold = nms_threshold;
  std::vector<dc3d::eval::PredictionRecord> predictions;
  auto report = dc3d::eval::run_evaluation(loaded.model, scenes, options, &predictions);
  dc3d::eval::write_report(report, out_path);
  if (!predictions_path.empty()) dc3d::eval::save_predictions(predictions, predictions_path);

  for (const char* name : {"cider", "bleu4", "meteor", "rouge_l"}) {
    auto it = report.combined.find(name);
    if (it == report.combined.end()) continue;
    std::cout << name << ":";
    for (const auto& [k, v] : it->second) std::cout << "  @" << k << " IoU = " << v;
    std::cout << "\n";
  }
  std::cout << "mAP@0.50 IoU = " << report.map_at_half << "\n";
  std::cout << "report written to " << out_path << "\n";
  return 0;
}

int cmd_caption(const std::string& checkpoint, const std::string& scene_path,
                const std::string& object_arg) {
  auto loaded = dc3d::ckpt::load_checkpoint(checkpoint);
  auto scn = dc3d::scene::load_scene(scene_path);
  if (scn.objects.empty()) throw dc3d::ArgumentError("scene has no objects");

  auto ps = dc3d::scene::oracle_proposals(scn);
  auto captions = dc3d::model::caption_proposals(ps, loaded.model);

  auto print_one = [&](int object_id) {
    for (std::size_t i = 0; i < scn.objects.size(); ++i) {
      if (scn.objects[i].id != object_id) continue;
      const auto& o = scn.objects[i];
      std::printf("%d\t(%.3f, %.3f, %.3f)\t(%.3f, %.3f, %.3f)\t%s\n", o.id, o.center[0], o.center[1],
                  o.center[2], o.lengths[0], o.lengths[1], o.lengths[2],
                  captions[i].caption.c_str());
      return true;
    }
    return false;
  };

  if (object_arg == "all") {
    for (const auto& o : scn.objects) print_one(o.id);
    return 0;
  }
  const int object_id = std::stoi(object_arg);
  if (!print_one(object_id)) {
    throw dc3d::ArgumentError("object id " + object_arg + " is not in the scene");
  }
  return 0;
}

int cmd_retrieve(const std::string& index_dir, const std::string& scene_path, int object_id) {
  auto train_scenes = dc3d::eval::load_scene_dir(index_dir);
  auto index = dc3d::retrieval::build_retrieval_index(train_scenes);
  auto scn = dc3d::scene::load_scene(scene_path);
  for (const auto& o : scn.objects) {
    if (o.id != object_id) continue;
    std::cout << dc3d::retrieval::retrieve_caption(o.feature, index) << "\n";
    return 0;
  }
  throw dc3d::ArgumentError("object id " + std::to_string(object_id) + " is not in the scene");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D dense captioning: relational graph + attention captioner"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  train->add_option("--config", config_path, "training config file")->required();

  std::string checkpoint, data_dir, ious = "0.25,0.5", out_path = "report.json", predictions_path;
  double nms_threshold = 0.25;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a scene directory");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "scene directory")->required();
  eval->add_option("--iou", ious, "comma-separated IoU gates (default 0.25,0.5)");
  eval->add_option("--out", out_path, "report output path");
  eval->add_option("--nms-threshold", nms_threshold, "suppression threshold for detection inputs");
  eval->add_option("--predictions", predictions_path, "also dump raw predictions to this path");

  std::string cap_checkpoint, scene_path, object_arg = "all";
  auto* caption = app.add_subcommand("caption", "decode captions for scene objects");
  caption->add_option("--checkpoint", cap_checkpoint, "checkpoint file")->required();
  caption->add_option("--scene", scene_path, "scene file")->required();
  caption->add_option("--object", object_arg, "object id or \"all\"");

  std::string index_dir, query_scene;
  int query_object = 0;
  auto* retrieve = app.add_subcommand("retrieve", "nearest-feature caption retrieval baseline");
  retrieve->add_option("--index", index_dir, "training scene directory")->required();
  retrieve->add_option("--scene", query_scene, "query scene file")->required();
  retrieve->add_option("--object", query_object, "query object id")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path);
    if (eval->parsed()) {
      return cmd_eval(checkpoint, data_dir, ious, out_path, nms_threshold, predictions_path);
    }
    if (caption->parsed()) return cmd_caption(cap_checkpoint, scene_path, object_arg);
    if (retrieve->parsed()) return cmd_retrieve(index_dir, query_scene, query_object);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
