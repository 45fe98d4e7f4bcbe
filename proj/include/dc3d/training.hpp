#pragma once

#include <vector>

#include "dc3d/model.hpp"
#include "dc3d/scene.hpp"
#include "dc3d/tensor.hpp"

namespace dc3d::training {

/// Weights of the combined objective: detection, orientation, description.
struct LossWeights {
  float alpha = 10.0f;
  float beta = 1.0f;
  float gamma = 0.1f;
};

struct TrainingConfig {
  float lr = 1e-3f;
  float weight_decay = 1e-5f;
  int max_iterations = 5000;
  std::uint64_t seed = 0;
  int k_neighbors = 10;
  int graph_steps = 2;
  int max_proposals = scene::kMaxProposals;
  bool augmentation = true;
  bool use_detections = false;
  bool use_attention = true;
  bool use_graph = true;
  LossWeights weights;
  int vocab_min_count = 1;
  // When > 0, teacher-forced accuracy over the training set is measured
  // every `accuracy_check_interval` iterations and training stops early once
  // it reaches `accuracy_target`.
  int accuracy_check_interval = 0;
  double accuracy_target = 1.0;
};

/// Mean cross entropy of the 6-way angular-deviation logits over unmasked
/// edges; exactly zero when the mask leaves nothing. Labels outside {0..5}
/// raise ArgumentError.
diff::Tensor orientation_loss(diff::Tape* tape, const std::vector<diff::Tensor>& logits,
                              const std::vector<int>& labels, const std::vector<bool>& mask);

/// alpha*l_det + beta*l_ad + gamma*l_des.
diff::Tensor combined_loss(diff::Tape* tape, float l_det, const diff::Tensor& l_ad,
                           const diff::Tensor& l_des, const LossWeights& w);
double combined_loss(double l_det, double l_ad, double l_des, const LossWeights& w);

/// Index of the valid proposal with the largest IoU against the ground-truth
/// box; ties keep the lower index. SelectionError when no proposal is valid.
int select_training_proposal(const scene::ProposalSet& proposals, const geom::Box3& gt);

struct LossParts {
  double total = 0.0;
  double detection = 0.0;
  double orientation = 0.0;
  double description = 0.0;
};

/// Full per-scene objective: graph propagation, per-object teacher-forced
/// description losses on the best-IoU proposals, orientation loss over
/// unmasked edges, combined with the loss weights.
diff::Tensor scene_loss(diff::Tape* tape, const scene::Scene& scn, model::Model& model,
                        const TrainingConfig& cfg, LossParts* parts = nullptr);

struct TrainResult {
  std::vector<LossParts> iterations;
  int completed_iterations = 0;
  double final_accuracy = 0.0;
};

/// Deterministic training loop: iteration i trains on scene i mod N with one
/// Adam step per scene. Augmentation draws from a per-iteration substream of
/// cfg.seed.
TrainResult train(const std::vector<scene::Scene>& scenes, model::Model& model,
                  diff::AdamState& opt_state, const TrainingConfig& cfg);

/// Teacher-forced argmax accuracy over all (object, caption) pairs.
double teacher_forced_accuracy(const std::vector<scene::Scene>& scenes, model::Model& model,
                               const TrainingConfig& cfg);

}  // namespace dc3d::training
