#include "dc3d/training.hpp"

#include <algorithm>
#include <cmath>

namespace dc3d::training {

using diff::Tensor;

Tensor orientation_loss(diff::Tape* tape, const std::vector<Tensor>& logits,
                        const std::vector<int>& labels, const std::vector<bool>& mask) {
  if (logits.size() != labels.size() || labels.size() != mask.size()) {
    throw ArgumentError("orientation_loss: logits/labels/mask lengths differ");
  }
  for (int label : labels) {
    if (label < 0 || label >= graph::kOrientationBins) {
      throw ArgumentError("orientation label out of {0..5}");
    }
  }
  Tensor total = Tensor::zeros({1});
  int counted = 0;
  for (std::size_t e = 0; e < logits.size(); ++e) {
    if (!mask[e]) continue;
    total = diff::add(tape, total, diff::cross_entropy(tape, logits[e], labels[e]));
    ++counted;
  }
  if (counted == 0) return Tensor::zeros({1});
  return diff::scale(tape, total, 1.0f / static_cast<float>(counted));
}

Tensor combined_loss(diff::Tape* tape, float l_det, const Tensor& l_ad, const Tensor& l_des,
                     const LossWeights& w) {
  Tensor weighted = diff::add(tape, diff::scale(tape, l_ad, w.beta), diff::scale(tape, l_des, w.gamma));
  return diff::add(tape, weighted, Tensor::scalar(w.alpha * l_det));
}

double combined_loss(double l_det, double l_ad, double l_des, const LossWeights& w) {
  return w.alpha * l_det + w.beta * l_ad + w.gamma * l_des;
}

int select_training_proposal(const scene::ProposalSet& proposals, const geom::Box3& gt) {
  int best = -1;
  double best_iou = -1.0;
  for (std::size_t i = 0; i < proposals.items.size(); ++i) {
    const auto& p = proposals.items[i];
    if (!(p.objectness > 0.5f)) continue;
    const double iou = geom::box_iou(p.box(), gt);
    if (iou > best_iou) {
      best_iou = iou;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw SelectionError("no valid proposal to supervise against");
  return best;
}

namespace {

// Which ground-truth object each proposal stands for: identity for oracle
// proposals, best-IoU above 0.25 for detections, -1 otherwise.
std::vector<int> map_proposals_to_objects(const scene::ProposalSet& ps, const scene::Scene& scn,
                                          bool oracle_mode) {
  std::vector<int> mapping(ps.items.size(), -1);
  if (oracle_mode) {
    for (std::size_t i = 0; i < ps.items.size() && i < scn.objects.size(); ++i) {
      mapping[i] = static_cast<int>(i);
    }
    return mapping;
  }
  for (std::size_t i = 0; i < ps.items.size(); ++i) {
    double best_iou = 0.25;
    for (std::size_t o = 0; o < scn.objects.size(); ++o) {
      const double iou = geom::box_iou(ps.items[i].box(), scn.objects[o].box());
      if (iou > best_iou) {
        best_iou = iou;
        mapping[i] = static_cast<int>(o);
      }
    }
  }
  return mapping;
}

}  // namespace

Tensor scene_loss(diff::Tape* tape, const scene::Scene& scn, model::Model& model,
                  const TrainingConfig& cfg, LossParts* parts) {
  const bool oracle_mode = !(cfg.use_detections && scn.has_detections);
  scene::ProposalSet ps = oracle_mode ? scene::oracle_proposals(scn)
                                      : scene::detected_proposals(scn, cfg.max_proposals);
  model::SceneContext ctx = model::scene_forward(tape, ps, model);

  Tensor desc_total = Tensor::zeros({1});
  int caption_count = 0;
  for (const auto& object : scn.objects) {
    if (object.captions.empty()) continue;
    const int selected = select_training_proposal(ps, object.box());
    captioner::AttentionContext attn = model::attention_context_for(tape, ctx, model, selected);
    for (const auto& caption : object.captions) {
      const scene::TokenSequence gt = scene::encode_caption(caption, model.vocab);
      desc_total = diff::add(
          tape, desc_total, captioner::teacher_forced_loss(tape, attn, model.captioner_params, gt));
      ++caption_count;
    }
  }
  Tensor l_des = caption_count > 0
                     ? diff::scale(tape, desc_total, 1.0f / static_cast<float>(caption_count))
                     : Tensor::zeros({1});

  Tensor l_ad = Tensor::zeros({1});
  if (!ctx.propagated.relations.empty()) {
    const std::vector<int> mapping = map_proposals_to_objects(ps, scn, oracle_mode);
    std::vector<Tensor> logits;
    std::vector<int> labels;
    std::vector<bool> mask;
    logits.reserve(ctx.scene_graph.edges.size());
    for (std::size_t e = 0; e < ctx.scene_graph.edges.size(); ++e) {
      const auto& edge = ctx.scene_graph.edges[e];
      logits.push_back(graph::orientation_head(tape, ctx.propagated.relations[e], model.graph_params));
      // The mask is decided before any label is read, so labels of masked
      // objects are never touched.
      const int oi = mapping[static_cast<std::size_t>(edge.src)];
      const int oj = mapping[static_cast<std::size_t>(edge.dst)];
      bool usable = oi >= 0 && oj >= 0 && !scn.objects[static_cast<std::size_t>(oi)].orientation_masked &&
                    !scn.objects[static_cast<std::size_t>(oj)].orientation_masked;
      int label = 0;
      if (usable) {
        const auto& src_labels = scn.objects[static_cast<std::size_t>(oi)].orientation_labels;
        auto it = src_labels.find(scn.objects[static_cast<std::size_t>(oj)].id);
        if (it == src_labels.end()) {
          usable = false;
        } else {
          label = geom::orientation_bin(it->second);
        }
      }
      labels.push_back(label);
      mask.push_back(usable);
    }
    l_ad = orientation_loss(tape, logits, labels, mask);
  }

  Tensor total = combined_loss(tape, scn.detection_loss, l_ad, l_des, cfg.weights);
  if (parts) {
    parts->detection = scn.detection_loss;
    parts->orientation = l_ad.item();
    parts->description = l_des.item();
    parts->total = total.item();
  }
  return total;
}

TrainResult train(const std::vector<scene::Scene>& scenes, model::Model& model,
                  diff::AdamState& opt_state, const TrainingConfig& cfg) {
  if (scenes.empty()) throw ArgumentError("train: empty dataset");
  if (cfg.lr <= 0.0f) throw ArgumentError("train: learning rate must be positive");

  diff::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;

  auto named = model.named_parameters();
  std::vector<Tensor*> slots;
  slots.reserve(named.size());
  for (auto& kv : named) slots.push_back(kv.second);

  const Rng base(cfg.seed);
  TrainResult result;
  result.iterations.reserve(static_cast<std::size_t>(cfg.max_iterations));
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const scene::Scene& raw = scenes[static_cast<std::size_t>(it) % scenes.size()];
    scene::Scene augmented;
    const scene::Scene* active = &raw;
    if (cfg.augmentation) {
      Rng stream = base.fork(static_cast<std::uint64_t>(it));
      augmented = scene::augment_scene(raw, stream.next_u64());
      active = &augmented;
    }

    diff::Tape tape;
    LossParts parts;
    Tensor loss = scene_loss(&tape, *active, model, cfg, &parts);
    diff::GradientMap grads = tape.backward(loss);
    diff::adam_step(slots, grads, opt_state, adam_cfg);
    result.iterations.push_back(parts);
    result.completed_iterations = it + 1;

    if (cfg.accuracy_check_interval > 0 && (it + 1) % cfg.accuracy_check_interval == 0) {
      result.final_accuracy = teacher_forced_accuracy(scenes, model, cfg);
      if (result.final_accuracy >= cfg.accuracy_target) break;
    }
  }
  return result;
}

double teacher_forced_accuracy(const std::vector<scene::Scene>& scenes, model::Model& model,
                               const TrainingConfig& cfg) {
  std::int64_t hits = 0, total = 0;
  for (const auto& scn : scenes) {
    const bool oracle_mode = !(cfg.use_detections && scn.has_detections);
    scene::ProposalSet ps = oracle_mode ? scene::oracle_proposals(scn)
                                        : scene::detected_proposals(scn, cfg.max_proposals);
    model::SceneContext ctx = model::scene_forward(nullptr, ps, model);
    for (const auto& object : scn.objects) {
      if (object.captions.empty()) continue;
      const int selected = select_training_proposal(ps, object.box());
      captioner::AttentionContext attn = model::attention_context_for(nullptr, ctx, model, selected);
      for (const auto& caption : object.captions) {
        const scene::TokenSequence gt = scene::encode_caption(caption, model.vocab);
        auto [h, t] = captioner::teacher_forced_hits(attn, model.captioner_params, gt);
        hits += h;
        total += t;
      }
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace dc3d::training
