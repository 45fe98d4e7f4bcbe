#pragma once

#include <string>
#include <vector>

#include "dc3d/captioner.hpp"
#include "dc3d/graph.hpp"
#include "dc3d/scene.hpp"
#include "dc3d/vocab.hpp"

namespace dc3d::model {

struct ModelConfig {
  int k_neighbors = 10;
  int graph_steps = 2;
  bool use_graph = true;
  bool use_attention = true;
  bool attention_on_updated_h1 = false;
  int vocab_size = 0;
  int max_tokens = scene::kMaxCaptionTokens;
};

/// Relational graph + captioner with their shared vocabulary.
struct Model {
  ModelConfig config;
  scene::Vocabulary vocab;
  graph::GraphParams graph_params;
  captioner::CaptionerParams captioner_params;

  /// Trainable parameters in a stable order (frozen embedding excluded).
  std::vector<std::pair<std::string, diff::Tensor*>> named_parameters();
};

Model init_model(const ModelConfig& config, const scene::Vocabulary& vocab,
                 const scene::EmbeddingTable& embeddings, std::uint64_t seed);

/// Graph construction + propagation over one proposal set.
struct SceneContext {
  graph::SceneGraph scene_graph;
  graph::PropagateResult propagated;
  std::vector<bool> valid;  // objectness mask actually used
};

SceneContext scene_forward(diff::Tape* tape, const scene::ProposalSet& proposals, Model& model);

captioner::AttentionContext attention_context_for(diff::Tape* tape, const SceneContext& ctx,
                                                  Model& model, int proposal_index);

/// Box, class, objectness and greedily decoded caption for one proposal.
struct ProposalCaption {
  geom::Box3 box;
  int semantic_class = 0;
  float objectness = 1.0f;
  scene::TokenSequence tokens;
  std::string caption;
  int proposal_index = 0;
};

/// Decodes a caption for every valid proposal of the set.
std::vector<ProposalCaption> caption_proposals(const scene::ProposalSet& proposals, Model& model);

}  // namespace dc3d::model
