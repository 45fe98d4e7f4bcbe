#include "dc3d/model.hpp"

namespace dc3d::model {

using diff::Tensor;

std::vector<std::pair<std::string, Tensor*>> Model::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  if (config.use_graph) {
    for (auto& kv : graph_params.named_parameters()) out.push_back(kv);
  }
  for (auto& kv : captioner_params.named_parameters()) out.push_back(kv);
  return out;
}

Model init_model(const ModelConfig& config, const scene::Vocabulary& vocab,
                 const scene::EmbeddingTable& embeddings, std::uint64_t seed) {
  Model m;
  m.config = config;
  m.config.vocab_size = vocab.size();
  m.vocab = vocab;
  Rng rng(seed);
  m.graph_params = graph::make_graph_params(config.graph_steps, rng);
  captioner::CaptionerConfig cap_cfg;
  cap_cfg.vocab_size = vocab.size();
  cap_cfg.use_attention = config.use_attention;
  cap_cfg.attention_on_updated_h1 = config.attention_on_updated_h1;
  cap_cfg.max_tokens = config.max_tokens;
  m.captioner_params = captioner::make_captioner_params(cap_cfg, embeddings.table, rng);
  return m;
}

SceneContext scene_forward(diff::Tape* tape, const scene::ProposalSet& proposals, Model& model) {
  const int m = static_cast<int>(proposals.items.size());
  if (m == 0) throw ArgumentError("scene_forward: empty proposal set");

  std::vector<float> features;
  features.reserve(static_cast<std::size_t>(m) * scene::kFeatureDim);
  std::vector<geom::Vec3> centers;
  std::vector<bool> valid;
  for (const auto& p : proposals.items) {
    if (static_cast<int>(p.feature.size()) != scene::kFeatureDim) {
      throw DimensionError("proposal feature width must be 128");
    }
    features.insert(features.end(), p.feature.begin(), p.feature.end());
    centers.push_back(p.center);
    valid.push_back(p.objectness > 0.5f);
  }

  SceneContext ctx;
  ctx.valid = valid;
  Tensor node_features({m, scene::kFeatureDim}, std::move(features), false);
  ctx.scene_graph = graph::build_scene_graph(node_features, centers, valid, model.config.k_neighbors);
  const int steps = model.config.use_graph ? model.config.graph_steps : 0;
  ctx.propagated = graph::propagate(tape, ctx.scene_graph, model.graph_params, steps);
  return ctx;
}

captioner::AttentionContext attention_context_for(diff::Tape* tape, const SceneContext& ctx,
                                                  Model& model, int proposal_index) {
  return captioner::build_attention_context(tape, ctx.propagated.enhanced, ctx.scene_graph.edges,
                                            ctx.propagated.relations, proposal_index);
}

std::vector<ProposalCaption> caption_proposals(const scene::ProposalSet& proposals, Model& model) {
  SceneContext ctx = scene_forward(nullptr, proposals, model);
  std::vector<ProposalCaption> out;
  for (int i = 0; i < static_cast<int>(proposals.items.size()); ++i) {
    if (!ctx.valid[static_cast<std::size_t>(i)]) continue;
    const auto& p = proposals.items[static_cast<std::size_t>(i)];
    captioner::AttentionContext attn = attention_context_for(nullptr, ctx, model, i);
    ProposalCaption pc;
    pc.box = p.box();
    pc.semantic_class = p.semantic_class;
    pc.objectness = p.objectness;
    pc.tokens = captioner::generate(attn, model.captioner_params);
    pc.caption = scene::decode_caption(pc.tokens, model.vocab);
    pc.proposal_index = i;
    out.push_back(std::move(pc));
  }
  return out;
}

}  // namespace dc3d::model
