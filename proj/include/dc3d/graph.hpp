#pragma once

#include <vector>

#include "dc3d/geometry.hpp"
#include "dc3d/tensor.hpp"

namespace dc3d::graph {

constexpr int kMessageDim = 128;
constexpr int kOrientationBins = 6;

/// Proposal graph: per-node 128-d features, directed KNN edges among valid
/// nodes, and the objectness mask. Masked nodes must stay edge-free.
struct SceneGraph {
  diff::Tensor node_features;       // [M, 128]
  std::vector<geom::Edge> edges;
  std::vector<bool> objectness;     // size M
};

/// Two-layer message MLP: 256 -> 128 (relu) -> 128.
struct MessageMlp {
  diff::Tensor w1, b1, w2, b2;
};

/// Parameters of the relational module: one untied message MLP per
/// propagation step, one extra message layer producing relation features,
/// and the 128 -> 6 angular-deviation head.
struct GraphParams {
  std::vector<MessageMlp> steps;
  MessageMlp relation;
  diff::Tensor orient_w;  // [128, 6]
  diff::Tensor orient_b;  // [6]

  std::vector<std::pair<std::string, diff::Tensor*>> named_parameters();
};

GraphParams make_graph_params(int propagation_steps, Rng& rng);

/// One message g_{i,j} = mlp([g_i, g_j - g_i]).
diff::Tensor message(diff::Tape* tape, const diff::Tensor& g_i, const diff::Tensor& g_j,
                     const MessageMlp& mlp);

/// Elementwise sum of incoming messages; the empty set sums to zero.
diff::Tensor aggregate(diff::Tape* tape, const std::vector<diff::Tensor>& messages);

struct PropagateResult {
  diff::Tensor enhanced;                 // V^tau, [M, 128]
  std::vector<diff::Tensor> relations;   // one 128-d feature per graph edge
};

/// Runs `steps` rounds of message passing + sum aggregation (features are
/// replaced by the aggregate each round), then one extra message layer over
/// the final features for the per-edge relation output. steps == 0 returns
/// the input features unchanged with no relations (the graph-free ablation).
PropagateResult propagate(diff::Tape* tape, const SceneGraph& graph, const GraphParams& params,
                          int steps);

/// 6 unnormalized angular-deviation logits for one relation feature.
diff::Tensor orientation_head(diff::Tape* tape, const diff::Tensor& relation,
                              const GraphParams& params);

/// Graph over the valid (unmasked) nodes only: KNN edges are computed among
/// valid node centers and reindexed back to the full node set, so masked
/// nodes end up isolated.
SceneGraph build_scene_graph(const diff::Tensor& node_features,
                             const std::vector<geom::Vec3>& centers,
                             const std::vector<bool>& objectness, int k_neighbors);

}  // namespace dc3d::graph
