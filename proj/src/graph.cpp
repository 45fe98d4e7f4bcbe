#include "dc3d/graph.hpp"

#include <algorithm>
#include <map>

namespace dc3d::graph {

using diff::Tensor;

std::vector<std::pair<std::string, Tensor*>> GraphParams::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const std::string prefix = "graph.step" + std::to_string(s) + ".";
    out.emplace_back(prefix + "w1", &steps[s].w1);
    out.emplace_back(prefix + "b1", &steps[s].b1);
    out.emplace_back(prefix + "w2", &steps[s].w2);
    out.emplace_back(prefix + "b2", &steps[s].b2);
  }
  out.emplace_back("graph.relation.w1", &relation.w1);
  out.emplace_back("graph.relation.b1", &relation.b1);
  out.emplace_back("graph.relation.w2", &relation.w2);
  out.emplace_back("graph.relation.b2", &relation.b2);
  out.emplace_back("graph.orient_w", &orient_w);
  out.emplace_back("graph.orient_b", &orient_b);
  return out;
}

namespace {

MessageMlp make_message_mlp(Rng& rng) {
  MessageMlp mlp;
  mlp.w1 = Tensor::glorot(2 * kMessageDim, kMessageDim, rng);
  mlp.b1 = Tensor::zeros({kMessageDim}, true);
  mlp.w2 = Tensor::glorot(kMessageDim, kMessageDim, rng);
  mlp.b2 = Tensor::zeros({kMessageDim}, true);
  return mlp;
}

}  // namespace

GraphParams make_graph_params(int propagation_steps, Rng& rng) {
  GraphParams p;
  for (int s = 0; s < propagation_steps; ++s) p.steps.push_back(make_message_mlp(rng));
  p.relation = make_message_mlp(rng);
  p.orient_w = Tensor::glorot(kMessageDim, kOrientationBins, rng);
  p.orient_b = Tensor::zeros({kOrientationBins}, true);
  return p;
}

Tensor message(diff::Tape* tape, const Tensor& g_i, const Tensor& g_j, const MessageMlp& mlp) {
  if (g_i.rank() != 1 || g_i.dim(0) != kMessageDim || g_j.rank() != 1 || g_j.dim(0) != kMessageDim) {
    throw DimensionError("message expects two 128-d node features");
  }
  Tensor input = diff::concat(tape, {g_i, diff::sub(tape, g_j, g_i)}, 0);
  Tensor hidden = diff::tanh(tape, diff::add(tape, diff::vecmat(tape, input, mlp.w1), mlp.b1));
  return diff::add(tape, diff::vecmat(tape, hidden, mlp.w2), mlp.b2);
}

Tensor aggregate(diff::Tape* tape, const std::vector<Tensor>& messages) {
  if (messages.empty()) return Tensor::zeros({kMessageDim});
  // Summing in tensor-identity order makes the float sum independent of the
  // caller's list order.
  std::vector<std::size_t> order(messages.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t l, std::size_t r) { return messages[l].id() < messages[r].id(); });
  Tensor acc = messages[order.front()];
  for (std::size_t i = 1; i < order.size(); ++i) acc = diff::add(tape, acc, messages[order[i]]);
  return acc;
}

PropagateResult propagate(diff::Tape* tape, const SceneGraph& graph, const GraphParams& params,
                          int steps) {
  if (steps < 0) throw ArgumentError("propagate: negative step count");
  if (steps > static_cast<int>(params.steps.size())) {
    throw ArgumentError("propagate: more steps than per-step message layers");
  }
  const int m = graph.node_features.dim(0);
  for (const auto& e : graph.edges) {
    if (e.src < 0 || e.src >= m || e.dst < 0 || e.dst >= m) {
      throw ArgumentError("propagate: edge endpoint out of range");
    }
  }

  std::vector<Tensor> features;
  features.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) features.push_back(diff::row(tape, graph.node_features, i));

  for (int step = 0; step < steps; ++step) {
    const MessageMlp& mlp = params.steps[static_cast<std::size_t>(step)];
    std::vector<std::vector<Tensor>> inbox(static_cast<std::size_t>(m));
    for (const auto& e : graph.edges) {
      inbox[static_cast<std::size_t>(e.src)].push_back(
          message(tape, features[static_cast<std::size_t>(e.src)], features[static_cast<std::size_t>(e.dst)], mlp));
    }
    std::vector<Tensor> next;
    next.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) next.push_back(aggregate(tape, inbox[static_cast<std::size_t>(i)]));
    features = std::move(next);
  }

  PropagateResult result;
  result.enhanced = steps == 0 ? graph.node_features : diff::stack_rows(tape, features);
  if (steps > 0) {
    result.relations.reserve(graph.edges.size());
    for (const auto& e : graph.edges) {
      result.relations.push_back(message(tape, features[static_cast<std::size_t>(e.src)],
                                         features[static_cast<std::size_t>(e.dst)], params.relation));
    }
  }
  return result;
}

Tensor orientation_head(diff::Tape* tape, const Tensor& relation, const GraphParams& params) {
  return diff::add(tape, diff::vecmat(tape, relation, params.orient_w), params.orient_b);
}

SceneGraph build_scene_graph(const Tensor& node_features, const std::vector<geom::Vec3>& centers,
                             const std::vector<bool>& objectness, int k_neighbors) {
  const int m = node_features.dim(0);
  if (static_cast<int>(centers.size()) != m || static_cast<int>(objectness.size()) != m) {
    throw ArgumentError("build_scene_graph: centers/objectness must match node count");
  }
  SceneGraph g;
  g.node_features = node_features;
  g.objectness = objectness;

  std::vector<int> valid;
  std::vector<geom::Vec3> valid_centers;
  for (int i = 0; i < m; ++i) {
    if (objectness[static_cast<std::size_t>(i)]) {
      valid.push_back(i);
      valid_centers.push_back(centers[static_cast<std::size_t>(i)]);
    }
  }
  if (valid.size() >= 2) {
    for (const auto& e : geom::knn_graph(valid_centers, k_neighbors)) {
      g.edges.push_back({valid[static_cast<std::size_t>(e.src)], valid[static_cast<std::size_t>(e.dst)]});
    }
  }
  return g;
}

}  // namespace dc3d::graph
