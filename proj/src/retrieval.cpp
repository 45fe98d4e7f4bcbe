#include "dc3d/retrieval.hpp"

#include <cmath>

namespace dc3d::retrieval {

RetrievalIndex build_retrieval_index(const std::vector<scene::Scene>& scenes) {
  RetrievalIndex index;
  for (const auto& scn : scenes) {
    for (const auto& object : scn.objects) {
      for (const auto& caption : object.captions) {
        index.entries.push_back({object.feature, caption});
      }
    }
  }
  return index;
}

namespace {

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw DimensionError("retrieval feature width mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::string retrieve_caption(const std::vector<float>& query, const RetrievalIndex& index) {
  if (index.entries.empty()) throw ArgumentError("retrieval index is empty");
  std::size_t best = 0;
  double best_sim = cosine(query, index.entries.front().feature);
  for (std::size_t i = 1; i < index.entries.size(); ++i) {
    const double sim = cosine(query, index.entries[i].feature);
    if (sim > best_sim) {
      best_sim = sim;
      best = i;
    }
  }
  return index.entries[best].caption;
}

}  // namespace dc3d::retrieval
