#pragma once

#include <string>
#include <vector>

#include "dc3d/scene.hpp"

namespace dc3d::retrieval {

struct RetrievalEntry {
  std::vector<float> feature;  // 128 entries
  std::string caption;
};

/// (feature, caption) pairs from a training split, one entry per
/// (object, caption) pair in scene/object/caption order.
struct RetrievalIndex {
  std::vector<RetrievalEntry> entries;
};

RetrievalIndex build_retrieval_index(const std::vector<scene::Scene>& scenes);

/// Caption of the entry with the highest cosine similarity to the query;
/// ties keep the lower index and zero-norm vectors read as similarity 0.
std::string retrieve_caption(const std::vector<float>& query, const RetrievalIndex& index);

}  // namespace dc3d::retrieval
