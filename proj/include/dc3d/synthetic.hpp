#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dc3d/scene.hpp"
#include "dc3d/vocab.hpp"

namespace dc3d::synth {

/// Generator settings for the desk-scale relation-caption dataset. Each
/// object gets the template caption "the <class> is next to the <class>."
/// naming its own class and the class of its nearest neighbor by center
/// distance, so captions can only be completed from spatial context.
struct SyntheticSpec {
  int num_scenes = 20;
  int objects_per_scene = 5;
  std::uint64_t seed = 0;
  int num_classes = 8;         // drawn from the 18 benchmark classes
  float room_extent = 8.0f;    // horizontal room size in meters
  float feature_noise = 0.05f;
  float mask_fraction = 0.0f;  // objects excluded from the orientation loss
  std::string id_prefix = "synthetic";
};

const std::vector<std::string>& class_names();

std::vector<scene::Scene> make_synthetic_scenes(const SyntheticSpec& spec);

/// Deterministic pseudo-embedding rows (300-d, unit scale) for every content
/// token of the given vocabulary, in the embedding file format.
std::string synthetic_embeddings_text(const scene::Vocabulary& vocab, std::uint64_t seed);

/// Vocabulary over all captions of the scenes (min_count 1).
scene::Vocabulary vocabulary_of(const std::vector<scene::Scene>& scenes);

}  // namespace dc3d::synth
