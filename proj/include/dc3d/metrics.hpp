#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dc3d/geometry.hpp"

namespace dc3d::metrics {

using TokenList = std::vector<std::string>;
using RefSet = std::vector<TokenList>;

/// BLEU-4: geometric mean of clipped n-gram precisions (n = 1..4) times the
/// brevity penalty; no smoothing, so any zero precision zeroes the score.
/// An empty candidate scores 0.
double bleu4(const TokenList& candidate, const RefSet& refs);

/// ROUGE-L: LCS-based F-measure with beta = 1.2, maximum over references.
double rouge_l(const TokenList& candidate, const RefSet& refs);

/// METEOR, exact-match variant (no stemming or synonyms): unigram precision
/// and recall from a greedy left-to-right alignment, F = 10PR/(R+9P),
/// fragmentation penalty 0.5*(chunks/matches)^3, maximum over references.
double meteor(const TokenList& candidate, const RefSet& refs);

/// CIDEr-D over a fixed evaluation corpus: tf-idf n-gram cosine similarity
/// (n = 1..4) with hypothesis-count clipping and a Gaussian length penalty
/// (sigma = 6), averaged over n and references, scaled by 10. The idf table
/// comes from the reference corpus given at construction.
class CiderScorer {
 public:
  explicit CiderScorer(const std::vector<RefSet>& refs_per_object);
  double score(std::size_t object_index, const TokenList& candidate) const;
  /// Scores every candidate against its own reference set.
  std::vector<double> score_all(const std::vector<TokenList>& candidates) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

std::vector<double> cider(const std::vector<TokenList>& candidates,
                          const std::vector<RefSet>& refs_per_object);

/// Best-IoU prediction per ground-truth box; `prediction` is -1 with IoU 0
/// when there are no predictions. A prediction may serve several GTs.
struct Assignment {
  int prediction = -1;
  double iou = 0.0;
};
std::vector<Assignment> assign_predictions(const std::vector<geom::Box3>& pred_boxes,
                                           const std::vector<geom::Box3>& gt_boxes);

/// (1/N) * sum of m_i over objects whose IoU strictly exceeds k.
double m_at_kiou(const std::vector<double>& scores, const std::vector<double>& ious, double k);

struct ClassedDetection {
  geom::Box3 box;
  int semantic_class = 0;
  float score = 0.0f;
};
struct ClassedTruth {
  geom::Box3 box;
  int semantic_class = 0;
};

/// Mean average precision at one IoU threshold: per class, score-ranked
/// greedy one-to-one matching at IoU > threshold and all-recall-point
/// interpolated AP, averaged over the classes present in the ground truth.
double map_at_iou(const std::vector<ClassedDetection>& predictions,
                  const std::vector<ClassedTruth>& ground_truth, double iou_threshold);

/// (score, is_true_positive) pairs from greedy matching in one scene/class
/// group; lets callers pool matches across scenes before computing AP.
std::vector<std::pair<float, bool>> greedy_matches(const std::vector<ClassedDetection>& predictions,
                                                   const std::vector<ClassedTruth>& ground_truth,
                                                   double iou_threshold);

/// All-recall-point interpolated AP from pooled (score, tp) pairs.
double average_precision(std::vector<std::pair<float, bool>> matches, int num_ground_truth);

}  // namespace dc3d::metrics
