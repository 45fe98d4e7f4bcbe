#include "dc3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>

#include "dc3d/error.hpp"

namespace dc3d::metrics {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const TokenList& tokens, int n) {
  std::map<Ngram, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    Ngram g(tokens.begin() + static_cast<std::ptrdiff_t>(i),
            tokens.begin() + static_cast<std::ptrdiff_t>(i) + n);
    ++counts[g];
  }
  return counts;
}

void require_refs(const RefSet& refs, const char* op) {
  if (refs.empty()) throw ArgumentError(std::string(op) + " requires at least one reference");
}

}  // namespace

double bleu4(const TokenList& candidate, const RefSet& refs) {
  require_refs(refs, "bleu4");
  if (candidate.empty()) return 0.0;

  double log_precision_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    const auto cand_counts = ngram_counts(candidate, n);
    std::int64_t total = 0;
    for (const auto& [g, c] : cand_counts) total += c;
    if (total == 0) return 0.0;

    std::map<Ngram, int> max_ref;
    for (const auto& ref : refs) {
      for (const auto& [g, c] : ngram_counts(ref, n)) {
        auto it = max_ref.find(g);
        if (it == max_ref.end() || it->second < c) max_ref[g] = c;
      }
    }
    std::int64_t clipped = 0;
    for (const auto& [g, c] : cand_counts) {
      auto it = max_ref.find(g);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    if (clipped == 0) return 0.0;
    log_precision_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }

  // Brevity penalty against the reference length closest to the candidate
  // (ties to the shorter reference).
  const std::int64_t c = static_cast<std::int64_t>(candidate.size());
  std::int64_t r = static_cast<std::int64_t>(refs.front().size());
  for (const auto& ref : refs) {
    const std::int64_t len = static_cast<std::int64_t>(ref.size());
    if (std::llabs(len - c) < std::llabs(r - c) || (std::llabs(len - c) == std::llabs(r - c) && len < r)) {
      r = len;
    }
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_precision_sum / 4.0);
}

namespace {

int lcs_length(const TokenList& a, const TokenList& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1] == b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double rouge_l(const TokenList& candidate, const RefSet& refs) {
  require_refs(refs, "rouge_l");
  if (candidate.empty()) return 0.0;
  constexpr double kBeta = 1.2;
  double best = 0.0;
  for (const auto& ref : refs) {
    if (ref.empty()) continue;
    const int lcs = lcs_length(candidate, ref);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
    const double f = (1.0 + kBeta * kBeta) * p * r / (r + kBeta * kBeta * p);
    best = std::max(best, f);
  }
  return best;
}

double meteor(const TokenList& candidate, const RefSet& refs) {
  require_refs(refs, "meteor");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const auto& ref : refs) {
    if (ref.empty()) continue;
    // Greedy left-to-right exact alignment: each candidate token takes the
    // first unused matching reference position.
    std::vector<bool> used(ref.size(), false);
    std::vector<int> aligned(candidate.size(), -1);
    int matches = 0;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (!used[j] && ref[j] == candidate[i]) {
          used[j] = true;
          aligned[i] = static_cast<int>(j);
          ++matches;
          break;
        }
      }
    }
    if (matches == 0) continue;

    int chunks = 0;
    int prev_ref = -2;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (aligned[i] < 0) {
        prev_ref = -2;
        continue;
      }
      if (aligned[i] != prev_ref + 1) ++chunks;
      prev_ref = aligned[i];
    }

    const double p = static_cast<double>(matches) / static_cast<double>(candidate.size());
    const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = 0.5 * frag * frag * frag;
    best = std::max(best, f_mean * (1.0 - penalty));
  }
  return best;
}

struct CiderScorer::Impl {
  static constexpr int kMaxN = 4;
  static constexpr double kSigma = 6.0;

  std::vector<RefSet> refs;
  std::map<Ngram, int> doc_freq;
  double log_corpus = 0.0;

  struct Profile {
    std::array<std::map<Ngram, double>, kMaxN> vec;
    std::array<double, kMaxN> norm{};
    int length = 0;
  };

  Profile profile(const TokenList& tokens) const {
    Profile pf;
    pf.length = static_cast<int>(tokens.size());
    for (int n = 1; n <= kMaxN; ++n) {
      auto& v = pf.vec[static_cast<std::size_t>(n - 1)];
      for (const auto& [g, c] : ngram_counts(tokens, n)) {
        auto it = doc_freq.find(g);
        const double df = it == doc_freq.end() ? 0.0 : static_cast<double>(it->second);
        const double idf = log_corpus - std::log(std::max(1.0, df));
        v[g] = static_cast<double>(c) * idf;
      }
      double norm2 = 0.0;
      for (const auto& [g, w] : v) norm2 += w * w;
      pf.norm[static_cast<std::size_t>(n - 1)] = std::sqrt(norm2);
    }
    return pf;
  }

  double similarity(const Profile& hyp, const Profile& ref) const {
    const double delta = static_cast<double>(hyp.length - ref.length);
    const double length_penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
    double total = 0.0;
    for (int n = 0; n < kMaxN; ++n) {
      double val = 0.0;
      const auto& hv = hyp.vec[static_cast<std::size_t>(n)];
      const auto& rv = ref.vec[static_cast<std::size_t>(n)];
      for (const auto& [g, hw] : hv) {
        auto it = rv.find(g);
        if (it != rv.end()) val += std::min(hw, it->second) * it->second;
      }
      if (hyp.norm[static_cast<std::size_t>(n)] != 0.0 && ref.norm[static_cast<std::size_t>(n)] != 0.0) {
        val /= hyp.norm[static_cast<std::size_t>(n)] * ref.norm[static_cast<std::size_t>(n)];
      }
      total += val * length_penalty;
    }
    return total / kMaxN;
  }
};

CiderScorer::CiderScorer(const std::vector<RefSet>& refs_per_object) {
  if (refs_per_object.empty()) throw ArgumentError("cider requires a corpus of at least one object");
  auto impl = std::make_shared<Impl>();
  impl->refs = refs_per_object;
  impl->log_corpus = std::log(static_cast<double>(refs_per_object.size()));
  for (const auto& refs : refs_per_object) {
    std::set<Ngram> seen;
    for (const auto& ref : refs) {
      for (int n = 1; n <= Impl::kMaxN; ++n) {
        for (const auto& [g, c] : ngram_counts(ref, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) ++impl->doc_freq[g];
  }
  impl_ = std::move(impl);
}

double CiderScorer::score(std::size_t object_index, const TokenList& candidate) const {
  if (object_index >= impl_->refs.size()) throw ArgumentError("cider object index out of range");
  const auto& refs = impl_->refs[object_index];
  if (refs.empty()) return 0.0;
  const auto hyp = impl_->profile(candidate);
  double total = 0.0;
  for (const auto& ref : refs) total += impl_->similarity(hyp, impl_->profile(ref));
  return 10.0 * total / static_cast<double>(refs.size());
}

std::vector<double> CiderScorer::score_all(const std::vector<TokenList>& candidates) const {
  if (candidates.size() != impl_->refs.size()) {
    throw ArgumentError("cider candidate count must match the corpus");
  }
  std::vector<double> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) out.push_back(score(i, candidates[i]));
  return out;
}

std::vector<double> cider(const std::vector<TokenList>& candidates,
                          const std::vector<RefSet>& refs_per_object) {
  return CiderScorer(refs_per_object).score_all(candidates);
}

std::vector<Assignment> assign_predictions(const std::vector<geom::Box3>& pred_boxes,
                                           const std::vector<geom::Box3>& gt_boxes) {
  if (gt_boxes.empty()) throw ArgumentError("assign_predictions requires ground-truth boxes");
  std::vector<Assignment> out(gt_boxes.size());
  for (std::size_t i = 0; i < gt_boxes.size(); ++i) {
    for (std::size_t p = 0; p < pred_boxes.size(); ++p) {
      const double iou = geom::box_iou(pred_boxes[p], gt_boxes[i]);
      // Strict improvement keeps the lowest index on ties.
      if (out[i].prediction < 0 || iou > out[i].iou) {
        out[i].prediction = static_cast<int>(p);
        out[i].iou = iou;
      }
    }
  }
  return out;
}

double m_at_kiou(const std::vector<double>& scores, const std::vector<double>& ious, double k) {
  if (scores.size() != ious.size()) throw ArgumentError("m_at_kiou: score/iou length mismatch");
  if (scores.empty()) throw ArgumentError("m_at_kiou: empty object list");
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (ious[i] > k) total += scores[i];
  }
  return total / static_cast<double>(scores.size());
}

std::vector<std::pair<float, bool>> greedy_matches(const std::vector<ClassedDetection>& predictions,
                                                   const std::vector<ClassedTruth>& ground_truth,
                                                   double iou_threshold) {
  std::vector<int> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int l, int r) {
    if (predictions[static_cast<std::size_t>(l)].score != predictions[static_cast<std::size_t>(r)].score) {
      return predictions[static_cast<std::size_t>(l)].score > predictions[static_cast<std::size_t>(r)].score;
    }
    return l < r;
  });

  std::vector<bool> taken(ground_truth.size(), false);
  std::vector<std::pair<float, bool>> out;
  out.reserve(predictions.size());
  for (int pi : order) {
    const auto& pred = predictions[static_cast<std::size_t>(pi)];
    double best_iou = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (ground_truth[g].semantic_class != pred.semantic_class) continue;
      const double iou = geom::box_iou(pred.box, ground_truth[g].box);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = static_cast<int>(g);
      }
    }
    const bool tp = best_gt >= 0 && best_iou > iou_threshold && !taken[static_cast<std::size_t>(best_gt)];
    if (tp) taken[static_cast<std::size_t>(best_gt)] = true;
    out.emplace_back(pred.score, tp);
  }
  return out;
}

double average_precision(std::vector<std::pair<float, bool>> matches, int num_ground_truth) {
  if (num_ground_truth <= 0) throw ArgumentError("average_precision: no ground truth");
  std::sort(matches.begin(), matches.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& [score, is_tp] : matches) {
    (void)score;
    if (is_tp) ++tp; else ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_ground_truth));
  }
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) {
    precision[static_cast<std::size_t>(i)] =
        std::max(precision[static_cast<std::size_t>(i)], precision[static_cast<std::size_t>(i + 1)]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double map_at_iou(const std::vector<ClassedDetection>& predictions,
                  const std::vector<ClassedTruth>& ground_truth, double iou_threshold) {
  std::set<int> classes;
  for (const auto& gt : ground_truth) {
    if (gt.semantic_class < 0 || gt.semantic_class >= 18) {
      throw ArgumentError("map_at_iou: class out of range");
    }
    classes.insert(gt.semantic_class);
  }
  if (classes.empty()) return 0.0;

  double total = 0.0;
  for (int cls : classes) {
    std::vector<ClassedDetection> preds_c;
    std::vector<ClassedTruth> gts_c;
    for (const auto& p : predictions) {
      if (p.semantic_class == cls) preds_c.push_back(p);
    }
    for (const auto& g : ground_truth) {
      if (g.semantic_class == cls) gts_c.push_back(g);
    }
    total += average_precision(greedy_matches(preds_c, gts_c, iou_threshold),
                               static_cast<int>(gts_c.size()));
  }
  return total / static_cast<double>(classes.size());
}

}  // namespace dc3d::metrics
