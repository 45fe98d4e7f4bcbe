#include "dc3d/captioner.hpp"

#include <algorithm>

namespace dc3d::captioner {

using diff::Tensor;
using scene::Vocabulary;

std::vector<std::pair<std::string, Tensor*>> CaptionerParams::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_gru = [&out](const std::string& prefix, diff::GruParams& g) {
    out.emplace_back(prefix + "w_update", &g.w_update);
    out.emplace_back(prefix + "u_update", &g.u_update);
    out.emplace_back(prefix + "b_update", &g.b_update);
    out.emplace_back(prefix + "w_reset", &g.w_reset);
    out.emplace_back(prefix + "u_reset", &g.u_reset);
    out.emplace_back(prefix + "b_reset", &g.b_reset);
    out.emplace_back(prefix + "w_cand", &g.w_cand);
    out.emplace_back(prefix + "u_cand", &g.u_cand);
    out.emplace_back(prefix + "b_cand", &g.b_cand);
  };
  add_gru("captioner.fusion.", fusion);
  out.emplace_back("captioner.attn_value", &attn_value);
  out.emplace_back("captioner.attn_hidden", &attn_hidden);
  out.emplace_back("captioner.attn_score", &attn_score);
  out.emplace_back("captioner.fuse2_w", &fuse2_w);
  out.emplace_back("captioner.fuse2_b", &fuse2_b);
  add_gru("captioner.language.", language);
  out.emplace_back("captioner.out_w", &out_w);
  out.emplace_back("captioner.out_b", &out_b);
  return out;
}

CaptionerParams make_captioner_params(const CaptionerConfig& config, const Tensor& embedding,
                                      Rng& rng) {
  if (embedding.rank() != 2 || embedding.dim(1) != scene::kEmbeddingDim) {
    throw DimensionError("captioner embedding table must be [vocab, 300]");
  }
  if (embedding.dim(0) != config.vocab_size) {
    throw DimensionError("embedding rows do not match the configured vocabulary size");
  }
  CaptionerParams p;
  p.config = config;
  p.embedding = embedding;
  const int fusion_in = kHiddenDim + kFeatureDim + scene::kEmbeddingDim;
  p.fusion = diff::make_gru_params(fusion_in, kHiddenDim, rng);
  p.attn_value = Tensor::glorot(kFeatureDim, kFeatureDim, rng);
  p.attn_hidden = Tensor::glorot(kHiddenDim, kFeatureDim, rng);
  p.attn_score = Tensor::glorot(kFeatureDim, 1, rng);
  p.fuse2_w = Tensor::glorot(kHiddenDim + kFeatureDim, kHiddenDim, rng);
  p.fuse2_b = Tensor::zeros({kHiddenDim}, true);
  p.language = diff::make_gru_params(kHiddenDim, kHiddenDim, rng);
  p.out_w = Tensor::glorot(kHiddenDim, config.vocab_size, rng);
  p.out_b = Tensor::zeros({config.vocab_size}, true);
  return p;
}

AttentionContext build_attention_context(diff::Tape* tape, const Tensor& enhanced,
                                         const std::vector<geom::Edge>& edges,
                                         const std::vector<diff::Tensor>& relations, int target) {
  if (enhanced.rank() != 2 || enhanced.dim(1) != kFeatureDim) {
    throw DimensionError("attention context expects [M, 128] enhanced features");
  }
  const int m = enhanced.dim(0);
  if (target < 0 || target >= m) throw ArgumentError("attention target index out of range");
  if (relations.size() != edges.size()) {
    throw ArgumentError("relations must align with the edge list");
  }

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) rows.push_back(diff::row(tape, enhanced, i));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].src != target) continue;
    const int j = edges[e].dst;
    rows[static_cast<std::size_t>(j)] = diff::add(tape, rows[static_cast<std::size_t>(j)], relations[e]);
  }

  AttentionContext ctx;
  ctx.context = diff::stack_rows(tape, rows);
  ctx.target = target;
  ctx.target_feature = rows[static_cast<std::size_t>(target)];
  return ctx;
}

AttentionResult attention_step(diff::Tape* tape, const AttentionContext& ctx, const Tensor& h1,
                               const CaptionerParams& params) {
  const int m = ctx.context.dim(0);
  Tensor value_proj = diff::matmul(tape, ctx.context, params.attn_value);        // [M,128]
  Tensor hidden_proj = diff::vecmat(tape, h1, params.attn_hidden);               // [128]
  Tensor combined = diff::add(tape, value_proj, hidden_proj);                    // broadcast over rows
  Tensor scores = diff::matmul(tape, combined, params.attn_score);               // [M,1]
  Tensor alpha = diff::softmax(tape, diff::reshape(tape, scores, {m}), 0);       // [M]
  Tensor v_hat = diff::vecmat(tape, alpha, ctx.context);                         // [128]
  return {alpha, v_hat};
}

DecoderState initial_decoder_state() {
  DecoderState s;
  s.h1 = Tensor::zeros({kHiddenDim});
  s.h2 = Tensor::zeros({kHiddenDim});
  s.prev_token = Vocabulary::kSos;
  return s;
}

DecodeStepResult decode_step(diff::Tape* tape, const DecoderState& state,
                             const AttentionContext& ctx, const CaptionerParams& params) {
  if (state.prev_token < 0 || state.prev_token >= params.config.vocab_size) {
    throw ArgumentError("decoder previous token out of vocabulary range");
  }
  Tensor token_embed = diff::row(tape, params.embedding, state.prev_token);
  Tensor fusion_in = diff::concat(tape, {state.h2, ctx.target_feature, token_embed}, 0);
  Tensor h1 = diff::gru_cell(tape, fusion_in, state.h1, params.fusion);

  Tensor v_hat;
  if (params.config.use_attention) {
    const Tensor& attn_h = params.config.attention_on_updated_h1 ? h1 : state.h1;
    v_hat = attention_step(tape, ctx, attn_h, params).v_hat;
  } else {
    v_hat = Tensor::zeros({kFeatureDim});
  }

  Tensor fuse2_in = diff::concat(tape, {state.h1, v_hat}, 0);
  Tensor u2 = diff::tanh(tape, diff::add(tape, diff::vecmat(tape, fuse2_in, params.fuse2_w), params.fuse2_b));
  Tensor h2 = diff::gru_cell(tape, u2, state.h2, params.language);
  Tensor logits = diff::add(tape, diff::vecmat(tape, h2, params.out_w), params.out_b);

  DecodeStepResult out;
  out.logits = logits;
  out.state.h1 = h1;
  out.state.h2 = h2;
  return out;
}

scene::TokenSequence generate(const AttentionContext& ctx, const CaptionerParams& params) {
  scene::TokenSequence seq{Vocabulary::kSos};
  DecoderState state = initial_decoder_state();
  for (int step = 0; step < params.config.max_tokens + 1; ++step) {
    DecodeStepResult r = decode_step(nullptr, state, ctx, params);
    const auto& logits = r.logits.data();
    int best = -1;
    for (int v = 0; v < params.config.vocab_size; ++v) {
      if (v == Vocabulary::kPad || v == Vocabulary::kSos) continue;
      if (best < 0 || logits[static_cast<std::size_t>(v)] > logits[static_cast<std::size_t>(best)]) best = v;
    }
    if (best == Vocabulary::kEos || static_cast<int>(seq.size()) - 1 >= params.config.max_tokens) {
      break;
    }
    seq.push_back(best);
    state = r.state;
    state.prev_token = best;
  }
  seq.push_back(Vocabulary::kEos);
  return seq;
}

diff::Tensor teacher_forced_loss(diff::Tape* tape, const AttentionContext& ctx,
                                 const CaptionerParams& params, const scene::TokenSequence& gt) {
  if (gt.size() < 2 || gt.front() != Vocabulary::kSos || gt.back() != Vocabulary::kEos) {
    throw ArgumentError("teacher_forced_loss expects an SOS...EOS sequence");
  }
  DecoderState state = initial_decoder_state();
  Tensor total = Tensor::zeros({1});
  int steps = 0;
  for (std::size_t t = 0; t + 1 < gt.size(); ++t) {
    state.prev_token = gt[t];
    DecodeStepResult r = decode_step(tape, state, ctx, params);
    const int target = gt[t + 1];
    if (target != Vocabulary::kPad) {
      total = diff::add(tape, total, diff::cross_entropy(tape, r.logits, target));
      ++steps;
    }
    state = r.state;
  }
  if (steps == 0) return Tensor::zeros({1});
  return diff::scale(tape, total, 1.0f / static_cast<float>(steps));
}

std::pair<int, int> teacher_forced_hits(const AttentionContext& ctx, const CaptionerParams& params,
                                        const scene::TokenSequence& gt) {
  DecoderState state = initial_decoder_state();
  int hits = 0, total = 0;
  for (std::size_t t = 0; t + 1 < gt.size(); ++t) {
    state.prev_token = gt[t];
    DecodeStepResult r = decode_step(nullptr, state, ctx, params);
    const int target = gt[t + 1];
    if (target != Vocabulary::kPad) {
      const auto& logits = r.logits.data();
      int best = 0;
      for (int v = 1; v < params.config.vocab_size; ++v) {
        if (logits[static_cast<std::size_t>(v)] > logits[static_cast<std::size_t>(best)]) best = v;
      }
      hits += best == target ? 1 : 0;
      ++total;
    }
    state = r.state;
  }
  return {hits, total};
}

}  // namespace dc3d::captioner
