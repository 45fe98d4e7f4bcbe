#pragma once

#include <string>
#include <vector>

#include "dc3d/geometry.hpp"
#include "dc3d/tensor.hpp"
#include "dc3d/vocab.hpp"

namespace dc3d::captioner {

constexpr int kFeatureDim = 128;
constexpr int kHiddenDim = 512;

struct CaptionerConfig {
  int vocab_size = 0;
  bool use_attention = true;
  // Eq. form uses the pre-update fusion state in the attention scores; the
  // alternate reading feeds the just-updated one.
  bool attention_on_updated_h1 = false;
  int max_tokens = scene::kMaxCaptionTokens;
};

struct CaptionerParams {
  CaptionerConfig config;
  diff::Tensor embedding;      // [vocab, 300], frozen
  diff::GruParams fusion;      // input 512+128+300 -> hidden 512
  diff::Tensor attn_value;     // W_v [128, 128]
  diff::Tensor attn_hidden;    // W_h [512, 128]
  diff::Tensor attn_score;     // W_a [128, 1]
  diff::Tensor fuse2_w;        // [640, 512]
  diff::Tensor fuse2_b;        // [512]
  diff::GruParams language;    // input 512 -> hidden 512
  diff::Tensor out_w;          // [512, vocab]
  diff::Tensor out_b;          // [vocab]

  /// Trainable parameters; the frozen embedding table is excluded.
  std::vector<std::pair<std::string, diff::Tensor*>> named_parameters();
};

CaptionerParams make_captioner_params(const CaptionerConfig& config,
                                      const diff::Tensor& embedding, Rng& rng);

/// Context features the decoder attends over. Row `target` stays the
/// unmodified enhanced target feature.
struct AttentionContext {
  diff::Tensor context;         // V^r, [M, 128]
  int target = 0;
  diff::Tensor target_feature;  // v_k^tau, [128]
};

/// Adds each relation feature e_{k,j} onto the enhanced feature of neighbor
/// j; every other row (including row k) passes through unchanged.
AttentionContext build_attention_context(diff::Tape* tape, const diff::Tensor& enhanced,
                                         const std::vector<geom::Edge>& edges,
                                         const std::vector<diff::Tensor>& relations, int target);

struct AttentionResult {
  diff::Tensor alpha;  // [M], sums to 1
  diff::Tensor v_hat;  // [128]
};

/// Per-proposal score (v_i W_v + h1 W_h) W_a, softmax over proposals, and
/// the alpha-weighted sum of context rows.
AttentionResult attention_step(diff::Tape* tape, const AttentionContext& ctx,
                               const diff::Tensor& h1, const CaptionerParams& params);

struct DecoderState {
  diff::Tensor h1;  // [512]
  diff::Tensor h2;  // [512]
  int prev_token = scene::Vocabulary::kSos;
};

DecoderState initial_decoder_state();

struct DecodeStepResult {
  diff::Tensor logits;  // [vocab]
  DecoderState state;
};

/// One decoding step: fusion GRU over [h2_prev, v_k, embed(prev token)],
/// attention over the context, the 640 -> 512 fusion MLP, the language GRU,
/// and the output projection.
DecodeStepResult decode_step(diff::Tape* tape, const DecoderState& state,
                             const AttentionContext& ctx, const CaptionerParams& params);

/// Greedy argmax decoding from SOS until EOS or the content-token cap.
/// PAD and SOS are never emitted.
scene::TokenSequence generate(const AttentionContext& ctx, const CaptionerParams& params);

/// Mean cross entropy of next-token prediction with ground-truth tokens fed
/// back (teacher forcing). PAD targets are skipped.
diff::Tensor teacher_forced_loss(diff::Tape* tape, const AttentionContext& ctx,
                                 const CaptionerParams& params, const scene::TokenSequence& gt);

/// Count of teacher-forced argmax hits and total predicted positions.
std::pair<int, int> teacher_forced_hits(const AttentionContext& ctx, const CaptionerParams& params,
                                        const scene::TokenSequence& gt);

}  // namespace dc3d::captioner
