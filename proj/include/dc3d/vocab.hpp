#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dc3d/error.hpp"
#include "dc3d/tensor.hpp"

namespace dc3d::scene {

constexpr int kEmbeddingDim = 300;
constexpr int kMaxCaptionTokens = 30;  // content tokens, before SOS/EOS

/// Token indices; a full sequence starts with SOS and ends with EOS.
using TokenSequence = std::vector<int>;

/// Lowercases, splits on whitespace and strips leading/trailing
/// `.,;:!?"'()` from each token. Empty tokens are dropped.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  /// Tokens with corpus frequency >= min_count, ordered by (frequency desc,
  /// token asc) after the 4 reserved slots.
  static Vocabulary build(const std::vector<std::string>& corpus, int min_count);
  /// Rebuilds from non-reserved tokens in index order (index 4 onward).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);
  static Vocabulary load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int index_of(const std::string& token) const;  // kUnk when absent
  const std::string& token(int index) const;
  /// Non-reserved tokens in index order.
  std::vector<std::string> content_tokens() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  void rebuild_index();
};

/// Lowercase/tokenize, map unknowns to UNK, truncate to 30 content tokens,
/// wrap with SOS/EOS. Maximum result length is 32.
TokenSequence encode_caption(const std::string& text, const Vocabulary& vocab);

/// Token strings for a sequence, skipping PAD/SOS/EOS.
std::vector<std::string> decode_tokens(const TokenSequence& seq, const Vocabulary& vocab);
std::string decode_caption(const TokenSequence& seq, const Vocabulary& vocab);

/// Frozen per-token embedding rows aligned with the vocabulary.
struct EmbeddingTable {
  diff::Tensor table;  // [vocab, 300], requires_grad = false

  diff::Tensor row_for(int token) const;
};

/// Reads "token v1 ... v300" lines; vocabulary tokens absent from the file
/// and all reserved tokens get the zero vector. A row with a width other
/// than 300 is a FormatError.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab);
EmbeddingTable parse_embeddings(const std::string& text, const Vocabulary& vocab);
EmbeddingTable zero_embeddings(const Vocabulary& vocab);

}  // namespace dc3d::scene
