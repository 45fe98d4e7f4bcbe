#include "dc3d/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dc3d::scene {

namespace {

const char* kReserved[4] = {"<pad>", "<sos>", "<eos>", "<unk>"};
constexpr const char* kStrip = ".,;:!?\"'()";

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    std::size_t begin = 0, end = word.size();
    while (begin < end && std::strchr(kStrip, word[begin]) != nullptr) ++begin;
    while (end > begin && std::strchr(kStrip, word[end - 1]) != nullptr) --end;
    if (begin == end) continue;
    std::string token = word.substr(begin, end - begin);
    std::transform(token.begin(), token.end(), token.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(std::move(token));
  }
  return out;
}

void Vocabulary::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, int min_count) {
  std::map<std::string, int> counts;
  for (const auto& caption : corpus) {
    for (auto& token : tokenize(caption)) ++counts[token];
  }
  std::vector<std::pair<std::string, int>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const char* r : kReserved) v.tokens_.emplace_back(r);
  for (const auto& [token, count] : entries) {
    if (count >= min_count) v.tokens_.push_back(token);
  }
  v.rebuild_index();
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const char* r : kReserved) v.tokens_.emplace_back(r);
  for (const auto& t : tokens) v.tokens_.push_back(t);
  v.rebuild_index();
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(tokens);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary file " + path.string());
  for (std::size_t i = 4; i < tokens_.size(); ++i) out << tokens_[i] << "\n";
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || index >= size()) throw ArgumentError("token index out of range");
  return tokens_[static_cast<std::size_t>(index)];
}

std::vector<std::string> Vocabulary::content_tokens() const {
  return std::vector<std::string>(tokens_.begin() + 4, tokens_.end());
}

TokenSequence encode_caption(const std::string& text, const Vocabulary& vocab) {
  TokenSequence seq;
  seq.push_back(Vocabulary::kSos);
  int content = 0;
  for (const auto& token : tokenize(text)) {
    if (content >= kMaxCaptionTokens) break;
    seq.push_back(vocab.index_of(token));
    ++content;
  }
  seq.push_back(Vocabulary::kEos);
  return seq;
}

std::vector<std::string> decode_tokens(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (int idx : seq) {
    if (idx == Vocabulary::kPad || idx == Vocabulary::kSos || idx == Vocabulary::kEos) continue;
    out.push_back(vocab.token(idx));
  }
  return out;
}

std::string decode_caption(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (const auto& token : decode_tokens(seq, vocab)) {
    if (!out.empty()) out += ' ';
    out += token;
  }
  return out;
}

diff::Tensor EmbeddingTable::row_for(int token) const {
  return diff::row(nullptr, table, token);
}

EmbeddingTable parse_embeddings(const std::string& text, const Vocabulary& vocab) {
  std::unordered_map<std::string, std::vector<float>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<float> values;
    double v;
    while (ls >> v) values.push_back(static_cast<float>(v));
    if (values.size() != kEmbeddingDim) {
      throw FormatError("embedding line " + std::to_string(line_no) + " has " +
                        std::to_string(values.size()) + " values, expected 300");
    }
    rows[token] = std::move(values);
  }

  std::vector<float> data(static_cast<std::size_t>(vocab.size()) * kEmbeddingDim, 0.0f);
  for (int i = 4; i < vocab.size(); ++i) {
    auto it = rows.find(vocab.token(i));
    if (it == rows.end()) continue;
    std::copy(it->second.begin(), it->second.end(),
              data.begin() + static_cast<std::size_t>(i) * kEmbeddingDim);
  }
  return EmbeddingTable{diff::Tensor({vocab.size(), kEmbeddingDim}, std::move(data), false)};
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_embeddings(buf.str(), vocab);
}

EmbeddingTable zero_embeddings(const Vocabulary& vocab) {
  return EmbeddingTable{diff::Tensor::zeros({vocab.size(), kEmbeddingDim}, false)};
}

}  // namespace dc3d::scene
