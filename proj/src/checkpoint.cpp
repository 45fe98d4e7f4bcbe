#include "dc3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dc3d::ckpt {

using diff::Tensor;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr const char* kMagic = "densecap3d-checkpoint";

struct Entry {
  std::string name;
  diff::Shape shape;
  std::int64_t offset = 0;
};

std::vector<std::pair<std::string, Tensor*>> all_arrays(model::Model& model) {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("captioner.embedding", &model.captioner_params.embedding);
  for (auto& kv : model.captioner_params.named_parameters()) out.push_back(kv);
  for (auto& kv : model.graph_params.named_parameters()) out.push_back(kv);
  return out;
}

}  // namespace

void save_checkpoint(model::Model& model, const std::filesystem::path& path,
                     const diff::AdamState* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint file " + path.string());

  auto arrays = all_arrays(model);
  auto trainable = model.named_parameters();

  std::ostringstream manifest;
  manifest << kMagic << " " << kFormatVersion << "\n";
  manifest << "hyper k_neighbors " << model.config.k_neighbors << "\n";
  manifest << "hyper graph_steps " << model.config.graph_steps << "\n";
  manifest << "hyper use_graph " << (model.config.use_graph ? 1 : 0) << "\n";
  manifest << "hyper use_attention " << (model.config.use_attention ? 1 : 0) << "\n";
  manifest << "hyper attention_on_updated_h1 " << (model.config.attention_on_updated_h1 ? 1 : 0) << "\n";
  manifest << "hyper vocab_size " << model.vocab.size() << "\n";
  manifest << "hyper max_tokens " << model.config.max_tokens << "\n";
  const auto tokens = model.vocab.content_tokens();
  manifest << "vocab " << tokens.size() << "\n";
  for (const auto& t : tokens) manifest << t << "\n";

  std::int64_t offset = 0;
  std::vector<const Tensor*> ordered;
  auto emit = [&](const std::string& name, const Tensor& t) {
    manifest << "tensor " << name << " " << t.rank();
    for (int d = 0; d < t.rank(); ++d) manifest << " " << t.dim(d);
    manifest << " " << offset << "\n";
    offset += t.size() * static_cast<std::int64_t>(sizeof(float));
    ordered.push_back(&t);
  };
  for (auto& [name, tensor] : arrays) emit(name, *tensor);

  std::vector<std::vector<float>> opt_arrays;
  if (optimizer != nullptr && optimizer->slot_count() > 0) {
    if (optimizer->slot_count() != trainable.size()) {
      throw CompatibilityError("optimizer state does not match the trainable parameter list");
    }
    manifest << "adam_t " << optimizer->step_count() << "\n";
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      const Tensor& p = *trainable[i].second;
      for (const char* kind : {"m", "v"}) {
        const auto& buf = kind[0] == 'm' ? optimizer->first_moment(i) : optimizer->second_moment(i);
        manifest << "tensor adam." << kind << "." << trainable[i].first << " " << p.rank();
        for (int d = 0; d < p.rank(); ++d) manifest << " " << p.dim(d);
        manifest << " " << offset << "\n";
        offset += static_cast<std::int64_t>(buf.size() * sizeof(float));
        opt_arrays.push_back(buf);
      }
    }
  }

  manifest << "data " << offset << "\n";
  out << manifest.str();
  for (const Tensor* t : ordered) {
    out.write(reinterpret_cast<const char*>(t->data().data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  for (const auto& buf : opt_arrays) {
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write to checkpoint file " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint file is empty");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = -1;
    ls >> magic >> version;
    if (magic != kMagic) throw FormatError("not a checkpoint file");
    if (version != kFormatVersion) {
      throw CompatibilityError("checkpoint format version " + std::to_string(version) +
                               " is not supported (expected " + std::to_string(kFormatVersion) + ")");
    }
  }

  model::ModelConfig config;
  int vocab_size = -1;
  std::vector<std::string> vocab_tokens;
  std::vector<Entry> entries;
  std::int64_t total_bytes = -1;
  std::int64_t adam_t = -1;

  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "hyper") {
      std::string key;
      std::int64_t value;
      if (!(ls >> key >> value)) throw FormatError("malformed hyper line: " + line);
      if (key == "k_neighbors") config.k_neighbors = static_cast<int>(value);
      else if (key == "graph_steps") config.graph_steps = static_cast<int>(value);
      else if (key == "use_graph") config.use_graph = value != 0;
      else if (key == "use_attention") config.use_attention = value != 0;
      else if (key == "attention_on_updated_h1") config.attention_on_updated_h1 = value != 0;
      else if (key == "vocab_size") vocab_size = static_cast<int>(value);
      else if (key == "max_tokens") config.max_tokens = static_cast<int>(value);
      else throw FormatError("unknown hyperparameter: " + key);
    } else if (kind == "vocab") {
      std::size_t count = 0;
      if (!(ls >> count)) throw FormatError("malformed vocab line");
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw FormatError("truncated vocabulary section");
        vocab_tokens.push_back(line);
      }
    } else if (kind == "tensor") {
      Entry e;
      int rank = -1;
      if (!(ls >> e.name >> rank) || rank < 1 || rank > 2) {
        throw FormatError("malformed tensor line: " + line);
      }
      for (int d = 0; d < rank; ++d) {
        int dim;
        if (!(ls >> dim) || dim <= 0) throw FormatError("malformed tensor shape: " + line);
        e.shape.push_back(dim);
      }
      if (!(ls >> e.offset) || e.offset < 0) throw FormatError("malformed tensor offset: " + line);
      entries.push_back(std::move(e));
    } else if (kind == "adam_t") {
      if (!(ls >> adam_t) || adam_t < 0) throw FormatError("malformed adam_t line");
    } else if (kind == "data") {
      if (!(ls >> total_bytes) || total_bytes < 0) throw FormatError("malformed data length field");
      break;
    } else {
      throw FormatError("unexpected manifest line: " + line);
    }
  }
  if (total_bytes < 0) throw FormatError("checkpoint has no data section");
  if (vocab_size < 0 || vocab_size != static_cast<int>(vocab_tokens.size()) + 4) {
    throw CompatibilityError("vocab_size disagrees with the stored vocabulary");
  }

  std::vector<char> blob(static_cast<std::size_t>(total_bytes));
  in.read(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (in.gcount() != static_cast<std::streamsize>(blob.size())) {
    throw FormatError("checkpoint data section is truncated");
  }

  auto read_array = [&](const Entry& e) {
    const std::int64_t count = diff::shape_size(e.shape);
    const std::int64_t bytes = count * static_cast<std::int64_t>(sizeof(float));
    if (e.offset + bytes > total_bytes) {
      throw FormatError("tensor " + e.name + " extends past the data section");
    }
    std::vector<float> data(static_cast<std::size_t>(count));
    std::memcpy(data.data(), blob.data() + e.offset, static_cast<std::size_t>(bytes));
    return data;
  };

  scene::Vocabulary vocab = scene::Vocabulary::from_tokens(vocab_tokens);
  scene::EmbeddingTable embeddings = scene::zero_embeddings(vocab);
  for (const auto& e : entries) {
    if (e.name == "captioner.embedding") {
      if (e.shape != diff::Shape{vocab.size(), scene::kEmbeddingDim}) {
        throw CompatibilityError("embedding table shape does not match the vocabulary");
      }
      embeddings.table = Tensor(e.shape, read_array(e), false);
    }
  }

  LoadedCheckpoint loaded{model::init_model(config, vocab, embeddings, 0), std::nullopt};

  std::vector<std::pair<std::string, Tensor*>> arrays = all_arrays(loaded.model);
  std::vector<std::vector<float>> adam_m, adam_v;
  auto trainable = loaded.model.named_parameters();
  if (adam_t >= 0) {
    adam_m.resize(trainable.size());
    adam_v.resize(trainable.size());
  }

  for (const auto& e : entries) {
    if (e.name == "captioner.embedding") continue;
    if (e.name.rfind("adam.", 0) == 0) {
      if (adam_t < 0) throw FormatError("optimizer arrays present without adam_t");
      const bool is_m = e.name.rfind("adam.m.", 0) == 0;
      const bool is_v = e.name.rfind("adam.v.", 0) == 0;
      if (!is_m && !is_v) throw FormatError("unknown optimizer array " + e.name);
      const std::string param_name = e.name.substr(7);
      bool found = false;
      for (std::size_t i = 0; i < trainable.size(); ++i) {
        if (trainable[i].first != param_name) continue;
        if (e.shape != trainable[i].second->shape()) {
          throw CompatibilityError("optimizer array " + e.name + " has unexpected shape");
        }
        (is_m ? adam_m : adam_v)[i] = read_array(e);
        found = true;
        break;
      }
      if (!found) throw CompatibilityError("optimizer array for unknown parameter " + param_name);
      continue;
    }
    bool found = false;
    for (auto& [name, tensor] : arrays) {
      if (name != e.name) continue;
      if (e.shape != tensor->shape()) {
        throw CompatibilityError("tensor " + e.name + " has shape " + diff::shape_str(e.shape) +
                                 ", expected " + diff::shape_str(tensor->shape()));
      }
      *tensor = Tensor(e.shape, read_array(e), tensor->requires_grad());
      found = true;
      break;
    }
    if (!found) throw CompatibilityError("checkpoint carries unknown tensor " + e.name);
  }

  if (adam_t >= 0) {
    for (std::size_t i = 0; i < trainable.size(); ++i) {
      if (adam_m[i].empty() || adam_v[i].empty()) {
        throw CompatibilityError("optimizer state is incomplete");
      }
    }
    loaded.optimizer = diff::AdamState::restore(std::move(adam_m), std::move(adam_v), adam_t);
  }
  return loaded;
}

}  // namespace dc3d::ckpt
