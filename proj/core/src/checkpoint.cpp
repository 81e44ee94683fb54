#include "thinktuning/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace thinktuning {

using ordered_json = nlohmann::ordered_json;

void write_checkpoint(const std::string& path, const Vocab& vocab, const PolicyParams& params) {
  for (const Tensor* t : params.tensors())
    if (!t->all_finite())
      throw std::range_error("write_checkpoint: refusing to write non-finite parameters");

  ordered_json j;
  j["format"] = "thinktuning-policy";
  j["version"] = kCheckpointVersion;
  j["vocab"] = vocab.tokens();
  j["dims"] = {{"vocab_size", params.vocab_size},
               {"embed_dim", params.embed_dim},
               {"context_width", params.context_width},
               {"hidden_dim", params.hidden_dim}};
  ordered_json tensors;
  auto list = params.tensors();
  const auto& names = PolicyParams::tensor_names();
  for (std::size_t i = 0; i < list.size(); ++i) {
    tensors[names[i]] = {{"shape", list[i]->shape}, {"data", list[i]->data}};
  }
  j["tensors"] = std::move(tensors);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_checkpoint: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_checkpoint: cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("read_checkpoint: " + path + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "thinktuning-policy")
    throw std::runtime_error("read_checkpoint: " + path + " is not a policy checkpoint");
  if (j.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error("read_checkpoint: unsupported checkpoint version in " + path);

  Checkpoint ckpt{Vocab(j.at("vocab").get<std::vector<std::string>>()), PolicyParams{}};
  auto& p = ckpt.params;
  const auto& dims = j.at("dims");
  p.vocab_size = dims.at("vocab_size").get<int>();
  p.embed_dim = dims.at("embed_dim").get<int>();
  p.context_width = dims.at("context_width").get<int>();
  p.hidden_dim = dims.at("hidden_dim").get<int>();
  if (p.vocab_size != ckpt.vocab.size())
    throw std::runtime_error("read_checkpoint: vocab size disagrees with dims");

  auto list = p.tensors();
  const auto& names = PolicyParams::tensor_names();
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& tj = j.at("tensors").at(names[i]);
    *list[i] = Tensor(tj.at("shape").get<std::vector<std::int64_t>>(),
                      tj.at("data").get<std::vector<double>>());
  }
  // Cross-check stored shapes against the declared dims.
  if (p.embedding.shape != std::vector<std::int64_t>{p.vocab_size, p.embed_dim} ||
      p.out_proj.shape != std::vector<std::int64_t>{p.embed_dim, p.vocab_size} ||
      p.enc_w1.shape != std::vector<std::int64_t>{static_cast<std::int64_t>(p.context_width) * p.embed_dim,
                                                  p.hidden_dim})
    throw std::runtime_error("read_checkpoint: tensor shapes disagree with dims");
  return ckpt;
}

}  // namespace thinktuning
