#include "tkg/encoder.hpp"

#include <unordered_map>

namespace tkg {

void save_model(const std::string& path, const ModelParams& params,
                const EncoderConfig& cfg) {
  std::vector<NamedTensor> tensors;
  Tensor meta({8});
  meta.data = {static_cast<float>(cfg.d),
               static_cast<float>(cfg.history_len),
               static_cast<float>(cfg.n_max),
               static_cast<float>(cfg.n_heads),
               static_cast<float>(cfg.n_layers),
               static_cast<float>(cfg.d_inner),
               static_cast<float>(cfg.d_out),
               cfg.mode == EncoderMode::Flat ? 1.0f : 0.0f};
  tensors.push_back({"_config", std::move(meta)});
  params.for_each([&](const std::string& name, const Tensor& t) {
    tensors.push_back({name, t});
  });
  save_tensor_archive(path, tensors);
}

std::pair<ModelParams, EncoderConfig> load_model(const std::string& path) {
  std::vector<NamedTensor> tensors = load_tensor_archive(path);
  std::unordered_map<std::string, Tensor*> by_name;
  for (NamedTensor& nt : tensors) by_name[nt.name] = &nt.tensor;

  auto meta_it = by_name.find("_config");
  if (meta_it == by_name.end() || meta_it->second->numel() != 8) {
    throw Error(ErrorKind::FormatError, path + ": missing model config record");
  }
  const Tensor& meta = *meta_it->second;
  EncoderConfig cfg;
  cfg.d = static_cast<std::uint32_t>(meta.data[0]);
  cfg.history_len = static_cast<std::uint32_t>(meta.data[1]);
  cfg.n_max = static_cast<std::uint32_t>(meta.data[2]);
  cfg.n_heads = static_cast<std::uint32_t>(meta.data[3]);
  cfg.n_layers = static_cast<std::uint32_t>(meta.data[4]);
  cfg.d_inner = static_cast<std::uint32_t>(meta.data[5]);
  cfg.d_out = static_cast<std::uint32_t>(meta.data[6]);
  cfg.mode = meta.data[7] != 0.0f ? EncoderMode::Flat : EncoderMode::Attention;
  cfg.validate();

  auto emb_it = by_name.find("entity_emb");
  auto rel_it = by_name.find("relation_emb");
  if (emb_it == by_name.end() || rel_it == by_name.end()) {
    throw Error(ErrorKind::FormatError, path + ": missing embedding tables");
  }
  ModelParams params = init_params<float>(emb_it->second->shape[0],
                                          rel_it->second->shape[0], cfg, 0);
  params.for_each([&](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw Error(ErrorKind::FormatError, path + ": missing tensor " + name);
    }
    if (it->second->shape != t.shape) {
      throw Error(ErrorKind::FormatError,
                  path + ": shape mismatch for " + name + ": " +
                      it->second->shape_str() + " vs " + t.shape_str());
    }
    t = std::move(*it->second);
  });
  return {std::move(params), cfg};
}

}  // namespace tkg
