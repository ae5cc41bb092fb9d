#include "advlab/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace advlab {

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json tensor_to_json(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape();
  j["data"] = std::vector<double>(t.data(), t.data() + t.size());
  return j;
}

Tensor tensor_from_json(const nlohmann::json& j) {
  if (j.is_null()) return Tensor();
  auto shape = j.at("shape").get<std::vector<int>>();
  auto data = j.at("data").get<std::vector<double>>();
  if (shape.empty() && data.empty()) return Tensor();
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;

  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : model.spec().layers) {
    nlohmann::json lj;
    lj["kind"] = layer_kind_name(l.kind);
    if (l.kind == LayerKind::dense) {
      lj["in_features"] = l.in_features;
      lj["out_features"] = l.out_features;
    } else if (l.kind == LayerKind::conv2d) {
      lj["out_channels"] = l.out_channels;
      lj["kernel_size"] = l.kernel_size;
    }
    layers.push_back(std::move(lj));
  }
  j["spec"] = {{"input_shape", model.input_shape()},
               {"num_classes", model.num_classes()},
               {"layers", std::move(layers)}};

  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t i = 0; i < model.weights().size(); ++i) {
    weights.push_back(model.weights()[i].empty() ? nlohmann::json()
                                                 : tensor_to_json(model.weights()[i]));
    biases.push_back(model.biases()[i].empty() ? nlohmann::json()
                                               : tensor_to_json(model.biases()[i]));
  }
  j["params"] = {{"weights", std::move(weights)}, {"biases", std::move(biases)}};

  const ModelMetadata& m = model.metadata();
  j["metadata"] = {{"name", m.name},
                   {"train_seed", m.train_seed},
                   {"training", m.training},
                   {"train_accuracy", m.train_accuracy}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump(2) << '\n';
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed file " + path + ": " + e.what());
  }

  if (!j.contains("version")) throw std::runtime_error("load_checkpoint: missing version in " + path);
  const int version = j["version"].get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version) +
                             " in " + path);
  }

  ModelSpec spec;
  spec.input_shape = j.at("spec").at("input_shape").get<std::vector<int>>();
  spec.num_classes = j.at("spec").at("num_classes").get<int>();
  for (const auto& lj : j.at("spec").at("layers")) {
    const std::string kind = lj.at("kind").get<std::string>();
    LayerSpec l;
    l.kind = layer_kind_from_name(kind);  // throws naming the kind
    if (l.kind == LayerKind::dense) {
      l.in_features = lj.at("in_features").get<int>();
      l.out_features = lj.at("out_features").get<int>();
    } else if (l.kind == LayerKind::conv2d) {
      l.out_channels = lj.at("out_channels").get<int>();
      l.kernel_size = lj.at("kernel_size").get<int>();
    }
    spec.layers.push_back(l);
  }

  std::vector<Tensor> weights, biases;
  for (const auto& wj : j.at("params").at("weights")) weights.push_back(tensor_from_json(wj));
  for (const auto& bj : j.at("params").at("biases")) biases.push_back(tensor_from_json(bj));

  ModelMetadata meta;
  const auto& mj = j.at("metadata");
  meta.name = mj.at("name").get<std::string>();
  meta.train_seed = mj.at("train_seed").get<std::uint64_t>();
  meta.training = mj.at("training").get<std::string>();
  meta.train_accuracy = mj.at("train_accuracy").get<double>();

  return Model(std::move(spec), std::move(weights), std::move(biases), std::move(meta));
}

}  // namespace advlab
