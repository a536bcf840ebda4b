#include "stseg/checkpoint.hpp"

#include <json.hpp>

#include "stseg/error.hpp"

using nlohmann::json;

namespace stseg {
namespace {

constexpr const char* kMagic = "STSEGCKP";

json config_to_json(const NetworkConfig& cfg) {
  return json{{"widths", cfg.widths}, {"embed_dim", cfg.embed_dim}, {"num_classes", cfg.num_classes},
              {"in_channels", cfg.in_channels}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig cfg;
  cfg.widths = j.at("widths").get<std::array<int, kNumStages>>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.in_channels = j.at("in_channels").get<int>();
  validate(cfg);
  return cfg;
}

}  // namespace

std::string network_config_json(const NetworkConfig& cfg) { return config_to_json(cfg).dump(); }

NetworkConfig network_config_from_json(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed network config: ") + e.what());
  }
}

void write_parameters(BinaryWriter& w, const std::vector<const Parameter<float>*>& params) {
  w.put<std::uint64_t>(params.size());
  for (const auto* p : params) {
    w.put_string(p->name);
    w.put_vector(p->shape);
    w.put_vector(p->value);
  }
}

void read_parameters(BinaryReader& r, const std::vector<Parameter<float>*>& params, const std::string& what) {
  const auto n = r.get<std::uint64_t>();
  if (n != params.size()) {
    throw ValidationError(what + ": checkpoint has " + std::to_string(n) + " parameter tensors, model has " +
                          std::to_string(params.size()));
  }
  for (auto* p : params) {
    const std::string name = r.get_string();
    const auto shape = r.get_vector<int>();
    auto values = r.get_vector<float>();
    if (name != p->name || shape != p->shape || values.size() != p->value.size()) {
      throw ValidationError(what + ": parameter '" + name + "' does not match model parameter '" + p->name + "'");
    }
    p->value = std::move(values);
  }
}

void save_model(const std::string& path, const SegNetwork& net, const Normalization& norm, const std::string& meta_json) {
  json header;
  header["network"] = config_to_json(net.config());
  header["normalization"] = {{"mean", norm.mean}, {"std", norm.std}};
  header["meta"] = json::parse(meta_json);
  BinaryWriter w(path);
  w.put_magic(kMagic);
  w.put<std::uint32_t>(kModelCheckpointVersion);
  w.put_string(header.dump());
  write_parameters(w, net.parameters());
  w.close();
}

ModelCheckpoint load_model(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kModelCheckpointVersion) {
    throw ValidationError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelCheckpoint ck;
  try {
    const json header = json::parse(r.get_string());
    ck.config = config_from_json(header.at("network"));
    ck.normalization.mean = header.at("normalization").at("mean").get<std::array<double, 3>>();
    ck.normalization.std = header.at("normalization").at("std").get<std::array<double, 3>>();
    ck.meta_json = header.at("meta").dump();
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed checkpoint header: " + e.what());
  }
  ck.net = SegNetwork(ck.config);
  read_parameters(r, ck.net.parameters(), path);
  return ck;
}

}  // namespace stseg
