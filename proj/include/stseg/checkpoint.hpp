#pragma once

// Segmentation-model checkpoint: magic "STSEGCKP", version, a JSON header (network
// config, input normalization, free-form metadata) and the parameter tensors.

#include <string>
#include <vector>

#include "stseg/binary_io.hpp"
#include "stseg/dataset.hpp"
#include "stseg/seg_network.hpp"

namespace stseg {

inline constexpr std::uint32_t kModelCheckpointVersion = 1;

struct ModelCheckpoint {
  NetworkConfig config;
  Normalization normalization;
  std::string meta_json = "{}";  ///< training step, seed, options; not needed for inference
  SegNetwork net;
};

void save_model(const std::string& path, const SegNetwork& net, const Normalization& norm,
                const std::string& meta_json = "{}");
ModelCheckpoint load_model(const std::string& path);

/// Parameter block shared by every checkpoint format: count, then name/shape/values.
void write_parameters(BinaryWriter& w, const std::vector<const Parameter<float>*>& params);
inline void write_parameters(BinaryWriter& w, const std::vector<Parameter<float>*>& params) {
  write_parameters(w, std::vector<const Parameter<float>*>(params.begin(), params.end()));
}
/// Reads into `params`; names and shapes must match exactly.
void read_parameters(BinaryReader& r, const std::vector<Parameter<float>*>& params, const std::string& what);

std::string network_config_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);

}  // namespace stseg
