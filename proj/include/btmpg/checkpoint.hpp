#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "btmpg/autodiff.hpp"

namespace btmpg {

// Sidecar metadata stored next to each parameter blob.
struct CheckpointMeta {
  std::map<std::string, std::string> config;  // flat key=value view of the run config
  std::string vocab_hash;                     // fingerprint of the vocabulary file
  int epoch = 0;
  std::uint64_t seed = 0;
  bool final_epoch = false;
};

// Binary parameter blob: magic, count, then name/rows/cols/row-major
// doubles per parameter. Sets are concatenated in the order given; loading
// validates every name and shape against the live parameters.
void save_param_blob(const std::string& path,
                     const std::vector<const ad::ParamSet*>& sets);
void load_param_blob(const std::string& path, const std::vector<ad::ParamSet*>& sets);

void save_meta_json(const std::string& path, const CheckpointMeta& meta);
CheckpointMeta load_meta_json(const std::string& path);

}  // namespace btmpg
