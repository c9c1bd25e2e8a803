#pragma once

#include <map>
#include <string>
#include <vector>

#include "cxrlab/core/tensor.hpp"
#include "cxrlab/nn/param.hpp"
#include "json.hpp"

namespace cxr::nn {

/// Outcome of a tolerant weight transfer into an existing ParamStore.
struct TransferReport {
  std::vector<std::string> loaded;
  std::vector<std::string> missingInFile;   // store params with no file entry
  std::vector<std::string> shapeMismatch;   // name matched, shape did not
  std::vector<std::string> unusedInFile;    // file entries with no store param
};

/// Writes a binary weight file at `path` plus a JSON sidecar at `path`.json.
/// Tensors are stored in ParamStore insertion order so a save/load/save
/// round trip is byte identical.
void saveCheckpoint(const std::string& path, const ParamStore& store,
                    const nlohmann::json& meta);

/// Strict load: every store param must exist in the file with an identical
/// shape, otherwise throws CheckpointError. Returns the sidecar metadata.
nlohmann::json loadCheckpoint(const std::string& path, ParamStore& store);

/// Copies every name- and shape-matched tensor, reports everything else.
TransferReport transferWeights(const std::string& path, ParamStore& store);

/// Reads only the sidecar metadata.
nlohmann::json readCheckpointMeta(const std::string& path);

/// Reads the raw tensor table (insertion order preserved).
std::vector<std::pair<std::string, Tensor>> readCheckpointTensors(
    const std::string& path);

}  // namespace cxr::nn
