#include "cxrlab/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "cxrlab/core/error.hpp"

namespace cxr::nn {

namespace {

constexpr char kMagic[8] = {'C', 'X', 'R', 'C', 'K', 'P', 'T', '1'};

void writeU32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void writeU64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t readU32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CheckpointError("truncated checkpoint file");
  return v;
}

std::uint64_t readU64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CheckpointError("truncated checkpoint file");
  return v;
}

}  // namespace

void saveCheckpoint(const std::string& path, const ParamStore& store,
                    const nlohmann::json& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  writeU64(os, store.count());
  for (const Param* p : store.all()) {
    writeU32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    writeU32(os, static_cast<std::uint32_t>(p->value.dim()));
    for (int d = 0; d < p->value.dim(); ++d)
      writeU64(os, static_cast<std::uint64_t>(p->value.shape(d)));
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed for checkpoint: " + path);
  os.close();

  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw IoError("cannot open checkpoint sidecar for writing: " +
                         path + ".json");
  js << meta.dump(2) << "\n";
  if (!js) throw IoError("write failed for checkpoint sidecar: " + path);
}

std::vector<std::pair<std::string, Tensor>> readCheckpointTensors(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path);
  const std::uint64_t count = readU64(is);

  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t nameLen = readU32(is);
    std::string name(nameLen, '\0');
    is.read(name.data(), nameLen);
    if (!is) throw CheckpointError("truncated checkpoint file");
    const std::uint32_t ndim = readU32(is);
    if (ndim == 0 || ndim > 8)
      throw CheckpointError("bad tensor rank in checkpoint: " + name);
    std::vector<int> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d)
      shape[d] = static_cast<int>(readU64(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw CheckpointError("truncated checkpoint file");
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

nlohmann::json readCheckpointMeta(const std::string& path) {
  std::ifstream js(path + ".json");
  if (!js) throw IoError("cannot open checkpoint sidecar: " + path + ".json");
  nlohmann::json meta;
  try {
    js >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad checkpoint sidecar JSON: " +
                          std::string(e.what()));
  }
  return meta;
}

nlohmann::json loadCheckpoint(const std::string& path, ParamStore& store) {
  auto tensors = readCheckpointTensors(path);
  std::map<std::string, Tensor*> byName;
  for (auto& [name, t] : tensors) byName[name] = &t;
  for (Param* p : store.all()) {
    auto it = byName.find(p->name);
    if (it == byName.end())
      throw CheckpointError("checkpoint is missing parameter: " + p->name);
    if (!it->second->sameShape(p->value))
      throw CheckpointError("shape mismatch for parameter: " + p->name);
    std::copy(it->second->data(), it->second->data() + it->second->size(),
              p->value.data());
  }
  return readCheckpointMeta(path);
}

TransferReport transferWeights(const std::string& path, ParamStore& store) {
  auto tensors = readCheckpointTensors(path);
  std::map<std::string, Tensor*> byName;
  for (auto& [name, t] : tensors) byName[name] = &t;

  TransferReport report;
  for (Param* p : store.all()) {
    auto it = byName.find(p->name);
    if (it == byName.end()) {
      report.missingInFile.push_back(p->name);
      continue;
    }
    if (!it->second->sameShape(p->value)) {
      report.shapeMismatch.push_back(p->name);
      byName.erase(it);
      continue;
    }
    std::copy(it->second->data(), it->second->data() + it->second->size(),
              p->value.data());
    report.loaded.push_back(p->name);
    byName.erase(it);
  }
  for (const auto& [name, t] : byName) {
    (void)t;
    report.unusedInFile.push_back(name);
  }
  return report;
}

}  // namespace cxr::nn
