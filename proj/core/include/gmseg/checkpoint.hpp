#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "gmseg/model.hpp"
#include "gmseg/optim.hpp"

namespace gmseg {

/// Binary container version written by save_checkpoint.
inline constexpr std::uint16_t kCheckpointVersion = 1;

using Provenance = std::map<std::string, std::string>;

struct CheckpointInfo {
  std::uint16_t version = 0;
  Precision precision = Precision::Float32;
  ModelConfig model;
  Provenance provenance;
  std::size_t param_count = 0;
  std::size_t file_size = 0;
  bool has_optimizer = false;
};

template <Scalar T>
struct LoadedCheckpoint {
  Network<T> network;
  AdamState<T> optimizer;
  Provenance provenance;
};

/// Writes magic "GMDL", version, precision tag, then three tagged sections
/// (model config text, tensor table, optimizer block), each length-prefixed
/// and CRC-32 checked. Layout is documented in docs/formats.md.
template <Scalar T>
void save_checkpoint(const std::filesystem::path& path, Network<T>& network,
                     const AdamState<T>* optimizer, const Provenance& provenance = {});

/// Serialised bytes, as written by save_checkpoint.
template <Scalar T>
std::string encode_checkpoint(Network<T>& network, const AdamState<T>* optimizer,
                              const Provenance& provenance);

/// Validates the whole file before constructing anything, so a damaged file
/// never yields a partially loaded network.
template <Scalar T>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// True when the file starts with the checkpoint magic.
bool is_checkpoint_file(const std::filesystem::path& path);

}  // namespace gmseg
