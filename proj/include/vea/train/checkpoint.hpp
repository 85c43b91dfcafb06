#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vea/nn/module.hpp"
#include "vea/train/train.hpp"

namespace vea::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { Io, BadMagic, UnsupportedVersion, Truncated, Malformed, ShapeMismatch, MissingTensor };

std::string to_string(CheckpointErrorKind kind);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& detail);
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct Checkpoint {
  std::string config_text;  // caller's run configuration, stored verbatim
  int epochs_completed = 0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

/// Model parameters (including batch-norm running statistics) and, when an
/// optimizer is given, its velocities as `optim.velocity.<param>`.
Checkpoint make_checkpoint(nn::Module& model, const Sgd* optimizer, std::string config_text, int epochs_completed,
                           std::uint64_t seed, std::size_t steps);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every model parameter from the checkpoint; with an optimizer,
/// restores velocities too. Shapes must match exactly.
void restore(const Checkpoint& ckpt, nn::Module& model, Sgd* optimizer = nullptr);

}  // namespace vea::train
