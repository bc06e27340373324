#pragma once

// Binary model container:
//   "UIATTRNN" | u32 version | u64 len, spec text | u64 tensor count |
//   per tensor: u64 length, f64 values | u64 FNV-1a of everything before it.
// All integers and doubles are little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uiattr/hash.hpp"
#include "uiattr/nn/network.hpp"

namespace uiattr::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::string spec_text;
  std::vector<std::vector<double>> tensors;
};

std::vector<unsigned char> encode_checkpoint(const std::string& spec_text,
                                             std::span<Tensor* const> tensors);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_network(Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
void save_siamese(SiameseNetwork& net, const std::filesystem::path& path);
SiameseNetwork load_siamese(const std::filesystem::path& path);

/// Copies a checkpoint's tensors into `dst`; throws CheckpointError on any shape mismatch.
void assign_state(const Checkpoint& ckpt, std::span<Tensor* const> dst);

}  // namespace uiattr::nn
