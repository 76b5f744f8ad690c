// Copyright 2026 The vibekit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vibekit/checkpoint.hpp"
#include "vibekit/rng.hpp"
#include "vibekit/tensor.hpp"

namespace vibekit::lora {

/// Low-rank update (alpha / rank) * B * A for the [d_out, d_in] weight `target_name`.
struct LoRAAdapter {
  std::string target_name;
  Tensor A;  // [rank, d_in]
  Tensor B;  // [d_out, rank]
  std::size_t rank = 0;
  double alpha = 0.0;

  std::size_t d_in() const { return A.dim(1); }
  std::size_t d_out() const { return B.dim(0); }
  double scale() const { return alpha / static_cast<double>(rank); }
};

using AdapterSet = std::vector<LoRAAdapter>;

void validate(const LoRAAdapter& adapter);

/// A ~ N(0, 1/rank), B = 0: a fresh adapter contributes nothing.
LoRAAdapter init_adapter(const std::string& target, std::size_t d_in, std::size_t d_out, std::size_t rank,
                         double alpha, Rng& rng);

/// (alpha / rank) * B * A.
Tensor delta(const LoRAAdapter& adapter);

/// W + delta for every adapter; other tensors are copied untouched. Deltas are
/// applied at checkpoint storage precision, so merging storage-precision
/// weights is exactly undone by strip().
Checkpoint merge(const Checkpoint& base, const AdapterSet& adapters);
/// W - delta for every adapter. strip(merge(W, S), S) == W bit for bit when W
/// holds storage-precision values (anything read from a VBCP file).
Checkpoint strip(const Checkpoint& merged, const AdapterSet& adapters);
/// Inference weights W0 + delta(LoRA2). Throws RelayViolation when `base`
/// already carries a merged adapter.
Checkpoint compose_inference(const Checkpoint& base, const AdapterSet& lora2);

/// True when the checkpoint metadata records a merged adapter.
bool has_merged_adapter(const Checkpoint& ckpt);

/// Packs adapters as "<target>.lora_A" / "<target>.lora_B" tensors with
/// lora_rank / lora_alpha metadata. All adapters must share rank and alpha.
Checkpoint adapters_to_checkpoint(const AdapterSet& adapters, const std::string& stage);
AdapterSet adapters_from_checkpoint(const Checkpoint& ckpt);

/// Copy of the set with every B negated.
AdapterSet negated(const AdapterSet& adapters);

}  // namespace vibekit::lora
