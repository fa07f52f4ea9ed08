// SPDX-License-Identifier: Apache-2.0
//
// BFM1 model files, little-endian:
//
//   "BFM1"                                   4 bytes
//   vocab_src vocab_tgt embed_dim state_dim  u32 each
//   seed                                     u64
//   sections, in ModelParams::tensors() order:
//     name length u16, name bytes, element count u64, float32 data row-major
//
// Vocabulary files are UTF-8 text with one token per line; the line number
// is the token id and ids 0..2 are <pad>, <s>, </s>.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "beamfuse/seqmodel.hpp"

namespace beamfuse {

std::vector<std::uint8_t> serialize_model(const ModelParams& model);
ModelParams deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

std::vector<std::string> synthetic_vocab(Index size);
void save_vocab(const std::vector<std::string>& vocab, const std::filesystem::path& path);
std::vector<std::string> load_vocab(const std::filesystem::path& path);

}  // namespace beamfuse
