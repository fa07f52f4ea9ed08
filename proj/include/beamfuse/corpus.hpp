// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "beamfuse/seqmodel.hpp"

namespace beamfuse {

using Sentence = std::vector<TokenId>;
using Corpus = std::vector<Sentence>;

struct CorpusSpec {
  std::size_t sentences = 1000;
  Index vocab = 30000;
  std::uint64_t seed = 1;
  std::uint32_t mean_length = 20;  // geometric on {1, 2, ...}
  std::uint32_t max_length = 60;
};

/// Seeded synthetic corpus: geometric lengths capped at max_length, word ids
/// uniform in [3, vocab).
Corpus generate_corpus(const CorpusSpec& spec);

/// One sentence per line, space-separated token ids.
void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);

/// Throws DataError if any id falls outside [0, vocab) or a sentence is empty.
void check_corpus_vocab(const Corpus& corpus, Index vocab);

}  // namespace beamfuse
