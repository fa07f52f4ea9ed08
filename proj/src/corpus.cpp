// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/corpus.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "beamfuse/error.hpp"
#include "beamfuse/rng.hpp"

namespace beamfuse {

Corpus generate_corpus(const CorpusSpec& spec) {
  if (spec.vocab <= kFirstWordId) {
    throw ValueError("corpus vocabulary must exceed the 3 reserved ids, got " +
                     std::to_string(spec.vocab));
  }
  if (spec.mean_length < 1 || spec.max_length < 1) throw ValueError("sentence lengths must be >= 1");

  Xoshiro256 rng(spec.seed);
  const auto words = static_cast<std::uint64_t>(spec.vocab - kFirstWordId);
  Corpus corpus(spec.sentences);
  for (Sentence& s : corpus) {
    std::uint32_t len = 1;
    while (len < spec.max_length && rng.below(spec.mean_length) != 0) ++len;
    s.resize(len);
    for (TokenId& t : s) t = static_cast<TokenId>(kFirstWordId + static_cast<Index>(rng.below(words)));
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const Sentence& s : corpus) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out << ' ';
      out << s[i];
    }
    out << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  write_corpus(corpus, f);
  if (!f) throw DataError("write failed: " + path.string());
}

Corpus read_corpus(std::istream& in) {
  Corpus corpus;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    Sentence s;
    std::istringstream words(line);
    for (std::string w; words >> w;) {
      TokenId id = 0;
      const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), id);
      if (ec != std::errc{} || ptr != w.data() + w.size() || id < 0) {
        throw DataError("corpus line " + std::to_string(line_no) + ": bad token id '" + w + "'");
      }
      s.push_back(id);
    }
    if (s.empty()) throw DataError("corpus line " + std::to_string(line_no) + " is empty");
    corpus.push_back(std::move(s));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open corpus " + path.string());
  return read_corpus(f);
}

void check_corpus_vocab(const Corpus& corpus, Index vocab) {
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].empty()) throw DataError("sentence " + std::to_string(i) + " is empty");
    for (TokenId t : corpus[i]) {
      if (t < 0 || t >= vocab) {
        throw DataError("sentence " + std::to_string(i) + ": token id " + std::to_string(t) +
                        " outside source vocabulary of " + std::to_string(vocab));
      }
    }
  }
}

}  // namespace beamfuse
