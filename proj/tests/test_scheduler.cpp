// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "beamfuse/error.hpp"
#include "beamfuse/rng.hpp"
#include "beamfuse/scheduler.hpp"

using namespace beamfuse;

namespace {

// Scripted model: the first source token says at which step the sentence
// emits </s>. Before that, token 3 is likely and token 4 less so.
class ScriptedModel final : public StepModel {
 public:
  Index target_vocab() const override { return 8; }

  EncoderOutput encode(std::span<const TokenId> tokens) const override {
    EncoderOutput e;
    e.annotations = MatrixF::Constant(1, 1, static_cast<float>(tokens[0]));
    e.keys = e.annotations;
    return e;
  }

  DecoderState initial_state(const EncoderOutput& enc) const override {
    VectorF h1(2);
    h1 << enc.annotations(0, 0), 0.0f;
    return {h1, VectorF::Zero(1)};
  }

  StepOutput step(std::span<const DecoderState> states, std::span<const TokenId>,
                  std::span<const EncoderOutput* const>) const override {
    StepOutput out;
    const auto rows = static_cast<Index>(states.size());
    out.logits = MatrixF::Constant(rows, 8, -20.0f);
    for (Index r = 0; r < rows; ++r) {
      DecoderState s = states[static_cast<std::size_t>(r)];
      s.h1[1] += 1;
      if (s.h1[1] >= s.h1[0]) {
        out.logits(r, kEosId) = 10;
      } else {
        out.logits(r, 3) = 10;
        out.logits(r, 4) = 8;
      }
      out.states.push_back(s);
      out.attention.emplace_back();
    }
    return out;
  }

  const VectorF& output_bias() const override { return bias_; }

 private:
  VectorF bias_ = VectorF::Zero(8);
};

// Seeded GRU with weights scaled up so outputs vary with the input and some
// sentences reach </s> before the step limit.
ModelParams lively_model(std::uint64_t seed, Index vocab = 40) {
  ModelParams m = generate_model({vocab, vocab, 16, 16}, seed);
  for (TensorView& t : m.tensors()) {
    for (Index i = 0; i < t.size(); ++i) t.data[i] *= 20.0f;
  }
  return m;
}

Corpus small_corpus(std::uint64_t seed, std::size_t n, Index vocab = 40) {
  CorpusSpec cs;
  cs.sentences = n;
  cs.vocab = vocab;
  cs.seed = seed;
  cs.mean_length = 6;
  cs.max_length = 15;
  return generate_corpus(cs);
}

DecodeOptions options(Index beam, BatchStrategy strategy,
                      OutputKernel kernel = OutputKernel::fused) {
  DecodeOptions o;
  o.beam.beam_size = beam;
  o.strategy = strategy;
  o.kernel = kernel;
  return o;
}

KBestList<float> kbest_of(std::initializer_list<std::pair<Index, double>> entries) {
  KBestList<float> list(entries.size());
  for (auto [index, logprob] : entries) list.offer(index, static_cast<float>(logprob));
  for (auto& e : list) e.probability = std::exp(e.score);
  return list;
}

Slot live_slot(std::size_t sentence) {
  Slot s;
  s.sentence = sentence;
  s.hyp.sentence_id = sentence;
  s.hyp.tokens = {3};
  return s;
}

Slot finished_slot(std::size_t sentence) {
  Slot s = live_slot(sentence);
  s.hyp.tokens.push_back(kEosId);
  s.hyp.finished = true;
  return s;
}

}  // namespace

TEST_CASE("beam 1: sentences finishing at steps 2 and 4") {
  const ScriptedModel model;
  const Corpus corpus{{2}, {4}};
  const auto naive = decode_corpus(model, corpus, options(1, BatchStrategy::naive));
  const auto dynamic = decode_corpus(model, corpus, options(1, BatchStrategy::dynamic));
  CHECK(naive.stats.hypothesis_decodes == 8);
  CHECK(dynamic.stats.hypothesis_decodes == 6);
  CHECK(naive.translations == dynamic.translations);
  CHECK(dynamic.translations == std::vector<Sentence>{{3}, {3, 3, 3}});
  std::vector<std::size_t> active;
  for (const auto& s : dynamic.stats.steps) active.push_back(s.active_slots);
  CHECK(active == std::vector<std::size_t>{2, 2, 1, 1});
}

TEST_CASE("beam 2: sentences finishing at steps 1 and 3") {
  const ScriptedModel model;
  const Corpus corpus{{1}, {3}};
  const auto naive = decode_corpus(model, corpus, options(2, BatchStrategy::naive));
  const auto dynamic = decode_corpus(model, corpus, options(2, BatchStrategy::dynamic));
  CHECK(naive.stats.hypothesis_decodes == 12);
  CHECK(dynamic.stats.hypothesis_decodes == 8);
  CHECK(naive.translations == dynamic.translations);
  CHECK(dynamic.translations == std::vector<Sentence>{{}, {3, 3}});
}

TEST_CASE("step limit forces </s>") {
  const ScriptedModel model;
  DecodeOptions o = options(1, BatchStrategy::dynamic);
  o.beam.max_steps = 5;
  const auto r = decode_corpus(model, Corpus{{100}, {2}}, o);
  CHECK(r.translations[0] == Sentence(5, 3));
  CHECK(r.translations[1] == Sentence{3});
  CHECK(r.stats.forced_eos == 1);
}

TEST_CASE("property: work accounting at beam 1") {
  const ScriptedModel model;
  Xoshiro256 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    Corpus corpus;
    std::size_t sum = 0, longest = 0;
    const std::size_t n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = static_cast<TokenId>(1 + rng.below(9));
      corpus.push_back({f});
      sum += static_cast<std::size_t>(f);
      longest = std::max(longest, static_cast<std::size_t>(f));
    }
    const auto naive = decode_corpus(model, corpus, options(1, BatchStrategy::naive));
    const auto dynamic = decode_corpus(model, corpus, options(1, BatchStrategy::dynamic));
    CHECK(dynamic.stats.hypothesis_decodes == sum);
    CHECK(naive.stats.hypothesis_decodes == n * longest);
    CHECK(naive.translations == dynamic.translations);
    for (std::size_t s = 1; s < dynamic.stats.steps.size(); ++s) {
      CHECK(dynamic.stats.steps[s].active_slots <= dynamic.stats.steps[s - 1].active_slots);
    }
  }
}

TEST_CASE("property: batching strategy does not change translations") {
  const ModelParams model = lively_model(7);
  const Corpus corpus = small_corpus(2, 24);
  for (Index beam = 1; beam <= 5; ++beam) {
    const auto dynamic = decode_corpus(model, corpus, options(beam, BatchStrategy::dynamic));
    const auto naive = decode_corpus(model, corpus, options(beam, BatchStrategy::naive));
    CHECK(naive.translations == dynamic.translations);
    CHECK(dynamic.stats.hypothesis_decodes <= naive.stats.hypothesis_decodes);
    for (std::size_t b : {1, 5, 24}) {
      DecodeOptions o = options(beam, BatchStrategy::dynamic);
      o.batch_size = b;
      CHECK(decode_corpus(model, corpus, o).translations == dynamic.translations);
    }
  }
}

TEST_CASE("lively model exercises both </s> and the step limit") {
  const ModelParams model = lively_model(7);
  const Corpus corpus = small_corpus(2, 24);
  const auto r = decode_corpus(model, corpus, options(3, BatchStrategy::dynamic));
  CHECK(r.stats.forced_eos > 0);
  CHECK(r.stats.forced_eos < corpus.size());
}

TEST_CASE("property: output kernel does not change translations") {
  const ModelParams model = lively_model(8);
  const Corpus corpus = small_corpus(3, 20);
  for (Index beam = 1; beam <= 5; ++beam) {
    const auto fused = decode_corpus(model, corpus, options(beam, BatchStrategy::dynamic));
    const auto base =
        decode_corpus(model, corpus, options(beam, BatchStrategy::dynamic, OutputKernel::baseline));
    CHECK(base.translations == fused.translations);
  }
  const auto fused = decode_corpus(model, corpus, options(1, BatchStrategy::naive));
  for (Index shards : {1, 3, 40}) {
    DecodeOptions o = options(1, BatchStrategy::naive, OutputKernel::argmax1);
    o.shards = shards;
    CHECK(decode_corpus(model, corpus, o).translations == fused.translations);
  }
}

TEST_CASE("translations end at </s> or at the step limit") {
  const ModelParams model = lively_model(9);
  const Corpus corpus = small_corpus(4, 20);
  const auto r = decode_corpus(model, corpus, options(2, BatchStrategy::dynamic));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& t = r.translations[i];
    CHECK(std::find(t.begin(), t.end(), kEosId) == t.end());
    CHECK(static_cast<Index>(t.size()) <= 2 * static_cast<Index>(corpus[i].size()) + 10);
  }
}

TEST_CASE("decode_corpus validation") {
  const ModelParams model = lively_model(7);
  CHECK_THROWS_AS(decode_corpus(model, Corpus{{3}}, options(3, BatchStrategy::dynamic,
                                                            OutputKernel::argmax1)),
                  ValueError);
  CHECK_THROWS_AS(decode_corpus(model, Corpus{{3}, {}}, options(1, BatchStrategy::dynamic)),
                  ValueError);
  CHECK_THROWS_AS(decode_corpus(model, Corpus{{3}}, options(0, BatchStrategy::dynamic)),
                  ValueError);
  CHECK(decode_corpus(model, Corpus{}, options(1, BatchStrategy::dynamic)).translations.empty());
}

TEST_CASE("expand_beam examples") {
  SUBCASE("beam 1 keeps the 1-best continuation") {
    const std::vector<double> parents{-0.5};
    const std::vector<KBestList<float>> lists{kbest_of({{6, -0.2}})};
    const auto e = expand_beam(parents, lists, 1);
    REQUIRE(e.live.size() == 1);
    CHECK(e.live[0].token == 6);
    CHECK(e.live[0].score == doctest::Approx(-0.7));
    CHECK(e.finished.empty());
  }
  SUBCASE("beam 2 enumerate-and-sort") {
    const std::vector<double> parents{0, 0};
    const std::vector<KBestList<float>> lists{kbest_of({{5, -1.0}, {6, -2.5}}),
                                              kbest_of({{7, -1.5}, {8, -3.0}})};
    const auto e = expand_beam(parents, lists, 2);
    REQUIRE(e.live.size() == 2);
    CHECK(e.live[0].parent == 0);
    CHECK(e.live[0].score == doctest::Approx(-1.0));
    CHECK(e.live[1].parent == 1);
    CHECK(e.live[1].score == doctest::Approx(-1.5));
  }
  SUBCASE("best candidate is </s>") {
    const std::vector<double> parents{0};
    const std::vector<KBestList<float>> lists{kbest_of({{kEosId, -0.1}})};
    const auto e = expand_beam(parents, lists, 1);
    CHECK(e.live.empty());
    REQUIRE(e.finished.size() == 1);
    CHECK(e.finished[0].token == kEosId);
  }
  SUBCASE("ties prefer the lower parent, then the lower class") {
    const std::vector<double> parents{0, 0};
    const std::vector<KBestList<float>> lists{kbest_of({{9, -1.0}, {4, -1.0}}),
                                              kbest_of({{3, -1.0}})};
    const auto e = expand_beam(parents, lists, 3);
    REQUIRE(e.live.size() == 3);
    CHECK(e.live[0].parent == 0);
    CHECK(e.live[0].token == 4);
    CHECK(e.live[1].token == 9);
    CHECK(e.live[2].parent == 1);
  }
  CHECK_THROWS_AS(expand_beam(std::vector<double>{0, 0}, std::vector<KBestList<float>>{}, 1),
                  ShapeError);
}

TEST_CASE("compact_states examples") {
  Batch b;
  b.slots = {finished_slot(0), finished_slot(1), finished_slot(2)};
  b.slots[0] = live_slot(0);
  b.slots[2] = live_slot(2);

  const std::vector<std::size_t> one{1};
  const Batch c = compact_states(b, one);
  REQUIRE(c.size() == 2);
  CHECK(c.slots[0].sentence == 0);
  CHECK(c.slots[1].sentence == 2);

  const Batch same = compact_states(b, std::vector<std::size_t>{});
  CHECK(same.size() == 3);

  Batch done;
  done.slots = {finished_slot(0), finished_slot(1)};
  CHECK(compact_states(done, std::vector<std::size_t>{0, 1}).empty());

  CHECK_THROWS_AS(compact_states(b, std::vector<std::size_t>{0}), ValueError);
  CHECK_THROWS_AS(compact_states(b, std::vector<std::size_t>{3}), ValueError);

  Batch pad;
  pad.slots = {live_slot(0)};
  pad.slots[0].padding = true;
  CHECK(compact_states(pad, std::vector<std::size_t>{0}).empty());
}

TEST_CASE("final_score examples") {
  Hypothesis a, b;
  a.tokens = {3, 4, 5, kEosId};
  a.score = -4.0;
  b.tokens = {3, kEosId};
  b.score = -3.5;
  BeamConfig raw, norm;
  norm.length_normalize = true;
  CHECK(final_score(a, norm) == -1.0);
  CHECK(final_score(a, raw) == -4.0);
  CHECK(final_score(b, raw) > final_score(a, raw));
  CHECK(final_score(a, norm) > final_score(b, norm));
  CHECK_THROWS_AS(final_score(Hypothesis{}, raw), ValueError);
}

TEST_CASE("length normalization changes the selected translation") {
  // Step 1: </s> with log-prob -0.9, token 3 with -0.6. The token-3 path then
  // continues with -0.2 and ends with -0.3: raw -1.1 loses to -0.9, but the
  // per-token average -0.367 wins. The live path is never behind the finished
  // one before it ends, so neither mode stops early.
  class TwoPath final : public StepModel {
   public:
    Index target_vocab() const override { return 6; }
    EncoderOutput encode(std::span<const TokenId>) const override {
      return {MatrixF::Zero(1, 1), MatrixF::Zero(1, 1)};
    }
    DecoderState initial_state(const EncoderOutput&) const override {
      return {VectorF::Zero(1), VectorF::Zero(1)};
    }
    StepOutput step(std::span<const DecoderState> states, std::span<const TokenId>,
                    std::span<const EncoderOutput* const>) const override {
      StepOutput out;
      out.logits.resize(static_cast<Index>(states.size()), 6);
      for (Index r = 0; r < out.logits.rows(); ++r) {
        DecoderState s = states[static_cast<std::size_t>(r)];
        s.h1[0] += 1;
        auto fill = [&](TokenId main, double p_main, TokenId second, double p_second) {
          const int rest = second < 0 ? 5 : 4;
          const double p_rest = (1.0 - p_main - p_second) / rest;
          for (Index c = 0; c < 6; ++c) out.logits(r, c) = static_cast<float>(std::log(p_rest));
          out.logits(r, main) = static_cast<float>(std::log(p_main));
          if (second >= 0) out.logits(r, second) = static_cast<float>(std::log(p_second));
        };
        if (s.h1[0] == 1) {
          fill(3, std::exp(-0.6), kEosId, std::exp(-0.9));
        } else if (s.h1[0] == 2) {
          fill(3, std::exp(-0.2), -1, 0);
        } else {
          fill(kEosId, std::exp(-0.3), -1, 0);
        }
        out.states.push_back(s);
        out.attention.emplace_back();
      }
      return out;
    }
    const VectorF& output_bias() const override { return bias_; }

   private:
    VectorF bias_ = VectorF::Zero(6);
  } model;

  DecodeOptions raw = options(2, BatchStrategy::dynamic);
  DecodeOptions norm = raw;
  norm.beam.length_normalize = true;
  CHECK(decode_corpus(model, Corpus{{3}}, raw).translations[0] == Sentence{});
  CHECK(decode_corpus(model, Corpus{{3}}, norm).translations[0] == Sentence{3, 3});
  raw.strategy = BatchStrategy::naive;
  CHECK(decode_corpus(model, Corpus{{3}}, raw).translations[0] == Sentence{});
}

TEST_CASE("strategy and kernel names") {
  CHECK(parse_strategy("naive") == BatchStrategy::naive);
  CHECK(parse_kernel(to_string(OutputKernel::argmax1)) == OutputKernel::argmax1);
  CHECK_THROWS_AS(parse_strategy("greedy"), ValueError);
  CHECK_THROWS_AS(parse_kernel("softmax"), ValueError);
}
