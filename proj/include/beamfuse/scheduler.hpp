// SPDX-License-Identifier: Apache-2.0
//
// Batched beam search with two batching strategies.
//
// naive:   every slot created for the batch is decoded at every step until
//          the last sentence finishes. Finished slots are fed </s> and their
//          outputs discarded.
// dynamic: after each step, slots whose hypothesis finished are removed and
//          the survivors are packed densely, so the batch only shrinks.
//
// A batch starts with sentences x beam_size slots. Within a sentence the
// live width is beam_size minus the number of finished hypotheses.
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "beamfuse/corpus.hpp"
#include "beamfuse/outlayer.hpp"
#include "beamfuse/seqmodel.hpp"

namespace beamfuse {

enum class BatchStrategy { naive, dynamic };
enum class OutputKernel { baseline, fused, argmax1 };

const char* to_string(BatchStrategy s);
const char* to_string(OutputKernel k);
BatchStrategy parse_strategy(const std::string& name);
OutputKernel parse_kernel(const std::string& name);

struct BeamConfig {
  Index beam_size = 1;
  Index max_steps = 0;  // 0: 2 * source length + 10, per sentence
  bool length_normalize = false;

  Index max_steps_for(std::size_t source_length) const;
};

struct Hypothesis {
  std::size_t sentence_id = 0;
  std::vector<TokenId> tokens;  // emitted tokens, </s> included once finished
  double score = 0;             // sum of log-probabilities
  DecoderState state;
  bool finished = false;
  bool forced_eos = false;  // </s> appended at the step limit
};

struct Slot {
  std::size_t sentence = 0;
  Hypothesis hyp;
  bool padding = false;  // occupies compute but never extends the beam
};

struct Batch {
  std::vector<Slot> slots;
  std::size_t step = 0;

  bool empty() const { return slots.empty(); }
  std::size_t size() const { return slots.size(); }
};

/// Drops the listed slots and packs the rest in their original order.
/// Throws ValueError if a listed slot holds a live, non-padding hypothesis.
Batch compact_states(Batch batch, std::span<const std::size_t> removed);

/// Ranking score of a finished hypothesis: raw, or divided by token count.
double final_score(const Hypothesis& h, const BeamConfig& config);

struct BeamCandidate {
  std::size_t parent = 0;  // index into the parents span
  TokenId token = 0;
  double score = 0;
};

struct ExpandedBeam {
  std::vector<BeamCandidate> live;
  std::vector<BeamCandidate> finished;  // emitted </s>
};

/// Scores parent.score + log(prob) for every (parent, class) pair in the
/// per-parent k-best lists and keeps the best `width`. Order: score
/// descending, then lower parent, then lower class id. Candidates emitting
/// </s> land in `finished` and do not take a live slot.
ExpandedBeam expand_beam(std::span<const double> parent_scores,
                         std::span<const KBestList<float>> kbest, Index width);

/// Accumulated phase times, seconds.
struct TimingBreakdown {
  double matmul = 0;  // output-layer projection
  double add_bias = 0;
  double softmax = 0;
  double kbest = 0;
  double fused_total = 0;  // fused or argmax kernel, all phases at once
  double other = 0;        // recurrent layers, attention, beam bookkeeping
  double total = 0;

  TimingBreakdown& operator+=(const TimingBreakdown& o);
};

struct StepRecord {
  std::size_t batch = 0;
  std::size_t step = 0;  // 1-based within the batch
  std::size_t active_slots = 0;
  double seconds = 0;
};

struct DecodeStats {
  std::vector<StepRecord> steps;
  std::size_t hypothesis_decodes = 0;  // slots decoded, summed over steps
  std::size_t forced_eos = 0;          // sentences stopped by the step limit
  TimingBreakdown timing;
};

struct DecodeOptions {
  BeamConfig beam;
  BatchStrategy strategy = BatchStrategy::dynamic;
  OutputKernel kernel = OutputKernel::fused;
  std::size_t batch_size = 0;  // sentences per mini-batch, 0 = whole corpus
  Index shards = 1;            // argmax1 only: >1 selects the sharded kernel
};

struct DecodeResult {
  std::vector<Sentence> translations;  // </s> stripped, corpus order
  DecodeStats stats;
};

/// What the scheduler needs from a model.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual Index target_vocab() const = 0;
  virtual EncoderOutput encode(std::span<const TokenId> tokens) const = 0;
  virtual DecoderState initial_state(const EncoderOutput& enc) const = 0;
  virtual StepOutput step(std::span<const DecoderState> states, std::span<const TokenId> prev,
                          std::span<const EncoderOutput* const> enc) const = 0;
  virtual const VectorF& output_bias() const = 0;
};

/// StepModel over ModelParams. In emulated16 mode the weights are rounded
/// once up front.
class GruStepModel final : public StepModel {
 public:
  GruStepModel(const ModelParams& model, PrecisionMode mode);

  Index target_vocab() const override { return model_->dims.vocab_tgt; }
  EncoderOutput encode(std::span<const TokenId> tokens) const override;
  DecoderState initial_state(const EncoderOutput& enc) const override;
  StepOutput step(std::span<const DecoderState> states, std::span<const TokenId> prev,
                  std::span<const EncoderOutput* const> enc) const override;
  const VectorF& output_bias() const override { return model_->out_b; }

 private:
  std::unique_ptr<ModelParams> rounded_;
  const ModelParams* model_;
  PrecisionMode mode_;
};

DecodeResult decode_corpus(const StepModel& model, const Corpus& sentences,
                           const DecodeOptions& options);

DecodeResult decode_corpus(const ModelParams& model, const Corpus& sentences,
                           const DecodeOptions& options,
                           PrecisionMode precision = PrecisionMode::full32);

}  // namespace beamfuse
