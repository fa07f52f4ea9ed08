// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "beamfuse/error.hpp"

namespace beamfuse {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct SentenceBeam {
  EncoderOutput enc;
  DecoderState init;
  std::vector<Hypothesis> finished;
  Index max_steps = 0;
  bool done = false;
  bool forced = false;
};

KBestList<float> run_kernel(const MatrixF& logits, Index row, const VectorF& bias,
                            const DecodeOptions& opts, TimingBreakdown& timing) {
  const Index k = opts.beam.beam_size;
  const auto p = logits.row(row);
  switch (opts.kernel) {
    case OutputKernel::baseline: {
      auto t0 = Clock::now();
      VectorF scores = add_bias(p, bias);
      timing.add_bias += seconds_since(t0);
      t0 = Clock::now();
      softmax_3pass_inplace(scores);
      timing.softmax += seconds_since(t0);
      t0 = Clock::now();
      KBestList<float> list = kbest_scan(scores, k);
      timing.kbest += seconds_since(t0);
      return list;
    }
    case OutputKernel::fused: {
      const auto t0 = Clock::now();
      KBestList<float> list = fused_output(p, bias, k);
      timing.fused_total += seconds_since(t0);
      return list;
    }
    case OutputKernel::argmax1: {
      const auto t0 = Clock::now();
      const Index best = opts.shards > 1 ? argmax_1best_parallel(p, bias, opts.shards)
                                         : argmax_1best(p, bias);
      timing.fused_total += seconds_since(t0);
      // No probabilities on this path; log(1) leaves scores untouched.
      KBestList<float> list(1);
      list.offer(best, 1.0f);
      list[0].probability = 1.0f;
      return list;
    }
  }
  throw ValueError("unknown output kernel");
}

double best_final(const std::vector<Hypothesis>& hyps, const BeamConfig& cfg) {
  double best = -std::numeric_limits<double>::infinity();
  for (const Hypothesis& h : hyps) best = std::max(best, final_score(h, cfg));
  return best;
}

std::vector<Sentence> decode_batch(const StepModel& model, std::span<const Sentence> sentences,
                                   std::size_t first_id, std::size_t batch_index,
                                   const DecodeOptions& opts, DecodeStats& stats) {
  const std::size_t n = sentences.size();
  const Index beam = opts.beam.beam_size;
  const auto beam_u = static_cast<std::size_t>(beam);

  std::vector<SentenceBeam> beams(n);
  Batch batch;
  for (std::size_t s = 0; s < n; ++s) {
    SentenceBeam& sb = beams[s];
    sb.enc = model.encode(sentences[s]);
    sb.init = model.initial_state(sb.enc);
    sb.max_steps = opts.beam.max_steps_for(sentences[s].size());
    for (std::size_t j = 0; j < beam_u; ++j) {
      Slot slot;
      slot.sentence = s;
      slot.hyp.sentence_id = first_id + s;
      slot.hyp.state = sb.init;
      slot.padding = j > 0;
      batch.slots.push_back(std::move(slot));
    }
  }

  while (true) {
    const bool all_done = std::all_of(beams.begin(), beams.end(),
                                      [](const SentenceBeam& b) { return b.done; });
    if (opts.strategy == BatchStrategy::dynamic ? batch.empty() : all_done) break;

    const auto step_start = Clock::now();
    ++batch.step;

    // Row layout. Dynamic decodes exactly the batch; naive keeps every
    // sentence at beam_size rows and fills vacated rows with </s> inputs.
    std::vector<long> row_slot;  // slot index or -1 for a filler row
    std::vector<std::size_t> row_sentence;
    if (opts.strategy == BatchStrategy::dynamic) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        row_slot.push_back(static_cast<long>(i));
        row_sentence.push_back(batch.slots[i].sentence);
      }
    } else {
      std::vector<std::vector<long>> per_sentence(n);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        per_sentence[batch.slots[i].sentence].push_back(static_cast<long>(i));
      }
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < beam_u; ++j) {
          row_slot.push_back(j < per_sentence[s].size() ? per_sentence[s][j] : -1);
          row_sentence.push_back(s);
        }
      }
    }
    const std::size_t rows = row_slot.size();

    std::vector<DecoderState> states(rows);
    std::vector<TokenId> prev(rows);
    std::vector<const EncoderOutput*> encs(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      encs[r] = &beams[row_sentence[r]].enc;
      if (row_slot[r] < 0) {
        states[r] = beams[row_sentence[r]].init;
        prev[r] = kEosId;
      } else {
        const Hypothesis& h = batch.slots[static_cast<std::size_t>(row_slot[r])].hyp;
        states[r] = h.state;
        prev[r] = h.tokens.empty() ? kBosId : h.tokens.back();
      }
    }

    StepOutput out = model.step(states, prev, encs);
    TimingBreakdown phase;
    phase.matmul = out.output_matmul_seconds;

    std::vector<KBestList<float>> kbest;
    kbest.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      kbest.push_back(run_kernel(out.logits, static_cast<Index>(r), model.output_bias(), opts, phase));
    }

    std::vector<long> slot_row(batch.size(), -1);
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_slot[r] >= 0) slot_row[static_cast<std::size_t>(row_slot[r])] = static_cast<long>(r);
    }

    Batch next;
    next.step = batch.step;
    std::vector<std::size_t> removed;
    std::vector<std::vector<std::size_t>> slots_of(n);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!batch.slots[i].padding) slots_of[batch.slots[i].sentence].push_back(i);
    }

    for (std::size_t s = 0; s < n; ++s) {
      SentenceBeam& sb = beams[s];
      if (sb.done || slots_of[s].empty()) continue;

      std::vector<double> parent_scores;
      std::vector<KBestList<float>> parent_kbest;
      for (std::size_t i : slots_of[s]) {
        parent_scores.push_back(batch.slots[i].hyp.score);
        parent_kbest.push_back(kbest[static_cast<std::size_t>(slot_row[i])]);
      }
      const Index width = beam - static_cast<Index>(sb.finished.size());
      const ExpandedBeam expanded = expand_beam(parent_scores, parent_kbest, width);

      auto extend = [&](const BeamCandidate& c, bool finished) {
        const std::size_t parent_slot = slots_of[s][c.parent];
        Slot slot;
        slot.sentence = s;
        slot.hyp = batch.slots[parent_slot].hyp;
        slot.hyp.tokens.push_back(c.token);
        slot.hyp.score = c.score;
        slot.hyp.state = out.states[static_cast<std::size_t>(slot_row[parent_slot])];
        slot.hyp.finished = finished;
        return slot;
      };

      for (const BeamCandidate& c : expanded.finished) {
        Slot slot = extend(c, true);
        sb.finished.push_back(slot.hyp);
        removed.push_back(next.slots.size());
        next.slots.push_back(std::move(slot));
      }
      std::vector<std::size_t> live;
      for (const BeamCandidate& c : expanded.live) {
        live.push_back(next.slots.size());
        next.slots.push_back(extend(c, false));
      }

      if (static_cast<Index>(sb.finished.size()) >= beam || live.empty()) {
        sb.done = true;
      } else if (static_cast<Index>(batch.step) >= sb.max_steps) {
        for (std::size_t i : live) {
          Hypothesis& h = next.slots[i].hyp;
          h.tokens.push_back(kEosId);
          h.finished = true;
          h.forced_eos = true;
          sb.finished.push_back(h);
          removed.push_back(i);
        }
        live.clear();
        sb.done = true;
        sb.forced = true;
      } else if (!sb.finished.empty()) {
        const double bar = best_final(sb.finished, opts.beam);
        const bool hopeless = std::all_of(live.begin(), live.end(), [&](std::size_t i) {
          return final_score(next.slots[i].hyp, opts.beam) < bar;
        });
        if (hopeless) sb.done = true;
      }
      if (sb.done) {
        for (std::size_t i : live) {
          next.slots[i].padding = true;  // retired
          removed.push_back(i);
        }
      }
    }

    std::sort(removed.begin(), removed.end());
    batch = compact_states(std::move(next), removed);

    phase.total = seconds_since(step_start);
    phase.other = std::max(0.0, phase.total - phase.matmul - phase.add_bias - phase.softmax -
                                    phase.kbest - phase.fused_total);
    stats.timing += phase;
    stats.steps.push_back({batch_index, batch.step, rows, phase.total});
    stats.hypothesis_decodes += rows;
  }

  std::vector<Sentence> translations(n);
  for (std::size_t s = 0; s < n; ++s) {
    const SentenceBeam& sb = beams[s];
    if (sb.forced) ++stats.forced_eos;
    const Hypothesis* best = nullptr;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const Hypothesis& h : sb.finished) {
      const double f = final_score(h, opts.beam);
      if (best == nullptr || f > best_score) {
        best = &h;
        best_score = f;
      }
    }
    if (best == nullptr) throw ValueError("decode: sentence finished without a hypothesis");
    translations[s] = best->tokens;
    if (!translations[s].empty() && translations[s].back() == kEosId) translations[s].pop_back();
  }
  return translations;
}

}  // namespace

const char* to_string(BatchStrategy s) { return s == BatchStrategy::naive ? "naive" : "dynamic"; }

const char* to_string(OutputKernel k) {
  switch (k) {
    case OutputKernel::baseline: return "baseline";
    case OutputKernel::fused: return "fused";
    case OutputKernel::argmax1: return "argmax1";
  }
  return "?";
}

BatchStrategy parse_strategy(const std::string& name) {
  if (name == "naive") return BatchStrategy::naive;
  if (name == "dynamic") return BatchStrategy::dynamic;
  throw ValueError("unknown strategy '" + name + "' (expected naive or dynamic)");
}

OutputKernel parse_kernel(const std::string& name) {
  if (name == "baseline") return OutputKernel::baseline;
  if (name == "fused") return OutputKernel::fused;
  if (name == "argmax1") return OutputKernel::argmax1;
  throw ValueError("unknown kernel '" + name + "' (expected baseline, fused or argmax1)");
}

Index BeamConfig::max_steps_for(std::size_t source_length) const {
  if (max_steps > 0) return max_steps;
  return 2 * static_cast<Index>(source_length) + 10;
}

Batch compact_states(Batch batch, std::span<const std::size_t> removed) {
  std::vector<bool> drop(batch.slots.size(), false);
  for (std::size_t i : removed) {
    if (i >= batch.slots.size()) {
      throw ValueError("compact_states: slot " + std::to_string(i) + " out of range");
    }
    const Slot& s = batch.slots[i];
    if (!s.hyp.finished && !s.padding) {
      throw ValueError("compact_states: slot " + std::to_string(i) + " is still live");
    }
    drop[i] = true;
  }
  Batch out;
  out.step = batch.step;
  out.slots.reserve(batch.slots.size());
  for (std::size_t i = 0; i < batch.slots.size(); ++i) {
    if (!drop[i]) out.slots.push_back(std::move(batch.slots[i]));
  }
  return out;
}

double final_score(const Hypothesis& h, const BeamConfig& config) {
  if (h.tokens.empty()) throw ValueError("final_score: hypothesis has no tokens");
  if (!config.length_normalize) return h.score;
  return h.score / static_cast<double>(h.tokens.size());
}

ExpandedBeam expand_beam(std::span<const double> parent_scores,
                         std::span<const KBestList<float>> kbest, Index width) {
  if (parent_scores.size() != kbest.size()) {
    throw ShapeError("expand_beam: " + std::to_string(parent_scores.size()) + " parents but " +
                     std::to_string(kbest.size()) + " k-best lists");
  }
  std::vector<BeamCandidate> all;
  for (std::size_t p = 0; p < kbest.size(); ++p) {
    for (const ClassScore<float>& c : kbest[p]) {
      all.push_back({p, static_cast<TokenId>(c.index),
                     parent_scores[p] + std::log(static_cast<double>(c.probability))});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const BeamCandidate& a, const BeamCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.parent != b.parent) return a.parent < b.parent;
    return a.token < b.token;
  });
  ExpandedBeam out;
  const std::size_t keep = std::min(all.size(), static_cast<std::size_t>(std::max<Index>(width, 0)));
  for (std::size_t i = 0; i < keep; ++i) {
    (all[i].token == kEosId ? out.finished : out.live).push_back(all[i]);
  }
  return out;
}

TimingBreakdown& TimingBreakdown::operator+=(const TimingBreakdown& o) {
  matmul += o.matmul;
  add_bias += o.add_bias;
  softmax += o.softmax;
  kbest += o.kbest;
  fused_total += o.fused_total;
  other += o.other;
  total += o.total;
  return *this;
}

GruStepModel::GruStepModel(const ModelParams& model, PrecisionMode mode) : model_(&model), mode_(mode) {
  if (mode == PrecisionMode::emulated16 && !model.weights_half_rounded) {
    rounded_ = std::make_unique<ModelParams>(half_rounded_copy(model));
    model_ = rounded_.get();
  }
}

EncoderOutput GruStepModel::encode(std::span<const TokenId> tokens) const {
  return beamfuse::encode(*model_, tokens, mode_);
}

DecoderState GruStepModel::initial_state(const EncoderOutput&) const {
  return beamfuse::initial_state(*model_);
}

StepOutput GruStepModel::step(std::span<const DecoderState> states, std::span<const TokenId> prev,
                              std::span<const EncoderOutput* const> enc) const {
  return decode_step(*model_, states, prev, enc, mode_);
}

DecodeResult decode_corpus(const StepModel& model, const Corpus& sentences,
                           const DecodeOptions& options) {
  if (options.beam.beam_size < 1) throw ValueError("beam size must be >= 1");
  if (options.beam.max_steps < 0) throw ValueError("max steps must be >= 1 (0 selects the default)");
  if (options.beam.beam_size > model.target_vocab()) {
    throw ValueError("beam size " + std::to_string(options.beam.beam_size) +
                     " exceeds the target vocabulary");
  }
  if (options.kernel == OutputKernel::argmax1 && options.beam.beam_size != 1) {
    throw ValueError("kernel argmax1 requires beam size 1, got " +
                     std::to_string(options.beam.beam_size));
  }
  if (options.shards < 1 || options.shards > model.target_vocab()) {
    throw ValueError("shard count must be in [1, target vocabulary]");
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].empty()) throw ValueError("sentence " + std::to_string(i) + " is empty");
  }

  DecodeResult result;
  result.translations.reserve(sentences.size());
  const std::size_t chunk = options.batch_size == 0 ? sentences.size() : options.batch_size;
  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < sentences.size(); begin += chunk, ++batch_index) {
    const std::size_t len = std::min(chunk, sentences.size() - begin);
    std::span<const Sentence> part(sentences.data() + begin, len);
    std::vector<Sentence> out = decode_batch(model, part, begin, batch_index, options, result.stats);
    for (Sentence& s : out) result.translations.push_back(std::move(s));
  }
  return result;
}

DecodeResult decode_corpus(const ModelParams& model, const Corpus& sentences,
                           const DecodeOptions& options, PrecisionMode precision) {
  const GruStepModel step_model(model, precision);
  return decode_corpus(step_model, sentences, options);
}

}  // namespace beamfuse
