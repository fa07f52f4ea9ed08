// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "beamfuse/error.hpp"
#include "beamfuse/outlayer.hpp"
#include "beamfuse/rng.hpp"

namespace beamfuse {

namespace {

using Clock = std::chrono::steady_clock;

template <typename T>
void keep(const T& value) {
  asm volatile("" : : "g"(&value) : "memory");
}

}  // namespace

void BenchSettings::validate() const {
  if (repetitions < 3) throw ValueError("benchmarks need at least 3 repetitions");
  if (warmup < 1) throw ValueError("benchmarks need at least 1 warmup run");
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw ValueError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double BenchRun::median() const { return median_of(seconds); }
double BenchRun::min() const { return *std::min_element(seconds.begin(), seconds.end()); }

BenchRun time_repeated(const std::function<void()>& fn, const BenchSettings& settings,
                       ConfigEcho config) {
  settings.validate();
  BenchRun run;
  run.config = std::move(config);
  run.repetitions = settings.repetitions;
  run.warmup = settings.warmup;
  for (std::size_t i = 0; i < settings.warmup; ++i) fn();
  for (std::size_t i = 0; i < settings.repetitions; ++i) {
    const auto t0 = Clock::now();
    fn();
    run.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return run;
}

std::vector<std::string> csv_preamble(const ConfigEcho& config, const BenchSettings& settings) {
  std::string line = "config:";
  for (const auto& [k, v] : config) line += " " + k + "=" + v;
  return {line,
          "repetitions=" + std::to_string(settings.repetitions) +
              " warmup=" + std::to_string(settings.warmup) + " statistic=median",
          "note: CPU desk-scale measurements; absolute numbers are not comparable to GPU decoders"};
}

CsvTable bench_sweep_batch(const ModelParams& model, const Corpus& corpus,
                           std::span<const std::size_t> batch_sizes,
                           std::span<const BatchStrategy> strategies, const DecodeOptions& base,
                           const BenchSettings& settings, const ConfigEcho& echo) {
  settings.validate();
  for (std::size_t b : batch_sizes) {
    if (b < 1 || b > corpus.size()) {
      throw ValueError("batch size " + std::to_string(b) + " outside [1, corpus size " +
                       std::to_string(corpus.size()) + "]");
    }
  }
  const GruStepModel step_model(model, PrecisionMode::full32);

  // Outputs first: every configuration must translate identically.
  std::vector<Sentence> reference;
  bool have_reference = false;
  for (BatchStrategy strategy : strategies) {
    for (std::size_t b : batch_sizes) {
      DecodeOptions o = base;
      o.strategy = strategy;
      o.batch_size = b;
      DecodeResult r = decode_corpus(step_model, corpus, o);
      if (!have_reference) {
        reference = std::move(r.translations);
        have_reference = true;
      } else if (r.translations != reference) {
        throw std::logic_error(std::string("bench batch: translations differ for strategy ") +
                               to_string(strategy) + " batch " + std::to_string(b));
      }
    }
  }

  CsvTable t;
  t.comments = csv_preamble(echo, settings);
  t.header = {"strategy", "batch_size",        "sentences",         "median_seconds",
              "min_seconds", "sentences_per_sec", "hypothesis_decodes"};
  for (BatchStrategy strategy : strategies) {
    for (std::size_t b : batch_sizes) {
      DecodeOptions o = base;
      o.strategy = strategy;
      o.batch_size = b;
      std::size_t decodes = 0;
      const BenchRun run = time_repeated(
          [&] {
            DecodeResult r = decode_corpus(step_model, corpus, o);
            decodes = r.stats.hypothesis_decodes;
            keep(r);
          },
          settings);
      const double med = run.median();
      t.add_row({to_string(strategy), std::to_string(b), std::to_string(corpus.size()),
                 format_number(med), format_number(run.min()),
                 format_number(static_cast<double>(corpus.size()) / med), std::to_string(decodes)});
    }
  }
  return t;
}

CsvTable bench_step_timing(const ModelParams& model, const Corpus& corpus, std::size_t batch_size,
                           BatchStrategy strategy, const DecodeOptions& base,
                           const ConfigEcho& echo) {
  DecodeOptions o = base;
  o.strategy = strategy;
  o.batch_size = batch_size;
  const DecodeResult r = decode_corpus(model, corpus, o);

  CsvTable t;
  BenchSettings single{1, 0};
  t.comments = csv_preamble(echo, single);
  t.comments[1] = "single timed decode, per-step wall time";
  t.header = {"strategy", "batch", "step", "active_slots", "seconds"};
  for (const StepRecord& s : r.stats.steps) {
    t.add_row({to_string(strategy), std::to_string(s.batch), std::to_string(s.step),
               std::to_string(s.active_slots), format_number(s.seconds)});
  }
  return t;
}

KernelBenchResult bench_kernels(const KernelBenchConfig& config, const ConfigEcho& echo) {
  config.settings.validate();
  if (config.vectors < 1) throw ValueError("bench kernels needs at least one score vector");
  KernelBenchResult result;
  result.table.comments = csv_preamble(echo, config.settings);
  result.table.header = {"vocab",          "k",           "baseline_add_bias", "baseline_softmax",
                         "baseline_kbest", "baseline_total", "fused_total",   "fused_change_pct",
                         "baseline_passes", "fused_passes"};

  Xoshiro256 rng(config.seed);
  std::normal_distribution<float> normal(0.0f, 2.0f);
  for (Index vocab : config.vocab_sizes) {
    const auto nvec = static_cast<Index>(config.vectors);
    MatrixF scores(nvec, vocab);
    for (Index i = 0; i < scores.size(); ++i) scores.data()[i] = normal(rng);
    VectorF bias(vocab);
    for (Index i = 0; i < vocab; ++i) bias[i] = normal(rng) * 0.25f;

    for (Index k : config.ks) {
      if (k < 1 || k > vocab) {
        throw ValueError("k=" + std::to_string(k) + " outside [1, vocab " + std::to_string(vocab) + "]");
      }

      PassCounter base_passes("baseline output layer"), fused_passes("fused");
      for (Index v = 0; v < nvec; ++v) {
        base_passes.reset();
        fused_passes.reset();
        const auto a = baseline_output(scores.row(v), bias, k, &base_passes);
        const auto b = fused_output(scores.row(v), bias, k, &fused_passes);
        for (std::size_t j = 0; j < a.size(); ++j) {
          if (a[j].index != b[j].index || std::abs(a[j].probability - b[j].probability) > 1e-5f) {
            throw std::logic_error("bench kernels: fused and baseline disagree at vocab " +
                                   std::to_string(vocab) + " k " + std::to_string(k));
          }
        }
      }

      std::vector<VectorF> work(static_cast<std::size_t>(nvec));
      std::vector<double> t_bias, t_soft, t_kbest, t_base, t_fused;
      const std::size_t total_runs = config.settings.warmup + config.settings.repetitions;
      for (std::size_t rep = 0; rep < total_runs; ++rep) {
        auto t0 = Clock::now();
        for (Index v = 0; v < nvec; ++v) work[static_cast<std::size_t>(v)] = add_bias(scores.row(v), bias);
        auto t1 = Clock::now();
        for (auto& w : work) softmax_3pass_inplace(w);
        auto t2 = Clock::now();
        for (auto& w : work) keep(kbest_scan(w, k));
        auto t3 = Clock::now();
        for (Index v = 0; v < nvec; ++v) keep(fused_output(scores.row(v), bias, k));
        auto t4 = Clock::now();
        if (rep < config.settings.warmup) continue;
        const auto sec = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
        t_bias.push_back(sec(t0, t1));
        t_soft.push_back(sec(t1, t2));
        t_kbest.push_back(sec(t2, t3));
        t_base.push_back(sec(t0, t3));
        t_fused.push_back(sec(t3, t4));
      }
      const double base_med = median_of(t_base), fused_med = median_of(t_fused);
      const double change = 100.0 * (fused_med - base_med) / base_med;
      result.table.add_row({std::to_string(vocab), std::to_string(k),
                            format_number(median_of(t_bias)), format_number(median_of(t_soft)),
                            format_number(median_of(t_kbest)), format_number(base_med),
                            format_number(fused_med), format_number(change),
                            std::to_string(base_passes.sweeps()),
                            std::to_string(fused_passes.sweeps())});
      if (vocab >= 30000 && fused_med > 0.9 * base_med) {
        result.warnings.push_back("vocab " + std::to_string(vocab) + " k " + std::to_string(k) +
                                  ": fused is within 10% of baseline (" + format_number(change) +
                                  "%)");
      }
    }
  }
  return result;
}

double emulated16_relative_error(const MatrixF& x, const MatrixF& w) {
  const MatrixF full = linear_rows(x, w, PrecisionMode::full32);
  const MatrixF half = linear_rows(x, w, PrecisionMode::emulated16);
  const double denom = full.cast<double>().norm();
  return denom == 0 ? 0.0 : (half - full).cast<double>().norm() / denom;
}

PrecisionBenchResult bench_precision(const ModelParams& model, const Corpus& corpus,
                                     std::span<const PrecisionMode> modes,
                                     const DecodeOptions& options, const BenchSettings& settings,
                                     const ConfigEcho& echo) {
  settings.validate();
  if (modes.empty()) throw ValueError("bench precision needs at least one mode");

  PrecisionBenchResult result;
  {
    const TensorView* largest = nullptr;
    const auto tensors = model.tensors();
    for (const TensorView& t : tensors) {
      if (t.cols > 1 && (largest == nullptr || t.size() > largest->size())) largest = &t;
    }
    const MatrixF w = Eigen::Map<const MatrixF>(largest->data, largest->rows, largest->cols);
    Xoshiro256 rng(model.seed ^ 0x5eedULL);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    MatrixF x(16, w.cols());
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    result.matmul_rel_error = emulated16_relative_error(x, w);
  }

  result.table.comments = csv_preamble(echo, settings);
  result.table.comments.push_back(
      "emulated16 rounds in software, so it is a fidelity probe rather than a speedup");
  result.table.header = {"mode", "median_seconds", "agreement_rate", "matmul_rel_error"};

  std::vector<Sentence> reference;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const GruStepModel step_model(model, modes[m]);
    std::vector<Sentence> translations = decode_corpus(step_model, corpus, options).translations;
    if (m == 0) reference = translations;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < translations.size(); ++i) agree += translations[i] == reference[i];
    const double rate = corpus.empty() ? 1.0 : static_cast<double>(agree) / static_cast<double>(corpus.size());

    const BenchRun run = time_repeated(
        [&] { keep(decode_corpus(step_model, corpus, options)); }, settings);
    result.table.add_row({to_string(modes[m]), format_number(run.median()), format_number(rate),
                          modes[m] == PrecisionMode::emulated16 ? format_number(result.matmul_rel_error)
                                                               : "0"});
  }
  return result;
}

}  // namespace beamfuse
