// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale measurement harness. Every benchmark checks that the compared
// configurations produce identical outputs before it reports any time, and
// reports the median over repetitions after discarded warmup runs.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "beamfuse/csv.hpp"
#include "beamfuse/scheduler.hpp"

namespace beamfuse {

struct BenchSettings {
  std::size_t repetitions = 3;  // >= 3
  std::size_t warmup = 1;       // >= 1
  void validate() const;
};

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct BenchRun {
  ConfigEcho config;
  std::size_t repetitions = 0;
  std::size_t warmup = 0;
  std::vector<double> seconds;  // one per timed repetition

  double median() const;
  double min() const;
};

/// Runs `fn` warmup times untimed, then `repetitions` times on a monotonic clock.
BenchRun time_repeated(const std::function<void()>& fn, const BenchSettings& settings,
                       ConfigEcho config = {});

/// '#' lines every CSV starts with: the config echo, repetition counts and a
/// note that the measurements are CPU desk-scale.
std::vector<std::string> csv_preamble(const ConfigEcho& config, const BenchSettings& settings);

double median_of(std::vector<double> v);

/// Throughput against batch size. Columns: strategy, batch_size, sentences, median_seconds,
/// min_seconds, sentences_per_sec, hypothesis_decodes.
CsvTable bench_sweep_batch(const ModelParams& model, const Corpus& corpus,
                           std::span<const std::size_t> batch_sizes,
                           std::span<const BatchStrategy> strategies, const DecodeOptions& base,
                           const BenchSettings& settings, const ConfigEcho& echo = {});

/// Per-step wall time: one decode, one row per step.
/// Columns: strategy, batch, step, active_slots, seconds.
CsvTable bench_step_timing(const ModelParams& model, const Corpus& corpus, std::size_t batch_size,
                           BatchStrategy strategy, const DecodeOptions& base,
                           const ConfigEcho& echo = {});

struct KernelBenchConfig {
  std::vector<Index> vocab_sizes{30000};
  std::vector<Index> ks{1, 3, 9};
  std::size_t vectors = 64;  // score vectors per repetition
  std::uint64_t seed = 1;
  BenchSettings settings;
};

struct KernelBenchResult {
  CsvTable table;
  std::vector<std::string> warnings;
};

/// Output-layer kernel timings over random score vectors. Columns: vocab, k,
/// baseline_add_bias, baseline_softmax, baseline_kbest, baseline_total,
/// fused_total, fused_change_pct, baseline_passes, fused_passes. Times are
/// medians in seconds per `vectors` vectors.
KernelBenchResult bench_kernels(const KernelBenchConfig& config, const ConfigEcho& echo = {});

struct PrecisionBenchResult {
  CsvTable table;
  double matmul_rel_error = 0;  // emulated16 vs full32 on the largest weight matrix
};

/// Precision comparison. Columns: mode, median_seconds, agreement_rate,
/// matmul_rel_error. Agreement is measured against the first mode.
PrecisionBenchResult bench_precision(const ModelParams& model, const Corpus& corpus,
                                     std::span<const PrecisionMode> modes,
                                     const DecodeOptions& options, const BenchSettings& settings,
                                     const ConfigEcho& echo = {});

/// Relative Frobenius error ||emulated16 - full32|| / ||full32|| of x * w^T.
double emulated16_relative_error(const MatrixF& x, const MatrixF& w);

}  // namespace beamfuse
