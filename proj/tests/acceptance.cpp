// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS / WARN / FAIL line per criterion and
// exits non-zero if any criterion fails.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "beamfuse/bench.hpp"
#include "beamfuse/corpus.hpp"
#include "beamfuse/model_io.hpp"
#include "beamfuse/outlayer.hpp"
#include "beamfuse/rng.hpp"
#include "beamfuse/scheduler.hpp"
#include "beamfuse/tensorkit.hpp"

using namespace beamfuse;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, warn, fail };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::pass, std::move(d)}; }
Outcome warn(std::string d) { return {Verdict::warn, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::fail, std::move(d)}; }

VectorF normal_vector(Index n, Xoshiro256& rng, float scale) {
  std::normal_distribution<float> normal(0.0f, scale);
  VectorF v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("beamfuse_accept_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli_binary(const std::string& args, const std::string& env = "") {
  const std::string cmd =
      env + " \"" + std::string(BEAMFUSE_CLI_PATH) + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::string file(const std::string& name) { return (work_dir() / name).string(); }

Outcome kernel_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Xoshiro256 rng(101);
  const Index lengths[] = {10, 1000, 30000, 50000};
  const Index ks[] = {1, 2, 3, 9};
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = lengths[trial % 4], k = ks[(trial / 4) % 4];
    const VectorF p = normal_vector(n, rng, 2.0f), b = normal_vector(n, rng, 0.5f);
    const auto base = baseline_output(p, b, k);
    const auto fused = fused_output(p, b, k);
    if (base.size() != fused.size()) return fail("list sizes differ at trial " + std::to_string(trial));
    for (std::size_t j = 0; j < base.size(); ++j) {
      if (base[j].index != fused[j].index) {
        return fail("index mismatch at trial " + std::to_string(trial));
      }
      worst = std::max(worst, double(std::abs(base[j].probability - fused[j].probability)));
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string d = "1000 pairs, max |dp| = " + fmt(worst) + ", " + fmt(secs) + " s";
  if (worst > 1e-5) return fail(d);
  if (secs >= 60) return fail(d + " (over 60 s)");
  return pass(d);
}

Outcome pass_counts() {
  Xoshiro256 rng(102);
  for (Index k : {1, 2, 3, 9}) {
    const VectorF p = normal_vector(5000, rng, 1), b = normal_vector(5000, rng, 1);
    PassCounter base("baseline"), fused("fused"), argmax("argmax");
    baseline_output(p, b, k, &base);
    fused_output(p, b, k, &fused);
    argmax_1best(p, b, &argmax);
    if (base.sweeps() != 5 || fused.sweeps() != 1 || argmax.sweeps() != 1) {
      return fail("k=" + std::to_string(k) + ": baseline " + std::to_string(base.sweeps()) +
                  ", fused " + std::to_string(fused.sweeps()));
    }
  }
  return pass("baseline 5, fused 1, argmax 1 for k in {1,2,3,9}");
}

Outcome online_softmax() {
  Xoshiro256 rng(103);
  double worst = 0;
  int vectors = 0;
  for (Index n : {10, 1000, 30000}) {
    for (float scale : {1.0f, 8.0f}) {
      const VectorF p = normal_vector(n, rng, scale);
      VectorF copy = p;
      const auto three = softmax_3pass_inplace(copy);
      std::vector<Index> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), Index{0});
      const VectorF zero = VectorF::Zero(n);
      for (int r = 0; r < 100; ++r) {
        std::shuffle(perm.begin(), perm.end(), rng);
        VectorF q(n);
        for (Index i = 0; i < n; ++i) q[i] = p[perm[static_cast<std::size_t>(i)]];
        SoftmaxNormalizer<float> online{};
        fused_output(q, zero, 1, nullptr, &online);
        if (online.max != three.max) return fail("max differs");
        worst = std::max(worst, std::abs(online.sum - three.sum) / three.sum);
      }
      ++vectors;
    }
  }
  const std::string d = std::to_string(vectors) + " vectors x 100 permutations, max rel err " + fmt(worst);
  return worst <= 1e-6 ? pass(d) : fail(d);
}

Outcome shard_invariance() {
  Xoshiro256 rng(104);
  int planted = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = trial % 10 == 0 ? 70000 : 10000;
    VectorF p = normal_vector(n, rng, 1), b = normal_vector(n, rng, 1);
    if (trial % 4 == 0) {
      const Index a = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      Index c = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      if (c == a) c = (a + n / 2) % n;
      p[a] = p[c] = 50;
      b[a] = b[c] = 0;
      ++planted;
    }
    const Index ref = argmax_1best(p, b);
    for (Index shards : {1, 2, 3, 7, 64}) {
      if (argmax_1best_parallel(p, b, shards) != ref) {
        return fail("trial " + std::to_string(trial) + " shards " + std::to_string(shards));
      }
    }
  }
  return pass("1000 vectors (" + std::to_string(planted) + " with duplicated maxima), shards {1,2,3,7,64}");
}

// Model and corpus shared by criteria 5, 6 and 8.
struct DeskSetup {
  ModelParams model = generate_model({1000, 1000, 64, 64}, 1);
  Corpus corpus = [] {
    CorpusSpec cs;
    cs.sentences = 256;
    cs.vocab = 1000;
    cs.seed = 1;
    return generate_corpus(cs);
  }();
};

const DeskSetup& desk() {
  static const DeskSetup setup;
  return setup;
}

Outcome strategy_transparency() {
  save_model(desk().model, work_dir() / "desk.bfm");
  save_corpus(desk().corpus, work_dir() / "desk.txt");
  for (int beam = 1; beam <= 5; ++beam) {
    std::string outputs[2];
    int i = 0;
    for (const char* strategy : {"naive", "dynamic"}) {
      const std::string out = file(std::string("tr_") + strategy + ".txt");
      const int code = run_cli_binary("decode -m " + file("desk.bfm") + " -i " + file("desk.txt") +
                                      " --beam " + std::to_string(beam) + " --strategy " +
                                      strategy + " -o " + out);
      if (code != 0) return fail("decode exited with " + std::to_string(code));
      outputs[i++] = slurp(out);
    }
    if (outputs[0] != outputs[1] || outputs[0].empty()) {
      return fail("translation files differ at beam " + std::to_string(beam));
    }
  }
  return pass("256 sentences, vocab 1000, state 64, beams 1-5: files byte-identical");
}

class FinishAt final : public StepModel {
 public:
  Index target_vocab() const override { return 8; }
  EncoderOutput encode(std::span<const TokenId> tokens) const override {
    return {MatrixF::Constant(1, 1, static_cast<float>(tokens[0])), MatrixF::Zero(1, 1)};
  }
  DecoderState initial_state(const EncoderOutput& enc) const override {
    VectorF h(2);
    h << enc.annotations(0, 0), 0.0f;
    return {h, VectorF::Zero(1)};
  }
  StepOutput step(std::span<const DecoderState> states, std::span<const TokenId>,
                  std::span<const EncoderOutput* const>) const override {
    StepOutput out;
    out.logits = MatrixF::Constant(static_cast<Index>(states.size()), 8, -20.0f);
    for (Index r = 0; r < out.logits.rows(); ++r) {
      DecoderState s = states[static_cast<std::size_t>(r)];
      s.h1[1] += 1;
      out.logits(r, s.h1[1] >= s.h1[0] ? kEosId : 3) = 10;
      out.states.push_back(s);
      out.attention.emplace_back();
    }
    return out;
  }
  const VectorF& output_bias() const override { return bias_; }

 private:
  VectorF bias_ = VectorF::Zero(8);
};

Outcome work_accounting() {
  DecodeOptions o;
  o.strategy = BatchStrategy::naive;
  const FinishAt scripted;
  const auto sn = decode_corpus(scripted, Corpus{{2}, {4}}, o).stats.hypothesis_decodes;
  o.strategy = BatchStrategy::dynamic;
  const auto sd = decode_corpus(scripted, Corpus{{2}, {4}}, o).stats.hypothesis_decodes;
  if (sn != 8 || sd != 6) {
    return fail("2-sentence case: naive " + std::to_string(sn) + ", dynamic " + std::to_string(sd));
  }

  const auto& d = desk();
  const DecodeResult dyn = decode_corpus(d.model, d.corpus, o);
  o.strategy = BatchStrategy::naive;
  const DecodeResult naive = decode_corpus(d.model, d.corpus, o);
  std::size_t per_step = 0;
  for (const StepRecord& s : dyn.stats.steps) per_step += s.active_slots;
  // At beam 1 a sentence occupies one slot per step it runs, and it runs at
  // most 2 * length + 10 steps.
  const std::string d_str = "desk corpus: dynamic " + std::to_string(dyn.stats.hypothesis_decodes) +
                            " vs naive " + std::to_string(naive.stats.hypothesis_decodes) +
                            ", per-step sum " + std::to_string(per_step) + "; 2-sentence case 6 vs 8";
  if (dyn.stats.hypothesis_decodes != per_step) return fail(d_str);
  if (dyn.stats.hypothesis_decodes >= naive.stats.hypothesis_decodes) return fail(d_str);
  std::size_t limit = 0;
  for (const Sentence& s : d.corpus) limit += 2 * s.size() + 10;
  const std::string a = ", step-limit bound " + std::to_string(limit) + " (" +
                        std::to_string(dyn.stats.forced_eos) + " forced)";
  const bool all_forced = dyn.stats.forced_eos == d.corpus.size();
  const bool ok = all_forced ? dyn.stats.hypothesis_decodes == limit
                             : dyn.stats.hypothesis_decodes <= limit;
  return ok ? pass(d_str + a) : fail(d_str + a);
}

Outcome fused_speedup() {
  KernelBenchConfig cfg;
  cfg.vocab_sizes = {30000};
  cfg.ks = {1, 3};
  cfg.vectors = 64;
  cfg.settings = {7, 2};
  const KernelBenchResult r = bench_kernels(cfg);
  const auto base = r.table.numeric_column("baseline_total");
  const auto fused = r.table.numeric_column("fused_total");
  std::string d;
  bool slower = false, under_margin = false;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double change = 100.0 * (fused[i] - base[i]) / base[i];
    d += (i ? ", " : "") + std::string("k=") + r.table.rows[i][1] + " " + fmt(change) + "%";
    slower |= fused[i] >= base[i];
    under_margin |= fused[i] > 0.9 * base[i];
  }
  d = "vocab 30000 fused vs baseline median: " + d;
  if (slower) return fail(d);
  if (under_margin) return warn(d + " (faster, but under the 10% margin)");
  return pass(d);
}

Outcome step_shape() {
  const auto& d = desk();
  const CsvTable dyn =
      bench_step_timing(d.model, d.corpus, d.corpus.size(), BatchStrategy::dynamic, DecodeOptions{});
  const CsvTable naive =
      bench_step_timing(d.model, d.corpus, d.corpus.size(), BatchStrategy::naive, DecodeOptions{});
  const auto a = dyn.numeric_column("active_slots");
  const auto n = naive.numeric_column("active_slots");
  if (a.empty() || n.empty()) return fail("no steps recorded");
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] > a[i - 1]) return fail("dynamic active slots increase at step " + std::to_string(i + 1));
  }
  for (double v : n) {
    if (v != n.front()) return fail("naive active slots not constant");
  }
  const double low = *std::min_element(a.begin(), a.end());
  const std::string s = "dynamic " + fmt(a.front()) + " -> " + fmt(low) + " slots over " +
                        std::to_string(a.size()) + " steps; naive constant " + fmt(n.front());
  return low < 0.5 * a.front() ? pass(s) : fail(s);
}

Outcome precision_fidelity() {
  Xoshiro256 rng(109);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  MatrixF a(256, 256), b(256, 256);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = normal(rng);
  const MatrixF full = matmul(a, b);
  const MatrixF half = matmul(a, b, PrecisionMode::emulated16);
  const double err = (half - full).cast<double>().norm() / full.cast<double>().norm();
  const bool exact = round_to_half(0.1f) == 0.0999755859375f;
  const std::string d = "rel Frobenius error " + fmt(err) + ", round_to_half(0.1) " +
                        (exact ? "exact" : "wrong");
  return err <= 1e-2 && exact ? pass(d) : fail(d);
}

Outcome determinism() {
  std::vector<std::string> runs;
  for (const std::string threads : {"1", "1", "4"}) {
    const std::string env = "BEAMFUSE_THREADS=" + threads;
    const std::string tag = threads + "_" + std::to_string(runs.size());
    const std::string m = file("det_" + tag + ".bfm"), c = file("det_" + tag + ".txt"),
                      o = file("det_" + tag + ".out"), h = file("det_" + tag + ".half");
    if (run_cli_binary("genmodel --vocab 2000 --state 64 --seed 11 -o " + m, env) != 0 ||
        run_cli_binary("gencorpus --n 64 --vocab 2000 --seed 11 -o " + c, env) != 0 ||
        run_cli_binary("decode -m " + m + " -i " + c + " --beam 3 -o " + o, env) != 0 ||
        run_cli_binary("decode -m " + m + " -i " + c + " --precision emulated16 -o " + h, env) != 0) {
      return fail("a command failed with BEAMFUSE_THREADS=" + threads);
    }
    runs.push_back(slurp(m) + '\x1f' + slurp(c) + '\x1f' + slurp(o) + '\x1f' + slurp(h));
  }
  if (runs[0] != runs[1]) return fail("two runs with 1 worker differ");
  if (runs[0] != runs[2]) return fail("1 and 4 workers differ");
  return pass("genmodel, gencorpus, decode (full32, emulated16): identical across runs and workers {1,4}");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"kernel equivalence", kernel_equivalence},
      {"pass counts", pass_counts},
      {"online softmax algebra", online_softmax},
      {"shard invariance", shard_invariance},
      {"strategy transparency", strategy_transparency},
      {"work accounting", work_accounting},
      {"fused speedup", fused_speedup},
      {"step-timing shape", step_shape},
      {"precision fidelity", precision_fidelity},
      {"determinism", determinism},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.verdict == Verdict::pass ? "PASS" : o.verdict == Verdict::warn ? "WARN" : "FAIL";
    std::printf("[%s] %2zu %s: %s\n", tag, i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failures += o.verdict == Verdict::fail;
  }
  fs::remove_all(work_dir());
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
