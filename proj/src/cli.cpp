// SPDX-License-Identifier: Apache-2.0
#include "beamfuse/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "beamfuse/bench.hpp"
#include "beamfuse/corpus.hpp"
#include "beamfuse/error.hpp"
#include "beamfuse/model_io.hpp"
#include "beamfuse/scheduler.hpp"
#include "beamfuse/svg.hpp"

namespace beamfuse {

namespace {

namespace fs = std::filesystem;

int default_threads() {
  if (const char* env = std::getenv("BEAMFUSE_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw ValueError(std::string("BEAMFUSE_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream o;
  for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << v[i];
  return o.str();
}

void print_config(std::ostream& err, const std::string& command, const ConfigEcho& echo) {
  err << "# beamfuse " << command;
  for (const auto& [k, v] : echo) err << ' ' << k << '=' << v;
  err << '\n';
}

struct ModelArgs {
  std::string path;
  Index vocab = 1000;
  Index state = 64;
  Index embed = 0;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("-m,--model", path, "BFM1 model; generated from the options below when absent");
    app->add_option("--vocab", vocab, "Source and target vocabulary of a generated model");
    app->add_option("--state", state, "State dimension of a generated model");
    app->add_option("--embed", embed, "Embedding dimension of a generated model (0 = state)");
    app->add_option("--seed", seed, "Seed of a generated model");
  }

  ModelParams resolve(ConfigEcho& echo) const {
    if (!path.empty()) {
      echo.emplace_back("model", path);
      return load_model(path);
    }
    echo.emplace_back("model", "generated");
    echo.emplace_back("vocab", std::to_string(vocab));
    echo.emplace_back("state", std::to_string(state));
    echo.emplace_back("embed", std::to_string(embed == 0 ? state : embed));
    echo.emplace_back("seed", std::to_string(seed));
    return generate_model({vocab, vocab, embed == 0 ? state : embed, state}, seed);
  }
};

struct CorpusArgs {
  std::string path;
  std::size_t n = 256;
  std::uint64_t seed = 7;

  void add(CLI::App* app, std::size_t default_n) {
    n = default_n;
    app->add_option("-i,--input", path, "Corpus file; generated when absent");
    app->add_option("--n", n, "Sentences in a generated corpus");
    app->add_option("--corpus-seed", seed, "Seed of a generated corpus");
  }

  Corpus resolve(const ModelParams& model, ConfigEcho& echo) const {
    Corpus c;
    if (!path.empty()) {
      echo.emplace_back("corpus", path);
      c = load_corpus(path);
    } else {
      echo.emplace_back("corpus", "generated");
      echo.emplace_back("n", std::to_string(n));
      echo.emplace_back("corpus_seed", std::to_string(seed));
      c = generate_corpus({n, model.dims.vocab_src, seed});
    }
    check_corpus_vocab(c, model.dims.vocab_src);
    return c;
  }
};

struct DecodeArgs {
  Index beam = 1;
  std::string strategy = "dynamic";
  std::string kernel = "fused";
  std::string precision = "full32";
  std::size_t batch_size = 0;
  Index shards = 1;
  Index max_steps = 0;
  bool length_norm = false;

  void add(CLI::App* app, bool with_strategy = true) {
    app->add_option("--beam", beam, "Beam size");
    if (with_strategy) {
      app->add_option("--strategy", strategy, "Batching strategy: naive or dynamic");
    }
    app->add_option("--kernel", kernel, "Output-layer kernel: baseline, fused or argmax1");
    app->add_option("--precision", precision, "Matmul precision: full32 or emulated16");
    app->add_option("--batch-size", batch_size, "Sentences per mini-batch (0 = whole corpus)");
    app->add_option("--shards", shards, "Shards for the argmax1 kernel");
    app->add_option("--max-steps", max_steps, "Decode step limit (0 = 2 x source length + 10)");
    app->add_flag("--length-norm", length_norm, "Rank finished hypotheses by score / length");
  }

  DecodeOptions resolve(ConfigEcho& echo) const {
    DecodeOptions o;
    o.beam.beam_size = beam;
    o.beam.max_steps = max_steps;
    o.beam.length_normalize = length_norm;
    o.strategy = parse_strategy(strategy);
    o.kernel = parse_kernel(kernel);
    o.batch_size = batch_size;
    o.shards = shards;
    if (beam < 1) throw ValueError("--beam must be >= 1");
    if (o.kernel == OutputKernel::argmax1 && beam != 1) {
      throw ValueError("--kernel argmax1 requires --beam 1");
    }
    echo.emplace_back("beam", std::to_string(beam));
    echo.emplace_back("strategy", strategy);
    echo.emplace_back("kernel", kernel);
    echo.emplace_back("precision", precision);
    echo.emplace_back("batch_size", std::to_string(batch_size));
    echo.emplace_back("shards", std::to_string(shards));
    echo.emplace_back("max_steps", std::to_string(max_steps));
    echo.emplace_back("length_norm", length_norm ? "1" : "0");
    return o;
  }
};

struct BenchArgs {
  std::string out_dir = ".";
  std::size_t reps = 3;
  std::size_t warmup = 1;

  void add(CLI::App* app) {
    app->add_option("--out-dir", out_dir, "Directory for CSV and SVG output");
    app->add_option("--reps", reps, "Timed repetitions (>= 3)");
    app->add_option("--warmup", warmup, "Discarded warmup runs (>= 1)");
  }

  BenchSettings settings(ConfigEcho& echo) const {
    BenchSettings s{reps, warmup};
    s.validate();
    echo.emplace_back("reps", std::to_string(reps));
    echo.emplace_back("warmup", std::to_string(warmup));
    fs::create_directories(out_dir);
    return s;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw DataError("write failed: " + path.string());
}

void write_outputs(std::ostream& out, const fs::path& dir, const std::string& stem,
                   const CsvTable& table, const std::optional<Chart>& chart) {
  const fs::path csv = dir / (stem + ".csv");
  table.save(csv);
  out << csv.string() << '\n';
  if (chart) {
    const fs::path svg = dir / (stem + ".svg");
    write_text(svg, emit_svg(*chart));
    out << svg.string() << '\n';
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Batched beam-search decoding with fused output-layer kernels", "beamfuse"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: BEAMFUSE_THREADS or all cores)");

  // genmodel
  auto* genmodel = app.add_subcommand("genmodel", "Write a seeded random BFM1 model");
  Index gm_vocab = 30000, gm_src = 0, gm_tgt = 0, gm_state = 256, gm_embed = 0;
  std::uint64_t gm_seed = 1;
  std::string gm_out, gm_vocab_out;
  genmodel->add_option("--vocab", gm_vocab, "Source and target vocabulary size");
  genmodel->add_option("--src-vocab", gm_src, "Source vocabulary override (0 = --vocab)");
  genmodel->add_option("--tgt-vocab", gm_tgt, "Target vocabulary override (0 = --vocab)");
  genmodel->add_option("--state", gm_state, "Recurrent state dimension");
  genmodel->add_option("--embed", gm_embed, "Embedding dimension (0 = state)");
  genmodel->add_option("--seed", gm_seed, "Weight seed");
  genmodel->add_option("-o,--output", gm_out, "Model file")->required();
  genmodel->add_option("--vocab-out", gm_vocab_out, "Also write a synthetic target vocabulary file");

  // gencorpus
  auto* gencorpus = app.add_subcommand("gencorpus", "Write a seeded synthetic token-id corpus");
  CorpusSpec gc;
  std::string gc_out;
  gencorpus->add_option("--n", gc.sentences, "Number of sentences");
  gencorpus->add_option("--vocab", gc.vocab, "Source vocabulary size");
  gencorpus->add_option("--seed", gc.seed, "Corpus seed");
  gencorpus->add_option("--mean-length", gc.mean_length, "Mean of the geometric length distribution");
  gencorpus->add_option("--max-length", gc.max_length, "Length cap");
  gencorpus->add_option("-o,--output", gc_out, "Corpus file (default: stdout)");

  // decode
  auto* decode = app.add_subcommand("decode", "Translate a token-id corpus");
  std::string dc_model, dc_input, dc_output, dc_stats, dc_vocab;
  DecodeArgs dc;
  decode->add_option("-m,--model", dc_model, "BFM1 model")->required();
  decode->add_option("-i,--input", dc_input, "Corpus file")->required();
  decode->add_option("-o,--output", dc_output, "Translations file (default: stdout)");
  decode->add_option("--stats", dc_stats, "Per-step statistics CSV");
  decode->add_option("--tgt-vocab-file", dc_vocab, "Print words from this vocabulary instead of ids");
  dc.add(decode);

  // bench
  auto* bench = app.add_subcommand("bench", "Run a benchmark and write CSV/SVG");
  bench->require_subcommand(1);

  auto* b_steps = bench->add_subcommand("steps", "Per-step time and active slots for one batch");
  ModelArgs bs_model;
  CorpusArgs bs_corpus;
  DecodeArgs bs_decode;
  BenchArgs bs_bench;
  std::string bs_strategy = "both";
  bs_model.add(b_steps);
  bs_corpus.add(b_steps, 256);
  bs_decode.add(b_steps, false);
  bs_bench.add(b_steps);
  b_steps->add_option("--strategy", bs_strategy, "naive, dynamic or both");

  auto* b_batch = bench->add_subcommand("batch", "Throughput against batch size");
  ModelArgs bb_model;
  CorpusArgs bb_corpus;
  DecodeArgs bb_decode;
  BenchArgs bb_bench;
  std::vector<std::size_t> bb_sizes{1, 4, 16, 64};
  bb_model.add(b_batch);
  bb_corpus.add(b_batch, 0);
  bb_decode.add(b_batch, false);
  bb_bench.add(b_batch);
  b_batch->add_option("--sizes", bb_sizes, "Batch sizes")->delimiter(',');

  auto* b_kernels = bench->add_subcommand("kernels", "Fused against baseline output layer");
  KernelBenchConfig bk;
  BenchArgs bk_bench;
  b_kernels->add_option("--vocab", bk.vocab_sizes, "Vocabulary sizes")->delimiter(',');
  b_kernels->add_option("--k", bk.ks, "k-best sizes")->delimiter(',');
  b_kernels->add_option("--vectors", bk.vectors, "Score vectors per repetition");
  b_kernels->add_option("--seed", bk.seed, "Score seed");
  bk_bench.add(b_kernels);

  auto* b_precision = bench->add_subcommand("precision", "full32 against emulated16 matmul");
  ModelArgs bp_model;
  CorpusArgs bp_corpus;
  DecodeArgs bp_decode;
  BenchArgs bp_bench;
  std::vector<std::string> bp_modes{"full32", "emulated16"};
  bp_model.add(b_precision);
  bp_corpus.add(b_precision, 64);
  bp_decode.add(b_precision);
  bp_bench.add(b_precision);
  b_precision->add_option("--modes", bp_modes, "Precision modes; the first is the reference")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    ConfigEcho echo;
    const int nthreads = threads > 0 ? threads : default_threads();
    set_num_threads(nthreads);
    echo.emplace_back("threads", std::to_string(nthreads));

    if (*genmodel) {
      const ModelDims dims{gm_src ? gm_src : gm_vocab, gm_tgt ? gm_tgt : gm_vocab,
                           gm_embed ? gm_embed : gm_state, gm_state};
      echo.insert(echo.end(), {{"vocab_src", std::to_string(dims.vocab_src)},
                               {"vocab_tgt", std::to_string(dims.vocab_tgt)},
                               {"embed", std::to_string(dims.embed_dim)},
                               {"state", std::to_string(dims.state_dim)},
                               {"seed", std::to_string(gm_seed)},
                               {"output", gm_out}});
      print_config(err, "genmodel", echo);
      dims.validate();
      save_model(generate_model(dims, gm_seed), gm_out);
      if (!gm_vocab_out.empty()) save_vocab(synthetic_vocab(dims.vocab_tgt), gm_vocab_out);
      return kExitOk;
    }

    if (*gencorpus) {
      echo.insert(echo.end(), {{"n", std::to_string(gc.sentences)},
                               {"vocab", std::to_string(gc.vocab)},
                               {"seed", std::to_string(gc.seed)},
                               {"mean_length", std::to_string(gc.mean_length)},
                               {"max_length", std::to_string(gc.max_length)}});
      print_config(err, "gencorpus", echo);
      const Corpus c = generate_corpus(gc);
      if (gc_out.empty()) {
        write_corpus(c, out);
      } else {
        save_corpus(c, gc_out);
      }
      return kExitOk;
    }

    if (*decode) {
      echo.emplace_back("model", dc_model);
      echo.emplace_back("input", dc_input);
      const DecodeOptions opts = dc.resolve(echo);
      const PrecisionMode precision = parse_precision(dc.precision);
      print_config(err, "decode", echo);
      const ModelParams model = load_model(dc_model);
      const Corpus corpus = load_corpus(dc_input);
      check_corpus_vocab(corpus, model.dims.vocab_src);
      std::vector<std::string> words;
      if (!dc_vocab.empty()) {
        words = load_vocab(dc_vocab);
        if (static_cast<Index>(words.size()) != model.dims.vocab_tgt) {
          throw DataError("vocabulary file has " + std::to_string(words.size()) +
                          " entries, model target vocabulary is " +
                          std::to_string(model.dims.vocab_tgt));
        }
      }
      const DecodeResult result = decode_corpus(model, corpus, opts, precision);

      std::ostringstream text;
      for (const Sentence& s : result.translations) {
        for (std::size_t i = 0; i < s.size(); ++i) {
          text << (i ? " " : "");
          if (words.empty()) {
            text << s[i];
          } else {
            text << words[static_cast<std::size_t>(s[i])];
          }
        }
        text << '\n';
      }
      if (dc_output.empty()) {
        out << text.str();
      } else {
        write_text(dc_output, text.str());
      }
      if (!dc_stats.empty()) {
        CsvTable t;
        t.comments = {"config: threads=" + std::to_string(nthreads) + " " + [&] {
          std::string s;
          for (const auto& [k, v] : echo) s += k + "=" + v + " ";
          return s;
        }()};
        t.comments.push_back("hypothesis_decodes=" + std::to_string(result.stats.hypothesis_decodes) +
                             " forced_eos=" + std::to_string(result.stats.forced_eos));
        t.header = {"batch", "step", "active_slots", "seconds"};
        for (const StepRecord& r : result.stats.steps) {
          t.add_row({std::to_string(r.batch), std::to_string(r.step),
                     std::to_string(r.active_slots), format_number(r.seconds)});
        }
        t.save(dc_stats);
      }
      err << "# decoded " << result.translations.size() << " sentences, "
          << result.stats.hypothesis_decodes << " hypothesis-decodes, "
          << result.stats.forced_eos << " stopped at the step limit\n";
      return kExitOk;
    }

    if (*b_steps) {
      const BenchSettings s = bs_bench.settings(echo);
      (void)s;
      const ModelParams model = bs_model.resolve(echo);
      const Corpus corpus = bs_corpus.resolve(model, echo);
      const DecodeOptions opts = bs_decode.resolve(echo);
      std::vector<BatchStrategy> strategies;
      if (bs_strategy == "both") {
        strategies = {BatchStrategy::naive, BatchStrategy::dynamic};
      } else {
        strategies = {parse_strategy(bs_strategy)};
      }
      echo.emplace_back("steps_strategy", bs_strategy);
      print_config(err, "bench steps", echo);
      const std::size_t batch = opts.batch_size == 0 ? corpus.size() : opts.batch_size;
      CsvTable all;
      for (BatchStrategy st : strategies) {
        CsvTable t = bench_step_timing(model, corpus, batch, st, opts, echo);
        if (all.header.empty()) {
          all = std::move(t);
        } else {
          for (auto& r : t.rows) all.rows.push_back(std::move(r));
        }
      }
      CsvTable first_batch = all;
      first_batch.rows.erase(
          std::remove_if(first_batch.rows.begin(), first_batch.rows.end(),
                         [](const auto& r) { return r[1] != "0"; }),
          first_batch.rows.end());
      write_outputs(out, bs_bench.out_dir, "steps", all,
                    chart_from_csv(first_batch, ChartKind::line, "step", "seconds", "strategy",
                                   "Time per decoding step"));
      write_text(fs::path(bs_bench.out_dir) / "steps_active.svg",
                 emit_svg(chart_from_csv(first_batch, ChartKind::line, "step", "active_slots",
                                         "strategy", "Active slots per decoding step")));
      out << (fs::path(bs_bench.out_dir) / "steps_active.svg").string() << '\n';
      return kExitOk;
    }

    if (*b_batch) {
      const BenchSettings s = bb_bench.settings(echo);
      const ModelParams model = bb_model.resolve(echo);
      CorpusArgs corpus_args = bb_corpus;
      if (corpus_args.n == 0) corpus_args.n = *std::max_element(bb_sizes.begin(), bb_sizes.end());
      const Corpus corpus = corpus_args.resolve(model, echo);
      const DecodeOptions opts = bb_decode.resolve(echo);
      echo.emplace_back("sizes", join(bb_sizes));
      print_config(err, "bench batch", echo);
      const std::vector<BatchStrategy> strategies{BatchStrategy::naive, BatchStrategy::dynamic};
      const CsvTable t = bench_sweep_batch(model, corpus, bb_sizes, strategies, opts, s, echo);
      write_outputs(out, bb_bench.out_dir, "batch", t,
                    chart_from_csv(t, ChartKind::line, "batch_size", "sentences_per_sec",
                                   "strategy", "Speed against batch size"));
      return kExitOk;
    }

    if (*b_kernels) {
      bk.settings = bk_bench.settings(echo);
      echo.emplace_back("vocab", join(bk.vocab_sizes));
      echo.emplace_back("k", join(bk.ks));
      echo.emplace_back("vectors", std::to_string(bk.vectors));
      echo.emplace_back("seed", std::to_string(bk.seed));
      print_config(err, "bench kernels", echo);
      const KernelBenchResult r = bench_kernels(bk, echo);
      for (const auto& w : r.warnings) err << "warning: " << w << '\n';

      Chart chart;
      chart.kind = ChartKind::bar;
      chart.title = "Output layer time: baseline against fused";
      chart.x_label = "k";
      chart.y_label = "seconds";
      const auto ks = r.table.numeric_column("k");
      const auto base = r.table.numeric_column("baseline_total");
      const auto fused = r.table.numeric_column("fused_total");
      chart.series = {{"baseline", {}}, {"fused", {}}};
      for (std::size_t i = 0; i < ks.size(); ++i) {
        chart.series[0].points.emplace_back(ks[i], base[i]);
        chart.series[1].points.emplace_back(ks[i], fused[i]);
      }
      if (bk.vocab_sizes.size() > 1) chart.x_label = "k (all vocabulary sizes)";
      write_outputs(out, bk_bench.out_dir, "kernels", r.table, chart);
      return kExitOk;
    }

    if (*b_precision) {
      const BenchSettings s = bp_bench.settings(echo);
      const ModelParams model = bp_model.resolve(echo);
      const Corpus corpus = bp_corpus.resolve(model, echo);
      const DecodeOptions opts = bp_decode.resolve(echo);
      std::vector<PrecisionMode> modes;
      for (const auto& m : bp_modes) modes.push_back(parse_precision(m));
      echo.emplace_back("modes", join(bp_modes));
      print_config(err, "bench precision", echo);
      const PrecisionBenchResult r = bench_precision(model, corpus, modes, opts, s, echo);
      write_outputs(out, bp_bench.out_dir, "precision", r.table, std::nullopt);
      return kExitOk;
    }
  } catch (const ValueError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace beamfuse
