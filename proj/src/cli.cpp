// Copyright 2026 The ckbasr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ckbasr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "ckbasr/ctc.hpp"
#include "ckbasr/error.hpp"
#include "ckbasr/eval.hpp"
#include "ckbasr/lm.hpp"
#include "ckbasr/synth.hpp"
#include "ckbasr/textnorm.hpp"
#include "ckbasr/util.hpp"

namespace ckb {

ModelConfig ModelConfigFromRun(const RunConfig& run, int vocab_size) {
  ModelConfig c = ModelConfig::Preset(run.GetString("model.preset", "desk"), vocab_size);
  for (const std::string& key : run.KeysIn("model")) {
    if (key == "preset") continue;
    if (key == "vocab_size") {
      if (run.GetInt("model.vocab_size", vocab_size) != vocab_size) {
        throw ValidationError("model.vocab_size disagrees with the corpus vocabulary size " +
                              std::to_string(vocab_size));
      }
      continue;
    }
    c.Set(key, run.GetString("model." + key));
  }
  c.vocab_size = vocab_size;
  c.Validate();
  return c;
}

std::string UtteranceId(const ManifestEntry& entry) {
  return std::filesystem::path(entry.audio_filename).stem().string();
}

namespace {

// Output goes to a file when `key` is set, otherwise to `fallback`.
class Sink {
 public:
  Sink(const RunConfig& run, const std::string& key, std::ostream& fallback)
      : path_(run.GetPath(key)), fallback_(fallback) {}
  ~Sink() = default;

  std::ostream& stream() { return path_.empty() ? fallback_ : buffer_; }
  void Finish() {
    if (!path_.empty()) WriteFile(path_, buffer_.str());
  }

 private:
  std::filesystem::path path_;
  std::ostream& fallback_;
  std::ostringstream buffer_;
};

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

int CmdNormalize(const RunConfig& run, std::ostream& out, std::ostream& err) {
  const std::string input = ReadFile(run.RequirePath("paths.input"));
  const Normalizer normalizer =
      run.Has("textnorm.table") ? Normalizer::FromFile(run.GetPath("textnorm.table")) : Normalizer::Default();
  Sink sink(run, "paths.output", out);
  size_t lines = 0, dropped = 0;
  for (const std::string& line : SplitLines(input)) {
    const NormalizeResult r = normalizer.Normalize(line);
    sink.stream() << r.text.utf8() << '\n';
    ++lines;
    dropped += r.dropped;
  }
  sink.Finish();
  err << "lines=" << lines << " dropped=" << dropped << '\n';
  return 0;
}

int CmdStats(const RunConfig& run, const std::vector<std::string>& manifests, std::ostream& out,
             std::ostream& err) {
  std::vector<std::string> specs = manifests;
  if (specs.empty() && run.Has("paths.manifest")) specs.push_back(run.GetPath("paths.manifest").string());
  if (specs.empty()) throw ValidationError("stats needs at least one --manifest");
  std::vector<std::pair<std::string, std::vector<ManifestEntry>>> splits;
  std::filesystem::path first_dir;
  for (const std::string& spec : specs) {
    std::string name;
    std::filesystem::path path;
    const size_t eq = spec.find('=');
    if (eq != std::string::npos) {
      name = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    } else {
      path = spec;
      name = path.stem().string();
    }
    if (first_dir.empty()) first_dir = path.parent_path();
    splits.emplace_back(name, ReadManifest(path));
  }
  const CorpusStats stats = ComputeCorpusStats(splits, run.GetPath("paths.audio_root", first_dir));
  Sink sink(run, "paths.output", out);
  sink.stream() << RenderStatsReport(stats);
  sink.Finish();
  for (const std::string& e : stats.errors) err << "warning: " << e << '\n';
  return stats.errors.empty() ? 0 : 1;
}

int CmdSplit(const RunConfig& run, std::ostream& out) {
  const std::filesystem::path manifest = run.RequirePath("paths.manifest");
  const std::vector<ManifestEntry> entries = ReadManifest(manifest);
  const DatasetSplit split =
      SplitDataset(entries, run.GetDouble("split.fraction", 0.9), run.GetUnsigned("split.seed", 1));
  const std::filesystem::path dir = run.GetPath("paths.output_dir", manifest.parent_path());
  const std::string name = run.GetString("split.name", manifest.stem().string());
  const std::filesystem::path train = dir / (name + ".train.tsv");
  const std::filesystem::path valid = dir / (name + ".valid.tsv");
  WriteFile(train, FormatManifest(split.train));
  WriteFile(valid, FormatManifest(split.validation));
  out << "train=" << split.train.size() << " " << train.string() << '\n';
  out << "valid=" << split.validation.size() << " " << valid.string() << '\n';
  return 0;
}

int CmdTrain(const RunConfig& run, std::ostream& out) {
  const std::filesystem::path manifest = run.RequirePath("paths.manifest");
  const std::vector<ManifestEntry> train_entries = ReadManifest(manifest);
  std::vector<ManifestEntry> valid_entries;
  std::filesystem::path valid_root;
  if (run.Has("paths.valid_manifest")) {
    const std::filesystem::path vm = run.GetPath("paths.valid_manifest");
    valid_entries = ReadManifest(vm);
    valid_root = run.GetPath("paths.valid_audio_root", vm.parent_path());
  }
  const std::filesystem::path audio_root = run.GetPath("paths.audio_root", manifest.parent_path());
  const std::filesystem::path out_dir = run.RequirePath("paths.output_dir");

  std::vector<NormalizedText> texts;
  for (const ManifestEntry& e : train_entries) texts.push_back(NormalizeText(e.transcript).text);
  for (const ManifestEntry& e : valid_entries) texts.push_back(NormalizeText(e.transcript).text);
  const Vocabulary vocab = BuildVocabulary(texts);
  const ModelConfig config = ModelConfigFromRun(run, vocab.size());
  const ModelParams init = InitParams(config);

  const int threads = static_cast<int>(run.GetInt("train.threads", 1));
  const double fix = run.GetDouble("train.fix_duration", 0.0);
  const std::vector<TrainingExample> train =
      PrepareExamples(train_entries, audio_root, vocab, init, config, fix, threads);
  const std::vector<TrainingExample> valid =
      PrepareExamples(valid_entries, valid_root, vocab, init, config, fix, threads);

  TrainOptions opt;
  opt.epochs = static_cast<int>(run.GetInt("train.epochs", 100));
  opt.batch_size = static_cast<int>(run.GetInt("train.batch_size", 8));
  opt.seed = run.GetUnsigned("train.seed", 1);
  opt.num_threads = threads;
  opt.adadelta.rho = run.GetDouble("train.rho", 0.95);
  opt.adadelta.epsilon = run.GetDouble("train.epsilon", 1e-6);
  opt.stop_at_valid_wer = run.GetDouble("train.stop_at_wer", -1.0);
  if (!(opt.adadelta.rho > 0.0 && opt.adadelta.rho < 1.0)) throw ValidationError("train.rho must be in (0, 1)");
  if (!(opt.adadelta.epsilon > 0.0)) throw ValidationError("train.epsilon must be positive");
  std::string history;
  opt.on_epoch = [&](const EpochRecord& r) {
    const std::string line = FormatHistoryLine(r);
    history += line + '\n';
    out << line << '\n' << std::flush;
  };
  const TrainResult result = Train(train, valid, vocab, init, config, opt);
  SaveCheckpoint({config, vocab, result.params}, out_dir / "model.ckpt");
  WriteFile(out_dir / "history.txt", history);
  out << "best_epoch=" << result.best_epoch << '\n';
  return 0;
}

int CmdDecode(const RunConfig& run, std::ostream& out) {
  const Checkpoint ck = LoadCheckpoint(run.RequirePath("paths.checkpoint"));
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;
  if (run.Has("paths.wav")) {
    const std::filesystem::path wav = run.GetPath("paths.wav");
    entries.push_back({wav.filename().string(), 0, "", "", ""});
    root = wav.parent_path();
  } else {
    const std::filesystem::path manifest = run.RequirePath("paths.manifest");
    entries = ReadManifest(manifest);
    root = run.GetPath("paths.audio_root", manifest.parent_path());
  }

  std::optional<NgramModel> lm;
  if (run.Has("decode.lm")) {
    lm = ReadStandard(run.GetPath("decode.lm"));
    const auto it = lm->metadata().find("vocab_hash");
    if (it != lm->metadata().end() && it->second != HexU64(ck.vocab.Hash())) {
      throw ValidationError("vocabulary hash mismatch: LM was built for " + it->second + ", checkpoint has " +
                            HexU64(ck.vocab.Hash()));
    }
  }
  BeamSearchOptions opt;
  opt.alpha = run.GetDouble("decode.alpha", lm ? 0.5 : 0.0);
  opt.beta = run.GetDouble("decode.beta", opt.alpha != 0.0 ? 1.0 : 0.0);
  opt.beam_width = static_cast<int>(run.GetInt("decode.beam_width", 16));
  const double fix = run.GetDouble("decode.fix_duration", 0.0);

  std::map<std::string, size_t> seen;
  Sink sink(run, "paths.output", out);
  for (const ManifestEntry& e : entries) {
    const std::string id = UtteranceId(e);
    if (!seen.emplace(id, 0).second) throw ValidationError("duplicate utterance id " + id);
    const FeatureSequence f = PrepareFeatures(LoadWaveform(root / e.audio_filename), ck.params, ck.config, fix);
    Rng rng(0);
    const LogitSequence lp = Forward(f, ck.params, ck.config, Mode::kEval, rng);
    Hypothesis best;
    if (opt.beam_width == 1 && opt.alpha == 0.0) {
      best = GreedyDecode(lp, ck.vocab);
      best.fused_score = best.acoustic_score + opt.beta * best.word_count;
    } else {
      best = BeamSearchDecode(lp, ck.vocab, lm ? &*lm : nullptr, opt).front();
    }
    sink.stream() << id << '\t' << best.text.utf8() << '\t' << Fixed(best.fused_score, 6) << '\n';
  }
  sink.Finish();
  return 0;
}

int CmdLmTrain(const RunConfig& run, std::ostream& out) {
  const std::string corpus = ReadFile(run.RequirePath("paths.lm_corpus"));
  std::vector<NormalizedText> sentences;
  for (const std::string& line : SplitLines(corpus)) {
    NormalizedText t = NormalizeText(line).text;
    if (!t.empty()) sentences.push_back(std::move(t));
  }
  if (sentences.empty()) throw ValidationError("LM corpus has no sentences after normalization");
  const std::string smoothing = run.GetString("lm.smoothing", "absolute");
  Smoothing s;
  if (smoothing == "absolute") {
    s = Smoothing::kAbsoluteDiscount;
  } else if (smoothing == "mle") {
    s = Smoothing::kMle;
  } else {
    throw ValidationError("lm.smoothing must be absolute or mle, got '" + smoothing + "'");
  }
  NgramModel model =
      TrainNgram(sentences, static_cast<int>(run.GetInt("lm.order", 3)), s, run.GetDouble("lm.discount", 0.75));
  if (run.Has("paths.checkpoint")) {
    model.SetMetadata("vocab_hash", HexU64(LoadCheckpoint(run.GetPath("paths.checkpoint")).vocab.Hash()));
  }
  WriteStandard(model, run.RequirePath("paths.output"));
  out << "sentences=" << sentences.size() << " order=" << model.order()
      << " words=" << model.vocabulary_size() << '\n';
  return 0;
}

int CmdLmEval(const RunConfig& run, std::ostream& out) {
  const NgramModel model = ReadStandard(run.RequirePath("paths.lm"));
  std::vector<NormalizedText> sentences;
  for (const std::string& line : SplitLines(ReadFile(run.RequirePath("paths.text")))) {
    NormalizedText t = NormalizeText(line).text;
    if (!t.empty()) sentences.push_back(std::move(t));
  }
  if (sentences.empty()) throw ValidationError("evaluation text has no sentences");
  double log10_total = 0.0;
  int64_t words = 0, oov = 0;
  for (const NormalizedText& s : sentences) {
    const LmScore sc = ScoreSentence(model, s);
    log10_total += sc.log10_prob;
    words += sc.word_count;
    oov += sc.oov_count;
  }
  out << "sentences=" << sentences.size() << '\n'
      << "words=" << words << '\n'
      << "oov=" << oov << '\n'
      << "log10_prob=" << Fixed(log10_total, 6) << '\n'
      << "perplexity=" << Fixed(Perplexity(model, sentences), 6) << '\n';
  return 0;
}

std::vector<std::pair<std::string, std::string>> ReadIdText(const std::filesystem::path& path,
                                                            const std::string& what) {
  const std::string contents = ReadFile(path);
  try {
    std::vector<std::pair<std::string, std::string>> out;
    for (const ManifestEntry& e : ParseManifest(contents)) out.emplace_back(UtteranceId(e), e.transcript);
    return out;
  } catch (const Error&) {
    // Not a manifest; fall through to id<TAB>text rows.
  }
  std::vector<std::pair<std::string, std::string>> out;
  const std::vector<std::string> lines = SplitLines(contents);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (Trim(lines[i]).empty()) continue;
    const std::vector<std::string> f = SplitChar(lines[i], '\t');
    if (f.size() < 2) {
      throw ValidationError(what + " row " + std::to_string(i + 1) + ": expected id<TAB>text");
    }
    out.emplace_back(Trim(f[0]), f[1]);
  }
  return out;
}

int CmdScore(const RunConfig& run, std::ostream& out) {
  std::vector<ScoringPair> pairs;
  if (run.Has("paths.pairs")) {
    pairs = ParseScoringTsv(ReadFile(run.GetPath("paths.pairs")));
  } else {
    const auto refs = ReadIdText(run.RequirePath("paths.reference"), "reference");
    const auto hyps = ReadIdText(run.RequirePath("paths.hypotheses"), "hypothesis");
    if (hyps.empty()) throw ValidationError("hypothesis file is empty");
    std::map<std::string, std::string> by_id;
    for (const auto& [id, text] : hyps) {
      if (!by_id.emplace(id, text).second) throw ValidationError("duplicate hypothesis id " + id);
    }
    for (const auto& [id, text] : refs) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("no hypothesis for utterance " + id);
      pairs.push_back({id, text, it->second});
      by_id.erase(it);
    }
    if (!by_id.empty()) throw ValidationError("hypothesis for unknown utterance " + by_id.begin()->first);
  }
  if (pairs.empty()) throw ValidationError("nothing to score");
  const EvalReport report = CorpusWer(pairs);
  Sink sink(run, "paths.output", out);
  sink.stream() << RenderReport({{run.GetString("score.system", "model"), run.GetString("score.lm", "Without-LM"),
                                  run.GetString("score.split", "test"), report}})
                << '\n'
                << RenderSummary(report);
  sink.Finish();
  return 0;
}

int CmdSynth(const RunConfig& run, std::ostream& out) {
  SynthCorpusOptions o;
  o.utterances = static_cast<int>(run.GetInt("synth.utterances", o.utterances));
  o.seed = run.GetUnsigned("synth.seed", o.seed);
  o.symbol_samples = static_cast<int>(run.GetInt("synth.symbol_samples", o.symbol_samples));
  o.noise = run.GetDouble("synth.noise", o.noise);
  const std::filesystem::path manifest =
      WriteSynthCorpus(GenerateSynthCorpus(o), run.RequirePath("paths.output_dir"));
  out << manifest.string() << '\n';
  return 0;
}

// Binds a CLI11 option to a dotted config key; the value is copied into the
// run config only when the flag was given.
struct Binder {
  struct Entry {
    CLI::Option* option;
    std::string key;
  };
  std::map<std::string, std::string> storage;
  std::vector<Entry> entries;

  void Add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    const std::string storage_key = app->get_name() + "/" + key;
    entries.push_back({app->add_option(flag, storage[storage_key], help + " [" + key + "]"), key});
    storage_keys.push_back(storage_key);
  }
  void Apply(RunConfig& run) {
    for (size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].option->count() > 0) run.Set(entries[i].key, storage[storage_keys[i]]);
    }
  }
  std::vector<std::string> storage_keys;
};

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Central Kurdish speech recognition toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Binder bind;
  std::string config_path;
  std::vector<std::string> stats_manifests;

  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("--config", config_path, "Run config file ([section] key = value)");
    return sub;
  };

  CLI::App* normalize = add("normalize", "Normalize a text file line by line");
  bind.Add(normalize, "--input", "paths.input", "Input text file");
  bind.Add(normalize, "--output", "paths.output", "Output file (default stdout)");
  bind.Add(normalize, "--table", "textnorm.table", "Character table (default built in)");

  CLI::App* stats = add("stats", "Duration, speaker and gender statistics per manifest");
  stats->add_option("--manifest", stats_manifests, "Manifest, optionally name=path; repeatable");
  bind.Add(stats, "--audio-root", "paths.audio_root", "Directory audio paths are relative to");
  bind.Add(stats, "--output", "paths.output", "Report file (default stdout)");

  CLI::App* split = add("split", "Seeded train/validation split of a manifest");
  bind.Add(split, "--manifest", "paths.manifest", "Manifest to split");
  bind.Add(split, "--fraction", "split.fraction", "Training fraction");
  bind.Add(split, "--seed", "split.seed", "Shuffle seed");
  bind.Add(split, "--output-dir", "paths.output_dir", "Directory for <name>.train.tsv / <name>.valid.tsv");
  bind.Add(split, "--name", "split.name", "Output name (default manifest stem)");

  CLI::App* train = add("train", "Train the acoustic model with CTC and Adadelta");
  bind.Add(train, "--manifest", "paths.manifest", "Training manifest");
  bind.Add(train, "--valid-manifest", "paths.valid_manifest", "Validation manifest");
  bind.Add(train, "--audio-root", "paths.audio_root", "Directory audio paths are relative to");
  bind.Add(train, "--output-dir", "paths.output_dir", "Directory for model.ckpt and history.txt");
  bind.Add(train, "--preset", "model.preset", "base, large or desk");
  bind.Add(train, "--epochs", "train.epochs", "Number of epochs");
  bind.Add(train, "--batch-size", "train.batch_size", "Utterances per update");
  bind.Add(train, "--seed", "train.seed", "Shuffle and dropout seed");
  bind.Add(train, "--threads", "train.threads", "Worker threads");

  CLI::App* decode = add("decode", "Decode audio with an optional n-gram LM");
  bind.Add(decode, "--checkpoint", "paths.checkpoint", "Model checkpoint");
  bind.Add(decode, "--manifest", "paths.manifest", "Manifest of clips to decode");
  bind.Add(decode, "--wav", "paths.wav", "Single WAV file to decode");
  bind.Add(decode, "--audio-root", "paths.audio_root", "Directory audio paths are relative to");
  bind.Add(decode, "--lm", "decode.lm", "LM file in the standard n-gram text format");
  bind.Add(decode, "--alpha", "decode.alpha", "LM weight");
  bind.Add(decode, "--beta", "decode.beta", "Word insertion bonus");
  bind.Add(decode, "--beam-width", "decode.beam_width", "Beam width (1 with alpha 0 is greedy)");
  bind.Add(decode, "--output", "paths.output", "Hypotheses TSV (default stdout)");

  CLI::App* lm_train = add("lm-train", "Train an n-gram LM on normalized text");
  bind.Add(lm_train, "--corpus", "paths.lm_corpus", "One sentence per line");
  bind.Add(lm_train, "--order", "lm.order", "N-gram order");
  bind.Add(lm_train, "--smoothing", "lm.smoothing", "absolute or mle");
  bind.Add(lm_train, "--discount", "lm.discount", "Absolute discount");
  bind.Add(lm_train, "--checkpoint", "paths.checkpoint", "Stamp this checkpoint's vocabulary hash");
  bind.Add(lm_train, "--output", "paths.output", "LM file to write");

  CLI::App* lm_eval = add("lm-eval", "Score text with an n-gram LM");
  bind.Add(lm_eval, "--lm", "paths.lm", "LM file");
  bind.Add(lm_eval, "--text", "paths.text", "One sentence per line");

  CLI::App* score = add("score", "Word and character error rates");
  bind.Add(score, "--pairs", "paths.pairs", "utterance_id<TAB>reference<TAB>hypothesis file");
  bind.Add(score, "--reference", "paths.reference", "Manifest or id<TAB>text references");
  bind.Add(score, "--hypotheses", "paths.hypotheses", "Decode output");
  bind.Add(score, "--system", "score.system", "Report label for the model");
  bind.Add(score, "--lm-label", "score.lm", "Report label for the LM");
  bind.Add(score, "--split", "score.split", "Report label for the split");
  bind.Add(score, "--output", "paths.output", "Report file (default stdout)");

  CLI::App* synth = add("synth-corpus", "Write the tone-coded synthetic corpus");
  bind.Add(synth, "--output-dir", "paths.output_dir", "Corpus directory");
  bind.Add(synth, "--seed", "synth.seed", "Generator seed");
  bind.Add(synth, "--utterances", "synth.utterances", "Number of clips");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kValidation);
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    RunConfig run = config_path.empty() ? RunConfig() : RunConfig::Load(config_path);
    bind.Apply(run);
    run.ApplyOverrides(sub->remaining());
    const std::string name = sub->get_name();
    if (name == "normalize") return CmdNormalize(run, out, err);
    if (name == "stats") return CmdStats(run, stats_manifests, out, err);
    if (name == "split") return CmdSplit(run, out);
    if (name == "train") return CmdTrain(run, out);
    if (name == "decode") return CmdDecode(run, out);
    if (name == "lm-train") return CmdLmTrain(run, out);
    if (name == "lm-eval") return CmdLmEval(run, out);
    if (name == "score") return CmdScore(run, out);
    if (name == "synth-corpus") return CmdSynth(run, out);
    throw InternalError("unhandled subcommand " + name);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kInternal);
  }
}

}  // namespace ckb
