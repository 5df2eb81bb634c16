#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicelm/alignment.hpp"
#include "slicelm/bpe.hpp"
#include "slicelm/encoder.hpp"
#include "slicelm/graph.hpp"
#include "slicelm/metrics.hpp"
#include "slicelm/perturb.hpp"
#include "slicelm/slicer.hpp"
#include "slicelm/trainer.hpp"

namespace slicelm {

struct PipelineConfig {
  std::filesystem::path train_graphs;
  std::filesystem::path eval_graphs;
  std::filesystem::path vocab;
  std::filesystem::path merges;
  std::filesystem::path embeddings;
  std::optional<std::filesystem::path> base_logits;
  std::optional<std::filesystem::path> eval_tags;
  bool ptb_labels = false;
  Capacities capacities = kDefaultCapacities;
  TrainConfig train;
  bool use_base = true;  // ensemble with the base logits when they are given
  PerturbSpec perturb;
  std::filesystem::path out;
  std::optional<std::filesystem::path> cache_dir;  // default out/cache
  std::size_t threads = 1;
  bool write_posteriors = false;

  // Flat keys; relative paths resolve against base_dir. Missing keys keep
  // the values already in `into`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                  PipelineConfig into);
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& file);
  // Everything that affects results; excludes out, cache_dir and threads.
  nlohmann::json to_json() const;
  // Throws ConfigError for missing files or invalid settings.
  void validate() const;
  bool ensemble() const { return use_base && base_logits.has_value(); }
};

Capacities parse_capacities(const nlohmann::json& j);
nlohmann::json capacities_json(const Capacities& c);

// Reads MRP graphs and normalizes them: optional PTB label conversion,
// self-loop removal, dummy edges for edgeless graphs, then validation.
std::vector<Graph> ingest_graphs(const std::filesystem::path& path, bool ptb_labels);
void require_valid(const Graph& g);

AlignedSentence align_graph(const Graph& g, const TokenizerTables& tables);

std::vector<std::vector<std::string>> read_tags(const std::filesystem::path& path);

struct SlicedSentence {
  std::string id;
  std::vector<TokenId> targets;
  std::vector<std::size_t> words;  // word index per token
  std::size_t word_count = 0;
  std::vector<Slice> slices;
};

SlicedSentence slice_graph(const Graph& g, const TokenizerTables& tables);
nlohmann::json sliced_to_json(const SlicedSentence& s);
SlicedSentence sliced_from_json(const nlohmann::json& j);

EncodedCorpus encode_corpus(const std::vector<SlicedSentence>& sentences, const EncoderConfig& cfg,
                            const LabelVocabulary& labels, std::size_t threads = 1);

struct PipelineResult {
  EvalReport report;               // the configured condition
  std::optional<EvalReport> base;  // base logits alone
  std::vector<double> nll;         // per eval token
  std::vector<double> base_nll;
  nlohmann::json report_json;
  std::filesystem::path report_path;
  std::filesystem::path checkpoint_path;
  std::filesystem::path manifest_path;
  bool model_from_cache = false;
};

// ingest -> tokenize/align -> slice -> encode -> train -> evaluate. Stage
// outputs are cached under out/cache, keyed by content hashes of their inputs.
PipelineResult run_pipeline(const PipelineConfig& cfg);

struct SyntheticWorkspaceConfig {
  std::uint64_t seed = 1;
  std::size_t train_sentences = 5000;
  std::size_t eval_sentences = 500;
  std::size_t vocab_size = 200;
  std::size_t embedding_dim = 32;
  double bigram_alpha = 0.1;
  bool dependency = false;  // which graphs config.json points at
};

// Writes a self-contained corpus, tokenizer tables, embeddings, bigram base
// logits, tags and a config.json for run_pipeline into dir. Returns the config.
PipelineConfig write_synthetic_workspace(const std::filesystem::path& dir, const SyntheticWorkspaceConfig& cfg);

}  // namespace slicelm
