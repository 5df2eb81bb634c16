#include "slicelm/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "slicelm/binary_io.hpp"
#include "slicelm/digest.hpp"
#include "slicelm/error.hpp"
#include "slicelm/mrp.hpp"
#include "slicelm/parallel.hpp"
#include "slicelm/synthetic.hpp"

namespace slicelm {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kCacheVersion = "slicelm-cache-1";

template <typename F>
auto in_stage(std::string_view stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError("stage '" + std::string(stage) + "': " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage '" + std::string(stage) + "': " + e.what());
  }
}

// Runs fn(i) per sentence; errors carry the sentence id.
template <typename Fn>
void for_each_sentence(std::size_t n, std::size_t threads, const std::vector<std::string>& ids, Fn&& fn) {
  parallel_for(n, threads, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const ConfigError& e) {
      throw ConfigError("sentence '" + ids[i] + "': " + e.what());
    } catch (const DataError& e) {
      throw DataError("sentence '" + ids[i] + "': " + e.what());
    } catch (const std::out_of_range& e) {
      throw DataError("sentence '" + ids[i] + "': " + e.what());
    }
  });
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> graph_ids(const std::vector<Graph>& graphs) {
  std::vector<std::string> ids;
  for (const auto& g : graphs) ids.push_back(g.id);
  return ids;
}

std::string format_scores(const std::vector<double>& values) {
  std::string out;
  char buf[40];
  for (const auto v : values) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out += buf;
  }
  return out;
}

}  // namespace

Capacities parse_capacities(const nlohmann::json& j) {
  Capacities c = kDefaultCapacities;
  if (j.is_array()) {
    if (j.size() != c.size()) throw ConfigError("capacities: expected 6 values");
    for (std::size_t t = 0; t < c.size(); ++t) c[t] = j[t].get<std::size_t>();
  } else if (j.is_object()) {
    for (const auto& [name, value] : j.items()) {
      const auto type = parse_relative_type(name);
      if (!type) throw ConfigError("capacities: unknown relative type '" + name + "'");
      c[static_cast<std::size_t>(*type)] = value.get<std::size_t>();
    }
  } else {
    throw ConfigError("capacities: expected an array or an object");
  }
  return c;
}

nlohmann::json capacities_json(const Capacities& c) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t t = 0; t < c.size(); ++t) j[std::string(to_string(kRelativeTypes[t]))] = c[t];
  return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir, PipelineConfig c) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  try {
    auto path = [&](const char* key, fs::path& target) {
      if (j.contains(key)) target = resolve(base_dir, j.at(key).get<std::string>());
    };
    auto optional_path = [&](const char* key, std::optional<fs::path>& target) {
      if (!j.contains(key)) return;
      if (j.at(key).is_null())
        target.reset();
      else
        target = resolve(base_dir, j.at(key).get<std::string>());
    };
    path("train_graphs", c.train_graphs);
    path("eval_graphs", c.eval_graphs);
    path("vocab", c.vocab);
    path("merges", c.merges);
    path("embeddings", c.embeddings);
    path("out", c.out);
    optional_path("base_logits", c.base_logits);
    optional_path("eval_tags", c.eval_tags);
    optional_path("cache_dir", c.cache_dir);
    c.ptb_labels = j.value("ptb_labels", c.ptb_labels);
    if (j.contains("capacities")) c.capacities = parse_capacities(j.at("capacities"));
    c.train = TrainConfig::from_json(j, c.train);
    c.use_base = j.value("use_base", c.use_base);
    c.perturb.shuffle_labels = j.value("shuffle_labels", c.perturb.shuffle_labels);
    c.perturb.shuffle_anchors = j.value("shuffle_anchors", c.perturb.shuffle_anchors);
    if (j.contains("perturb_phase")) {
      const auto phase = parse_perturb_phase(j.at("perturb_phase").get<std::string>());
      if (!phase) throw ConfigError("perturb_phase must be train, test or both");
      c.perturb.phase = *phase;
    }
    c.perturb.seed = j.value("perturb_seed", j.contains("seed") ? c.train.seed : c.perturb.seed);
    c.threads = j.value("threads", c.threads);
    c.write_posteriors = j.value("write_posteriors", c.write_posteriors);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  return from_json(j, base_dir, PipelineConfig{});
}

PipelineConfig PipelineConfig::load(const fs::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return from_json(j, file.parent_path());
}

nlohmann::json PipelineConfig::to_json() const {
  auto opt = [](const std::optional<fs::path>& p) { return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr); };
  nlohmann::json j = train.to_json();
  j["train_graphs"] = train_graphs.string();
  j["eval_graphs"] = eval_graphs.string();
  j["vocab"] = vocab.string();
  j["merges"] = merges.string();
  j["embeddings"] = embeddings.string();
  j["base_logits"] = opt(base_logits);
  j["eval_tags"] = opt(eval_tags);
  j["ptb_labels"] = ptb_labels;
  j["capacities"] = capacities_json(capacities);
  j["use_base"] = use_base;
  j["shuffle_labels"] = perturb.shuffle_labels;
  j["shuffle_anchors"] = perturb.shuffle_anchors;
  j["perturb_phase"] = std::string(to_string(perturb.phase));
  j["perturb_seed"] = perturb.seed;
  j["write_posteriors"] = write_posteriors;
  return j;
}

void PipelineConfig::validate() const {
  auto need = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("config: missing ") + what);
    if (!fs::is_regular_file(p)) throw ConfigError(std::string("config: ") + what + " not found: " + p.string());
  };
  need(train_graphs, "train_graphs");
  need(eval_graphs, "eval_graphs");
  need(vocab, "vocab");
  need(merges, "merges");
  need(embeddings, "embeddings");
  if (base_logits) {
    need(*base_logits, "base_logits");
    need(index_path_for(*base_logits), "base_logits index");
  }
  if (eval_tags) need(*eval_tags, "eval_tags");
  if (out.empty()) throw ConfigError("config: missing out directory");
  train.validate();
}

void require_valid(const Graph& g) {
  const auto report = validate_graph(g);
  if (report.ok()) return;
  std::string msg = "graph '" + g.id + "' is invalid:";
  for (const auto& v : report.violations) msg += " [" + std::string(to_string(v.kind)) + "] " + v.detail + ";";
  throw DataError(msg);
}

std::vector<Graph> ingest_graphs(const fs::path& path, bool ptb_labels) {
  auto graphs = read_mrp_file(path);
  std::set<std::string> seen;
  for (auto& g : graphs) {
    if (!seen.insert(g.id).second) throw DataError(path.string() + ": duplicate graph id '" + g.id + "'");
    try {
      if (ptb_labels) g = convert_ptb_node_labels(g);
      g = ensure_nonempty_edges(remove_self_loops(g));
      require_valid(g);
    } catch (const DataError& e) {
      throw DataError("graph '" + g.id + "': " + e.what());
    }
  }
  return graphs;
}

AlignedSentence align_graph(const Graph& g, const TokenizerTables& tables) {
  return align_tokens_to_anchors(bbpe_tokenize(g.text, tables), std::make_shared<const Graph>(g));
}

std::vector<std::vector<std::string>> read_tags(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<std::string> tags;
    for (std::string tag; ss >> tag;) tags.push_back(tag);
    out.push_back(std::move(tags));
  }
  return out;
}

SlicedSentence slice_graph(const Graph& g, const TokenizerTables& tables) {
  const auto aligned = align_graph(g, tables);
  SlicedSentence s;
  s.id = g.id;
  s.targets = aligned.tokens().ids();
  s.words = token_word_indices(aligned.tokens(), g.text);
  s.word_count = word_spans(g.text).size();
  s.slices = slice_sentence(aligned);
  return s;
}

nlohmann::json sliced_to_json(const SlicedSentence& s) {
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& slice : s.slices) slices.push_back(slice_to_json(slice));
  return {{"id", s.id}, {"targets", s.targets}, {"words", s.words}, {"word_count", s.word_count}, {"slices", slices}};
}

SlicedSentence sliced_from_json(const nlohmann::json& j) {
  try {
    SlicedSentence s;
    s.id = j.at("id").get<std::string>();
    s.targets = j.at("targets").get<std::vector<TokenId>>();
    s.words = j.at("words").get<std::vector<std::size_t>>();
    s.word_count = j.at("word_count").get<std::size_t>();
    for (const auto& slice : j.at("slices")) s.slices.push_back(slice_from_json(slice));
    if (s.slices.size() != s.targets.size() || s.words.size() != s.targets.size())
      throw SchemaError("slices", "sentence '" + s.id + "' has inconsistent token counts");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("slices", e.what());
  }
}

EncodedCorpus encode_corpus(const std::vector<SlicedSentence>& sentences, const EncoderConfig& cfg,
                            const LabelVocabulary& labels, std::size_t threads) {
  EncodedCorpus corpus;
  corpus.dim = vector_dim(cfg);
  corpus.sentences.resize(sentences.size());
  std::vector<std::string> ids;
  for (const auto& s : sentences) ids.push_back(s.id);
  for_each_sentence(sentences.size(), threads, ids, [&](std::size_t k) {
    auto& out = corpus.sentences[k];
    out.id = sentences[k].id;
    out.targets = sentences[k].targets;
    for (const auto& slice : sentences[k].slices) out.recipes.push_back(slice_recipe(slice, cfg, labels));
  });
  return corpus;
}

namespace {

struct Inputs {
  TokenizerTables tables;
  EmbeddingTable embeddings;
  std::unique_ptr<BaseLogitsSource> base;
  std::string tokenizer_hash;
  std::string embedding_hash;
  std::string base_hash;
};

struct StageRecord {
  std::string name;
  std::string key;
  fs::path file;
  bool hit = false;
};

class StageCache {
 public:
  explicit StageCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path file(std::string_view stage, const std::string& key, std::string_view ext) const {
    return dir_ / (std::string(stage) + "-" + key.substr(0, 32) + std::string(ext));
  }

  std::vector<StageRecord> records;

 private:
  fs::path dir_;
};

std::vector<Graph> ingest_stage(const PipelineConfig& cfg, const fs::path& path, bool perturbed,
                                std::string_view role, StageCache& cache, std::string& key_out) {
  Sha256 h;
  h.field(kCacheVersion).field("ingest").field(sha256_file(path)).field(cfg.ptb_labels ? "ptb" : "raw");
  h.field(role);
  if (perturbed)
    h.field(cfg.perturb.shuffle_labels ? "labels" : "").field(cfg.perturb.shuffle_anchors ? "anchors" : "")
        .field(std::to_string(cfg.perturb.seed));
  key_out = h.hex();
  const auto file = cache.file("ingest", key_out, ".mrp");
  const bool hit = fs::exists(file);
  cache.records.push_back({"ingest:" + std::string(role), key_out, file, hit});
  if (!hit) {
    auto graphs = in_stage("ingest", [&] { return ingest_graphs(path, cfg.ptb_labels); });
    if (perturbed) graphs = perturb_corpus(graphs, cfg.perturb, role, cfg.threads);
    const auto tmp = fs::path(file.string() + ".tmp");
    write_mrp_file(tmp, graphs);
    fs::rename(tmp, file);
  }
  return in_stage("ingest", [&] { return read_mrp_file(file); });
}

std::vector<SlicedSentence> slice_stage(const PipelineConfig& cfg, const std::vector<Graph>& graphs,
                                        const std::string& ingest_key, std::string_view role, const Inputs& in,
                                        StageCache& cache, std::string& key_out) {
  const auto ids = graph_ids(graphs);
  const std::string tokens_key =
      Sha256().field(kCacheVersion).field("tokens").field(ingest_key).field(in.tokenizer_hash).hex();
  key_out = Sha256().field(kCacheVersion).field("slices").field(tokens_key).hex();
  const auto tokens_file = cache.file("tokens", tokens_key, ".jsonl");
  const auto slices_file = cache.file("slices", key_out, ".jsonl");
  const bool hit = fs::exists(slices_file);
  cache.records.push_back({"tokens:" + std::string(role), tokens_key, tokens_file, hit || fs::exists(tokens_file)});
  cache.records.push_back({"slices:" + std::string(role), key_out, slices_file, hit});

  if (!hit) {
    std::vector<std::string> token_lines(graphs.size()), slice_lines(graphs.size());
    in_stage("slice", [&] {
      for_each_sentence(graphs.size(), cfg.threads, ids, [&](std::size_t k) {
        const auto aligned = align_graph(graphs[k], in.tables);
        nlohmann::json tokens = nlohmann::json::array();
        for (std::size_t i = 0; i < aligned.size(); ++i) {
          const auto& t = aligned.tokens()[i];
          const auto& a = aligned.at(i);
          tokens.push_back({{"id", t.id},
                            {"from", t.span.from},
                            {"to", t.span.to},
                            {"anchor", a.anchor ? nlohmann::json(*a.anchor) : nlohmann::json(nullptr)},
                            {"reason", std::string(to_string(a.reason))},
                            {"group_start", a.group_start}});
        }
        token_lines[k] = nlohmann::json{{"id", graphs[k].id}, {"tokens", tokens}}.dump();
        SlicedSentence s;
        s.id = graphs[k].id;
        s.targets = aligned.tokens().ids();
        s.words = token_word_indices(aligned.tokens(), graphs[k].text);
        s.word_count = word_spans(graphs[k].text).size();
        s.slices = slice_sentence(aligned);
        slice_lines[k] = sliced_to_json(s).dump();
      });
    });
    std::string tokens_text, slices_text;
    for (const auto& l : token_lines) tokens_text += l + "\n";
    for (const auto& l : slice_lines) slices_text += l + "\n";
    write_text_atomic(tokens_file, tokens_text);
    write_text_atomic(slices_file, slices_text);
  }

  std::vector<std::string> lines;
  {
    std::istringstream ss(read_text(slices_file));
    for (std::string line; std::getline(ss, line);)
      if (!line.empty()) lines.push_back(std::move(line));
  }
  if (lines.size() != graphs.size()) throw DataError("slice cache " + slices_file.string() + " is inconsistent");
  std::vector<SlicedSentence> out(lines.size());
  in_stage("slice", [&] {
    for_each_sentence(lines.size(), cfg.threads, ids, [&](std::size_t k) {
      try {
        out[k] = sliced_from_json(nlohmann::json::parse(lines[k]));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(slices_file.string() + ": " + e.what(), e.byte);
      }
    });
  });
  return out;
}

Inputs load_inputs(const PipelineConfig& cfg) {
  Inputs in{TokenizerTables::load(cfg.vocab, cfg.merges), read_embeddings(cfg.embeddings), nullptr, "", "", "none"};
  in.tokenizer_hash = Sha256().field(sha256_file(cfg.vocab)).field(sha256_file(cfg.merges)).hex();
  in.embedding_hash = sha256_file(cfg.embeddings);
  if (cfg.base_logits) {
    in.base = std::make_unique<BaseLogitsSource>(BaseLogitsSource::load(*cfg.base_logits));
    in.base_hash =
        Sha256().field(sha256_file(*cfg.base_logits)).field(sha256_file(index_path_for(*cfg.base_logits))).hex();
  }
  if (in.embeddings.rows() != in.tables.vocab_size())
    throw ConfigError("embedding table has " + std::to_string(in.embeddings.rows()) + " rows, tokenizer has " +
                      std::to_string(in.tables.vocab_size()) + " tokens");
  return in;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out);
  StageCache cache(cfg.cache_dir.value_or(cfg.out / "cache"));
  const Inputs in = in_stage("load", [&] { return load_inputs(cfg); });

  std::string train_ingest_key, eval_ingest_key, train_slices_key, eval_slices_key;
  const auto train_graphs = ingest_stage(cfg, cfg.train_graphs, cfg.perturb.applies_to_training(), "train", cache,
                                         train_ingest_key);
  const auto eval_graphs =
      ingest_stage(cfg, cfg.eval_graphs, cfg.perturb.applies_to_testing(), "eval", cache, eval_ingest_key);
  const auto train_sliced = slice_stage(cfg, train_graphs, train_ingest_key, "train", in, cache, train_slices_key);
  const auto eval_sliced = slice_stage(cfg, eval_graphs, eval_ingest_key, "eval", in, cache, eval_slices_key);

  std::vector<Graph> all_graphs = train_graphs;
  all_graphs.insert(all_graphs.end(), eval_graphs.begin(), eval_graphs.end());
  const auto labels = LabelVocabulary::from_graphs(all_graphs);
  const EncoderConfig enc{cfg.capacities, in.embeddings.dim(), labels.size()};
  const auto train_corpus = in_stage("encode", [&] { return encode_corpus(train_sliced, enc, labels, cfg.threads); });
  const auto eval_corpus = in_stage("encode", [&] { return encode_corpus(eval_sliced, enc, labels, cfg.threads); });

  const BaseLogitsSource* base = cfg.ensemble() ? in.base.get() : nullptr;
  std::string label_list;
  for (const auto& l : labels.labels()) label_list += l + "\n";
  auto train_cfg = cfg.train;
  train_cfg.threads = cfg.threads;
  const std::string model_key = Sha256()
                                    .field(kCacheVersion)
                                    .field("model")
                                    .field(train_slices_key)
                                    .field(label_list)
                                    .field(capacities_json(cfg.capacities).dump())
                                    .field(in.embedding_hash)
                                    .field(base ? in.base_hash : "none")
                                    .field(cfg.train.to_json().dump())
                                    .hex();
  const auto model_file = cache.file("model", model_key, ".ckpt");
  const bool model_hit = fs::exists(model_file);
  cache.records.push_back({"train", model_key, model_file, model_hit});
  if (!model_hit) {
    const auto result = in_stage("train", [&] { return train(train_corpus, in.embeddings, base, train_cfg); });
    Checkpoint ckpt;
    ckpt.params = result.params;
    ckpt.metadata = {{"labels", labels.labels()},
                     {"capacities", capacities_json(cfg.capacities)},
                     {"train", cfg.train.to_json()},
                     {"ensemble", base != nullptr},
                     {"training", training_log_json(result)}};
    const auto tmp = fs::path(model_file.string() + ".tmp");
    write_checkpoint(tmp, ckpt);
    fs::rename(tmp, model_file);
  }
  const auto ckpt = in_stage("train", [&] { return read_checkpoint(model_file, in.embeddings); });

  PipelineResult out;
  out.model_from_cache = model_hit;
  const std::size_t n_eval = eval_corpus.sentences.size();
  std::vector<std::vector<TokenEval>> evals(n_eval), base_evals(n_eval);
  std::vector<std::vector<float>> posteriors(cfg.write_posteriors ? n_eval : 0);
  const auto eval_ids = graph_ids(eval_graphs);
  in_stage("eval", [&] {
    for_each_sentence(n_eval, cfg.threads, eval_ids, [&](std::size_t k) {
      const auto& s = eval_corpus.sentences[k];
      const Eigen::MatrixXd z = sentence_logits(s, ckpt.params, base);
      std::optional<Eigen::MatrixXd> zb;
      if (in.base) zb = base_logits_matrix(*in.base, s);
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        evals[k].push_back(evaluate_token_logits({z.col(c).data(), static_cast<std::size_t>(z.rows())}, s.targets[c]));
        if (zb)
          base_evals[k].push_back(
              evaluate_token_logits({zb->col(c).data(), static_cast<std::size_t>(zb->rows())}, s.targets[c]));
        if (cfg.write_posteriors) {
          const auto p = softmax({z.col(c).data(), static_cast<std::size_t>(z.rows())});
          posteriors[k].insert(posteriors[k].end(), p.begin(), p.end());
        }
      }
    });
  });

  std::vector<TokenEval> flat, base_flat;
  for (std::size_t k = 0; k < n_eval; ++k) {
    flat.insert(flat.end(), evals[k].begin(), evals[k].end());
    base_flat.insert(base_flat.end(), base_evals[k].begin(), base_evals[k].end());
  }
  out.report = summarize(flat);
  for (const auto& e : flat) out.nll.push_back(e.nll);
  if (in.base) {
    out.base = summarize(base_flat);
    for (const auto& e : base_flat) out.base_nll.push_back(e.nll);
  }

  if (cfg.eval_tags) {
    const auto tags = read_tags(*cfg.eval_tags);
    if (tags.size() != n_eval)
      throw DataError("stage 'eval': " + std::to_string(tags.size()) + " tag lines for " + std::to_string(n_eval) +
                      " eval sentences");
    std::vector<std::string> token_tags;
    for (std::size_t k = 0; k < n_eval; ++k) {
      if (tags[k].size() != eval_sliced[k].word_count)
        throw DataError("stage 'eval': sentence '" + eval_ids[k] + "' has " + std::to_string(tags[k].size()) +
                        " tags for " + std::to_string(eval_sliced[k].word_count) + " words");
      for (const auto w : eval_sliced[k].words) token_tags.push_back(tags[k][w]);
    }
    out.report.by_pos = pos_breakdown(flat, token_tags, &out.report.unknown_tags);
    if (out.base) out.base->by_pos = pos_breakdown(base_flat, token_tags, &out.base->unknown_tags);
  }

  nlohmann::json report;
  report["condition"] = base ? "ensemble" : "slr";
  report["metrics"] = report_json(out.report);
  report["base"] = out.base ? report_json(*out.base) : nlohmann::json(nullptr);
  report["relative_ppl_change"] =
      out.base ? nlohmann::json((out.report.ppl - out.base->ppl) / out.base->ppl) : nlohmann::json(nullptr);
  report["training"] = ckpt.metadata.at("training");
  report["data"] = {{"train_sentences", train_graphs.size()},
                    {"eval_sentences", n_eval},
                    {"eval_tokens", flat.size()},
                    {"labels", labels.size()},
                    {"vector_dim", vector_dim(enc)},
                    {"framework", std::string(to_string(classify_framework(train_graphs)))}};
  report["config"] = cfg.to_json();
  report["keys"] = {{"model", model_key}, {"train_slices", train_slices_key}, {"eval_slices", eval_slices_key}};
  out.report_json = report;

  out.report_path = cfg.out / "report.json";
  out.checkpoint_path = cfg.out / "model.ckpt";
  write_text_atomic(out.report_path, report.dump(2) + "\n");
  fs::copy_file(model_file, out.checkpoint_path, fs::copy_options::overwrite_existing);
  write_text_atomic(cfg.out / "scores.txt", format_scores(out.nll));
  if (out.base) write_text_atomic(cfg.out / "base_scores.txt", format_scores(out.base_nll));
  {
    std::string gold;
    for (std::size_t k = 0; k < n_eval; ++k)
      gold += nlohmann::json{{"id", eval_ids[k]},
                             {"ids", eval_sliced[k].targets},
                             {"words", eval_sliced[k].words},
                             {"word_count", eval_sliced[k].word_count}}
                  .dump() +
              "\n";
    write_text_atomic(cfg.out / "gold.jsonl", gold);
  }
  if (cfg.write_posteriors) {
    FloatRows rows;
    rows.width = ckpt.params.vocab_size();
    RowIndex index;
    for (std::size_t k = 0; k < n_eval; ++k) {
      const std::size_t count = eval_sliced[k].targets.size();
      index[eval_ids[k]] = {rows.rows, count};
      rows.values.insert(rows.values.end(), posteriors[k].begin(), posteriors[k].end());
      rows.rows += count;
    }
    write_float_rows(cfg.out / "posteriors.pst", kPosteriorMagic, rows);
    write_row_index(index_path_for(cfg.out / "posteriors.pst"), index);
  }

  nlohmann::json manifest;
  manifest["stages"] = nlohmann::json::array();
  for (const auto& r : cache.records)
    manifest["stages"].push_back(
        {{"stage", r.name}, {"key", r.key}, {"file", r.file.filename().string()}, {"cache_hit", r.hit}});
  manifest["outputs"] = nlohmann::json::object();
  for (const auto& name : {"report.json", "model.ckpt", "scores.txt", "base_scores.txt", "gold.jsonl",
                           "posteriors.pst", "posteriors.pst.index.json"}) {
    const auto p = cfg.out / name;
    if (fs::exists(p)) manifest["outputs"][name] = sha256_file(p);
  }
  out.manifest_path = cfg.out / "manifest.json";
  write_text_atomic(out.manifest_path, manifest.dump(2) + "\n");
  return out;
}

PipelineConfig write_synthetic_workspace(const fs::path& dir, const SyntheticWorkspaceConfig& sc) {
  if (sc.train_sentences < 2 || sc.eval_sentences < 1) throw ConfigError("synthetic corpus is too small");
  fs::create_directories(dir);
  const auto corpus = generate_synthetic_corpus(sc.seed, sc.train_sentences + sc.eval_sentences);

  std::vector<Graph> train_const, train_dep, eval_const, eval_dep;
  std::string train_tags, eval_tags, train_text, eval_text;
  std::vector<std::string> texts;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& s = corpus[k];
    const bool is_train = k < sc.train_sentences;
    (is_train ? train_const : eval_const).push_back(s.constituency);
    (is_train ? train_dep : eval_dep).push_back(s.dependency);
    std::string tags;
    for (const auto& t : s.upos) tags += (tags.empty() ? "" : " ") + t;
    (is_train ? train_tags : eval_tags) += tags + "\n";
    (is_train ? train_text : eval_text) += s.text + "\n";
    texts.push_back(s.text);
  }
  write_mrp_file(dir / "train.const.mrp", train_const);
  write_mrp_file(dir / "train.dep.mrp", train_dep);
  write_mrp_file(dir / "eval.const.mrp", eval_const);
  write_mrp_file(dir / "eval.dep.mrp", eval_dep);
  write_text_atomic(dir / "train.tags", train_tags);
  write_text_atomic(dir / "eval.tags", eval_tags);
  write_text_atomic(dir / "train.txt", train_text);
  write_text_atomic(dir / "eval.txt", eval_text);

  const auto tables = learn_bpe(texts, sc.vocab_size);
  tables.save(dir / "vocab.json", dir / "merges.txt");
  write_embeddings(dir / "embeddings.emb", random_embeddings(tables.vocab_size(), sc.embedding_dim, sc.seed));

  std::vector<BigramLM::Sequence> sequences;
  std::vector<std::vector<TokenId>> train_ids;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    sequences.push_back({corpus[k].id, bbpe_tokenize(corpus[k].text, tables).ids()});
    if (k < sc.train_sentences) train_ids.push_back(sequences.back().tokens);
  }
  BigramLM lm(tables.vocab_size(), sc.bigram_alpha);
  lm.fit(train_ids);
  lm.export_logits(sequences, dir / "base.lgt");

  const std::string kind = sc.dependency ? "dep" : "const";
  nlohmann::json j = {{"train_graphs", "train." + kind + ".mrp"},
                      {"eval_graphs", "eval." + kind + ".mrp"},
                      {"vocab", "vocab.json"},
                      {"merges", "merges.txt"},
                      {"embeddings", "embeddings.emb"},
                      {"base_logits", "base.lgt"},
                      {"eval_tags", "eval.tags"},
                      {"hidden", std::vector<std::size_t>{256, sc.embedding_dim}},
                      {"epochs", 10},
                      {"batch_size", 8},
                      {"lr", 1e-3},
                      {"seed", sc.seed},
                      {"out", "run"}};
  write_text_atomic(dir / "config.json", j.dump(2) + "\n");
  return PipelineConfig::from_json(j, dir);
}

}  // namespace slicelm
