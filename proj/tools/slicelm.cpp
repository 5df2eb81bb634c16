#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "slicelm/binary_io.hpp"
#include "slicelm/digest.hpp"
#include "slicelm/error.hpp"
#include "slicelm/metrics.hpp"
#include "slicelm/mrp.hpp"
#include "slicelm/parallel.hpp"
#include "slicelm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace slicelm;

namespace {

constexpr int kDataError = 1;
constexpr int kConfigError = 2;

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

nlohmann::json parse_json_line(const std::string& line, const fs::path& path, std::size_t n) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ":" + std::to_string(n + 1) + ": " + e.what(), e.byte);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

// Sidecar manifest: command, arguments and sha256 of every output.
void write_manifest(const fs::path& path, const std::string& command, const nlohmann::json& args,
                    const std::vector<fs::path>& outputs) {
  nlohmann::json j = {{"command", command}, {"args", args}, {"outputs", nlohmann::json::object()}};
  for (const auto& p : outputs)
    if (fs::exists(p)) j["outputs"][p.filename().string()] = sha256_file(p);
  write_text(path, j.dump(2) + "\n");
}

fs::path manifest_for(const fs::path& out) { return out.string() + ".manifest.json"; }

int cmd_ingest(const fs::path& graphs_path, bool validate_only, bool ptb, const fs::path& out) {
  if (validate_only) {
    const auto graphs = read_mrp_file(graphs_path);
    std::size_t bad = 0;
    for (const auto& raw : graphs) {
      auto g = ptb ? convert_ptb_node_labels(raw) : raw;
      const auto report = validate_graph(g);
      nlohmann::json violations = nlohmann::json::array();
      for (const auto& v : report.violations)
        violations.push_back({{"kind", std::string(to_string(v.kind))}, {"detail", v.detail}});
      if (!report.ok()) ++bad;
      std::cout << nlohmann::json{{"id", g.id}, {"valid", report.ok()}, {"violations", violations}}.dump() << '\n';
    }
    std::cerr << graphs.size() - bad << "/" << graphs.size() << " graphs valid\n";
    if (out.empty()) return bad ? kDataError : 0;
    if (bad) return kDataError;
  }
  const auto graphs = ingest_graphs(graphs_path, ptb);
  if (out.empty()) {
    for (const auto& g : graphs) std::cout << to_mrp_line(g) << '\n';
    return 0;
  }
  fs::create_directories(out);
  write_mrp_file(out / "graphs.mrp", graphs);
  std::vector<std::string> ids;
  for (const auto& g : graphs) ids.push_back(g.id);
  write_text(out / "summary.json", nlohmann::json{{"graphs", graphs.size()},
                                                   {"framework", std::string(to_string(classify_framework(graphs)))},
                                                   {"labels", LabelVocabulary::from_graphs(graphs).labels()}}
                                           .dump(2) +
                                       "\n");
  write_manifest(out / "manifest.json", "ingest", {{"graphs", graphs_path.string()}, {"ptb", ptb}},
                 {out / "graphs.mrp", out / "summary.json"});
  return 0;
}

int cmd_tokenize(const fs::path& vocab, const fs::path& merges, const fs::path& text, const fs::path& out) {
  const auto tables = TokenizerTables::load(vocab, merges);
  std::ifstream in(text);
  if (!in) throw ConfigError("cannot open " + text.string());
  std::ostringstream buffer;
  for (std::string line; std::getline(in, line);) {
    const auto tokens = bbpe_tokenize(line, tables);
    nlohmann::json strings = nlohmann::json::array(), spans = nlohmann::json::array();
    for (const auto& t : tokens.tokens) {
      strings.push_back(tables.token(t.id));
      spans.push_back({t.span.from, t.span.to});
    }
    buffer << nlohmann::json{{"tokens", strings}, {"ids", tokens.ids()}, {"spans", spans}}.dump() << '\n';
  }
  if (out.empty()) {
    std::cout << buffer.str();
  } else {
    write_text(out, buffer.str());
    write_manifest(manifest_for(out), "tokenize", {{"vocab", vocab.string()}, {"merges", merges.string()}}, {out});
  }
  return 0;
}

int cmd_slice(const fs::path& graphs_path, const fs::path& vocab, const fs::path& merges, bool ptb,
              const fs::path& out) {
  const auto tables = TokenizerTables::load(vocab, merges);
  const auto graphs = ingest_graphs(graphs_path, ptb);
  std::string text;
  for (const auto& g : graphs) {
    SlicedSentence s;
    try {
      s = slice_graph(g, tables);
    } catch (const DataError& e) {
      throw DataError("sentence '" + g.id + "': " + e.what());
    }
    for (std::size_t i = 0; i < s.slices.size(); ++i)
      text += nlohmann::json{{"sentence", s.id},
                             {"token", i},
                             {"target", s.targets[i]},
                             {"string", tables.token(s.targets[i])},
                             {"word", s.words[i]},
                             {"slice", slice_to_json(s.slices[i])}}
                  .dump() +
              "\n";
  }
  std::string labels;
  for (const auto& l : LabelVocabulary::from_graphs(graphs).labels()) labels += l + "\n";
  const fs::path labels_path = out.string() + ".labels";
  write_text(out, text);
  write_text(labels_path, labels);
  write_manifest(manifest_for(out), "slice", {{"graphs", graphs_path.string()}, {"ptb", ptb}}, {out, labels_path});
  return 0;
}

int cmd_encode(const fs::path& slices, const fs::path& embeddings, const fs::path& labels_path,
               const std::vector<std::size_t>& capacities, const fs::path& out) {
  const auto emb = read_embeddings(embeddings);
  const LabelVocabulary labels(read_lines(labels_path));
  EncoderConfig cfg{kDefaultCapacities, emb.dim(), labels.size()};
  if (!capacities.empty()) {
    if (capacities.size() != cfg.capacity.size()) throw ConfigError("--capacities needs 6 values");
    std::copy(capacities.begin(), capacities.end(), cfg.capacity.begin());
  }
  FloatRows rows;
  rows.width = vector_dim(cfg);
  nlohmann::json index = nlohmann::json::object();
  const auto lines = read_lines(slices);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto j = parse_json_line(lines[n], slices, n);
    std::string id;
    Slice slice;
    TokenId target = 0;
    try {
      id = j.at("sentence").get<std::string>();
      target = j.at("target").get<TokenId>();
      slice = slice_from_json(j.at("slice"));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("slices", slices.string() + ":" + std::to_string(n + 1) + ": " + e.what());
    }
    if (!index.contains(id)) index[id] = {{"offset", rows.rows}, {"count", 0}, {"targets", nlohmann::json::array()}};
    auto& entry = index[id];
    if (entry["offset"].get<std::size_t>() + entry["count"].get<std::size_t>() != rows.rows)
      throw DataError("slices for sentence '" + id + "' are not contiguous");
    const auto v = encode_slice(slice, cfg, emb, labels);
    rows.values.insert(rows.values.end(), v.values.begin(), v.values.end());
    ++rows.rows;
    entry["count"] = entry["count"].get<std::size_t>() + 1;
    entry["targets"].push_back(target);
  }
  write_float_rows(out, kSliceVectorMagic, rows);
  write_text(index_path_for(out), index.dump() + "\n");
  write_manifest(manifest_for(out), "encode",
                 {{"slices", slices.string()},
                  {"embeddings", embeddings.string()},
                  {"labels", labels.size()},
                  {"capacities", capacities_json(cfg.capacity)}},
                 {out, index_path_for(out)});
  return 0;
}

EncodedCorpus read_encoded(const fs::path& path) {
  const auto rows = read_float_rows(path, kSliceVectorMagic);
  std::ifstream in(index_path_for(path));
  if (!in) throw ConfigError("cannot open index " + index_path_for(path).string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(index_path_for(path).string() + ": " + e.what(), e.byte);
  }
  EncodedCorpus corpus;
  corpus.dim = rows.width;
  std::vector<std::pair<std::size_t, EncodedSentence>> ordered;
  try {
    for (const auto& [id, entry] : index.items()) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = entry.at("count").get<std::size_t>();
      if (offset + count > rows.rows) throw DataError("index entry '" + id + "' exceeds the vector file");
      EncodedSentence s;
      s.id = id;
      s.targets = entry.at("targets").get<std::vector<TokenId>>();
      if (s.targets.size() != count) throw DataError("index entry '" + id + "' has a wrong number of targets");
      s.dense.resize(static_cast<Eigen::Index>(rows.width), static_cast<Eigen::Index>(count));
      for (std::size_t c = 0; c < count; ++c) {
        const auto row = rows.row(offset + c);
        for (std::size_t d = 0; d < row.size(); ++d)
          s.dense(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c)) = row[d];
      }
      ordered.emplace_back(offset, std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("index", e.what());
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [offset, s] : ordered) corpus.sentences.push_back(std::move(s));
  return corpus;
}

int cmd_train(const fs::path& encoded, const fs::path& embeddings, const fs::path& base_logits,
              const fs::path& config, std::optional<std::uint64_t> seed, std::size_t threads, const fs::path& out) {
  TrainConfig cfg;
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw ConfigError("cannot open " + config.string());
    try {
      cfg = TrainConfig::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(config.string() + ": " + e.what());
    }
  }
  if (seed) cfg.seed = *seed;
  cfg.threads = threads;
  if (cfg.train_embedding) throw ConfigError("train_embedding is not available for precomputed slice vectors");
  const auto corpus = read_encoded(encoded);
  const auto emb = read_embeddings(embeddings);
  std::optional<BaseLogitsSource> base;
  if (!base_logits.empty()) base.emplace(BaseLogitsSource::load(base_logits));
  const auto result = train(corpus, emb, base ? &*base : nullptr, cfg);
  Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.metadata = {{"train", cfg.to_json()}, {"ensemble", base.has_value()}, {"training", training_log_json(result)}};
  write_checkpoint(out, ckpt);
  const fs::path log_path = out.string() + ".log.json";
  write_text(log_path, training_log_json(result).dump(2) + "\n");
  write_manifest(manifest_for(out), "train",
                 {{"encoded", encoded.string()},
                  {"embeddings", embeddings.string()},
                  {"base_logits", base_logits.string()},
                  {"config", cfg.to_json()}},
                 {out, log_path});
  std::cerr << "best epoch " << result.best_epoch << ", dev ppl " << result.best_dev_ppl << '\n';
  return 0;
}

int cmd_eval(const fs::path& posteriors, const fs::path& gold_path, const fs::path& tags_path, const fs::path& out) {
  const auto rows = read_float_rows(posteriors, kPosteriorMagic);
  const auto index = read_row_index(index_path_for(posteriors));
  std::vector<TokenEval> evals;
  std::vector<std::string> token_tags;
  std::vector<std::vector<std::string>> tags;
  if (!tags_path.empty()) tags = read_tags(tags_path);
  const auto lines = read_lines(gold_path);
  if (!tags.empty() && tags.size() != lines.size())
    throw DataError(std::to_string(tags.size()) + " tag lines for " + std::to_string(lines.size()) + " sentences");
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const auto j = parse_json_line(lines[n], gold_path, n);
    const auto id = j.at("id").get<std::string>();
    const auto ids = j.at("ids").get<std::vector<TokenId>>();
    const auto it = index.find(id);
    if (it == index.end()) throw AlignmentError("no posteriors for sentence '" + id + "'");
    if (it->second.count != ids.size())
      throw AlignmentError("sentence '" + id + "': " + std::to_string(it->second.count) + " posterior rows for " +
                           std::to_string(ids.size()) + " tokens");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto row = rows.row(it->second.offset + i);
      std::vector<double> dist(row.begin(), row.end());
      double mass = 0.0;
      for (const auto p : dist) mass += p;
      if (std::abs(mass - 1.0) > 1e-4)
        throw DataError("sentence '" + id + "' token " + std::to_string(i) + ": posterior mass " + std::to_string(mass));
      for (auto& p : dist) p /= mass;
      evals.push_back(evaluate_token(dist, ids[i]));
    }
    if (!tags.empty()) {
      const auto words = j.at("words").get<std::vector<std::size_t>>();
      const auto word_count = j.at("word_count").get<std::size_t>();
      if (tags[n].size() != word_count)
        throw DataError("sentence '" + id + "': " + std::to_string(tags[n].size()) + " tags for " +
                        std::to_string(word_count) + " words");
      for (const auto w : words) token_tags.push_back(tags[n][w]);
    }
  }
  auto report = summarize(evals);
  if (!tags.empty()) report.by_pos = pos_breakdown(evals, token_tags, &report.unknown_tags);
  const auto text = report_json(report).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
    write_manifest(manifest_for(out), "eval", {{"posteriors", posteriors.string()}, {"gold", gold_path.string()}},
                   {out});
  }
  return 0;
}

std::vector<double> read_scores(const fs::path& path) {
  std::vector<double> scores;
  for (const auto& line : read_lines(path)) {
    try {
      std::size_t used = 0;
      scores.push_back(std::stod(line, &used));
      if (used != line.size()) throw std::invalid_argument(line);
    } catch (const std::logic_error&) {
      throw ParseError(path.string() + ": not a number: " + line, 0);
    }
  }
  return scores;
}

int cmd_sigtest(const std::vector<fs::path>& a, const std::vector<fs::path>& b, std::size_t rounds,
                std::uint64_t seed, double alpha, std::size_t threads) {
  if (a.size() != b.size()) throw ConfigError("--a and --b must be given the same number of times");
  std::vector<std::vector<double>> sa, sb;
  for (const auto& p : a) sa.push_back(read_scores(p));
  for (const auto& p : b) sb.push_back(read_scores(p));
  nlohmann::json j;
  if (a.size() == 1) {
    j["p_value"] = approx_randomization_test(sa[0], sb[0], rounds, seed, threads);
    j["significant"] = j["p_value"].get<double>() < alpha;
  } else {
    const auto r = significance_all_seeds(sa, sb, rounds, seed, alpha, threads);
    j["p_values"] = r.p_values;
    j["significant"] = r.significant;
  }
  j["rounds"] = rounds;
  j["alpha"] = alpha;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_ablate(const fs::path& graphs_path, bool labels, bool anchors, const std::string& phase_name,
               std::uint64_t seed, std::string split, bool ptb, const fs::path& out) {
  const auto phase = parse_perturb_phase(phase_name);
  if (!phase) throw ConfigError("--phase must be train, test or both");
  if (!labels && !anchors) throw ConfigError("ablate needs --labels and/or --anchors");
  PerturbSpec spec{labels, anchors, *phase, seed};
  if (split.empty()) split = *phase == PerturbPhase::testing ? "eval" : "train";
  if (split != "train" && split != "eval") throw ConfigError("--split must be train or eval");
  const auto graphs = perturb_corpus(ingest_graphs(graphs_path, ptb), spec, split, default_threads());
  write_mrp_file(out, graphs);
  write_manifest(manifest_for(out), "ablate",
                 {{"graphs", graphs_path.string()},
                  {"labels", labels},
                  {"anchors", anchors},
                  {"phase", phase_name},
                  {"seed", seed},
                  {"split", split}},
                 {out});
  return 0;
}

int cmd_synth(const fs::path& out, const SyntheticWorkspaceConfig& cfg) {
  write_synthetic_workspace(out, cfg);
  std::vector<fs::path> outputs;
  for (const auto& e : fs::directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") outputs.push_back(e.path());
  std::sort(outputs.begin(), outputs.end());
  write_manifest(out / "manifest.json", "synth",
                 {{"seed", cfg.seed},
                  {"train", cfg.train_sentences},
                  {"eval", cfg.eval_sentences},
                  {"vocab", cfg.vocab_size},
                  {"embedding_dim", cfg.embedding_dim},
                  {"dependency", cfg.dependency}},
                 outputs);
  return 0;
}

// KEY=VALUE, VALUE parsed as JSON when possible and as a string otherwise.
nlohmann::json parse_overrides(const std::vector<std::string>& sets) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    const auto value = s.substr(eq + 1);
    j[s.substr(0, eq)] = nlohmann::json::accept(value) ? nlohmann::json::parse(value) : nlohmann::json(value);
  }
  return j;
}

int cmd_run(const fs::path& config, const std::vector<std::string>& sets, const fs::path& out,
            std::optional<std::size_t> threads) {
  auto cfg = PipelineConfig::load(config);
  const auto overrides = parse_overrides(sets);
  if (!overrides.empty()) cfg = PipelineConfig::from_json(overrides, fs::current_path(), cfg);
  if (!out.empty()) cfg.out = out;
  if (threads) cfg.threads = *threads;
  const auto result = run_pipeline(cfg);
  std::cout << nlohmann::json{{"ppl", result.report.ppl},
                              {"base_ppl", result.base ? nlohmann::json(result.base->ppl) : nlohmann::json(nullptr)},
                              {"report", result.report_path.string()}}
                   .dump()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slice-conditioned next-token prediction toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "slicelm 0.1");

  struct {
    std::string graphs, vocab, merges, text, out, slices, embeddings, labels_file, encoded, base_logits, config,
        posteriors, gold, tags, phase = "both", split;
    bool validate = false, ptb = false, shuffle_labels = false, shuffle_anchors = false;
    std::vector<std::size_t> capacities;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::vector<std::string> a, b, sets;
    std::size_t rounds = 10000;
    double alpha = 0.05;
    SyntheticWorkspaceConfig synth;
  } o;

  auto* ingest = app.add_subcommand("ingest", "read, normalize and validate MRP graphs");
  ingest->add_option("--graphs", o.graphs, "MRP JSON-lines file")->required()->check(CLI::ExistingFile);
  ingest->add_flag("--validate", o.validate, "print a validation report per graph");
  ingest->add_flag("--ptb", o.ptb, "collapse preterminal labels");
  ingest->add_option("--out", o.out, "output directory");

  auto* tokenize = app.add_subcommand("tokenize", "byte-level BPE tokenization, one line per sentence");
  tokenize->add_option("--vocab", o.vocab)->required()->check(CLI::ExistingFile);
  tokenize->add_option("--merges", o.merges)->required()->check(CLI::ExistingFile);
  tokenize->add_option("--text", o.text)->required()->check(CLI::ExistingFile);
  tokenize->add_option("--out", o.out);

  auto* slice = app.add_subcommand("slice", "per-token slices as JSON lines");
  slice->add_option("--graphs", o.graphs)->required()->check(CLI::ExistingFile);
  slice->add_option("--vocab", o.vocab)->required()->check(CLI::ExistingFile);
  slice->add_option("--merges", o.merges)->required()->check(CLI::ExistingFile);
  slice->add_flag("--ptb", o.ptb);
  slice->add_option("--out", o.out)->required();

  auto* encode = app.add_subcommand("encode", "slice vectors (SVC1) from slice JSON lines");
  encode->add_option("--slices", o.slices)->required()->check(CLI::ExistingFile);
  encode->add_option("--embeddings", o.embeddings)->required()->check(CLI::ExistingFile);
  encode->add_option("--labels", o.labels_file, "one label per line")->required()->check(CLI::ExistingFile);
  encode->add_option("--capacities", o.capacities, "parent sibling grandparent aunt child coparent")->expected(6);
  encode->add_option("--out", o.out)->required();

  auto* train_cmd = app.add_subcommand("train", "train the slice model on SVC1 vectors");
  train_cmd->add_option("--encoded", o.encoded)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--embeddings", o.embeddings, "EMB1 table tied to the output layer")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--base-logits", o.base_logits, "LGT1 file to ensemble with")->check(CLI::ExistingFile);
  train_cmd->add_option("--config", o.config, "JSON training config")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", o.seed);
  train_cmd->add_option("--threads", o.threads);
  train_cmd->add_option("--out", o.out, "checkpoint path")->required();

  auto* eval = app.add_subcommand("eval", "metrics from posteriors (PST1) and gold tokens");
  eval->add_option("--posteriors", o.posteriors)->required()->check(CLI::ExistingFile);
  eval->add_option("--gold", o.gold, "JSON lines with id, ids, words, word_count")->required()->check(CLI::ExistingFile);
  eval->add_option("--tags", o.tags)->check(CLI::ExistingFile);
  eval->add_option("--out", o.out);

  auto* sigtest = app.add_subcommand("sigtest", "paired approximate randomization test on per-token scores");
  sigtest->add_option("--a", o.a, "scores of system A; repeat once per seed")->required()->check(CLI::ExistingFile);
  sigtest->add_option("--b", o.b, "scores of system B; repeat once per seed")->required()->check(CLI::ExistingFile);
  sigtest->add_option("--R", o.rounds)->check(CLI::PositiveNumber);
  sigtest->add_option("--seed", o.seed);
  sigtest->add_option("--alpha", o.alpha);
  sigtest->add_option("--threads", o.threads);

  auto* ablate = app.add_subcommand("ablate", "shuffle node labels and/or anchors");
  ablate->add_option("--graphs", o.graphs)->required()->check(CLI::ExistingFile);
  ablate->add_flag("--labels", o.shuffle_labels);
  ablate->add_flag("--anchors", o.shuffle_anchors);
  ablate->add_option("--phase", o.phase)->check(CLI::IsMember({"train", "test", "both"}));
  ablate->add_option("--split", o.split, "seed stream: train or eval")->check(CLI::IsMember({"train", "eval"}));
  ablate->add_option("--seed", o.seed);
  ablate->add_flag("--ptb", o.ptb);
  ablate->add_option("--out", o.out)->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus workspace");
  synth->add_option("--seed", o.synth.seed);
  synth->add_option("--train", o.synth.train_sentences);
  synth->add_option("--eval", o.synth.eval_sentences);
  synth->add_option("--vocab", o.synth.vocab_size);
  synth->add_option("--embedding-dim", o.synth.embedding_dim);
  synth->add_option("--bigram-alpha", o.synth.bigram_alpha);
  synth->add_flag("--dependency", o.synth.dependency, "point config.json at the dependency graphs");
  synth->add_option("--out", o.out)->required();

  auto* run = app.add_subcommand("run", "end-to-end pipeline from a JSON config");
  run->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  run->add_option("--set", o.sets, "override a config key, KEY=VALUE");
  run->add_option("--out", o.out);
  run->add_option("--threads", o.threads);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*ingest) return cmd_ingest(o.graphs, o.validate, o.ptb, o.out);
    if (*tokenize) return cmd_tokenize(o.vocab, o.merges, o.text, o.out);
    if (*slice) return cmd_slice(o.graphs, o.vocab, o.merges, o.ptb, o.out);
    if (*encode) return cmd_encode(o.slices, o.embeddings, o.labels_file, o.capacities, o.out);
    if (*train_cmd)
      return cmd_train(o.encoded, o.embeddings, o.base_logits, o.config, o.seed, o.threads.value_or(default_threads()),
                       o.out);
    if (*eval) return cmd_eval(o.posteriors, o.gold, o.tags, o.out);
    if (*sigtest)
      return cmd_sigtest({o.a.begin(), o.a.end()}, {o.b.begin(), o.b.end()}, o.rounds, o.seed.value_or(0), o.alpha,
                         o.threads.value_or(default_threads()));
    if (*ablate)
      return cmd_ablate(o.graphs, o.shuffle_labels, o.shuffle_anchors, o.phase, o.seed.value_or(0), o.split, o.ptb,
                        o.out);
    if (*synth) return cmd_synth(o.out, o.synth);
    if (*run) return cmd_run(o.config, o.sets, o.out, o.threads);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return 0;
}
