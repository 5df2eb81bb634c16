#include "slicelm/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string_view>

#include "slicelm/binary_io.hpp"
#include "slicelm/error.hpp"
#include "slicelm/rng.hpp"

namespace slicelm {

namespace {

struct Rule {
  std::string_view name;
  std::string_view lhs;
  std::vector<std::string_view> rhs;
  double weight;
  std::size_t head;
};

struct Preterminal {
  std::string_view upos;
  std::vector<std::string_view> words;
};

// The first rule of every left-hand side terminates without recursion; it is
// forced once the derivation gets deep.
const std::vector<Rule>& rules() {
  static const std::vector<Rule> kRules = {
      {"s.sg", "S", {"NP.sg", "VP.sg", "PUNCT"}, 3.0, 1},
      {"s.pl", "S", {"NP.pl", "VP.pl", "PUNCT"}, 3.0, 1},
      {"s.pp.sg", "S", {"PP", "NP.sg", "VP.sg", "PUNCT"}, 0.8, 2},
      {"s.pp.pl", "S", {"PP", "NP.pl", "VP.pl", "PUNCT"}, 0.8, 2},
      {"s.adv.sg", "S", {"ADV", "NP.sg", "VP.sg", "PUNCT"}, 0.6, 2},
      {"s.adv.pl", "S", {"ADV", "NP.pl", "VP.pl", "PUNCT"}, 0.6, 2},
      {"s.conj.sg", "S", {"NP.sg", "VP.sg", "CONJ", "VP.sg", "PUNCT"}, 0.7, 1},
      {"s.conj.pl", "S", {"NP.pl", "VP.pl", "CONJ", "VP.pl", "PUNCT"}, 0.7, 1},

      {"sbar", "SBAR", {"COMP", "CL"}, 1.0, 1},
      {"cl.sg", "CL", {"NP.sg", "VP.sg"}, 1.0, 1},
      {"cl.pl", "CL", {"NP.pl", "VP.pl"}, 1.0, 1},

      {"np.sg.det", "NP.sg", {"DET.sg", "NOM.sg"}, 5.0, 1},
      {"np.sg.name", "NP.sg", {"PROPN"}, 1.5, 0},
      {"np.sg.pron", "NP.sg", {"PRON.sg"}, 1.0, 0},
      {"np.sg.pp", "NP.sg", {"DET.sg", "NOM.sg", "PP"}, 1.2, 1},
      {"np.sg.rc", "NP.sg", {"DET.sg", "NOM.sg", "RC.sg"}, 0.8, 1},

      {"np.pl.det", "NP.pl", {"DET.pl", "NOM.pl"}, 4.0, 1},
      {"np.pl.bare", "NP.pl", {"NOM.pl"}, 1.5, 0},
      {"np.pl.pron", "NP.pl", {"PRON.pl"}, 1.0, 0},
      {"np.pl.pp", "NP.pl", {"DET.pl", "NOM.pl", "PP"}, 1.2, 1},
      {"np.pl.rc", "NP.pl", {"DET.pl", "NOM.pl", "RC.pl"}, 0.8, 1},
      {"np.pl.coord", "NP.pl", {"NP.sg", "CONJ", "NP.sg"}, 0.5, 0},

      {"nom.sg.n", "NOM.sg", {"N.sg"}, 5.0, 0},
      {"nom.sg.adj", "NOM.sg", {"ADJ", "NOM.sg"}, 1.5, 1},
      {"nom.sg.cmpd", "NOM.sg", {"N.sg", "N.sg"}, 0.4, 1},
      {"nom.pl.n", "NOM.pl", {"N.pl"}, 5.0, 0},
      {"nom.pl.adj", "NOM.pl", {"ADJ", "NOM.pl"}, 1.5, 1},
      {"nom.pl.cmpd", "NOM.pl", {"N.sg", "N.pl"}, 0.4, 1},

      {"vp.sg.intr", "VP.sg", {"V.sg.intr"}, 3.0, 0},
      {"vp.sg.tr.sg", "VP.sg", {"V.sg.tr", "NP.sg"}, 2.0, 0},
      {"vp.sg.tr.pl", "VP.sg", {"V.sg.tr", "NP.pl"}, 1.5, 0},
      {"vp.sg.adv", "VP.sg", {"V.sg.intr", "ADV"}, 1.0, 0},
      {"vp.sg.pp", "VP.sg", {"V.sg.intr", "PP"}, 1.2, 0},
      {"vp.sg.cop", "VP.sg", {"AUX.sg", "ADJP"}, 1.2, 1},
      {"vp.sg.say", "VP.sg", {"V.sg.say", "SBAR"}, 0.6, 0},
      {"vp.sg.tr.pp", "VP.sg", {"V.sg.tr", "NP.sg", "PP"}, 0.6, 0},

      {"vp.pl.intr", "VP.pl", {"V.pl.intr"}, 3.0, 0},
      {"vp.pl.tr.sg", "VP.pl", {"V.pl.tr", "NP.sg"}, 2.0, 0},
      {"vp.pl.tr.pl", "VP.pl", {"V.pl.tr", "NP.pl"}, 1.5, 0},
      {"vp.pl.adv", "VP.pl", {"V.pl.intr", "ADV"}, 1.0, 0},
      {"vp.pl.pp", "VP.pl", {"V.pl.intr", "PP"}, 1.2, 0},
      {"vp.pl.cop", "VP.pl", {"AUX.pl", "ADJP"}, 1.2, 1},
      {"vp.pl.say", "VP.pl", {"V.pl.say", "SBAR"}, 0.6, 0},
      {"vp.pl.tr.pp", "VP.pl", {"V.pl.tr", "NP.pl", "PP"}, 0.6, 0},

      {"pp.sg", "PP", {"P", "NP.sg"}, 1.0, 0},
      {"pp.pl", "PP", {"P", "NP.pl"}, 1.0, 0},

      {"rc.sg.subj", "RC.sg", {"REL", "VP.sg"}, 1.0, 1},
      {"rc.sg.obj.sg", "RC.sg", {"REL", "NP.sg", "V.sg.tr"}, 0.4, 2},
      {"rc.sg.obj.pl", "RC.sg", {"REL", "NP.pl", "V.pl.tr"}, 0.4, 2},
      {"rc.pl.subj", "RC.pl", {"REL", "VP.pl"}, 1.0, 1},
      {"rc.pl.obj.sg", "RC.pl", {"REL", "NP.sg", "V.sg.tr"}, 0.4, 2},
      {"rc.pl.obj.pl", "RC.pl", {"REL", "NP.pl", "V.pl.tr"}, 0.4, 2},

      {"adjp.plain", "ADJP", {"ADJ"}, 2.0, 0},
      {"adjp.deg", "ADJP", {"DEG", "ADJ"}, 1.0, 1},
  };
  return kRules;
}

const std::map<std::string_view, Preterminal>& lexicon() {
  static const std::map<std::string_view, Preterminal> kLexicon = {
      {"DET.sg", {"DET", {"the", "a", "this", "that", "every", "each"}}},
      {"DET.pl", {"DET", {"the", "these", "those", "some", "many", "several"}}},
      {"N.sg", {"NOUN", {"dog", "cat", "bird", "teacher", "student", "farmer", "child", "river", "house", "garden",
                         "book", "letter", "city", "village", "doctor", "king", "queen", "horse", "table", "window"}}},
      {"N.pl", {"NOUN", {"dogs", "cats", "birds", "teachers", "students", "farmers", "children", "rivers", "houses",
                         "gardens", "books", "letters", "cities", "villages", "doctors", "kings", "queens", "horses",
                         "tables", "windows"}}},
      {"PROPN", {"PROPN", {"alice", "bob", "carol", "david", "emma", "frank"}}},
      {"PRON.sg", {"PRON", {"she", "he", "it"}}},
      {"PRON.pl", {"PRON", {"they", "we"}}},
      {"V.sg.intr", {"VERB", {"sleeps", "runs", "laughs", "waits", "sings", "falls", "arrives", "smiles"}}},
      {"V.pl.intr", {"VERB", {"sleep", "run", "laugh", "wait", "sing", "fall", "arrive", "smile"}}},
      {"V.sg.tr", {"VERB", {"sees", "likes", "finds", "follows", "helps", "watches", "visits", "reads"}}},
      {"V.pl.tr", {"VERB", {"see", "like", "find", "follow", "help", "watch", "visit", "read"}}},
      {"V.sg.say", {"VERB", {"thinks", "says", "knows"}}},
      {"V.pl.say", {"VERB", {"think", "say", "know"}}},
      {"AUX.sg", {"AUX", {"is", "was"}}},
      {"AUX.pl", {"AUX", {"are", "were"}}},
      {"ADJ", {"ADJ", {"old", "young", "small", "big", "happy", "quiet", "green", "red", "tall", "clever"}}},
      {"ADV", {"ADV", {"quickly", "slowly", "often", "today", "again"}}},
      {"DEG", {"ADV", {"very", "quite", "rather"}}},
      {"P", {"ADP", {"in", "on", "near", "with", "behind", "under", "from"}}},
      {"CONJ", {"CCONJ", {"and", "but"}}},
      {"COMP", {"SCONJ", {"that", "if"}}},
      {"REL", {"PRON", {"who", "which"}}},
      {"PUNCT", {"PUNCT", {"."}}},
  };
  return kLexicon;
}

constexpr std::size_t kMaxDepth = 6;

struct TreeNode {
  std::string label;
  std::string category;
  std::vector<std::size_t> children;
  std::size_t first_word = 0;
  std::size_t last_word = 0;
  std::size_t head_word = 0;
  std::size_t head_child = 0;
  bool preterminal = false;
};

std::string lower_category(std::string_view symbol) {
  std::string out(symbol.substr(0, symbol.find('.')));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

class Sampler {
 public:
  explicit Sampler(Rng& rng) : rng_(rng) {}

  std::size_t expand(std::string_view symbol, std::size_t depth) {
    const std::size_t index = nodes_.size();
    nodes_.emplace_back();
    if (const auto it = lexicon().find(symbol); it != lexicon().end()) {
      const auto& words = it->second.words;
      auto& node = nodes_[index];
      node.label = std::string(symbol);
      node.category = lower_category(symbol);
      node.preterminal = true;
      node.first_word = node.last_word = node.head_word = words_.size();
      words_.emplace_back(words[rng_.below(words.size())]);
      upos_.emplace_back(it->second.upos);
      return index;
    }
    const Rule& rule = choose(symbol, depth);
    std::vector<std::size_t> children;
    for (const auto child : rule.rhs) children.push_back(expand(child, depth + 1));
    auto& node = nodes_[index];
    node.label = std::string(rule.name);
    node.category = lower_category(rule.lhs);
    node.children = children;
    node.first_word = nodes_[children.front()].first_word;
    node.last_word = nodes_[children.back()].last_word;
    node.head_child = rule.head;
    node.head_word = nodes_[children[rule.head]].head_word;
    return index;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::string>& upos() const { return upos_; }

 private:
  const Rule& choose(std::string_view lhs, std::size_t depth) {
    std::vector<const Rule*> options;
    for (const auto& r : rules())
      if (r.lhs == lhs) options.push_back(&r);
    if (options.empty()) throw std::logic_error("grammar has no rule for " + std::string(lhs));
    if (depth >= kMaxDepth) return *options.front();
    double total = 0.0;
    for (const auto* r : options) total += r->weight;
    double x = rng_.uniform() * total;
    for (const auto* r : options) {
      x -= r->weight;
      if (x < 0.0) return *r;
    }
    return *options.back();
  }

  Rng& rng_;
  std::vector<TreeNode> nodes_;
  std::vector<std::string> words_;
  std::vector<std::string> upos_;
};

}  // namespace

std::size_t synthetic_rule_count() { return rules().size(); }

std::vector<SyntheticSentence> generate_synthetic_corpus(std::uint64_t seed, std::size_t n) {
  std::vector<SyntheticSentence> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Rng rng(derive_seed(seed, k, "sentence"));
    Sampler sampler(rng);
    sampler.expand("S", 0);

    SyntheticSentence s;
    char id[32];
    std::snprintf(id, sizeof id, "syn%06zu", k);
    s.id = id;
    s.words = sampler.words();
    s.upos = sampler.upos();
    std::vector<Span> spans;
    for (const auto& w : s.words) {
      if (!s.text.empty()) s.text += ' ';
      spans.push_back({s.text.size(), s.text.size() + w.size()});
      s.text += w;
    }

    Graph tree;
    tree.id = s.id;
    tree.text = s.text;
    tree.tops = {0};
    const auto& nodes = sampler.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& t = nodes[i];
      tree.nodes.push_back(
          Node{static_cast<NodeId>(i), {{spans[t.first_word].from, spans[t.last_word].to}}, t.label});
      for (const auto c : t.children) tree.edges.push_back(Edge{static_cast<NodeId>(i), static_cast<NodeId>(c), ""});
    }
    s.constituency = convert_ptb_node_labels(tree);

    s.dependency.id = s.id;
    s.dependency.text = s.text;
    for (std::size_t w = 0; w < s.words.size(); ++w)
      s.dependency.nodes.push_back(Node{static_cast<NodeId>(w), {spans[w]}, std::nullopt});
    s.dependency.tops = {static_cast<NodeId>(nodes.front().head_word)};
    for (const auto& t : nodes) {
      for (std::size_t c = 0; c < t.children.size(); ++c) {
        if (c == t.head_child) continue;
        const auto& dep = nodes[t.children[c]];
        s.dependency.edges.push_back(
            Edge{static_cast<NodeId>(t.head_word), static_cast<NodeId>(dep.head_word), dep.category});
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

TokenizerTables learn_bpe(std::span<const std::string> texts, std::size_t vocab_size) {
  const auto& b2u = byte_to_unicode();
  std::map<std::string, std::size_t> piece_counts;
  std::set<unsigned char> bytes;
  for (const auto& text : texts) {
    for (const auto& span : gpt2_pretokenize(text)) {
      const std::string piece = text.substr(span.from, span.to - span.from);
      ++piece_counts[piece];
      for (const unsigned char c : piece) bytes.insert(c);
    }
  }
  std::vector<std::string> vocab;
  for (const auto b : bytes) vocab.push_back(b2u[b]);
  if (vocab.size() > vocab_size)
    throw ConfigError("corpus has " + std::to_string(vocab.size()) + " distinct bytes, more than the vocab size");

  struct Word {
    std::vector<std::string> symbols;
    std::size_t count;
  };
  std::vector<Word> words;
  for (const auto& [piece, count] : piece_counts) {
    Word w{{}, count};
    for (const unsigned char c : piece) w.symbols.push_back(b2u[c]);
    words.push_back(std::move(w));
  }

  std::vector<MergePair> merges;
  while (vocab.size() < vocab_size) {
    std::map<MergePair, std::size_t> pairs;
    for (const auto& w : words)
      for (std::size_t k = 0; k + 1 < w.symbols.size(); ++k) pairs[{w.symbols[k], w.symbols[k + 1]}] += w.count;
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const MergePair pair = best->first;
    const std::string merged = pair.first + pair.second;
    merges.push_back(pair);
    vocab.push_back(merged);
    for (auto& w : words) {
      std::vector<std::string> next;
      for (std::size_t k = 0; k < w.symbols.size(); ++k) {
        if (k + 1 < w.symbols.size() && w.symbols[k] == pair.first && w.symbols[k + 1] == pair.second) {
          next.push_back(merged);
          ++k;
        } else {
          next.push_back(w.symbols[k]);
        }
      }
      w.symbols = std::move(next);
    }
  }
  return TokenizerTables(std::move(vocab), std::move(merges));
}

EmbeddingTable random_embeddings(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0, "embeddings"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<float> values(rows * dim);
  for (auto& v : values) v = static_cast<float>(scale * rng.normal());
  return EmbeddingTable(rows, dim, std::move(values));
}

BigramLM::BigramLM(std::size_t vocab_size, double alpha)
    : vocab_(vocab_size), alpha_(alpha), counts_((vocab_size + 1) * vocab_size, 0.0), totals_(vocab_size + 1, 0.0) {
  if (vocab_size == 0 || !(alpha > 0.0)) throw ConfigError("bigram model needs V > 0 and alpha > 0");
}

void BigramLM::fit(std::span<const std::vector<TokenId>> sequences) {
  for (const auto& seq : sequences) {
    std::size_t prev = vocab_;
    for (const auto t : seq) {
      if (t >= vocab_) throw VocabularyError("bigram model: token id outside the vocabulary");
      counts_[prev * vocab_ + t] += 1.0;
      totals_[prev] += 1.0;
      prev = t;
    }
  }
}

std::vector<float> BigramLM::logits(std::optional<TokenId> previous) const {
  const std::size_t prev = previous ? *previous : vocab_;
  if (prev > vocab_) throw VocabularyError("bigram model: token id outside the vocabulary");
  std::vector<float> out(vocab_);
  const double denom = totals_[prev] + alpha_ * static_cast<double>(vocab_);
  for (std::size_t v = 0; v < vocab_; ++v)
    out[v] = static_cast<float>(std::log((counts_[prev * vocab_ + v] + alpha_) / denom));
  return out;
}

void BigramLM::export_logits(std::span<const Sequence> sequences, const std::filesystem::path& path) const {
  FloatRows rows;
  rows.width = vocab_;
  RowIndex index;
  for (const auto& seq : sequences) {
    if (index.contains(seq.id)) throw DataError("bigram export: duplicate sentence id '" + seq.id + "'");
    index[seq.id] = {rows.rows, seq.tokens.size()};
    std::optional<TokenId> prev;
    for (const auto t : seq.tokens) {
      const auto row = logits(prev);
      rows.values.insert(rows.values.end(), row.begin(), row.end());
      ++rows.rows;
      prev = t;
    }
  }
  write_float_rows(path, kLogitsMagic, rows);
  write_row_index(index_path_for(path), index);
}

}  // namespace slicelm
