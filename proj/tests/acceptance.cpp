#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "fixtures.hpp"
#include "slice_oracle.hpp"
#include "slicelm/encoder.hpp"
#include "slicelm/metrics.hpp"
#include "slicelm/mlp.hpp"
#include "slicelm/pipeline.hpp"
#include "slicelm/slicer.hpp"

using namespace slicelm;
namespace fs = std::filesystem;
using Big = boost::multiprecision::cpp_bin_float_50;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "failed: " << what << "; ";
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::vector<NodeId> nodes_of(const std::vector<Relative>& list) {
  std::vector<NodeId> out;
  for (const auto& r : list) out.push_back(r.node);
  return out;
}

bool only_types(const Slice& s, std::set<RelativeType> allowed) {
  for (const auto t : kRelativeTypes)
    if (!allowed.count(t) && !s.relatives[t].empty()) return false;
  return true;
}

void example_sentence(Outcome& o) {
  const auto start = Clock::now();
  const auto eds = fixtures::align_gpt2(fixtures::example_eds());
  const auto& tokens = eds.tokens().tokens;
  o.require(tokens.size() == 5 && tokens[4].surface == " reported", "tokenization ends in Ġreported");
  const auto s = extract_slice(eds, 4);
  o.require(s.anchor == 3, "EDS anchor 3");
  const auto& child = s.relatives[RelativeType::child];
  o.require(nodes_of(child) == std::vector<NodeId>{2} && child[0].label == "ARG2", "EDS ARG2 child 2");
  std::map<NodeId, std::string> coparents;
  for (const auto& r : s.relatives[RelativeType::coparent]) coparents[r.node] = r.label;
  o.require(coparents == std::map<NodeId, std::string>{{0, "BV"}, {1, "ARG1"}}, "EDS coparents 1/ARG1 and 0/BV");
  o.require(only_types(s, {RelativeType::child, RelativeType::coparent}), "EDS slice has no other relatives");

  const auto ud_graph = fixtures::example_ud();
  const auto ud = fixtures::align_gpt2(ud_graph);
  o.require(ud.tokens().tokens[3].surface == " were", "token 3 is Ġwere");
  const auto w = extract_slice(ud, 3);
  o.require(w.anchor == 2, "UD anchor 2");
  std::set<NodeId> excluded{3};
  for (const auto& e : ud_graph.edges)
    if (e.source == 3 && e.target != 2) excluded.insert(e.target);
  for (const auto t : kRelativeTypes)
    for (const auto& r : w.relatives[t]) o.require(!excluded.count(r.node), "UD slice excludes node 3 and its sibling");
  o.require(excluded.size() >= 2, "UD fixture has a sibling under node 3");
  const double secs = seconds_since(start);
  o.require(secs < 1.0, "runtime under 1 s");
  o.detail << "EDS anchor 3 with {2/ARG2 child, 1/ARG1 + 0/BV coparents}; UD slice at were excludes "
           << excluded.size() << " nodes; " << secs << " s";
}

void admissibility(Outcome& o) {
  const auto start = Clock::now();
  Rng rng(2024);
  std::size_t graphs = 0, positions = 0, relatives = 0, mismatches = 0, violations = 0;
  for (; graphs < 1500; ++graphs) {
    const std::size_t words = 1 + rng.below(10);
    const auto g = fixtures::random_dag(rng, 2 + rng.below(12), words, 0.3);
    const auto aligned = fixtures::align_words(g, words);
    const auto slices = slice_sentence(aligned);
    for (std::size_t i = 0; i < words; ++i) {
      ++positions;
      const auto& s = slices[i];
      for (const auto t : kRelativeTypes)
        for (const auto& r : s.relatives[t]) {
          ++relatives;
          const auto pos = oracle::token_positions(g, aligned.tokens(), r.node);
          const bool future_only = !pos.empty() && std::all_of(pos.begin(), pos.end(), [&](auto p) { return p > i; });
          const bool leaks = std::any_of(r.anchor_positions.begin(), r.anchor_positions.end(), [&](auto p) { return p >= i; });
          if (future_only || leaks) ++violations;
        }
      if (!aligned.at(i).analyzable()) {
        const bool head = aligned.at(i).group_start == i;
        const bool ok = head ? !s.anchor && s.relatives.empty()
                             : i > 0 && s.anchor == slices[i - 1].anchor && s.relatives == slices[i - 1].relatives;
        if (!ok) ++mismatches;
        continue;
      }
      if (!s.anchor) {
        ++mismatches;
        continue;
      }
      const auto want = oracle::expected_relatives(g, aligned.tokens(), *s.anchor, i);
      for (const auto t : kRelativeTypes) {
        auto got = s.relatives[t];
        std::sort(got.begin(), got.end(), [](const auto& x, const auto& y) { return x.discovery < y.discovery; });
        const auto& exp = want[static_cast<std::size_t>(t)];
        bool same = got.size() == exp.size() && oracle::ranked(s.relatives[t], i);
        for (std::size_t k = 0; same && k < exp.size(); ++k)
          same = got[k].node == exp[k].node && got[k].label == exp[k].label &&
                 got[k].anchor_stripped == exp[k].stripped && got[k].anchor_positions == exp[k].positions;
        if (!same) ++mismatches;
      }
    }
  }
  const double secs = seconds_since(start);
  o.require(violations == 0, "no relative is anchored only in the future");
  o.require(mismatches == 0, "slicer agrees with the brute-force oracle");
  o.require(secs < 30.0, "runtime under 30 s");
  o.detail << graphs << " DAGs, " << positions << " positions, " << relatives << " relatives, " << violations
           << " violations, " << mismatches << " oracle mismatches; " << secs << " s";
}

LabelVocabulary labels_of_size(std::size_t n) {
  std::vector<std::string> names{"A", "B", "C", "D"};
  for (std::size_t k = names.size(); k + 1 < n; ++k) names.push_back("l" + std::to_string(k));
  return LabelVocabulary(names);
}

void dimension_formula(Outcome& o) {
  const std::size_t E = 768;
  Rng rng(3);
  std::vector<float> values(12 * E);
  for (auto& x : values) x = static_cast<float>(rng.uniform(-1, 1));
  const EmbeddingTable emb(12, E, std::move(values));
  const auto g = fixtures::random_dag(rng, 10, 10, 0.35);
  const auto slices = slice_sentence(fixtures::align_words(g, 10));
  for (const std::size_t L : {10, 38, 39, 59, 72, 90, 537}) {
    const auto labels = labels_of_size(L);
    const EncoderConfig cfg{kDefaultCapacities, E, labels.size()};
    const std::size_t want = 16 * L + 17 * E;
    o.require(labels.size() == L, "label vocabulary size");
    o.require(vector_dim(cfg) == want, "vector_dim for |L|=" + std::to_string(L));
    for (const auto& s : slices)
      o.require(encode_slice(s, cfg, emb, labels).values.size() == want, "encoded length for |L|=" + std::to_string(L));
    o.detail << L << "->" << want << " ";
  }
}

void metric_oracles(Outcome& o) {
  Rng rng(4);
  const std::size_t V = 50, n = 10000;
  std::vector<TokenEval> evals;
  Big nll = 0, entropy = 0, correct = 0, confidence = 0, rr = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> z(V);
    const double scale = k % 5 == 0 ? 30.0 : 3.0;
    for (auto& x : z) x = rng.uniform(-scale, scale);
    const auto gold = static_cast<TokenId>(rng.below(V));
    evals.push_back(evaluate_token_logits(z, gold));
    std::vector<Big> p(V);
    Big sum = 0;
    for (std::size_t v = 0; v < V; ++v) sum += p[v] = boost::multiprecision::exp(Big(z[v]));
    std::size_t best = 0, above = 0;
    for (std::size_t v = 0; v < V; ++v) {
      p[v] /= sum;
      if (p[v] > 0) entropy -= p[v] * boost::multiprecision::log(p[v]);
    }
    for (std::size_t v = 0; v < V; ++v) {
      if (p[v] > p[best]) best = v;
      if (p[v] > p[gold]) ++above;
    }
    nll -= boost::multiprecision::log(p[gold]);
    correct += best == gold;
    confidence += p[best];
    rr += Big(1) / Big(above + 1);
  }
  const auto r = summarize(evals);
  const Big N(n);
  double worst = 0.0;
  auto compare = [&](double got, const Big& want) {
    const double w = want.convert_to<double>();
    worst = std::max(worst, std::abs(got - w) / std::max(1.0, std::abs(w)));
  };
  compare(r.ppl, boost::multiprecision::exp(nll / N));
  compare(r.entropy, entropy / N);
  compare(r.accuracy, 100 * correct / N);
  compare(r.confidence, 100 * confidence / N);
  compare(r.mrr, rr / N);
  o.require(worst < 1e-10, "metrics within 1e-10 of the 50-digit oracle");

  const std::size_t U = 200;
  std::vector<std::vector<double>> uniform(1000, std::vector<double>(U, 1.0 / U));
  std::vector<TokenId> gold(uniform.size());
  for (auto& t : gold) t = static_cast<TokenId>(rng.below(U));
  const auto u = evaluate(uniform, gold);
  o.require(std::abs(u.ppl - U) <= 1e-9 * U, "uniform PPL = V");
  o.require(std::abs(u.entropy - std::log(double(U))) <= 1e-9, "uniform H = ln V");

  std::vector<double> a(500), b(500);
  for (auto& x : a) x = rng.uniform(0, 6);
  for (std::size_t k = 0; k < a.size(); ++k) b[k] = a[k] + 1.0;
  const double same = approx_randomization_test(a, a, 10000, 1);
  const double gap = approx_randomization_test(a, b, 10000, 1);
  o.require(same == 1.0, "p = 1 for identical inputs");
  o.require(gap == 1.0 / 10001, "p = 1/(R+1) for a maximal gap");
  o.detail << "max rel err " << worst << "; uniform PPL " << u.ppl << "; p(identical) " << same << "; p(gap) " << gap;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-scale, scale);
  return m;
}

double reference_loss(const ModelParams& p, const Eigen::MatrixXd& x, std::span<const TokenId> targets,
                      const Eigen::MatrixXd& base) {
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    Eigen::MatrixXd pre = p.weight[l] * h;
    pre.colwise() += p.bias[l];
    h = pre.cwiseMax(0.0);
  }
  const Eigen::MatrixXd z = p.embedding * h + base;
  double loss = 0.0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double m = z.col(c).maxCoeff();
    loss += m + std::log((z.col(c).array() - m).exp().sum()) - z(targets[c], c);
  }
  return loss / static_cast<double>(z.cols());
}

void gradient_check(Outcome& o) {
  Rng rng(5);
  std::vector<float> values(8 * 4);
  for (auto& x : values) x = static_cast<float>(rng.uniform(-1, 1));
  const EmbeddingTable emb(8, 4, std::move(values));
  auto p = init_params(6, {9, 4}, emb, 0.0, 7);
  for (auto& b : p.bias) b = random_matrix(rng, b.size(), 1, 0.3).col(0);
  const auto x = random_matrix(rng, 6, 5, 1.0);
  const std::vector<TokenId> targets{1, 7, 0, 3, 3};
  const Eigen::MatrixXd base = random_matrix(rng, 8, 5, 2.0);
  Gradients g;
  backward(forward_batch(x, p, false), p, targets, &base, g);
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = reference_loss(p, x, targets, base);
    param = keep - h;
    const double down = reference_loss(p, x, targets, base);
    param = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3}));
    ++checked;
  };
  for (std::size_t l = 0; l < p.layers(); ++l) {
    for (Eigen::Index k = 0; k < p.weight[l].size(); ++k) probe(p.weight[l].data()[k], g.weight[l].data()[k]);
    for (Eigen::Index k = 0; k < p.bias[l].size(); ++k) probe(p.bias[l][k], g.bias[l][k]);
  }
  o.require(p.parameter_count() <= 1000, "model has at most 1000 parameters");
  o.require(worst < 1e-4, "finite differences within 1e-4");

  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.3;
  std::vector<double> theta(64), zero(64, 0.0), m(64, 0.0), v(64, 0.0);
  for (auto& t : theta) t = rng.uniform(-5, 5);
  const auto before = theta;
  adamw_step(theta, zero, m, v, cfg, 1);
  double decay_err = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k)
    decay_err = std::max(decay_err, std::abs(theta[k] - before[k] * (1.0 - cfg.lr * cfg.weight_decay)));
  o.require(decay_err <= 1e-12, "zero-gradient step equals theta * (1 - lr * decay)");
  o.detail << checked << " of " << p.parameter_count() << " parameters, max rel err " << worst
           << "; decay identity err " << decay_err;
}

struct SeedRuns {
  double base = 0.0, full = 0.0, test_shuffle = 0.0, both_shuffle = 0.0;
  double full_secs = 0.0, shuffle_secs = 0.0;
  fs::path workspace;
};

SeedRuns run_seed(const fs::path& root, std::uint64_t seed) {
  SyntheticWorkspaceConfig sc;
  sc.seed = seed;
  sc.train_sentences = 5000;
  sc.eval_sentences = 500;
  sc.vocab_size = 200;
  SeedRuns out;
  out.workspace = root / ("seed" + std::to_string(seed));
  auto start = Clock::now();
  auto cfg = write_synthetic_workspace(out.workspace, sc);
  cfg.cache_dir = out.workspace / "cache";
  cfg.threads = threads();
  cfg.out = out.workspace / "full";
  const auto full = run_pipeline(cfg);
  out.full = full.report.ppl;
  out.base = full.base->ppl;
  out.full_secs = seconds_since(start);

  start = Clock::now();
  cfg.perturb.shuffle_anchors = true;
  cfg.perturb.phase = PerturbPhase::testing;
  cfg.out = out.workspace / "test_shuffle";
  out.test_shuffle = run_pipeline(cfg).report.ppl;
  cfg.perturb.phase = PerturbPhase::both;
  cfg.out = out.workspace / "both_shuffle";
  out.both_shuffle = run_pipeline(cfg).report.ppl;
  out.shuffle_secs = seconds_since(start);
  std::cout << "  seed " << seed << ": base " << out.base << ", full " << out.full << ", test shuffle "
            << out.test_shuffle << ", train+test shuffle " << out.both_shuffle << std::endl;
  return out;
}

void ensemble_gain(Outcome& o, const std::vector<SeedRuns>& runs) {
  double secs = 0.0;
  for (const auto& r : runs) {
    const double gain = (r.base - r.full) / r.base;
    o.require(gain >= 0.05, "ensemble at least 5% below base");
    o.detail << std::showpos << -100 * gain << std::noshowpos << "% ";
    secs = std::max(secs, r.full_secs);
  }
  o.require(secs < 600, "runtime under 10 min per seed");
  o.detail << "relative PPL vs base; slowest seed " << secs << " s";
}

void shuffle_pattern(Outcome& o, const std::vector<SeedRuns>& runs) {
  double secs = 0.0;
  for (const auto& r : runs) {
    o.require(r.test_shuffle > r.full, "test-time shuffle degrades the full model");
    const double rel = (r.both_shuffle - r.base) / r.base;
    o.require(std::abs(rel) <= 0.10, "train+test shuffle within 10% of base");
    o.detail << "test " << std::showpos << 100 * (r.test_shuffle - r.full) / r.full << "% vs full, both "
             << 100 * rel << std::noshowpos << "% vs base; ";
    secs = std::max(secs, r.full_secs + r.shuffle_secs);
  }
  o.require(secs < 1200, "runtime under 20 min per seed");
  o.detail << "slowest seed " << secs << " s";
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SLICELM_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism(Outcome& o, const fs::path& workspace) {
  const auto config = (workspace / "config.json").string();
  const auto a = workspace / "det_a", b = workspace / "det_b";
  o.require(run_cli("run --config " + config + " --threads 1 --out " + a.string(), workspace / "det_a.log") == 0, "first run");
  o.require(run_cli("run --config " + config + " --threads 3 --out " + b.string(), workspace / "det_b.log") == 0,
            "second run");
  const bool trained_twice = !nlohmann::json::parse(read_bytes(a / "manifest.json"))["stages"].back()["cache_hit"] &&
                             !nlohmann::json::parse(read_bytes(b / "manifest.json"))["stages"].back()["cache_hit"];
  o.require(trained_twice, "both runs trained from scratch");
  for (const auto* name : {"report.json", "model.ckpt", "scores.txt", "manifest.json"}) {
    const auto x = read_bytes(a / name);
    o.require(!x.empty() && x == read_bytes(b / name), std::string(name) + " identical");
  }
  o.detail << "two uncached runs with 1 and 3 threads: report, checkpoint and scores byte-identical";
}

}  // namespace

int main() {
  const auto root = fs::temp_directory_path() / ("slicelm-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  bool all = true;

  auto report = [&](int n, const std::function<void(Outcome&)>& check) {
    Outcome o;
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    all = all && o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail.str() << ")" << std::endl;
  };

  report(1, example_sentence);
  report(2, admissibility);
  report(3, dimension_formula);
  report(4, metric_oracles);
  report(5, gradient_check);

  std::vector<SeedRuns> runs;
  std::string run_error;
  try {
    for (const std::uint64_t seed : {1, 2, 3}) runs.push_back(run_seed(root, seed));
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto with_runs = [&](const std::function<void(Outcome&, const std::vector<SeedRuns>&)>& check) {
    return [&, check](Outcome& o) {
      if (!run_error.empty()) throw std::runtime_error(run_error);
      check(o, runs);
    };
  };
  report(6, with_runs(ensemble_gain));
  report(7, with_runs(shuffle_pattern));
  report(8, [&](Outcome& o) { determinism(o, runs.empty() ? root / "seed1" : runs.front().workspace); });

  std::error_code ec;
  fs::remove_all(root, ec);
  return all ? 0 : 1;
}
