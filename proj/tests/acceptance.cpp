// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 if any
// gating criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mga/cli.hpp"
#include "mga/ingest.hpp"
#include "mga/lead_graph.hpp"
#include "mga/transformer.hpp"
#include "support.hpp"

using namespace mga;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = true;
  std::string detail;
};

// Collects failed sub-checks of one criterion.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    if (failures_.empty()) return {true, summary};
    std::string d;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + f;
    return {false, d};
  }

 private:
  std::vector<std::string> failures_;
};

std::string pairs_text(const GraphPairs& pairs) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < pairs.size(); ++i)
    os << (i ? "," : "") << '(' << pairs[i].src << ',' << pairs[i].dst << ')';
  os << ']';
  return os.str();
}

std::string labels_text(const std::vector<std::string>& labels) {
  std::string s = "[";
  for (std::size_t i = 0; i < labels.size(); ++i) s += (i ? "," : "") + labels[i];
  return s + "]";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

// ------------------------------------------------------------ golden

Outcome golden(const fs::path& fixtures) {
  Checks c;
  const LeadGraph g = pairs_to_matrix({{0, 1}, {1, 3}, {3, 2}, {2, 1}}, 4);
  const LeadGraph expected = LeadGraph::from_rows({{0, 1, 0, 0}, {0, 0, 0, 1}, {0, 1, 0, 0}, {0, 0, 1, 0}});
  c.expect(g == expected, "4x4 matrix differs:\n" + g.to_text());

  const LoadedSample s = load_sample(fixtures / "girl_dog.json");
  const LevelData concepts = build_concept_level(s.scene);
  const std::vector<std::string> concept_labels = {"girl", "left", "right", "dog", "brown"};
  c.expect(concepts.labels == concept_labels, "concept labels " + labels_text(concepts.labels));
  const GraphPairs concept_pairs = {{0, 1}, {1, 3}, {3, 2}, {2, 1}, {3, 4}};
  c.expect(concepts.pairs == concept_pairs,
           "concept pairs " + pairs_text(concepts.pairs) + " expected " + pairs_text(concept_pairs));

  const LevelData regions = build_region_level(s.scene);
  c.expect(regions.token_count() == 2, "region level has " + std::to_string(regions.token_count()) + " rows");
  c.expect(regions.features.rows() == 2 && regions.features(0, 0) == s.scene.objects[0].region[0] &&
               regions.features(1, 0) == s.scene.objects[1].region[0],
           "region rows are not [girl, dog]");
  const GraphPairs region_pairs = {{0, 1}, {1, 0}};
  c.expect(regions.pairs == region_pairs, "region pairs " + pairs_text(regions.pairs));
  return c.outcome("4x4 matrix, concept labels and pairs, region rows and pairs match");
}

// ------------------------------------------------------------ masks

Tensor textbook_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t n = q.rows(), d = q.cols();
  Tensor out(Shape{n, v.cols()});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(n);
    double mx = -INFINITY, z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < d; ++c) s[j] += q(i, c) * k(j, c);
      s[j] /= std::sqrt(double(d));
      mx = std::max(mx, s[j]);
    }
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += s[j] / z * v(j, c);
  }
  return out;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, const LeadGraph& g) {
  ad::Tape tape;
  return ga_attention(tape.constant(q), tape.constant(k), tape.constant(v), g, 1e-12).to_tensor();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool block_is(const LeadGraph& g, std::size_t r0, std::size_t rows, std::size_t c0, std::size_t cols,
              const std::function<bool(std::size_t, std::size_t)>& want) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (g(r0 + r, c0 + c) != want(r, c)) return false;
  return true;
}

Outcome masks() {
  Checks c;
  const std::size_t n = 7, d = 4;
  const Tensor q = test::random_tensor({n, d}, 11), k = test::random_tensor({n, d}, 12),
               v = test::random_tensor({n, d}, 13);

  const double full = max_abs_diff(attend(q, k, v, LeadGraph::ones(n)), textbook_attention(q, k, v));
  c.expect(full <= 1e-12, "full mask differs from textbook attention by " + fmt(full));

  std::mt19937_64 rng(5);
  LeadGraph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.set(i, j, rng() % 3 != 0);
  for (std::size_t j = 0; j < n; ++j) g.set(2, j, false);
  g.set(4, 4, true);

  // Perturbing a value row only moves the rows that may attend to it.
  const Tensor base = attend(q, k, v, g);
  for (std::size_t j = 0; j < n; ++j) {
    Tensor v2 = v;
    for (std::size_t col = 0; col < d; ++col) v2(j, col) += 3.0;
    const Tensor moved = attend(q, k, v2, g);
    for (std::size_t i = 0; i < n; ++i) {
      bool same = true;
      for (std::size_t col = 0; col < d; ++col) same = same && moved(i, col) == base(i, col);
      if (!g(i, j)) c.expect(same, "row " + std::to_string(i) + " moved with masked value " + std::to_string(j));
      else if (i != 2) c.expect(!same, "row " + std::to_string(i) + " ignored open value " + std::to_string(j));
    }
  }

  // Attending to all-ones values returns each row's renormalised weight sum.
  const Tensor sums = attend(q, k, Tensor(Shape{n, d}, 1.0), g);
  for (std::size_t i = 0; i < n; ++i) {
    const double want = g.count() && i != 2 ? 1.0 : 0.0;
    c.expect(std::abs(sums(i, 0) - want) <= 1e-12, "row " + std::to_string(i) + " sums to " + fmt(sums(i, 0), 17));
  }

  const LeadGraph gi = pairs_to_matrix({{0, 1}, {1, 2}}, 3);
  const LeadGraph gq = pairs_to_matrix({{0, 1}, {1, 0}}, 2);
  const auto layers = layer_masks(gi, gq);
  const std::size_t ni = 3, nq = 2;
  auto zero = [](std::size_t, std::size_t) { return false; };
  auto one = [](std::size_t, std::size_t) { return true; };
  c.expect(block_is(layers[0], 0, ni, 0, ni + nq, zero) && block_is(layers[0], ni, nq, 0, ni, zero) &&
               block_is(layers[0], ni, nq, ni, nq, one),
           "layer 1 blocks");
  c.expect(block_is(layers[1], 0, ni, 0, ni, zero) && block_is(layers[1], 0, ni, ni, nq, one) &&
               block_is(layers[1], ni, nq, 0, ni, one) && block_is(layers[1], ni, nq, ni, nq, zero),
           "layer 2 blocks");
  c.expect(block_is(layers[2], 0, ni, 0, ni, [&](auto r, auto col) { return gi(r, col); }) &&
               block_is(layers[2], 0, ni, ni, nq, one) && block_is(layers[2], ni, nq, 0, ni, one) &&
               block_is(layers[2], ni, nq, ni, nq, [&](auto r, auto col) { return gq(r, col); }),
           "layer 3 blocks");
  c.expect(&mask_for_layer(layers, 5) == &layers[2], "layers past the third reuse the third mask");
  return c.outcome("full-mask error " + fmt(full) + ", perturbation, row sums and block structure hold");
}

// ------------------------------------------------------------ gradients

Outcome gradients(const fs::path& fixtures, const fs::path& configs) {
  const Clock::time_point t0 = Clock::now();
  const RunConfig rc = run_config_from(KeyValueConfig::load((configs / "toy.cfg").string()));
  auto s = test::single_sample(fixtures / "gradient_sample.json", rc.model);
  Model m(s.config);
  rescale_embedding_blocks(m, 50.0);
  const GradcheckReport r = gradcheck(m, s.example, 1e-5, 1e-5, 6, rc.train.seed);
  const double secs = seconds_since(t0);

  Checks c;
  c.expect(r.blocks.size() == m.params().size(), "not every block was checked");
  std::size_t failed = 0;
  for (const auto& b : r.blocks) {
    if (b.passed) continue;
    ++failed;
    c.expect(false, b.block + " rel " + fmt(b.max_rel_error) + " (ad " + fmt(b.worst_analytic, 6) + ", fd " +
                        fmt(b.worst_numeric, 6) + ")");
  }
  c.expect(secs < 120.0, "took " + fmt(secs) + " s");
  return c.outcome(std::to_string(r.blocks.size()) + " blocks within 1e-5 relative error in " + fmt(secs) +
                   " s");
}

// ------------------------------------------------------------ loss

Outcome loss_decomposition() {
  Checks c;
  const std::size_t classes = 7;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    ad::Tape tape;
    LogitsBundle lb;
    double sum = 0.0;
    const std::size_t answer = rng() % classes;
    auto make = [&] {
      Tensor t(Shape{classes});
      for (double& x : t.storage()) x = normal(rng);
      double mx = -INFINITY, z = 0.0;
      for (double x : t.storage()) mx = std::max(mx, x);
      for (double x : t.storage()) z += std::exp(x - mx);
      sum += mx + std::log(z) - t[answer];
      return tape.constant(t);
    };
    for (auto& st : lb.stream) st = make();
    lb.fused = make();
    worst = std::max(worst, std::abs(loss(lb, answer).item() - sum));
  }
  c.expect(worst <= 1e-12, "random logits differ by " + fmt(worst));

  ad::Tape tape;
  LogitsBundle uniform;
  for (auto& st : uniform.stream) st = tape.constant(Tensor(Shape{classes}, 0.25));
  uniform.fused = tape.constant(Tensor(Shape{classes}, 0.25));
  const double u = std::abs(loss(uniform, 2).item() - 4.0 * std::log(double(classes)));
  c.expect(u <= 1e-9, "uniform logits differ from 4 ln C by " + fmt(u));
  return c.outcome("max error " + fmt(worst) + " on random logits, " + fmt(u) + " on uniform");
}

// ------------------------------------------------------------ convergence

struct ToyRun {
  ToyWorldSpec spec;
  DatasetManifest manifest;
  RunConfig config;
};

ToyRun toy_corpus(const fs::path& configs, const fs::path& dir, const std::vector<QuestionTemplate>& templates) {
  ToyWorldSpec spec = load_toy_world_spec((configs / "toy_world.spec").string());
  if (!templates.empty()) spec.templates = templates;
  fs::remove_all(dir);
  gen_data(spec, 500, 7, dir);
  return {spec, load_manifest(dir), run_config_from(KeyValueConfig::load((configs / "toy.cfg").string()))};
}

Outcome convergence(const ToyRun& run) {
  Checks c;
  const ToyWorldSpec& spec = run.spec;
  const RunConfig& rc = run.config;
  c.expect(spec.categories.size() == 4 && spec.colors.size() == 4 && spec.relations.size() == 2,
           "toy world is not 4 categories / 4 colors / 2 relations");
  c.expect(run.manifest.samples.size() == 500 && run.manifest.eval_samples.size() == 100, "corpus size");
  c.expect(rc.model.encoder.d_model == 32 && rc.model.encoder.num_layers == 3 &&
               rc.model.encoder.num_heads == 8 && rc.adam.lr == 1e-4 && rc.train.batch_size == 16 &&
               rc.train.epochs <= 100,
           "run config differs from d_model 32 / 3 layers / 8 heads / lr 1e-4 / batch 16");

  const Clock::time_point t0 = Clock::now();
  TrainRequest req;
  req.config = rc;
  const TrainOutcome o = run_training(run.manifest, req);
  const double secs = seconds_since(t0);
  const double train_acc = o.train_accuracy.accuracy.averaged;
  const double eval_acc = o.eval_accuracy ? o.eval_accuracy->accuracy.averaged : 0.0;
  const std::string numbers = "train " + fmt(train_acc) + ", eval " + fmt(eval_acc) + " after " +
                              std::to_string(o.history.size()) + " epochs in " + fmt(secs) + " s";
  c.expect(train_acc >= 0.95, "train accuracy " + fmt(train_acc) + " < 0.95");
  c.expect(eval_acc >= 0.85, "eval accuracy " + fmt(eval_acc) + " < 0.85");
  c.expect(secs < 900.0, "took " + fmt(secs) + " s");
  Outcome out = c.outcome(numbers);
  if (!out.passed) out.detail = numbers + ": " + out.detail;
  return out;
}

// ------------------------------------------------------------ ablation

Outcome ablation(const ToyRun& toy, const ToyRun& relation, std::size_t epochs) {
  RunConfig base = toy.config;
  if (epochs > 0) base.train.epochs = epochs;
  const auto rows = run_ablation(toy.manifest, &relation.manifest, base, &std::cerr);
  std::cout << ablation_table(rows);
  return {true, "reported " + std::to_string(rows.size()) + " rows at " + std::to_string(base.train.epochs) +
                    " epochs (non-gating)"};
}

// ------------------------------------------------------------ determinism

Outcome determinism(const fs::path& configs, const fs::path& work) {
  Checks c;
  RunConfig rc = run_config_from(KeyValueConfig::load((configs / "toy.cfg").string()));
  rc.train.epochs = 3;
  const fs::path cfg = work / "determinism.cfg";
  std::ofstream(cfg) << to_text(rc);

  std::string metrics[2], ckpt[2], manifest[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = work / ("determinism_" + std::to_string(i));
    fs::remove_all(dir);
    std::ostringstream out, err;
    int status = run_cli({"gen-data", "--spec", (configs / "toy_world.spec").string(), "--n", "64", "--seed", "7",
                          "--out", (dir / "data").string()},
                         out, err);
    c.expect(status == 0, "gen-data failed: " + err.str());
    status = run_cli({"train", "--data", (dir / "data").string(), "--config", cfg.string(), "--out",
                      (dir / "model.ckpt").string(), "--metrics", (dir / "metrics.jsonl").string()},
                     out, err);
    c.expect(status == 0, "train failed: " + err.str());
    metrics[i] = slurp(dir / "metrics.jsonl");
    ckpt[i] = slurp(dir / "model.ckpt");
    manifest[i] = slurp(dir / "data" / "manifest.json");
  }
  c.expect(!metrics[0].empty() && metrics[0] == metrics[1], "metric logs differ");
  c.expect(!ckpt[0].empty() && ckpt[0] == ckpt[1], "checkpoints differ");
  c.expect(manifest[0] == manifest[1], "manifests differ");
  return c.outcome("metric logs (" + std::to_string(metrics[0].size()) + " B) and checkpoints (" +
                   std::to_string(ckpt[0].size()) + " B) byte-identical");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria harness", "mga_acceptance"};
  std::string fixtures = MGA_FIXTURE_DIR, configs = MGA_CONFIG_DIR;
  std::string work = (fs::temp_directory_path() / "mga_acceptance").string();
  std::size_t ablation_epochs = 0;
  bool skip_training = false;
  app.add_option("--fixtures", fixtures, "Fixture directory");
  app.add_option("--configs", configs, "Directory holding toy.cfg and toy_world.spec");
  app.add_option("--work", work, "Scratch directory for generated corpora");
  app.add_option("--ablation-epochs", ablation_epochs, "Override the ablation epoch count (0 = config)");
  app.add_flag("--skip-training", skip_training, "Skip the convergence and ablation runs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  bool all = true;
  auto report = [&](const std::string& name, bool gating, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (gating && !o.passed) all = false;
    std::cout << (o.passed ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  };

  report("golden-example", true, [&] {
    const Clock::time_point t0 = Clock::now();
    Outcome o = golden(fixtures);
    if (seconds_since(t0) >= 1.0) o = {false, o.detail + "; took over 1 s"};
    return o;
  });
  report("mask-correctness", true, [&] {
    const Clock::time_point t0 = Clock::now();
    Outcome o = masks();
    if (seconds_since(t0) >= 10.0) o = {false, o.detail + "; took over 10 s"};
    return o;
  });
  report("gradient", true, [&] { return gradients(fixtures, configs); });
  report("loss-decomposition", true, [&] { return loss_decomposition(); });
  if (skip_training) {
    std::cout << "FAIL toy-convergence: skipped\nFAIL ablation-echo: skipped\n";
    all = false;
  } else {
    const ToyRun toy = toy_corpus(configs, fs::path(work) / "toy", {});
    report("toy-convergence", true, [&] { return convergence(toy); });
    report("ablation-echo", false, [&] {
      const ToyRun relation = toy_corpus(configs, fs::path(work) / "relation", {QuestionTemplate::relation});
      return ablation(toy, relation, ablation_epochs);
    });
  }
  report("determinism", true, [&] { return determinism(configs, work); });
  return all ? 0 : 1;
}
