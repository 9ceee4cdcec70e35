// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every gating criterion passes, or fails only in the
// way recorded in `known_defects` below. A recorded failure that starts to
// pass, or fails differently, is treated as unexpected and exits 1.
// Usage: acceptance [AC1 AC2 ...]   (default: all criteria)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spectral.hpp"

using namespace hetprompt;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds, pinned.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kOracleTolerance = 1e-10;
constexpr int kOracleInstances = 100;
constexpr double kOrthoTarget = 1e-3;
constexpr int kOrthoSteps = 2000;
constexpr double kOrthoLr = 0.01;
constexpr double kMetricTolerance = 1e-9;
constexpr double kZeroShotNmi = 0.80;
constexpr double kOneShotMicroF1 = 0.90;
constexpr double kSeedSeconds = 300.0;
constexpr double kParadigmGap = 0.10;
constexpr double kSpectralNmi = 0.90;
constexpr double kAcmNmi = 0.5516;
constexpr double kAcmBand = 0.10;
constexpr int kSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
  // Set when the failure matches a recorded spec defect exactly.
  bool known_defect = false;
  bool gating = true;
  bool skipped = false;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome ac1_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::set<std::string> losses;
  for (const auto& r : run_gradcheck(0)) {
    losses.insert(r.loss);
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.loss + "/" + r.parameter;
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst <= kGradTolerance && secs < kGradSeconds && losses.size() == 5;
  o.detail = std::to_string(losses.size()) + " losses, max rel err " + fmt("%.2e", worst) + " (" +
             worst_name + ") <= " + fmt("%.0e", kGradTolerance) + ", " + fmt("%.2f", secs) + " s";
  return o;
}

Outcome ac2_oracles() {
  std::mt19937_64 rng(2024);
  std::map<std::string, double> worst;
  auto track = [&](const std::string& name, double got, double want) {
    worst[name] = std::max(worst[name], std::abs(got - want));
  };
  std::uniform_int_distribution<std::size_t> small(1, 6);
  for (int trial = 0; trial < kOracleInstances; ++trial) {
    // contrastive loss on unit rows, every flag combination
    {
      std::size_t n = small(rng), d = small(rng);
      Matrix za = oracle::random_matrix(n, d, rng), zb = oracle::random_matrix(n, d, rng);
      for (Matrix* m : {&za, &zb})
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) s += (*m)(i, k) * (*m)(i, k);
          for (std::size_t k = 0; k < d; ++k) (*m)(i, k) /= std::sqrt(s);
        }
      const double t = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
      for (bool sym : {false, true})
        for (bool pos : {false, true}) {
          if (!pos && n == 1) continue;
          double got = contrastive_loss(Tensor::constant(za), Tensor::constant(zb), {t, sym, pos}).item();
          track("contrastive_loss", got,
                oracle::contrastive(oracle::to_mat(za), oracle::to_mat(zb), t, sym, pos));
        }
    }
    // template loss
    {
      std::uniform_int_distribution<std::size_t> np(1, 4), samples(1, 3);
      fixture::TemplateCase c(rng, np(rng), samples(rng));
      track("template_loss", template_loss(c.disc, c.state, c.groups, c.emb).item(), c.oracle_loss());
    }
    // few-shot label loss
    {
      std::size_t np = small(rng), n = small(rng) + 1, d = small(rng);
      Matrix tokens = oracle::random_matrix(np, d, rng), repr = oracle::random_matrix(n, d, rng);
      FewShotLabels labels;
      std::uniform_int_distribution<std::size_t> node(0, n - 1);
      std::uniform_int_distribution<int> cls(0, static_cast<int>(np) - 1);
      for (std::size_t k = 0; k < 1 + n / 2; ++k) labels.pairs.push_back({node(rng), cls(rng)});
      track("few_shot_label_loss", few_shot_label_loss(Tensor::constant(tokens), repr, labels).item(),
            oracle::label_loss(oracle::to_mat(tokens), oracle::to_mat(repr), labels.pairs));
    }
    // meta-path adjacency
    {
      auto g = oracle::random_graph(rng, 2 + small(rng), small(rng), small(rng), 0.35);
      std::vector<MetaPathSchema> schemas = {parse_metapath("PAP = P -PA-> A -AP-> P"),
                                             parse_metapath("PSP = P -PS-> S -SP-> P"),
                                             parse_metapath("PAPSP = P -PA-> A -AP-> P -PS-> S -SP-> P")};
      auto got = build_metapath_adjacency(g, schemas).to_dense();
      auto want = oracle::metapath_adjacency(g, schemas);
      for (std::size_t i = 0; i < want.size(); ++i)
        for (std::size_t j = 0; j < want.size(); ++j) track("build_metapath_adjacency", got(i, j), want[i][j]);
    }
    // metrics
    {
      std::size_t n = 2 + small(rng) * 3;
      std::uniform_int_distribution<int> ka(0, 3), kb(0, 3);
      std::vector<int> a(n), b(n);
      for (auto& v : a) v = ka(rng);
      for (auto& v : b) v = kb(rng);
      track("nmi", nmi(a, b), oracle::nmi(a, b));
      track("ari", ari(a, b), oracle::ari(a, b));
      auto f = f1_scores(a, b, 4);
      auto w = oracle::f1(a, b, 4);
      track("macro_f1", f.macro, w.first);
      track("micro_f1", f.micro, w.second);
    }
  }
  Outcome o;
  o.pass = true;
  for (const auto& [name, err] : worst) {
    o.pass = o.pass && err <= kOracleTolerance;
    o.detail += name + " " + fmt("%.1e", err) + "; ";
  }
  o.detail = std::to_string(kOracleInstances) + " instances each, max abs err: " + o.detail +
             "tolerance " + fmt("%.0e", kOracleTolerance);
  return o;
}

Outcome ac3_orthogonality() {
  std::mt19937_64 rng(0);
  PromptState s;
  s.tokens = Tensor::variable(gaussian(3, 8, 1.0, rng));
  std::vector<Parameter> ps{{"prompt/tokens", s.tokens}};
  AdamState adam;
  adam.lr = kOrthoLr;
  const double start = orthogonal_loss(s).item();
  for (int step = 0; step < kOrthoSteps; ++step) {
    backward(orthogonal_loss(s));
    adam_step(adam, ps);
  }
  const double end = orthogonal_loss(s).item();
  Outcome o;
  o.pass = end <= kOrthoTarget;
  o.detail = "L0 " + fmt("%.3f", start) + " -> " + fmt("%.2e", end) + " after " + std::to_string(kOrthoSteps) +
             " Adam steps (lr " + fmt("%g", kOrthoLr) + "), target <= " + fmt("%.0e", kOrthoTarget);
  return o;
}

Outcome ac4_metrics() {
  const std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1};
  const double n = nmi(a, b), r = ari(a, b);
  const auto f = f1_scores({0, 0, 1}, {0, 1, 1}, 2);
  const bool nmi_ok = std::abs(n - 0.0) <= kMetricTolerance;
  const bool ari_ok = std::abs(r - (-1.0 / 3.0)) <= kMetricTolerance;
  const bool f1_ok = std::abs(f.macro - 2.0 / 3.0) <= kMetricTolerance &&
                     std::abs(f.micro - 2.0 / 3.0) <= kMetricTolerance;
  Outcome o;
  o.pass = nmi_ok && ari_ok && f1_ok;
  o.detail = "nmi " + fmt("%.3g", n) + (nmi_ok ? " ok" : " WRONG") + "; ari " + fmt("%.6f", r) +
             " vs stated -1/3" + (ari_ok ? " ok" : " WRONG") + "; f1 (" + fmt("%.4f", f.macro) + ", " +
             fmt("%.4f", f.micro) + ")" + (f1_ok ? " ok" : " WRONG");
  // Recorded defect: the adjusted Rand index of these two partitions is
  // exactly -1/2 (index 0, expected 1, max 2), not -1/3.
  if (!o.pass && nmi_ok && f1_ok && std::abs(r - (-0.5)) <= kMetricTolerance) {
    o.known_defect = true;
    o.detail += " [known defect: the stated -1/3 contradicts the pair-counting definition, which gives -1/2]";
  }
  return o;
}

struct SeedRun {
  Checkpoint encoder;
  Checkpoint prompt;
  MetricsReport zero_shot;
  MetricsReport one_shot;
  double baseline_micro_f1 = 0.0;
  double seconds = 0.0;
};

/// Nearest class mean on raw target features, fit on the split's training nodes.
double nearest_mean_micro_f1(const HeteroGraph& g, const KShotSplit& split) {
  const Matrix& x = g.features.at(g.target_type);
  const auto& y = *g.labels;
  Matrix means(g.num_classes, x.cols());
  std::vector<double> count(g.num_classes, 0.0);
  for (std::size_t i : split.train) {
    for (std::size_t k = 0; k < x.cols(); ++k) means(static_cast<std::size_t>(y[i]), k) += x(i, k);
    count[static_cast<std::size_t>(y[i])] += 1.0;
  }
  for (std::size_t c = 0; c < g.num_classes; ++c)
    for (std::size_t k = 0; k < x.cols(); ++k) means(c, k) /= count[c];
  std::vector<int> pred, truth;
  for (std::size_t i : split.test) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < g.num_classes; ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) d += (x(i, k) - means(c, k)) * (x(i, k) - means(c, k));
      if (d < best_d) best_d = d, best = c;
    }
    pred.push_back(static_cast<int>(best));
    truth.push_back(y[i]);
  }
  return f1_scores(pred, truth, g.num_classes).micro;
}

/// Full pipeline for one seed: pre-training, zero-shot prompting and
/// clustering, 1-shot prompting and classification.
SeedRun run_seed(const Dataset& ds, RunConfig cfg, std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  cfg.seed = seed;
  const auto& g = ds.graph;
  const auto& y = *g.labels;
  SeedRun r;
  auto eg = prepare_encoder_graph(g, ds.metapaths);
  auto pre = pretrain(eg, cfg, seed);
  r.encoder = snapshot(pre.params.parameters());
  auto enc = freeze_encoding(eg, pre.params, cfg);
  auto zero = prompt_tune(g, ds.metapaths, enc, cfg, g.num_classes, std::nullopt, seed);
  r.prompt = snapshot(zero.state.parameters());
  r.zero_shot = evaluate_zero_shot(zero.state, y, g.num_classes, seed, cfg.kmeans_restarts);
  auto split = sample_kshot(y, g.num_classes, 1, seed);
  r.one_shot = evaluate_kshot(ds, enc, cfg, split, seed);
  r.baseline_micro_f1 = nearest_mean_micro_f1(g, split);
  r.zero_shot.wall_ms = r.one_shot.wall_ms = 0.0;
  r.seconds = seconds_since(t0);
  std::printf("    seed %llu: zero-shot nmi %.4f ari %.4f | 1-shot micro-f1 %.4f macro-f1 %.4f | "
              "nearest-mean micro-f1 %.4f | %.1f s\n",
              static_cast<unsigned long long>(seed), r.zero_shot.metrics.at("nmi"),
              r.zero_shot.metrics.at("ari"), r.one_shot.metrics.at("micro_f1"),
              r.one_shot.metrics.at("macro_f1"), r.baseline_micro_f1, r.seconds);
  std::fflush(stdout);
  return r;
}

RunConfig synthetic_config() {
  return load_config(fs::path(HETPROMPT_SOURCE_DIR) / "configs" / "synthetic.json");
}

Outcome ac8_acm() {
  Outcome o;
  o.gating = false;
  const char* dir = std::getenv("HETPROMPT_ACM_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "schema.json")) {
    o.skipped = true;
    o.detail = "no ACM dump (set HETPROMPT_ACM_DIR to a dataset directory)";
    return o;
  }
  auto ds = load_dataset(dir);
  RunConfig cfg;
  if (const char* c = std::getenv("HETPROMPT_ACM_CONFIG")) cfg = load_config(c);
  auto eg = prepare_encoder_graph(ds.graph, ds.metapaths);
  auto enc = freeze_encoding(eg, pretrain(eg, cfg, cfg.seed).params, cfg);
  auto tuned = prompt_tune(ds.graph, ds.metapaths, enc, cfg, ds.graph.num_classes, std::nullopt, cfg.seed);
  double score = evaluate_zero_shot(tuned.state, *ds.graph.labels, ds.graph.num_classes, cfg.seed,
                                    cfg.kmeans_restarts)
                     .metrics.at("nmi");
  o.pass = std::abs(score - kAcmNmi) <= kAcmBand;
  o.detail = "zero-shot nmi " + fmt("%.4f", score) + " vs reference " + fmt("%.4f", kAcmNmi) + " +/- " +
             fmt("%.2f", kAcmBand) + ", config hash " + config_hash(cfg);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  set_warnings_enabled(false);
  std::set<std::string> wanted(argv + 1, argv + argc);
  auto selected = [&](const std::string& id) { return wanted.empty() || wanted.count(id) > 0; };
  bool unexpected = false;
  auto report = [&](const std::string& id, const std::string& title, const Outcome& o) {
    const char* verdict = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
    std::printf("%s %s %s: %s%s\n", id.c_str(), verdict, title.c_str(), o.detail.c_str(),
                o.gating ? "" : " (not gating)");
    std::fflush(stdout);
    if (o.gating && !o.skipped && !o.pass && !o.known_defect) unexpected = true;
  };

  if (selected("AC1")) report("AC1", "gradient suite", ac1_gradients());
  if (selected("AC2")) report("AC2", "oracle equivalence", ac2_oracles());
  if (selected("AC3")) report("AC3", "orthogonality", ac3_orthogonality());
  if (selected("AC4")) report("AC4", "metric hand-checks", ac4_metrics());

  if (selected("AC5") || selected("AC6") || selected("AC7")) {
    const Dataset ds = generate_dataset(SynthSpec{});
    const RunConfig cfg = synthetic_config();
    const double spectral = nmi(oracle::spectral_clusters(ds), *ds.graph.labels);
    std::printf("    default synthetic spec: %zu targets, spectral oracle nmi %.4f (needs >= %.2f); "
                "run config hash %s\n",
                ds.graph.num_targets(), spectral, kSpectralNmi, config_hash(cfg).c_str());
    std::vector<SeedRun> runs;
    for (int s = 0; s < kSeeds; ++s) runs.push_back(run_seed(ds, cfg, static_cast<std::uint64_t>(s)));
    double zs = 0, fs1 = 0, base = 0, slowest = 0;
    for (const auto& r : runs) {
      zs += r.zero_shot.metrics.at("nmi") / kSeeds;
      fs1 += r.one_shot.metrics.at("micro_f1") / kSeeds;
      base += r.baseline_micro_f1 / kSeeds;
      slowest = std::max(slowest, r.seconds);
    }
    if (selected("AC5")) {
      Outcome o;
      o.pass = spectral >= kSpectralNmi && zs >= kZeroShotNmi && fs1 >= kOneShotMicroF1 && slowest < kSeedSeconds;
      o.detail = "mean over " + std::to_string(kSeeds) + " seeds: zero-shot nmi " + fmt("%.4f", zs) +
                 " (>= " + fmt("%.2f", kZeroShotNmi) + "), 1-shot micro-f1 " + fmt("%.4f", fs1) + " (>= " +
                 fmt("%.2f", kOneShotMicroF1) + "), slowest seed " + fmt("%.1f", slowest) + " s (< " +
                 fmt("%.0f", kSeedSeconds) + ")";
      report("AC5", "end-to-end synthetic", o);
    }
    if (selected("AC6")) {
      Outcome o;
      o.pass = fs1 - base >= kParadigmGap;
      o.detail = "1-shot micro-f1 " + fmt("%.4f", fs1) + " vs nearest-mean on raw features " + fmt("%.4f", base) +
                 ", gap " + fmt("%+.4f", fs1 - base) + " (>= " + fmt("%.2f", kParadigmGap) + ")";
      report("AC6", "paradigm gap", o);
    }
    if (selected("AC7")) {
      SeedRun again = run_seed(ds, cfg, 0);
      const auto& first = runs.front();
      const bool enc_same = to_json(again.encoder).dump() == to_json(first.encoder).dump();
      const bool prompt_same = to_json(again.prompt).dump() == to_json(first.prompt).dump();
      const bool reports_same = nlohmann::json(again.zero_shot).dump() == nlohmann::json(first.zero_shot).dump() &&
                                nlohmann::json(again.one_shot).dump() == nlohmann::json(first.one_shot).dump();
      Outcome o;
      o.pass = enc_same && prompt_same && reports_same;
      o.detail = std::string("seed 0 rerun: encoder checkpoint ") + (enc_same ? "identical" : "DIFFERS") +
                 ", prompt checkpoint " + (prompt_same ? "identical" : "DIFFERS") + ", metric reports " +
                 (reports_same ? "identical" : "DIFFER");
      report("AC7", "determinism", o);
    }
  }
  if (selected("AC8")) report("AC8", "ACM zero-shot (stretch)", ac8_acm());

  std::printf("acceptance: %s\n", unexpected ? "unexpected failures" : "no unexpected failures");
  return unexpected ? 1 : 0;
}
