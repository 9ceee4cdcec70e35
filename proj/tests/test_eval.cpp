#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"

using namespace hetprompt;

namespace {

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n, int k) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

std::vector<int> permute_labels(const std::vector<int>& v, std::mt19937_64& rng) {
  int k = *std::max_element(v.begin(), v.end()) + 1;
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> out;
  for (int x : v) out.push_back(perm[x]);
  return out;
}

}  // namespace

TEST(Nmi, Examples) {
  EXPECT_DOUBLE_EQ(nmi({0, 0, 1, 1, 2}, {0, 0, 1, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(nmi({0, 0, 0, 0}, {0, 1, 0, 1}), 0.0);
  EXPECT_NEAR(nmi({0, 0, 1, 1}, {0, 1, 0, 1}), 0.0, 1e-15);
  EXPECT_THROW(nmi({0, 1}, {0}), Error);
}

TEST(Ari, Examples) {
  EXPECT_DOUBLE_EQ(ari({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(ari({0, 0, 1, 1}, {1, 1, 0, 0}), 1.0);
  // Pair counts: 0 agreeing pairs, 2 in each partition, 6 total.
  // (0 - 2*2/6) / ((2+2)/2 - 2*2/6) = -1/2.
  EXPECT_NEAR(ari({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5, 1e-15);
  EXPECT_THROW(ari({0, 1}, {0}), Error);
}

TEST(F1, Examples) {
  auto perfect = f1_scores({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  EXPECT_DOUBLE_EQ(perfect.macro, 1.0);
  EXPECT_DOUBLE_EQ(perfect.micro, 1.0);
  auto s = f1_scores({0, 0, 1}, {0, 1, 1}, 2);
  EXPECT_NEAR(s.macro, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.micro, 2.0 / 3.0, 1e-15);
  auto one_class = f1_scores({0, 0, 0, 0, 0, 0}, {0, 0, 1, 1, 2, 2}, 3);
  EXPECT_NEAR(one_class.micro, 1.0 / 3.0, 1e-15);
}

TEST(F1, AbsentClassCountsAsZero) {
  set_warnings_enabled(false);
  auto s = f1_scores({0, 1}, {0, 1}, 3);
  set_warnings_enabled(true);
  EXPECT_NEAR(s.macro, 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.micro, 1.0);
}

TEST(Metrics, MatchCountingOracles) {
  std::mt19937_64 rng(123);
  std::uniform_int_distribution<std::size_t> n_dist(2, 60);
  std::uniform_int_distribution<int> k_dist(1, 6);
  set_warnings_enabled(false);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = n_dist(rng);
    int ka = k_dist(rng), kb = k_dist(rng);
    auto a = random_labels(rng, n, ka), b = random_labels(rng, n, kb);
    ASSERT_NEAR(nmi(a, b), oracle::nmi(a, b), 1e-10);
    ASSERT_NEAR(ari(a, b), oracle::ari(a, b), 1e-10);
    int k = std::max(ka, kb);
    auto f = f1_scores(a, b, static_cast<std::size_t>(k));
    auto want = oracle::f1(a, b, k);
    ASSERT_NEAR(f.macro, want.first, 1e-10);
    ASSERT_NEAR(f.micro, want.second, 1e-10);
  }
  set_warnings_enabled(true);
}

TEST(Metrics, ClusteringScoresIgnoreLabelNames) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_labels(rng, 40, 4), b = random_labels(rng, 40, 3);
    auto pa = permute_labels(a, rng), pb = permute_labels(b, rng);
    EXPECT_NEAR(nmi(pa, pb), nmi(a, b), 1e-12);
    EXPECT_NEAR(ari(pa, pb), ari(a, b), 1e-12);
  }
}

TEST(Metrics, F1InvariantUnderJointRelabeling) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_labels(rng, 40, 3), b = random_labels(rng, 40, 3);
    std::vector<int> perm = {0, 1, 2};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> pa, pb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      pa.push_back(perm[a[i]]);
      pb.push_back(perm[b[i]]);
    }
    auto x = f1_scores(a, b, 3), y = f1_scores(pa, pb, 3);
    EXPECT_NEAR(x.macro, y.macro, 1e-12);
    EXPECT_EQ(x.micro, y.micro);
  }
}

TEST(KMeans, RecoversSeparatedClouds) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.1);
  Matrix x(40, 2);
  std::vector<int> truth;
  for (std::size_t i = 0; i < 40; ++i) {
    int c = i < 20 ? 0 : 1;
    x(i, 0) = c * 10.0 + noise(rng);
    x(i, 1) = -c * 5.0 + noise(rng);
    truth.push_back(c);
  }
  auto r = kmeans(x, 2, 0);
  EXPECT_DOUBLE_EQ(ari(r.assignments, truth), 1.0);
}

TEST(KMeans, EveryPointItsOwnCluster) {
  std::mt19937_64 rng(10);
  Matrix x = oracle::random_matrix(6, 3, rng);
  auto r = kmeans(x, 6, 1);
  EXPECT_EQ(r.inertia, 0.0);
  std::set<int> distinct(r.assignments.begin(), r.assignments.end());
  EXPECT_EQ(distinct.size(), 6u);
}

TEST(KMeans, DuplicateRowsKeepInertiaNonnegative) {
  Matrix x = Matrix::from_rows({{1, 1}, {1, 1}, {1, 1}, {2, 2}, {2, 2}});
  auto r = kmeans(x, 3, 2);
  EXPECT_GE(r.inertia, 0.0);
  EXPECT_EQ(r.inertia, 0.0);
}

TEST(KMeans, InertiaNeverIncreases) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x = oracle::random_matrix(60, 4, rng);
    auto r = kmeans(x, 5, trial, 3);
    ASSERT_FALSE(r.inertia_history.empty());
    for (std::size_t k = 1; k < r.inertia_history.size(); ++k)
      EXPECT_LE(r.inertia_history[k], r.inertia_history[k - 1] + 1e-12);
  }
}

TEST(KMeans, TooManyClustersThrows) {
  EXPECT_THROW(kmeans(Matrix(3, 2), 4, 0), Error);
}

TEST(KMeans, DeterministicPerSeed) {
  std::mt19937_64 rng(12);
  Matrix x = oracle::random_matrix(50, 3, rng);
  EXPECT_EQ(kmeans(x, 4, 7).assignments, kmeans(x, 4, 7).assignments);
}

TEST(KShot, OneShotThreeClasses) {
  std::vector<int> y = {0, 1, 2, 0, 1, 2, 0, 1, 2, -1};
  auto s = sample_kshot(y, 3, 1, 4);
  EXPECT_EQ(s.train.size(), 3u);
  EXPECT_EQ(s.test.size(), 6u);
  std::set<std::size_t> train(s.train.begin(), s.train.end());
  for (std::size_t t : s.test) EXPECT_EQ(train.count(t), 0u);
  auto labels = s.labels(y);
  EXPECT_NO_THROW(labels.validate(3));
}

TEST(KShot, SameSeedSameSplit) {
  std::vector<int> y(60);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  auto a = sample_kshot(y, 3, 5, 9), b = sample_kshot(y, 3, 5, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(KShot, SmallClassNamed) {
  std::vector<int> y = {0, 0, 0, 1};
  try {
    sample_kshot(y, 2, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
  }
}

TEST(KShot, SelectionFrequencyIsUniform) {
  std::vector<int> y(30);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  std::vector<int> hits(y.size(), 0);
  const int trials = 1000;
  for (int seed = 0; seed < trials; ++seed)
    for (std::size_t i : sample_kshot(y, 3, 2, static_cast<std::uint64_t>(seed)).train) ++hits[i];
  // One goodness-of-fit statistic over all nodes instead of thirty separate
  // 3-sigma checks, which would fire by chance about 8% of the time.
  const double expected = trials * 2.0 / 10.0;
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - expected) * (h - expected) / expected;
  // 27 degrees of freedom (30 nodes, per-class totals fixed); 99.9% quantile.
  EXPECT_LT(chi2, 55.48);
}

TEST(Report, JsonRoundTripIsExact) {
  MetricsReport r;
  r.task = "zero_shot_clustering";
  r.metrics = {{"nmi", 0.1 + 0.2}, {"ari", -1.0 / 3.0}};
  r.config_hash = "0123456789abcdef";
  r.dataset_hash = "fedcba9876543210";
  r.seed = 42;
  r.wall_ms = 1234.5678901234;
  nlohmann::json j = r;
  auto back = nlohmann::json::parse(j.dump()).get<MetricsReport>();
  EXPECT_EQ(back, r);
}

TEST(Report, ResultsCsvHasSeedRowsAndAggregates) {
  auto path = std::filesystem::temp_directory_path() / "hetprompt_results_test.csv";
  std::filesystem::remove(path);
  std::vector<MetricsReport> reports(3);
  for (std::size_t k = 0; k < 3; ++k) {
    reports[k].task = "t";
    reports[k].seed = k;
    reports[k].metrics["nmi"] = static_cast<double>(k);
  }
  append_results_csv(path, reports);
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0], "task,seed,config_hash,dataset_hash,nmi");
  EXPECT_EQ(lines[4], "t,mean,,,1");
  auto agg = aggregate(reports);
  EXPECT_NEAR(agg["nmi"].std, std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(ZeroShot, OneHotAssignmentsMatchingTruthScoreOne) {
  std::vector<int> y = {0, 1, 2, 2, 1, 0, 0};
  PromptState s;
  s.tokens = Tensor::variable(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  Matrix logits(7, 3, -1e4);
  for (std::size_t i = 0; i < 7; ++i) logits(i, static_cast<std::size_t>(y[i])) = 0.0;
  s.logits = Tensor::variable(logits);
  auto r = evaluate_zero_shot(s, y, 3, 0);
  EXPECT_DOUBLE_EQ(r.metrics["nmi"], 1.0);
  EXPECT_DOUBLE_EQ(r.metrics["ari"], 1.0);
}

TEST(ZeroShot, RandomFeaturesScoreNearZero) {
  std::mt19937_64 rng(3);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 3);
  double total = 0.0;
  for (int seed = 0; seed < 5; ++seed) {
    PromptState s;
    s.tokens = Tensor::variable(oracle::random_matrix(3, 4, rng));
    s.logits = Tensor::variable(oracle::random_matrix(300, 3, rng, -2, 2));
    total += evaluate_zero_shot(s, y, 3, static_cast<std::uint64_t>(seed), 3).metrics["nmi"];
  }
  RecordProperty("mean_random_nmi", std::to_string(total / 5));
  EXPECT_LT(total / 5, 0.05);
}

TEST(ZeroShot, MissingLabelsIsError) {
  PromptState s;
  s.tokens = Tensor::variable(Matrix(2, 2));
  s.logits = Tensor::variable(Matrix(3, 2));
  EXPECT_THROW(evaluate_zero_shot(s, {}, 2, 0), Error);
}
