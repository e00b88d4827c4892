#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "qafuse/error.hpp"
#include "qafuse/fusion.hpp"
#include "qafuse/sqaf.hpp"
#include "qafuse/synth.hpp"
#include "support.hpp"

using namespace qafuse;
using qafuse::test::Gen;

namespace {

using Vec = std::vector<double>;

CurveStack random_stack(Gen& gen, std::size_t k, std::size_t m) {
  std::vector<SortedCurve> curves;
  for (std::size_t i = 0; i < k; ++i) curves.push_back(sort_descending(gen.reals(m + 10)));
  return CurveStack::from_curves(curves, m);
}

TrainingSample random_sample(Gen& gen, std::size_t k, std::size_t m, std::size_t gallery,
                             std::size_t positives) {
  TrainingSample s;
  std::vector<SortedCurve> curves;
  for (std::size_t i = 0; i < k; ++i) {
    s.scores.push_back(gen.reals(gallery));
    curves.push_back(sort_descending(s.scores.back()));
  }
  s.stack = CurveStack::from_curves(curves, m);
  std::vector<std::size_t> rel(positives);
  std::iota(rel.begin(), rel.end(), std::size_t{0});
  s.partition = MatchPartition::from_relevant(gallery, rel);
  return s;
}

// Straightforward forward pass written from the layer description.
Vec oracle_forward(const SqafModel& model, const CurveStack& x) {
  const auto& a = model.architecture();
  const auto p = model.parameters();
  std::map<std::string, const double*> t;
  for (const auto& tensor : model.tensors()) t[tensor.name] = p.data() + tensor.offset;
  const long K = static_cast<long>(a.features), L = static_cast<long>(a.length);
  const long C1 = static_cast<long>(a.conv1_channels), C2 = static_cast<long>(a.conv2_channels);
  const long k = static_cast<long>(a.kernel), pad = k / 2, L2 = L - k + 1;

  std::vector<Vec> h1(C1, Vec(L, 0.0));
  for (long c = 0; c < C1; ++c) {
    for (long i = 0; i < L; ++i) {
      double s = t["conv1.bias"][c];
      for (long f = 0; f < K; ++f) {
        for (long j = 0; j < k; ++j) {
          const long src = i + j - pad;
          if (src < 0 || src >= L) continue;
          s += t["conv1.weight"][(c * K + f) * k + j] * x.data[f * L + src];
        }
      }
      h1[c][i] = std::max(0.0, s);
    }
  }
  Vec pooled(C2, 0.0);
  for (long c = 0; c < C2; ++c) {
    for (long i = 0; i < L2; ++i) {
      double s = t["conv2.bias"][c];
      for (long f = 0; f < C1; ++f) {
        for (long j = 0; j < k; ++j) s += t["conv2.weight"][(c * C1 + f) * k + j] * h1[f][i + j];
      }
      pooled[c] += std::max(0.0, s) / static_cast<double>(L2);
    }
  }
  Vec z(K);
  for (long o = 0; o < K; ++o) {
    z[o] = t["dense.bias"][o];
    for (long c = 0; c < C2; ++c) z[o] += t["dense.weight"][o * C2 + c] * pooled[c];
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (auto& v : z) sum += (v = std::exp(v - mx));
  for (auto& v : z) v /= sum;
  return z;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

}  // namespace

TEST(Architecture, DefaultsAndValidation) {
  Architecture a;
  EXPECT_EQ(a.features, 4u);
  EXPECT_EQ(a.length, 100u);
  EXPECT_EQ(a.parameter_count(), 16u * 4 * 5 + 16 + 16 * 16 * 5 + 16 + 4 * 16 + 4);
  a.kernel = 4;
  EXPECT_THROW(a.validate(), ConfigError);
  a.kernel = 5;
  a.length = 3;
  EXPECT_THROW(a.validate(), ConfigError);
}

TEST(TrainConfig, DefaultsAndValidation) {
  TrainConfig c;
  EXPECT_EQ(c.margin, 1.0);
  EXPECT_EQ(c.alpha, 2.0);
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.epochs, 50u);
  c.alpha = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.alpha = 2;
  c.margin = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Forward, MatchesNaiveOracle) {
  Gen gen(71);
  Architecture a;
  a.features = 3;
  a.length = 30;
  a.conv1_channels = 5;
  a.conv2_channels = 4;
  for (int trial = 0; trial < 10; ++trial) {
    const auto model = SqafModel::initialize(a, 100 + trial);
    const auto x = random_stack(gen, 3, 30);
    const auto w = model.forward(x);
    const auto expect = oracle_forward(model, x);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w[i], expect[i], 1e-12);
  }
}

TEST(Forward, AlwaysAProbabilityVector) {
  Gen gen(72);
  Architecture a;
  for (int trial = 0; trial < 50; ++trial) {
    const auto model = SqafModel::initialize(a, trial);
    auto x = random_stack(gen, 4, 100);
    for (auto& v : x.data) v *= gen.real(0.1, 50.0);
    const auto w = model.forward(x);
    double sum = 0;
    for (double v : w.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Forward, DeterministicAndNotPermutationEquivariant) {
  Gen gen(73);
  const auto model = SqafModel::initialize(Architecture{}, 5);
  const auto x = random_stack(gen, 4, 100);
  const auto a = model.forward(x), b = SqafModel::initialize(Architecture{}, 5).forward(x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i], b[i]);

  CurveStack swapped = x;
  std::copy(x.row(1).begin(), x.row(1).end(), swapped.data.begin());
  std::copy(x.row(0).begin(), x.row(0).end(), swapped.data.begin() + 100);
  const auto c = model.forward(swapped);
  EXPECT_FALSE(std::abs(c[0] - a[1]) < 1e-12 && std::abs(c[1] - a[0]) < 1e-12);
}

TEST(Forward, RejectsWrongShape) {
  Gen gen(74);
  const auto model = SqafModel::initialize(Architecture{}, 1);
  EXPECT_THROW(model.forward(random_stack(gen, 3, 100)), DataError);
  EXPECT_THROW(model.forward(random_stack(gen, 4, 90)), DataError);
}

TEST(MarginLoss, Examples) {
  // Positives mean 5, negatives mean 0.
  MatchPartition p{{0, 1}, {2, 3}};
  EXPECT_EQ(margin_loss(Vec{5, 5, 0, 0}, p, 1.0, 2.0), 0.0);

  MatchPartition single{{0}, {1}};
  EXPECT_NEAR(margin_loss(Vec{0.2, 0.5}, single, 1.0, 2.0), 1.3, 1e-15);

  MatchPartition two{{0, 1}, {2, 3, 4, 5, 6}};
  const Vec fused{0.7, 0.5, 0.9, 0.8, 0.1, 0.1, 0.0};
  EXPECT_NEAR(margin_loss(fused, two, 1.0, 2.0), 0.875, 1e-15);
  EXPECT_EQ(hard_negatives(fused, two, 2.0), (std::vector<std::size_t>{2, 3, 4, 5}));

  EXPECT_THROW(margin_loss(Vec{0.1, 0.2}, MatchPartition{{}, {0, 1}}, 1.0, 2.0), DataError);
}

TEST(MarginLoss, HardNegativeCountRoundsUpAndTiesPreferLowIndex) {
  MatchPartition p{{0}, {1, 2, 3, 4}};
  const Vec fused{0.9, 0.5, 0.5, 0.5, 0.1};
  EXPECT_EQ(hard_negatives(fused, p, 1.5), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(hard_negatives(fused, p, 10.0).size(), 4u);
}

TEST(MarginLoss, NonNegativeAndZeroExactlyWhenSatisfied) {
  Gen gen(75);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 4 + gen.index(20);
    const auto fused = gen.reals(n, -2, 2);
    const std::size_t npos = 1 + gen.index(n - 2);
    MatchPartition p;
    for (std::size_t i = 0; i < n; ++i) (i < npos ? p.positives : p.negatives).push_back(i);
    const double d = gen.real(0, 1), alpha = gen.real(0.5, 3);
    const double loss = margin_loss(fused, p, d, alpha);
    EXPECT_GE(loss, 0.0);

    // Oracle from a full sort of the negatives.
    std::vector<double> neg;
    for (auto i : p.negatives) neg.push_back(fused[i]);
    std::sort(neg.rbegin(), neg.rend());
    const auto h = std::min(neg.size(), static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(npos))));
    const double mn = std::accumulate(neg.begin(), neg.begin() + static_cast<long>(h), 0.0) / static_cast<double>(h);
    double mp = 0;
    for (auto i : p.positives) mp += fused[i];
    mp /= static_cast<double>(npos);
    EXPECT_NEAR(loss, std::max(mn + d - mp, 0.0), 1e-12);
    EXPECT_EQ(loss == 0.0, mn + d - mp <= 0.0);
  }
}

TEST(Backward, MatchesCentralDifferences) {
  Gen gen(76);
  Architecture a;
  a.features = 3;
  a.length = 20;
  a.conv1_channels = 4;
  a.conv2_channels = 3;
  TrainConfig cfg;
  for (int trial = 0; trial < 5; ++trial) {
    auto model = SqafModel::initialize(a, 200 + trial);
    const auto sample = random_sample(gen, 3, 20, 30, 2);
    const auto g = backward(model, sample, cfg);
    ASSERT_GT(g.loss, 0.0);
    EXPECT_NEAR(g.loss, sample_loss(model, sample, cfg), 1e-14);
    const double h = 1e-5;
    auto params = model.parameters();
    double worst = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double up = sample_loss(model, sample, cfg);
      params[i] = keep - h;
      const double down = sample_loss(model, sample, cfg);
      params[i] = keep;
      worst = std::max(worst, rel_err(g.parameters[i], (up - down) / (2 * h)));
    }
    EXPECT_LT(worst, 1e-4) << "trial " << trial;
    EXPECT_NEAR(std::accumulate(g.logits.begin(), g.logits.end(), 0.0), 0.0, 1e-14);
  }
}

TEST(Backward, InactiveHingeGivesZeroGradient) {
  Gen gen(77);
  auto sample = random_sample(gen, 4, 100, 150, 3);
  for (auto& s : sample.scores) {
    for (auto i : sample.partition.positives) s[i] = 5.0;
  }
  const auto model = SqafModel::initialize(Architecture{}, 3);
  const auto g = backward(model, sample, TrainConfig{});
  EXPECT_EQ(g.loss, 0.0);
  for (double v : g.parameters) EXPECT_EQ(v, 0.0);
}

TEST(Train, ZeroLearningRateLeavesParametersUntouched) {
  Gen gen(78);
  std::vector<TrainingSample> data;
  for (int i = 0; i < 5; ++i) data.push_back(random_sample(gen, 4, 100, 120, 2));
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.seed = 9;
  const auto r = train(data, cfg, Architecture{});
  const auto fresh = SqafModel::initialize(Architecture{}, 9);
  ASSERT_EQ(r.model.parameters().size(), fresh.parameters().size());
  EXPECT_EQ(std::memcmp(r.model.parameters().data(), fresh.parameters().data(),
                        fresh.parameters().size() * sizeof(double)),
            0);
  EXPECT_EQ(r.epoch_loss.size(), 3u);
}

TEST(Train, FixedSeedIsReproducible) {
  Gen gen(79);
  std::vector<TrainingSample> data;
  for (int i = 0; i < 20; ++i) data.push_back(random_sample(gen, 4, 100, 120, 2));
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.seed = 4;
  const auto a = train(data, cfg, Architecture{});
  const auto b = train(data, cfg, Architecture{});
  EXPECT_EQ(std::memcmp(a.model.parameters().data(), b.model.parameters().data(),
                        a.model.parameters().size() * sizeof(double)),
            0);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Train, RejectsEmptyDataset) {
  EXPECT_THROW(train(std::vector<TrainingSample>{}, TrainConfig{}, Architecture{}), DataError);
}

TEST(Train, SingleSampleOverfits) {
  // One feature separates perfectly; the others are noise.
  Gen gen(80);
  auto sample = random_sample(gen, 4, 100, 200, 2);
  for (std::size_t g = 0; g < 200; ++g) sample.scores[0][g] = g < 2 ? 1.0 : 0.0;
  std::vector<SortedCurve> curves;
  for (const auto& s : sample.scores) curves.push_back(sort_descending(s));
  sample.stack = CurveStack::from_curves(curves, 100);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.epochs = 300;
  const auto r = train(std::vector{sample}, cfg, Architecture{});
  EXPECT_LT(r.epoch_loss.back(), 0.1 * r.epoch_loss.front());
}

TEST(Train, LearnsToPreferTheInformativeFeature) {
  FeatureProfile good = FeatureProfile::good("good");
  good.negative = ScoreDistribution::beta(1, 20);
  FeatureProfile noise = FeatureProfile::bad("noise");
  SynthSpec spec;
  spec.num_queries = 120;
  spec.gallery_size = 200;
  spec.relevant_per_query = 2;
  spec.features = {noise, good};
  spec.seed = 3;
  auto train_set = generate(spec);
  spec.seed = 4;
  auto test_set = generate(spec);

  const auto data = make_training_samples(train_set.tables, train_set.relevance, 50);
  Architecture a;
  a.features = 2;
  a.length = 50;
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 0.05;
  const auto r = train(data, cfg, a);
  const auto fused = fuse_tables(test_set.tables, sqaf_estimator(r.model), FusionRule::sum);
  double w_good = 0, w_noise = 0;
  for (const auto& f : fused) {
    w_noise += f.weights[0];
    w_good += f.weights[1];
  }
  EXPECT_GT(w_good, w_noise);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(TrainingSamples, SkipQueriesWithoutMatches) {
  Gen gen(81);
  std::vector<ScoreTable> t{qafuse::test::random_table(gen, "a", 4, 20)};
  std::vector<std::vector<std::size_t>> rel{{1}, {}, {0, 2}, {3}};
  const auto s = make_training_samples(t, rel, 10);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[1].partition.positives, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(s[1].partition.negatives.size(), 18u);
  EXPECT_EQ(s[0].stack.row(0)[0], *std::max_element(t[0].row(0).begin(), t[0].row(0).end()));
  EXPECT_THROW(make_training_samples(t, rel, 30), DataError);
}

TEST(MatchPartition, FromLabels) {
  const std::vector<std::string> labels{"a", "b", "a", "c"};
  const auto p = MatchPartition::from_labels(labels, "a");
  EXPECT_EQ(p.positives, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(p.negatives, (std::vector<std::size_t>{1, 3}));
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Gen gen(82);
  std::vector<TrainingSample> data;
  for (int i = 0; i < 6; ++i) data.push_back(random_sample(gen, 4, 100, 120, 2));
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 12;
  auto model = train(data, cfg, Architecture{}).model;
  model.provenance = "unit test";
  std::stringstream ss;
  write_model(ss, model);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 8), "QAFMODL1");
  const auto back = read_model(ss);
  EXPECT_EQ(back.init_seed(), 12u);
  EXPECT_EQ(back.provenance, "unit test");
  EXPECT_EQ(back.train_config.epochs, 2u);
  ASSERT_EQ(back.parameters().size(), model.parameters().size());
  EXPECT_EQ(std::memcmp(back.parameters().data(), model.parameters().data(),
                        model.parameters().size() * sizeof(double)),
            0);
  std::stringstream again;
  write_model(again, back);
  EXPECT_EQ(again.str(), bytes);

  const auto x = random_stack(gen, 4, 100);
  EXPECT_EQ(model.forward(x)[2], back.forward(x)[2]);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  std::stringstream bad_magic("NOTAMODEL");
  EXPECT_THROW(read_model(bad_magic), DataError);
  std::stringstream ss;
  write_model(ss, SqafModel::initialize(Architecture{}, 1));
  std::string bytes = ss.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(read_model(truncated), DataError);
}
