#include "qafuse/sqaf.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

#include "qafuse/error.hpp"
#include "qafuse/random.hpp"

namespace qafuse {

// ---------------------------------------------------------------------------
// Shapes and configuration

CurveStack CurveStack::from_curves(std::span<const SortedCurve> curves, std::size_t m) {
  if (curves.empty()) {
    throw DataError("no curves to stack");
  }
  CurveStack stack;
  stack.features = curves.size();
  stack.length = m;
  stack.data.reserve(curves.size() * m);
  for (const auto& c : curves) {
    if (c.size() < m) {
      throw DataError(fmt::format("curve of length {} is shorter than stack length {}", c.size(), m));
    }
    stack.data.insert(stack.data.end(), c.values.begin(),
                      c.values.begin() + static_cast<std::ptrdiff_t>(m));
  }
  return stack;
}

void CurveStack::validate() const {
  if (data.size() != features * length) {
    throw DataError(fmt::format("curve stack holds {} values, expected {} x {}", data.size(),
                                features, length));
  }
  for (std::size_t i = 0; i < features; ++i) {
    auto r = row(i);
    if (std::adjacent_find(r.begin(), r.end(), std::less<>{}) != r.end()) {
      throw DataError(fmt::format("curve stack row {} is not non-increasing", i));
    }
  }
}

void Architecture::validate() const {
  if (features < 1 || conv1_channels < 1 || conv2_channels < 1 || kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("architecture needs positive sizes and an odd kernel");
  }
  if (length < kernel) {
    throw ConfigError(fmt::format("stack length {} shorter than kernel {}", length, kernel));
  }
}

std::size_t Architecture::parameter_count() const {
  return conv1_channels * features * kernel + conv1_channels +
         conv2_channels * conv1_channels * kernel + conv2_channels + features * conv2_channels +
         features;
}

void TrainConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

MatchPartition MatchPartition::from_relevant(std::size_t gallery_size,
                                             std::span<const std::size_t> relevant) {
  std::vector<char> is_pos(gallery_size, 0);
  for (std::size_t g : relevant) {
    if (g >= gallery_size) {
      throw DataError(fmt::format("relevant index {} outside gallery of {}", g, gallery_size));
    }
    is_pos[g] = 1;
  }
  MatchPartition p;
  for (std::size_t g = 0; g < gallery_size; ++g) {
    (is_pos[g] ? p.positives : p.negatives).push_back(g);
  }
  return p;
}

MatchPartition MatchPartition::from_labels(std::span<const std::string> gallery_labels,
                                           const std::string& query_label) {
  MatchPartition p;
  for (std::size_t g = 0; g < gallery_labels.size(); ++g) {
    (gallery_labels[g] == query_label ? p.positives : p.negatives).push_back(g);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Network

namespace {

struct Layout {
  std::size_t w1, b1, w2, b2, wd, bd, total;

  explicit Layout(const Architecture& a) {
    w1 = 0;
    b1 = w1 + a.conv1_channels * a.features * a.kernel;
    w2 = b1 + a.conv1_channels;
    b2 = w2 + a.conv2_channels * a.conv1_channels * a.kernel;
    wd = b2 + a.conv2_channels;
    bd = wd + a.features * a.conv2_channels;
    total = bd + a.features;
  }
};

/// Activations kept for the backward pass.
struct Trace {
  std::vector<double> z1, a1;  // c1 x m
  std::vector<double> z2, a2;  // c2 x L2
  std::vector<double> pooled;  // c2
  std::vector<double> logits;  // K
  std::vector<double> weights; // K
};

Trace run_forward(const Architecture& a, std::span<const double> p, const CurveStack& x) {
  if (x.features != a.features || x.length != a.length) {
    throw DataError(fmt::format("curve stack is {} x {}, model expects {} x {}", x.features,
                                x.length, a.features, a.length));
  }
  if (x.data.size() != x.features * x.length) {
    throw DataError("curve stack data size mismatch");
  }
  const Layout lay(a);
  const std::size_t m = a.length;
  const std::size_t k = a.kernel;
  const std::size_t pad = k / 2;
  const std::size_t c1 = a.conv1_channels;
  const std::size_t c2 = a.conv2_channels;
  const std::size_t l2 = a.conv2_length();
  const std::size_t nf = a.features;

  Trace t;
  t.z1.assign(c1 * m, 0.0);
  for (std::size_t o = 0; o < c1; ++o) {
    for (std::size_t pos = 0; pos < m; ++pos) {
      double acc = p[lay.b1 + o];
      for (std::size_t c = 0; c < nf; ++c) {
        const double* w = &p[lay.w1 + (o * nf + c) * k];
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(pos + j) -
                                     static_cast<std::ptrdiff_t>(pad);
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(m)) {
            acc += w[j] * x.data[c * m + static_cast<std::size_t>(src)];
          }
        }
      }
      t.z1[o * m + pos] = acc;
    }
  }
  t.a1.resize(t.z1.size());
  std::transform(t.z1.begin(), t.z1.end(), t.a1.begin(), [](double v) { return v > 0 ? v : 0.0; });

  t.z2.assign(c2 * l2, 0.0);
  for (std::size_t o = 0; o < c2; ++o) {
    for (std::size_t pos = 0; pos < l2; ++pos) {
      double acc = p[lay.b2 + o];
      for (std::size_t c = 0; c < c1; ++c) {
        const double* w = &p[lay.w2 + (o * c1 + c) * k];
        const double* in = &t.a1[c * m + pos];
        for (std::size_t j = 0; j < k; ++j) {
          acc += w[j] * in[j];
        }
      }
      t.z2[o * l2 + pos] = acc;
    }
  }
  t.a2.resize(t.z2.size());
  std::transform(t.z2.begin(), t.z2.end(), t.a2.begin(), [](double v) { return v > 0 ? v : 0.0; });

  t.pooled.assign(c2, 0.0);
  for (std::size_t o = 0; o < c2; ++o) {
    double acc = 0.0;
    for (std::size_t pos = 0; pos < l2; ++pos) {
      acc += t.a2[o * l2 + pos];
    }
    t.pooled[o] = acc / static_cast<double>(l2);
  }

  t.logits.assign(nf, 0.0);
  for (std::size_t i = 0; i < nf; ++i) {
    double acc = p[lay.bd + i];
    for (std::size_t o = 0; o < c2; ++o) {
      acc += p[lay.wd + i * c2 + o] * t.pooled[o];
    }
    t.logits[i] = acc;
  }

  const double top = *std::max_element(t.logits.begin(), t.logits.end());
  t.weights.resize(nf);
  double total = 0.0;
  for (std::size_t i = 0; i < nf; ++i) {
    t.weights[i] = std::exp(t.logits[i] - top);
    total += t.weights[i];
  }
  for (double& w : t.weights) {
    w /= total;
  }
  return t;
}

void run_backward(const Architecture& a, std::span<const double> p, const CurveStack& x,
                  const Trace& t, std::span<const double> grad_weights, Gradient& out) {
  const Layout lay(a);
  const std::size_t m = a.length;
  const std::size_t k = a.kernel;
  const std::size_t pad = k / 2;
  const std::size_t c1 = a.conv1_channels;
  const std::size_t c2 = a.conv2_channels;
  const std::size_t l2 = a.conv2_length();
  const std::size_t nf = a.features;
  auto& g = out.parameters;
  g.assign(lay.total, 0.0);

  // softmax: dz_i = w_i (gw_i - sum_j w_j gw_j)
  double dot = 0.0;
  for (std::size_t i = 0; i < nf; ++i) dot += t.weights[i] * grad_weights[i];
  out.logits.resize(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    out.logits[i] = t.weights[i] * (grad_weights[i] - dot);
  }

  std::vector<double> d_pooled(c2, 0.0);
  for (std::size_t i = 0; i < nf; ++i) {
    const double dl = out.logits[i];
    g[lay.bd + i] = dl;
    for (std::size_t o = 0; o < c2; ++o) {
      g[lay.wd + i * c2 + o] = dl * t.pooled[o];
      d_pooled[o] += p[lay.wd + i * c2 + o] * dl;
    }
  }

  std::vector<double> d_a1(c1 * m, 0.0);
  for (std::size_t o = 0; o < c2; ++o) {
    const double d_each = d_pooled[o] / static_cast<double>(l2);
    for (std::size_t pos = 0; pos < l2; ++pos) {
      if (t.z2[o * l2 + pos] <= 0.0) continue;
      g[lay.b2 + o] += d_each;
      for (std::size_t c = 0; c < c1; ++c) {
        const std::size_t wbase = lay.w2 + (o * c1 + c) * k;
        for (std::size_t j = 0; j < k; ++j) {
          g[wbase + j] += d_each * t.a1[c * m + pos + j];
          d_a1[c * m + pos + j] += d_each * p[wbase + j];
        }
      }
    }
  }

  for (std::size_t o = 0; o < c1; ++o) {
    for (std::size_t pos = 0; pos < m; ++pos) {
      if (t.z1[o * m + pos] <= 0.0) continue;
      const double dz = d_a1[o * m + pos];
      if (dz == 0.0) continue;
      g[lay.b1 + o] += dz;
      for (std::size_t c = 0; c < nf; ++c) {
        const std::size_t wbase = lay.w1 + (o * nf + c) * k;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(pos + j) -
                                     static_cast<std::ptrdiff_t>(pad);
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(m)) {
            g[wbase + j] += dz * x.data[c * m + static_cast<std::size_t>(src)];
          }
        }
      }
    }
  }
}

std::vector<double> fused_sum(const TrainingSample& s, std::span<const double> w) {
  const std::size_t n = s.scores.front().size();
  std::vector<double> f(n, 0.0);
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    for (std::size_t d = 0; d < n; ++d) f[d] += w[i] * s.scores[i][d];
  }
  return f;
}

double mean_of(std::span<const double> values, std::span<const std::size_t> idx) {
  double acc = 0.0;
  for (std::size_t i : idx) acc += values[i];
  return acc / static_cast<double>(idx.size());
}

void check_sample(const SqafModel& model, const TrainingSample& s) {
  const auto& a = model.architecture();
  if (s.scores.size() != a.features) {
    throw DataError(fmt::format("sample has {} score lists, model expects {}", s.scores.size(),
                                a.features));
  }
  const std::size_t n = s.scores.front().size();
  for (const auto& row : s.scores) {
    if (row.size() != n) throw DataError("sample score lists differ in length");
  }
  for (std::size_t g : s.partition.positives) {
    if (g >= n) throw DataError("partition index outside gallery");
  }
  for (std::size_t g : s.partition.negatives) {
    if (g >= n) throw DataError("partition index outside gallery");
  }
}

}  // namespace

SqafModel SqafModel::initialize(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  SqafModel model;
  model.arch_ = arch;
  model.init_seed_ = seed;
  model.params_.resize(arch.parameter_count());

  Engine engine(seed);
  for (const auto& t : model.tensors()) {
    std::size_t fan_in = 0;
    if (t.name == "conv1.weight" || t.name == "conv1.bias") {
      fan_in = arch.features * arch.kernel;
    } else if (t.name == "conv2.weight" || t.name == "conv2.bias") {
      fan_in = arch.conv1_channels * arch.kernel;
    } else {
      fan_in = arch.conv2_channels;
    }
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < t.size; ++i) {
      model.params_[t.offset + i] = uniform_real(engine, -bound, bound);
    }
  }
  return model;
}

std::vector<SqafModel::Tensor> SqafModel::tensors() const {
  const Layout lay(arch_);
  const auto& a = arch_;
  return {
      {"conv1.weight", {a.conv1_channels, a.features, a.kernel}, lay.w1, lay.b1 - lay.w1},
      {"conv1.bias", {a.conv1_channels}, lay.b1, a.conv1_channels},
      {"conv2.weight", {a.conv2_channels, a.conv1_channels, a.kernel}, lay.w2, lay.b2 - lay.w2},
      {"conv2.bias", {a.conv2_channels}, lay.b2, a.conv2_channels},
      {"dense.weight", {a.features, a.conv2_channels}, lay.wd, lay.bd - lay.wd},
      {"dense.bias", {a.features}, lay.bd, a.features},
  };
}

WeightVector SqafModel::forward(const CurveStack& stack) const {
  return WeightVector(run_forward(arch_, params_, stack).weights);
}

std::vector<double> SqafModel::logits(const CurveStack& stack) const {
  return run_forward(arch_, params_, stack).logits;
}

// ---------------------------------------------------------------------------
// Loss

std::vector<std::size_t> hard_negatives(std::span<const double> fused,
                                        const MatchPartition& partition, double alpha) {
  if (partition.positives.empty()) {
    throw DataError("query has no true match in gallery");
  }
  if (partition.negatives.empty()) {
    throw DataError("query has no false match in gallery");
  }
  const double want = std::ceil(alpha * static_cast<double>(partition.positives.size()));
  const std::size_t count =
      std::min(partition.negatives.size(), static_cast<std::size_t>(std::max(want, 1.0)));
  std::vector<std::size_t> neg = partition.negatives;
  std::partial_sort(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(count), neg.end(),
                    [&](std::size_t a, std::size_t b) {
                      return fused[a] > fused[b] || (fused[a] == fused[b] && a < b);
                    });
  neg.resize(count);
  return neg;
}

double margin_loss(std::span<const double> fused, const MatchPartition& partition, double margin,
                   double alpha) {
  const auto hard = hard_negatives(fused, partition, alpha);
  const double gap = mean_of(fused, hard) + margin - mean_of(fused, partition.positives);
  return std::max(gap, 0.0);
}

double sample_loss(const SqafModel& model, const TrainingSample& sample, const TrainConfig& cfg) {
  check_sample(model, sample);
  const WeightVector w = model.forward(sample.stack);
  return margin_loss(fused_sum(sample, w.values()), sample.partition, cfg.margin, cfg.alpha);
}

Gradient backward(const SqafModel& model, const TrainingSample& sample, const TrainConfig& cfg) {
  check_sample(model, sample);
  const auto& a = model.architecture();
  const Trace t = run_forward(a, model.parameters(), sample.stack);
  const std::vector<double> fused = fused_sum(sample, t.weights);
  const auto hard = hard_negatives(fused, sample.partition, cfg.alpha);
  const double gap = mean_of(fused, hard) + cfg.margin - mean_of(fused, sample.partition.positives);

  Gradient out;
  out.loss = std::max(gap, 0.0);
  if (gap <= 0.0) {
    out.parameters.assign(a.parameter_count(), 0.0);
    out.logits.assign(a.features, 0.0);
    return out;
  }
  // dL/dw_i = mean_hard(s_i) - mean_pos(s_i)
  std::vector<double> grad_w(a.features);
  for (std::size_t i = 0; i < a.features; ++i) {
    grad_w[i] = mean_of(sample.scores[i], hard) -
                mean_of(sample.scores[i], sample.partition.positives);
  }
  run_backward(a, model.parameters(), sample.stack, t, grad_w, out);
  return out;
}

std::vector<TrainingSample> make_training_samples(std::span<const ScoreTable> tables,
                                                  std::span<const std::vector<std::size_t>> relevant,
                                                  std::size_t m) {
  if (tables.empty()) {
    throw DataError("no score tables");
  }
  const std::size_t nq = tables.front().num_queries();
  const std::size_t ng = tables.front().num_gallery();
  if (relevant.size() != nq) {
    throw DataError("relevance list does not match query count");
  }
  std::vector<TrainingSample> samples;
  for (std::size_t q = 0; q < nq; ++q) {
    MatchPartition part = MatchPartition::from_relevant(ng, relevant[q]);
    if (part.positives.empty() || part.negatives.empty()) {
      continue;
    }
    std::vector<SortedCurve> curves;
    TrainingSample s;
    for (const auto& t : tables) {
      curves.push_back(sort_descending(t.row(q)));
      s.scores.emplace_back(t.row(q).begin(), t.row(q).end());
    }
    s.stack = CurveStack::from_curves(curves, m);
    s.partition = std::move(part);
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(std::span<const TrainingSample> dataset, const TrainConfig& cfg,
                  const Architecture& arch) {
  return train(dataset, cfg, SqafModel::initialize(arch, cfg.seed));
}

TrainResult train(std::span<const TrainingSample> dataset, const TrainConfig& cfg,
                  SqafModel model) {
  cfg.validate();
  if (dataset.empty()) {
    throw DataError("empty training set");
  }
  for (const auto& s : dataset) {
    if (s.partition.positives.empty()) {
      throw DataError("query has no true match in gallery");
    }
  }

  TrainResult result{std::move(model), {}};
  result.model.train_config = cfg;
  auto params = result.model.parameters();

  Engine engine(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> step(params.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(engine, order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(step.begin(), step.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Gradient g = backward(result.model, dataset[order[b]], cfg);
        epoch_loss += g.loss;
        for (std::size_t i = 0; i < step.size(); ++i) step[i] += g.parameters[i];
      }
      const double scale = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= scale * step[i];
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(dataset.size()));
  }
  return result;
}

WeightEstimator sqaf_estimator(const SqafModel& model) {
  return [model](std::span<const SortedCurve> curves, std::size_t) {
    return model.forward(CurveStack::from_curves(curves, model.architecture().length));
  };
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, little-endian u64 header length, JSON header, raw
// little-endian float64 parameters.

namespace {

constexpr char kMagic[8] = {'Q', 'A', 'F', 'M', 'O', 'D', 'L', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

}  // namespace

void write_model(std::ostream& out, const SqafModel& model) {
  const auto& a = model.architecture();
  nlohmann::ordered_json header;
  header["architecture"] = {
      {"layers", {"conv1d_same", "relu", "conv1d_valid", "relu", "global_avg_pool", "dense",
                  "softmax"}},
      {"features", a.features},
      {"length", a.length},
      {"conv1_channels", a.conv1_channels},
      {"conv2_channels", a.conv2_channels},
      {"kernel", a.kernel},
      {"stride", 1}};
  header["init_seed"] = model.init_seed();
  const auto& tc = model.train_config;
  header["train_config"] = {{"margin", tc.margin},       {"alpha", tc.alpha},
                            {"learning_rate", tc.learning_rate}, {"epochs", tc.epochs},
                            {"batch_size", tc.batch_size}, {"seed", tc.seed}};
  header["provenance"] = model.provenance;
  nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
  for (const auto& t : model.tensors()) {
    shapes.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  header["tensors"] = shapes;
  header["parameter_count"] = model.parameters().size();
  const std::string text = header.dump();

  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = to_little<std::uint64_t>(text.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : model.parameters()) {
    const double le = to_little(v);
    out.write(reinterpret_cast<const char*>(&le), sizeof(le));
  }
}

struct SqafAccess {
  static SqafModel make(const Architecture& arch, std::uint64_t seed, std::vector<double> params) {
    SqafModel m;
    m.arch_ = arch;
    m.init_seed_ = seed;
    m.params_ = std::move(params);
    return m;
  }
};

SqafModel read_model(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw DataError("not a qafuse model checkpoint");
  }
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len))) {
    throw DataError("truncated model checkpoint");
  }
  len = to_little(len);
  if (len > (1u << 26)) {
    throw DataError("model header too large");
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw DataError("truncated model checkpoint");
  }
  try {
    const auto header = nlohmann::json::parse(text);
    const auto& ja = header.at("architecture");
    Architecture arch;
    arch.features = ja.at("features").get<std::size_t>();
    arch.length = ja.at("length").get<std::size_t>();
    arch.conv1_channels = ja.at("conv1_channels").get<std::size_t>();
    arch.conv2_channels = ja.at("conv2_channels").get<std::size_t>();
    arch.kernel = ja.at("kernel").get<std::size_t>();
    arch.validate();
    const std::size_t count = header.at("parameter_count").get<std::size_t>();
    if (count != arch.parameter_count()) {
      throw DataError("parameter count does not match architecture");
    }
    std::vector<double> params(count);
    for (double& v : params) {
      if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw DataError("truncated model parameters");
      }
      v = to_little(v);
    }
    SqafModel model = SqafAccess::make(arch, header.at("init_seed").get<std::uint64_t>(),
                                       std::move(params));
    const auto& tc = header.at("train_config");
    model.train_config.margin = tc.at("margin").get<double>();
    model.train_config.alpha = tc.at("alpha").get<double>();
    model.train_config.learning_rate = tc.at("learning_rate").get<double>();
    model.train_config.epochs = tc.at("epochs").get<std::size_t>();
    model.train_config.batch_size = tc.at("batch_size").get<std::size_t>();
    model.train_config.seed = tc.at("seed").get<std::uint64_t>();
    model.provenance = header.at("provenance").get<std::string>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed model header: {}", e.what()));
  }
}

void save_model(const std::filesystem::path& path, const SqafModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(fmt::format("cannot write model '{}'", path.string()));
  }
  write_model(out, model);
}

SqafModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(fmt::format("cannot open model '{}'", path.string()));
  }
  return read_model(in);
}

}  // namespace qafuse
