#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qafuse/curve.hpp"
#include "qafuse/fusion.hpp"

namespace qafuse {

/// Top-m of each feature's sorted curve, one row per feature (the network's
/// input channels).
struct CurveStack {
  std::size_t features = 0;
  std::size_t length = 0;
  std::vector<double> data;  // features x length, row-major

  std::span<const double> row(std::size_t i) const { return {data.data() + i * length, length}; }

  /// Throws DataError if a curve is shorter than m.
  static CurveStack from_curves(std::span<const SortedCurve> curves, std::size_t m);
  void validate() const;
};

/// Conv1D(K->c1, kernel, same padding) -> ReLU -> Conv1D(c1->c2, kernel,
/// valid) -> ReLU -> global average pool -> Dense(c2->K) -> softmax.
/// Stride is 1 everywhere.
struct Architecture {
  std::size_t features = 4;
  std::size_t length = 100;
  std::size_t conv1_channels = 16;
  std::size_t conv2_channels = 16;
  std::size_t kernel = 5;

  void validate() const;
  std::size_t conv2_length() const { return length - kernel + 1; }
  std::size_t parameter_count() const;
};

struct TrainConfig {
  double margin = 1.0;
  double alpha = 2.0;
  double learning_rate = 0.01;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gallery split into true and false matches for one training query.
struct MatchPartition {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;

  static MatchPartition from_relevant(std::size_t gallery_size,
                                      std::span<const std::size_t> relevant);
  static MatchPartition from_labels(std::span<const std::string> gallery_labels,
                                    const std::string& query_label);
};

class SqafModel {
 public:
  /// Parameters drawn uniformly from [-sqrt(1/fan_in), sqrt(1/fan_in)].
  static SqafModel initialize(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::uint64_t init_seed() const { return init_seed_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  WeightVector forward(const CurveStack& stack) const;
  std::vector<double> logits(const CurveStack& stack) const;

  /// Named parameter tensors in storage order, with their shapes.
  struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset;
    std::size_t size;
  };
  std::vector<Tensor> tensors() const;

  /// Training snapshot and free-form provenance carried into checkpoints.
  TrainConfig train_config;
  std::string provenance;

 private:
  friend struct SqafAccess;
  Architecture arch_;
  std::uint64_t init_seed_ = 0;
  std::vector<double> params_;
};

/// Hard negatives: the ceil(alpha * |positives|) highest fused scores among
/// the negatives (all of them if fewer), ties to the lower gallery index.
std::vector<std::size_t> hard_negatives(std::span<const double> fused,
                                        const MatchPartition& partition, double alpha);

/// max(mean(hard negatives) + margin - mean(positives), 0).
double margin_loss(std::span<const double> fused, const MatchPartition& partition, double margin,
                   double alpha);

struct TrainingSample {
  CurveStack stack;
  std::vector<std::vector<double>> scores;  // K raw score lists, gallery order
  MatchPartition partition;
};

/// Build one sample per query that has at least one true and one false match.
std::vector<TrainingSample> make_training_samples(std::span<const ScoreTable> tables,
                                                  std::span<const std::vector<std::size_t>> relevant,
                                                  std::size_t m);

struct Gradient {
  double loss = 0.0;
  std::vector<double> parameters;  // same layout as SqafModel::parameters()
  std::vector<double> logits;      // dL/d(pre-softmax outputs)
};

/// Exact gradient of margin_loss(fuse_sum(scores, forward(stack))) with the
/// hard-negative set held fixed at its current membership.
Gradient backward(const SqafModel& model, const TrainingSample& sample, const TrainConfig& cfg);

/// Loss of a single sample under the model, used by tests and training logs.
double sample_loss(const SqafModel& model, const TrainingSample& sample, const TrainConfig& cfg);

struct TrainResult {
  SqafModel model;
  std::vector<double> epoch_loss;
};

/// Mini-batch SGD from a freshly initialized model (seeded by cfg.seed).
TrainResult train(std::span<const TrainingSample> dataset, const TrainConfig& cfg,
                  const Architecture& arch);
/// Mini-batch SGD continuing from `model`.
TrainResult train(std::span<const TrainingSample> dataset, const TrainConfig& cfg,
                  SqafModel model);

/// WeightEstimator that feeds the top-m of each curve to the model.
WeightEstimator sqaf_estimator(const SqafModel& model);

void write_model(std::ostream& out, const SqafModel& model);
SqafModel read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const SqafModel& model);
SqafModel load_model(const std::filesystem::path& path);

}  // namespace qafuse
