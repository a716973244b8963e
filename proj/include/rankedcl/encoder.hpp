#ifndef RANKEDCL_ENCODER_HPP
#define RANKEDCL_ENCODER_HPP

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankedcl/augment.hpp"
#include "rankedcl/data.hpp"
#include "rankedcl/loss.hpp"
#include "rankedcl/numkernel.hpp"
#include "rankedcl/ranking.hpp"
#include "rankedcl/rng.hpp"
#include "rankedcl/tape.hpp"

namespace rankedcl {

/// Fully connected stack: ReLU after every layer but the last.
struct Architecture {
  std::vector<std::size_t> layer_sizes;  ///< input, hidden..., output
  bool normalize_output = true;          ///< final L2 normalization (embeddings) or raw logits

  void validate() const;
  bool operator==(const Architecture&) const = default;
};

/// Backbone + projection head for contrastive training: in → h → h → h → d.
Architecture contrastive_architecture(std::size_t in_dim, std::size_t hidden, std::size_t embed_dim);
/// Same trunk with a c-way logit layer for the softmax baseline.
Architecture softmax_architecture(std::size_t in_dim, std::size_t hidden, std::size_t num_classes);

class EncoderModel {
 public:
  /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases, drawn from `seed`.
  EncoderModel(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::size_t input_dim() const { return arch_.layer_sizes.front(); }
  std::size_t output_dim() const { return arch_.layer_sizes.back(); }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t parameter_count() const;
  std::uint64_t seed() const { return seed_; }

  Matrix& weight(std::size_t layer) { return weights_.at(layer); }
  Matrix& bias(std::size_t layer) { return biases_.at(layer); }
  const Matrix& weight(std::size_t layer) const { return weights_.at(layer); }
  const Matrix& bias(std::size_t layer) const { return biases_.at(layer); }

  /// All parameters as a 1×P row, layer by layer (weights row-major, then bias).
  Matrix flat_parameters() const;
  void set_flat_parameters(const Matrix& flat);

  /// Output rows; unit-norm when the architecture normalizes.
  Matrix forward(const Matrix& batch) const;

  struct TapeForward {
    GradTape::Var output;
    std::vector<GradTape::Var> weights;
    std::vector<GradTape::Var> biases;
  };
  /// Records the forward pass on `tape` with every parameter as a leaf.
  TapeForward forward(GradTape& tape, const Matrix& batch) const;

  /// θ ← θ − lr·∇θ using the gradients left on `tape` by backward().
  void sgd_update(const GradTape& tape, const TapeForward& fwd, double lr);

  bool operator==(const EncoderModel& o) const;

 private:
  Architecture arch_;
  std::uint64_t seed_;
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
};

/// Unit-norm embeddings of a batch.
EmbeddingMatrix forward(const EncoderModel& model, const Matrix& batch);

nlohmann::json checkpoint_to_json(const EncoderModel& model, std::size_t epoch);
EncoderModel checkpoint_from_json(const nlohmann::json& j);

enum class Objective { ranked, softmax };

struct TrainConfig {
  Objective objective = Objective::ranked;
  std::size_t batch_size = 32;
  std::size_t epochs = 200;  ///< 0 leaves the initial weights untouched
  double lr = 0.5;
  double lr_decay = 0.1;
  std::vector<std::size_t> decay_milestones;  ///< empty: 60% and 80% of epochs
  std::uint64_t seed = 0;
  double tau_min = 0.1;
  double tau_max = 0.6;
  std::size_t r = 3;
  std::size_t hidden = 64;
  std::size_t embed_dim = 16;
  bool two_view = true;     ///< each item contributes two augmented views
  double view_noise = 0.05; ///< N(0, σ²) feature noise per view for vector data

  void validate() const;
  std::vector<std::size_t> milestones() const;
  /// lr · lr_decay^k with k the number of milestones reached by `epoch`.
  double lr_at(std::size_t epoch) const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

/// Labeled inputs that can produce augmented and clean views as flat rows.
class TrainingSet {
 public:
  virtual ~TrainingSet() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual int label(std::size_t i) const = 0;
  /// One stochastic view of item i drawn from `stream`.
  virtual RowVector view(std::size_t i, const Rng& stream) const = 0;
  /// Deterministic evaluation input of item i.
  virtual RowVector clean(std::size_t i) const = 0;
};

/// Feature vectors; views add isotropic Gaussian noise.
class VectorTrainingSet : public TrainingSet {
 public:
  VectorTrainingSet(LabeledVectors data, double view_noise);
  std::size_t size() const override { return data_.size(); }
  std::size_t input_dim() const override { return static_cast<std::size_t>(data_.x.cols()); }
  int label(std::size_t i) const override { return data_.labels[i]; }
  RowVector view(std::size_t i, const Rng& stream) const override;
  RowVector clean(std::size_t i) const override { return data_.x.row(static_cast<Eigen::Index>(i)); }
  const LabeledVectors& data() const { return data_; }

 private:
  LabeledVectors data_;
  double view_noise_;
};

/// Image crops; views come from the two-crop augmentation chain, flattened.
class ImageTrainingSet : public TrainingSet {
 public:
  ImageTrainingSet(std::vector<RasterImage> crops, std::vector<int> labels, AugmentConfig cfg);
  std::size_t size() const override { return crops_.size(); }
  std::size_t input_dim() const override { return cfg_.out_size * cfg_.out_size * RasterImage::kChannels; }
  int label(std::size_t i) const override { return labels_[i]; }
  RowVector view(std::size_t i, const Rng& stream) const override;
  RowVector clean(std::size_t i) const override;

 private:
  std::vector<RasterImage> crops_;
  std::vector<int> labels_;
  AugmentConfig cfg_;
};

/// One SGD step on the ranked loss; returns the loss before the update.
LossBreakdown train_step(EncoderModel& model, const Matrix& batch, std::span<const int> labels, const RankingSpec& spec,
                         const TemperatureSchedule& taus, double lr);

/// Max relative error between the tape gradient of the ranked loss w.r.t. every
/// model parameter and central finite differences with step eps.
double encoder_grad_check(const EncoderModel& model, const Matrix& batch, std::span<const int> labels,
                          const RankingSpec& spec, const TemperatureSchedule& taus, double eps = 1e-5);

/// One SGD step on softmax cross-entropy; returns the loss before the update.
double softmax_train_step(EncoderModel& model, const Matrix& batch, std::span<const int> labels, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;  ///< batch means; per_anchor is the mean loss of each dataset item
  std::size_t skipped_batches = 0;
};

nlohmann::json epoch_record_to_json(const EpochRecord& rec);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

/// Seeded shuffling, batching, per-item views and stepped learning-rate decay.
std::vector<EpochRecord> fit(EncoderModel& model, const TrainingSet& data, const TrainConfig& cfg,
                             const RankingSpec& spec);

/// Cross-entropy training of a softmax-architecture model under the same batching and views.
std::vector<double> fit_softmax(EncoderModel& model, const TrainingSet& data, const TrainConfig& cfg);

/// Clean-input embeddings in dataset order, computed in chunks of `batch`.
struct EmbeddedSet {
  Matrix z;
  std::vector<int> labels;
};
EmbeddedSet embed_dataset(const EncoderModel& model, const TrainingSet& data, std::size_t batch = 256);

}  // namespace rankedcl

#endif  // RANKEDCL_ENCODER_HPP
