#include "rankedcl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rankedcl/errors.hpp"

namespace rankedcl {

using nlohmann::json;

void Architecture::validate() const {
  if (layer_sizes.size() < 2) throw ValidationError("architecture needs at least an input and an output size");
  for (std::size_t s : layer_sizes)
    if (s == 0) throw ValidationError("architecture layer sizes must be positive");
}

Architecture contrastive_architecture(std::size_t in_dim, std::size_t hidden, std::size_t embed_dim) {
  return {{in_dim, hidden, hidden, hidden, embed_dim}, true};
}

Architecture softmax_architecture(std::size_t in_dim, std::size_t hidden, std::size_t num_classes) {
  return {{in_dim, hidden, hidden, hidden, num_classes}, false};
}

EncoderModel::EncoderModel(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)), seed_(seed) {
  arch_.validate();
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < arch_.layer_sizes.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(arch_.layer_sizes[l]);
    const auto fan_out = static_cast<Eigen::Index>(arch_.layer_sizes[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng layer = rng.split(l);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < fan_in; ++i)
      for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = layer.uniform(-bound, bound);
    weights_.push_back(std::move(w));
    biases_.push_back(Matrix::Zero(1, fan_out));
  }
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t p = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    p += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  return p;
}

Matrix EncoderModel::flat_parameters() const {
  Matrix flat(1, static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (const Matrix* m : {&weights_[l], &biases_[l]}) {
      flat.block(0, k, 1, m->size()) = m->reshaped<Eigen::RowMajor>().transpose();
      k += m->size();
    }
  }
  return flat;
}

void EncoderModel::set_flat_parameters(const Matrix& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count()))
    throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) + " entries, model has " +
                     std::to_string(parameter_count()));
  const Matrix row = flat.reshaped<Eigen::RowMajor>(1, flat.size());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Matrix* m : {&weights_[l], &biases_[l]}) {
      m->reshaped<Eigen::RowMajor>() = row.block(0, k, 1, m->size()).transpose();
      k += m->size();
    }
  }
}

Matrix EncoderModel::forward(const Matrix& batch) const {
  if (batch.cols() != static_cast<Eigen::Index>(input_dim()))
    throw ShapeError("encoder expects " + std::to_string(input_dim()) + " input features, got " +
                     std::to_string(batch.cols()));
  Matrix h = batch;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix next = h * weights_[l];
    next.rowwise() += biases_[l].row(0);
    if (l + 1 < weights_.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return arch_.normalize_output ? l2_normalize_rows(h) : h;
}

EncoderModel::TapeForward EncoderModel::forward(GradTape& tape, const Matrix& batch) const {
  if (batch.cols() != static_cast<Eigen::Index>(input_dim()))
    throw ShapeError("encoder expects " + std::to_string(input_dim()) + " input features, got " +
                     std::to_string(batch.cols()));
  TapeForward out{tape.leaf(batch), {}, {}};
  GradTape::Var h = out.output;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.weights.push_back(tape.leaf(weights_[l]));
    out.biases.push_back(tape.leaf(biases_[l]));
    h = tape.add_row_bias(tape.matmul(h, out.weights.back()), out.biases.back());
    if (l + 1 < weights_.size()) h = tape.relu(h);
  }
  out.output = arch_.normalize_output ? tape.l2_normalize_rows(h) : h;
  return out;
}

void EncoderModel::sgd_update(const GradTape& tape, const TapeForward& fwd, double lr) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l] -= lr * tape.grad(fwd.weights[l]);
    biases_[l] -= lr * tape.grad(fwd.biases[l]);
  }
}

bool EncoderModel::operator==(const EncoderModel& o) const {
  if (!(arch_ == o.arch_) || seed_ != o.seed_) return false;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    if (weights_[l] != o.weights_[l] || biases_[l] != o.biases_[l]) return false;
  return true;
}

EmbeddingMatrix forward(const EncoderModel& model, const Matrix& batch) {
  if (!model.architecture().normalize_output)
    throw ValidationError("model produces logits, not embeddings");
  return EmbeddingMatrix(model.forward(batch));
}

json checkpoint_to_json(const EncoderModel& model, std::size_t epoch) {
  json layers = json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l)
    layers.push_back({{"w", matrix_to_json(model.weight(l))}, {"b", matrix_to_json(model.bias(l))}});
  return {{"architecture",
           {{"layer_sizes", model.architecture().layer_sizes},
            {"normalize_output", model.architecture().normalize_output}}},
          {"weights", layers},
          {"seed", model.seed()},
          {"epoch", epoch}};
}

EncoderModel checkpoint_from_json(const json& j) {
  try {
    Architecture arch{j.at("architecture").at("layer_sizes").get<std::vector<std::size_t>>(),
                      j.at("architecture").value("normalize_output", true)};
    EncoderModel model(arch, j.at("seed").get<std::uint64_t>());
    const json& layers = j.at("weights");
    if (!layers.is_array() || layers.size() != model.num_layers())
      throw ValidationError("checkpoint: expected " + std::to_string(model.num_layers()) + " weight layers");
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      Matrix w = matrix_from_json(layers[l].at("w"));
      Matrix b = matrix_from_json(layers[l].at("b"));
      if (w.rows() != model.weight(l).rows() || w.cols() != model.weight(l).cols() || b.rows() != 1 ||
          b.cols() != model.bias(l).cols())
        throw ValidationError("checkpoint: layer " + std::to_string(l) + " shape does not match architecture");
      model.weight(l) = std::move(w);
      model.bias(l) = std::move(b);
    }
    return model;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ValidationError("train.batch_size must be at least 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("train.lr must be a finite positive number");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ValidationError("train.lr_decay must be in (0, 1]");
  if (!(tau_min > 0.0)) throw ValidationError("train.tau_min must be positive");
  if (r > 1 && !(tau_max > tau_min)) throw ValidationError("train.tau_max must exceed tau_min");
  if (r < 1) throw ValidationError("train.r must be at least 1");
  if (hidden < 1 || embed_dim < 1) throw ValidationError("train.hidden and train.embed_dim must be positive");
  if (!(view_noise >= 0.0)) throw ValidationError("train.view_noise must be non-negative");
}

std::vector<std::size_t> TrainConfig::milestones() const {
  if (!decay_milestones.empty()) return decay_milestones;
  return {epochs * 6 / 10, epochs * 8 / 10};
}

double TrainConfig::lr_at(std::size_t epoch) const {
  int k = 0;
  for (std::size_t m : milestones())
    if (epoch >= m) ++k;
  return lr * std::pow(lr_decay, k);
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ValidationError("train config must be an object");
  static const std::vector<std::string> known = {"objective", "batch_size", "epochs", "lr",     "lr_decay",  "decay_milestones",
                                                 "seed",       "tau_min", "tau_max", "r",        "hidden",
                                                 "embed_dim",  "two_view", "view_noise"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ValidationError("train config: unknown key '" + key + "'");
  try {
    const std::string objective = j.value("objective", std::string("ranked"));
    if (objective == "softmax")
      c.objective = Objective::softmax;
    else if (objective != "ranked")
      throw ValidationError("train.objective must be \"ranked\" or \"softmax\", got \"" + objective + "\"");
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.decay_milestones = j.value("decay_milestones", c.decay_milestones);
    c.seed = j.value("seed", c.seed);
    c.tau_min = j.value("tau_min", c.tau_min);
    c.tau_max = j.value("tau_max", c.tau_max);
    c.r = j.value("r", c.r);
    c.hidden = j.value("hidden", c.hidden);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.two_view = j.value("two_view", c.two_view);
    c.view_noise = j.value("view_noise", c.view_noise);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"objective", c.objective == Objective::softmax ? "softmax" : "ranked"},
          {"batch_size", c.batch_size}, {"epochs", c.epochs},   {"lr", c.lr},
          {"lr_decay", c.lr_decay},     {"decay_milestones", c.milestones()},
          {"seed", c.seed},             {"tau_min", c.tau_min}, {"tau_max", c.tau_max},
          {"r", c.r},                   {"hidden", c.hidden},   {"embed_dim", c.embed_dim},
          {"two_view", c.two_view},     {"view_noise", c.view_noise}};
}

VectorTrainingSet::VectorTrainingSet(LabeledVectors data, double view_noise)
    : data_(std::move(data)), view_noise_(view_noise) {
  if (static_cast<std::size_t>(data_.x.rows()) != data_.labels.size())
    throw ShapeError("vector training set: rows and labels differ in length");
  if (!(view_noise_ >= 0.0)) throw ValidationError("view noise must be non-negative");
}

RowVector VectorTrainingSet::view(std::size_t i, const Rng& stream) const {
  Rng rng = stream;
  RowVector v = data_.x.row(static_cast<Eigen::Index>(i));
  if (view_noise_ > 0.0)
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] += view_noise_ * rng.normal();
  return v;
}

ImageTrainingSet::ImageTrainingSet(std::vector<RasterImage> crops, std::vector<int> labels, AugmentConfig cfg)
    : crops_(std::move(crops)), labels_(std::move(labels)), cfg_(std::move(cfg)) {
  if (crops_.size() != labels_.size()) throw ShapeError("image training set: crops and labels differ in length");
  cfg_.validate();
}

namespace {

RowVector flatten(const RasterImage& img) { return img.pixels.matrix().transpose(); }

}  // namespace

RowVector ImageTrainingSet::view(std::size_t i, const Rng& stream) const {
  return flatten(augment_view(crops_[i], cfg_, stream));
}

RowVector ImageTrainingSet::clean(std::size_t i) const { return flatten(eval_view(crops_[i], cfg_)); }

LossBreakdown train_step(EncoderModel& model, const Matrix& batch, std::span<const int> labels, const RankingSpec& spec,
                         const TemperatureSchedule& taus, double lr) {
  GradTape tape;
  auto fwd = model.forward(tape, batch);
  LossBreakdown breakdown;
  auto loss = ranked_loss_node(tape, fwd.output, labels, spec, taus, &breakdown);
  tape.backward(loss);
  model.sgd_update(tape, fwd, lr);
  return breakdown;
}

double encoder_grad_check(const EncoderModel& model, const Matrix& batch, std::span<const int> labels,
                          const RankingSpec& spec, const TemperatureSchedule& taus, double eps) {
  GradTape tape;
  const auto fwd = model.forward(tape, batch);
  tape.backward(ranked_loss_node(tape, fwd.output, labels, spec, taus));
  Matrix analytic(1, static_cast<Eigen::Index>(model.parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (const Matrix* g : {&tape.grad(fwd.weights[l]), &tape.grad(fwd.biases[l])}) {
      analytic.block(0, k, 1, g->size()) = g->reshaped<Eigen::RowMajor>().transpose();
      k += g->size();
    }
  }
  EncoderModel probe = model;
  const Matrix numeric = finite_diff_grad(
      [&](const Matrix& theta) {
        probe.set_flat_parameters(theta);
        return ranked_loss_value_raw(probe.forward(batch), labels, spec, taus);
      },
      model.flat_parameters(), eps);
  return max_relative_error(analytic, numeric);
}

double softmax_train_step(EncoderModel& model, const Matrix& batch, std::span<const int> labels, double lr) {
  GradTape tape;
  auto fwd = model.forward(tape, batch);
  auto loss = tape.softmax_cross_entropy(fwd.output, labels);
  const double value = tape.scalar(loss);
  tape.backward(loss);
  model.sgd_update(tape, fwd, lr);
  return value;
}

json epoch_record_to_json(const EpochRecord& rec) {
  json j = loss_to_json(rec.loss);
  j["epoch"] = rec.epoch;
  j["lr"] = rec.lr;
  j["skipped_batches"] = rec.skipped_batches;
  return j;
}

EpochRecord epoch_record_from_json(const json& j) {
  EpochRecord rec;
  try {
    rec.epoch = j.at("epoch").get<std::size_t>();
    rec.lr = j.at("lr").get<double>();
    rec.skipped_batches = j.value("skipped_batches", std::size_t{0});
    rec.loss.total = j.at("total").get<double>();
    rec.loss.per_rank = j.at("per_rank").get<std::vector<double>>();
    rec.loss.per_anchor = j.value("per_anchor", std::vector<double>{});
    rec.loss.skipped_terms = j.value("skipped", std::size_t{0});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("training log record: ") + e.what());
  }
  return rec;
}

namespace {

// Streams: 0 → per-epoch shuffles, 1 → per-(epoch, item, view) augmentations.
struct EpochPlan {
  std::vector<std::size_t> order;
  Rng views;
};

EpochPlan plan_epoch(const TrainConfig& cfg, std::size_t size, std::size_t epoch) {
  Rng base(cfg.seed);
  EpochPlan plan{std::vector<std::size_t>(size), base.split(1).split(epoch)};
  std::iota(plan.order.begin(), plan.order.end(), std::size_t{0});
  Rng shuffler = base.split(0).split(epoch);
  shuffler.shuffle(plan.order);
  return plan;
}

// Rows for items [begin, end) of the order; with two views item k fills rows 2k and 2k+1.
void build_batch(const TrainingSet& data, const TrainConfig& cfg, const EpochPlan& plan, std::size_t begin,
                 std::size_t end, Matrix& x, std::vector<int>& labels, std::vector<std::size_t>& items) {
  const std::size_t views = cfg.two_view ? 2 : 1;
  const std::size_t rows = (end - begin) * views;
  x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(data.input_dim()));
  labels.resize(rows);
  items.resize(rows);
  for (std::size_t k = begin; k < end; ++k) {
    const std::size_t item = plan.order[k];
    const Rng item_rng = plan.views.split(item);
    for (std::size_t v = 0; v < views; ++v) {
      const std::size_t row = (k - begin) * views + v;
      x.row(static_cast<Eigen::Index>(row)) = data.view(item, item_rng.split(v));
      labels[row] = data.label(item);
      items[row] = item;
    }
  }
}

}  // namespace

std::vector<EpochRecord> fit(EncoderModel& model, const TrainingSet& data, const TrainConfig& cfg,
                             const RankingSpec& spec) {
  cfg.validate();
  if (data.size() == 0) throw ValidationError("training set is empty");
  if (data.input_dim() != model.input_dim())
    throw ShapeError("training inputs have " + std::to_string(data.input_dim()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  if (cfg.r != spec.depth()) throw ValidationError("train.r does not match the ranking depth");
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.label(i) < 0 || static_cast<std::size_t>(data.label(i)) >= spec.num_classes())
      throw ValidationError("training label " + std::to_string(data.label(i)) + " is outside the ranking classes");
  const TemperatureSchedule taus = linear_temperature_schedule(cfg.tau_min, cfg.tau_max, cfg.r);

  std::vector<EpochRecord> log;
  Matrix x;
  std::vector<int> labels;
  std::vector<std::size_t> items;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cfg.lr_at(epoch);
    rec.loss.per_rank.assign(cfg.r, 0.0);
    std::vector<double> item_loss(data.size(), 0.0);
    std::vector<std::size_t> item_views(data.size(), 0);
    std::size_t batches = 0;
    const EpochPlan plan = plan_epoch(cfg, data.size(), epoch);
    for (std::size_t begin = 0; begin < data.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(data.size(), begin + cfg.batch_size);
      build_batch(data, cfg, plan, begin, end, x, labels, items);
      LossBreakdown b;
      try {
        b = train_step(model, x, labels, spec, taus, rec.lr);
      } catch (const DegenerateInputError&) {
        ++rec.skipped_batches;  // no anchor in this batch has a positive
        continue;
      }
      ++batches;
      rec.loss.total += b.total;
      for (std::size_t i = 0; i < cfg.r; ++i) rec.loss.per_rank[i] += b.per_rank[i];
      rec.loss.skipped_terms += b.skipped_terms;
      rec.loss.contributing_anchors += b.contributing_anchors;
      for (std::size_t row = 0; row < items.size(); ++row) {
        item_loss[items[row]] += b.per_anchor[row];
        ++item_views[items[row]];
      }
    }
    if (batches > 0) {
      rec.loss.total /= static_cast<double>(batches);
      for (double& v : rec.loss.per_rank) v /= static_cast<double>(batches);
    }
    for (std::size_t i = 0; i < data.size(); ++i)
      if (item_views[i] > 0) item_loss[i] /= static_cast<double>(item_views[i]);
    rec.loss.per_anchor = std::move(item_loss);
    log.push_back(std::move(rec));
  }
  return log;
}

std::vector<double> fit_softmax(EncoderModel& model, const TrainingSet& data, const TrainConfig& cfg) {
  cfg.validate();
  if (model.architecture().normalize_output) throw ValidationError("softmax training needs a logit architecture");
  if (data.size() == 0) throw ValidationError("training set is empty");
  if (data.input_dim() != model.input_dim()) throw ShapeError("training inputs do not match the model input size");
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.label(i) < 0 || static_cast<std::size_t>(data.label(i)) >= model.output_dim())
      throw ValidationError("training label " + std::to_string(data.label(i)) + " has no logit");

  std::vector<double> log;
  Matrix x;
  std::vector<int> labels;
  std::vector<std::size_t> items;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);
    const EpochPlan plan = plan_epoch(cfg, data.size(), epoch);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(data.size(), begin + cfg.batch_size);
      build_batch(data, cfg, plan, begin, end, x, labels, items);
      total += softmax_train_step(model, x, labels, lr);
      ++batches;
    }
    log.push_back(total / static_cast<double>(batches));
  }
  return log;
}

EmbeddedSet embed_dataset(const EncoderModel& model, const TrainingSet& data, std::size_t batch) {
  if (batch < 1) throw ValidationError("embedding batch size must be at least 1");
  EmbeddedSet out{Matrix(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(model.output_dim())), {}};
  out.labels.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += batch) {
    const std::size_t end = std::min(data.size(), begin + batch);
    Matrix x(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(data.input_dim()));
    for (std::size_t i = begin; i < end; ++i) {
      x.row(static_cast<Eigen::Index>(i - begin)) = data.clean(i);
      out.labels.push_back(data.label(i));
    }
    out.z.middleRows(static_cast<Eigen::Index>(begin), x.rows()) = model.forward(x);
  }
  return out;
}

}  // namespace rankedcl
