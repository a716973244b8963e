#include "rankedcl/loss.hpp"

#include <map>

namespace rankedcl {

EmbeddingMatrix::EmbeddingMatrix(Matrix z) : z_(std::move(z)) {
  for (Eigen::Index i = 0; i < z_.rows(); ++i) {
    const double norm = z_.row(i).norm();
    if (!(std::abs(norm - 1.0) <= kUnitTolerance)) {
      throw DegenerateInputError("embedding row " + std::to_string(i) + " is not unit-norm (norm " +
                                 std::to_string(norm) + ")");
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::from_raw(const Matrix& raw) { return EmbeddingMatrix(l2_normalize_rows(raw)); }

nlohmann::json loss_to_json(const LossBreakdown& b) {
  return {{"total", b.total}, {"per_rank", b.per_rank}, {"per_anchor", b.per_anchor}, {"skipped", b.skipped_terms}};
}

LossBreakdown ranked_loss(const EmbeddingMatrix& z, std::span<const int> labels, const RankingSpec& spec,
                          const TemperatureSchedule& taus) {
  return detail::ranked_loss_eval(z.matrix(), labels, spec, taus, false).breakdown;
}

LossBreakdown ranked_loss(const EmbeddingMatrix& z, std::span<const std::string> labels, const RankingSpec& spec,
                          const TemperatureSchedule& taus) {
  const auto encoded = encode_labels(labels, spec);
  return ranked_loss(z, std::span<const int>(encoded), spec, taus);
}

Matrix ranked_loss_grad(const EmbeddingMatrix& z, std::span<const int> labels, const RankingSpec& spec,
                        const TemperatureSchedule& taus) {
  return detail::ranked_loss_eval(z.matrix(), labels, spec, taus, true).grad;
}

double ranked_loss_value_raw(const Matrix& z, std::span<const int> labels, const RankingSpec& spec,
                             const TemperatureSchedule& taus) {
  return detail::ranked_loss_eval(z, labels, spec, taus, false).breakdown.total;
}

Matrix ranked_loss_grad_raw(const Matrix& z, std::span<const int> labels, const RankingSpec& spec,
                            const TemperatureSchedule& taus) {
  return detail::ranked_loss_eval(z, labels, spec, taus, true).grad;
}

LossBreakdown supcon_loss(const EmbeddingMatrix& z, std::span<const int> labels, double tau) {
  const auto n = static_cast<std::size_t>(z.size());
  if (labels.size() != n) throw ShapeError("supcon_loss: one label per embedding row required");
  if (n < 2) throw DegenerateInputError("supcon_loss: batch needs at least 2 rows");
  if (!(tau > 0.0)) throw ValidationError("supcon_loss: tau must be positive");
  const Matrix sim = similarity_matrix(z);

  LossBreakdown b;
  b.per_rank.assign(1, 0.0);
  b.per_anchor.assign(n, 0.0);
  std::vector<double> logits(n);
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t k = 0; k < n; ++k) logits[k] = sim(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) / tau;
    auto others = [a](std::size_t k) { return k != a; };
    auto same = [&](std::size_t k) { return k != a && labels[k] == labels[a]; };
    bool has_pos = false;
    for (std::size_t k = 0; k < n; ++k) has_pos = has_pos || same(k);
    if (!has_pos) {
      ++b.skipped_terms;
      continue;
    }
    const double l = detail::masked_logsumexp(logits, others) - detail::masked_logsumexp(logits, same);
    b.per_anchor[a] = l;
    total += l;
    ++b.contributing_anchors;
  }
  if (b.contributing_anchors == 0) throw DegenerateInputError("supcon_loss: no anchor has a positive");
  b.total = total / static_cast<double>(b.contributing_anchors);
  b.per_rank[0] = b.total;
  return b;
}

LossBreakdown supcon_loss(const EmbeddingMatrix& z, std::span<const std::string> labels, double tau) {
  std::map<std::string, int> ids;
  std::vector<int> encoded;
  encoded.reserve(labels.size());
  for (const auto& l : labels) encoded.push_back(ids.emplace(l, static_cast<int>(ids.size())).first->second);
  return supcon_loss(z, std::span<const int>(encoded), tau);
}

GradTape::Var ranked_loss_node(GradTape& tape, GradTape::Var z, std::span<const int> labels, const RankingSpec& spec,
                               const TemperatureSchedule& taus, LossBreakdown* breakdown) {
  return tape.scalar_op(z, [&](const Matrix& value) {
    auto eval = detail::ranked_loss_eval(value, labels, spec, taus, true);
    if (breakdown) *breakdown = eval.breakdown;
    return std::pair<double, Matrix>(eval.breakdown.total, std::move(eval.grad));
  });
}

}  // namespace rankedcl
