#ifndef RANKEDCL_LOSS_HPP
#define RANKEDCL_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rankedcl/errors.hpp"
#include "rankedcl/numkernel.hpp"
#include "rankedcl/parallel.hpp"
#include "rankedcl/ranking.hpp"
#include "rankedcl/tape.hpp"

namespace rankedcl {

/// n×d matrix whose rows are unit vectors, so cosine similarity is a dot product.
class EmbeddingMatrix {
 public:
  static constexpr double kUnitTolerance = 1e-9;

  /// Throws DegenerateInputError when a row is not unit-norm within kUnitTolerance.
  explicit EmbeddingMatrix(Matrix z);
  /// Normalizes the rows first.
  static EmbeddingMatrix from_raw(const Matrix& raw);

  const Matrix& matrix() const { return z_; }
  Eigen::Index size() const { return z_.rows(); }
  Eigen::Index dim() const { return z_.cols(); }

 private:
  Matrix z_;
};

/// Loss value decomposed by rank and by anchor.
///
/// total and per_rank are averaged over contributing anchors, so
/// total == sum(per_rank). per_anchor holds each anchor's raw sum over
/// ranks (0 for anchors that contributed nothing).
struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_rank;
  std::vector<double> per_anchor;
  std::size_t skipped_terms = 0;
  std::size_t contributing_anchors = 0;
};

nlohmann::json loss_to_json(const LossBreakdown& b);

template <typename A, typename B>
typename A::Scalar cosine_similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  return std::clamp<Scalar>(a.dot(b), Scalar(-1), Scalar(1));
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> similarity_matrix(const Eigen::MatrixBase<Derived>& z) {
  return z * z.transpose();
}

inline Matrix similarity_matrix(const EmbeddingMatrix& z) { return similarity_matrix(z.matrix()); }

namespace detail {

template <typename Scalar>
struct LossEval {
  LossBreakdown breakdown;
  RowMatrix<Scalar> grad;  // empty unless requested
};

/// log Σ exp(x_k) over the selected indices, shifted by their maximum.
template <typename Scalar, typename Pred>
Scalar masked_logsumexp(const std::vector<Scalar>& x, Pred&& keep) {
  Scalar m = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (keep(k)) m = std::max(m, x[k]);
  }
  Scalar s = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (keep(k)) s += std::exp(x[k] - m);
  }
  return m + std::log(s);
}

/// Rank-recursive contrastive loss on raw rows (no unit-norm check).
///
/// For anchor a and rank i with non-empty P_i:
///   l_i = logsumexp_{k in P_i ∪ ... ∪ P_r ∪ N} s_ak/τ_i − logsumexp_{k in P_i} s_ak/τ_i
/// where s = z zᵀ. The anchor itself never enters either sum.
template <typename Derived>
LossEval<typename Derived::Scalar> ranked_loss_eval(const Eigen::MatrixBase<Derived>& z, std::span<const int> labels,
                                                    const RankingSpec& spec, const TemperatureSchedule& taus,
                                                    bool with_grad) {
  using Scalar = typename Derived::Scalar;
  const auto n = static_cast<std::size_t>(z.rows());
  if (labels.size() != n) throw ShapeError("ranked_loss: one label per embedding row required");
  if (n < 2) throw DegenerateInputError("ranked_loss: batch needs at least 2 rows");
  if (taus.size() != spec.depth()) {
    throw ValidationError("ranked_loss: " + std::to_string(taus.size()) + " temperatures for depth " +
                          std::to_string(spec.depth()));
  }
  const int nc = static_cast<int>(spec.num_classes());
  for (int l : labels) {
    if (l < 0 || l >= nc) throw ValidationError("ranked_loss: label index " + std::to_string(l) + " is unknown");
  }

  const std::size_t r = spec.depth();
  const RowMatrix<Scalar> sim = similarity_matrix(z);
  std::vector<Scalar> terms(n * r, Scalar(0));
  std::vector<unsigned char> present(n * r, 0);
  RowMatrix<Scalar> g;
  if (with_grad) g = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));

  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> level(n);
    std::vector<Scalar> logits(n);
    for (std::size_t a = begin; a < end; ++a) {
      // Level r+1 marks a negative; the anchor gets 0 and is never selected.
      for (std::size_t k = 0; k < n; ++k) {
        const int rank = spec.rank_of(labels[a], labels[k]);
        level[k] = k == a ? 0 : (rank == 0 ? r + 1 : static_cast<std::size_t>(rank));
      }
      for (std::size_t i = 1; i <= r; ++i) {
        const bool has_pos = std::any_of(level.begin(), level.end(), [i](std::size_t v) { return v == i; });
        if (!has_pos) continue;
        const Scalar tau = static_cast<Scalar>(taus[i - 1]);
        for (std::size_t k = 0; k < n; ++k) {
          logits[k] = sim(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) / tau;
        }
        auto in_den = [&](std::size_t k) { return level[k] >= i; };
        auto in_num = [&](std::size_t k) { return level[k] == i; };
        const Scalar lse_den = masked_logsumexp(logits, in_den);
        const Scalar lse_num = masked_logsumexp(logits, in_num);
        terms[a * r + (i - 1)] = lse_den - lse_num;
        present[a * r + (i - 1)] = 1;
        if (with_grad) {
          for (std::size_t k = 0; k < n; ++k) {
            Scalar d = 0;
            if (in_den(k)) d += std::exp(logits[k] - lse_den);
            if (in_num(k)) d -= std::exp(logits[k] - lse_num);
            g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(k)) += d / tau;
          }
        }
      }
    }
  }, 16);

  LossEval<Scalar> out;
  auto& b = out.breakdown;
  b.per_rank.assign(r, 0.0);
  b.per_anchor.assign(n, 0.0);
  Scalar total = 0;
  for (std::size_t a = 0; a < n; ++a) {
    bool any = false;
    Scalar anchor_sum = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (!present[a * r + i]) {
        ++b.skipped_terms;
        continue;
      }
      any = true;
      anchor_sum += terms[a * r + i];
    }
    b.per_anchor[a] = static_cast<double>(anchor_sum);
    if (any) ++b.contributing_anchors;
    total += anchor_sum;
  }
  if (b.contributing_anchors == 0) {
    throw DegenerateInputError("ranked_loss: no anchor has a positive in any rank");
  }
  const auto n_eff = static_cast<Scalar>(b.contributing_anchors);
  for (std::size_t i = 0; i < r; ++i) {
    Scalar s = 0;
    for (std::size_t a = 0; a < n; ++a) s += terms[a * r + i];
    b.per_rank[i] = static_cast<double>(s / n_eff);
  }
  b.total = static_cast<double>(total / n_eff);
  if (with_grad) {
    g /= n_eff;
    out.grad = (g + g.transpose()) * z;
  }
  return out;
}

}  // namespace detail

/// Rank-recursive contrastive loss averaged over contributing anchors.
LossBreakdown ranked_loss(const EmbeddingMatrix& z, std::span<const int> labels, const RankingSpec& spec,
                          const TemperatureSchedule& taus);
LossBreakdown ranked_loss(const EmbeddingMatrix& z, std::span<const std::string> labels, const RankingSpec& spec,
                          const TemperatureSchedule& taus);

/// dL/dZ of ranked_loss with Z treated as free (the loss reads only Z Zᵀ).
Matrix ranked_loss_grad(const EmbeddingMatrix& z, std::span<const int> labels, const RankingSpec& spec,
                        const TemperatureSchedule& taus);

/// Same loss evaluated on rows that need not be unit-norm; used for finite differences.
double ranked_loss_value_raw(const Matrix& z, std::span<const int> labels, const RankingSpec& spec,
                             const TemperatureSchedule& taus);
Matrix ranked_loss_grad_raw(const Matrix& z, std::span<const int> labels, const RankingSpec& spec,
                            const TemperatureSchedule& taus);

/// Supervised contrastive loss: same-label rows are positives, everything else is in the denominator.
LossBreakdown supcon_loss(const EmbeddingMatrix& z, std::span<const int> labels, double tau);
LossBreakdown supcon_loss(const EmbeddingMatrix& z, std::span<const std::string> labels, double tau);

/// Records the ranked loss of z as a scalar node on the tape.
GradTape::Var ranked_loss_node(GradTape& tape, GradTape::Var z, std::span<const int> labels,
                               const RankingSpec& spec, const TemperatureSchedule& taus,
                               LossBreakdown* breakdown = nullptr);

}  // namespace rankedcl

#endif  // RANKEDCL_LOSS_HPP
