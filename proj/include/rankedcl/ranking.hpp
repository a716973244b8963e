#ifndef RANKEDCL_RANKING_HPP
#define RANKEDCL_RANKING_HPP

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rankedcl {

/// User-provided class-similarity ranking of depth r.
///
/// Rank 1 of every anchor class is the class itself. Ranks 2..r hold
/// disjoint class-sets in decreasing order of similarity; every class not
/// mentioned is a negative. Immutable once constructed.
class RankingSpec {
 public:
  using RankLists = std::map<std::string, std::vector<std::vector<std::string>>>;

  /// Validates every invariant; throws ValidationError naming the offending class.
  RankingSpec(std::vector<std::string> classes, std::size_t depth, const RankLists& ranks);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t num_classes() const { return classes_.size(); }
  std::size_t depth() const { return depth_; }

  /// Index of a class name; throws ValidationError for unknown names.
  int index_of(std::string_view name) const;

  /// 1..depth when `other` sits in that rank of `anchor`, 0 when it is a negative.
  int rank_of(int anchor, int other) const {
    return table_[static_cast<std::size_t>(anchor) * classes_.size() + static_cast<std::size_t>(other)];
  }

  /// Rank 2..r class-sets of an anchor class, in order.
  const std::vector<std::vector<std::string>>& ranks_for(int anchor) const {
    return ranks_[static_cast<std::size_t>(anchor)];
  }

  /// Non-fatal findings from validation (empty rank-sets).
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<std::string> classes_;
  std::size_t depth_;
  std::vector<std::vector<std::vector<std::string>>> ranks_;
  std::vector<int> table_;
  std::vector<std::string> warnings_;
};

RankingSpec parse_ranking(std::string_view json_text);
RankingSpec ranking_from_json(const nlohmann::json& j);
nlohmann::json ranking_to_json(const RankingSpec& spec);
std::string serialize_ranking(const RankingSpec& spec);
RankingSpec load_ranking(const std::string& path);

/// Per-rank softmax temperatures, strictly increasing and positive.
class TemperatureSchedule {
 public:
  explicit TemperatureSchedule(std::vector<double> taus);

  std::size_t size() const { return taus_.size(); }
  double operator[](std::size_t i) const { return taus_[i]; }
  const std::vector<double>& taus() const { return taus_; }

 private:
  std::vector<double> taus_;
};

/// r temperatures evenly spaced on [tau_min, tau_max]; r = 1 yields {tau_min}.
TemperatureSchedule linear_temperature_schedule(double tau_min, double tau_max, std::size_t r);

/// Membership of every non-anchor batch index for one anchor.
struct BatchPartition {
  std::vector<std::vector<std::size_t>> positives;  ///< P_1..P_r
  std::vector<std::size_t> negatives;               ///< N
};

std::vector<int> encode_labels(std::span<const std::string> labels, const RankingSpec& spec);

BatchPartition partition_batch(std::span<const int> labels, std::size_t anchor, const RankingSpec& spec);
BatchPartition partition_batch(std::span<const std::string> labels, std::size_t anchor, const RankingSpec& spec);

}  // namespace rankedcl

#endif  // RANKEDCL_RANKING_HPP
