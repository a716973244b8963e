#include "rankedcl/ranking.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rankedcl/errors.hpp"

namespace rankedcl {

RankingSpec::RankingSpec(std::vector<std::string> classes, std::size_t depth, const RankLists& ranks)
    : classes_(std::move(classes)), depth_(depth) {
  if (depth_ < 1) throw ValidationError("ranking: r must be >= 1");
  if (classes_.empty()) throw ValidationError("ranking: class list is empty");
  std::set<std::string> seen;
  for (const auto& c : classes_) {
    if (!seen.insert(c).second) throw ValidationError("ranking: class '" + c + "' listed twice in classes");
  }
  for (const auto& [anchor, lists] : ranks) {
    if (!seen.count(anchor)) throw ValidationError("ranking: unknown anchor class '" + anchor + "'");
  }

  const std::size_t c = classes_.size();
  table_.assign(c * c, 0);
  ranks_.resize(c);
  for (std::size_t a = 0; a < c; ++a) {
    table_[a * c + a] = 1;
    const auto it = ranks.find(classes_[a]);
    if (it == ranks.end()) {
      if (depth_ > 1) {
        throw ValidationError("ranking: class '" + classes_[a] + "' has 0 rank entries, expected " +
                              std::to_string(depth_ - 1));
      }
      continue;
    }
    if (it->second.size() != depth_ - 1) {
      throw ValidationError("ranking: class '" + classes_[a] + "' has " + std::to_string(it->second.size()) +
                            " rank entries, expected " + std::to_string(depth_ - 1));
    }
    std::set<std::string> used;
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      const auto& set = it->second[k];
      if (set.empty()) {
        warnings_.push_back("class '" + classes_[a] + "' has an empty rank " + std::to_string(k + 2));
      }
      for (const auto& other : set) {
        if (other == classes_[a]) {
          throw ValidationError("ranking: class '" + other + "' ranks itself");
        }
        if (!seen.count(other)) {
          throw ValidationError("ranking: unknown class '" + other + "' in ranks of '" + classes_[a] + "'");
        }
        if (!used.insert(other).second) {
          throw ValidationError("ranking: class '" + other + "' appears in more than one rank of '" + classes_[a] + "'");
        }
        table_[a * c + static_cast<std::size_t>(index_of(other))] = static_cast<int>(k + 2);
      }
    }
    ranks_[a] = it->second;
  }
}

int RankingSpec::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == name) return static_cast<int>(i);
  }
  throw ValidationError("ranking: unknown class '" + std::string(name) + "'");
}

RankingSpec ranking_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("ranking: document must be an object");
  if (!j.contains("classes") || !j["classes"].is_array()) throw ValidationError("ranking: 'classes' must be an array");
  if (!j.contains("r") || !j["r"].is_number_integer()) throw ValidationError("ranking: 'r' must be an integer");
  const auto r = j["r"].get<long long>();
  if (r < 1) throw ValidationError("ranking: r must be >= 1");

  std::vector<std::string> classes;
  for (const auto& c : j["classes"]) {
    if (!c.is_string()) throw ValidationError("ranking: class names must be strings");
    classes.push_back(c.get<std::string>());
  }
  RankingSpec::RankLists lists;
  if (j.contains("ranks")) {
    const auto& ranks = j["ranks"];
    if (!ranks.is_object()) throw ValidationError("ranking: 'ranks' must be an object");
    for (const auto& [anchor, entries] : ranks.items()) {
      if (!entries.is_array()) throw ValidationError("ranking: ranks of '" + anchor + "' must be an array");
      auto& out = lists[anchor];
      for (const auto& set : entries) {
        if (!set.is_array()) throw ValidationError("ranking: each rank of '" + anchor + "' must be an array of names");
        std::vector<std::string> names;
        for (const auto& n : set) {
          if (!n.is_string()) throw ValidationError("ranking: class names must be strings");
          names.push_back(n.get<std::string>());
        }
        out.push_back(std::move(names));
      }
    }
  }
  return RankingSpec(std::move(classes), static_cast<std::size_t>(r), lists);
}

RankingSpec parse_ranking(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("ranking: malformed JSON: ") + e.what());
  }
  return ranking_from_json(j);
}

nlohmann::json ranking_to_json(const RankingSpec& spec) {
  nlohmann::json ranks = nlohmann::json::object();
  if (spec.depth() > 1) {
    for (std::size_t a = 0; a < spec.num_classes(); ++a) {
      ranks[spec.classes()[a]] = spec.ranks_for(static_cast<int>(a));
    }
  }
  return {{"classes", spec.classes()}, {"r", spec.depth()}, {"ranks", std::move(ranks)}};
}

std::string serialize_ranking(const RankingSpec& spec) { return ranking_to_json(spec).dump(2); }

RankingSpec load_ranking(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("ranking: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ranking(ss.str());
}

TemperatureSchedule::TemperatureSchedule(std::vector<double> taus) : taus_(std::move(taus)) {
  if (taus_.empty()) throw ValidationError("temperature schedule: needs at least one temperature");
  for (std::size_t i = 0; i < taus_.size(); ++i) {
    if (!std::isfinite(taus_[i]) || !(taus_[i] > 0.0)) {
      throw ValidationError("temperature schedule: tau_" + std::to_string(i + 1) + " must be positive and finite");
    }
    if (i > 0 && !(taus_[i] > taus_[i - 1])) {
      throw ValidationError("temperature schedule: taus must be strictly increasing (tau_" + std::to_string(i + 1) +
                            " <= tau_" + std::to_string(i) + ")");
    }
  }
}

TemperatureSchedule linear_temperature_schedule(double tau_min, double tau_max, std::size_t r) {
  if (r < 1) throw ValidationError("temperature schedule: r must be >= 1");
  if (!(tau_min > 0.0) || !std::isfinite(tau_min) || !std::isfinite(tau_max)) {
    throw ValidationError("temperature schedule: tau_min must be positive and finite");
  }
  if (tau_max < tau_min) throw ValidationError("temperature schedule: tau_max < tau_min");
  if (r == 1) return TemperatureSchedule({tau_min});
  if (!(tau_min < tau_max)) throw ValidationError("temperature schedule: r > 1 needs tau_min < tau_max");
  std::vector<double> taus(r);
  const double step = (tau_max - tau_min) / static_cast<double>(r - 1);
  for (std::size_t i = 0; i + 1 < r; ++i) taus[i] = tau_min + static_cast<double>(i) * step;
  taus[r - 1] = tau_max;
  return TemperatureSchedule(std::move(taus));
}

std::vector<int> encode_labels(std::span<const std::string> labels, const RankingSpec& spec) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(spec.index_of(l));
  return out;
}

BatchPartition partition_batch(std::span<const int> labels, std::size_t anchor, const RankingSpec& spec) {
  if (anchor >= labels.size()) throw ValidationError("partition_batch: anchor index out of range");
  const int nc = static_cast<int>(spec.num_classes());
  for (int l : labels) {
    if (l < 0 || l >= nc) throw ValidationError("partition_batch: label index " + std::to_string(l) + " is unknown");
  }
  BatchPartition p;
  p.positives.resize(spec.depth());
  const int a = labels[anchor];
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (k == anchor) continue;
    const int rank = spec.rank_of(a, labels[k]);
    if (rank == 0) {
      p.negatives.push_back(k);
    } else {
      p.positives[static_cast<std::size_t>(rank - 1)].push_back(k);
    }
  }
  return p;
}

BatchPartition partition_batch(std::span<const std::string> labels, std::size_t anchor, const RankingSpec& spec) {
  const auto encoded = encode_labels(labels, spec);
  return partition_batch(std::span<const int>(encoded), anchor, spec);
}

}  // namespace rankedcl
