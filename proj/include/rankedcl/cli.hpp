#ifndef RANKEDCL_CLI_HPP
#define RANKEDCL_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rankedcl/augment.hpp"
#include "rankedcl/data.hpp"
#include "rankedcl/encoder.hpp"
#include "rankedcl/ranking.hpp"

namespace rankedcl {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int check_failed = 1;
inline constexpr int usage = 2;
}  // namespace exit_code

struct SyntheticDataConfig {
  nlohmann::json tree = nlohmann::json::parse(R"([["a","b"],["c","d"],["e","f"]])");
  std::size_t per_class = 100;
  std::size_t test_per_class = 100;
  std::size_t dim = 16;
  double noise = 0.3;
  std::uint64_t seed = 0;  ///< data stays fixed when only the training seed changes
};

struct DetectionDataConfig {
  std::filesystem::path path;
  std::optional<std::filesystem::path> test_path;  ///< evaluation split; defaults to the training file
};

struct GradCheckConfig {
  std::size_t batches = 50;
  std::size_t n = 16;
  std::size_t d = 8;
  std::vector<std::size_t> depths = {1, 3, 5};
  double eps = 1e-5;
  double tolerance = 1e-4;
};

/// Everything a command needs: {"seed", "train", "augment", "data", "ranking", "withhold", "gradcheck"}.
struct RunConfig {
  TrainConfig train;
  AugmentConfig augment;
  bool augment_stats_given = false;  ///< otherwise mean/std come from the training crops
  std::variant<SyntheticDataConfig, DetectionDataConfig> data;
  std::optional<RankingSpec> ranking;
  bool r_given = false;
  std::vector<std::string> withhold;
  GradCheckConfig gradcheck;
};

/// Relative paths resolve against base_dir. Throws ValidationError on any invalid block.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Runs `rankedcl <args...>` in-process and returns its exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rankedcl

#endif  // RANKEDCL_CLI_HPP
