#ifndef RANKEDCL_DATA_HPP
#define RANKEDCL_DATA_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rankedcl/augment.hpp"
#include "rankedcl/metrics.hpp"
#include "rankedcl/numkernel.hpp"
#include "rankedcl/ranking.hpp"
#include "rankedcl/rng.hpp"

namespace rankedcl {

/// Either a path (relative to the dataset file) or an inline raster.
struct ImageRef {
  std::string path;
  std::optional<RasterImage> inline_image;
};

struct DetectionItem {
  ImageRef image;
  std::vector<Box> gt;
  std::vector<Box> pred;
};

/// VOC-like annotations: classes plus per-image ground-truth and predicted boxes.
struct DetectionDataset {
  std::vector<std::string> classes;
  std::vector<DetectionItem> items;
  std::filesystem::path base_dir;  ///< directory that relative image paths resolve against
};

/// Parses and validates; schema errors carry a JSON-pointer location.
/// With check_files, every referenced image path must exist under base_dir.
DetectionDataset dataset_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                   bool check_files = true);
nlohmann::json dataset_to_json(const DetectionDataset& ds);
DetectionDataset load_dataset(const std::filesystem::path& path);
/// Canonical form: two-space indented JSON with a trailing newline.
void save_dataset(const DetectionDataset& ds, const std::filesystem::path& path);

RasterImage load_item_image(const DetectionDataset& ds, const DetectionItem& item);

/// Pixel crops of each box after snapping to the grid (floor mins, ceil maxes).
/// Boxes partly outside are clipped and reported in warnings; boxes fully outside throw.
std::vector<RasterImage> crop_boxes(const RasterImage& img, std::span<const Box> boxes,
                                    std::vector<std::string>* warnings = nullptr);

/// Rooted tree over class names; classes sharing a deeper ancestor are more similar.
///
/// JSON form is nested arrays with strings at the leaves, e.g. [["a","b"],["c","d"]].
class SimilarityTree {
 public:
  static SimilarityTree from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  /// Leaf names in depth-first order.
  const std::vector<std::string>& classes() const { return leaves_; }
  std::size_t node_count() const { return parent_.size(); }
  /// Node ids from the root down to the leaf of class c.
  std::vector<std::size_t> root_path(std::size_t c) const;
  /// Edge count of the path joining two leaves.
  std::size_t distance(std::size_t a, std::size_t b) const;

 private:
  std::size_t add_node(std::optional<std::size_t> parent);
  void build(const nlohmann::json& j, std::optional<std::size_t> parent, const std::string& where);

  std::vector<std::optional<std::size_t>> parent_;
  std::vector<std::size_t> depth_;
  std::vector<std::size_t> leaf_node_;
  std::vector<std::string> leaves_;
};

/// Row-per-sample vectors with integer labels into `classes`.
struct LabeledVectors {
  Matrix x;
  std::vector<int> labels;
  std::vector<std::string> classes;
  std::vector<std::size_t> ids;  ///< stable item identity, preserved by splits

  std::size_t size() const { return labels.size(); }
};

/// Class means are the normalized sums of orthonormal per-node directions along
/// each root path; samples add N(0, noise²) per coordinate and are re-normalized.
/// Samples are grouped by class in tree order.
LabeledVectors synth_hierarchical(const SimilarityTree& tree, std::size_t per_class, std::size_t dim, double noise,
                                  Rng& rng, Matrix* class_means = nullptr);

/// (in-distribution, withheld). Labels and class list are kept as-is in both halves.
std::pair<LabeledVectors, LabeledVectors> holdout_split(const LabeledVectors& ds,
                                                        std::span<const std::string> withheld);
/// First `first_per_class` items of every class (in dataset order), then the rest.
std::pair<LabeledVectors, LabeledVectors> stratified_split(const LabeledVectors& ds, std::size_t first_per_class);
/// Items with any ground-truth box of a withheld class go to the second half.
std::pair<DetectionDataset, DetectionDataset> holdout_split(const DetectionDataset& ds,
                                                            std::span<const std::string> withheld);

/// Rank i of a class lists the classes at its (i-1)-th smallest tree distance.
RankingSpec ranking_from_tree(const SimilarityTree& tree, std::size_t r);

}  // namespace rankedcl

#endif  // RANKEDCL_DATA_HPP
