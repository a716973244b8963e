#include "rankedcl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rankedcl/errors.hpp"

namespace rankedcl {
namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
  throw ValidationError("dataset " + (where.empty() ? std::string("/") : where) + ": " + what);
}

Box parse_box(const nlohmann::json& j, const std::string& where, const std::set<std::string>& classes, bool scored) {
  if (!j.is_object()) schema_error(where, "expected an object");
  if (!j.contains("box") || !j["box"].is_array() || j["box"].size() != 4) {
    schema_error(where + "/box", "expected [x0, y0, x1, y1]");
  }
  for (std::size_t k = 0; k < 4; ++k) {
    if (!j["box"][k].is_number()) schema_error(where + "/box/" + std::to_string(k), "expected a number");
  }
  if (!j.contains("class") || !j["class"].is_string()) schema_error(where + "/class", "expected a class name");
  Box b{j["box"][0].get<double>(), j["box"][1].get<double>(), j["box"][2].get<double>(), j["box"][3].get<double>(),
        j["class"].get<std::string>(), 1.0};
  if (!classes.count(b.label)) schema_error(where + "/class", "unknown class '" + b.label + "'");
  if (scored) {
    if (!j.contains("score") || !j["score"].is_number()) schema_error(where + "/score", "expected a number");
    b.score = j["score"].get<double>();
  }
  try {
    b.validate();
  } catch (const ValidationError& e) {
    schema_error(where + "/box", e.what());
  }
  return b;
}

nlohmann::json box_to_json(const Box& b, bool scored) {
  nlohmann::json j = {{"box", {b.x_min, b.y_min, b.x_max, b.y_max}}, {"class", b.label}};
  if (scored) j["score"] = b.score;
  return j;
}

}  // namespace

DetectionDataset dataset_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir, bool check_files) {
  if (!j.is_object()) schema_error("", "expected an object");
  if (!j.contains("classes") || !j["classes"].is_array()) schema_error("/classes", "expected an array of names");
  DetectionDataset ds;
  ds.base_dir = base_dir;
  std::set<std::string> known;
  for (std::size_t k = 0; k < j["classes"].size(); ++k) {
    const auto& c = j["classes"][k];
    if (!c.is_string()) schema_error("/classes/" + std::to_string(k), "expected a string");
    if (!known.insert(c.get<std::string>()).second) schema_error("/classes/" + std::to_string(k), "duplicate class");
    ds.classes.push_back(c.get<std::string>());
  }
  if (!j.contains("items") || !j["items"].is_array()) schema_error("/items", "expected an array");
  for (std::size_t i = 0; i < j["items"].size(); ++i) {
    const std::string where = "/items/" + std::to_string(i);
    const auto& it = j["items"][i];
    if (!it.is_object()) schema_error(where, "expected an object");
    DetectionItem item;
    if (!it.contains("image")) schema_error(where + "/image", "missing");
    const auto& img = it["image"];
    if (img.is_string()) {
      item.image.path = img.get<std::string>();
      if (check_files && !std::filesystem::exists(base_dir / item.image.path)) {
        throw ValidationError("dataset " + where + "/image: missing image file '" + (base_dir / item.image.path).string() + "'");
      }
    } else if (img.is_object()) {
      try {
        item.image.inline_image = image_from_json(img);
      } catch (const ValidationError& e) {
        schema_error(where + "/image", e.what());
      }
    } else {
      schema_error(where + "/image", "expected a path or an inline image");
    }
    for (const char* key : {"gt", "pred"}) {
      if (!it.contains(key)) continue;
      if (!it[key].is_array()) schema_error(where + "/" + key, "expected an array");
      const bool scored = std::string(key) == "pred";
      auto& dst = scored ? item.pred : item.gt;
      for (std::size_t b = 0; b < it[key].size(); ++b) {
        dst.push_back(parse_box(it[key][b], where + "/" + key + "/" + std::to_string(b), known, scored));
      }
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

nlohmann::json dataset_to_json(const DetectionDataset& ds) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& item : ds.items) {
    nlohmann::json gt = nlohmann::json::array(), pred = nlohmann::json::array();
    for (const auto& b : item.gt) gt.push_back(box_to_json(b, false));
    for (const auto& b : item.pred) pred.push_back(box_to_json(b, true));
    nlohmann::json img = item.image.inline_image ? image_to_json(*item.image.inline_image) : nlohmann::json(item.image.path);
    items.push_back({{"image", std::move(img)}, {"gt", std::move(gt)}, {"pred", std::move(pred)}});
  }
  return {{"classes", ds.classes}, {"items", std::move(items)}};
}

DetectionDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("dataset: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("dataset: malformed JSON in '" + path.string() + "': " + e.what());
  }
  return dataset_from_json(j, path.parent_path());
}

void save_dataset(const DetectionDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("dataset: cannot write '" + path.string() + "'");
  out << dataset_to_json(ds).dump(2) << '\n';
}

RasterImage load_item_image(const DetectionDataset& ds, const DetectionItem& item) {
  if (item.image.inline_image) return *item.image.inline_image;
  return read_ppm((ds.base_dir / item.image.path).string());
}

std::vector<RasterImage> crop_boxes(const RasterImage& img, std::span<const Box> boxes, std::vector<std::string>* warnings) {
  std::vector<RasterImage> out;
  out.reserve(boxes.size());
  const auto w = static_cast<double>(img.width);
  const auto h = static_cast<double>(img.height);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Box& b = boxes[k];
    b.validate();
    double x0 = std::floor(b.x_min), y0 = std::floor(b.y_min);
    double x1 = std::ceil(b.x_max), y1 = std::ceil(b.y_max);
    if (x0 >= w || y0 >= h || x1 <= 0 || y1 <= 0) {
      throw ValidationError("crop_boxes: box " + std::to_string(k) + " lies outside the image");
    }
    if (x0 < 0 || y0 < 0 || x1 > w || y1 > h) {
      if (warnings) warnings->push_back("crop_boxes: box " + std::to_string(k) + " clipped to image bounds");
      x0 = std::max(x0, 0.0);
      y0 = std::max(y0, 0.0);
      x1 = std::min(x1, w);
      y1 = std::min(y1, h);
    }
    out.push_back(crop(img, static_cast<std::size_t>(y0), static_cast<std::size_t>(x0), static_cast<std::size_t>(y1 - y0),
                       static_cast<std::size_t>(x1 - x0)));
  }
  return out;
}

std::size_t SimilarityTree::add_node(std::optional<std::size_t> parent) {
  parent_.push_back(parent);
  depth_.push_back(parent ? depth_[*parent] + 1 : 0);
  return parent_.size() - 1;
}

void SimilarityTree::build(const nlohmann::json& j, std::optional<std::size_t> parent, const std::string& where) {
  const std::size_t id = add_node(parent);
  if (j.is_string()) {
    if (!parent) throw ValidationError("tree: root must be an array");
    const auto name = j.get<std::string>();
    if (std::find(leaves_.begin(), leaves_.end(), name) != leaves_.end()) {
      throw ValidationError("tree: class '" + name + "' appears twice");
    }
    leaves_.push_back(name);
    leaf_node_.push_back(id);
    return;
  }
  if (!j.is_array() || j.empty()) throw ValidationError("tree " + where + ": expected a class name or a non-empty array");
  for (std::size_t k = 0; k < j.size(); ++k) build(j[k], id, where + "/" + std::to_string(k));
}

SimilarityTree SimilarityTree::from_json(const nlohmann::json& j) {
  SimilarityTree t;
  t.build(j, std::nullopt, "");
  return t;
}

nlohmann::json SimilarityTree::to_json() const {
  std::vector<nlohmann::json> nodes(parent_.size(), nlohmann::json::array());
  for (std::size_t c = 0; c < leaves_.size(); ++c) nodes[leaf_node_[c]] = leaves_[c];
  // Children always have larger ids than their parent, so fold bottom-up.
  std::vector<std::vector<std::size_t>> children(parent_.size());
  for (std::size_t id = 1; id < parent_.size(); ++id) children[*parent_[id]].push_back(id);
  for (std::size_t id = parent_.size(); id-- > 0;) {
    if (children[id].empty()) continue;
    nlohmann::json arr = nlohmann::json::array();
    for (auto ch : children[id]) arr.push_back(nodes[ch]);
    nodes[id] = std::move(arr);
  }
  return nodes[0];
}

std::vector<std::size_t> SimilarityTree::root_path(std::size_t c) const {
  std::vector<std::size_t> path;
  for (std::optional<std::size_t> n = leaf_node_.at(c); n; n = parent_[*n]) path.push_back(*n);
  std::reverse(path.begin(), path.end());
  return path;
}

std::size_t SimilarityTree::distance(std::size_t a, std::size_t b) const {
  const auto pa = root_path(a);
  const auto pb = root_path(b);
  std::size_t shared = 0;
  while (shared < pa.size() && shared < pb.size() && pa[shared] == pb[shared]) ++shared;
  return (pa.size() - shared) + (pb.size() - shared);
}

LabeledVectors synth_hierarchical(const SimilarityTree& tree, std::size_t per_class, std::size_t dim, double noise,
                                  Rng& rng, Matrix* class_means) {
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("synth_hierarchical: noise must be >= 0");
  if (dim < tree.node_count()) {
    throw ValidationError("synth_hierarchical: dim " + std::to_string(dim) + " is smaller than the " +
                          std::to_string(tree.node_count()) + " tree nodes");
  }
  const auto d = static_cast<Eigen::Index>(dim);
  Rng basis_rng = rng.split(0);
  Matrix gauss(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) gauss(i, j) = basis_rng.normal();
  const Matrix basis = Eigen::HouseholderQR<Matrix>(gauss).householderQ();  // columns are orthonormal directions

  const std::size_t nc = tree.classes().size();
  Matrix means = Matrix::Zero(static_cast<Eigen::Index>(nc), d);
  for (std::size_t c = 0; c < nc; ++c) {
    for (auto node : tree.root_path(c)) means.row(static_cast<Eigen::Index>(c)) += basis.col(static_cast<Eigen::Index>(node)).transpose();
  }
  means = l2_normalize_rows(means);

  // Shared ancestry must order the mean similarities.
  for (std::size_t a = 0; a < nc; ++a) {
    for (std::size_t b = 0; b < nc; ++b) {
      for (std::size_t c = 0; c < nc; ++c) {
        if (a == b || a == c || tree.distance(a, b) >= tree.distance(a, c)) continue;
        const auto ia = static_cast<Eigen::Index>(a);
        if (!(means.row(ia).dot(means.row(static_cast<Eigen::Index>(b))) > means.row(ia).dot(means.row(static_cast<Eigen::Index>(c))))) {
          throw ValidationError("synth_hierarchical: tree shape breaks similarity ordering for '" + tree.classes()[a] + "'");
        }
      }
    }
  }

  LabeledVectors out;
  out.classes = tree.classes();
  out.x.resize(static_cast<Eigen::Index>(nc * per_class), d);
  Rng sample_rng = rng.split(1);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      const auto row = static_cast<Eigen::Index>(c * per_class + s);
      out.x.row(row) = means.row(static_cast<Eigen::Index>(c));
      if (noise > 0.0) {
        for (Eigen::Index k = 0; k < d; ++k) out.x(row, k) += noise * sample_rng.normal();
        out.x.row(row).normalize();
      }
      out.labels.push_back(static_cast<int>(c));
      out.ids.push_back(static_cast<std::size_t>(row));
    }
  }
  if (class_means) *class_means = means;
  return out;
}

namespace {

std::set<std::string> withheld_set(std::span<const std::string> withheld, const std::vector<std::string>& classes) {
  std::set<std::string> out;
  for (const auto& w : withheld) {
    if (std::find(classes.begin(), classes.end(), w) == classes.end()) {
      throw ValidationError("holdout_split: unknown class '" + w + "'");
    }
    out.insert(w);
  }
  return out;
}

}  // namespace

namespace {

LabeledVectors select_rows(const LabeledVectors& ds, const std::vector<Eigen::Index>& rows) {
  LabeledVectors dst;
  dst.classes = ds.classes;
  dst.x.resize(static_cast<Eigen::Index>(rows.size()), ds.x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    dst.x.row(static_cast<Eigen::Index>(k)) = ds.x.row(rows[k]);
    dst.labels.push_back(ds.labels[static_cast<std::size_t>(rows[k])]);
    dst.ids.push_back(ds.ids[static_cast<std::size_t>(rows[k])]);
  }
  return dst;
}

}  // namespace

std::pair<LabeledVectors, LabeledVectors> holdout_split(const LabeledVectors& ds, std::span<const std::string> withheld) {
  const auto held = withheld_set(withheld, ds.classes);
  std::vector<Eigen::Index> in_rows, out_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool is_held = held.count(ds.classes[static_cast<std::size_t>(ds.labels[i])]) > 0;
    (is_held ? out_rows : in_rows).push_back(static_cast<Eigen::Index>(i));
  }
  return {select_rows(ds, in_rows), select_rows(ds, out_rows)};
}

std::pair<LabeledVectors, LabeledVectors> stratified_split(const LabeledVectors& ds, std::size_t first_per_class) {
  std::vector<std::size_t> seen(ds.classes.size(), 0);
  std::vector<Eigen::Index> first, rest;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    (seen.at(c)++ < first_per_class ? first : rest).push_back(static_cast<Eigen::Index>(i));
  }
  return {select_rows(ds, first), select_rows(ds, rest)};
}

std::pair<DetectionDataset, DetectionDataset> holdout_split(const DetectionDataset& ds,
                                                            std::span<const std::string> withheld) {
  const auto held = withheld_set(withheld, ds.classes);
  DetectionDataset in, out;
  in.classes = out.classes = ds.classes;
  in.base_dir = out.base_dir = ds.base_dir;
  for (const auto& item : ds.items) {
    const bool is_held = std::any_of(item.gt.begin(), item.gt.end(), [&](const Box& b) { return held.count(b.label) > 0; });
    (is_held ? out : in).items.push_back(item);
  }
  return {std::move(in), std::move(out)};
}

RankingSpec ranking_from_tree(const SimilarityTree& tree, std::size_t r) {
  if (r < 1) throw ValidationError("ranking_from_tree: r must be >= 1");
  const auto& names = tree.classes();
  RankingSpec::RankLists lists;
  if (r > 1) {
    for (std::size_t a = 0; a < names.size(); ++a) {
      std::map<std::size_t, std::vector<std::string>> by_distance;
      for (std::size_t b = 0; b < names.size(); ++b) {
        if (b != a) by_distance[tree.distance(a, b)].push_back(names[b]);
      }
      if (by_distance.size() < r - 1) {
        throw ValidationError("ranking_from_tree: r = " + std::to_string(r) + " exceeds the " +
                              std::to_string(by_distance.size() + 1) + " similarity levels of '" + names[a] + "'");
      }
      auto& ranks = lists[names[a]];
      for (auto it = by_distance.begin(); ranks.size() < r - 1; ++it) ranks.push_back(it->second);
    }
  }
  return RankingSpec(names, r, lists);
}

}  // namespace rankedcl
