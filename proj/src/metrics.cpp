#include "rankedcl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "rankedcl/errors.hpp"

namespace rankedcl {

void Box::validate() const {
  for (double v : {x_min, y_min, x_max, y_max}) {
    if (!std::isfinite(v)) throw ValidationError("box: non-finite coordinate");
  }
  if (!(x_min < x_max)) throw ValidationError("box: x_min must be < x_max");
  if (!(y_min < y_max)) throw ValidationError("box: y_min must be < y_max");
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double ih = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

struct Detection {
  double score;
  std::size_t image;
  std::size_t index;
};

double class_ap(std::span<const ImageBoxes> images, const std::string& label, double threshold) {
  std::vector<std::vector<std::size_t>> gt_idx(images.size());
  std::size_t n_gt = 0;
  std::vector<Detection> dets;
  for (std::size_t im = 0; im < images.size(); ++im) {
    for (std::size_t k = 0; k < images[im].gts.size(); ++k) {
      if (images[im].gts[k].label == label) {
        gt_idx[im].push_back(k);
        ++n_gt;
      }
    }
    for (std::size_t k = 0; k < images[im].preds.size(); ++k) {
      if (images[im].preds[k].label == label) dets.push_back({images[im].preds[k].score, im, k});
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> matched(images.size());
  for (std::size_t im = 0; im < images.size(); ++im) matched[im].assign(gt_idx[im].size(), false);

  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    const auto& det = dets[d];
    const Box& pred = images[det.image].preds[det.index];
    double best = -1.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < gt_idx[det.image].size(); ++k) {
      if (matched[det.image][k]) continue;
      const double o = iou(pred, images[det.image].gts[gt_idx[det.image][k]]);
      if (o > best) {
        best = o;
        best_k = k;
      }
    }
    if (best >= threshold) {
      matched[det.image][best_k] = true;
      ++tp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(d + 1));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0.0;
  for (int step = 0; step <= 100; ++step) {
    const double t = static_cast<double>(step) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), t);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

}  // namespace

double average_precision(std::span<const ImageBoxes> images, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ValidationError("average_precision: threshold must be in (0,1]");
  std::set<std::string> labels;
  for (const auto& im : images) {
    for (const auto& b : im.gts) {
      b.validate();
      labels.insert(b.label);
    }
    for (const auto& b : im.preds) b.validate();
  }
  if (labels.empty()) throw UndefinedMetricError("average_precision: no ground-truth boxes");
  double total = 0.0;
  for (const auto& label : labels) total += class_ap(images, label, iou_threshold);
  return total / static_cast<double>(labels.size());
}

double average_precision(std::span<const Box> preds, std::span<const Box> gts, double iou_threshold) {
  const ImageBoxes one{{preds.begin(), preds.end()}, {gts.begin(), gts.end()}};
  return average_precision(std::span<const ImageBoxes>(&one, 1), iou_threshold);
}

CocoAp coco_ap(std::span<const ImageBoxes> images) {
  CocoAp m;
  double sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double t = static_cast<double>(50 + 5 * k) / 100.0;
    const double ap = average_precision(images, t);
    sum += ap;
    if (k == 0) m.ap50 = 100.0 * ap;
    if (k == 5) m.ap75 = 100.0 * ap;
  }
  m.ap = 100.0 * sum / 10.0;
  return m;
}

CocoAp coco_ap(std::span<const Box> preds, std::span<const Box> gts) {
  const ImageBoxes one{{preds.begin(), preds.end()}, {gts.begin(), gts.end()}};
  return coco_ap(std::span<const ImageBoxes>(&one, 1));
}

nlohmann::json coco_ap_to_json(const CocoAp& m) { return {{"ap", m.ap}, {"ap50", m.ap50}, {"ap75", m.ap75}}; }

Matrix class_centroids(const Matrix& z, std::span<const int> labels, int num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) throw ShapeError("class_centroids: one label per row required");
  Matrix sums = Matrix::Zero(num_classes, z.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || l >= num_classes) throw ValidationError("class_centroids: label out of range");
    sums.row(l) += z.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(l)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw ValidationError("class_centroids: class " + std::to_string(c) + " has no samples");
    }
    const double norm = sums.row(c).norm();
    if (!(norm > 1e-12)) throw DegenerateInputError("class_centroids: class " + std::to_string(c) + " has a zero-norm mean");
    sums.row(c) /= norm;
  }
  return sums;
}

std::vector<int> nearest_centroid_predict(const Matrix& z, const Matrix& centroids) {
  if (centroids.rows() == 0) throw ValidationError("nearest_centroid: no centroids");
  if (z.cols() != centroids.cols()) throw ShapeError("nearest_centroid: dimension mismatch");
  const Matrix sim = z * centroids.transpose();
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < sim.cols(); ++c) {
      if (sim(i, c) > sim(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double nearest_centroid_accuracy(const Matrix& z, std::span<const int> labels, const Matrix& centroids) {
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) throw ShapeError("nearest_centroid: one label per row required");
  if (labels.empty()) throw UndefinedMetricError("nearest_centroid: no samples");
  const auto pred = nearest_centroid_predict(z, centroids);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double ood_score(const RowVector& z, const Matrix& centroids) {
  if (centroids.rows() == 0) throw ValidationError("ood_score: no centroids");
  if (z.cols() != centroids.cols()) throw ShapeError("ood_score: dimension mismatch");
  double best = -1.0;
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    best = std::max(best, std::clamp(z.dot(centroids.row(c)), -1.0, 1.0));
  }
  return -best;
}

RocCurve roc_auroc(std::span<const double> scores, std::span<const unsigned char> is_ood) {
  if (scores.size() != is_ood.size()) throw ShapeError("roc_auroc: scores and flags differ in length");
  std::uint64_t n_pos = 0;
  for (auto f : is_ood) n_pos += f ? 1 : 0;
  const std::uint64_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("roc_auroc: need both OOD and in-distribution samples");
  for (double s : scores) {
    if (std::isnan(s)) throw ValidationError("roc_auroc: NaN score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.emplace_back(0.0, 0.0);
  std::uint64_t tp = 0, fp = 0;
  // Twice the area in units of one (pos, neg) pair, kept integral so the result is exact.
  std::uint64_t twice_area = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::uint64_t dtp = 0, dfp = 0;
    const double s = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == s; ++k) (is_ood[order[k]] ? dtp : dfp) += 1;
    twice_area += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    roc.points.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos));
  }
  roc.auroc = static_cast<double>(twice_area) / static_cast<double>(2 * n_pos * n_neg);
  return roc;
}

nlohmann::json roc_to_json(const RocCurve& roc) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& [f, t] : roc.points) pts.push_back({f, t});
  return {{"auroc", roc.auroc}, {"roc", std::move(pts)}};
}

RocCurve roc_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("auroc") || !j.contains("roc") || !j["roc"].is_array()) {
    throw ValidationError("roc json: expected {\"auroc\": f, \"roc\": [[fpr, tpr], ...]}");
  }
  RocCurve roc;
  roc.auroc = j["auroc"].get<double>();
  for (const auto& p : j["roc"]) {
    if (!p.is_array() || p.size() != 2) throw ValidationError("roc json: each point must be [fpr, tpr]");
    roc.points.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return roc;
}

std::string roc_to_csv(const RocCurve& roc) {
  std::ostringstream out;
  out << "fpr,tpr\n";
  for (const auto& [f, t] : roc.points) out << format_double(f) << ',' << format_double(t) << '\n';
  return out.str();
}

}  // namespace rankedcl
