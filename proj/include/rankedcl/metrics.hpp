#ifndef RANKEDCL_METRICS_HPP
#define RANKEDCL_METRICS_HPP

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rankedcl/numkernel.hpp"

namespace rankedcl {

/// Axis-aligned box in continuous pixel coordinates.
struct Box {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  std::string label;
  double score = 1.0;  ///< only meaningful for predictions

  double area() const { return (x_max - x_min) * (y_max - y_min); }
  /// Throws ValidationError unless x_min < x_max, y_min < y_max and all coordinates are finite.
  void validate() const;
};

double iou(const Box& a, const Box& b);

/// Predictions and ground truths of one image. Matching never crosses images.
struct ImageBoxes {
  std::vector<Box> preds;
  std::vector<Box> gts;
};

/// Greedy score-ordered matching at a fixed IoU threshold, 101-point
/// interpolated precision, averaged over classes present in the ground truth.
/// Result is in [0, 1]. Throws UndefinedMetricError when there is no ground truth.
double average_precision(std::span<const ImageBoxes> images, double iou_threshold);
double average_precision(std::span<const Box> preds, std::span<const Box> gts, double iou_threshold);

/// AP over IoU 0.50:0.05:0.95, AP50 and AP75, scaled by 100.
struct CocoAp {
  double ap = 0, ap50 = 0, ap75 = 0;
};
CocoAp coco_ap(std::span<const ImageBoxes> images);
CocoAp coco_ap(std::span<const Box> preds, std::span<const Box> gts);
nlohmann::json coco_ap_to_json(const CocoAp& m);

/// Row c is the L2-normalized mean of the rows labelled c. labels must lie in [0, num_classes)
/// and every class needs at least one row.
Matrix class_centroids(const Matrix& z, std::span<const int> labels, int num_classes);

/// argmax cosine similarity per row; ties go to the lowest class index.
std::vector<int> nearest_centroid_predict(const Matrix& z, const Matrix& centroids);
double nearest_centroid_accuracy(const Matrix& z, std::span<const int> labels, const Matrix& centroids);

/// −max_c h(z, centroid_c): −1 sits on a known class, +1 is antipodal to all of them.
double ood_score(const RowVector& z, const Matrix& centroids);

struct RocCurve {
  std::vector<std::pair<double, double>> points;  ///< (fpr, tpr) from (0,0) to (1,1)
  double auroc = 0.0;
};

/// Sweeps every distinct score as a threshold, treating is_ood as the positive class.
/// Tied scores step both rates together; AUROC = P(s_ood > s_in) + ½ P(s_ood = s_in).
RocCurve roc_auroc(std::span<const double> scores, std::span<const unsigned char> is_ood);

nlohmann::json roc_to_json(const RocCurve& roc);
RocCurve roc_from_json(const nlohmann::json& j);
/// "fpr,tpr" header followed by one line per point.
std::string roc_to_csv(const RocCurve& roc);

}  // namespace rankedcl

#endif  // RANKEDCL_METRICS_HPP
