// Acceptance suite: one PASS/FAIL line per criterion; exit status 0 iff all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "loss_oracle.hpp"
#include "metric_oracles.hpp"
#include "rankedcl/augment.hpp"
#include "rankedcl/cli.hpp"
#include "rankedcl/data.hpp"
#include "rankedcl/encoder.hpp"
#include "rankedcl/errors.hpp"
#include "rankedcl/loss.hpp"
#include "rankedcl/metrics.hpp"
#include "rankedcl/parallel.hpp"
#include "test_util.hpp"

using namespace rankedcl;
using namespace rankedcl::testing;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kFixtures = RANKEDCL_FIXTURE_DIR;
const char* kTree = R"([["a","b"],["c","d"],["e","f"]])";

struct Verdict {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::vector<int> labels_with_positive(Rng& rng, std::size_t n, int classes) {
  auto labels = random_labels(rng, n, classes);
  labels[1] = labels[0];
  return labels;
}

// ---------------------------------------------------------------------------
Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  Rng root(101);
  double worst_loss = 0.0, worst_encoder = 0.0;
  std::size_t batches = 0;
  for (std::size_t r : {1u, 3u, 5u}) {
    const auto taus = linear_temperature_schedule(0.1, 0.6, r);
    for (int b = 0; b < 50; ++b) {
      const RankingSpec spec = cyclic_ranking(8, r, b % 2 == 1);
      Rng rng = root.split(r * 1000 + static_cast<std::uint64_t>(b));
      const Matrix z = random_unit_rows(rng, 16, 8);
      const auto labels = labels_with_positive(rng, 16, 8);
      const Matrix analytic = ranked_loss_grad(EmbeddingMatrix(z), labels, spec, taus);
      const Matrix numeric =
          finite_diff_grad([&](const Matrix& m) { return ranked_loss_value_raw(m, labels, spec, taus); }, z, 1e-5);
      worst_loss = std::max(worst_loss, max_relative_error(analytic, numeric));
      ++batches;
    }
    Rng rng = root.split(99 + r);
    const EncoderModel model(contrastive_architecture(8, 16, 4), 7 + r);
    const Matrix x = random_matrix(rng, 4, 8);
    const std::vector<int> labels = {0, 0, 1, 2};
    worst_encoder = std::max(worst_encoder, encoder_grad_check(model, x, labels, cyclic_ranking(8, r), taus, 1e-5));
  }
  const double secs = seconds_since(t0);
  return {worst_loss < 1e-4 && worst_encoder < 1e-4 && secs < 30.0,
          std::to_string(batches) + " batches (n=16, d=8, r in {1,3,5}) max rel err " + fmt(worst_loss) +
              "; encoder end-to-end " + fmt(worst_encoder) + "; " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
Verdict supcon_reduction() {
  Rng root(202);
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    Rng rng = root.split(static_cast<std::uint64_t>(b));
    const auto n = static_cast<Eigen::Index>(4 + rng.uniform_index(29));
    const auto d = static_cast<Eigen::Index>(2 + rng.uniform_index(15));
    const int classes = 2 + static_cast<int>(rng.uniform_index(5));
    const double tau = rng.uniform(0.05, 1.0);
    const RankingSpec spec = cyclic_ranking(classes, 1);
    const EmbeddingMatrix z(random_unit_rows(rng, n, d));
    const auto labels = labels_with_positive(rng, static_cast<std::size_t>(n), classes);
    const double ranked = ranked_loss(z, labels, spec, TemperatureSchedule({tau})).total;
    const double supcon = supcon_loss(z, labels, tau).total;
    worst = std::max(worst, std::abs(ranked - supcon));
  }
  return {worst <= 1e-10, "100 batches, max |ranked(r=1) - supcon| = " + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
Verdict oracle_equivalence() {
  Rng root(303);
  double worst = 0.0;
  int with_skips = 0;
  for (int b = 0; b < 100; ++b) {
    Rng rng = root.split(static_cast<std::uint64_t>(b));
    const std::size_t r = 1 + rng.uniform_index(5);
    const int classes = 6 + static_cast<int>(rng.uniform_index(3));
    const RankingSpec spec = cyclic_ranking(classes, r, b % 2 == 0);
    const auto taus = linear_temperature_schedule(0.1, 0.6, r);
    const auto n = static_cast<Eigen::Index>(6 + rng.uniform_index(19));
    const Matrix z = random_unit_rows(rng, n, 3 + static_cast<Eigen::Index>(rng.uniform_index(6)));
    const auto labels = labels_with_positive(rng, static_cast<std::size_t>(n), classes);
    const auto fast = ranked_loss(EmbeddingMatrix(z), labels, spec, taus);
    const long double naive = naive_ranked_loss(z, labels, spec, taus.taus());
    worst = std::max(worst, static_cast<double>(std::fabs(static_cast<long double>(fast.total) - naive)));
    with_skips += fast.skipped_terms > 0;
  }
  return {worst <= 1e-10 && with_skips > 0, "100 batches (" + std::to_string(with_skips) +
                                                " with empty ranks), max |fast - naive| = " + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// Shared synthetic benchmark for the ordering and comparative criteria.
struct Benchmark {
  SimilarityTree tree = SimilarityTree::from_json(json::parse(kTree));
  LabeledVectors train, test;

  Benchmark() {
    Rng rng(0);
    auto [tr, te] = stratified_split(synth_hierarchical(tree, 200, 16, 0.3, rng), 100);
    train = std::move(tr);
    test = std::move(te);
  }
};

struct Trained {
  EncoderModel model;
  double seconds;
};

Trained train_ranked(const Benchmark& bm, std::size_t r) {
  TrainConfig cfg;  // batch 32, 200 epochs, tau in [0.1, 0.6], lr 0.5
  cfg.r = r;
  const auto t0 = Clock::now();
  EncoderModel model(contrastive_architecture(16, cfg.hidden, cfg.embed_dim), 1);
  fit(model, VectorTrainingSet(bm.train, cfg.view_noise), cfg, ranking_from_tree(bm.tree, r));
  return {std::move(model), seconds_since(t0)};
}

double centroid_accuracy(const Benchmark& bm, const EncoderModel& model) {
  const auto train = embed_dataset(model, VectorTrainingSet(bm.train, 0.0));
  const auto test = embed_dataset(model, VectorTrainingSet(bm.test, 0.0));
  const Matrix centroids = class_centroids(train.z, train.labels, 6);
  return nearest_centroid_accuracy(test.z, test.labels, centroids);
}

Verdict ordering_recovery(const Benchmark& bm, const Trained& run) {
  const RankingSpec spec = ranking_from_tree(bm.tree, 3);
  const auto train = embed_dataset(run.model, VectorTrainingSet(bm.train, 0.0));
  const auto test = embed_dataset(run.model, VectorTrainingSet(bm.test, 0.0));
  const Matrix centroids = class_centroids(train.z, train.labels, 6);
  int ordered = 0;
  std::ostringstream detail;
  for (int c = 0; c < 6; ++c) {
    // Mean similarity of the anchor centroid to P_1, P_2, and everything farther.
    double sum[3] = {0, 0, 0};
    int count[3] = {0, 0, 0};
    for (std::size_t i = 0; i < test.labels.size(); ++i) {
      const int rank = spec.rank_of(c, test.labels[i]);
      const int slot = rank == 1 ? 0 : rank == 2 ? 1 : 2;
      sum[slot] += centroids.row(c).dot(test.z.row(static_cast<Eigen::Index>(i)));
      ++count[slot];
    }
    const double h1 = sum[0] / count[0], h2 = sum[1] / count[1], hn = sum[2] / count[2];
    ordered += h1 > h2 && h2 > hn;
    detail << (c ? " " : "") << spec.classes()[static_cast<std::size_t>(c)] << "(" << fmt(h1, 3) << ">" << fmt(h2, 3)
           << ">" << fmt(hn, 3) << ")";
  }
  const double share = ordered / 6.0;
  return {share >= 0.9 && run.seconds < 300.0, std::to_string(ordered) + "/6 classes ordered " + detail.str() +
                                                    "; training " + fmt(run.seconds, 3) + " s single-threaded"};
}

Verdict comparative_trend(const Benchmark& bm, const Trained& r3) {
  const Trained r1 = train_ranked(bm, 1);
  TrainConfig cfg;
  EncoderModel softmax(softmax_architecture(16, cfg.hidden, 6), 1);
  fit_softmax(softmax, VectorTrainingSet(bm.train, cfg.view_noise), cfg);
  const Matrix logits = softmax.forward(bm.test.x);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index k = 0;
    logits.row(i).maxCoeff(&k);
    correct += k == bm.test.labels[static_cast<std::size_t>(i)];
  }
  const double acc_soft = static_cast<double>(correct) / static_cast<double>(bm.test.size());
  const double acc_r1 = centroid_accuracy(bm, r1.model), acc_r3 = centroid_accuracy(bm, r3.model);
  // Every contrastive variant must be non-inferior to the softmax baseline.
  const bool pass = acc_r1 - acc_soft >= 0.0 && acc_r3 - acc_soft >= 0.0;
  return {pass, "nearest-centroid r=1 " + fmt(acc_r1) + " (" + (acc_r1 >= acc_soft ? ">=" : "<") + "), r=3 " +
                    fmt(acc_r3) + " (" + (acc_r3 >= acc_soft ? ">=" : "<") + ") vs softmax " + fmt(acc_soft) +
                    " on " + std::to_string(bm.test.size()) + " test samples"};
}

// ---------------------------------------------------------------------------
Verdict metric_oracles() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  // AUROC against the exhaustive pairwise count, ties included.
  Rng root(606);
  int sets = 0;
  for (int t = 0; t < 300; ++t) {
    Rng rng = root.split(static_cast<std::uint64_t>(t));
    const std::size_t n = 2 + rng.uniform_index(t < 20 ? 999 : 200);
    const double grid = t % 3 == 0 ? 10.0 : 0.0;  // coarse grid forces ties
    std::vector<double> scores(n);
    std::vector<unsigned char> is_ood(n);
    for (std::size_t i = 0; i < n; ++i) {
      is_ood[i] = i == 0 ? 0 : i == 1 ? 1 : rng.bernoulli(0.4);
      scores[i] = rng.normal() + (is_ood[i] ? 0.5 : 0.0);
      if (grid > 0) scores[i] = std::round(scores[i] * grid) / grid;
    }
    const RocCurve roc = roc_auroc(scores, is_ood);
    expect(roc.auroc == pairwise_auroc(scores, is_ood), "auroc set " + std::to_string(t));
    bool monotone = roc.points.front() == std::pair(0.0, 0.0) && roc.points.back() == std::pair(1.0, 1.0);
    for (std::size_t i = 1; i < roc.points.size(); ++i)
      monotone = monotone && roc.points[i].first >= roc.points[i - 1].first &&
                 roc.points[i].second >= roc.points[i - 1].second;
    expect(monotone, "roc monotone set " + std::to_string(t));
    ++sets;
  }

  // Hand-built box fixtures.
  const Box unit{0, 0, 2, 2, "a", 1.0}, shifted{1, 0, 3, 2, "a", 1.0};
  expect(iou(unit, shifted) == 1.0 / 3.0, "iou 1/3");
  const std::vector<Box> gts = {{0, 0, 10, 10, "a", 0}, {20, 20, 30, 30, "a", 0}};
  const std::vector<Box> preds = {{0, 0, 10, 10, "a", 0.9}, {0, 0, 10, 10, "a", 0.8}, {20, 20, 30, 30, "a", 0.7}};
  expect(average_precision(preds, gts, 0.5) == interpolated_ap({{0.5, 1.0}, {0.5, 0.5}, {1.0, 2.0 / 3.0}}),
         "duplicate-match PR fixture");
  expect(average_precision(gts, gts, 0.95) == 1.0, "perfect predictions");
  expect(average_precision(std::vector<Box>{}, gts, 0.5) == 0.0, "no predictions");
  const std::vector<Box> straddle = {{0, 0, 10, 6, "a", 0.9}, {20, 20, 30, 26, "a", 0.8}};  // IoU 0.6 each
  const CocoAp s = coco_ap(straddle, gts);
  expect(s.ap50 == 100.0 && s.ap75 == 0.0, "IoU 0.6 threshold straddle");
  const CocoAp perfect = coco_ap(gts, gts);
  expect(perfect.ap == 100.0 && perfect.ap50 == 100.0 && perfect.ap75 == 100.0, "perfect coco");

  // Worked values: arithmetic, schedules, partitions, the two-cluster loss, pixels, crops, counts.
  expect(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{5}, {6}}) == Matrix{{17}, {39}}, "matmul");
  expect(l2_normalize_rows(Matrix{{3, 4}}) == Matrix{{0.6, 0.8}}, "normalize");
  const auto lin3 = linear_temperature_schedule(0.1, 0.6, 3).taus();
  expect(std::abs(lin3[1] - 0.35) < 1e-15 && lin3[2] == 0.6, "linear taus r=3");
  const auto lin5 = linear_temperature_schedule(0.1, 0.6, 5).taus();
  expect(std::abs(lin5[1] - 0.225) < 1e-15 && std::abs(lin5[3] - 0.475) < 1e-15, "linear taus r=5");
  const RankingSpec abc({"a", "b", "c"}, 2, {{"a", {{"b"}}}, {"b", {{"a"}}}, {"c", {{"a"}}}});
  const std::vector<std::string> batch = {"a", "a", "b", "c"};
  const auto part = partition_batch(std::span<const std::string>(batch), 0, abc);
  expect(part.positives[0] == std::vector<std::size_t>{1} && part.positives[1] == std::vector<std::size_t>{2} &&
             part.negatives == std::vector<std::size_t>{3},
         "batch partition");
  const std::vector<int> two = {0, 0, 1, 1};
  const double two_cluster = ranked_loss(EmbeddingMatrix(Matrix{{1, 0}, {1, 0}, {0, 1}, {0, 1}}), two,
                                         RankingSpec({"a", "b"}, 1, {}), TemperatureSchedule({0.1}))
                                 .total;
  expect(std::abs(two_cluster - static_cast<double>(std::log1p(2.0L * std::exp(-10.0L)))) < 1e-15,
         "two-cluster loss 9.08e-5");
  RasterImage px(1, 1, 0.8);
  expect(std::abs(normalize(px, {0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}).at(0, 0, 0) - 1.2) < 1e-15, "normalize pixel");
  RasterImage red(1, 1, 0.0);
  red.at(0, 0, 0) = 1.0;
  expect(std::abs(to_grayscale(red).at(0, 0, 1) - 0.299) < 1e-15, "grayscale luma");
  const RasterImage scene = read_ppm((kFixtures / "scene.ppm").string());
  const auto crop = crop_boxes(scene, std::vector<Box>{{2, 2, 5, 5, "a", 0}});
  expect(crop[0].height == 3 && crop[0].width == 3 && crop[0].at(0, 0, 0) == scene.at(2, 2, 0), "crop 3x3");
  const auto tree = SimilarityTree::from_json(json::parse(kTree));
  Rng rng(1);
  const auto six = synth_hierarchical(tree, 10, 16, 0.1, rng);
  const std::vector<std::string> held = {"e", "f"};
  const auto [in, out] = holdout_split(six, held);
  expect(in.size() == 40 && out.size() == 20, "holdout counts");
  const auto two_level = ranking_from_tree(SimilarityTree::from_json(json::parse(R"([["a","b"],["c","d"]])")), 2);
  expect(two_level.ranks_for(0).at(0) == std::vector<std::string>{"b"}, "tree ranking rank 2");
  const std::vector<double> in_scores = {0.8, 0.4}, ood_scores = {0.6, 0.3};
  std::vector<double> all = {0.8, 0.4, 0.6, 0.3};
  std::vector<unsigned char> flipped = {1, 1, 0, 0};
  expect(roc_auroc(all, flipped).auroc == 0.75 && pairwise_auroc(all, flipped) == 0.75,
         "3-of-4 pairwise example");

  std::string detail = std::to_string(sets) + " AUROC sets (n <= 1000) exact; AP/IoU fixtures and worked values";
  if (!failures.empty()) {
    detail += "; failed:";
    for (const auto& f : failures) detail += " [" + f + "]";
  }
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
struct CliRun {
  int code;
  std::string out;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str() + err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rankedcl_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Verdict ood_end_to_end() {
  const fs::path dir = fresh_dir("ood");
  const fs::path config = dir / "config.json";
  std::ofstream(config) << json{{"data", {{"kind", "synthetic"}, {"noise", 0.1}}}}.dump(2);
  const std::vector<std::string> base = {"--config", config.string(), "--withhold", "e,f", "--out", dir.string()};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), base.begin(), base.end());
    return head;
  };
  if (const auto t = cli(with({"train"})); t.code != 0) return {false, "train failed: " + t.out};
  if (const auto e = cli(with({"eval", "ood"})); e.code != 0) return {false, "eval ood failed: " + e.out};

  const json report = json::parse(slurp(dir / "ood.json"));
  std::istringstream csv(slurp(dir / "roc.csv"));
  std::string line;
  std::getline(csv, line);
  bool monotone = line == "fpr,tpr";
  std::vector<std::pair<double, double>> pts;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    pts.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  monotone = monotone && pts.size() >= 2 && pts.front() == std::pair(0.0, 0.0) && pts.back() == std::pair(1.0, 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i)
    monotone = monotone && pts[i].first >= pts[i - 1].first && pts[i].second >= pts[i - 1].second;
  const double auroc = report.at("auroc").get<double>();
  return {auroc > 0.5 && monotone, "withheld e,f: AUROC " + fmt(auroc) + " over " +
                                       std::to_string(report.at("n_in").get<int>()) + " in / " +
                                       std::to_string(report.at("n_ood").get<int>()) + " withheld; ROC CSV " +
                                       (monotone ? "monotone (0,0)->(1,1)" : "NOT monotone")};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files[e.path().filename().string()] = slurp(e.path());
  return files;
}

Verdict cli_determinism() {
  const fs::path dir = fresh_dir("determinism");
  const fs::path syn = dir / "synthetic.json", det = dir / "detection.json";
  std::ofstream(syn) << json{{"train", {{"epochs", 30}}}}.dump(2);
  std::ofstream(det) << json{{"data", {{"kind", "detection"}, {"path", (kFixtures / "detect.json").string()}}},
                             {"train", {{"epochs", 3}, {"r", 1}}},
                             {"augment", {{"out_size", 8}}}}
                            .dump(2);
  const fs::path out = dir / "out";
  const std::string o = out.string();
  const std::vector<std::vector<std::string>> commands = {
      {"gradcheck", "--config", syn.string(), "--seed", "3", "--out", o},
      {"train", "--config", syn.string(), "--seed", "3", "--out", o},
      {"eval", "classify", "--config", syn.string(), "--seed", "3", "--out", o},
      {"train", "--config", syn.string(), "--seed", "3", "--withhold", "c,d", "--out", o},
      {"eval", "ood", "--config", syn.string(), "--seed", "3", "--withhold", "c,d", "--out", o},
      {"export-plots", "--log", (out / "train_log.jsonl").string(), "--report", (out / "ood.json").string(), "--out", o},
      {"eval", "detect", "--config", det.string(), "--seed", "3", "--out", o},
      {"train", "--config", det.string(), "--seed", "3", "--out", o},
      {"eval", "classify", "--config", det.string(), "--seed", "3", "--out", o},
  };
  std::size_t compared = 0;
  for (const auto& cmd : commands) {
    std::string name;
    for (const auto& a : cmd) {
      if (a.rfind("--", 0) == 0) break;
      name += (name.empty() ? "" : " ") + a;
    }
    const CliRun first = cli(cmd);
    const auto files_first = snapshot(out);
    const CliRun second = cli(cmd);
    const auto files_second = snapshot(out);
    if (first.code != 0 || second.code != 0) return {false, name + " exited " + std::to_string(first.code) + ": " + first.out};
    if (first.out != second.out) return {false, name + ": console output differs"};
    if (files_first != files_second) return {false, name + ": output files differ"};
    compared += files_second.size();
  }
  return {true, std::to_string(commands.size()) + " commands run twice; " + std::to_string(compared) +
                    " file snapshots and console output byte-identical"};
}

// ---------------------------------------------------------------------------
Verdict validation_surface() {
  std::vector<std::string> failures;
  std::size_t cases = 0;
  auto raises = [&]<typename E>(const std::string& what, const std::function<void()>& fn, E*) {
    ++cases;
    try {
      fn();
      failures.push_back(what + ": no error");
    } catch (const E&) {
    } catch (const std::exception& e) {
      failures.push_back(what + ": wrong error (" + e.what() + ")");
    }
  };
  constexpr ValidationError* validation = nullptr;
  constexpr ShapeError* shape = nullptr;
  constexpr DegenerateInputError* degenerate = nullptr;
  constexpr UndefinedMetricError* undefined = nullptr;
  using Lists = RankingSpec::RankLists;
  const std::vector<std::string> abc = {"a", "b", "c"};

  // RankingSpec
  raises("ranking self-reference", [&] { RankingSpec(abc, 2, {{"a", {{"a"}}}, {"b", {{"c"}}}, {"c", {{"a"}}}}); }, validation);
  raises("ranking class in two ranks", [&] { RankingSpec(abc, 3, {{"a", {{"b"}, {"b"}}}, {"b", {{"a"}, {"c"}}}, {"c", {{"a"}, {"b"}}}}); }, validation);
  raises("ranking unknown class", [&] { RankingSpec(abc, 2, {{"a", {{"z"}}}, {"b", {{"a"}}}, {"c", {{"a"}}}}); }, validation);
  raises("ranking ragged depth", [&] { RankingSpec(abc, 3, {{"a", {{"b"}, {"c"}}}, {"b", {{"a"}}}, {"c", {{"a"}, {"b"}}}}); }, validation);
  raises("ranking missing anchor entry", [&] { RankingSpec(abc, 2, Lists{{"a", {{"b"}}}, {"b", {{"a"}}}}); }, validation);
  raises("ranking duplicate class", [&] { RankingSpec({"a", "a"}, 1, {}); }, validation);
  raises("ranking depth 0", [&] { RankingSpec(abc, 0, {}); }, validation);
  raises("ranking json not a document", [&] { parse_ranking("{\"classes\": [\"a\"], \"r\": "); }, validation);
  raises("partition unknown label", [&] {
    const std::vector<std::string> labels = {"a", "q"};
    partition_batch(std::span<const std::string>(labels), 0, RankingSpec(abc, 1, {}));
  }, validation);

  // TemperatureSchedule
  raises("taus empty", [&] { TemperatureSchedule({}); }, validation);
  raises("taus non-increasing", [&] { TemperatureSchedule({0.2, 0.2}); }, validation);
  raises("taus decreasing", [&] { TemperatureSchedule({0.3, 0.1}); }, validation);
  raises("taus non-positive", [&] { TemperatureSchedule({0.0, 0.1}); }, validation);
  raises("taus non-finite", [&] { TemperatureSchedule({0.1, INFINITY}); }, validation);
  raises("linear schedule inverted", [&] { linear_temperature_schedule(0.6, 0.1, 3); }, validation);
  raises("linear schedule non-positive", [&] { linear_temperature_schedule(0.0, 0.6, 3); }, validation);
  raises("schedule length vs depth", [&] {
    const std::vector<int> labels = {0, 0};
    ranked_loss(EmbeddingMatrix(Matrix{{1, 0}, {1, 0}}), labels, RankingSpec(abc, 1, {}), TemperatureSchedule({0.1, 0.2}));
  }, validation);

  // Box and detection data
  raises("box x_min >= x_max", [&] { Box{5, 0, 5, 4, "a", 0}.validate(); }, validation);
  raises("box y_min >= y_max", [&] { Box{0, 4, 5, 1, "a", 0}.validate(); }, validation);
  raises("box non-finite", [&] { Box{0, 0, NAN, 4, "a", 0}.validate(); }, validation);
  raises("dataset invalid box", [&] {
    dataset_from_json(json::parse(R"({"classes":["a"],"items":[{"image":"x.ppm","gt":[{"box":[3,0,1,2],"class":"a"}]}]})"), ".", false);
  }, validation);
  raises("dataset unknown class", [&] {
    dataset_from_json(json::parse(R"({"classes":["a"],"items":[{"image":"x.ppm","gt":[{"box":[0,0,1,2],"class":"b"}]}]})"), ".", false);
  }, validation);
  raises("dataset missing image", [&] {
    dataset_from_json(json::parse(R"({"classes":["a"],"items":[{"image":"nowhere.ppm","gt":[]}]})"), kFixtures, true);
  }, validation);
  raises("crop box outside image", [&] { crop_boxes(RasterImage(4, 4, 0.5), std::vector<Box>{{10, 10, 12, 12, "a", 0}}); }, validation);
  raises("tree duplicate leaf", [&] { SimilarityTree::from_json(json::parse(R"([["a","b"],["a"]])")); }, validation);
  raises("synth dim too small", [&] {
    Rng rng(0);
    synth_hierarchical(SimilarityTree::from_json(json::parse(kTree)), 2, 4, 0.1, rng);
  }, validation);
  raises("synth negative noise", [&] {
    Rng rng(0);
    synth_hierarchical(SimilarityTree::from_json(json::parse(kTree)), 2, 16, -0.1, rng);
  }, validation);
  raises("holdout unknown class", [&] {
    Rng rng(0);
    const std::vector<std::string> held = {"zebra"};
    holdout_split(synth_hierarchical(SimilarityTree::from_json(json::parse(kTree)), 2, 16, 0.1, rng), held);
  }, validation);
  raises("tree ranking too deep", [&] { ranking_from_tree(SimilarityTree::from_json(json::parse(kTree)), 4); }, validation);

  // Numerics, embeddings and loss
  raises("matmul shape", [&] { matmul(Matrix::Zero(2, 3), Matrix::Zero(2, 3)); }, shape);
  raises("normalize zero row", [&] { l2_normalize_rows(Matrix{{0, 0}, {1, 0}}); }, degenerate);
  raises("finite diff eps", [&] { finite_diff_grad([](const Matrix&) { return 0.0; }, Matrix::Zero(1, 1), 0.0); }, validation);
  raises("embedding not unit norm", [&] { EmbeddingMatrix(Matrix{{1, 1}}); }, degenerate);
  raises("loss all anchors skipped", [&] {
    const std::vector<int> labels = {0, 1};
    ranked_loss(EmbeddingMatrix(Matrix{{1, 0}, {0, 1}}), labels, RankingSpec(abc, 1, {}), TemperatureSchedule({0.1}));
  }, degenerate);
  raises("encoder input width", [&] { EncoderModel(contrastive_architecture(4, 8, 2), 0).forward(Matrix::Zero(2, 5)); }, shape);

  // Metrics
  raises("ap empty ground truth", [&] { average_precision(std::vector<Box>{{0, 0, 1, 1, "a", 1}}, std::vector<Box>{}, 0.5); }, undefined);
  raises("roc single population", [&] {
    const std::vector<double> s = {0.1, 0.2};
    const std::vector<unsigned char> o = {0, 0};
    roc_auroc(s, o);
  }, undefined);
  raises("centroid zero-norm mean", [&] {
    const std::vector<int> labels = {0, 0};
    class_centroids(Matrix{{1, 0}, {-1, 0}}, labels, 1);
  }, degenerate);

  // Augment, train and run configs
  auto augment = [](const json& j) { augment_config_from_json(j); };
  raises("augment crop scale zero", [&] { augment({{"crop_scale", {0.0, 1.0}}}); }, validation);
  raises("augment crop scale inverted", [&] { augment({{"crop_scale", {0.8, 0.5}}}); }, validation);
  raises("augment crop scale above 1", [&] { augment({{"crop_scale", {0.5, 1.5}}}); }, validation);
  raises("augment flip probability", [&] { augment({{"flip_prob", 1.5}}); }, validation);
  raises("augment grayscale probability", [&] { augment({{"grayscale_prob", -0.1}}); }, validation);
  raises("augment std zero", [&] { augment({{"std", {0.25, 0.0, 0.25}}}); }, validation);
  raises("normalize zero std", [&] { normalize(RasterImage(1, 1, 0.5), {0.5, 0.5, 0.5}, {0.0, 0.1, 0.1}); }, validation);
  raises("train lr zero", [&] { train_config_from_json({{"lr", 0.0}}); }, validation);
  raises("train lr decay zero", [&] { train_config_from_json({{"lr_decay", 0.0}}); }, validation);
  raises("train lr decay above 1", [&] { train_config_from_json({{"lr_decay", 1.5}}); }, validation);
  raises("train batch size 1", [&] { train_config_from_json({{"batch_size", 1}}); }, validation);
  raises("train unknown key", [&] { train_config_from_json({{"learning_rate", 0.1}}); }, validation);
  raises("run config unknown block", [&] { run_config_from_json({{"optimizer", json::object()}}, "."); }, validation);
  raises("run config missing dataset file", [&] {
    run_config_from_json({{"data", {{"kind", "detection"}, {"path", "missing.json"}}}}, kFixtures);
  }, validation);
  raises("run config missing ranking file", [&] { run_config_from_json({{"ranking", "missing.json"}}, kFixtures); }, validation);

  // CLI contract: usage and config errors exit 2
  ++cases;
  if (cli({"eval", "ood", "--out", fresh_dir("validation").string()}).code != exit_code::usage)
    failures.push_back("ood without withheld classes: exit code");
  ++cases;
  if (cli({"train", "--config", (kFixtures / "absent.json").string()}).code != exit_code::usage)
    failures.push_back("missing config: exit code");

  std::string detail = std::to_string(cases - failures.size()) + "/" + std::to_string(cases) + " invariant violations raise the expected error";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.detail << std::endl;
    failed += !v.pass;
  };
  auto guarded = [](const std::function<Verdict()>& fn) -> Verdict {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("threw: ") + e.what()};
    }
  };

  report(1, "gradient correctness", guarded(gradient_correctness));
  report(2, "supcon reduction", guarded(supcon_reduction));
  report(3, "loss oracle equivalence", guarded(oracle_equivalence));

  const Benchmark bm;
  set_max_threads(1);
  std::optional<Trained> r3;
  report(4, "ordering recovery", guarded([&] {
           r3 = train_ranked(bm, 3);
           return ordering_recovery(bm, *r3);
         }));
  set_max_threads(0);
  report(5, "comparative trend", guarded([&] {
           if (!r3) return Verdict{false, "no r=3 model (criterion 4 failed to train)"};
           return comparative_trend(bm, *r3);
         }));

  report(6, "metric oracles", guarded(metric_oracles));
  report(7, "ood end-to-end", guarded(ood_end_to_end));
  report(8, "cli determinism", guarded(cli_determinism));
  report(9, "validation surface", guarded(validation_surface));
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + (failed == 1 ? " criterion failed" : " criteria failed")) << std::endl;
  return failed == 0 ? 0 : 1;
}
