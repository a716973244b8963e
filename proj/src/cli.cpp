#include "rankedcl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "rankedcl/errors.hpp"
#include "rankedcl/loss.hpp"
#include "rankedcl/metrics.hpp"

namespace rankedcl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ValidationError(where + ": unknown key '" + key + "'");
}

SyntheticDataConfig synthetic_from_json(const json& j) {
  check_keys(j, {"kind", "tree", "per_class", "test_per_class", "dim", "noise", "seed"}, "data");
  SyntheticDataConfig c;
  c.tree = j.value("tree", c.tree);
  c.per_class = j.value("per_class", c.per_class);
  c.test_per_class = j.value("test_per_class", c.test_per_class);
  c.dim = j.value("dim", c.dim);
  c.noise = j.value("noise", c.noise);
  c.seed = j.value("seed", c.seed);
  const auto tree = SimilarityTree::from_json(c.tree);
  if (c.per_class < 1 || c.test_per_class < 1) throw ValidationError("data.per_class and data.test_per_class must be at least 1");
  if (c.dim < tree.node_count())
    throw ValidationError("data.dim must be at least the tree's node count (" + std::to_string(tree.node_count()) + ")");
  if (!(c.noise >= 0.0)) throw ValidationError("data.noise must be non-negative");
  return c;
}

DetectionDataConfig detection_from_json(const json& j, const fs::path& base) {
  check_keys(j, {"kind", "path", "test_path"}, "data");
  if (!j.contains("path")) throw ValidationError("data.path is required for detection data");
  DetectionDataConfig c{resolve(base, j.at("path").get<std::string>()), std::nullopt};
  if (j.contains("test_path")) c.test_path = resolve(base, j.at("test_path").get<std::string>());
  for (const auto& p : {std::optional<fs::path>(c.path), c.test_path})
    if (p && !fs::exists(*p)) throw ValidationError("data: dataset file not found: " + p->string());
  return c;
}

GradCheckConfig gradcheck_from_json(const json& j) {
  check_keys(j, {"batches", "n", "d", "depths", "eps", "tolerance"}, "gradcheck");
  GradCheckConfig c;
  c.batches = j.value("batches", c.batches);
  c.n = j.value("n", c.n);
  c.d = j.value("d", c.d);
  c.depths = j.value("depths", c.depths);
  c.eps = j.value("eps", c.eps);
  c.tolerance = j.value("tolerance", c.tolerance);
  if (c.batches < 1 || c.n < 2 || c.d < 1) throw ValidationError("gradcheck: batches ≥ 1, n ≥ 2 and d ≥ 1 required");
  if (c.depths.empty()) throw ValidationError("gradcheck.depths must not be empty");
  for (std::size_t r : c.depths)
    if (r < 1 || r > 6) throw ValidationError("gradcheck.depths entries must lie in 1..6");
  if (!(c.eps > 0.0) || !(c.tolerance > 0.0)) throw ValidationError("gradcheck.eps and gradcheck.tolerance must be positive");
  return c;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, {"seed", "train", "augment", "data", "ranking", "withhold", "gradcheck"}, "config");
  RunConfig cfg;
  try {
    const json train = j.value("train", json::object());
    cfg.train = train_config_from_json(train);
    cfg.r_given = train.contains("r");
    if (j.contains("seed")) cfg.train.seed = j.at("seed").get<std::uint64_t>();

    const json augment = j.value("augment", json::object());
    cfg.augment = augment_config_from_json(augment);
    cfg.augment_stats_given = augment.contains("mean") || augment.contains("std");

    const json data = j.value("data", json::object());
    const std::string kind = data.is_object() ? data.value("kind", std::string("synthetic")) : "";
    if (kind == "synthetic")
      cfg.data = synthetic_from_json(data);
    else if (kind == "detection")
      cfg.data = detection_from_json(data, base_dir);
    else
      throw ValidationError("data.kind must be \"synthetic\" or \"detection\"");

    if (j.contains("ranking")) {
      const json& r = j.at("ranking");
      cfg.ranking = r.is_string() ? load_ranking(resolve(base_dir, r.get<std::string>()).string()) : ranking_from_json(r);
    }
    cfg.withhold = j.value("withhold", cfg.withhold);
    cfg.gradcheck = gradcheck_from_json(j.value("gradcheck", json::object()));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string ranking;
  std::vector<std::string> withhold;
  std::string out = "rankedcl_out";
  bool use_pred_boxes = false;
  std::string checkpoint;
  std::string log;
  std::string report;
  std::string fault;
  std::string mode;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text)) throw ValidationError("cannot write " + path.string());
}

std::string read_file(const fs::path& path, const char* what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError(std::string(what) + " not found: " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json parse_file(const fs::path& path, const char* what) {
  try {
    return json::parse(read_file(path, what));
  } catch (const json::exception& e) {
    throw ValidationError(std::string(what) + " " + path.string() + ": " + e.what());
  }
}

RunConfig effective_config(const Options& opt) {
  RunConfig cfg = opt.config.empty() ? run_config_from_json(json::object(), fs::current_path())
                                     : load_run_config(opt.config);
  if (opt.seed) cfg.train.seed = *opt.seed;
  if (!opt.ranking.empty()) cfg.ranking = load_ranking(opt.ranking);
  if (!opt.withhold.empty()) cfg.withhold = opt.withhold;
  if (cfg.ranking) {
    if (cfg.r_given && cfg.train.r != cfg.ranking->depth())
      throw ValidationError("train.r = " + std::to_string(cfg.train.r) + " but the ranking has depth " +
                            std::to_string(cfg.ranking->depth()));
    cfg.train.r = cfg.ranking->depth();
    cfg.train.validate();
  }
  return cfg;
}

// Model inputs with labels already mapped to ranking indices.
struct Samples {
  bool images = false;
  Matrix x;
  std::vector<RasterImage> crops;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }

  template <typename Pred>
  Samples keep_if(Pred pred) const {
    Samples s;
    s.images = images;
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < size(); ++i)
      if (pred(labels[i])) rows.push_back(static_cast<Eigen::Index>(i));
    if (!images) s.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto i = static_cast<std::size_t>(rows[k]);
      if (images)
        s.crops.push_back(crops[i]);
      else
        s.x.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
      s.labels.push_back(labels[i]);
    }
    return s;
  }
};

struct Prepared {
  RankingSpec spec;
  Samples train;
  Samples test;
  AugmentConfig augment;
  std::vector<bool> held;

  Samples in_dist(const Samples& s) const {
    return s.keep_if([&](int c) { return !held[static_cast<std::size_t>(c)]; });
  }
  Samples withheld(const Samples& s) const {
    return s.keep_if([&](int c) { return held[static_cast<std::size_t>(c)]; });
  }
};

int label_index(const RankingSpec& spec, const std::string& name) {
  const auto it = std::find(spec.classes().begin(), spec.classes().end(), name);
  if (it == spec.classes().end()) throw ValidationError("class '" + name + "' is not in the ranking");
  return static_cast<int>(it - spec.classes().begin());
}

Samples detection_samples(const fs::path& path, bool use_pred, const RankingSpec& spec, std::ostream& err) {
  const DetectionDataset ds = load_dataset(path);
  Samples s;
  s.images = true;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const auto& item = ds.items[i];
    const auto& boxes = use_pred ? item.pred : item.gt;
    if (boxes.empty()) continue;
    std::vector<std::string> warnings;
    auto crops = crop_boxes(load_item_image(ds, item), boxes, &warnings);
    for (const auto& w : warnings) err << "warning: item " << i << ": " << w << '\n';
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      s.crops.push_back(std::move(crops[b]));
      s.labels.push_back(label_index(spec, boxes[b].label));
    }
  }
  return s;
}

Prepared prepare(const RunConfig& cfg, bool use_pred_boxes, std::ostream& err) {
  std::optional<RankingSpec> spec = cfg.ranking;
  Samples train, test;
  if (const auto* syn = std::get_if<SyntheticDataConfig>(&cfg.data)) {
    const auto tree = SimilarityTree::from_json(syn->tree);
    if (!spec) spec = ranking_from_tree(tree, cfg.train.r);
    Rng rng(syn->seed);
    const auto all = synth_hierarchical(tree, syn->per_class + syn->test_per_class, syn->dim, syn->noise, rng);
    const auto split = stratified_split(all, syn->per_class);
    auto convert = [&](const LabeledVectors& src) {
      Samples dst;
      dst.x = src.x;
      for (int l : src.labels) dst.labels.push_back(label_index(*spec, src.classes[static_cast<std::size_t>(l)]));
      return dst;
    };
    train = convert(split.first);
    test = convert(split.second);
  } else {
    const auto& det = std::get<DetectionDataConfig>(cfg.data);
    if (!spec) {
      if (cfg.train.r != 1) throw ValidationError("a ranking file is required for r > 1 on detection data");
      spec = RankingSpec(load_dataset(det.path).classes, 1, {});
    }
    train = detection_samples(det.path, use_pred_boxes, *spec, err);
    test = det.test_path ? detection_samples(*det.test_path, use_pred_boxes, *spec, err) : train;
  }

  Prepared p{*spec, std::move(train), std::move(test), cfg.augment, std::vector<bool>(spec->num_classes(), false)};
  for (const auto& name : cfg.withhold) p.held[static_cast<std::size_t>(label_index(p.spec, name))] = true;
  if (p.train.images && !cfg.augment_stats_given) {
    if (p.train.crops.empty()) throw ValidationError("detection data has no boxes to crop");
    std::tie(p.augment.mean, p.augment.std) = channel_stats(p.train.crops);
  }
  return p;
}

std::unique_ptr<TrainingSet> make_set(const Samples& s, const Prepared& p, double view_noise) {
  if (s.images) return std::make_unique<ImageTrainingSet>(s.crops, s.labels, p.augment);
  LabeledVectors v{s.x, s.labels, p.spec.classes(), std::vector<std::size_t>(s.size())};
  std::iota(v.ids.begin(), v.ids.end(), std::size_t{0});
  return std::make_unique<VectorTrainingSet>(std::move(v), view_noise);
}

fs::path out_dir(const Options& opt) {
  fs::create_directories(opt.out);
  return opt.out;
}

int cmd_train(const Options& opt, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(opt);
  const Prepared p = prepare(cfg, opt.use_pred_boxes, err);
  const Samples train = p.in_dist(p.train);
  if (train.size() == 0) throw ValidationError("no training samples remain after withholding");
  const auto set = make_set(train, p, cfg.train.view_noise);

  const bool softmax = cfg.train.objective == Objective::softmax;
  const Architecture arch = softmax
                                ? softmax_architecture(set->input_dim(), cfg.train.hidden, p.spec.num_classes())
                                : contrastive_architecture(set->input_dim(), cfg.train.hidden, cfg.train.embed_dim);
  EncoderModel model(arch, cfg.train.seed);

  std::vector<EpochRecord> log;
  if (softmax) {
    const auto losses = fit_softmax(model, *set, cfg.train);
    for (std::size_t e = 0; e < losses.size(); ++e) {
      EpochRecord rec;
      rec.epoch = e;
      rec.lr = cfg.train.lr_at(e);
      rec.loss.total = losses[e];
      log.push_back(rec);
    }
  } else {
    log = fit(model, *set, cfg.train, p.spec);
  }

  const fs::path dir = out_dir(opt);
  write_file(dir / "checkpoint.json", checkpoint_to_json(model, cfg.train.epochs).dump(2) + "\n");
  std::string lines;
  for (const auto& rec : log) lines += epoch_record_to_json(rec).dump() + "\n";
  write_file(dir / "train_log.jsonl", lines);

  out << "trained " << cfg.train.epochs << " epochs on " << train.size() << " samples";
  if (!log.empty()) out << ", loss " << log.front().loss.total << " -> " << log.back().loss.total;
  out << "\nwrote " << (dir / "checkpoint.json").string() << " and " << (dir / "train_log.jsonl").string() << '\n';
  return exit_code::ok;
}

EncoderModel load_checkpoint(const Options& opt, std::size_t input_dim) {
  const fs::path path = opt.checkpoint.empty() ? fs::path(opt.out) / "checkpoint.json" : fs::path(opt.checkpoint);
  EncoderModel model = checkpoint_from_json(parse_file(path, "checkpoint"));
  if (model.input_dim() != input_dim)
    throw ValidationError("checkpoint expects " + std::to_string(model.input_dim()) + " input features but the data has " +
                          std::to_string(input_dim));
  return model;
}

// Centroids over the classes present in `reference`, with a label map into their rows.
struct Centroids {
  Matrix c;
  std::vector<int> row_of;  // ranking index → centroid row, -1 if absent
};

Centroids centroids_of(const Matrix& z, const std::vector<int>& labels, std::size_t num_classes) {
  Centroids out{Matrix(), std::vector<int>(num_classes, -1)};
  int k = 0;
  for (std::size_t c = 0; c < num_classes; ++c)
    if (std::find(labels.begin(), labels.end(), static_cast<int>(c)) != labels.end()) out.row_of[c] = k++;
  std::vector<int> compact;
  for (int l : labels) compact.push_back(out.row_of[static_cast<std::size_t>(l)]);
  out.c = class_centroids(z, compact, k);
  return out;
}

int cmd_classify(const Options& opt, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(opt);
  const Prepared p = prepare(cfg, opt.use_pred_boxes, err);
  const Samples train = p.in_dist(p.train), test = p.in_dist(p.test);
  if (train.size() == 0 || test.size() == 0) throw ValidationError("classification needs in-distribution samples");
  const auto train_set = make_set(train, p, 0.0), test_set = make_set(test, p, 0.0);
  const EncoderModel model = load_checkpoint(opt, test_set->input_dim());

  double accuracy = 0.0;
  std::size_t classes = 0;
  const bool softmax = !model.architecture().normalize_output;
  if (softmax) {
    if (model.output_dim() != p.spec.num_classes())
      throw ValidationError("checkpoint has " + std::to_string(model.output_dim()) + " logits but the ranking has " +
                            std::to_string(p.spec.num_classes()) + " classes");
    const Matrix logits = embed_dataset(model, *test_set).z;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index k = 0;
      logits.row(i).maxCoeff(&k);
      correct += k == test.labels[static_cast<std::size_t>(i)];
    }
    accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    classes = p.spec.num_classes() - static_cast<std::size_t>(std::count(p.held.begin(), p.held.end(), true));
  } else {
    const auto train_emb = embed_dataset(model, *train_set);
    const Centroids cents = centroids_of(train_emb.z, train_emb.labels, p.spec.num_classes());
    std::vector<int> compact;
    for (int l : test.labels) {
      const int row = cents.row_of[static_cast<std::size_t>(l)];
      if (row < 0) throw ValidationError("test class '" + p.spec.classes()[static_cast<std::size_t>(l)] + "' has no training samples");
      compact.push_back(row);
    }
    accuracy = nearest_centroid_accuracy(embed_dataset(model, *test_set).z, compact, cents.c);
    classes = static_cast<std::size_t>(cents.c.rows());
  }
  const json report = {{"accuracy", accuracy},
                       {"n", test.size()},
                       {"num_classes", classes},
                       {"method", softmax ? "softmax" : "nearest_centroid"}};
  write_file(out_dir(opt) / "classify.json", report.dump(2) + "\n");
  out << report.dump() << '\n';
  return exit_code::ok;
}

int cmd_detect(const Options& opt, std::ostream& out) {
  const RunConfig cfg = effective_config(opt);
  const auto* det = std::get_if<DetectionDataConfig>(&cfg.data);
  if (!det) throw UsageError("eval detect needs detection data (data.kind = \"detection\")");
  const DetectionDataset ds = load_dataset(det->test_path.value_or(det->path));
  std::vector<ImageBoxes> images;
  for (const auto& item : ds.items) images.push_back({item.pred, item.gt});
  const json report = coco_ap_to_json(coco_ap(images));
  write_file(out_dir(opt) / "detect.json", report.dump(2) + "\n");
  out << report.dump() << '\n';
  return exit_code::ok;
}

int cmd_ood(const Options& opt, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = effective_config(opt);
  if (cfg.withhold.empty()) throw UsageError("eval ood needs withheld classes (--withhold a,b or \"withhold\" in the config)");
  const Prepared p = prepare(cfg, opt.use_pred_boxes, err);
  const Samples train = p.in_dist(p.train), test_in = p.in_dist(p.test), test_ood = p.withheld(p.test);
  if (train.size() == 0 || test_in.size() == 0 || test_ood.size() == 0)
    throw ValidationError("ood evaluation needs in-distribution and withheld test samples");
  const auto train_set = make_set(train, p, 0.0);
  const EncoderModel model = load_checkpoint(opt, train_set->input_dim());
  if (!model.architecture().normalize_output) throw UsageError("eval ood needs an embedding checkpoint, not a softmax one");

  const auto train_emb = embed_dataset(model, *train_set);
  const Centroids cents = centroids_of(train_emb.z, train_emb.labels, p.spec.num_classes());
  std::vector<double> scores;
  std::vector<unsigned char> is_ood;
  for (const auto* s : {&test_in, &test_ood}) {
    const Matrix z = embed_dataset(model, *make_set(*s, p, 0.0)).z;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      scores.push_back(ood_score(z.row(i), cents.c));
      is_ood.push_back(s == &test_ood);
    }
  }
  const RocCurve roc = roc_auroc(scores, is_ood);
  json report = roc_to_json(roc);
  report["withheld"] = cfg.withhold;
  report["n_in"] = test_in.size();
  report["n_ood"] = test_ood.size();
  const fs::path dir = out_dir(opt);
  write_file(dir / "ood.json", report.dump(2) + "\n");
  write_file(dir / "roc.csv", roc_to_csv(roc));
  out << "auroc " << roc.auroc << " (" << test_in.size() << " in-distribution, " << test_ood.size() << " withheld)\n";
  return exit_code::ok;
}

RankingSpec chain_ranking(std::size_t classes, std::size_t r) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) names.push_back("c" + std::to_string(k));
  RankingSpec::RankLists lists;
  if (r > 1)
    for (std::size_t k = 0; k < classes; ++k)
      for (std::size_t i = 2; i <= r; ++i) lists[names[k]].push_back({names[(k + i - 1) % classes]});
  return RankingSpec(names, r, lists);
}

int cmd_gradcheck(const Options& opt, std::ostream& out) {
  const RunConfig cfg = effective_config(opt);
  const GradCheckConfig& g = cfg.gradcheck;
  constexpr std::size_t kClasses = 6;
  const Rng root = Rng(cfg.train.seed).split(0x67726164);
  const auto n = static_cast<Eigen::Index>(g.n), d = static_cast<Eigen::Index>(g.d);

  double worst = 0.0, supcon_diff = 0.0;
  bool supcon_checked = false;
  json failing, loss_report = json::array(), encoder_report = json::array();
  for (std::size_t r : g.depths) {
    const RankingSpec spec = chain_ranking(kClasses, r);
    const auto taus = linear_temperature_schedule(cfg.train.tau_min, cfg.train.tau_max, r);
    double worst_r = 0.0;
    for (std::size_t b = 0; b < g.batches; ++b) {
      Rng rng = root.split(r).split(b);
      Matrix z(n, d);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
      z = l2_normalize_rows(z);
      std::vector<int> labels(g.n);
      for (auto& l : labels) l = static_cast<int>(rng.uniform_index(kClasses));
      labels[1] = labels[0];

      Matrix analytic = ranked_loss_grad_raw(z, labels, spec, taus);
      if (opt.fault == "grad") analytic *= 1.0 + 1e-3;
      const Matrix numeric = finite_diff_grad(
          [&](const Matrix& m) { return ranked_loss_value_raw(m, labels, spec, taus); }, z, g.eps);
      const double e = max_relative_error(analytic, numeric);
      worst_r = std::max(worst_r, e);
      if (!(e < g.tolerance) && failing.is_null())
        failing = {{"suite", "loss"}, {"r", r}, {"batch", b},          {"max_rel_err", e},
                   {"z", matrix_to_json(z)}, {"labels", labels}, {"taus", taus.taus()}};
      if (r == 1) {
        const EmbeddingMatrix emb(z);
        supcon_diff = std::max(supcon_diff, std::abs(ranked_loss(emb, labels, spec, taus).total -
                                                     supcon_loss(emb, labels, taus[0]).total));
        supcon_checked = true;
      }
    }
    loss_report.push_back({{"r", r}, {"batches", g.batches}, {"max_rel_err", worst_r}});
    worst = std::max(worst, worst_r);

    Rng rng = root.split(1000 + r);
    const EncoderModel model(contrastive_architecture(g.d, 16, 4), rng.next_u64());
    Matrix x(4, d);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    const std::vector<int> labels = {0, 0, 1, 2};
    const double e = encoder_grad_check(model, x, labels, spec, taus, g.eps);
    if (!(e < g.tolerance) && failing.is_null())
      failing = {{"suite", "encoder"}, {"r", r}, {"max_rel_err", e}, {"x", matrix_to_json(x)}, {"labels", labels},
                 {"checkpoint", checkpoint_to_json(model, 0)}};
    encoder_report.push_back({{"r", r}, {"max_rel_err", e}});
    worst = std::max(worst, e);
  }

  const bool supcon_ok = !supcon_checked || supcon_diff <= 1e-10;
  const bool passed = failing.is_null() && supcon_ok;
  json report = {{"passed", passed},    {"max_rel_err", worst},       {"tolerance", g.tolerance},
                 {"eps", g.eps},        {"loss", loss_report},        {"encoder", encoder_report}};
  if (supcon_checked) report["supcon_max_abs_diff"] = supcon_diff;
  if (!failing.is_null()) report["failing_case"] = failing;
  write_file(out_dir(opt) / "gradcheck.json", report.dump(2) + "\n");
  out << (passed ? "gradcheck passed" : "gradcheck FAILED") << ": max relative error " << worst;
  if (supcon_checked) out << ", supcon difference " << supcon_diff;
  out << '\n';
  return passed ? exit_code::ok : exit_code::check_failed;
}

int cmd_export_plots(const Options& opt, std::ostream& out) {
  if (opt.log.empty() && opt.report.empty()) throw UsageError("export-plots needs --log and/or --report");
  std::vector<EpochRecord> records;
  if (!opt.log.empty()) {
    std::istringstream lines(read_file(opt.log, "training log"));
    std::string line;
    for (std::size_t no = 1; std::getline(lines, line); ++no) {
      if (line.empty()) continue;
      try {
        records.push_back(epoch_record_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        throw ValidationError(opt.log + ":" + std::to_string(no) + ": " + e.what());
      }
    }
  }
  std::optional<RocCurve> roc;
  if (!opt.report.empty()) roc = roc_from_json(parse_file(opt.report, "ROC report"));

  const fs::path dir = out_dir(opt);
  if (!opt.log.empty()) {
    std::string loss = "epoch,lr,total\n";
    for (const auto& r : records) loss += std::to_string(r.epoch) + "," + format_double(r.lr) + "," + format_double(r.loss.total) + "\n";
    write_file(dir / "loss.csv", loss);

    const std::size_t ranks = records.empty() ? 0 : records.front().loss.per_rank.size();
    std::string per_rank = "epoch";
    for (std::size_t i = 1; i <= ranks; ++i) per_rank += ",rank_" + std::to_string(i);
    per_rank += "\n";
    for (const auto& r : records) {
      if (r.loss.per_rank.size() != ranks) throw ValidationError("training log mixes rank depths");
      per_rank += std::to_string(r.epoch);
      for (double v : r.loss.per_rank) per_rank += "," + format_double(v);
      per_rank += "\n";
    }
    write_file(dir / "per_rank_loss.csv", per_rank);
    out << "wrote loss.csv and per_rank_loss.csv (" << records.size() << " epochs)\n";
  }
  if (roc) {
    write_file(dir / "roc.csv", roc_to_csv(*roc));
    out << "wrote roc.csv (" << roc->points.size() << " points)\n";
  }
  return exit_code::ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ranked supervised contrastive learning: training, evaluation and gradient checks", "rankedcl"};
  app.fallthrough();
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  app.add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "seed for initialization, shuffling and views");
  app.add_option("--ranking", opt.ranking, "ranking JSON file (overrides the config)")->check(CLI::ExistingFile);
  app.add_option("--withhold", opt.withhold, "classes held out of training, comma separated")->delimiter(',');
  app.add_option("--out", opt.out, "output directory")->capture_default_str();
  app.add_flag("--use-pred-boxes", opt.use_pred_boxes, "crop predicted boxes instead of ground truth");
  app.add_option("--checkpoint", opt.checkpoint, "checkpoint JSON (default: <out>/checkpoint.json)");
  app.add_option("--inject-fault", opt.fault)->group("");

  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  auto* train = app.add_subcommand("train", "train an encoder; writes checkpoint.json and train_log.jsonl");
  auto* eval = app.add_subcommand("eval", "evaluate: classify | detect | ood");
  eval->add_option("mode", opt.mode, "evaluation mode")->required()->check(CLI::IsMember({"classify", "detect", "ood"}));
  auto* plots = app.add_subcommand("export-plots", "write loss.csv, per_rank_loss.csv and roc.csv");
  plots->add_option("--log", opt.log, "train_log.jsonl from train");
  plots->add_option("--report", opt.report, "ood.json from eval ood");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::usage;
  }
  if (seed_opt->count() > 0) opt.seed = seed;

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(opt, out);
    if (train->parsed()) return cmd_train(opt, out, err);
    if (plots->parsed()) return cmd_export_plots(opt, out);
    if (opt.mode == "classify") return cmd_classify(opt, out, err);
    if (opt.mode == "detect") return cmd_detect(opt, out);
    return cmd_ood(opt, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
  }
  return exit_code::usage;
}

}  // namespace rankedcl
