#include "neaw/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "neaw/analysis.hpp"
#include "neaw/classifier.hpp"
#include "neaw/data.hpp"
#include "neaw/errors.hpp"
#include "neaw/io_util.hpp"
#include "neaw/model_io.hpp"

namespace neaw {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config plumbing.

double ExperimentConfig::effective_eta() const {
  if (eta) return *eta;
  return std::min(0.1, std::max(0.01, 0.01 / fraction));
}

namespace {

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ParseError("config key '" + std::string(key) + "': bad number '" + std::string(v) + "'");
  return out;
}

int64_t parse_int(std::string_view key, std::string_view v) {
  int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ParseError("config key '" + std::string(key) + "': bad integer '" + std::string(v) + "'");
  return out;
}

uint64_t parse_u64(std::string_view key, std::string_view v) {
  uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ParseError("config key '" + std::string(key) + "': bad integer '" + std::string(v) + "'");
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void apply_config_kv(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "dataset") cfg.dataset = value;
  else if (key == "data") cfg.data = value;
  else if (key == "out") cfg.out = value;
  else if (key == "train-per-class") cfg.train_per_class = int(parse_int(key, value));
  else if (key == "test-per-class") cfg.test_per_class = int(parse_int(key, value));
  else if (key == "points") cfg.points = int(parse_int(key, value));
  else if (key == "jitter") cfg.jitter = parse_double(key, value);
  else if (key == "rule") cfg.rule = value;
  else if (key == "eta") cfg.eta = parse_double(key, value);
  else if (key == "a") cfg.a = parse_double(key, value);
  else if (key == "b") cfg.b = parse_double(key, value);
  else if (key == "eps") cfg.eps = parse_double(key, value);
  else if (key == "epochs") cfg.epochs = int(parse_int(key, value));
  else if (key == "batch") cfg.batch = int(parse_int(key, value));
  else if (key == "clf-epochs") cfg.clf_epochs = int(parse_int(key, value));
  else if (key == "clf-lr") cfg.clf_lr = parse_double(key, value);
  else if (key == "clf-batch") cfg.clf_batch = int(parse_int(key, value));
  else if (key == "fraction") cfg.fraction = parse_double(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "threads") cfg.threads = int(parse_int(key, value));
  else if (key == "enc-h1") cfg.enc_h1 = int(parse_int(key, value));
  else if (key == "enc-h2") cfg.enc_h2 = int(parse_int(key, value));
  else if (key == "enc-out") cfg.enc_out = int(parse_int(key, value));
  else if (key == "clf-h1") cfg.clf_h1 = int(parse_int(key, value));
  else if (key == "clf-h2") cfg.clf_h2 = int(parse_int(key, value));
  else if (key == "ema") cfg.ema = parse_int(key, value) != 0;
  else if (key == "ema-decay") cfg.ema_decay = parse_double(key, value);
  else throw ParseError("unknown config key '" + std::string(key) + "'");
}

void load_config_file(ExperimentConfig& cfg, const fs::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const size_t eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    apply_config_kv(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
}

void validate_config(const ExperimentConfig& cfg) {
  const std::set<std::string> datasets = {"synthetic", "point-mnist", "modelnet-off"};
  if (!datasets.count(cfg.dataset))
    throw std::invalid_argument("dataset must be synthetic, point-mnist, or modelnet-off");
  rule_from_name(cfg.rule);  // throws on unknown
  if (cfg.out.empty()) throw std::invalid_argument("out must not be empty");
  if (cfg.train_per_class < 1 || cfg.test_per_class < 1)
    throw std::invalid_argument("per-class counts must be >= 1");
  if (cfg.points < 1) throw std::invalid_argument("points must be >= 1");
  if (cfg.jitter < 0) throw std::invalid_argument("jitter must be >= 0");
  if (cfg.eta && !(*cfg.eta >= 0)) throw std::invalid_argument("eta must be >= 0");
  if (cfg.a < 0 || cfg.b < 0) throw std::invalid_argument("a and b must be >= 0");
  if (cfg.eps < 0) throw std::invalid_argument("eps must be >= 0");
  if (cfg.epochs < 0 || cfg.clf_epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (cfg.batch < 1 || cfg.clf_batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(cfg.clf_lr > 0)) throw std::invalid_argument("clf-lr must be > 0");
  if (!(cfg.fraction > 0.0 && cfg.fraction <= 1.0))
    throw std::invalid_argument("fraction must be in (0,1]");
  if (cfg.threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (cfg.enc_h1 < 2 || cfg.enc_h2 < 2 || cfg.enc_out < 2)
    throw std::invalid_argument("encoder widths must be >= 2 (competition needs neurons)");
  if (cfg.clf_h1 < 1 || cfg.clf_h2 < 1) throw std::invalid_argument("head widths must be >= 1");
  if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0))
    throw std::invalid_argument("ema-decay must be in [0,1)");
}

std::map<std::string, std::string> config_snapshot(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> m;
  m["dataset"] = cfg.dataset;
  m["data"] = cfg.data;
  m["out"] = cfg.out;
  m["train-per-class"] = std::to_string(cfg.train_per_class);
  m["test-per-class"] = std::to_string(cfg.test_per_class);
  m["points"] = std::to_string(cfg.points);
  m["jitter"] = format_g17(cfg.jitter);
  m["rule"] = cfg.rule;
  m["eta"] = format_g17(cfg.effective_eta());
  m["a"] = format_g17(cfg.a);
  m["b"] = format_g17(cfg.b);
  m["eps"] = format_g17(cfg.eps);
  m["epochs"] = std::to_string(cfg.epochs);
  m["batch"] = std::to_string(cfg.batch);
  m["clf-epochs"] = std::to_string(cfg.clf_epochs);
  m["clf-lr"] = format_g17(cfg.clf_lr);
  m["clf-batch"] = std::to_string(cfg.clf_batch);
  m["fraction"] = format_g17(cfg.fraction);
  m["seed"] = std::to_string(cfg.seed);
  m["threads"] = std::to_string(cfg.threads);
  m["enc-h1"] = std::to_string(cfg.enc_h1);
  m["enc-h2"] = std::to_string(cfg.enc_h2);
  m["enc-out"] = std::to_string(cfg.enc_out);
  m["clf-h1"] = std::to_string(cfg.clf_h1);
  m["clf-h2"] = std::to_string(cfg.clf_h2);
  m["ema"] = cfg.ema ? "1" : "0";
  m["ema-decay"] = format_g17(cfg.ema_decay);
  return m;
}

void write_manifest(const fs::path& path, const RunManifest& manifest) {
  json j;
  j["code_version"] = std::string(kCodeVersion);
  j["command"] = manifest.command;
  j["config"] = manifest.config;
  json phases = json::array();
  for (const auto& [name, secs] : manifest.phases)
    phases.push_back({{"phase", name}, {"seconds", secs}});
  j["phases"] = phases;
  json outputs = json::array();
  for (const std::string& p : manifest.outputs) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(file_fnv1a64(p)));
    outputs.push_back({{"path", p}, {"fnv1a64", hex}});
  }
  j["outputs"] = outputs;
  write_file_atomic(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Shared command helpers.

namespace {

struct PhaseTimer {
  RunManifest& manifest;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    manifest.phases.emplace_back(name, std::chrono::duration<double>(now - t0).count());
    t0 = now;
  }
};

fs::path dataset_dir(const ExperimentConfig& cfg) {
  return cfg.data.empty() ? fs::path(cfg.out) / "dataset" : fs::path(cfg.data);
}

fs::path model_path(const ExperimentConfig& cfg) { return fs::path(cfg.out) / "model.neaw"; }

DatasetSplit load_split(const ExperimentConfig& cfg, std::string_view split) {
  return load_dataset(dataset_dir(cfg), split);
}

DatasetSplit training_split(const ExperimentConfig& cfg) {
  DatasetSplit train = load_split(cfg, "train");
  if (cfg.fraction < 1.0)
    train = stratified_subset(train, cfg.fraction, derive_seed(cfg.seed, "subset"));
  return train;
}

Mat64 features_of(const EncoderModel& model, const std::vector<PointCloud>& clouds) {
  Mat64 X(int(clouds.size()), model.output_dim());
  for (size_t i = 0; i < clouds.size(); ++i) {
    const GlobalFeature f = global_feature(model, clouds[i]);
    double* row = X.row(int(i));
    std::copy(f.values.begin(), f.values.end(), row);
  }
  return X;
}

std::vector<int> labels_of(const std::vector<PointCloud>& clouds) {
  std::vector<int> y;
  y.reserve(clouds.size());
  for (const PointCloud& c : clouds) {
    if (!c.label) throw std::invalid_argument("cloud '" + c.source_id + "' has no label");
    y.push_back(*c.label);
  }
  return y;
}

std::vector<int> encoder_dims(const ExperimentConfig& cfg, int input_dim) {
  return {input_dim, cfg.enc_h1, cfg.enc_h2, cfg.enc_out};
}

RuleConfig rule_config(const ExperimentConfig& cfg) {
  RuleConfig r;
  r.kind = rule_from_name(cfg.rule);
  r.eta = cfg.effective_eta();
  r.a = cfg.a;
  r.b = cfg.b;
  r.activity_epsilon = cfg.eps;
  return r;
}

EncoderTrainOptions encoder_options(const ExperimentConfig& cfg) {
  EncoderTrainOptions o;
  o.epochs = cfg.epochs;
  o.batch_clouds = cfg.batch;
  o.activity_ema = cfg.ema;
  o.ema_decay = cfg.ema_decay;
  return o;
}

EncoderModel build_encoder(const ExperimentConfig& cfg, const std::vector<PointCloud>& clouds,
                           std::string_view phase) {
  EncoderModel model =
      make_encoder(encoder_dims(cfg, clouds.at(0).dim()), derive_seed(cfg.seed, phase));
  init_encoder_from_data(model, clouds, derive_seed(cfg.seed, std::string(phase) + "-cols"));
  return model;
}

void write_telemetry_csv(const fs::path& path, const std::vector<TelemetryRow>& rows,
                         size_t nlayers) {
  std::string csv = "epoch";
  for (size_t l = 0; l < nlayers; ++l) csv += ",var_l" + std::to_string(l);
  csv += ",mean_col_norm,max_col_norm,wall_seconds\n";
  for (const TelemetryRow& r : rows) {
    csv += std::to_string(r.epoch);
    for (double v : r.layer_variance) csv += ',' + format_g17(v);
    csv += ',' + format_g17(r.mean_col_norm) + ',' + format_g17(r.max_col_norm) + ',' +
           format_g17(r.wall_seconds) + "\n";
  }
  write_file_atomic(path, csv);
}

json eval_report_json(const ExperimentConfig& cfg, const EvalResult& r, size_t n) {
  json j;
  j["dataset"] = cfg.dataset;
  j["n"] = n;
  j["accuracy"] = r.accuracy;
  j["per_class_accuracy"] = r.per_class;
  return j;
}

// Files under root, sorted, as strings. Used to list gen/export outputs.
std::vector<std::string> files_under(const fs::path& root) {
  std::vector<std::string> out;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(root, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw IoError("cannot walk " + root.string() + ": " + ec.message());
    if (it->is_regular_file()) out.push_back(it->path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

DatasetSplit load_modelnet_split(const ExperimentConfig& cfg, std::string_view split,
                                 int per_class) {
  const fs::path root(cfg.data);
  std::vector<std::string> class_dirs;
  std::error_code ec;
  for (auto it = fs::directory_iterator(root, ec); !ec && it != fs::directory_iterator();
       it.increment(ec))
    if (it->is_directory()) class_dirs.push_back(it->path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty())
    throw ParseError("no classes found in '" + cfg.data +
                     "'; expected <dir>/<class>/{train,test}/*.off");

  DatasetSplit out;
  out.class_names = class_dirs;
  int total_files = 0;
  for (size_t c = 0; c < class_dirs.size(); ++c) {
    const fs::path split_dir = root / class_dirs[c] / std::string(split);
    std::vector<fs::path> files;
    for (auto it = fs::directory_iterator(split_dir, ec); !ec && it != fs::directory_iterator();
         it.increment(ec))
      if (it->path().extension() == ".off") files.push_back(it->path());
    std::sort(files.begin(), files.end());
    if (int(files.size()) > per_class) files.resize(size_t(per_class));
    for (const fs::path& f : files) {
      const std::string rel = class_dirs[c] + "/" + std::string(split) + "/" +
                              f.filename().string();
      TriMesh mesh;
      try {
        mesh = parse_off(read_file(f));
      } catch (const ParseError& e) {
        throw ParseError(f.string() + ": " + e.what());
      }
      PointCloud cloud = sample_surface(mesh, cfg.points, derive_seed(cfg.seed, rel));
      cloud.label = int(c);
      cloud.source_id = rel;
      out.clouds.push_back(std::move(cloud));
      ++total_files;
    }
  }
  if (total_files == 0)
    throw ParseError("no .off files found under '" + cfg.data +
                     "'; expected <dir>/<class>/{train,test}/*.off");
  return out;
}

// Renders balanced digit images, persists them as IDX, then ingests through
// the IDX parser so the interchange path is exercised end to end.
DatasetSplit digits_via_idx(const ExperimentConfig& cfg, const fs::path& idx_dir,
                            std::string_view split, int per_class,
                            std::vector<std::string>* written) {
  SeededRng rng(derive_seed(cfg.seed, "render-" + std::string(split)));
  std::vector<std::array<uint8_t, 784>> images;
  std::vector<uint8_t> labels;
  for (int digit = 0; digit < 10; ++digit) {
    for (int i = 0; i < per_class; ++i) {
      images.push_back(render_digit(digit, rng));
      labels.push_back(uint8_t(digit));
    }
  }
  const fs::path images_path = idx_dir / (std::string(split) + "-images.idx");
  const fs::path labels_path = idx_dir / (std::string(split) + "-labels.idx");
  write_file_atomic(images_path, encode_idx_images(images));
  write_file_atomic(labels_path, encode_idx_labels(labels));
  if (written) {
    written->push_back(images_path.string());
    written->push_back(labels_path.string());
  }
  return make_digit_dataset_from_idx(images_path, labels_path, per_class, cfg.points,
                                     derive_seed(cfg.seed, "points-" + std::string(split)),
                                     split);
}

double centroid_accuracy(const Mat64& train_X, const std::vector<int>& train_y, int k,
                         const Mat64& test_X, const std::vector<int>& test_y) {
  const std::vector<Vec64> means = class_mean_features(train_X, train_y, k);
  int correct = 0;
  for (int r = 0; r < test_X.rows; ++r) {
    const double* row = test_X.row(r);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double d = 0.0;
      for (int j = 0; j < test_X.cols; ++j) {
        const double diff = row[j] - means[size_t(c)][size_t(j)];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best == test_y[size_t(r)]) ++correct;
  }
  return test_X.rows ? double(correct) / double(test_X.rows) : 0.0;
}

json suite_json(const SuiteSummary& s) {
  json j;
  j["suite"] = s.suite;
  j["instances"] = s.instances;
  j["violations"] = s.violations;
  j["seed"] = s.seed;
  j["wall_seconds"] = s.wall_seconds;
  if (!s.first_counterexample.empty()) j["first_counterexample"] = s.first_counterexample;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands.

int cmd_gen(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunManifest manifest{"gen", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};
  const fs::path dir = fs::path(cfg.out) / "dataset";

  DatasetSplit train, test;
  if (cfg.dataset == "synthetic") {
    train = make_shape_dataset(cfg.train_per_class, cfg.points, cfg.jitter,
                               derive_seed(cfg.seed, "gen-train"), "train");
    test = make_shape_dataset(cfg.test_per_class, cfg.points, cfg.jitter,
                              derive_seed(cfg.seed, "gen-test"), "test");
  } else if (cfg.dataset == "point-mnist") {
    std::vector<std::string> idx_files;
    train = digits_via_idx(cfg, dir / "idx", "train", cfg.train_per_class, &idx_files);
    test = digits_via_idx(cfg, dir / "idx", "test", cfg.test_per_class, &idx_files);
  } else {  // modelnet-off
    if (cfg.data.empty())
      throw std::invalid_argument("modelnet-off needs --data pointing at the OFF tree");
    train = load_modelnet_split(cfg, "train", cfg.train_per_class);
    test = load_modelnet_split(cfg, "test", cfg.test_per_class);
  }
  timer.lap("build");

  save_dataset(dir, train, test);
  timer.lap("save");

  manifest.outputs = files_under(dir);
  write_manifest(fs::path(cfg.out) / "manifest_gen.json", manifest);
  std::cout << "gen: " << train.clouds.size() << " train / " << test.clouds.size()
            << " test clouds, " << train.class_names.size() << " classes -> " << dir.string()
            << "\n";
  return 0;
}

int cmd_train_encoder(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunManifest manifest{"train-encoder", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};

  const DatasetSplit train = training_split(cfg);
  timer.lap("load-dataset");

  EncoderModel model = build_encoder(cfg, train.clouds, "encoder-init");
  const RuleConfig rule = rule_config(cfg);
  const std::vector<TelemetryRow> rows =
      train_encoder(model, train.clouds, rule, encoder_options(cfg), cfg.seed);
  timer.lap("train");

  const fs::path mpath = model_path(cfg);
  save_model(mpath, model);
  ModelMeta meta;
  meta.encoder_dims = encoder_dims(cfg, train.clouds.at(0).dim());
  meta.rule = cfg.rule;
  meta.eta = cfg.effective_eta();
  meta.a = cfg.a;
  meta.b = cfg.b;
  meta.activity_epsilon = cfg.eps;
  meta.epochs = cfg.epochs;
  meta.batch_clouds = cfg.batch;
  meta.fraction = cfg.fraction;
  meta.seed = cfg.seed;
  const fs::path meta_path = fs::path(cfg.out) / "model.meta.json";
  save_meta(meta_path, meta);
  const fs::path telemetry_path = fs::path(cfg.out) / "encoder_telemetry.csv";
  write_telemetry_csv(telemetry_path, rows, model.layers.size());
  timer.lap("save");

  manifest.outputs = {mpath.string(), meta_path.string(), telemetry_path.string()};
  write_manifest(fs::path(cfg.out) / "manifest_train-encoder.json", manifest);
  std::cout << "train-encoder: " << cfg.epochs << " epochs on " << train.clouds.size()
            << " clouds (eta " << format_g17(rule.eta) << ") -> " << mpath.string() << "\n";
  return 0;
}

int cmd_train_classifier(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunManifest manifest{"train-classifier", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};

  const fs::path mpath = model_path(cfg);
  const uint64_t encoder_hash_before = encoder_section_hash(mpath);
  LoadedModel loaded = load_model(mpath);
  const DatasetSplit train = training_split(cfg);
  const DatasetSplit test = load_split(cfg, "test");
  const int k = train.num_classes();
  timer.lap("load");

  const Mat64 train_X = features_of(loaded.encoder, train.clouds);
  const std::vector<int> train_y = labels_of(train.clouds);
  const Mat64 test_X = features_of(loaded.encoder, test.clouds);
  const std::vector<int> test_y = labels_of(test.clouds);
  timer.lap("features");

  ClassifierModel clf = make_classifier({loaded.encoder.output_dim(), cfg.clf_h1, cfg.clf_h2, k},
                                        derive_seed(cfg.seed, "clf-init"));
  ClassifierTrainOptions opts;
  opts.epochs = cfg.clf_epochs;
  opts.batch = cfg.clf_batch;
  opts.lr = cfg.clf_lr;
  const std::vector<ClfEpochRow> loss_rows =
      train_classifier(clf, train_X, train_y, opts, derive_seed(cfg.seed, "clf-train"));
  timer.lap("train");

  save_model(mpath, loaded.encoder, &clf);
  const uint64_t encoder_hash_after = encoder_section_hash(mpath);
  if (encoder_hash_after != encoder_hash_before)
    throw VerifyError("encoder bytes changed during classifier training");

  const EvalResult train_eval = evaluate_classifier(clf, train_X, train_y);
  const EvalResult test_eval = evaluate_classifier(clf, test_X, test_y);

  json report = eval_report_json(cfg, test_eval, test.clouds.size());
  report["split"] = "test";
  report["train_accuracy"] = train_eval.accuracy;
  report["final_loss"] = loss_rows.empty() ? 0.0 : loss_rows.back().loss;
  report["clf_epochs"] = cfg.clf_epochs;
  report["encoder_hash_unchanged"] = true;
  const fs::path report_path = fs::path(cfg.out) / "classifier_report.json";
  write_file_atomic(report_path, report.dump(2) + "\n");

  std::string loss_csv = "epoch,loss,wall_seconds\n";
  for (const ClfEpochRow& r : loss_rows)
    loss_csv += std::to_string(r.epoch) + ',' + format_g17(r.loss) + ',' +
                format_g17(r.wall_seconds) + "\n";
  const fs::path loss_path = fs::path(cfg.out) / "classifier_loss.csv";
  write_file_atomic(loss_path, loss_csv);

  ModelMeta meta = load_meta(fs::path(cfg.out) / "model.meta.json");
  meta.classifier_dims = clf.dims;
  save_meta(fs::path(cfg.out) / "model.meta.json", meta);
  timer.lap("save");

  manifest.outputs = {mpath.string(), report_path.string(), loss_path.string(),
                      (fs::path(cfg.out) / "model.meta.json").string()};
  write_manifest(fs::path(cfg.out) / "manifest_train-classifier.json", manifest);
  std::cout << "train-classifier: test accuracy " << format_g17(test_eval.accuracy) << " on "
            << test.clouds.size() << " clouds\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunManifest manifest{"eval", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};

  const LoadedModel loaded = load_model(model_path(cfg));
  if (!loaded.classifier)
    throw std::invalid_argument("model has no classifier head; run train-classifier first");
  const DatasetSplit test = load_split(cfg, "test");
  timer.lap("load");

  const Mat64 X = features_of(loaded.encoder, test.clouds);
  const std::vector<int> y = labels_of(test.clouds);
  const EvalResult r = evaluate_classifier(*loaded.classifier, X, y);
  timer.lap("eval");

  const fs::path report_path = fs::path(cfg.out) / "eval_report.json";
  write_file_atomic(report_path, eval_report_json(cfg, r, test.clouds.size()).dump(2) + "\n");
  manifest.outputs = {report_path.string()};
  write_manifest(fs::path(cfg.out) / "manifest_eval.json", manifest);
  std::cout << "eval: accuracy " << format_g17(r.accuracy) << " on " << test.clouds.size()
            << " clouds\n";
  return 0;
}

int cmd_analyze(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunManifest manifest{"analyze", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};

  const LoadedModel loaded = load_model(model_path(cfg));
  const DatasetSplit train = training_split(cfg);
  const int k = train.num_classes();
  timer.lap("load");

  const fs::path adir = fs::path(cfg.out) / "analysis";
  export_artifacts(loaded.encoder, train.clouds, k, adir.string());

  const ActivityReport rep = activity_report(loaded.encoder, train.clouds, k);
  const Mat64 X = features_of(loaded.encoder, train.clouds);
  const std::vector<int> y = labels_of(train.clouds);
  const std::vector<Vec64> means = class_mean_features(X, y, k);
  const DissimilarityMatrix dis = dissimilarity(means);
  timer.lap("activity");

  std::string dis_csv = "class";
  for (const std::string& name : train.class_names) dis_csv += ',' + name;
  dis_csv += '\n';
  for (int a = 0; a < k; ++a) {
    dis_csv += train.class_names[size_t(a)];
    for (int b = 0; b < k; ++b) dis_csv += ',' + format_g17(dis.D.at(a, b));
    dis_csv += '\n';
  }
  write_file_atomic(adir / "dissimilarity.csv", dis_csv);

  std::string abl_csv = "neuron,delta_frobenius,cross_class_variance\n";
  for (int j = 0; j < loaded.encoder.output_dim(); ++j) {
    const AblationResult ar = deactivation_ablation(X, y, k, j);
    abl_csv += std::to_string(j) + ',' + format_g17(ar.delta_frobenius) + ',' +
               format_g17(ar.cross_class_variance) + "\n";
  }
  write_file_atomic(adir / "ablation.csv", abl_csv);
  timer.lap("ablation");

  json summary;
  summary["dataset"] = cfg.dataset;
  summary["n"] = train.clouds.size();
  summary["num_classes"] = k;
  summary["activity_variance"] = rep.variance;
  summary["dissimilarity_frobenius"] = dis.frobenius;
  summary["class_points"] = rep.class_points;
  write_file_atomic(adir / "summary.json", summary.dump(2) + "\n");
  timer.lap("save");

  manifest.outputs = files_under(adir);
  write_manifest(fs::path(cfg.out) / "manifest_analyze.json", manifest);
  std::cout << "analyze: variance " << format_g17(rep.variance) << ", frobenius "
            << format_g17(dis.frobenius) << " -> " << adir.string() << "\n";
  return 0;
}

int cmd_verify(const ExperimentConfig& cfg, const std::string& suite, int64_t n) {
  validate_config(cfg);
  if (n < 1) throw std::invalid_argument("verify needs n >= 1");
  RunManifest manifest{"verify", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};

  json j;
  int64_t violations = 0;
  if (suite == "theorem1") {
    const SuiteSummary s = run_theorem1_suite(n, derive_seed(cfg.seed, "verify-theorem1"));
    violations = s.violations;
    j = suite_json(s);
  } else if (suite == "corollaries") {
    const SuiteSummary h =
        run_corollary_suite(HomogeneousMode::BothHebbian, n, derive_seed(cfg.seed, "verify-cor-h"));
    const SuiteSummary a =
        run_corollary_suite(HomogeneousMode::BothAnti, n, derive_seed(cfg.seed, "verify-cor-a"));
    violations = h.violations + a.violations;
    j["suite"] = "corollaries";
    j["instances"] = h.instances + a.instances;
    j["violations"] = violations;
    j["seed"] = cfg.seed;
    j["parts"] = json::array({suite_json(h), suite_json(a)});
  } else if (suite == "eq5") {
    const SuiteSummary s = run_eq5_suite(n, derive_seed(cfg.seed, "verify-eq5"));
    violations = s.violations;
    j = suite_json(s);
  } else if (suite == "ordering") {
    if (n < 3) throw std::invalid_argument("ordering suite needs n >= 3 seeds");
    const DatasetSplit data =
        make_shape_dataset(cfg.train_per_class, cfg.points, cfg.jitter,
                           derive_seed(cfg.seed, "ordering-data"), "ordering");
    std::vector<uint64_t> seeds;
    for (int64_t i = 0; i < n; ++i)
      seeds.push_back(derive_seed(cfg.seed, "ordering-seed-" + std::to_string(i)));
    RuleConfig base = rule_config(cfg);
    base.kind = RuleKind::NeAW;
    const std::vector<RuleVarianceSeries> series = variance_ordering_experiment(
        data.clouds, encoder_dims(cfg, 3), base, encoder_options(cfg), seeds);
    Vec64 fin_neaw, fin_h, fin_ah;
    for (const RuleVarianceSeries& s : series) {
      if (s.per_epoch.empty()) throw VerifyError("ordering suite needs epochs >= 1");
      if (s.rule == RuleKind::NeAW) fin_neaw.push_back(s.per_epoch.back());
      else if (s.rule == RuleKind::NeAW_H) fin_h.push_back(s.per_epoch.back());
      else fin_ah.push_back(s.per_epoch.back());
    }
    const double med_neaw = median_of(fin_neaw);
    const double med_h = median_of(fin_h);
    const double med_ah = median_of(fin_ah);
    violations = int64_t(med_neaw < med_h) + int64_t(med_neaw < med_ah);
    j["suite"] = "ordering";
    j["instances"] = n;
    j["violations"] = violations;
    j["seed"] = cfg.seed;
    j["median_final_variance"] = {{"neaw", med_neaw}, {"neaw-h", med_h}, {"neaw-ah", med_ah}};
    json runs = json::array();
    for (const RuleVarianceSeries& s : series)
      runs.push_back({{"rule", rule_name(s.rule)}, {"seed", s.seed}, {"per_epoch", s.per_epoch}});
    j["runs"] = runs;
  } else {
    throw std::invalid_argument("unknown suite '" + suite +
                                "' (theorem1 | corollaries | eq5 | ordering)");
  }
  timer.lap("run");
  j["master_seed"] = cfg.seed;

  const fs::path jpath = fs::path(cfg.out) / ("verify_" + suite + ".json");
  write_file_atomic(jpath, j.dump(2) + "\n");
  manifest.outputs = {jpath.string()};
  write_manifest(fs::path(cfg.out) / "manifest_verify.json", manifest);
  std::cout << j.dump(2) << "\n";
  return violations == 0 ? 0 : 1;
}

int cmd_sweep_ab(const ExperimentConfig& cfg, const std::vector<double>& a_values,
                 const std::vector<double>& b_values) {
  validate_config(cfg);
  if (a_values.empty() || b_values.empty())
    throw std::invalid_argument("sweep-ab needs nonempty a and b grids");
  for (double v : a_values)
    if (v < 0) throw std::invalid_argument("a values must be >= 0");
  for (double v : b_values)
    if (v < 0) throw std::invalid_argument("b values must be >= 0");
  RunManifest manifest{"sweep-ab", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};

  const DatasetSplit train = training_split(cfg);
  const DatasetSplit test = load_split(cfg, "test");
  const int k = train.num_classes();
  const std::vector<int> train_y = labels_of(train.clouds);
  const std::vector<int> test_y = labels_of(test.clouds);
  timer.lap("load");

  // Shared init and schedule: every grid cell starts from the same weights
  // and sees the same shuffles, so only (a, b) varies.
  const EncoderModel init = build_encoder(cfg, train.clouds, "sweep-init");
  const uint64_t train_seed = derive_seed(cfg.seed, "sweep-train");

  std::string csv = "a,b,final_variance,centroid_accuracy";
  for (int e = 0; e < cfg.epochs; ++e) csv += ",var_e" + std::to_string(e);
  csv += '\n';
  for (double a : a_values) {
    for (double b : b_values) {
      EncoderModel model = init;
      RuleConfig rule = rule_config(cfg);
      rule.a = a;
      rule.b = b;
      const std::vector<TelemetryRow> rows =
          train_encoder(model, train.clouds, rule, encoder_options(cfg), train_seed);
      const double fin = rows.empty() ? 0.0 : rows.back().layer_variance.back();
      const double acc = centroid_accuracy(features_of(model, train.clouds), train_y, k,
                                           features_of(model, test.clouds), test_y);
      csv += format_g17(a) + ',' + format_g17(b) + ',' + format_g17(fin) + ',' + format_g17(acc);
      for (const TelemetryRow& r : rows) csv += ',' + format_g17(r.layer_variance.back());
      csv += '\n';
    }
  }
  timer.lap("sweep");

  const fs::path csv_path = fs::path(cfg.out) / "sweep_ab.csv";
  write_file_atomic(csv_path, csv);
  manifest.outputs = {csv_path.string()};
  write_manifest(fs::path(cfg.out) / "manifest_sweep-ab.json", manifest);
  std::cout << "sweep-ab: " << a_values.size() * b_values.size() << " cells -> "
            << csv_path.string() << "\n";
  return 0;
}

int cmd_export(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunManifest manifest{"export", config_snapshot(cfg), {}, {}};
  PhaseTimer timer{manifest};

  const LoadedModel loaded = load_model(model_path(cfg));
  const DatasetSplit train = training_split(cfg);
  timer.lap("load");

  const fs::path edir = fs::path(cfg.out) / "export";
  export_artifacts(loaded.encoder, train.clouds, train.num_classes(), edir.string());
  timer.lap("export");

  manifest.outputs = files_under(edir);
  write_manifest(fs::path(cfg.out) / "manifest_export.json", manifest);
  std::cout << "export: " << manifest.outputs.size() << " files -> " << edir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing.

int run_cli(int argc, const char* const* argv) {
  ExperimentConfig cfg;

  // Config file first so explicit flags override its values.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string_view arg = argv[i];
      if (arg == "--config" && i + 1 < argc) load_config_file(cfg, argv[i + 1]);
      else if (arg.rfind("--config=", 0) == 0) load_config_file(cfg, std::string(arg.substr(9)));
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  CLI::App app{"Winner-take-all point-cloud encoder workbench"};
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file (flags override it)");
  app.add_option("--dataset", cfg.dataset, "synthetic | point-mnist | modelnet-off");
  app.add_option("--data", cfg.data, "dataset directory (default <out>/dataset)");
  app.add_option("--out", cfg.out, "output directory");
  app.add_option("--train-per-class", cfg.train_per_class, "training clouds per class");
  app.add_option("--test-per-class", cfg.test_per_class, "test clouds per class");
  app.add_option("--points", cfg.points, "points per cloud");
  app.add_option("--jitter", cfg.jitter, "synthetic surface noise std");
  app.add_option("--rule", cfg.rule, "neaw | neaw-h | neaw-ah | hebb | oja | grossberg");
  app.add_option("--eta", cfg.eta, "learning rate (default: limited-data schedule)");
  app.add_option("--a", cfg.a, "Hebbian branch scale");
  app.add_option("--b", cfg.b, "anti-Hebbian branch scale");
  app.add_option("--eps", cfg.eps, "activity dead-band half-width");
  app.add_option("--epochs", cfg.epochs, "encoder epochs");
  app.add_option("--batch", cfg.batch, "clouds per merged batch");
  app.add_option("--clf-epochs", cfg.clf_epochs, "classifier epochs");
  app.add_option("--clf-lr", cfg.clf_lr, "classifier learning rate");
  app.add_option("--clf-batch", cfg.clf_batch, "classifier batch size");
  app.add_option("--fraction", cfg.fraction, "stratified share of the train split");
  app.add_option("--seed", cfg.seed, "master seed; phases derive from it");
  app.add_option("--threads", cfg.threads, "worker cap (phases run sequentially)");
  app.add_option("--enc-h1", cfg.enc_h1, "encoder hidden width 1");
  app.add_option("--enc-h2", cfg.enc_h2, "encoder hidden width 2");
  app.add_option("--enc-out", cfg.enc_out, "encoder output width");
  app.add_option("--clf-h1", cfg.clf_h1, "classifier hidden width 1");
  app.add_option("--clf-h2", cfg.clf_h2, "classifier hidden width 2");
  app.add_flag("--ema", cfg.ema, "smooth activity estimates across batches");
  app.add_option("--ema-decay", cfg.ema_decay, "activity smoothing decay in [0,1)");

  app.require_subcommand(1);
  CLI::App* gen = app.add_subcommand("gen", "generate or ingest a dataset");
  CLI::App* train_enc = app.add_subcommand("train-encoder", "train the encoder");
  CLI::App* train_clf = app.add_subcommand("train-classifier", "train the head, encoder frozen");
  CLI::App* eval = app.add_subcommand("eval", "evaluate the classifier on the test split");
  CLI::App* analyze = app.add_subcommand("analyze", "activity, dissimilarity, ablation reports");
  CLI::App* verify = app.add_subcommand("verify", "run a randomized verification suite");
  std::string suite;
  int64_t verify_n = 10000;
  verify->add_option("suite", suite, "theorem1 | corollaries | eq5 | ordering")->required();
  verify->add_option("--n", verify_n, "instances (seeds for ordering)");
  CLI::App* sweep = app.add_subcommand("sweep-ab", "grid over the rule's a/b scales");
  std::vector<double> a_values, b_values;
  sweep->add_option("--a-values", a_values, "grid of a values")->delimiter(',')->required();
  sweep->add_option("--b-values", b_values, "grid of b values")->delimiter(',')->required();
  CLI::App* exp = app.add_subcommand("export", "write plotting CSVs for a trained model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(cfg);
    if (train_enc->parsed()) return cmd_train_encoder(cfg);
    if (train_clf->parsed()) return cmd_train_classifier(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (analyze->parsed()) return cmd_analyze(cfg);
    if (verify->parsed()) return cmd_verify(cfg, suite, verify_n);
    if (sweep->parsed()) return cmd_sweep_ab(cfg, a_values, b_values);
    if (exp->parsed()) return cmd_export(cfg);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const VerifyError& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace neaw
