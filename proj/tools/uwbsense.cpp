// uwbsense: simulate captures, build datapoints, train, evaluate and
// fine-tune the two-stream estimator from the command line.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "uwbsense/checkpoint.hpp"
#include "uwbsense/eval.hpp"
#include "uwbsense/pipeline.hpp"
#include "uwbsense/recordio.hpp"
#include "uwbsense/settings.hpp"
#include "uwbsense/train.hpp"

namespace fs = std::filesystem;
using namespace uwbsense;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool deterministic = false;
  bool quiet = false;
};

void log(const Common& c, const std::string& line) {
  if (!c.quiet) std::cerr << line << "\n";
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

/// Config file first, then --set overrides, then dedicated flags (applied
/// by the caller). The seed follows --seed, UWBSENSE_SEED, `seed` key, 1.
KvConfig load_config(const Common& c) {
  KvConfig kv = c.config_path.empty() ? KvConfig{} : KvConfig::load(c.config_path);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ValidationError("--set expects key=value, got " + o);
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  return kv;
}

std::uint64_t resolve_seed(const Common& c, const KvConfig& kv) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("UWBSENSE_SEED"); env && *env) {
    KvConfig tmp;
    tmp.set("UWBSENSE_SEED", env);
    return tmp.get_u64("UWBSENSE_SEED", 1);
  }
  return kv.get_u64("seed", 1);
}

int effective_threads(const Common& c) {
  // Results do not depend on the thread count; --deterministic still pins
  // the run to one worker so that replays share a single code path.
  if (c.deterministic) return 1;
  if (c.threads < 1) throw ValidationError("--threads must be at least 1");
  return c.threads;
}

fs::path prepare_out(const Common& c) {
  if (c.out_dir.empty()) throw ValidationError("--out is required");
  fs::path dir(c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ValidationError("cannot create output directory " + c.out_dir);
  return dir;
}

class Manifest {
 public:
  Manifest(std::string command, const Common& c, std::uint64_t seed) {
    kv_.set("command", std::move(command));
    kv_.set("version", kVersion);
    kv_.set("seed", std::to_string(seed));
    kv_.set("threads", std::to_string(effective_threads(c)));
    kv_.set("deterministic", c.deterministic ? "true" : "false");
    kv_.set("started_utc", utc_now());
  }

  void input(const std::string& name, const std::string& path) {
    kv_.set("input." + name, fs::absolute(path).string());
    kv_.set("input." + name + ".fnv1a64", hex64(file_hash(path)));
  }

  void output(const std::string& name, const fs::path& path) {
    kv_.set("output." + name, path.filename().string());
    kv_.set("output." + name + ".fnv1a64", hex64(file_hash(path.string())));
  }

  void note(const std::string& key, const std::string& value) { kv_.set(key, value); }

  /// Writes config.cfg (the effective settings, loadable with --config)
  /// and manifest.txt.
  void write(const fs::path& dir, KvConfig config) {
    std::ofstream cfg(dir / "config.cfg", std::ios::trunc);
    cfg << config.to_string();
    if (!cfg) throw Error("cannot write config.cfg");
    kv_.set("config", "config.cfg");
    kv_.set("config.fnv1a64", hex64(fnv1a64(config.to_string())));
    kv_.set("finished_utc", utc_now());
    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    out << kv_.to_string();
    if (!out) throw Error("cannot write manifest.txt");
  }

 private:
  KvConfig kv_;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--config", c.config_path, "key = value settings file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override one setting, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "random seed (else UWBSENSE_SEED, else config `seed`)");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--deterministic", c.deterministic, "single worker, replayable outputs");
  cmd->add_flag("--quiet", c.quiet, "no progress output");
  if (with_out) cmd->add_option("--out", c.out_dir, "output directory")->required();
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  Common c;
  std::optional<double> duration;
  std::optional<int> persons;
  std::optional<std::string> activity;
};

int cmd_simulate(const SimulateArgs& a) {
  KvConfig kv = load_config(a.c);
  if (a.duration) kv.set("sim.duration_s", format_double(*a.duration));
  if (a.persons) kv.set("sim.persons", std::to_string(*a.persons));
  if (a.activity) kv.set("sim.activity", *a.activity);
  SimulationSpec spec = simulation_from_kv(kv);
  spec.seed = resolve_seed(a.c, kv);
  const auto dir = prepare_out(a.c);
  Manifest manifest("simulate", a.c, spec.seed);

  CaptureWriter writer((dir / "capture.uwbc").string(), spec.radio.hash());
  log(a.c, "simulating " + format_double(spec.duration_s) + " s, " +
               std::to_string(spec.persons) + " person(s), " + to_string(spec.activity));
  const auto sim = simulate(spec, [&](const CirRecord& r) { writer.write(r); });
  writer.close();
  write_trajectories_csv((dir / "truth.csv").string(), sim.truth);
  {
    std::ofstream s(dir / "summary.txt", std::ios::trunc);
    s << sim.summary.to_text();
  }
  log(a.c, sim.summary.to_text());

  KvConfig effective;
  write_kv(effective, spec);
  effective.set("seed", std::to_string(spec.seed));
  manifest.output("capture", dir / "capture.uwbc");
  manifest.output("truth", dir / "truth.csv");
  manifest.output("summary", dir / "summary.txt");
  manifest.write(dir, effective);
  return 0;
}

// -------------------------------------------------------------- preprocess

struct PreprocessArgs {
  Common c;
  std::vector<std::string> inputs;
  std::vector<std::string> captures;
  std::vector<std::string> truths;
  std::string task;
  std::optional<int> m, blocks;
  std::optional<double> window, hop;
};

int cmd_preprocess(const PreprocessArgs& a) {
  KvConfig kv = load_config(a.c);
  if (a.m) kv.set("preprocess.m", std::to_string(*a.m));
  if (a.blocks) kv.set("preprocess.c", std::to_string(*a.blocks));
  if (a.window) kv.set("preprocess.window_s", format_double(*a.window));
  if (a.hop) kv.set("preprocess.hop_s", format_double(*a.hop));
  const auto pre = preprocess_from_kv(kv);
  const Task task = task_from_string(a.task);

  std::vector<std::pair<std::string, std::string>> runs;
  for (const auto& d : a.inputs)
    runs.push_back({(fs::path(d) / "capture.uwbc").string(), (fs::path(d) / "truth.csv").string()});
  if (a.captures.size() != a.truths.size())
    throw ValidationError("every --capture needs a matching --truth");
  for (std::size_t i = 0; i < a.captures.size(); ++i) runs.push_back({a.captures[i], a.truths[i]});
  if (runs.empty()) throw ValidationError("no input: give --input DIR or --capture/--truth");
  for (const auto& [cap, truth] : runs) {
    if (!fs::exists(cap)) throw ValidationError("capture file not found: " + cap);
    if (!fs::exists(truth)) throw ValidationError("truth file not found: " + truth);
  }

  const auto dir = prepare_out(a.c);
  const std::uint64_t seed = resolve_seed(a.c, kv);
  Manifest manifest("preprocess", a.c, seed);
  std::vector<DataPoint> points;
  std::set<std::pair<int, int>> first_links;
  std::size_t incomplete = 0, truncated = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [cap, truth_path] = runs[i];
    const auto truth = read_trajectories_csv(truth_path);
    CaptureReader reader(cap);
    BlockAccumulator acc(pre);
    while (auto r = reader.next()) acc.add(*r);
    truncated += reader.truncated_bytes();
    std::vector<LinkId> links;
    std::set<std::pair<int, int>> seen;
    for (const auto& [link, stats] : acc.stats()) {
      links.push_back(link);
      seen.insert({link.tx, link.rx});
    }
    if (links.empty()) throw ValidationError(cap + ": no complete blocks in capture");
    if (i == 0)
      first_links = seen;
    else if (seen != first_links)
      throw ValidationError(cap + ": link set differs from the first capture");
    DatapointSummary summary;
    auto pts = make_datapoints(acc, links, pre, &truth, task, &summary);
    incomplete += summary.incomplete;
    log(a.c, cap + ": " + std::to_string(acc.records()) + " records -> " +
                 std::to_string(pts.size()) + " datapoints (" +
                 std::to_string(summary.incomplete) + " incomplete windows)");
    std::move(pts.begin(), pts.end(), std::back_inserter(points));
    manifest.input("capture" + std::to_string(i), cap);
    manifest.input("truth" + std::to_string(i), truth_path);
  }
  if (truncated) log(a.c, "warning: " + std::to_string(truncated) + " trailing bytes ignored");
  if (points.empty()) throw ValidationError("no datapoints could be built");

  const auto out = dir / "datapoints.uwbd";
  write_datapoints(out.string(), task, config_hash(pre), points);
  const auto& p0 = points.front();
  log(a.c, "wrote " + std::to_string(points.size()) + " datapoints of shape (" +
               std::to_string(p0.links) + ",2," + std::to_string(p0.c) + "," +
               std::to_string(p0.length) + ")");

  KvConfig effective;
  write_kv(effective, pre);
  effective.set("task", to_string(task));
  manifest.note("datapoints", std::to_string(points.size()));
  manifest.note("incomplete_windows", std::to_string(incomplete));
  manifest.output("datapoints", out);
  manifest.write(dir, effective);
  return 0;
}

// ------------------------------------------------------------------- train

void write_history(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot create " + path.string());
  out << "epoch,train_loss,val_loss,val_metric\n";
  for (const auto& h : history)
    out << h.epoch << "," << format_double(h.train_loss) << "," << format_double(h.val_loss)
        << "," << format_double(h.val_metric) << "\n";
}

std::string epoch_line(Task task, const EpochRecord& r) {
  std::ostringstream os;
  os << "epoch " << r.epoch << "  train_loss " << std::setprecision(4) << r.train_loss;
  if (r.val_loss != 0.0 || r.val_metric != 0.0)
    os << "  val_loss " << r.val_loss
       << (is_classification(task) ? "  val_accuracy " : "  val_mean_error_m ") << r.val_metric;
  return os.str();
}

struct TrainArgs {
  Common c;
  std::string data, val;
  std::optional<int> epochs, batch;
  std::optional<double> lr;
};

int cmd_train(const TrainArgs& a) {
  KvConfig kv = load_config(a.c);
  if (a.epochs) kv.set("train.epochs", std::to_string(*a.epochs));
  if (a.batch) kv.set("train.batch_size", std::to_string(*a.batch));
  if (a.lr) kv.set("train.learning_rate", format_double(*a.lr));
  TrainConfig cfg = train_from_kv(kv);
  cfg.seed = resolve_seed(a.c, kv);
  cfg.threads = effective_threads(a.c);
  const auto file = read_datapoints(a.data);
  const Task task = file.header.task;

  std::vector<DataPoint> train_set, val_set;
  std::size_t held_out = 0;
  if (a.val.empty()) {
    auto s = split_by_time(file.points);
    train_set = std::move(s.train);
    val_set = std::move(s.val);
    held_out = s.test.size();
  } else {
    train_set = file.points;
    val_set = read_datapoints(a.val).points;
  }
  if (train_set.empty() || val_set.empty())
    throw ValidationError("too few datapoints for a train/validation split");
  const auto dir = prepare_out(a.c);
  Manifest manifest("train", a.c, cfg.seed);
  manifest.input("data", a.data);
  if (!a.val.empty()) manifest.input("val", a.val);

  ArchConfig arch;
  arch.links = file.header.links;
  arch.blocks = file.header.c;
  arch.length = file.header.length;
  TwoStreamNet<float> model(task, arch, cfg.seed);
  centre_output(model, train_set);
  log(a.c, std::string(to_string(task)) + ": " + std::to_string(train_set.size()) + " train, " +
               std::to_string(val_set.size()) + " validation, " + std::to_string(held_out) +
               " held out; " + std::to_string(model.parameter_count()) + " parameters");
  cfg.on_epoch = [&](const EpochRecord& r) { log(a.c, epoch_line(task, r)); };
  auto result = train(std::move(model), train_set, val_set, cfg);

  const auto model_path = dir / "model.uwbm";
  save_checkpoint(model_path.string(), result.model, static_cast<std::uint32_t>(result.best_epoch));
  write_history(dir / "history.csv", result.history);
  log(a.c, "best epoch " + std::to_string(result.best_epoch));

  KvConfig effective;
  write_kv(effective, cfg);
  effective.set("seed", std::to_string(cfg.seed));
  manifest.note("best_epoch", std::to_string(result.best_epoch));
  manifest.output("model", model_path);
  manifest.output("history", dir / "history.csv");
  manifest.write(dir, effective);
  return 0;
}

// -------------------------------------------------------------------- eval

/// predictions.csv: t_end_us,x,y (localization) or t_end_us,class.
void write_predictions(const fs::path& path, Task task, std::span<const DataPoint> pts,
                       std::span<const Prediction> preds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot create " + path.string());
  out << (task == Task::Localization ? "t_end_us,x,y\n" : "t_end_us,class\n");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out << pts[i].t_end_us << ",";
    if (task == Task::Localization)
      out << format_double(preds[i].position.x) << "," << format_double(preds[i].position.y) << "\n";
    else
      out << preds[i].predicted_class() << "\n";
  }
}

std::vector<Prediction> read_predictions(const std::string& path, Task task,
                                         std::span<const DataPoint> pts) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open predictions file: " + path);
  std::string line;
  std::getline(in, line);
  const std::string want = task == Task::Localization ? "t_end_us,x,y" : "t_end_us,class";
  if (line != want) throw FormatError(path + ": header must be " + want);
  std::vector<Prediction> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    const std::size_t row = out.size();
    try {
      if (f.size() != (task == Task::Localization ? 3u : 2u)) throw std::invalid_argument("fields");
      if (row >= pts.size() || std::stoull(f[0]) != pts[row].t_end_us)
        throw ValidationError(path + ": row " + std::to_string(row + 1) +
                              " does not match the datapoint sequence");
      Prediction p;
      if (task == Task::Localization) {
        p.position = {std::stod(f[1]), std::stod(f[2])};
      } else {
        const int k = std::stoi(f[1]);
        if (k < 0 || k >= task_outputs(task)) throw ValidationError(path + ": class out of range");
        p.logits.assign(static_cast<std::size_t>(task_outputs(task)), 0.0);
        p.logits[static_cast<std::size_t>(k)] = 1.0;
      }
      out.push_back(std::move(p));
    } catch (const std::logic_error&) {
      throw FormatError(path + ": malformed row " + std::to_string(row + 1));
    }
  }
  if (out.size() != pts.size())
    throw ValidationError(path + ": " + std::to_string(out.size()) + " predictions for " +
                          std::to_string(pts.size()) + " datapoints");
  return out;
}

struct EvalArgs {
  Common c;
  std::string data, model, predictions, split = "all";
  int smooth = 5;
};

int cmd_eval(const EvalArgs& a) {
  KvConfig kv = load_config(a.c);
  if (a.model.empty() == a.predictions.empty())
    throw ValidationError("give exactly one of --model or --predictions");
  const auto file = read_datapoints(a.data);
  const Task task = file.header.task;
  std::vector<DataPoint> pts;
  if (a.split == "all")
    pts = file.points;
  else if (a.split == "test")
    pts = split_by_time(file.points).test;
  else
    throw ValidationError("--split must be all or test");
  if (pts.empty()) throw ValidationError("no datapoints to evaluate");

  const auto dir = prepare_out(a.c);
  Manifest manifest("eval", a.c, resolve_seed(a.c, kv));
  manifest.input("data", a.data);
  std::vector<Prediction> preds;
  if (!a.model.empty()) {
    manifest.input("model", a.model);
    CheckpointInfo info;
    auto model = load_checkpoint<float>(a.model, &info);
    if (info.task != task)
      throw ValidationError(std::string("model task ") + to_string(info.task) +
                            " does not match data task " + to_string(task));
    preds = predict(model, pts, 64, effective_threads(a.c));
  } else {
    manifest.input("predictions", a.predictions);
    preds = read_predictions(a.predictions, task, pts);
  }

  write_predictions(dir / "predictions.csv", task, pts, preds);
  manifest.output("predictions", dir / "predictions.csv");
  if (task == Task::Localization) {
    std::vector<double> errors;
    std::vector<TimedPosition> p, t;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      errors.push_back(distance(preds[i].position, pts[i].label.position));
      const double ts = static_cast<double>(pts[i].t_end_us) * 1e-6;
      p.push_back({ts, preds[i].position});
      t.push_back({ts, pts[i].label.position});
    }
    const auto m = localization_metrics(errors);
    write_metrics_csv((dir / "metrics.csv").string(), m);
    write_cdf_csv((dir / "cdf.csv").string(), error_cdf(errors));
    write_trajectory_csv((dir / "trajectory.csv").string(), trajectory_overlay(p, t, a.smooth));
    log(a.c, "n " + std::to_string(m.n) + "  mean " + format_double(m.mean) + " m  median " +
                 format_double(m.median) + " m  p80 " + format_double(m.p80) + " m  max " +
                 format_double(m.max) + " m");
    manifest.output("cdf", dir / "cdf.csv");
    manifest.output("trajectory", dir / "trajectory.csv");
  } else {
    std::vector<int> yp, yt;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      yp.push_back(preds[i].predicted_class());
      yt.push_back(pts[i].label.class_id);
    }
    const auto m = classification_metrics(yp, yt, task_outputs(task));
    write_metrics_csv((dir / "metrics.csv").string(), m);
    write_confusion_csv((dir / "confusion.csv").string(), m);
    for (int c : m.zero_predicted)
      log(a.c, "warning: class " + std::to_string(c) + " never predicted, precision set to 0");
    log(a.c, "n " + std::to_string(pts.size()) + "  accuracy " + format_double(m.accuracy) +
                 "  macro_f1 " + format_double(m.macro_f1));
    manifest.output("confusion", dir / "confusion.csv");
  }
  manifest.output("metrics", dir / "metrics.csv");
  KvConfig effective;
  effective.set("eval.split", a.split);
  effective.set("eval.smooth", std::to_string(a.smooth));
  manifest.write(dir, effective);
  return 0;
}

// ---------------------------------------------------------------- finetune

struct FinetuneArgs {
  Common c;
  std::string model, data, val;
  double minutes = 5.0;
  int epochs = 10;
  double lr_scale = 0.1;
};

int cmd_finetune(const FinetuneArgs& a) {
  KvConfig kv = load_config(a.c);
  TrainConfig cfg = train_from_kv(kv);
  cfg.seed = resolve_seed(a.c, kv);
  cfg.threads = effective_threads(a.c);
  if (a.minutes <= 0) throw ValidationError("--minutes must be positive");
  if (a.epochs < 0 || a.epochs > kMaxFinetuneEpochs)
    throw ValidationError("--epochs must lie in [0, 50]");
  CheckpointInfo info;
  auto model = load_checkpoint<float>(a.model, &info);
  const auto file = read_datapoints(a.data);
  if (file.header.task != info.task) throw ValidationError("data task does not match the model");

  // Budget: the first `minutes` of every run in the file.
  std::vector<DataPoint> budget;
  const auto limit = static_cast<std::uint64_t>(a.minutes * 60e6);
  std::uint64_t run_start = 0;
  for (std::size_t i = 0; i < file.points.size(); ++i) {
    const auto& p = file.points[i];
    if (i == 0 || p.t_end_us <= file.points[i - 1].t_end_us) run_start = p.t_end_us;
    if (p.t_end_us - run_start < limit) budget.push_back(p);
  }
  if (budget.empty()) throw ValidationError("no datapoints inside the fine-tuning budget");
  std::vector<DataPoint> tune, val;
  if (a.val.empty()) {
    auto s = split_by_time(budget, 0.85, 0.15);
    tune = std::move(s.train);
    val = std::move(s.val);
    val.insert(val.end(), s.test.begin(), s.test.end());
  } else {
    tune = std::move(budget);
    val = read_datapoints(a.val).points;
  }
  if (tune.empty()) throw ValidationError("fine-tuning set is empty");

  const auto dir = prepare_out(a.c);
  Manifest manifest("finetune", a.c, cfg.seed);
  manifest.input("model", a.model);
  manifest.input("data", a.data);
  if (!a.val.empty()) manifest.input("val", a.val);
  log(a.c, "fine-tuning on " + std::to_string(tune.size()) + " datapoints (" +
               std::to_string(val.size()) + " validation) for " + std::to_string(a.epochs) +
               " epochs");
  const Task task = info.task;
  cfg.on_epoch = [&](const EpochRecord& r) { log(a.c, epoch_line(task, r)); };
  auto r = finetune(std::move(model), tune, val, a.epochs, cfg, a.lr_scale);
  const std::uint32_t epoch = r.best_epoch == 0 ? info.epoch : info.epoch + static_cast<std::uint32_t>(r.best_epoch);
  const auto model_path = dir / "model.uwbm";
  save_checkpoint(model_path.string(), r.model, epoch);
  write_history(dir / "history.csv", r.history);
  if (a.epochs > 0 && r.best_epoch == 0)
    log(a.c, "no epoch improved on the incoming model; it is kept unchanged");

  KvConfig effective;
  write_kv(effective, cfg);
  effective.set("finetune.minutes", format_double(a.minutes));
  effective.set("finetune.epochs", std::to_string(a.epochs));
  effective.set("finetune.lr_scale", format_double(a.lr_scale));
  effective.set("seed", std::to_string(cfg.seed));
  manifest.output("model", model_path);
  manifest.output("history", dir / "history.csv");
  manifest.write(dir, effective);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UWB CIR sensing: simulate, preprocess, train, eval, finetune"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate a capture and its ground truth");
  add_common(s, sim.c);
  s->add_option("--duration", sim.duration, "seconds of simulated time");
  s->add_option("--persons", sim.persons, "number of people in the room");
  s->add_option("--activity", sim.activity, "moving, standing or sitting")
      ->check(CLI::IsMember({"moving", "standing", "sitting"}));

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "turn captures into labelled datapoints");
  add_common(p, pre.c);
  p->add_option("--input", pre.inputs, "simulate output directory (repeatable)");
  p->add_option("--capture", pre.captures, "capture file (repeatable, paired with --truth)");
  p->add_option("--truth", pre.truths, "trajectory CSV (repeatable)");
  p->add_option("--task", pre.task, "localization, occupancy or har")
      ->required()
      ->check(CLI::IsMember({"localization", "occupancy", "har"}));
  p->add_option("--m", pre.m, "records per block");
  p->add_option("--c", pre.blocks, "blocks per datapoint");
  p->add_option("--window", pre.window, "datapoint window in seconds");
  p->add_option("--hop", pre.hop, "datapoint hop in seconds");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model on a datapoint file");
  add_common(t, tr.c);
  t->add_option("--data", tr.data, "datapoint file")->required()->check(CLI::ExistingFile);
  t->add_option("--val", tr.val, "validation datapoint file (default: time split of --data)")
      ->check(CLI::ExistingFile);
  t->add_option("--epochs", tr.epochs, "training epochs");
  t->add_option("--batch", tr.batch, "mini-batch size");
  t->add_option("--lr", tr.lr, "learning rate");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a model or a predictions file");
  add_common(e, ev.c);
  e->add_option("--data", ev.data, "datapoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--model", ev.model, "checkpoint")->check(CLI::ExistingFile);
  e->add_option("--predictions", ev.predictions, "predictions CSV instead of a model")
      ->check(CLI::ExistingFile);
  e->add_option("--split", ev.split, "all, or test for the trailing 15% of each run")
      ->check(CLI::IsMember({"all", "test"}));
  e->add_option("--smooth", ev.smooth, "trajectory smoothing window")->check(CLI::PositiveNumber);

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "adapt a trained model with a few minutes of data");
  add_common(f, ft.c);
  f->add_option("--model", ft.model, "checkpoint to adapt")->required()->check(CLI::ExistingFile);
  f->add_option("--data", ft.data, "datapoints from the changed scene")
      ->required()
      ->check(CLI::ExistingFile);
  f->add_option("--val", ft.val, "validation datapoint file")->check(CLI::ExistingFile);
  f->add_option("--minutes", ft.minutes, "minutes of data to use");
  f->add_option("--epochs", ft.epochs, "epochs, at most 50");
  f->add_option("--lr-scale", ft.lr_scale, "learning rate multiplier");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (p->parsed()) return cmd_preprocess(pre);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (f->parsed()) return cmd_finetune(ft);
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const FormatError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
  return 2;
}
