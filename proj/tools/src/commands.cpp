#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "symspot/checkpoint.hpp"
#include "symspot/errors.hpp"
#include "symspot/render.hpp"
#include "symspot_cli/cli.hpp"

namespace symspot::cli {
namespace {

namespace fs = std::filesystem;

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Args {
  std::string config;
  std::vector<std::string> overrides;
  int jobs = 1;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string ablation;
  std::string data, val, record, out, checkpoint, predictions, resume;
  std::string split = "train";
  int count = 8;
  bool gt_as_prediction = false;
  std::vector<int> stages;

  CLI::Option* jobs_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
};

class Logger {
 public:
  explicit Logger(std::ostream& os) : os_(os) {}
  void event(const std::string& name, const Json& fields = Json::object()) {
    Json j = {{"event", name}};
    j.update(fields);
    os_ << j.dump() << '\n';
  }

 private:
  std::ostream& os_;
};

RunConfig resolve(const Args& a) {
  RunConfig cfg = load_run_config(a.config, a.overrides);
  if (a.jobs_opt && a.jobs_opt->count()) {
    if (a.jobs < 1) throw ConfigError("--jobs must be at least 1");
    cfg.jobs = a.jobs;
  }
  if (a.seed_opt && a.seed_opt->count()) {
    cfg.seed = a.seed;
    cfg.train.seed = a.seed;
  }
  if (a.epochs_opt && a.epochs_opt->count()) {
    if (a.epochs < 0) throw ConfigError("--epochs must be non-negative");
    cfg.train.epochs = a.epochs;
  }
  if (!a.ablation.empty()) cfg.ablation = ablation_from_name(a.ablation);
  cfg.ablation.validate(cfg.model);
  return cfg;
}

fs::path require_out(const Args& a) {
  if (a.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(a.out);
  return a.out;
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  write_json_file(to_json(cfg), dir / "effective_config.json");
}

struct Inputs {
  ClassTable classes;
  std::vector<DrawingRecord> records;
};

Inputs load_inputs(const std::string& data, const std::string& record, const RunConfig& cfg) {
  Inputs in;
  if (!data.empty()) {
    const DatasetManifest manifest = load_manifest(data);
    in.classes = manifest.classes;
    in.records = load_dataset(data, manifest, cfg.jobs);
  } else if (!record.empty()) {
    in.classes = class_table_from_name(cfg.classes);
    in.records.push_back(load_record(record, &in.classes));
  } else {
    throw ConfigError("one of --data or --record is required");
  }
  if (cfg.tile) {
    std::vector<DrawingRecord> tiles;
    for (const auto& r : in.records)
      for (auto& t : tile_record(r)) tiles.push_back(std::move(t));
    in.records = std::move(tiles);
  }
  return in;
}

/// The model sized for the dataset's class table.
void fit_model(RunConfig& cfg, const ClassTable& classes) {
  if (!cfg.num_classes_explicit) {
    cfg.model.num_classes = classes.size();
  } else if (cfg.model.num_classes != classes.size()) {
    throw ConfigError("model.num_classes is " + std::to_string(cfg.model.num_classes) + " but the class table has " +
                      std::to_string(classes.size()) + " classes");
  }
}

std::vector<TrainingExample> make_examples(const Inputs& in, const RunConfig& cfg) {
  std::vector<TrainingExample> out;
  out.reserve(in.records.size());
  for (const auto& r : in.records)
    out.push_back(make_example(r.id, build_graph(r.primitives, cfg.graph), in.classes, cfg.train.weights));
  return out;
}

Json counts_json(const PanopticCounts& c) {
  return {{"pq", c.pq()}, {"sq", c.sq()}, {"rq", c.rq()}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
}

Json summary_json(const EvalSummary& s, const ClassTable& classes) {
  Json per_class = Json::object();
  for (const auto& [label, counts] : s.panoptic.per_class) per_class[classes[label].name] = counts_json(counts);
  return {{"drawings_vertices", s.vertices},
          {"panoptic", counts_json(s.panoptic.overall)},
          {"per_class", per_class},
          {"semantic_accuracy", s.accuracy},
          {"f1", s.f1.f1},
          {"length_weighted_f1", s.f1.length_weighted_f1},
          {"ap50", s.ap.ap50},
          {"ap75", s.ap.ap75},
          {"map", s.ap.map}};
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string prediction_file(const std::string& id) { return id + ".prediction.json"; }

// ------------------------------------------------------------------ commands

int gen_synth(const Args& a, Logger& log, std::ostream& out) {
  const RunConfig cfg = resolve(a);
  if (a.count < 0) throw ConfigError("--count must be non-negative");
  const fs::path dir = require_out(a);
  const DatasetManifest manifest = generate_synthetic(cfg.seed, a.count, cfg.synthetic, dir, a.split);
  echo_config(cfg, dir);
  const fs::path path = dir / (a.split + ".json");
  log.event("gen-synth", {{"manifest", path.string()}, {"drawings", manifest.records.size()}});
  out << path.string() << '\n';
  return kOk;
}

int build_graph_cmd(const Args& a, Logger& log, std::ostream& out) {
  const RunConfig cfg = resolve(a);
  const Inputs in = load_inputs(a.data, a.record, cfg);
  Json report = Json::array();
  for (const auto& r : in.records) {
    const GraphStats st = graph_stats(build_graph(r.primitives, cfg.graph));
    report.push_back({{"id", r.id},
                      {"vertices", st.vertices},
                      {"edges", st.edges},
                      {"max_degree", st.max_degree},
                      {"isolated", st.isolated},
                      {"degree_histogram", st.degree_histogram}});
    out << r.id << " N=" << st.vertices << " E=" << st.edges << " max_degree=" << st.max_degree
        << " isolated=" << st.isolated << " degrees=";
    for (std::size_t d = 0; d < st.degree_histogram.size(); ++d)
      out << (d ? "," : "") << st.degree_histogram[d];
    out << '\n';
  }
  if (!a.out.empty()) {
    const fs::path dir = require_out(a);
    write_json_file(report, dir / "graph_stats.json");
    echo_config(cfg, dir);
  }
  log.event("build-graph", {{"drawings", in.records.size()}});
  return kOk;
}

int train_cmd(const Args& a, Logger& log, std::ostream& out) {
  RunConfig cfg = resolve(a);
  const fs::path dir = require_out(a);
  const Inputs train_in = load_inputs(a.data, "", cfg);
  fit_model(cfg, train_in.classes);
  const auto train_set = make_examples(train_in, cfg);
  std::vector<TrainingExample> val_set;
  if (!a.val.empty()) {
    const Inputs val_in = load_inputs(a.val, "", cfg);
    if (!(val_in.classes == train_in.classes)) throw ConfigError("train and validation class tables differ");
    val_set = make_examples(val_in, cfg);
  }
  const std::span<const TrainingExample> val = a.val.empty() ? std::span(train_set) : std::span(val_set);

  TrainState state = a.resume.empty() ? init_train_state(cfg.model, cfg.seed)
                                      : load_checkpoint(a.resume, cfg.model, cfg.ablation).state;
  echo_config(cfg, dir);
  std::ofstream epoch_log(dir / "train_log.jsonl", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!epoch_log) throw IoError("cannot write " + (dir / "train_log.jsonl").string());

  const auto on_epoch = [&](const EpochLog& e, const TrainState& s) {
    const Json line = {{"epoch", e.epoch},         {"lr", e.lr},
                       {"loss_semantic", e.loss_semantic}, {"loss_instance", e.loss_instance},
                       {"val_pq", e.val_pq},       {"val_sq", e.val_sq},
                       {"val_rq", e.val_rq},       {"val_accuracy", e.val_accuracy}};
    epoch_log << line.dump() << '\n';
    epoch_log.flush();
    log.event("epoch", line);
    save_checkpoint({cfg.model, cfg.ablation, s}, dir / "checkpoint.json");
  };
  train(state, train_set, val, cfg.model, cfg.ablation, cfg.train, train_in.classes, on_epoch);

  TrainState best = state;
  if (state.best_epoch >= 0) best.params = state.best_params;
  save_checkpoint({cfg.model, cfg.ablation, best}, dir / "best.json");
  log.event("trained", {{"epochs", state.epochs_completed}, {"best_epoch", state.best_epoch}, {"best_pq", state.best_pq}});
  out << "epochs " << state.epochs_completed << " best_epoch " << state.best_epoch << " best_pq "
      << fixed(state.best_pq) << '\n';
  return kOk;
}

std::vector<PanopticPrediction> model_predictions(const std::string& checkpoint_path,
                                                  std::span<const TrainingExample> examples,
                                                  const ClassTable& classes, const RunConfig& cfg) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (ckpt.model.num_classes != classes.size())
    throw ConfigError("checkpoint predicts " + std::to_string(ckpt.model.num_classes) + " classes but the data has " +
                      std::to_string(classes.size()));
  return predict_all(ckpt.state.params, examples, ckpt.model, ckpt.ablation, classes, cfg.prune_threshold, cfg.jobs);
}

int eval_cmd(const Args& a, Logger& log, std::ostream& out) {
  const RunConfig cfg = resolve(a);
  const Inputs in = load_inputs(a.data, a.record, cfg);
  const auto examples = make_examples(in, cfg);
  const int sources = !a.checkpoint.empty() + !a.predictions.empty() + a.gt_as_prediction;
  if (sources != 1) throw ConfigError("give exactly one of --checkpoint, --predictions or --gt-as-prediction");

  std::vector<PanopticPrediction> preds;
  if (a.gt_as_prediction) {
    for (const auto& ex : examples) preds.push_back(ground_truth_panoptic(ex.graph, in.classes));
  } else if (!a.predictions.empty()) {
    for (const auto& ex : examples) {
      const fs::path file = fs::path(a.predictions) / prediction_file(ex.id);
      preds.push_back(prediction_from_json(read_json_file(file), file.string()));
    }
  } else {
    preds = model_predictions(a.checkpoint, examples, in.classes, cfg);
  }
  const EvalSummary s = score_predictions(preds, examples, in.classes);
  const Json report = summary_json(s, in.classes);
  if (!a.out.empty()) {
    const fs::path dir = require_out(a);
    write_json_file(report, dir / "metrics.json");
    echo_config(cfg, dir);
  }
  log.event("eval", {{"drawings", examples.size()}, {"pq", s.panoptic.overall.pq()}});
  out << "PQ " << fixed(s.panoptic.overall.pq()) << " SQ " << fixed(s.panoptic.overall.sq()) << " RQ "
      << fixed(s.panoptic.overall.rq()) << " accuracy " << fixed(s.accuracy) << " F1 " << fixed(s.f1.f1) << " wF1 "
      << fixed(s.f1.length_weighted_f1) << " AP50 " << fixed(s.ap.ap50) << " AP75 " << fixed(s.ap.ap75) << " mAP "
      << fixed(s.ap.map) << '\n';
  return kOk;
}

int infer_cmd(const Args& a, Logger& log, std::ostream& out) {
  const RunConfig cfg = resolve(a);
  if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const fs::path dir = require_out(a);
  const Inputs in = load_inputs(a.data, a.record, cfg);
  const auto examples = make_examples(in, cfg);
  const auto preds = model_predictions(a.checkpoint, examples, in.classes, cfg);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    write_json_file(to_json(preds[i]), dir / prediction_file(examples[i].id));
    out << (dir / prediction_file(examples[i].id)).string() << '\n';
  }
  echo_config(cfg, dir);
  log.event("infer", {{"drawings", examples.size()}});
  return kOk;
}

int render_cmd(const Args& a, Logger& log, std::ostream& out) {
  const RunConfig cfg = resolve(a);
  const fs::path dir = require_out(a);
  const Inputs in = load_inputs(a.data, a.record, cfg);
  for (const auto& r : in.records) {
    std::string svg;
    if (a.predictions.empty()) {
      svg = render_svg(r, in.classes);
    } else {
      const fs::path file = fs::path(a.predictions) / prediction_file(r.id);
      const PanopticPrediction pred = prediction_from_json(read_json_file(file), file.string());
      if (pred.vertex_class.size() != r.primitives.size())
        throw ParseError(file.string() + ": prediction covers " + std::to_string(pred.vertex_class.size()) +
                         " primitives, drawing has " + std::to_string(r.primitives.size()));
      svg = render_svg(r, in.classes, &pred);
    }
    const fs::path target = dir / (r.id + ".svg");
    std::ofstream f(target, std::ios::binary);
    if (!(f << svg)) throw IoError("cannot write " + target.string());
    out << target.string() << '\n';
  }
  echo_config(cfg, dir);
  log.event("render", {{"drawings", in.records.size()}});
  return kOk;
}

int gradcheck_cmd(const Args& a, Logger& log, std::ostream& out) {
  const RunConfig cfg = resolve(a);
  ModelConfig model;
  model.stages = 2;
  model.heads = 2;
  model.width = 32;
  model.num_classes = 4;
  model.instance_hidden = {32, 8};
  cfg.ablation.validate(model);
  const ClassTable classes = ClassTable::synthetic(model.num_classes);
  const DrawingRecord rec = tiny_drawing(cfg.seed);
  const TrainingExample ex = make_example(rec.id, build_graph(rec.primitives, cfg.graph), classes, cfg.train.weights);

  const auto t0 = std::chrono::steady_clock::now();
  const auto report = check_model_gradients(init_params(model, cfg.seed), ex, model, cfg.ablation, cfg.train.lambda);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log.event("gradcheck", {{"checked", report.checked},
                          {"skipped", report.skipped_kinks},
                          {"max_rel_error", report.max_rel_error},
                          {"worst_index", report.worst_index},
                          {"seconds", seconds}});
  out << (report.passed ? "PASS" : "FAIL") << " checked " << report.checked << " skipped " << report.skipped_kinks
      << " max_rel_error " << report.max_rel_error << " worst " << report.worst_index << " (analytic "
      << report.worst_analytic << ", numeric " << report.worst_numeric << ")\n";
  if (!report.passed) throw CheckFailed("gradient check failed");
  return kOk;
}

int ablate_cmd(const Args& a, Logger& log, std::ostream& out) {
  RunConfig cfg = resolve(a);
  const Inputs train_in = load_inputs(a.data, "", cfg);
  fit_model(cfg, train_in.classes);
  const auto train_set = make_examples(train_in, cfg);
  std::vector<TrainingExample> val_set;
  if (!a.val.empty()) val_set = make_examples(load_inputs(a.val, "", cfg), cfg);
  const std::span<const TrainingExample> val = a.val.empty() ? std::span(train_set) : std::span(val_set);

  struct Row {
    std::string name;
    ModelConfig model;
    Ablation ablation;
  };
  std::vector<Row> rows;
  if (a.stages.empty()) {
    const ModelConfig& m = cfg.model;
    rows.push_back({"baseline", m, Ablation::baseline()});
    rows.push_back({"+rse", m, Ablation::rse_only()});
    rows.push_back({"+cee", m, Ablation::cee_only()});
    for (int s = 2; s <= m.stages; s += 2) rows.push_back({"single-stage cee @" + std::to_string(s), m, Ablation::single_stage(s)});
    if (m.stages % 2) rows.push_back({"single-stage cee @" + std::to_string(m.stages), m, Ablation::single_stage(m.stages)});
    rows.push_back({"full", m, Ablation::full()});
  } else {
    for (int s : a.stages) {
      ModelConfig m = cfg.model;
      m.stages = s;
      m.validate();
      rows.push_back({"stages=" + std::to_string(s), m, cfg.ablation});
      cfg.ablation.validate(m);
    }
  }

  Json table = Json::array();
  std::ostringstream md;
  md << "| configuration | PQ | SQ | RQ | accuracy | F1 | AP50 | best epoch |\n"
     << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : rows) {
    TrainState state = init_train_state(row.model, cfg.seed);
    train(state, train_set, val, row.model, row.ablation, cfg.train, train_in.classes,
          [&](const EpochLog& e, const TrainState&) {
            log.event("epoch", {{"configuration", row.name}, {"epoch", e.epoch}, {"val_pq", e.val_pq}});
          });
    const ModelParams& params = state.best_epoch >= 0 ? state.best_params : state.params;
    const EvalSummary s =
        evaluate(params, val, row.model, row.ablation, train_in.classes, cfg.prune_threshold, cfg.jobs);
    const auto& o = s.panoptic.overall;
    table.push_back({{"configuration", row.name},
                     {"stages", row.model.stages},
                     {"ablation", symspot::to_json(row.ablation)},
                     {"pq", o.pq()},
                     {"sq", o.sq()},
                     {"rq", o.rq()},
                     {"semantic_accuracy", s.accuracy},
                     {"f1", s.f1.f1},
                     {"ap50", s.ap.ap50},
                     {"best_epoch", state.best_epoch}});
    md << "| " << row.name << " | " << fixed(o.pq()) << " | " << fixed(o.sq()) << " | " << fixed(o.rq()) << " | "
       << fixed(s.accuracy) << " | " << fixed(s.f1.f1) << " | " << fixed(s.ap.ap50) << " | " << state.best_epoch
       << " |\n";
    log.event("ablation", table.back());
  }
  out << md.str();
  if (!a.out.empty()) {
    const fs::path dir = require_out(a);
    write_json_file(table, dir / "ablation.json");
    std::ofstream(dir / "ablation.md") << md.str();
    echo_config(cfg, dir);
  }
  return kOk;
}

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("-c,--config", a.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "Override a config key, e.g. --set model.width=64")->take_all();
  cmd->add_option("-j,--jobs", a.jobs, "Worker threads for loading, eval and infer");
  cmd->add_option("--seed", a.seed, "Seed for generation, initialization and shuffling");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log_stream) {
  CLI::App app{"Panoptic symbol spotting on vector drawings", "symspot"};
  app.require_subcommand(1);
  Args a;
  Logger log(log_stream);

  auto* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset and its manifest");
  add_common(gen, a);
  gen->add_option("-o,--out", a.out, "Output directory")->required();
  gen->add_option("-n,--count", a.count, "Number of drawings");
  gen->add_option("--split", a.split, "Split name, used for the manifest file name");

  auto* graph = app.add_subcommand("build-graph", "Build graphs and report their statistics");
  add_common(graph, a);
  graph->add_option("-d,--data", a.data, "Dataset manifest");
  graph->add_option("-r,--record", a.record, "Single drawing record");
  graph->add_option("-o,--out", a.out, "Directory for graph_stats.json");

  auto* trn = app.add_subcommand("train", "Train a model");
  add_common(trn, a);
  trn->add_option("-d,--data", a.data, "Training manifest")->required();
  trn->add_option("--val", a.val, "Validation manifest (defaults to the training set)");
  trn->add_option("-o,--out", a.out, "Output directory for checkpoints and logs")->required();
  trn->add_option("--resume", a.resume, "Checkpoint to continue from");
  trn->add_option("--ablation", a.ablation, "full, baseline, rse_only, cee_only or single_stage:<n>");
  trn->add_option("--epochs", a.epochs, "Total epochs (a resumed run continues up to this)");

  auto* ev = app.add_subcommand("eval", "Score predictions against the ground truth");
  add_common(ev, a);
  ev->add_option("-d,--data", a.data, "Dataset manifest");
  ev->add_option("-r,--record", a.record, "Single drawing record");
  ev->add_option("--checkpoint", a.checkpoint, "Model checkpoint to run");
  ev->add_option("--predictions", a.predictions, "Directory of <id>.prediction.json files");
  ev->add_flag("--gt-as-prediction", a.gt_as_prediction, "Score the ground truth against itself");
  ev->add_option("-o,--out", a.out, "Directory for metrics.json");

  auto* inf = app.add_subcommand("infer", "Write panoptic predictions");
  add_common(inf, a);
  inf->add_option("-d,--data", a.data, "Dataset manifest");
  inf->add_option("-r,--record", a.record, "Single drawing record");
  inf->add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required();
  inf->add_option("-o,--out", a.out, "Output directory")->required();

  auto* ren = app.add_subcommand("render", "Render drawings as SVG");
  add_common(ren, a);
  ren->add_option("-d,--data", a.data, "Dataset manifest");
  ren->add_option("-r,--record", a.record, "Single drawing record");
  ren->add_option("--predictions", a.predictions, "Color by predictions from this directory");
  ren->add_option("-o,--out", a.out, "Output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the model gradients");
  add_common(gc, a);
  gc->add_option("--ablation", a.ablation, "full, baseline, rse_only, cee_only or single_stage:<n>");

  auto* abl = app.add_subcommand("ablate", "Train and compare ablation configurations");
  add_common(abl, a);
  abl->add_option("-d,--data", a.data, "Training manifest")->required();
  abl->add_option("--val", a.val, "Validation manifest (defaults to the training set)");
  abl->add_option("-o,--out", a.out, "Directory for ablation.json and ablation.md");
  abl->add_option("--stages", a.stages, "Sweep stage counts instead, e.g. 2,4,8,16")->delimiter(',');
  abl->add_option("--ablation", a.ablation, "Ablation used for the stage sweep");
  abl->add_option("--epochs", a.epochs, "Epochs per configuration");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log_stream);
    return code == 0 ? kOk : kConfigError;
  }
  // Every subcommand registers its own copies of the shared options.
  CLI::App* cmd = app.get_subcommands().front();
  a.jobs_opt = cmd->get_option("--jobs");
  a.seed_opt = cmd->get_option("--seed");
  a.epochs_opt = cmd->get_option_no_throw("--epochs");

  try {
    if (gen->parsed()) return gen_synth(a, log, out);
    if (graph->parsed()) return build_graph_cmd(a, log, out);
    if (trn->parsed()) return train_cmd(a, log, out);
    if (ev->parsed()) return eval_cmd(a, log, out);
    if (inf->parsed()) return infer_cmd(a, log, out);
    if (ren->parsed()) return render_cmd(a, log, out);
    if (gc->parsed()) return gradcheck_cmd(a, log, out);
    if (abl->parsed()) return ablate_cmd(a, log, out);
    return kConfigError;
  } catch (const CheckFailed& e) {
    log.event("error", {{"kind", "check"}, {"message", e.what()}});
    return kCheckFailed;
  } catch (const ConfigError& e) {
    log.event("error", {{"kind", "config"}, {"message", e.what()}});
    return kConfigError;
  } catch (const IoError& e) {
    log.event("error", {{"kind", "io"}, {"message", e.what()}});
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    log.event("error", {{"kind", "io"}, {"message", e.what()}});
    return kIoError;
  } catch (const Error& e) {
    log.event("error", {{"kind", "data"}, {"message", e.what()}});
    return kDataError;
  } catch (const std::exception& e) {
    log.event("error", {{"kind", "unexpected"}, {"message", e.what()}});
    return kUnexpected;
  }
}

}  // namespace symspot::cli
