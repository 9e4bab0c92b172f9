#include "vrebert/cli/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "vrebert/data/annotations.hpp"
#include "vrebert/data/features.hpp"
#include "vrebert/data/splits.hpp"
#include "vrebert/data/synthetic.hpp"
#include "vrebert/errors.hpp"
#include "vrebert/evaluation/evaluation.hpp"
#include "vrebert/numerics/snapshot.hpp"

namespace vrebert {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

LoadedDataset load_dataset(const fs::path& data_dir, const fs::path& features_dir) {
  LoadedDataset data;
  data.categories = load_category_vocab(data_dir / DatasetFiles::kCategories);
  auto train = load_annotations(data_dir / DatasetFiles::kTrain, data.categories);
  auto test = load_annotations(data_dir / DatasetFiles::kTest, data.categories);
  if (!features_dir.empty()) {
    const auto train_path = features_dir / DatasetFiles::kTrainFeatures;
    const auto test_path = features_dir / DatasetFiles::kTestFeatures;
    data.feature_dim = feature_file_dim(train_path);
    attach_features(train, load_features(train_path, data.feature_dim));
    attach_features(test, load_features(test_path, data.feature_dim));
  }
  data.split = make_zero_shot_split(std::move(train), std::move(test));
  return data;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : std::string()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomically(path, text);
}

struct Manifest {
  std::string subcommand;
  std::vector<std::string> args;
  ordered_json config = ordered_json::object();
  std::uint64_t seed = 0;
  ordered_json inputs = ordered_json::object();
  ordered_json outputs = ordered_json::object();
  std::string started_at = utc_now();

  void write(const fs::path& dir) const {
    ordered_json j = {{"subcommand", subcommand},
                      {"args", args},
                      {"config", config},
                      {"seed", seed},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"tool_version", kToolVersion},
                      {"started_at", started_at},
                      {"finished_at", utc_now()}};
    write_text(dir / DatasetFiles::kManifest, j.dump(2) + "\n");
  }
};

ModelConfig preset_config(const std::string& preset, std::ostream& err) {
  if (preset == "desk") return ModelConfig::desk();
  if (preset == "paper") {
    err << "warning: the paper preset (768 hidden, 12 heads, 12 layers) is "
           "very slow on a CPU\n";
    return ModelConfig::paper();
  }
  throw ConfigError("unknown preset '" + preset + "'");
}

std::vector<std::size_t> parse_ns(const std::string& text) {
  std::vector<std::size_t> ns;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      ns.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--n expects positive integers separated by commas, got '" +
                        text + "'");
    }
  }
  if (ns.empty()) throw ConfigError("--n needs at least one value");
  return ns;
}

void check_compatible(const Model& model, const CategoryVocab& data) {
  const auto& snap = model.categories();
  if (snap.objects.size() != data.objects.size() ||
      snap.predicates.size() != data.predicates.size()) {
    throw ConfigError("snapshot vocabulary has " +
                      std::to_string(snap.objects.size()) + " objects / " +
                      std::to_string(snap.predicates.size()) +
                      " predicates, data has " +
                      std::to_string(data.objects.size()) + " / " +
                      std::to_string(data.predicates.size()));
  }
  if (snap != data) {
    throw ConfigError("snapshot category names differ from the data's");
  }
}

void check_features(const Model& model, const LoadedDataset& data) {
  if (model.config().visual_input &&
      data.feature_dim != model.config().feature_dim) {
    throw ConfigError("model expects features of dimension " +
                      std::to_string(model.config().feature_dim) +
                      (data.feature_dim == 0
                           ? std::string(", pass --features")
                           : ", data has " + std::to_string(data.feature_dim)));
  }
}

ordered_json synthetic_json(const SyntheticConfig& c) {
  return {{"world_size", c.world_size},
          {"num_images", c.num_images},
          {"num_test_images", c.resolved_test_images()},
          {"num_categories", c.num_categories},
          {"seed", c.seed},
          {"feature_dim", c.resolved_feature_dim()},
          {"min_objects", c.min_objects},
          {"max_objects", c.max_objects},
          {"holdout_fraction", c.holdout_fraction},
          {"noise_sigma", c.noise_sigma}};
}

ordered_json train_json(const TrainConfig& c) {
  return {{"stage", to_string(c.stage)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"lr", c.optimizer.lr},
          {"weight_decay", c.optimizer.weight_decay},
          {"clip_norm", c.clip_norm}};
}

struct ModelFlags {
  std::string preset = "desk";
  std::string position = "relative";
  std::string image_pos = "on";
  bool freeze_features = false;

  ModelConfig resolve(std::ostream& err) const {
    ModelConfig c = preset_config(preset, err);
    if (position == "relative") {
      c.position_mode = PositionMode::kRelative;
    } else if (position == "absolute") {
      c.position_mode = PositionMode::kAbsolute;
    } else {
      throw ConfigError("--position expects relative or absolute");
    }
    if (image_pos != "on" && image_pos != "off") {
      throw ConfigError("--image-pos expects on or off");
    }
    c.image_position = image_pos == "on";
    c.freeze_feature_projection = freeze_features;
    return c;
  }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--preset", f.preset, "Model size: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--position", f.position, "relative or absolute positions")
      ->check(CLI::IsMember({"relative", "absolute"}));
  cmd->add_option("--image-pos", f.image_pos, "Image positional embedding: on or off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_flag("--freeze-features", f.freeze_features,
                "Keep the region-feature projection at its initialization");
}

struct GenerateArgs {
  std::string out;
  SyntheticConfig synth;
};

int cmd_generate(const GenerateArgs& a, const std::vector<std::string>& args,
                 std::ostream& out) {
  a.synth.validate();
  const fs::path dir = a.out;
  ensure_directory(dir);
  const auto ds = generate_synthetic(a.synth);
  save_annotations(dir / DatasetFiles::kTrain, ds.split.train);
  save_annotations(dir / DatasetFiles::kTest, ds.split.test);
  save_category_vocab(dir / DatasetFiles::kCategories, ds.vocab);
  Vocabulary::for_categories(ds.vocab).save(dir / DatasetFiles::kVocab);
  save_features(dir / DatasetFiles::kTrainFeatures, ds.split.train, ds.feature_dim);
  save_features(dir / DatasetFiles::kTestFeatures, ds.split.test, ds.feature_dim);

  Manifest m;
  m.subcommand = "generate";
  m.args = args;
  m.config = synthetic_json(a.synth);
  m.seed = a.synth.seed;
  for (const char* f : {DatasetFiles::kTrain, DatasetFiles::kTest,
                        DatasetFiles::kCategories, DatasetFiles::kVocab,
                        DatasetFiles::kTrainFeatures, DatasetFiles::kTestFeatures}) {
    m.outputs[f] = (dir / f).string();
  }
  m.write(dir);
  out << "wrote " << ds.split.train.size() << " train / " << ds.split.test.size()
      << " test images (" << ds.split.zero_shot_test.size()
      << " zero-shot relationships) to " << dir.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string stage, data, features, init, out;
  ModelFlags model;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;
  double lr = 1e-3;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args,
              std::ostream& out, std::ostream& err) {
  const Stage stage = parse_stage(a.stage);
  if (stage == Stage::kS3 && a.features.empty()) {
    throw ConfigError("stage s3 needs --features");
  }
  ModelConfig mc = a.model.resolve(err);
  const fs::path dir = a.out;
  ensure_directory(dir);
  const auto data = load_dataset(a.data, a.features);
  mc.feature_dim = data.feature_dim;
  mc.visual_input = stage == Stage::kS3;

  TrainConfig tc;
  tc.stage = stage;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.seed = a.seed;
  tc.optimizer.lr = a.lr;
  tc.init_snapshot = a.init;
  tc.snapshot_out = dir / "model.snap";
  std::string log_text;
  tc.on_epoch = [&](const EpochLog& log) {
    out << log.to_json() << "\n" << std::flush;
    log_text += log.to_json() + "\n";
  };
  tc.validate();

  Model model(mc, Vocabulary::for_categories(data.categories), data.categories,
              a.seed);
  if (stage == Stage::kS2) {
    train_stage2(model, data.split.train, tc);
  } else {
    train_stage3(model, data.split.train, tc);
  }
  write_text(dir / "train_log.jsonl", log_text);

  Manifest m;
  m.subcommand = "train";
  m.args = args;
  m.config = {{"model", ordered_json::parse(model.config().to_json())},
              {"train", train_json(tc)}};
  m.seed = a.seed;
  m.inputs["data"] = a.data;
  if (!a.features.empty()) m.inputs["features"] = a.features;
  if (!a.init.empty()) m.inputs["init"] = a.init;
  m.outputs["snapshot"] = tc.snapshot_out.string();
  m.outputs["log"] = (dir / "train_log.jsonl").string();
  m.write(dir);
  return 0;
}

struct EvalArgs {
  std::string snapshot, data, features, task = "predicate", ns = "50,100",
                                        pairs = "gt", out;
  ModelFlags model;
  std::size_t epochs = 30;
  std::uint64_t seed = 7;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& args,
             std::ostream& out, std::ostream& err) {
  EvalOptions options;
  options.ns = parse_ns(a.ns);
  options.mode = parse_pair_mode(a.pairs);
  options.seed = a.seed;
  if (a.task != "predicate" && a.task != "zeroshot" && a.task != "ablation") {
    throw ConfigError("--task expects predicate, zeroshot or ablation");
  }
  if (a.task != "ablation" && a.snapshot.empty()) {
    throw ConfigError("--task " + a.task + " needs --snapshot");
  }
  const auto data = load_dataset(a.data, a.features);

  std::vector<EvalReport> reports;
  ordered_json config = ordered_json::object();
  config["task"] = a.task;
  config["ns"] = options.ns;
  config["pairs"] = a.pairs;
  if (a.task == "ablation") {
    if (data.feature_dim == 0) throw ConfigError("--task ablation needs --features");
    AblationConfig ac;
    ac.base = a.model.resolve(err);
    ac.train.epochs = a.epochs;
    ac.train.seed = a.seed;
    ac.init_seed = a.seed;
    ac.eval = options;
    for (auto& row : run_ablation_suite(data.categories, data.split,
                                        data.feature_dim, ac)) {
      reports.push_back(std::move(row.report));
    }
    config["base_model"] = ordered_json::parse(ac.base.to_json());
    config["train"] = train_json(ac.train);
  } else {
    const Model model = Model::load(a.snapshot);
    check_compatible(model, data.categories);
    check_features(model, data);
    reports.push_back(a.task == "predicate"
                          ? eval_predicate_prediction(model, data.split.test, options)
                          : eval_zero_shot(model, data.split, options));
    config["model"] = ordered_json::parse(model.config().to_json());
  }

  std::string lines;
  for (const auto& r : reports) lines += r.to_json() + "\n";
  out << lines << "\n" << format_report_table(reports);
  if (!a.out.empty()) {
    const fs::path dir = a.out;
    ensure_directory(dir);
    write_text(dir / "report.jsonl", lines);
    Manifest m;
    m.subcommand = "eval";
    m.args = args;
    m.config = config;
    m.seed = a.seed;
    m.inputs["data"] = a.data;
    if (!a.features.empty()) m.inputs["features"] = a.features;
    if (!a.snapshot.empty()) m.inputs["snapshot"] = a.snapshot;
    m.outputs["report"] = (dir / "report.jsonl").string();
    m.write(dir);
  }
  return 0;
}

struct PredictArgs {
  std::string snapshot, data, features, image_id, pairs = "all", out;
  std::size_t top = 10;
};

int cmd_predict(const PredictArgs& a, const std::vector<std::string>& args,
                std::ostream& out) {
  const auto data = load_dataset(a.data, a.features);
  const Model model = Model::load(a.snapshot);
  check_compatible(model, data.categories);
  check_features(model, data);
  const ImageRecord* image = nullptr;
  for (const auto* list : {&data.split.test, &data.split.train}) {
    for (const auto& im : *list) {
      if (im.image_id == a.image_id) image = &im;
    }
  }
  if (!image) throw LookupError("unknown image id '" + a.image_id + "'");

  const auto ranked = rank_relationships(*image, model_scorer(model), a.top,
                                         parse_pair_mode(a.pairs));
  const auto& cats = model.categories();
  for (const auto& t : ranked) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", t.likelihood);
    out << cats.objects.at(image->detections[t.sub_idx].category_id) << "  "
        << cats.predicates.at(t.predicate_id) << "  "
        << cats.objects.at(image->detections[t.obj_idx].category_id) << "  "
        << buf << "\n";
  }
  if (!a.out.empty()) {
    const fs::path dir = a.out;
    ensure_directory(dir);
    write_text(dir / "predictions.jsonl",
               format_prediction_dump(image->image_id, ranked));
    Manifest m;
    m.subcommand = "predict";
    m.args = args;
    m.config = {{"image_id", a.image_id}, {"top", a.top}, {"pairs", a.pairs}};
    m.inputs["data"] = a.data;
    m.inputs["snapshot"] = a.snapshot;
    if (!a.features.empty()) m.inputs["features"] = a.features;
    m.outputs["predictions"] = (dir / "predictions.jsonl").string();
    m.write(dir);
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Masked-predicate relationship transformer", "vrebert"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--images", gen.synth.num_images, "Train images");
  generate->add_option("--test-images", gen.synth.num_test_images,
                       "Test images (default: a quarter of --images)");
  generate->add_option("--categories", gen.synth.num_categories,
                       "Object categories (4 to 24)");
  generate->add_option("--seed", gen.synth.seed, "Generator seed");
  generate->add_option("--holdout", gen.synth.holdout_fraction,
                       "Fraction of triplet types withheld from train");
  generate->add_option("--noise", gen.synth.noise_sigma, "Feature noise sigma");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train one stage");
  train->add_option("--stage", tr.stage, "s2 or s3")
      ->required()
      ->check(CLI::IsMember({"s2", "s3"}));
  train->add_option("--data", tr.data, "Dataset directory")->required();
  train->add_option("--features", tr.features, "Directory with train.vrf / test.vrf");
  train->add_option("--init", tr.init, "Snapshot to initialize from");
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--epochs", tr.epochs, "Training epochs");
  train->add_option("--batch-size", tr.batch_size, "Examples per step");
  train->add_option("--lr", tr.lr, "AdamW learning rate");
  train->add_option("--seed", tr.seed, "Run seed");
  add_model_flags(train, tr.model);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a snapshot or run the ablation suite");
  eval->add_option("--snapshot", ev.snapshot, "Model snapshot");
  eval->add_option("--data", ev.data, "Dataset directory")->required();
  eval->add_option("--features", ev.features, "Directory with train.vrf / test.vrf");
  eval->add_option("--task", ev.task, "predicate, zeroshot or ablation")
      ->check(CLI::IsMember({"predicate", "zeroshot", "ablation"}));
  eval->add_option("--n", ev.ns, "Comma-separated recall cutoffs");
  eval->add_option("--pairs", ev.pairs, "gt (annotated pairs) or all")
      ->check(CLI::IsMember({"gt", "all"}));
  eval->add_option("--out", ev.out, "Directory for report.jsonl and the manifest");
  eval->add_option("--epochs", ev.epochs, "Epochs per ablation row");
  eval->add_option("--seed", ev.seed, "Seed for ablation training");
  add_model_flags(eval, ev.model);

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Rank relationships of one image");
  predict->add_option("--snapshot", pr.snapshot, "Model snapshot")->required();
  predict->add_option("--data", pr.data, "Dataset directory")->required();
  predict->add_option("--features", pr.features, "Directory with train.vrf / test.vrf");
  predict->add_option("--image-id", pr.image_id, "Image to rank")->required();
  predict->add_option("--top", pr.top, "Triplets to list");
  predict->add_option("--pairs", pr.pairs, "all or gt")
      ->check(CLI::IsMember({"gt", "all"}));
  predict->add_option("--out", pr.out, "Directory for predictions.jsonl");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, args, out);
    if (train->parsed()) return cmd_train(tr, args, out, err);
    if (eval->parsed()) return cmd_eval(ev, args, out, err);
    if (predict->parsed()) return cmd_predict(pr, args, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace vrebert
