#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>

#include "rfn/ablation.hpp"
#include "rfn/binio.hpp"
#include "rfn/checkpoint.hpp"
#include "rfn/config.hpp"
#include "rfn/features.hpp"
#include "rfn/harness.hpp"

namespace rfn::cli {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Configuration file (TOML subset)");
  sub->add_option("--set", c.overrides, "Override a key, e.g. --set rfn.n=8")->allow_extra_args(false);
  sub->add_flag("--quiet", c.quiet, "Do not print the effective configuration");
}

Config load_config(const Common& c) {
  Config cfg = c.config_path.empty() ? Config() : Config::from_file(c.config_path);
  for (const auto& o : c.overrides) cfg.set_override(o);
  return cfg;
}

void announce(const Config& cfg, const Common& c, std::ostream& out) {
  if (c.quiet) return;
  out << "# effective configuration\n" << cfg.dump() << "# end configuration\n";
}

void write_text(const std::string& path, const std::string& text) {
  binio::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

Dataset make_split(const RunConfig& rc, const std::string& split) {
  const DataConfig& d = rc.data;
  const bool train = split == "train";
  return gen_dataset(train ? d.train_seed : d.test_seed, train ? d.train_size : d.test_size,
                     rc.model.classes, train ? d.train_orientation : d.test_orientation, d.noise,
                     rc.model.image_size, split);
}

Dataset dataset_from(const std::string& path, const RunConfig& rc, const std::string& split) {
  if (path.empty()) return make_split(rc, split);
  Dataset d = load_dataset(path);
  d.split = split;
  return d;
}

void print_metrics(const MetricsReport& m, std::ostream& out) {
  out << std::setprecision(6) << "accuracy " << m.accuracy << "\nangular_mae " << m.angular_mae
      << "\ninvariance_score " << m.invariance_score << "\nparam_total " << m.param_total
      << "\nwall_time_s " << m.wall_time << "\n";
}

// Grad-check instantiations: small backbone, block settings drawn per trial.

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotated feature network toolkit", "rfn"};
  app.require_subcommand(1);

  Common common;
  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic oriented-shape dataset");
  add_common(gen, common);
  std::string split = "train", gen_out;
  std::optional<std::uint64_t> gen_seed;
  std::optional<std::size_t> gen_size;
  gen->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--out", gen_out, "Output file")->required();
  gen->add_option("--seed", gen_seed, "Dataset seed for the chosen split");
  gen->add_option("--size", gen_size, "Sample count for the chosen split");

  // train
  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint and metrics");
  add_common(tr, common);
  std::string train_data, test_data, out_dir = "run";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  tr->add_option("--train-data", train_data, "Training dataset file (default: generated)");
  tr->add_option("--test-data", test_data, "Test dataset file (default: generated)");
  tr->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  tr->add_option("--seed", seed, "Training seed");
  tr->add_option("--epochs", epochs, "Epoch count");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev, common);
  std::string ckpt_path, eval_data, eval_out;
  ev->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  ev->add_option("--data", eval_data, "Dataset file (default: generated test split)");
  ev->add_option("--out", eval_out, "Metrics JSON output");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the ablation grid");
  add_common(ab, common);
  std::string ab_out = "ablation.csv";
  ab->add_option("--train-data", train_data, "Training dataset file (default: generated)");
  ab->add_option("--test-data", test_data, "Test dataset file (default: generated)");
  ab->add_option("--out", ab_out, "Results CSV")->capture_default_str();
  ab->add_option("--epochs", epochs, "Epoch count");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Central-difference check of the training loss");
  add_common(gc, common);
  std::size_t trials = 20;
  std::uint64_t gc_seed = 1;
  double tolerance = 1e-4;
  gc->add_option("--trials", trials, "Random instantiations")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Seed")->capture_default_str();
  gc->add_option("--tolerance", tolerance, "Max relative error")->capture_default_str();

  // dump-features
  auto* df = app.add_subcommand("dump-features", "Write per-channel feature maps as PGM");
  add_common(df, common);
  std::string df_data, df_dir = "features", stage = "ri";
  std::size_t index = 0;
  df->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  df->add_option("--data", df_data, "Dataset file (default: generated test split)");
  df->add_option("--index", index, "Sample index")->capture_default_str();
  df->add_option("--stage", stage, "input, stack, ri or rs")->capture_default_str();
  df->add_option("--out-dir", df_dir, "Output directory")->capture_default_str();

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "rfn: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      Config cfg = load_config(common);
      const std::string prefix = "data." + split;
      if (gen_seed) cfg.set(prefix + "_seed", std::to_string(*gen_seed));
      if (gen_size) cfg.set(prefix + "_size", std::to_string(*gen_size));
      announce(cfg, common, out);
      const RunConfig rc = to_run_config(cfg);
      const Dataset d = make_split(rc, split);
      save_dataset(d, gen_out);
      out << "wrote " << d.samples.size() << " samples to " << gen_out << "\n";
    } else if (tr->parsed()) {
      Config cfg = load_config(common);
      if (seed) cfg.set("train.seed", std::to_string(*seed));
      if (epochs) cfg.set("train.epochs", std::to_string(*epochs));
      announce(cfg, common, out);
      const RunConfig rc = to_run_config(cfg);
      ensure_dir(out_dir);
      write_text((fs::path(out_dir) / "config.toml").string(), cfg.dump());
      const Dataset train_set = dataset_from(train_data, rc, "train");
      const Dataset test_set = dataset_from(test_data, rc, "test");
      const TrainResult result =
          train(rc.model, train_set, rc.train, rc.seed, [&](const EpochRecord& e) {
            out << "epoch " << e.epoch << " lr " << e.learning_rate << " loss " << e.loss_total
                << " (cls " << e.loss_cls << ", reg " << e.loss_reg << ", ri " << e.loss_ri
                << ") train_acc " << e.train_accuracy << "\n";
          });
      save_checkpoint(make_checkpoint(result.model, cfg.dump()),
                      (fs::path(out_dir) / "checkpoint.rfn").string());
      write_text((fs::path(out_dir) / "history.csv").string(), metrics_history_csv(result.report));
      MetricsReport m = evaluate(result.model, test_set, rc.train.loss);
      m.history = result.report.history;
      m.wall_time += result.report.wall_time;
      write_text((fs::path(out_dir) / "metrics.json").string(), metrics_to_json(m));
      print_metrics(m, out);
    } else if (ev->parsed() || df->parsed()) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      Config cfg = Config::from_text(ckpt.config_text, ckpt_path);
      if (!common.config_path.empty() || !common.overrides.empty()) {
        const Config given = load_config(common);
        if (model_section(given) != model_section(cfg)) {
          throw MismatchError("architecture mismatch: configuration model/rfn sections differ "
                              "from the checkpoint's");
        }
        cfg = given;
      }
      announce(cfg, common, out);
      const RunConfig rc = to_run_config(cfg);
      Model<float> model(rc.model);
      apply_checkpoint(ckpt, model);
      if (ev->parsed()) {
        const Dataset data = dataset_from(eval_data, rc, "test");
        const MetricsReport m = evaluate(model, data, rc.train.loss);
        if (!eval_out.empty()) write_text(eval_out, metrics_to_json(m));
        print_metrics(m, out);
      } else {
        const Dataset data = df_data.empty() ? gen_dataset(rc.data.test_seed, std::max(index + 1, rc.model.classes),
                                                           rc.model.classes,
                                                           rc.data.test_orientation, rc.data.noise,
                                                           rc.model.image_size, "test")
                                             : load_dataset(df_data);
        if (index >= data.samples.size()) {
          throw InvalidArgument("sample index " + std::to_string(index) + " out of range (" +
                                std::to_string(data.samples.size()) + " samples)");
        }
        const auto paths =
            dump_features(model, data.samples[index].image, parse_feature_stage(stage), df_dir);
        out << "wrote " << paths.size() << " maps to " << df_dir << "\n";
      }
    } else if (ab->parsed()) {
      Config cfg = load_config(common);
      if (epochs) cfg.set("train.epochs", std::to_string(*epochs));
      announce(cfg, common, out);
      const RunConfig rc = to_run_config(cfg);
      const auto cases = expand_grid(rc);
      std::size_t threads = 1;
      if (const char* env = std::getenv("RFN_THREADS")) {
        try {
          threads = std::max<std::size_t>(1, std::stoul(env));
        } catch (const std::exception&) {
          throw InvalidArgument(std::string("RFN_THREADS='") + env + "' is not a positive integer");
        }
      }
      const Dataset train_set = dataset_from(train_data, rc, "train");
      const Dataset test_set = dataset_from(test_data, rc, "test");
      out << "running " << cases.size() << " configurations on " << threads << " thread(s)\n";
      const auto rows = run_ablation(cases, rc.train, train_set, test_set, threads);
      write_text(ab_out, ablation_csv(rows));
      out << "wrote " << rows.size() << " rows to " << ab_out << "\n";
    } else if (gc->parsed()) {
      const Config cfg = load_config(common);
      announce(cfg, common, out);
      const RunConfig rc = to_run_config(cfg);
      Rng rng(gc_seed);
      GradCheckOptions opts = model_check_options();
      opts.tolerance = tolerance;
      bool ok = true;
      for (std::size_t t = 0; t < trials; ++t) {
        const ModelSpec spec = random_check_spec(rng);
        const auto report = grad_check_model(spec, rc.train, 3, rng.next(), 0.5, opts);
        out << "trial " << t << " n=" << spec.rfn.n << " r=" << spec.rfn.r
            << " pooling=" << to_string(spec.rfn.pooling)
            << " resume=" << to_string(spec.rfn.resume)
            << " stage=" << spec.rfn.insertion_stage << " max_rel_error " << std::scientific
            << report.max_rel_error << std::defaultfloat << " kinks " << report.kinks << "/"
            << report.checked << (report.passed ? " ok" : " FAIL")
            << "\n";
        if (!report.passed) {
          out << report.summary() << "\n";
          ok = false;
        }
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    err << "rfn: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rfn::cli
