#include "srvp/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "srvp/gradcheck_suite.hpp"
#include "srvp/training.hpp"

namespace fs = std::filesystem;

namespace srvp {

namespace {

// Keeps the test split's generator streams away from any small training seed.
constexpr std::uint64_t kTestSeedOffset = 0x5DEECE66DULL;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

RunConfig read_run_config(const std::string& path, RunConfig base = {}) {
  if (path.empty()) return base;
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  return load_config(path, std::move(base));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void require_compatible(const ModelConfig& m, const Dataset& ds) {
  if (ds.channels != m.channels || ds.height != m.height || ds.width != m.width ||
      ds.frames < m.input_len + m.pred_len) {
    throw DimensionError("dataset frames " + std::to_string(ds.frames) + "x" +
                         std::to_string(ds.channels) + "x" + std::to_string(ds.height) + "x" +
                         std::to_string(ds.width) + " incompatible with config (N+P=" +
                         std::to_string(m.input_len + m.pred_len) + ", C=" +
                         std::to_string(m.channels) + ", H=" + std::to_string(m.height) +
                         ", W=" + std::to_string(m.width) + ")");
  }
}

std::vector<std::uint8_t> to_u8(std::span<const double> values) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

/// Keeps the header and the first `rows` rows of an existing log.
std::string log_prefix(const fs::path& path, std::size_t rows) {
  std::ifstream f(path);
  if (!f) return {};
  std::string line, out;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    if (n > rows) break;
    out += line + "\n";
    ++n;
  }
  return out;
}

int cmd_gen_data(const std::string& out_path, const std::string& config_path,
                 std::optional<std::uint64_t> seed, const std::string& split,
                 std::optional<std::size_t> sequences, std::ostream& out) {
  RunConfig config = read_run_config(config_path);
  if (seed) config.data.seed = *seed;
  if (split != "train" && split != "test") throw UsageError("--split must be train or test");
  if (config.model.channels != 1) throw UsageError("gen-data renders single-channel frames (C=1)");
  GenerateOptions opt = generate_options(config, split == "train" ? Split::Train : Split::Test);
  if (sequences) opt.num_sequences = *sequences;
  const Dataset ds = generate(opt);
  write_dataset(ds, out_path);
  out << "wrote " << ds.num_sequences << " sequences of shape [" << ds.frames << ","
      << ds.channels << "," << ds.height << "," << ds.width << "] to " << out_path << "\n";
  return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& out_dir, const std::string& ablation,
              const std::string& val_path, const std::string& resume,
              std::optional<std::size_t> max_epochs, std::ostream& out) {
  RunConfig config = read_run_config(config_path);
  if (!ablation.empty()) {
    const auto a = ablation_from_name(ablation);
    if (!a) throw UsageError("unknown ablation '" + ablation + "'");
    config.model = apply_ablation(config.model, *a);
  }
  config.model.validate();

  const Dataset all = read_dataset(data_path);
  require_compatible(config.model, all);
  Dataset train, val;
  if (!val_path.empty()) {
    train = all;
    val = read_dataset(val_path);
    require_compatible(config.model, val);
  } else {
    std::tie(train, val) = split_validation(all, config.train.val_fraction);
  }

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_text(dir / "config.txt", to_config_text(config));

  SrvpModel model(config.model, config.train.seed);
  Trainer trainer(model, config);
  std::string log_text;
  if (!resume.empty()) {
    trainer.restore(load_checkpoint(resume));
    log_text = log_prefix(dir / "log.csv", trainer.epoch());
  }
  if (log_text.empty()) log_text = training_log_csv({});

  std::size_t ran = 0;
  while (!trainer.finished() && (!max_epochs || ran < *max_epochs)) {
    const EpochLog e = trainer.run_epoch(train, val);
    ++ran;
    const std::string row = training_log_csv({e});
    log_text += row.substr(row.find('\n') + 1);
    write_text(dir / "log.csv", log_text);
    save_checkpoint(trainer.checkpoint(), dir / "last.ckpt");
    if (trainer.best() && trainer.best()->epoch == trainer.epoch()) {
      save_checkpoint(*trainer.best(), dir / "best.ckpt");
    }
    out << "epoch " << e.epoch << "/" << config.train.epochs << " lr " << e.lr << " train_loss "
        << e.train_loss << " val_mse " << e.val_mse << "\n";
  }
  write_text(dir / "log.csv", log_text);
  save_checkpoint(trainer.checkpoint(), dir / "last.ckpt");
  return kExitOk;
}

int cmd_eval(const std::string& data_path, const std::string& ckpt_path,
             const std::string& out_dir, std::size_t dump_frames, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig config = parse_config(ckpt.config_text);
  SrvpModel model(config.model, config.train.seed);
  restore_params(model.params(), ckpt.params);
  const Dataset ds = read_dataset(data_path);
  require_compatible(config.model, ds);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const auto& m = config.model;
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < ds.num_sequences; ++i) {
    const Tensor pred = predict(model, ds.frames_tensor(i, 0, m.input_len), m.pred_len);
    reports.push_back(evaluate_sequence(pred, ds.frames_tensor(i, m.input_len, m.pred_len)));
    if (i < dump_frames) {
      if (m.channels != 1) throw UsageError("--dump-frames requires C=1");
      const std::size_t fsz = ds.frame_size();
      const auto seq = ds.sequence(i);
      for (std::size_t t = 0; t < m.input_len; ++t) {
        write_pgm(dir / ("seq" + std::to_string(i) + "_input" + std::to_string(t) + ".pgm"),
                  seq.subspan(t * fsz, fsz), m.height, m.width);
      }
      for (std::size_t t = 0; t < m.pred_len; ++t) {
        const auto px = to_u8(pred.data().subspan(t * fsz, fsz));
        write_pgm(dir / ("seq" + std::to_string(i) + "_pred" + std::to_string(t) + ".pgm"), px,
                  m.height, m.width);
      }
    }
  }
  const MetricReport agg = aggregate(reports);
  write_metric_csv(agg, dir / "metrics.csv");
  out << std::setprecision(6) << "sequences " << ds.num_sequences << " mse " << agg.mean_mse
      << " psnr " << agg.mean_psnr << " ssim " << agg.mean_ssim << "\n";
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, const std::string& corrupt, std::ostream& out) {
  const RunConfig config = read_run_config(config_path, gradcheck_preset());
  if (!corrupt.empty()) {
    const auto kind = op_from_name(corrupt);
    if (!kind) throw UsageError("unknown op '" + corrupt + "'");
    testing::corrupt_backward(*kind);
  }
  GradcheckReport report;
  try {
    report = run_gradcheck_suite(config.model, config.train.seed);
  } catch (...) {
    testing::corrupt_backward(std::nullopt);
    throw;
  }
  testing::corrupt_backward(std::nullopt);
  out << std::scientific << std::setprecision(3);
  for (const auto& e : report.entries) {
    out << (e.passed ? "PASS " : "FAIL ") << std::left << std::setw(26) << e.name
        << " max_rel_error " << e.max_rel_error;
    if (e.narrowed > 0) out << " (" << e.narrowed << " coords narrowed at kinks)";
    out << "\n";
  }
  out << "worst " << report.worst() << " tolerance " << report.tolerance << " -> "
      << (report.passed() ? "PASS" : "FAIL") << "\n";
  return report.passed() ? kExitOk : kExitNumerical;
}

}  // namespace

GenerateOptions generate_options(const RunConfig& config, Split split) {
  GenerateOptions opt;
  opt.num_sequences =
      split == Split::Train ? config.data.train_sequences : config.data.test_sequences;
  opt.frames = config.model.input_len + config.model.pred_len;
  opt.height = config.model.height;
  opt.width = config.model.width;
  opt.glyphs = config.data.glyphs;
  opt.seed = split == Split::Train ? config.data.seed : config.data.seed + kTestSeedOffset;
  opt.min_speed = config.data.min_speed;
  opt.max_speed = config.data.max_speed;
  return opt;
}

std::pair<Dataset, Dataset> split_validation(const Dataset& ds, double fraction) {
  if (ds.num_sequences < 2) {
    throw std::invalid_argument("need at least 2 sequences to hold out validation data");
  }
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("val_fraction must lie in (0, 1)");
  }
  auto held = static_cast<std::size_t>(std::ceil(fraction * ds.num_sequences));
  held = std::clamp<std::size_t>(held, 1, ds.num_sequences - 1);
  const std::size_t cut = ds.num_sequences - held;
  return {ds.subset(0, cut), ds.subset(cut, ds.num_sequences)};
}

MetricReport evaluate_dataset(const SrvpModel& model, const Dataset& ds) {
  const auto& m = model.config();
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < ds.num_sequences; ++i) {
    const Tensor pred = predict(model, ds.frames_tensor(i, 0, m.input_len), m.pred_len);
    reports.push_back(evaluate_sequence(pred, ds.frames_tensor(i, m.input_len, m.pred_len)));
  }
  return aggregate(reports);
}

MetricReport copy_last_frame_report(const Dataset& ds, std::size_t input_len,
                                    std::size_t pred_len) {
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < ds.num_sequences; ++i) {
    const Tensor last = ds.frames_tensor(i, input_len - 1, 1);
    std::vector<double> rep;
    for (std::size_t p = 0; p < pred_len; ++p)
      rep.insert(rep.end(), last.data().begin(), last.data().end());
    Shape shape = last.shape();
    shape[0] = pred_len;
    reports.push_back(
        evaluate_sequence(Tensor(shape, std::move(rep)), ds.frames_tensor(i, input_len, pred_len)));
  }
  return aggregate(reports);
}

RunConfig gradcheck_preset() {
  RunConfig c;
  c.model.layers = 2;
  c.model.hidden = 4;
  c.model.reinforced = 4;
  c.model.height = 8;
  c.model.width = 8;
  c.model.input_len = 3;
  c.model.pred_len = 2;
  return c;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Video frame prediction with recurrent attention models"};
  app.require_subcommand(1);

  std::string out_path, config_path, data_path, ckpt_path, ablation, val_path, resume, corrupt;
  std::string split = "train";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sequences, max_epochs;
  std::size_t dump_frames = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a bouncing-glyph dataset file");
  gen->add_option("--out", out_path, "Output dataset path")->required();
  gen->add_option("--config", config_path, "Run configuration file");
  gen->add_option("--seed", seed, "Override the data seed");
  gen->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--sequences", sequences, "Override the sequence count");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--data", data_path, "Training dataset")->required();
  train->add_option("--config", config_path, "Run configuration file");
  train->add_option("--out", out_path, "Run directory")->required();
  train->add_option("--ablation", ablation,
                    "full, without-sa, without-rfa, without-crossatt or baseline");
  train->add_option("--val", val_path, "Validation dataset (default: hold out val_fraction)");
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_option("--max-epochs", max_epochs, "Stop after this many epochs in this run");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--data", data_path, "Dataset")->required();
  eval->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  eval->add_option("--out", out_path, "Output directory")->required();
  eval->add_option("--dump-frames", dump_frames, "Write PGM frames for the first K sequences");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("--config", config_path, "Overrides applied to the gradcheck preset");
  grad->add_option("--corrupt-op", corrupt)->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(out_path, config_path, seed, split, sequences, out);
    if (train->parsed()) {
      return cmd_train(data_path, config_path, out_path, ablation, val_path, resume, max_epochs,
                       out);
    }
    if (eval->parsed()) return cmd_eval(data_path, ckpt_path, out_path, dump_frames, out);
    if (grad->parsed()) return cmd_gradcheck(config_path, corrupt, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace srvp
