// agopbench: synthetic attribution benchmark pipeline.
// Subcommands: gen | train | attribute | evaluate | report.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "agopbench/agop.hpp"
#include "agopbench/attribution.hpp"
#include "agopbench/dataset.hpp"
#include "agopbench/errors.hpp"
#include "agopbench/manifest.hpp"
#include "agopbench/metrics.hpp"
#include "agopbench/model.hpp"
#include "agopbench/train.hpp"

namespace fs = std::filesystem;
using namespace agopbench;

namespace {

// Flag combinations that parse but make no sense; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

struct GenOpts {
  std::string scenario;
  std::string background;
  std::size_t n_train = 4000;
  std::size_t n_test = 2000;
  std::uint64_t seed = 0;
  double alpha = 0.18;
  double kappa = -5.0;
  std::string out;
  bool force = false;
};

void cmd_gen(const GenOpts& o, const std::string& cmdline) {
  const fs::path out(o.out);
  const fs::path train_path = out / "train.xtrb";
  const fs::path test_path = out / "test.xtrb";
  if (!o.force && (fs::exists(train_path) || fs::exists(test_path))) {
    throw IoError("dataset files already exist in " + o.out + " (use --force to overwrite)");
  }
  fs::create_directories(out);

  ScenarioSpec spec;
  spec.scenario = parse_scenario(o.scenario);
  spec.background = parse_background(o.background);
  spec.alpha = o.alpha;
  spec.kappa = o.kappa;

  spec.n = o.n_train;
  spec.seed = mix_seed(o.seed, 1);
  spec.spurious_aligned = true;
  write_dataset(train_path.string(), generate_dataset(spec));

  // Test-time background templates are decorrelated from the label; that is
  // what makes the correlated condition a spurious-feature trap.
  spec.n = o.n_test;
  spec.seed = mix_seed(o.seed, 2);
  spec.spurious_aligned = false;
  write_dataset(test_path.string(), generate_dataset(spec));

  ManifestEntry entry;
  entry.command = cmdline;
  entry.seeds = {o.seed};
  entry.outputs[train_path.string()] = sha256_file(train_path.string());
  entry.outputs[test_path.string()] = sha256_file(test_path.string());
  append_manifest(o.out, std::move(entry));

  std::cout << "wrote " << train_path.string() << " (n=" << o.n_train << ") and "
            << test_path.string() << " (n=" << o.n_test << ")\n";
}

struct TrainOpts {
  std::string data;
  std::string out;
  std::size_t epochs = 100;
  double lr = 1e-3;
  double wd = 1e-4;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 100;
  bool no_agop_hook = false;
  bool only_correct = true;
};

void cmd_train(const TrainOpts& o, const std::string& cmdline) {
  const fs::path data(o.data);
  const fs::path out(o.out.empty() ? o.data : o.out);
  const std::string train_file = (data / "train.xtrb").string();
  const std::string test_file = (data / "test.xtrb").string();
  const std::vector<Sample> train_set = read_dataset(train_file);
  const std::vector<Sample> test_set = read_dataset(test_file);
  fs::create_directories(out);

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.lr0 = o.lr;
  cfg.weight_decay = o.wd;
  cfg.batch_size = o.batch;
  cfg.seed = o.seed;
  cfg.snapshot_every = o.snapshot_every;
  cfg.only_correct = o.only_correct;

  std::optional<AgopHook> hook;
  if (!o.no_agop_hook) {
    fs::create_directories(out / "snapshots");
    hook.emplace(o.only_correct, (out / "snapshots").string());
  }

  Cnn8by8 model = build_cnn8by8(o.seed);
  std::cout << "cnn8by8: " << model.parameter_count() << " parameters\n";
  const TrainResult result =
      train(model, train_set, test_set, cfg, hook ? &*hook : nullptr);
  for (const EpochStats& e : result.history) {
    if (e.epoch % 10 == 0 || e.epoch == result.history.size()) {
      std::cout << "epoch " << e.epoch << "/" << o.epochs << " train_acc " << std::fixed
                << std::setprecision(4) << e.train_acc << " test_acc " << e.test_acc
                << std::defaultfloat << '\n';
    }
  }

  const std::string model_path = (out / "model.cnn8").string();
  const std::string history_path = (out / "history.csv").string();
  save_model(model_path, model);
  write_history_csv(history_path, result.history);

  ManifestEntry entry;
  entry.command = cmdline;
  entry.seeds = {o.seed};
  entry.inputs[train_file] = sha256_file(train_file);
  entry.inputs[test_file] = sha256_file(test_file);
  entry.outputs[model_path] = sha256_file(model_path);
  entry.outputs[history_path] = sha256_file(history_path);
  if (hook) {
    const std::string diag_path = (out / "agop.diag").string();
    write_diag(diag_path, hook->finalize(result.total_steps));
    entry.outputs[diag_path] = sha256_file(diag_path);
    for (const AgopDiagonal& snap : hook->snapshots()) {
      const std::string p = (out / "snapshots" / snapshot_filename(snap.step)).string();
      entry.outputs[p] = sha256_file(p);
    }
  }
  append_manifest(out.string(), std::move(entry));
  std::cout << "final test_acc " << result.history.back().test_acc << ", wrote " << model_path
            << '\n';
}

struct AttributeOpts {
  std::string model;
  std::string diag;
  std::string data;
  std::string method;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::string out = ".";
};

void cmd_attribute(const AttributeOpts& o) {
  const Method method = parse_method(o.method);
  if (method_needs_diag(method) && o.diag.empty()) {
    throw UsageError("method " + o.method + " requires --diag");
  }
  const Cnn8by8 model = load_model(o.model);
  std::optional<AgopDiagonal> diag;
  if (!o.diag.empty()) diag = read_diag(o.diag);
  const std::vector<Sample> samples = read_dataset(o.data);
  if (o.index >= samples.size()) {
    throw ParamError("--index " + std::to_string(o.index) + " out of range (dataset has " +
                     std::to_string(samples.size()) + " samples)");
  }
  const Sample& s = samples[o.index];
  const SaliencyMap map = compute_attribution(method, model, s.image, diag ? &*diag : nullptr,
                                              mix_seed(o.seed, o.index));
  fs::create_directories(o.out);
  const std::string pgm_path =
      (fs::path(o.out) / (o.method + "_" + std::to_string(o.index) + ".pgm")).string();
  write_pgm(pgm_path, map.values);
  const double total_mass =
      std::accumulate(map.values.data.begin(), map.values.data.end(), 0.0);
  std::cout << "method=" << o.method << " index=" << o.index
            << " pg=" << pointing_game(map.values, s.mask) << " miou=" << std::setprecision(6)
            << miou(map.values, s.mask)
            << " energy_gt=" << (total_mass > 0.0 ? energy_gt(map.values, s.mask) : 0.0) << '\n';
  std::cout << "wrote " << pgm_path << '\n';
}

struct EvaluateOpts {
  std::string model;
  std::string diag;
  std::string data;
  std::string methods = "all";
  std::string scenario = "unknown";
  std::string background = "unknown";
  std::size_t n_eval = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool no_timing = false;
};

std::vector<Method> parse_method_list(const std::string& arg) {
  if (arg == "all") return all_methods();
  std::vector<Method> methods;
  std::stringstream ss(arg);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (!name.empty()) methods.push_back(parse_method(name));
  }
  if (methods.empty()) throw ParamError("--methods parsed to an empty list");
  return methods;
}

void cmd_evaluate(const EvaluateOpts& o, const std::string& cmdline) {
  const std::vector<Method> methods = parse_method_list(o.methods);
  const bool needs_diag =
      std::any_of(methods.begin(), methods.end(), [](Method m) { return method_needs_diag(m); });
  if (needs_diag && o.diag.empty()) {
    throw UsageError("requested methods require --diag");
  }
  const Cnn8by8 model = load_model(o.model);
  std::optional<AgopDiagonal> diag;
  if (!o.diag.empty()) diag = read_diag(o.diag);

  // The deletion/insertion baseline is the pixelwise mean of the sibling
  // training set, so --data is expected to live next to train.xtrb.
  const fs::path data_path(o.data);
  const fs::path train_path = data_path.parent_path() / "train.xtrb";
  const Tensor baseline = mean_image(read_dataset(train_path.string()));

  std::vector<Sample> samples = read_dataset(o.data);
  if (o.n_eval > 0 && o.n_eval < samples.size()) samples.resize(o.n_eval);

  SuiteConfig cfg;
  cfg.methods = methods;
  cfg.seed = o.seed;
  cfg.scenario = o.scenario;
  cfg.background = o.background;
  std::vector<EvalRecord> records = evaluate_suite(model, diag ? &*diag : nullptr, samples,
                                                   baseline, cfg);
  if (o.no_timing) {
    for (EvalRecord& r : records) r.ms_per_sample = 0.0;
  }
  write_report_csv(o.out, records);

  ManifestEntry entry;
  entry.command = cmdline;
  entry.seeds = {o.seed};
  entry.inputs[o.model] = sha256_file(o.model);
  entry.inputs[o.data] = sha256_file(o.data);
  entry.inputs[train_path.string()] = sha256_file(train_path.string());
  if (!o.diag.empty()) entry.inputs[o.diag] = sha256_file(o.diag);
  entry.outputs[o.out] = sha256_file(o.out);
  const fs::path out_dir = fs::path(o.out).parent_path();
  append_manifest(out_dir.empty() ? "." : out_dir.string(), std::move(entry));
  std::cout << "wrote " << o.out << " (" << records.size() << " methods, " << samples.size()
            << " samples)\n";
}

struct ReportOpts {
  std::string in_csv;
  std::string format = "table";
  std::string snapshots;
  std::string data;
  std::string out;
};

double centered_miou_offset(const std::string& scenario) {
  const std::size_t k = scenario == "xor" ? 8 : 4;
  return expected_random_iou(kImagePixels, k);
}

void report_table(const std::vector<EvalRecord>& records) {
  std::vector<EvalRecord> sorted(records);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const EvalRecord& a, const EvalRecord& b) { return a.miou > b.miou; });
  std::cout << std::left << std::setw(22) << "method" << std::setw(16) << "scenario"
            << std::setw(14) << "background" << std::right << std::setw(7) << "pg" << std::setw(8)
            << "miou" << std::setw(10) << "miou_ctr" << std::setw(10) << "energy" << std::setw(8)
            << "del" << std::setw(8) << "ins" << std::setw(9) << "ms/s" << std::setw(7) << "n"
            << '\n';
  for (const EvalRecord& r : sorted) {
    std::cout << std::left << std::setw(22) << r.method << std::setw(16) << r.scenario
              << std::setw(14) << r.background << std::right << std::fixed << std::setprecision(3)
              << std::setw(7) << r.pg << std::setw(8) << r.miou << std::setw(10)
              << r.miou - centered_miou_offset(r.scenario) << std::setw(10) << r.energy_gt
              << std::setw(8) << r.deletion_auc << std::setw(8) << r.insertion_auc
              << std::setprecision(4) << std::setw(9) << r.ms_per_sample << std::setw(7) << r.n
              << std::defaultfloat << '\n';
  }
}

void report_snapshots(const ReportOpts& o) {
  if (o.data.empty()) throw UsageError("--snapshots mode requires --data for the masks");
  const std::vector<Sample> samples = read_dataset(o.data);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.snapshots)) {
    if (e.path().extension() == ".diag") files.push_back(e.path());
  }
  if (files.empty()) throw IoError("no .diag snapshots in " + o.snapshots);
  std::sort(files.begin(), files.end());
  std::ostringstream series;
  series << "step,agop_global_miou\n";
  for (const fs::path& f : files) {
    const AgopDiagonal diag = read_diag(f.string());
    const SaliencyMap map = agop_global(diag);
    double mean = 0.0;
    for (const Sample& s : samples) mean += miou(map.values, s.mask);
    mean /= static_cast<double>(samples.size());
    series << diag.step << ',' << std::setprecision(6) << mean << '\n';
  }
  std::cout << series.str();
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::trunc);
    if (!f) throw IoError("cannot open " + o.out + " for writing");
    f << series.str();
  }
}

void cmd_report(const ReportOpts& o) {
  if (!o.snapshots.empty()) {
    report_snapshots(o);
    return;
  }
  if (o.in_csv.empty()) throw UsageError("report requires --in (or --snapshots)");
  const std::vector<EvalRecord> records = read_report_csv(o.in_csv);
  if (records.empty()) throw FormatError("report " + o.in_csv + ": no data rows");
  if (o.format == "csv") {
    std::ifstream f(o.in_csv);
    std::cout << f.rdbuf();
    return;
  }
  report_table(records);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AGOP attribution benchmark pipeline"};
  app.set_version_flag("--version", std::string("agopbench ") + kToolVersion);
  app.require_subcommand(1);
  const std::string cmdline = join_args(argc, argv);

  GenOpts gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a scenario dataset pair");
  gen_cmd->add_option("--scenario", gen.scenario, "Scenario name")
      ->required()
      ->check(CLI::IsMember({"linear", "multiplicative", "transrot", "xor"}));
  gen_cmd->add_option("--background", gen.background, "Background condition")
      ->required()
      ->check(CLI::IsMember({"uncorrelated", "correlated"}));
  gen_cmd->add_option("--n-train", gen.n_train, "Training samples");
  gen_cmd->add_option("--n-test", gen.n_test, "Test samples");
  gen_cmd->add_option("--seed", gen.seed, "Master seed");
  gen_cmd->add_option("--alpha", gen.alpha, "Signal-to-noise mixing weight");
  gen_cmd->add_option("--kappa", gen.kappa, "Multiplicative-scenario gain");
  gen_cmd->add_option("--out", gen.out, "Run directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Overwrite existing dataset files");

  TrainOpts tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the CNN with the AGOP hook");
  train_cmd->add_option("--data", tr.data, "Run directory with train.xtrb/test.xtrb")->required();
  train_cmd->add_option("--out", tr.out, "Output directory (default: --data)");
  train_cmd->add_option("--epochs", tr.epochs, "Training epochs");
  train_cmd->add_option("--lr", tr.lr, "Initial learning rate");
  train_cmd->add_option("--wd", tr.wd, "Weight decay");
  train_cmd->add_option("--batch", tr.batch, "Batch size");
  train_cmd->add_option("--seed", tr.seed, "Init and shuffle seed");
  train_cmd->add_option("--snapshot-every", tr.snapshot_every, "AGOP snapshot cadence in steps");
  train_cmd->add_flag("--no-agop-hook", tr.no_agop_hook, "Train without the AGOP hook");
  train_cmd->add_option("--only-correct", tr.only_correct,
                        "Gate AGOP accumulation on correct predictions (true/false)");

  AttributeOpts at;
  CLI::App* attr_cmd = app.add_subcommand("attribute", "Attribute one sample and dump a PGM");
  attr_cmd->add_option("--model", at.model, "Model file")->required();
  attr_cmd->add_option("--diag", at.diag, "AGOP diag file");
  attr_cmd->add_option("--data", at.data, "Dataset file (.xtrb)")->required();
  attr_cmd->add_option("--method", at.method, "Attribution method")
      ->required()
      ->check(CLI::IsMember({"vanilla_grad", "integrated_gradients", "smoothgrad", "gradcam",
                             "gradcam_pp", "agop_local", "agop_weighted", "agop_global", "random"}));
  attr_cmd->add_option("--index", at.index, "Sample index");
  attr_cmd->add_option("--seed", at.seed, "Seed for stochastic methods");
  attr_cmd->add_option("--out", at.out, "Output directory for the PGM");

  EvaluateOpts ev;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate methods over a dataset");
  eval_cmd->add_option("--model", ev.model, "Model file")->required();
  eval_cmd->add_option("--diag", ev.diag, "AGOP diag file");
  eval_cmd->add_option("--data", ev.data, "Dataset file (.xtrb)")->required();
  eval_cmd->add_option("--methods", ev.methods, "Comma list of methods, or 'all'");
  eval_cmd->add_option("--scenario", ev.scenario, "Scenario label for the report rows");
  eval_cmd->add_option("--background", ev.background, "Background label for the report rows");
  eval_cmd->add_option("--n-eval", ev.n_eval, "Evaluate only the first N samples (0 = all)");
  eval_cmd->add_option("--seed", ev.seed, "Suite seed");
  eval_cmd->add_option("--out", ev.out, "Report CSV path")->required();
  eval_cmd->add_flag("--no-timing", ev.no_timing,
                     "Zero the ms_per_sample column for byte-reproducible output");

  ReportOpts rp;
  CLI::App* report_cmd = app.add_subcommand("report", "Render a report CSV or snapshot series");
  report_cmd->add_option("--in", rp.in_csv, "Report CSV from 'evaluate'");
  report_cmd->add_option("--format", rp.format, "Output format")
      ->check(CLI::IsMember({"table", "csv"}));
  report_cmd->add_option("--snapshots", rp.snapshots, "Snapshot directory (series mode)");
  report_cmd->add_option("--data", rp.data, "Dataset file for masks (series mode)");
  report_cmd->add_option("--out", rp.out, "Optional output file for the series");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen_cmd->parsed()) cmd_gen(gen, cmdline);
    if (train_cmd->parsed()) cmd_train(tr, cmdline);
    if (attr_cmd->parsed()) cmd_attribute(at);
    if (eval_cmd->parsed()) cmd_evaluate(ev, cmdline);
    if (report_cmd->parsed()) cmd_report(rp);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
