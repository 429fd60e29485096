#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vatlab/checkpoint.hpp"
#include "vatlab/io_util.hpp"
#include "vatlab/plot.hpp"
#include "vatlab/train.hpp"

namespace fs = std::filesystem;
using namespace vatlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitData = 4;

struct Options {
  std::uint64_t seed = 1;
  std::string task = "moons";
  std::string reg = "mle";
  double epsilon = -1.0;
  double lambda = -1.0;
  double keep = 0.5;
  double xi = 1e-6;
  int ip = 1;
  std::string adv_mode = "augment";
  std::string hidden;
  std::size_t updates = 0;
  std::size_t batch = 0;
  std::size_t reg_batch = 0;
  std::size_t eval_every = 0;
  bool eval_every_set = false;
  bool no_lds = false;
  std::string mnist_dir;
  std::string labeled = "all";
  std::size_t n_labeled = 100;
  std::size_t n_validation = 1000;
  std::string out_dir = ".";
  std::string config;
  std::string checkpoint;
  std::size_t resolution = 200;
  std::size_t reps = 50;
  std::vector<std::string> methods;
  double eval_epsilon = 0.5;
  int eval_ip = 5;
};

std::vector<std::size_t> parse_hidden(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("--hidden: '" + tok + "' is not a positive integer");
    }
  }
  if (out.empty()) throw ConfigError("--hidden: no layer sizes given");
  return out;
}

double or_default(double v, double fallback) { return v < 0.0 ? fallback : v; }

RegularizerKind make_regularizer(const Options& o) {
  const std::string& r = o.reg;
  if (r == "mle" || r == "none") return reg::None{};
  if (r == "l2") return reg::L2Decay{or_default(o.lambda, 1e-3)};
  if (r == "dropout") return reg::Dropout{o.keep};
  const double lambda = or_default(o.lambda, 1.0);
  if (r == "random") return reg::RandomPerturbation{or_default(o.epsilon, 1.0), lambda};
  if (r == "adv-linf" || r == "adv-l2") {
    AdvMode mode;
    if (o.adv_mode == "augment") {
      mode = AdvMode::augment;
    } else if (o.adv_mode == "replace") {
      mode = AdvMode::replace;
    } else {
      throw ConfigError("--adv-mode must be augment or replace");
    }
    const AdvNorm norm = r == "adv-linf" ? AdvNorm::linf : AdvNorm::l2;
    return reg::Adversarial{or_default(o.epsilon, norm == AdvNorm::linf ? 0.1 : 1.0), norm, mode, lambda};
  }
  if (r == "vat") return reg::Vat{VatConfig{or_default(o.epsilon, 0.5), o.xi, o.ip, lambda}};
  throw ConfigError("unknown regularizer '" + r + "'");
}

bool is_synthetic(const std::string& task) { return task == "moons" || task == "circles"; }

TrainConfig make_train_config(const Options& o) {
  TrainConfig cfg;
  if (is_synthetic(o.task)) {
    cfg = TrainConfig::synthetic();
  } else if (o.task == "mnist") {
    cfg = TrainConfig::mnist_supervised();
  } else if (o.task == "mnist-semisup") {
    cfg = TrainConfig::mnist_semisup();
  } else {
    throw ConfigError("unknown task '" + o.task + "'");
  }
  cfg.regularizer = make_regularizer(o);
  cfg.seed = o.seed;
  if (!o.hidden.empty()) cfg.hidden = parse_hidden(o.hidden);
  if (o.updates > 0) cfg.updates = o.updates;
  if (o.batch > 0) cfg.batch_size = o.batch;
  if (o.reg_batch > 0) cfg.reg_batch_size = o.reg_batch;
  if (o.eval_every_set) cfg.eval_every = o.eval_every;
  if (o.no_lds) cfg.record_lds = false;
  cfg.eval_vat = VatConfig{o.eval_epsilon, o.xi, o.eval_ip, 1.0};
  cfg.validate();
  return cfg;
}

MnistData load_mnist(const Options& o) {
  if (o.mnist_dir.empty()) throw ConfigError("--mnist-dir is required for MNIST tasks");
  return load_mnist_dir(o.mnist_dir);
}

void write_out(const fs::path& dir, const std::string& name, const std::string& contents) {
  fs::create_directories(dir);
  atomic_write_file(dir / name, contents);
}

SyntheticExperiment synthetic_data(const std::string& task, std::uint64_t data_seed) {
  return make_synthetic_experiment(parse_task(task), data_seed);
}

int cmd_gen_data(const Options& o) {
  if (!is_synthetic(o.task)) throw ConfigError("gen-data supports moons and circles");
  const SyntheticExperiment ex = synthetic_data(o.task, o.seed);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  write_dataset_csv(dir / "train.csv", ex.train);
  write_dataset_csv(dir / "validation.csv", ex.validation);
  write_dataset_csv(dir / "test.csv", ex.test);
  nlohmann::json j;
  j["task"] = o.task;
  j["seed"] = o.seed;
  j["embedding"]["matrix"] = {std::vector<double>(ex.map.matrix.row(0).begin(), ex.map.matrix.row(0).end()),
                              std::vector<double>(ex.map.matrix.row(1).begin(), ex.map.matrix.row(1).end())};
  j["embedding"]["offset"] = ex.map.offset.data();
  write_out(dir, "embedding.json", j.dump(2) + "\n");
  std::cout << "wrote " << ex.train.size() << " train, " << ex.validation.size() << " validation, "
            << ex.test.size() << " test rows to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const Options& o) {
  const TrainConfig cfg = make_train_config(o);
  Dataset train, test;
  std::map<std::string, std::string> meta{{"task", o.task},
                                          {"seed", std::to_string(o.seed)},
                                          {"reg", regularizer_name(cfg.regularizer)},
                                          {"param", std::to_string(regularizer_parameter(cfg.regularizer))}};
  if (is_synthetic(o.task)) {
    const SyntheticExperiment ex = synthetic_data(o.task, o.seed);
    train = ex.train;
    test = ex.test;
    meta["data_seed"] = std::to_string(o.seed);
  } else {
    MnistData m = load_mnist(o);
    test = std::move(m.test);
    if (o.task == "mnist-semisup") {
      Rng split_rng = Rng(o.seed).fork(7);
      train = make_semisup_split(m.train, o.n_labeled, o.n_validation, split_rng);
    } else if (o.labeled == "all") {
      train = std::move(m.train);
    } else {
      Rng split_rng = Rng(o.seed).fork(7);
      std::size_t n = 0;
      try {
        n = std::stoul(o.labeled);
      } catch (const std::exception&) {
        throw ConfigError("--labeled must be 'all' or a count");
      }
      train = make_semisup_split(m.train, n, 0, split_rng);
    }
  }
  TrainConfig run_cfg = cfg;
  run_cfg.seed = mix_seed(o.seed, 1);
  const TrainResult result = train_model(train, test, run_cfg);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint.bin", Checkpoint{result.network, meta});
  write_out(dir, "records.csv", records_to_csv(result.records));
  const TrainRecord& last = result.records.back();
  nlohmann::json j;
  j["task"] = o.task;
  j["method"] = regularizer_name(cfg.regularizer);
  j["param"] = regularizer_parameter(cfg.regularizer);
  j["updates"] = cfg.updates;
  j["seed"] = o.seed;
  j["final"] = {{"train_err", last.train_err}, {"test_err", last.test_err},
                {"train_lds", last.train_lds}, {"test_lds", last.test_lds}};
  write_out(dir, "summary.json", j.dump(2) + "\n");
  std::cout << regularizer_name(cfg.regularizer) << " on " << o.task << ": train_err " << last.train_err
            << " test_err " << last.test_err << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const auto task_it = ck.metadata.find("task");
  const std::string task = task_it == ck.metadata.end() ? o.task : task_it->second;
  Dataset test;
  if (is_synthetic(task)) {
    const auto seed_it = ck.metadata.find("data_seed");
    if (seed_it == ck.metadata.end()) throw FormatError("checkpoint lacks data_seed metadata");
    test = synthetic_data(task, std::stoull(seed_it->second)).test;
  } else {
    test = load_mnist(o).test;
  }
  Rng rng = Rng(o.seed).fork(9);
  const Evaluation e = evaluate(ck.network, test.inputs, test.labels,
                                VatConfig{o.eval_epsilon, o.xi, o.eval_ip, 1.0}, rng, !o.no_lds);
  nlohmann::json j{{"task", task}, {"test_err", e.error}, {"test_lds", e.mean_lds}, {"rows", test.size()}};
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_boundary(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const auto task_it = ck.metadata.find("task");
  const auto seed_it = ck.metadata.find("data_seed");
  if (task_it == ck.metadata.end() || !is_synthetic(task_it->second) || seed_it == ck.metadata.end()) {
    throw UsageError("boundary needs a checkpoint trained on moons or circles");
  }
  const SyntheticExperiment ex = synthetic_data(task_it->second, std::stoull(seed_it->second));
  const BoundaryGrid grid =
      boundary_grid(ck.network, ex.map, padded_bounds(ex.train_points.points), o.resolution, o.resolution);
  const std::vector<Polyline> contours = contour_lines(grid, 0.5);
  Rng rng = Rng(o.seed).fork(9);
  const Evaluation e = evaluate(ck.network, ex.train.inputs, ex.train.labels,
                                VatConfig{o.eval_epsilon, o.xi, o.eval_ip, 1.0}, rng);
  std::ostringstream title;
  title.precision(4);
  title << task_it->second << " / " << ck.metadata.at("reg") << ": average LDS~ on training set = "
        << e.mean_lds << ", test points excluded";
  const fs::path dir(o.out_dir);
  write_out(dir, "grid.csv", boundary_grid_csv(grid));
  write_out(dir, "boundary.svg",
            boundary_svg(grid, contours, ex.train_points.points, ex.train_points.labels, SvgOptions{title.str()}));
  std::cout << "wrote " << (dir / "boundary.svg").string() << " with " << contours.size()
            << " contour line(s)\n";
  return kExitOk;
}

int cmd_grid(const Options& o) {
  if (!is_synthetic(o.task)) throw ConfigError("grid supports moons and circles");
  TrainConfig base = make_train_config(o);
  std::vector<MethodGrid> grids = synthetic_method_grids();
  if (!o.methods.empty()) {
    std::vector<MethodGrid> chosen;
    for (const auto& m : o.methods) {
      auto it = std::find_if(grids.begin(), grids.end(), [&](const MethodGrid& g) { return g.method == m; });
      if (it == grids.end()) throw ConfigError("unknown method '" + m + "'");
      chosen.push_back(*it);
    }
    grids = std::move(chosen);
  }
  const GridReport report = synthetic_grid_search(parse_task(o.task), grids, base, o.reps, o.seed);
  const fs::path dir(o.out_dir);
  write_out(dir, "grid.csv", grid_report_csv(report));
  write_out(dir, "summary.json", grid_report_json(report));
  std::printf("%-10s %10s %10s %10s\n", "method", "param", "mean_err", "sd");
  for (const auto& m : report.methods) {
    std::printf("%-10s %10.4g %10.4f %10.4f\n", m.method.c_str(),
                regularizer_parameter(m.candidates[m.best].regularizer), m.test_mean, m.test_sd);
  }
  return kExitOk;
}

int cmd_audit_cost(const Options& o) {
  const SyntheticExperiment ex = synthetic_data(is_synthetic(o.task) ? o.task : "moons", o.seed);
  Rng init = Rng(o.seed).fork(1);
  const std::vector<std::size_t> hidden = o.hidden.empty() ? std::vector<std::size_t>{100} : parse_hidden(o.hidden);
  const MlpNetwork net = MlpNetwork::he_initialized(ex.train.input_dim(), hidden, 2, init);
  const VatConfig cfg{or_default(o.epsilon, 0.5), o.xi, o.ip, or_default(o.lambda, 1.0)};
  cfg.validate();
  Rng rng = Rng(o.seed).fork(2);
  const CostAudit a = vat_step_cost_audit(net, ex.train.inputs, ex.train.labels, ex.train.inputs, cfg, rng);
  nlohmann::json j{{"power_iterations", cfg.power_iterations},
                   {"lambda", cfg.lambda},
                   {"likelihood", {{"forward", a.likelihood.forward}, {"backward", a.likelihood.backward}}},
                   {"regularizer", {{"forward", a.regularizer.forward}, {"backward", a.regularizer.backward}}}};
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

bool is_true(std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Splices `key = value` lines from a --config file into the argument list,
/// right after the subcommand. Keys also given as flags are dropped so the
/// command line wins.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const std::string name = a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2);
    given.insert(name);
    if (name != "config") continue;
    if (a.find('=') != std::string::npos) {
      path = a.substr(a.find('=') + 1);
    } else if (i + 1 < args.size()) {
      path = args[i + 1];
    }
  }
  if (path.empty() || args.size() < 2) return args;

  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("--config: ") + e.what());
  }
  std::vector<std::string> injected;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config") throw ConfigError(path + ":" + std::to_string(line_no) + ": bad key");
    if (given.count(key) > 0) continue;
    if (key == "no-lds") {
      if (is_true(value)) injected.push_back("--no-lds");
      continue;
    }
    injected.push_back("--" + key);
    injected.push_back(value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::usage: return kExitConfig;
    case ErrorKind::numeric: return kExitNumeric;
    default: return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vatlab: virtual adversarial training experiments"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value file; command-line flags take precedence");
    sub->add_option("--seed", o.seed, "seed for data, initialization and sampling");
    sub->add_option("--task", o.task, "moons, circles, mnist or mnist-semisup");
    sub->add_option("--out-dir", o.out_dir, "output directory");
    sub->add_option("--xi", o.xi, "finite-difference scale");
    sub->add_option("--eval-epsilon", o.eval_epsilon, "epsilon for reported LDS");
    sub->add_option("--eval-ip", o.eval_ip, "power iterations for reported LDS");
    sub->add_option("--mnist-dir", o.mnist_dir, "directory with the four MNIST IDX files");
  };
  auto add_training = [&](CLI::App* sub) {
    sub->add_option("--reg", o.reg, "mle, l2, dropout, random, adv-linf, adv-l2 or vat");
    sub->add_option("--epsilon", o.epsilon, "perturbation radius");
    sub->add_option("--lambda", o.lambda, "regularization weight (l2: coefficient)");
    sub->add_option("--keep", o.keep, "dropout keep probability");
    sub->add_option("--ip", o.ip, "power iterations");
    sub->add_option("--adv-mode", o.adv_mode, "augment or replace");
    sub->add_option("--hidden", o.hidden, "comma-separated hidden layer sizes");
    sub->add_option("--updates", o.updates, "parameter updates");
    sub->add_option("--batch", o.batch, "likelihood minibatch size");
    sub->add_option("--reg-batch", o.reg_batch, "regularizer minibatch size (semi-supervised)");
    sub->add_option_function<std::size_t>(
        "--eval-every", [&](const std::size_t& v) { o.eval_every = v; o.eval_every_set = true; },
        "updates between recorded metrics");
    sub->add_flag("--no-lds", o.no_lds, "skip LDS in recorded metrics");
    sub->add_option("--labeled", o.labeled, "mnist: 'all' or a labeled count");
    sub->add_option("--n-labeled", o.n_labeled, "mnist-semisup: labeled count");
    sub->add_option("--n-validation", o.n_validation, "mnist-semisup: validation count");
  };

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  add_common(gen);
  auto* train = app.add_subcommand("train", "train one model");
  add_common(train);
  add_training(train);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its test set");
  add_common(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  eval->add_flag("--no-lds", o.no_lds, "skip LDS");
  auto* boundary = app.add_subcommand("boundary", "decision boundary grid and SVG");
  add_common(boundary);
  boundary->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  boundary->add_option("--resolution", o.resolution, "lattice points per side");
  auto* grid = app.add_subcommand("grid", "hyperparameter grid over methods");
  add_common(grid);
  add_training(grid);
  grid->add_option("--reps", o.reps, "repetitions with fresh data");
  grid->add_option("--methods", o.methods, "subset of methods")->delimiter(',');
  auto* audit = app.add_subcommand("audit-cost", "count propagations of one VAT step");
  add_common(audit);
  audit->add_option("--ip", o.ip, "power iterations");
  audit->add_option("--lambda", o.lambda, "regularization weight");
  audit->add_option("--epsilon", o.epsilon, "perturbation radius");
  audit->add_option("--hidden", o.hidden, "comma-separated hidden layer sizes");

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  std::vector<char*> arg_ptrs;
  for (auto& a : args) arg_ptrs.push_back(a.data());

  try {
    app.parse(static_cast<int>(arg_ptrs.size()), arg_ptrs.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*boundary) return cmd_boundary(o);
    if (*grid) return cmd_grid(o);
    if (*audit) return cmd_audit_cost(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: bad value: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
