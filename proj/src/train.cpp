#include "vatlab/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace vatlab {
namespace {

constexpr std::size_t kEvalChunk = 1000;

/// Cycles through shuffled epochs of a row pool. Requests at least as large
/// as the pool return the whole pool in its original order.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> pool, Rng rng) : pool_(std::move(pool)), order_(pool_), rng_(rng) {
    pos_ = order_.size();
  }

  std::vector<std::size_t> next(std::size_t k) {
    if (k == 0 || k >= pool_.size()) return pool_;
    std::vector<std::size_t> out;
    out.reserve(k);
    while (out.size() < k) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_.begin(), order_.end());
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> pool_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

ObjectiveTerm zero_term(const MlpNetwork& net) { return ObjectiveTerm{0.0, net.zero_gradients()}; }

ObjectiveTerm likelihood_term(const MlpNetwork& net, const Tensor& x, std::span<const int> labels) {
  const ForwardCache cache = forward(net, x);
  LossAndGradient nll = nll_loss(cache.logits, labels);
  return ObjectiveTerm{nll.value, backward(net, cache, nll.d_logits, BackwardTargets::parameters)};
}

ObjectiveTerm scaled(ObjectiveTerm t, double lambda) {
  t.value *= lambda;
  t.gradient.scale(lambda);
  return t;
}

/// Penalty of the label-free regularizers on x.
ObjectiveTerm label_free_term(const MlpNetwork& net, const Tensor& x, const RegularizerKind& reg,
                              Rng& rng) {
  if (const auto* v = std::get_if<reg::Vat>(&reg)) return vat_regularizer(net, x, v->config, rng);
  if (const auto* rp = std::get_if<reg::RandomPerturbation>(&reg)) {
    if (rp->lambda == 0.0) return zero_term(net);
    const DetachedDistribution base = base_distribution(net, x);
    const Tensor r = random_perturbation(x, rp->epsilon, rng);
    return scaled(vat_backward(net, x, r, base), rp->lambda);
  }
  return zero_term(net);
}

StepLoss apply_step(MlpNetwork& net, const StepGradients& g, Optimizer& opt) {
  if (!std::isfinite(g.likelihood.value) || !std::isfinite(g.regularizer.value)) {
    throw NumericError("training step produced a non-finite loss");
  }
  opt.descend(net, g.total());
  return StepLoss{g.likelihood.value, g.regularizer.value};
}

std::vector<std::size_t> rows_with_tag(const Dataset& d, std::initializer_list<Split> tags) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (std::find(tags.begin(), tags.end(), d.splits[i]) != tags.end()) out.push_back(i);
  return out;
}

template <typename F>
void run_parallel(std::size_t n, F&& body) {
  std::exception_ptr failure;
  const int threads = std::max(1, std::min<int>(worker_threads(), static_cast<int>(n)));
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(vatlab_grid_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<int> labels_of(const Dataset& d) { return d.labels; }

nlohmann::json regularizer_json(const RegularizerKind& r) {
  return {{"method", regularizer_name(r)}, {"param", regularizer_parameter(r)}};
}

}  // namespace

void TrainConfig::validate() const {
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("train: hidden layer sizes must be positive");
  validate_regularizer(regularizer);
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  schedule.validate();
  if (updates < 1) throw ConfigError("train: updates must be >= 1");
  eval_vat.validate();
  if (semi_supervised && !regularizer_is_label_free(regularizer)) {
    throw ConfigError("train: regularizer '" + regularizer_name(regularizer) +
                      "' needs labels and cannot run semi-supervised");
  }
}

TrainConfig TrainConfig::synthetic() { return TrainConfig{}; }

TrainConfig TrainConfig::mnist_supervised() {
  TrainConfig c;
  c.hidden = {1200, 600};
  c.optimizer = OptimizerKind::adam;
  c.schedule = DecaySchedule{0.002, 0.9, 500};
  c.batch_size = 100;
  c.updates = 50000;
  c.eval_every = 500;
  c.record_lds = false;
  return c;
}

TrainConfig TrainConfig::mnist_semisup() {
  TrainConfig c = mnist_supervised();
  c.hidden = {1200, 1200};
  c.semi_supervised = true;
  c.reg_batch_size = 250;
  return c;
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::adam) {
    AdamState s;
    s.schedule = cfg.schedule;
    return std::make_unique<Adam>(std::move(s));
  }
  MomentumSgdState s;
  s.mu = cfg.momentum;
  s.schedule = cfg.schedule;
  return std::make_unique<MomentumSgd>(std::move(s));
}

GradientBundle StepGradients::total() const {
  GradientBundle g = likelihood.gradient;
  g.add_scaled(regularizer.gradient, 1.0);
  return g;
}

StepGradients supervised_gradients(const MlpNetwork& net, const Tensor& x,
                                   std::span<const int> labels, const RegularizerKind& reg,
                                   Rng& rng) {
  validate_regularizer(reg);
  StepGradients out;
  if (const auto* d = std::get_if<reg::Dropout>(&reg)) {
    out.likelihood = likelihood_term(net, apply_dropout(x, d->keep_probability, rng), labels);
    out.regularizer = zero_term(net);
    return out;
  }
  if (const auto* a = std::get_if<reg::Adversarial>(&reg)) {
    const Tensor r = adv_perturbation(net, x, labels, a->epsilon, a->norm);
    if (a->mode == AdvMode::replace) {
      out.likelihood = adv_loss_term(net, x, labels, r);
      out.regularizer = zero_term(net);
    } else {
      out.likelihood = likelihood_term(net, x, labels);
      out.regularizer = scaled(adv_loss_term(net, x, labels, r), a->lambda);
    }
    return out;
  }
  out.likelihood = likelihood_term(net, x, labels);
  if (const auto* l2 = std::get_if<reg::L2Decay>(&reg)) {
    out.regularizer = l2_penalty(net, l2->lambda);
  } else {
    out.regularizer = label_free_term(net, x, reg, rng);
  }
  return out;
}

StepGradients semisup_gradients(const MlpNetwork& net, const Tensor& x_labeled,
                                std::span<const int> labels, const Tensor& x_reg,
                                const RegularizerKind& reg, Rng& rng) {
  validate_regularizer(reg);
  if (!regularizer_is_label_free(reg)) {
    throw ConfigError("semi-supervised training needs a label-free regularizer, got '" +
                      regularizer_name(reg) + "'");
  }
  StepGradients out;
  out.likelihood = likelihood_term(net, x_labeled, labels);
  out.regularizer = label_free_term(net, x_reg, reg, rng);
  return out;
}

StepLoss supervised_step(MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                         const RegularizerKind& reg, Optimizer& opt, Rng& rng) {
  return apply_step(net, supervised_gradients(net, x, labels, reg, rng), opt);
}

StepLoss semisup_step(MlpNetwork& net, const Tensor& x_labeled, std::span<const int> labels,
                      const Tensor& x_reg, const RegularizerKind& reg, Optimizer& opt, Rng& rng) {
  return apply_step(net, semisup_gradients(net, x_labeled, labels, x_reg, reg, rng), opt);
}

double error_rate(const Tensor& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw DimensionError("error_rate: label count differs from rows");
  std::size_t wrong = 0, counted = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (labels[r] < 0) continue;
    auto row = logits.row(r);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    wrong += best != labels[r];
    ++counted;
  }
  return counted == 0 ? std::nan("") : static_cast<double>(wrong) / static_cast<double>(counted);
}

double error_rate(const MlpNetwork& net, const Tensor& x, std::span<const int> labels) {
  Rng unused(0);
  return evaluate(net, x, labels, VatConfig{}, unused, false).error;
}

Evaluation evaluate(const MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                    const VatConfig& cfg, Rng& rng, bool with_lds) {
  if (x.rows() != labels.size()) throw DimensionError("evaluate: label count differs from rows");
  std::size_t wrong = 0, counted = 0;
  double lds_sum = 0.0;
  for (std::size_t start = 0; start < x.rows(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, x.rows() - start);
    const auto first = x.data().begin() + static_cast<std::ptrdiff_t>(start * x.cols());
    const Tensor chunk({n, x.cols()}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n * x.cols())));
    const std::span<const int> y = labels.subspan(start, n);
    const Tensor logits = predict_logits(net, chunk);
    for (std::size_t r = 0; r < n; ++r) {
      if (y[r] < 0) continue;
      auto row = logits.row(r);
      wrong += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) != y[r];
      ++counted;
    }
    if (with_lds) {
      const VapResult v = virtual_adversarial(net, chunk, cfg, rng);
      for (double l : v.lds_estimate.values()) lds_sum += l;
    }
  }
  Evaluation e;
  e.error = counted == 0 ? std::nan("") : static_cast<double>(wrong) / static_cast<double>(counted);
  e.mean_lds = with_lds && x.rows() > 0 ? lds_sum / static_cast<double>(x.rows()) : 0.0;
  return e;
}

TrainResult train_model(const Dataset& train, const Dataset& test, const TrainConfig& cfg) {
  cfg.validate();
  train.validate();
  const std::vector<std::size_t> labeled = train.indices(Split::labeled);
  if (labeled.empty()) throw DataError("train: no labeled rows");
  if (test.size() > 0 && test.input_dim() != train.input_dim()) {
    throw DimensionError("train: test inputs have a different dimension");
  }
  const std::size_t classes = std::max<std::size_t>({2, train.num_classes(), test.num_classes()});

  const Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  Rng step_rng = root.fork(2);
  Rng eval_rng = root.fork(4);
  TrainResult result{MlpNetwork::he_initialized(train.input_dim(), cfg.hidden, classes, init_rng), {}};
  MlpNetwork& net = result.network;
  auto opt = make_optimizer(cfg);

  BatchSampler labeled_sampler(labeled, root.fork(3));
  BatchSampler reg_sampler(rows_with_tag(train, {Split::labeled, Split::unlabeled}), root.fork(5));

  const Tensor x_train = train.gather_inputs(labeled);
  const std::vector<int> y_train = train.gather_labels(labeled);
  const std::vector<int> y_test = labels_of(test);

  auto record = [&](std::size_t update, const StepLoss& loss) {
    TrainRecord rec;
    rec.update = update;
    const Evaluation tr = evaluate(net, x_train, y_train, cfg.eval_vat, eval_rng, cfg.record_lds);
    rec.train_err = tr.error;
    rec.train_lds = tr.mean_lds;
    if (test.size() > 0) {
      const Evaluation te = evaluate(net, test.inputs, y_test, cfg.eval_vat, eval_rng, cfg.record_lds);
      rec.test_err = te.error;
      rec.test_lds = te.mean_lds;
    } else {
      rec.test_err = std::nan("");
      rec.test_lds = std::nan("");
    }
    rec.nll = loss.nll;
    rec.reg = loss.reg;
    result.records.push_back(rec);
  };

  const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= labeled.size();
  StepLoss loss;
  if (cfg.eval_every > 0) record(0, StepLoss{std::nan(""), std::nan("")});
  for (std::size_t u = 1; u <= cfg.updates; ++u) {
    const std::vector<std::size_t> rows = labeled_sampler.next(cfg.batch_size);
    const Tensor xb = full_batch ? x_train : train.gather_inputs(rows);
    const std::vector<int> yb = full_batch ? y_train : train.gather_labels(rows);
    if (cfg.semi_supervised) {
      const Tensor xr = train.gather_inputs(reg_sampler.next(cfg.reg_batch_size));
      loss = semisup_step(net, xb, yb, xr, cfg.regularizer, *opt, step_rng);
    } else {
      loss = supervised_step(net, xb, yb, cfg.regularizer, *opt, step_rng);
    }
    if ((cfg.eval_every > 0 && u % cfg.eval_every == 0) || u == cfg.updates) record(u, loss);
  }
  return result;
}

std::string records_to_csv(const std::vector<TrainRecord>& records) {
  std::ostringstream os;
  os.precision(10);
  os << "update,train_err,test_err,train_lds,test_lds,nll,reg\n";
  for (const auto& r : records) {
    os << r.update << ',' << r.train_err << ',' << r.test_err << ',' << r.train_lds << ','
       << r.test_lds << ',' << r.nll << ',' << r.reg << '\n';
  }
  return os.str();
}

std::vector<MethodGrid> synthetic_method_grids() {
  std::vector<MethodGrid> g;
  g.push_back({"mle", {reg::None{}}});
  MethodGrid l2{"l2", {}};
  for (double l : {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 200.0}) l2.candidates.push_back(reg::L2Decay{l});
  g.push_back(l2);
  MethodGrid dropout{"dropout", {}};
  for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) dropout.candidates.push_back(reg::Dropout{p});
  g.push_back(dropout);
  MethodGrid random{"random", {}};
  for (double e : {0.2, 0.5, 1.0, 2.0, 4.0}) random.candidates.push_back(reg::RandomPerturbation{e, 1.0});
  g.push_back(random);
  MethodGrid linf{"adv-linf", {}};
  for (double e : {0.01, 0.02, 0.05, 0.1, 0.2})
    linf.candidates.push_back(reg::Adversarial{e, AdvNorm::linf, AdvMode::augment, 1.0});
  g.push_back(linf);
  MethodGrid l2adv{"adv-l2", {}};
  for (double e : {0.1, 0.2, 0.5, 1.0, 2.0})
    l2adv.candidates.push_back(reg::Adversarial{e, AdvNorm::l2, AdvMode::augment, 1.0});
  g.push_back(l2adv);
  MethodGrid vat{"vat", {}};
  for (double e : {0.1, 0.2, 0.5, 1.0, 2.0}) vat.candidates.push_back(reg::Vat{VatConfig{e, 1e-6, 1, 1.0}});
  g.push_back(vat);
  return g;
}

std::size_t select_best(const std::vector<CandidateScore>& scores) {
  if (scores.empty()) throw ConfigError("grid search: empty grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i].mean_validation < scores[best].mean_validation) best = i;
  return best;
}

GridReport synthetic_grid_search(SyntheticTask task, const std::vector<MethodGrid>& grids,
                                 const TrainConfig& base, std::size_t repetitions,
                                 std::uint64_t seed, const SyntheticSizes& sizes) {
  if (grids.empty() || repetitions == 0) throw ConfigError("grid search: empty grid");
  for (const auto& g : grids)
    if (g.candidates.empty()) throw ConfigError("grid search: method '" + g.method + "' has no candidates");

  std::vector<SyntheticExperiment> data;
  data.reserve(repetitions);
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    data.push_back(make_synthetic_experiment(task, mix_seed(seed, 2 * rep), sizes));
  }

  struct Cell {
    std::size_t method, candidate, rep;
  };
  std::vector<Cell> cells;
  GridReport report{task_name(task), repetitions, {}};
  for (std::size_t m = 0; m < grids.size(); ++m) {
    MethodReport mr{grids[m].method, {}, 0, 0.0, 0.0};
    for (std::size_t c = 0; c < grids[m].candidates.size(); ++c) {
      mr.candidates.push_back(CandidateScore{grids[m].candidates[c], std::vector<double>(repetitions),
                                             std::vector<double>(repetitions), 0.0});
      for (std::size_t rep = 0; rep < repetitions; ++rep) cells.push_back({m, c, rep});
    }
    report.methods.push_back(std::move(mr));
  }

  run_parallel(cells.size(), [&](std::size_t i) {
    const Cell& cell = cells[i];
    TrainConfig cfg = base;
    cfg.regularizer = grids[cell.method].candidates[cell.candidate];
    cfg.seed = mix_seed(seed, 2 * cell.rep + 1);
    cfg.eval_every = 0;
    cfg.record_lds = false;
    const SyntheticExperiment& ex = data[cell.rep];
    CandidateScore& score = report.methods[cell.method].candidates[cell.candidate];
    try {
      const TrainResult tr = train_model(ex.train, Dataset{}, cfg);
      score.validation_errors[cell.rep] = error_rate(tr.network, ex.validation.inputs, ex.validation.labels);
      score.test_errors[cell.rep] = error_rate(tr.network, ex.test.inputs, ex.test.labels);
    } catch (const NumericError&) {
      score.validation_errors[cell.rep] = std::numeric_limits<double>::infinity();
      score.test_errors[cell.rep] = std::nan("");
    }
  });

  for (auto& mr : report.methods) {
    for (auto& c : mr.candidates) {
      c.mean_validation = mean(c.validation_errors);
      c.diverged = static_cast<std::size_t>(
          std::count_if(c.test_errors.begin(), c.test_errors.end(), [](double e) { return std::isnan(e); }));
    }
    mr.best = select_best(mr.candidates);
    mr.test_mean = mean(mr.candidates[mr.best].test_errors);
    mr.test_sd = sample_sd(mr.candidates[mr.best].test_errors);
  }
  return report;
}

HoldoutReport holdout_grid_search(const Dataset& data, const Dataset& test,
                                  const std::vector<RegularizerKind>& candidates,
                                  const TrainConfig& search_cfg, const TrainConfig& final_cfg,
                                  std::size_t final_seeds) {
  if (candidates.empty()) throw ConfigError("grid search: empty grid");
  if (final_seeds == 0) throw ConfigError("grid search: need at least one final seed");
  const std::vector<std::size_t> val_rows = data.indices(Split::validation);
  if (val_rows.empty()) throw DataError("grid search: no validation rows");
  const Tensor x_val = data.gather_inputs(val_rows);
  const std::vector<int> y_val = data.gather_labels(val_rows);
  // Validation rows are kept out of training during the search.
  const Dataset search_data = data.subset(rows_with_tag(data, {Split::labeled, Split::unlabeled}));

  HoldoutReport report;
  for (const auto& c : candidates) report.candidates.push_back(CandidateScore{c, {0.0}, {0.0}, 0.0});
  run_parallel(candidates.size(), [&](std::size_t i) {
    TrainConfig cfg = search_cfg;
    cfg.regularizer = candidates[i];
    cfg.eval_every = 0;
    cfg.record_lds = false;
    CandidateScore& s = report.candidates[i];
    try {
      const TrainResult tr = train_model(search_data, Dataset{}, cfg);
      s.validation_errors[0] = error_rate(tr.network, x_val, y_val);
      s.test_errors[0] = test.size() > 0 ? error_rate(tr.network, test.inputs, test.labels) : std::nan("");
    } catch (const NumericError&) {
      s.validation_errors[0] = std::numeric_limits<double>::infinity();
      s.test_errors[0] = std::nan("");
      s.diverged = 1;
    }
    s.mean_validation = s.validation_errors[0];
  });
  report.best = select_best(report.candidates);

  Dataset merged = data;
  for (std::size_t i : val_rows) merged.splits[i] = Split::labeled;
  report.final_test_errors.resize(final_seeds);
  run_parallel(final_seeds, [&](std::size_t s) {
    TrainConfig cfg = final_cfg;
    cfg.regularizer = candidates[report.best];
    cfg.seed = mix_seed(final_cfg.seed, s);
    cfg.eval_every = 0;
    cfg.record_lds = false;
    const TrainResult tr = train_model(merged, Dataset{}, cfg);
    report.final_test_errors[s] = error_rate(tr.network, test.inputs, test.labels);
  });
  report.test_mean = mean(report.final_test_errors);
  report.test_sd = sample_sd(report.final_test_errors);
  return report;
}

std::string grid_report_json(const GridReport& report) {
  nlohmann::json j;
  j["task"] = report.task;
  j["repetitions"] = report.repetitions;
  j["methods"] = nlohmann::json::array();
  for (const auto& m : report.methods) {
    nlohmann::json mj;
    mj["method"] = m.method;
    mj["best"] = regularizer_json(m.candidates[m.best].regularizer);
    mj["test_mean"] = m.test_mean;
    mj["test_sd"] = m.test_sd;
    mj["candidates"] = nlohmann::json::array();
    for (const auto& c : m.candidates) {
      nlohmann::json cj = regularizer_json(c.regularizer);
      cj["validation_mean"] = c.mean_validation;
      cj["test_mean"] = mean(c.test_errors);
      cj["test_sd"] = sample_sd(c.test_errors);
      cj["diverged"] = c.diverged;
      mj["candidates"].push_back(cj);
    }
    j["methods"].push_back(mj);
  }
  return j.dump(2) + "\n";
}

std::string grid_report_csv(const GridReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << "method,best_param,test_mean,test_sd,repetitions\n";
  for (const auto& m : report.methods) {
    os << m.method << ',' << regularizer_parameter(m.candidates[m.best].regularizer) << ','
       << m.test_mean << ',' << m.test_sd << ',' << report.repetitions << '\n';
  }
  return os.str();
}

int worker_threads() {
  if (const char* env = std::getenv("VATLAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1, omp_get_max_threads());
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace vatlab
