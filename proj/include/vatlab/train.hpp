#pragma once

#include <map>
#include <memory>
#include <string>

#include "vatlab/baseline.hpp"
#include "vatlab/data.hpp"
#include "vatlab/optim.hpp"

namespace vatlab {

enum class OptimizerKind { momentum, adam };

struct TrainConfig {
  std::vector<std::size_t> hidden{100};
  RegularizerKind regularizer = reg::None{};
  OptimizerKind optimizer = OptimizerKind::momentum;
  double momentum = 0.9;
  DecaySchedule schedule{1.0, 0.995, 1};
  std::size_t batch_size = 0;      // likelihood minibatch; 0 = all labeled rows
  std::size_t reg_batch_size = 0;  // regularizer minibatch in semi-supervised mode; 0 = all rows
  bool semi_supervised = false;
  std::size_t updates = 1000;
  std::uint64_t seed = 1;
  std::size_t eval_every = 50;  // 0 = only after the last update
  bool record_lds = true;
  VatConfig eval_vat{0.5, 1e-6, 5, 1.0};

  void validate() const;

  /// 100 hidden units, full batch, momentum SGD μ = 0.9, γ = 1.0 × 0.995 per update, 1000 updates.
  static TrainConfig synthetic();
  /// (1200, 600), ADAM 0.002 × 0.9 per 500, batch 100, 50000 updates.
  static TrainConfig mnist_supervised();
  /// (1200, 1200), ADAM as above, likelihood batch 100, regularizer batch 250.
  static TrainConfig mnist_semisup();
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg);

/// The two parts of one step's objective, computed independently.
struct StepGradients {
  ObjectiveTerm likelihood;
  ObjectiveTerm regularizer;

  GradientBundle total() const;
};

/// Likelihood on (x, labels) and the regularizer's term on the same batch.
/// Dropout perturbs the likelihood input; replace-mode adversarial training
/// swaps the clean likelihood for the perturbed one.
StepGradients supervised_gradients(const MlpNetwork& net, const Tensor& x,
                                   std::span<const int> labels, const RegularizerKind& reg,
                                   Rng& rng);

/// Likelihood on the labeled batch, regularizer on `x_reg`. Throws ConfigError
/// unless the regularizer is label-free.
StepGradients semisup_gradients(const MlpNetwork& net, const Tensor& x_labeled,
                                std::span<const int> labels, const Tensor& x_reg,
                                const RegularizerKind& reg, Rng& rng);

struct StepLoss {
  double nll = 0.0;
  double reg = 0.0;
};

StepLoss supervised_step(MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                         const RegularizerKind& reg, Optimizer& opt, Rng& rng);
StepLoss semisup_step(MlpNetwork& net, const Tensor& x_labeled, std::span<const int> labels,
                      const Tensor& x_reg, const RegularizerKind& reg, Optimizer& opt, Rng& rng);

/// Fraction of rows whose argmax differs from the label. Rows labeled
/// kNoLabel are skipped; NaN when no row is labeled.
double error_rate(const Tensor& logits, std::span<const int> labels);
double error_rate(const MlpNetwork& net, const Tensor& x, std::span<const int> labels);

struct Evaluation {
  double error = 0.0;
  double mean_lds = 0.0;
};

/// Error rate and mean LDS~ at the virtual adversarial perturbation of `cfg`.
Evaluation evaluate(const MlpNetwork& net, const Tensor& x, std::span<const int> labels,
                    const VatConfig& cfg, Rng& rng, bool with_lds = true);

struct TrainRecord {
  std::size_t update = 0;
  double train_err = 0.0;
  double test_err = 0.0;
  double train_lds = 0.0;
  double test_lds = 0.0;
  double nll = 0.0;
  double reg = 0.0;

  friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

struct TrainResult {
  MlpNetwork network;
  std::vector<TrainRecord> records;
};

/// Trains on the labeled rows of `train` (plus its unlabeled rows for the
/// regularizer when cfg.semi_supervised). `test` may be empty.
TrainResult train_model(const Dataset& train, const Dataset& test, const TrainConfig& cfg);

std::string records_to_csv(const std::vector<TrainRecord>& records);

/// One method's search space: candidates share the method name.
struct MethodGrid {
  std::string method;
  std::vector<RegularizerKind> candidates;
};

/// Search spaces for the synthetic tasks, λ = 1 throughout.
std::vector<MethodGrid> synthetic_method_grids();

struct CandidateScore {
  RegularizerKind regularizer;
  std::vector<double> validation_errors;  // one per repetition
  std::vector<double> test_errors;
  double mean_validation = 0.0;
  std::size_t diverged = 0;  // repetitions that hit a non-finite loss
};

struct MethodReport {
  std::string method;
  std::vector<CandidateScore> candidates;
  std::size_t best = 0;
  double test_mean = 0.0;
  double test_sd = 0.0;
};

struct GridReport {
  std::string task;
  std::size_t repetitions = 0;
  std::vector<MethodReport> methods;
};

/// Index of the lowest mean validation error (first on ties). Throws
/// ConfigError on an empty list.
std::size_t select_best(const std::vector<CandidateScore>& scores);

/// Every candidate trained on fresh data per repetition; the best candidate
/// per method is picked by mean validation error and reported with its test
/// error mean and sample standard deviation. A cell whose loss turns
/// non-finite scores validation error +inf and test error NaN. Cells run in
/// parallel, capped by VATLAB_THREADS.
GridReport synthetic_grid_search(SyntheticTask task, const std::vector<MethodGrid>& grids,
                                 const TrainConfig& base, std::size_t repetitions,
                                 std::uint64_t seed, const SyntheticSizes& sizes = {});

struct HoldoutReport {
  std::vector<CandidateScore> candidates;
  std::size_t best = 0;
  std::vector<double> final_test_errors;  // one per final seed
  double test_mean = 0.0;
  double test_sd = 0.0;
};

/// Selects on the validation rows of `data`, then retrains the winner with
/// `final_cfg` on labeled + validation rows (plus unlabeled rows when
/// semi-supervised) for each of `final_seeds` seeds.
HoldoutReport holdout_grid_search(const Dataset& data, const Dataset& test,
                                  const std::vector<RegularizerKind>& candidates,
                                  const TrainConfig& search_cfg, const TrainConfig& final_cfg,
                                  std::size_t final_seeds);

std::string grid_report_json(const GridReport& report);
/// method,best_param,test_mean,test_sd,repetitions
std::string grid_report_csv(const GridReport& report);

/// Worker count for parallel cells: VATLAB_THREADS if set, else the OpenMP default.
int worker_threads();

double mean(std::span<const double> v);
/// Sample standard deviation (n − 1); 0 for fewer than two values.
double sample_sd(std::span<const double> v);

}  // namespace vatlab
