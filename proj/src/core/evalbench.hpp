#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chaos.hpp"
#include "ndr_filter.hpp"
#include "trainer.hpp"
#include "uav.hpp"

namespace ndr {

// ---- Records and metrics ------------------------------------------------------

enum class DivergenceCause { None, Threshold, NonFinite, GroundTruth };

struct RunRecord {
  std::vector<double> rmse;  // per-step spatial RMSE until stop
  bool diverged = false;
  DivergenceCause cause = DivergenceCause::None;
  int diverged_at = -1;  // 1-based step
};

constexpr double kDivergenceThreshold = 100.0;

double rmse_step(std::span<const double> error);

struct ArmseStat {
  double mean = 0.0;
  double std_dev = 0.0;  // population
  double median = 0.0;
  int n_used = 0;
};

// Time-mean RMSE per run, averaged over non-diverged runs.
ArmseStat armse(const std::vector<RunRecord>& records);

// sqrt( (1/(N t)) sum_j sum_{k<=t} RMSE_k^2 ) over non-diverged runs.
double crmse(const std::vector<RunRecord>& records, int t);

struct DivergenceFlag {
  bool diverged = false;
  DivergenceCause cause = DivergenceCause::None;
};
DivergenceFlag detect_divergence(double step_rmse, std::span<const double> x_hat,
                                 std::span<const double> p_diag);

// ---- Filter specs ----------------------------------------------------------------

struct FilterSpec {
  enum class Kind { Ekf, Shkf, Ndr };
  Kind kind = Kind::Ekf;
  double b = 0.99;  // shkf forgetting factor
  const PolicyWeights* weights = nullptr;
  const PolicyArch* arch = nullptr;
  std::optional<TransferMap> transfer;
  std::string label;
};

// ---- Chaos Monte-Carlo benchmark ---------------------------------------------------

struct McConfig {
  int n_runs = 200;
  int t_steps = 600;
  std::uint64_t seed = 7;
  int threads = 1;
  double p0 = 0.1;           // initial covariance scale
  double init_sigma = 10.0;  // std of the initial estimate error
};

struct McRow {
  std::string label;
  ArmseStat armse;
  double divergence_pct = 0.0;
  int n_diverged = 0;
  int n_runs = 0;
};

struct McResult {
  std::vector<McRow> rows;
  std::vector<std::vector<RunRecord>> records;  // [filter][run]
  int t_steps = 0;
};

// Runs every filter on bit-identical trajectories (common random numbers).
McResult run_monte_carlo(const ChaosParams& sys, const ChaosRandomization& noise,
                         const std::vector<FilterSpec>& filters, const McConfig& cfg);

std::string mc_table_csv(const McResult& res, const std::string& system_name);
std::string mc_table_text(const McResult& res, const std::string& system_name);
std::string crmse_csv(const McResult& res);
std::string records_jsonl(const McResult& res);

// ---- UAV scenarios -----------------------------------------------------------------

enum class ScenarioKind { Baseline, TransientDisturbance, SensorDenied };

const char* scenario_name(ScenarioKind k);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Baseline;
  double window_start = 4.0;  // seconds
  double window_end = 6.0;
  double factor = 2.0;       // transient variance factor
  bool switch_model = true;  // sensor-denied switches to the dynamic model
};

struct ScenarioRow {
  std::string label;
  double pos_rmse_mean = 0.0, pos_rmse_std = 0.0, pos_rmse_median = 0.0;
  double att_rmse_mean = 0.0, att_rmse_std = 0.0, att_rmse_median = 0.0;
  int n_diverged = 0;
  int switched_steps = 0;  // dynamic-model steps consumed (sensor-denied)
};

struct ScenarioResult {
  ScenarioKind kind;
  std::vector<ScenarioRow> rows;
};

ScenarioResult run_scenario(const ScenarioSpec& spec, const std::vector<FilterSpec>& filters,
                            const std::vector<FlightLog>& logs, const QdroneParams& params,
                            const DomainRandomization& dr, std::uint64_t seed);

std::string scenario_table_csv(const std::vector<ScenarioResult>& results);
std::string scenario_table_text(const std::vector<ScenarioResult>& results);

// ---- Latency profile ----------------------------------------------------------------

struct LatencyReport {
  double ekf_us = 0.0;
  double ndr_us = 0.0;
  double ratio = 0.0;
  int n_steps = 0;
};

// Median per-step wall time of the plain EKF and the NDR filter at the UAV
// operating point, measured on the same synthetic stream after warmup.
LatencyReport profile_latency(const PolicyArch& arch, const PolicyWeights& weights, int n_steps,
                              const QdroneParams& params);

// ---- Ablations ----------------------------------------------------------------------

struct AblationVariantResult {
  std::string label;
  ArmseStat lorenz;
  ArmseStat rossler;
  double lorenz_div_pct = 0.0;
  double rossler_div_pct = 0.0;
  int seeds = 0;
};

enum class AblationAxis { Depth, LambdaAux, InputVariant };

struct AblationConfig {
  AblationAxis axis = AblationAxis::Depth;
  int n_seeds = 2;
  int n_runs = 50;
  int t_steps = 600;
  int epochs = 60;
  int batch_size = 32;
  std::uint64_t seed = 1;
  int threads = 1;
};

std::vector<AblationVariantResult> run_ablation(const AblationConfig& cfg);
std::string ablation_csv(const std::vector<AblationVariantResult>& rows, AblationAxis axis);

// Finite-difference sensitivity of the adaptation vector to each input
// feature channel; diagnostic only.
std::vector<double> policy_sensitivity(const PolicyWeights& w, const PolicyArch& arch,
                                       const Tensor& y, const PolicyState& state, double step);

}  // namespace ndr
