#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kanlab/models.hpp"

namespace kanlab::experiments {

// ---------------------------------------------------------------- io

/// Shortest round-trip text for a double ("%.17g").
std::string format_double(double x);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t h);
/// Seed for stream `stream` derived from `master` (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Write to a sibling temp file, then rename over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

class Csv {
 public:
  explicit Csv(std::vector<std::string> header);
  Csv& row(std::initializer_list<std::string> cells);
  const std::string& str() const { return text_; }
  std::size_t rows() const { return rows_; }

 private:
  std::size_t cols_;
  std::size_t rows_ = 0;
  std::string text_;
};

inline constexpr const char* kArtifactVersion = "kanlab-0.1.0";

/// {"experiment", "seed", "config_hash", "version", "config", "outputs"};
/// config_json must be a JSON object in canonical (sorted, compact) form.
std::string manifest_json(std::string_view experiment, std::uint64_t seed, std::string_view config_json,
                          const std::vector<std::string>& outputs);

/// key=value progress lines.
using Progress = std::function<void(const std::string&)>;

/// Runs f(0..n-1) on up to `jobs` threads; results land by index.
void parallel_for(int n, int jobs, const std::function<void(int)>& f);

// ---------------------------------------------------------------- waves

enum class Amplitudes { Equal, Increasing };

struct WaveSpec {
  std::vector<double> freqs;
  std::vector<double> amps;
  std::vector<double> phases;
};

/// A_i = 1 or 0.1 i (1-based); phases ~ U[0, 2 pi) from `phase_seed`.
WaveSpec make_wave_spec(std::vector<double> freqs, Amplitudes amps, std::uint64_t phase_seed);
double wave_target(const WaveSpec& spec, double x);
/// x_n = n / count
std::vector<double> wave_grid(int count = 200);
/// (2/N) |sum_n v_n exp(-2 pi i k x_n)| / A for x_n = n/N.
std::vector<double> dft_magnitudes(std::span<const double> values, std::span<const double> freqs,
                                   std::span<const double> amps);

struct WaveConfig {
  std::string net = "kan";  // "kan" | "mlp"
  std::vector<int> shape{1, 10, 1};
  int grid = 100;           // KAN intervals
  int degree = 3;           // KAN spline degree
  int power = 1;            // MLP activation power
  int steps = 2000;
  int record_every = 10;
  double lr = 3e-4;
  int runs = 10;
  int samples = 200;
  std::vector<double> freqs{5, 15, 25};
  Amplitudes amplitudes = Amplitudes::Equal;
  double threshold = 0.4;
  std::uint64_t seed = 0;
};

WaveConfig wave_preset(const std::string& net, bool full);

struct WaveRecord {
  int run;
  int step;
  double freq;
  double magnitude;
};

struct WaveResult {
  std::vector<WaveRecord> records;
  /// fit_step[run][i]: first recorded step with magnitude >= threshold, -1 if never.
  std::vector<std::vector<int>> fit_step;
  /// Same on the run-averaged magnitudes.
  std::vector<int> mean_fit_step;
  std::vector<int> recorded_steps;
  /// mean_magnitude[t][i] over runs at recorded_steps[t].
  std::vector<std::vector<double>> mean_magnitude;
  std::vector<double> initial_loss;
  std::vector<double> final_loss;
  std::vector<bool> flagged;  // diverged or non-finite
};

WaveResult run_wave_experiment(const WaveConfig& cfg, int jobs = 1, const Progress& progress = {});
/// header run,step,freq,magnitude
std::string wave_csv(const WaveResult& r);

// ---------------------------------------------------------------- Gaussian random field

struct GrfSpec {
  int dim = 2;
  double sigma = 1.0;
  int points = 512;
  double train_fraction = 0.8;
  double cutoff = 0.1;
  std::uint64_t seed = 0;
};

struct GrfData {
  int dim = 0;
  std::vector<double> points;  // row-major, N x dim, uniform on [-1, 1]^dim
  std::vector<double> values;
  std::vector<double> eigenvalues;  // descending
  int modes = 0;                    // truncation index m
  std::vector<double> xi;
  std::vector<int> train;
  std::vector<int> test;
};

/// Smallest m with lambda_{m+1} < cutoff lambda_1 <= lambda_m (descending order).
int truncation_index(std::span<const double> descending, double cutoff);

/// f = sum_{i<=m} lambda_i xi_i phi_i over unit eigenvectors of the empirical
/// covariance. `xi_override` replaces the Gaussian draws when non-empty.
GrfData sample_grf(const GrfSpec& spec, std::span<const double> xi_override = {});

/// Eigen-structure of one GRF sample, reusable for repeated draws.
struct GrfBasis {
  std::vector<double> points;
  std::vector<double> eigenvalues;  // descending
  std::vector<std::vector<double>> modes;  // phi_i for i < m
  int m = 0;
};
GrfBasis grf_basis(const GrfSpec& spec);
std::vector<double> grf_draw(const GrfBasis& basis, std::span<const double> xi);

struct GrfConfig {
  GrfSpec spec;
  std::string net = "kan";
  std::vector<int> shape{2, 10, 1};
  int degree = 3;
  std::vector<int> grids{10, 20, 30, 40, 50};
  int iterations = 100;  // per KAN phase; total for MLP
  int power = 1;
  double margin = 0.1;  // range padding, as a fraction of the observed span
  /// KAN ranges are regrown from the training inputs every `update_every`
  /// iterations while fewer than `update_until` have run in the phase.
  int update_every = 10;
  int update_until = 50;
  std::uint64_t seed = 0;
};

GrfConfig grf_preset(const std::string& net, bool full);

struct GrfRow {
  int phase_grid;  // 0 for MLPs
  int iteration;
  double train_loss;
  double test_loss;
};

struct PhaseBoundary {
  int from_grid;
  int to_grid;
  double loss_before;
  double loss_after;
  /// New grid refines the old one, the ranges did not move and every training
  /// input of every activation lies inside its range.
  bool nested;
};

struct GrfResult {
  GrfData data;
  std::vector<GrfRow> rows;
  std::vector<PhaseBoundary> boundaries;
  double final_train = 0.0;
  double final_test = 0.0;
};

GrfResult run_grf_experiment(const GrfConfig& cfg, const Progress& progress = {});
/// header phase_grid,iteration,train_loss,test_loss
std::string grf_csv(const GrfResult& r);

// ---------------------------------------------------------------- Poisson / deep Ritz

struct Poisson1d {
  double k;
  double f(double x) const;
  double u(double x) const;
  double ux(double x) const;
};
Poisson1d poisson_problem_1d(double k);

struct Poisson2d {
  double k;
  double f(double x, double y) const;
  double u(double x, double y) const;
  /// (u_x, u_y)
  std::pair<double, double> grad(double x, double y) const;
};
Poisson2d poisson_problem_2d(double k);

inline constexpr double kRitzLambda = 0.01;

/// Quadrature grid with trapezoid weights; boundary flags mark Dirichlet points.
struct RitzGrid {
  int dim = 1;
  std::vector<double> points;
  std::vector<double> weights;
  std::vector<bool> boundary;
  std::size_t count() const { return weights.size(); }
};
/// 1D: `n` uniform points on [-1, 1]; 2D: n x n on [0, 1]^2.
RitzGrid ritz_grid(int dim, int n);

/// Field-loss weights for the Ritz energy
///   lambda sum w (|grad u|^2 / 2 - f u) + boundary penalty
/// (1D: u(-1)^2 + u(1)^2; 2D: mean of u^2 over boundary points).
models::FieldLossData ritz_data(const RitzGrid& grid, const std::function<double(std::span<const double>)>& f,
                                double lambda = kRitzLambda);

/// The field loss formula from point values and gradients (row-major count x dim).
double field_loss_from_values(const models::FieldLossData& d, std::span<const double> u,
                              std::span<const double> grad_u);

/// Network values and input gradients on a point set (forward-mode duals for KANs).
void field_values(const models::KanNetwork& net, std::span<const double> points, int dim, std::vector<double>& u,
                  std::vector<double>& grad);
void field_values(const models::MlpNetwork& net, std::span<const double> points, int dim, std::vector<double>& u,
                  std::vector<double>& grad);

struct RelativeErrors {
  double l2;
  double h1;
};
RelativeErrors relative_errors(std::span<const double> u, std::span<const double> grad_u,
                               std::span<const double> u_true, std::span<const double> grad_true,
                               std::span<const double> weights, int dim);

struct PoissonConfig {
  int dim = 1;
  std::string net = "kan";
  std::vector<int> shape{1, 10, 1};
  int degree = 3;
  std::vector<int> grids{20, 40};
  int iterations = 100;  // per KAN phase; total for MLP
  int power = 1;
  std::vector<double> ks{2, 4, 8, 16};
  int points = 2000;     // 1D count, or per direction in 2D
  double lambda = kRitzLambda;
  std::uint64_t seed = 0;
};

PoissonConfig poisson_preset(int dim, const std::string& net, bool full);

struct PoissonRow {
  double k;
  int iteration;
  double loss;
  double rel_l2;
  double rel_h1;
};

struct PoissonResult {
  std::vector<PoissonRow> rows;
  /// final (rel L2, rel H1) per k, in cfg.ks order
  std::vector<RelativeErrors> final_errors;
};

PoissonResult run_poisson(const PoissonConfig& cfg, int jobs = 1, const Progress& progress = {});
/// header k,iteration,loss,rel_l2,rel_h1
std::string poisson_csv(const PoissonResult& r);

// ---------------------------------------------------------------- KAT rate

struct KatRateResult {
  int degree;
  std::vector<int> grids;
  std::vector<double> errors;  // sup norm on a dense grid of [0, 1]
  double slope;                // least-squares slope of log error vs log G
};

KatRateResult kat_rate_check(const std::function<double(double)>& target, int degree,
                             const std::vector<int>& grids = {5, 10, 20, 40, 80});

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace kanlab::experiments
