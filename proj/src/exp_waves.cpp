#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "kanlab/errors.hpp"
#include "kanlab/experiments.hpp"
#include "kanlab/optim.hpp"

namespace kanlab::experiments {

WaveSpec make_wave_spec(std::vector<double> freqs, Amplitudes amps, std::uint64_t phase_seed) {
  WaveSpec s;
  s.freqs = std::move(freqs);
  std::mt19937_64 rng(phase_seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < s.freqs.size(); ++i) {
    s.amps.push_back(amps == Amplitudes::Equal ? 1.0 : 0.1 * static_cast<double>(i + 1));
    s.phases.push_back(phase(rng));
  }
  return s;
}

double wave_target(const WaveSpec& spec, double x) {
  double f = 0.0;
  for (std::size_t i = 0; i < spec.freqs.size(); ++i)
    f += spec.amps[i] * std::sin(2.0 * std::numbers::pi * spec.freqs[i] * x + spec.phases[i]);
  return f;
}

std::vector<double> wave_grid(int count) {
  if (count < 1) throw std::invalid_argument("wave_grid: count must be positive");
  std::vector<double> x(count);
  for (int n = 0; n < count; ++n) x[n] = static_cast<double>(n) / count;
  return x;
}

std::vector<double> dft_magnitudes(std::span<const double> values, std::span<const double> freqs,
                                   std::span<const double> amps) {
  if (freqs.size() != amps.size()) throw std::invalid_argument("dft_magnitudes: freqs/amps size mismatch");
  const double N = static_cast<double>(values.size());
  std::vector<double> out;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (!(freqs[i] >= 0.0 && freqs[i] < N / 2.0))
      throw std::invalid_argument("dft_magnitudes: frequency at or above Nyquist");
    if (amps[i] == 0.0) throw std::invalid_argument("dft_magnitudes: zero amplitude");
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < values.size(); ++n) {
      const double t = 2.0 * std::numbers::pi * freqs[i] * static_cast<double>(n) / N;
      re += values[n] * std::cos(t);
      im -= values[n] * std::sin(t);
    }
    out.push_back(2.0 / N * std::hypot(re, im) / std::abs(amps[i]));
  }
  return out;
}

WaveConfig wave_preset(const std::string& net, bool full) {
  WaveConfig c;
  c.net = net;
  if (net == "kan") {
    c.shape = {1, 10, 1};
    c.steps = full ? 8000 : 2000;
    c.record_every = 10;
  } else if (net == "mlp") {
    c.shape = {1, 256, 256, 256, 1};
    c.power = 1;
    c.steps = full ? 80000 : 20000;
    c.record_every = 100;
  } else {
    throw std::invalid_argument("wave_preset: net must be kan or mlp");
  }
  if (full) c.freqs = {5, 10, 15, 20, 25, 30, 35, 40, 45, 50};
  return c;
}

namespace {

struct RunOutput {
  std::vector<int> steps;
  std::vector<std::vector<double>> mags;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool flagged = false;
};

template <class Net>
RunOutput train_wave(Net net, const WaveConfig& cfg, const WaveSpec& spec, int run, const Progress& progress) {
  const auto xs = wave_grid(cfg.samples);
  models::FieldLossData data;
  data.dim = 1;
  data.points = xs;
  for (double x : xs) data.target.push_back(wave_target(spec, x));
  data.alpha.assign(xs.size(), 1.0 / static_cast<double>(xs.size()));

  auto p = models::get_parameters(net);
  std::vector<double> g(p.size());
  auto adam = optim::make_adam(p.size(), cfg.lr);
  RunOutput out;

  auto record = [&](int step) {
    models::set_parameters(net, p);
    std::vector<double> v(xs.size());
    if constexpr (std::is_same_v<Net, models::MlpNetwork>) {
      v = models::mlp_batch_values(net, xs);
    } else {
      for (std::size_t n = 0; n < xs.size(); ++n) v[n] = models::kan_forward(net, std::span(&xs[n], 1))[0];
    }
    out.steps.push_back(step);
    out.mags.push_back(dft_magnitudes(v, spec.freqs, spec.amps));
  };

  out.initial_loss = models::field_loss(net, p, data, {});
  record(0);
  for (int step = 1; step <= cfg.steps; ++step) {
    const double loss = models::field_loss(net, p, data, g);
    if (!std::isfinite(loss) || loss > 1e6) {
      out.flagged = true;
      if (progress) progress("experiment=waves run=" + std::to_string(run) + " event=diverged step=" + std::to_string(step));
      break;
    }
    try {
      optim::adam_step(adam, p, g);
    } catch (const NonFiniteGradientError& e) {
      out.flagged = true;
      if (progress) progress("experiment=waves run=" + std::to_string(run) + " event=nonfinite_gradient step=" +
                             std::to_string(e.step()) + " index=" + std::to_string(e.index()));
      break;
    }
    if (step % cfg.record_every == 0 || step == cfg.steps) {
      record(step);
      if (progress)
        progress("experiment=waves run=" + std::to_string(run) + " step=" + std::to_string(step) +
                 " loss=" + format_double(loss));
    }
  }
  out.final_loss = models::field_loss(net, p, data, {});
  return out;
}

int first_crossing(const std::vector<int>& steps, const std::vector<std::vector<double>>& mags, std::size_t i,
                   double threshold) {
  for (std::size_t t = 0; t < steps.size(); ++t)
    if (mags[t][i] >= threshold) return steps[t];
  return -1;
}

}  // namespace

WaveResult run_wave_experiment(const WaveConfig& cfg, int jobs, const Progress& progress) {
  if (cfg.runs < 1 || cfg.steps < 0 || cfg.record_every < 1 || cfg.samples < 2)
    throw std::invalid_argument("run_wave_experiment: invalid run/step/sample counts");
  if (cfg.shape.size() < 2 || cfg.shape.front() != 1 || cfg.shape.back() != 1)
    throw std::invalid_argument("run_wave_experiment: shape must map 1 -> 1");
  for (double f : cfg.freqs)
    if (!(f >= 0 && f < cfg.samples / 2.0)) throw std::invalid_argument("run_wave_experiment: frequency above Nyquist");

  std::vector<RunOutput> runs(cfg.runs);
  parallel_for(cfg.runs, jobs, [&](int r) {
    const auto spec = make_wave_spec(cfg.freqs, cfg.amplitudes, derive_seed(cfg.seed, 2 * r));
    const auto init_seed = derive_seed(cfg.seed, 2 * r + 1);
    if (cfg.net == "kan") {
      std::vector<std::vector<double>> rows;
      for (double x : wave_grid(cfg.samples)) rows.push_back({x});
      auto net = models::init_kan_on_batch(cfg.shape, cfg.grid, cfg.degree, init_seed, rows);
      runs[r] = train_wave(std::move(net), cfg, spec, r, progress);
    } else if (cfg.net == "mlp") {
      runs[r] = train_wave(models::init_mlp(cfg.shape, cfg.power, init_seed), cfg, spec, r, progress);
    } else {
      throw std::invalid_argument("run_wave_experiment: net must be kan or mlp");
    }
  });

  WaveResult res;
  const std::size_t nf = cfg.freqs.size();
  for (int r = 0; r < cfg.runs; ++r) {
    const auto& o = runs[r];
    for (std::size_t t = 0; t < o.steps.size(); ++t)
      for (std::size_t i = 0; i < nf; ++i) res.records.push_back({r, o.steps[t], cfg.freqs[i], o.mags[t][i]});
    std::vector<int> fs;
    for (std::size_t i = 0; i < nf; ++i) fs.push_back(first_crossing(o.steps, o.mags, i, cfg.threshold));
    res.fit_step.push_back(std::move(fs));
    res.initial_loss.push_back(o.initial_loss);
    res.final_loss.push_back(o.final_loss);
    res.flagged.push_back(o.flagged);
  }

  // Average over the runs that reached each recorded step.
  const auto& longest = *std::max_element(runs.begin(), runs.end(), [](const RunOutput& a, const RunOutput& b) {
    return a.steps.size() < b.steps.size();
  });
  res.recorded_steps = longest.steps;
  for (std::size_t t = 0; t < res.recorded_steps.size(); ++t) {
    std::vector<double> mean(nf, 0.0);
    int count = 0;
    for (const auto& o : runs)
      if (t < o.steps.size()) {
        ++count;
        for (std::size_t i = 0; i < nf; ++i) mean[i] += o.mags[t][i];
      }
    for (double& m : mean) m /= count;
    res.mean_magnitude.push_back(std::move(mean));
  }
  for (std::size_t i = 0; i < nf; ++i)
    res.mean_fit_step.push_back(first_crossing(res.recorded_steps, res.mean_magnitude, i, cfg.threshold));
  return res;
}

std::string wave_csv(const WaveResult& r) {
  Csv csv({"run", "step", "freq", "magnitude"});
  for (const auto& rec : r.records)
    csv.row({std::to_string(rec.run), std::to_string(rec.step), format_double(rec.freq), format_double(rec.magnitude)});
  return csv.str();
}

}  // namespace kanlab::experiments
