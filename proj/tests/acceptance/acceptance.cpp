// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//   acceptance [--jobs N] [name ...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradcheck.hpp"
#include "kanlab/convert.hpp"
#include "kanlab/experiments.hpp"
#include "kanlab/numerics.hpp"
#include "kanlab/spectral.hpp"

using namespace kanlab;
using testsupport::Rng;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_jobs = 1;

std::string sci(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

convert::VectorFn as_fn(const models::MlpNetwork& m) {
  return [&m](std::span<const double> x) { return models::mlp_forward(m, x); };
}
convert::VectorFn as_fn(const models::KanNetwork& k) {
  return [&k](std::span<const double> x) { return models::kan_forward(k, x); };
}

// ---------------------------------------------------------------- conversion

Outcome mlp_to_kan_sweep() {
  Rng rng(101);
  double worst = 0.0;
  int size_violations = 0, nets = 0;
  for (int k = 1; k <= 3; ++k)
    for (int W : {2, 4, 8})
      for (int L = 1; L <= 3; ++L)
        for (int rep = 0; rep < 10; ++rep) {
          const int d = 1 + rep % 3;
          std::vector<int> shape{d};
          for (int l = 0; l < L; ++l) shape.push_back(W);
          shape.push_back(1);
          const auto mlp = models::init_mlp(shape, k, rng(), models::MlpInit::FanIn);
          const convert::Box box(d, {-1.0, 1.0});
          const auto kan = convert::mlp_to_kan(mlp, convert::propagate_bounds(mlp, box, rng(), 1000));
          if (kan.layers.size() > 2 * mlp.layers.size()) ++size_violations;
          for (std::size_t l = 0; l < kan.layers.size(); ++l)
            for (const auto& act : kan.layers[l].acts)
              if (act.grid.intervals() != (l % 2 == 0 ? 1 : 2)) ++size_violations;
          worst = std::max(worst, convert::verify_equivalence(as_fn(mlp), as_fn(kan), box, 1000, rng()).max_rel);
          ++nets;
        }
  return {worst <= 1e-8 && size_violations == 0,
          std::to_string(nets) + " nets, max_rel=" + sci(worst) + " size_violations=" + std::to_string(size_violations)};
}

Outcome kan_to_mlp_sweep() {
  Rng rng(102);
  double worst = 0.0;
  int width_violations = 0, nets = 0;
  for (int k = 1; k <= 3; ++k)
    for (int W : {2, 4, 8})
      for (int L = 1; L <= 3; ++L)
        for (int G : {3, 5, 8})
          for (int rep = 0; rep < 10; ++rep) {
            const int d = 1 + rep % 3;
            std::vector<int> shape{d};
            for (int l = 1; l < L; ++l) shape.push_back(W);
            shape.push_back(1);
            auto kan = models::init_kan(shape, G, k, rng());
            for (auto& layer : kan.layers)
              for (auto& act : layer.acts) {
                const double lo = testsupport::uniform(rng, -1.5, -0.5), hi = testsupport::uniform(rng, 0.5, 1.5);
                splines::Grid g(lo, hi, G, k);
                act = {g, testsupport::uniform_vec(rng, g.basis_count(), -1.0, 1.0), 0.0};
              }
            const auto blocks = convert::kan_to_mlp_blocks(kan);
            const int maxw = *std::max_element(shape.begin(), shape.end());
            for (const auto& b : blocks)
              if (b.shape[1] > (G + 2 * k + 1) * maxw * maxw) ++width_violations;
            const auto mlp = convert::merge_blocks(blocks);
            const convert::Box box(d, {-1.0, 1.0});
            worst = std::max(worst, convert::verify_equivalence(as_fn(kan), as_fn(mlp), box, 1000, rng()).max_rel);
            ++nets;
          }
  return {worst <= 1e-8 && width_violations == 0, std::to_string(nets) + " nets, max_rel=" + sci(worst) +
                                                       " width_violations=" + std::to_string(width_violations)};
}

// ---------------------------------------------------------------- spectral

Outcome hessian_conditioning() {
  bool count_ok = true;
  double worst_variation = 0.0, worst_slope = -INFINITY, worst_raw_slope = -INFINITY;
  for (int k = 1; k <= 3; ++k)
    for (int dp = 1; dp <= 2; ++dp) {
      std::map<int, std::vector<double>> ratio_by_G;
      for (int d = 1; d <= 3; ++d) {
        double lo = INFINITY, hi = 0.0;
        for (int G : {5, 10, 20, 40, 80}) {
          const auto rep = spectral::hessian_report(d, dp, splines::make_uniform_grid(-1, 1, G, k));
          if (rep.degenerate_count != dp * (d - 1)) count_ok = false;
          lo = std::min(lo, rep.ratio);
          hi = std::max(hi, rep.ratio);
          ratio_by_G[G].push_back(rep.ratio);
        }
        worst_variation = std::max(worst_variation, hi / lo);
      }
      const std::vector<double> ds{1, 2, 3};
      for (const auto& [G, ratios] : ratio_by_G) {
        std::vector<double> per_d(3);
        for (int i = 0; i < 3; ++i) per_d[i] = ratios[i] / ds[i];
        worst_slope = std::max(worst_slope, experiments::loglog_slope(ds, per_d));
        worst_raw_slope = std::max(worst_raw_slope, experiments::loglog_slope(ds, ratios));
      }
    }
  // The slope of log(ratio) bounds that of log(ratio/d) from above by one.
  return {count_ok && worst_variation < 2.0 && worst_raw_slope <= 1.3 && worst_slope <= 1.3,
          std::string("degenerate_counts=") + (count_ok ? "exact" : "WRONG") + " max_G_variation=" +
              sci(worst_variation) + " max_slope(ratio/d)=" + sci(worst_slope) +
              " max_slope(ratio)=" + sci(worst_raw_slope)};
}

Outcome gram_identities() {
  double min_gap = INFINITY, worst_block = 0.0;
  for (int k = 1; k <= 3; ++k)
    for (int G : {5, 10, 20, 40, 80}) {
      const auto grid = splines::make_uniform_grid(-1, 1, G, k);
      const auto gd = spectral::gram_matrix(grid);
      min_gap = std::min(min_gap, numerics::sym_eig(gd.C - gd.D).values.front());
      const std::size_t nb = grid.basis_count();
      for (int d = 1; d <= 3; ++d) {
        const auto B = spectral::assemble_hessian(d, 1, grid);
        for (std::size_t r = 0; r < B.rows(); ++r)
          for (std::size_t c = 0; c < B.cols(); ++c) {
            const double lhs = B(r, c) - gd.v[r % nb] * gd.v[c % nb];
            const double rhs = r / nb == c / nb ? gd.C(r % nb, c % nb) - gd.D(r % nb, c % nb) : 0.0;
            worst_block = std::max(worst_block, std::abs(lhs - rhs));
          }
      }
    }
  return {min_gap >= -1e-12 && worst_block <= 1e-12,
          "min_eig(C-D)=" + sci(min_gap) + " max_block_residual=" + sci(worst_block)};
}

// ---------------------------------------------------------------- approximation and gradients

Outcome kat_rate() {
  bool ok = true;
  std::string detail;
  for (int k = 1; k <= 3; ++k) {
    const auto r = experiments::kat_rate_check([](double x) { return std::sin(2 * std::numbers::pi * x); }, k);
    ok = ok && r.slope <= -(k + 1) + 0.3;
    detail += (k > 1 ? " " : "") + std::string("k=") + std::to_string(k) + ":slope=" + sci(r.slope);
  }
  return {ok, detail};
}

Outcome gradients() {
  Rng rng(104);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = testsupport::uniform_int(rng, 1, 3);
    const auto shape = testsupport::random_shape(rng, dim);
    const int k = testsupport::uniform_int(rng, 1, 3);
    auto data = testsupport::random_mse_data(rng, dim, 6);
    data.gamma = testsupport::uniform_vec(rng, data.count(), 0.0, 0.5);
    data.beta = testsupport::uniform_vec(rng, data.count(), -0.5, 0.5);
    std::vector<double> p, g;
    std::function<double(std::span<const double>)> f;
    models::KanNetwork kan;
    models::MlpNetwork mlp;
    if (trial % 2 == 0) {
      kan = models::init_kan(shape, testsupport::uniform_int(rng, 2, 8), k, rng());
      p = models::get_parameters(kan);
      for (double& v : p) v += testsupport::uniform(rng, -0.3, 0.3);
      models::set_parameters(kan, p);
      if (k <= 2)
        testsupport::push_off_kinks(data, rng, 1e-3,
                                    [&](std::span<const double> x) { return testsupport::kan_knot_distance(kan, x); });
      f = [&](std::span<const double> q) { return models::field_loss(kan, q, data, {}); };
      g.resize(p.size());
      models::field_loss(kan, p, data, g);
    } else {
      mlp = models::init_mlp(shape, k, rng());
      p = models::get_parameters(mlp);
      if (k <= 2)
        testsupport::push_off_kinks(data, rng, 1e-3,
                                    [&](std::span<const double> x) { return testsupport::mlp_kink_distance(mlp, x); });
      f = [&](std::span<const double> q) { return models::field_loss(mlp, q, data, {}); };
      g.resize(p.size());
      models::field_loss(mlp, p, data, g);
    }
    worst = std::max(worst, testsupport::fd_gradient_error(f, p, g));
  }
  return {worst < 1e-5, "100 losses, max_rel=" + sci(worst)};
}

// ---------------------------------------------------------------- experiments

// Mean over runs of the per-run fit step; +inf when any run never reaches it.
double mean_fit(const experiments::WaveResult& r, std::size_t i) {
  double s = 0.0;
  for (const auto& row : r.fit_step) {
    if (row[i] < 0) return INFINITY;
    s += row[i];
  }
  return s / static_cast<double>(r.fit_step.size());
}

Outcome spectral_bias() {
  const auto kcfg = experiments::wave_preset("kan", false);
  const auto mcfg = experiments::wave_preset("mlp", false);
  const auto kr = experiments::run_wave_experiment(kcfg, g_jobs);
  const auto mr = experiments::run_wave_experiment(mcfg, g_jobs);
  const std::size_t last = kcfg.freqs.size() - 1;
  const double kratio = mean_fit(kr, last) / mean_fit(kr, 0);
  const double mratio = mean_fit(mr, last) / mean_fit(mr, 0);
  int reached = 0;
  for (const auto& row : kr.fit_step) reached += row[last] >= 0;
  std::string detail = "kan_T=(";
  for (std::size_t i = 0; i <= last; ++i) detail += (i ? "," : "") + sci(mean_fit(kr, i));
  detail += ") mlp_T=(";
  for (std::size_t i = 0; i <= last; ++i) detail += (i ? "," : "") + sci(mean_fit(mr, i));
  detail += ") kan_ratio=" + sci(kratio) + " mlp_ratio=" + sci(mratio) + " kan_reached_top=" +
            std::to_string(reached) + "/" + std::to_string(kr.fit_step.size());
  int flagged = 0;
  for (bool b : kr.flagged) flagged += b;
  for (bool b : mr.flagged) flagged += b;
  detail += " flagged=" + std::to_string(flagged);
  return {kratio < mratio && reached >= 8, detail};
}

Outcome deep_ritz() {
  const auto kcfg = experiments::poisson_preset(1, "kan", false);
  const auto mcfg = experiments::poisson_preset(1, "mlp", false);
  const auto kr = experiments::run_poisson(kcfg, g_jobs);
  const auto mr = experiments::run_poisson(mcfg, g_jobs);
  bool ok = true;
  std::string detail;
  double k16_kan = NAN, k16_mlp = NAN;
  for (std::size_t i = 0; i < kcfg.ks.size(); ++i) {
    const double k = kcfg.ks[i];
    detail += "k=" + std::to_string(static_cast<int>(k)) + ":kan=" + sci(kr.final_errors[i].l2) +
              ",mlp=" + sci(mr.final_errors[i].l2) + " ";
    if (k == 2 || k == 4 || k == 8) ok = ok && kr.final_errors[i].l2 <= 5e-2;
    if (k == 16) {
      k16_kan = kr.final_errors[i].l2;
      k16_mlp = mr.final_errors[i].l2;
    }
  }
  ok = ok && k16_kan <= k16_mlp;
  // Informational: how often the H1 error dominates the L2 error along the traces.
  int dominated = 0, rows = 0;
  for (const auto* r : {&kr, &mr})
    for (const auto& row : r->rows) {
      dominated += row.rel_h1 >= row.rel_l2;
      ++rows;
    }
  detail += "h1>=l2 on " + std::to_string(dominated) + "/" + std::to_string(rows) + " rows";
  return {ok, detail};
}

Outcome grf_pipeline() {
  const auto cfg = experiments::grf_preset("kan", false);
  const auto r = experiments::run_grf_experiment(cfg);
  const auto& ev = r.data.eigenvalues;
  const int m = r.data.modes;
  const bool trunc_ok = m >= 1 && ev[m - 1] >= cfg.spec.cutoff * ev[0] &&
                        (m == static_cast<int>(ev.size()) || ev[m] < cfg.spec.cutoff * ev[0]);
  double worst_nested = 0.0;
  int nested = 0;
  std::string others;
  for (const auto& b : r.boundaries) {
    const double jump = std::abs(b.loss_after - b.loss_before);
    if (b.nested) {
      worst_nested = std::max(worst_nested, jump);
      ++nested;
    } else {
      others += " " + std::to_string(b.from_grid) + "->" + std::to_string(b.to_grid) + ":" + sci(jump);
    }
  }
  return {trunc_ok && r.final_train < 1e-3 && nested > 0 && worst_nested <= 1e-6,
          "modes=" + std::to_string(m) + " truncation=" + (trunc_ok ? "ok" : "WRONG") +
              " train_mse=" + sci(r.final_train) + " test_mse=" + sci(r.final_test) + " nested_boundaries=" +
              std::to_string(nested) + " max_nested_jump=" + sci(worst_nested) + " other_jumps:" + others};
}

Outcome determinism() {
  auto waves = [](int jobs) {
    auto c = experiments::wave_preset("kan", false);
    c.steps = 60;
    c.runs = 3;
    return experiments::wave_csv(experiments::run_wave_experiment(c, jobs));
  };
  auto mlp_waves = [](int jobs) {
    auto c = experiments::wave_preset("mlp", false);
    c.shape = {1, 32, 32, 1};
    c.steps = 60;
    c.runs = 2;
    return experiments::wave_csv(experiments::run_wave_experiment(c, jobs));
  };
  auto grf = [] {
    auto c = experiments::grf_preset("kan", false);
    c.spec.points = 120;
    c.grids = {5, 10};
    c.iterations = 15;
    return experiments::grf_csv(experiments::run_grf_experiment(c));
  };
  auto poisson = [](int dim, const char* net, int jobs) {
    auto c = experiments::poisson_preset(dim, net, false);
    c.points = dim == 1 ? 200 : 15;
    c.iterations = 5;
    if (c.net == "mlp") c.shape = std::vector<int>{dim, 16, 16, 1};
    return experiments::poisson_csv(experiments::run_poisson(c, jobs));
  };
  const int jobs = std::max(2, g_jobs);
  int same = 0, total = 0;
  auto check = [&](const std::string& a, const std::string& b) {
    same += a == b && !a.empty();
    ++total;
  };
  check(waves(1), waves(jobs));
  check(mlp_waves(1), mlp_waves(jobs));
  check(grf(), grf());
  check(poisson(1, "kan", 1), poisson(1, "kan", jobs));
  check(poisson(2, "mlp", 1), poisson(2, "mlp", jobs));
  return {same == total, std::to_string(same) + "/" + std::to_string(total) + " CSV pairs byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<std::string> only;
  app.add_option("--jobs", g_jobs, "worker threads for multi-run experiments");
  app.add_option("names", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"mlp_to_kan_exactness", mlp_to_kan_sweep},
      {"kan_to_mlp_exactness", kan_to_mlp_sweep},
      {"hessian_conditioning", hessian_conditioning},
      {"gram_identities", gram_identities},
      {"kat_rate", kat_rate},
      {"gradient_correctness", gradients},
      {"spectral_bias", spectral_bias},
      {"deep_ritz_1d", deep_ritz},
      {"grf_pipeline", grf_pipeline},
      {"determinism", determinism},
  };
  const std::set<std::string> selected(only.begin(), only.end());
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << sci(secs) << " s) " << o.detail << std::endl;
    failed += !o.pass;
  }
  std::cout << "acceptance failed=" << failed << std::endl;
  return failed == 0 ? 0 : 1;
}
