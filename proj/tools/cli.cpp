#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

#include "kanlab/convert.hpp"
#include "kanlab/errors.hpp"
#include "kanlab/experiments.hpp"
#include "kanlab/models.hpp"
#include "kanlab/optim.hpp"
#include "kanlab/spectral.hpp"
#include "kanlab/splines.hpp"

namespace kanlab::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace ex = experiments;

namespace {

const std::vector<std::pair<std::string, std::string>> kSubcommands{
    {"waves", "fit a sum of sines and track per-frequency magnitudes"},
    {"grf", "regress a Gaussian random field sample"},
    {"poisson1d", "deep Ritz solve of the 1D Poisson problem"},
    {"poisson2d", "deep Ritz solve of the 2D Poisson problem"},
    {"convert", "exact MLP <-> KAN conversion of a model file"},
    {"hessian", "spectrum of the single-layer KAN Hessian"},
    {"katrate", "spline approximation rate against the grid size"},
    {"selftest", "quick numerical self-checks"}};

std::string amplitudes_name(ex::Amplitudes a) { return a == ex::Amplitudes::Equal ? "equal" : "increasing"; }

ex::Amplitudes parse_amplitudes(const std::string& s) {
  if (s == "equal") return ex::Amplitudes::Equal;
  if (s == "increasing") return ex::Amplitudes::Increasing;
  throw std::invalid_argument("amplitudes must be \"equal\" or \"increasing\"");
}

}  // namespace

ordered_json default_config(const std::string& sub, const std::string& net, bool full) {
  ordered_json c;
  if (sub == "waves") {
    const auto w = ex::wave_preset(net, full);
    c = {{"net", w.net},        {"shape", w.shape},   {"grid", w.grid},         {"degree", w.degree},
         {"power", w.power},    {"steps", w.steps},   {"record_every", w.record_every},
         {"lr", w.lr},          {"runs", w.runs},     {"samples", w.samples},   {"freqs", w.freqs},
         {"amplitudes", amplitudes_name(w.amplitudes)}, {"threshold", w.threshold}, {"seed", w.seed}};
  } else if (sub == "grf") {
    const auto g = ex::grf_preset(net, full);
    c = {{"net", g.net},
         {"dim", g.spec.dim},
         {"sigma", g.spec.sigma},
         {"points", g.spec.points},
         {"train_fraction", g.spec.train_fraction},
         {"cutoff", g.spec.cutoff},
         {"shape", g.shape},
         {"degree", g.degree},
         {"grids", g.grids},
         {"iterations", g.iterations},
         {"power", g.power},
         {"margin", g.margin},
         {"update_every", g.update_every},
         {"update_until", g.update_until},
         {"seed", g.seed}};
  } else if (sub == "poisson1d" || sub == "poisson2d") {
    const auto p = ex::poisson_preset(sub == "poisson1d" ? 1 : 2, net, full);
    c = {{"net", p.net},   {"shape", p.shape}, {"degree", p.degree}, {"grids", p.grids},
         {"iterations", p.iterations}, {"power", p.power}, {"ks", p.ks}, {"points", p.points},
         {"lambda", p.lambda}, {"seed", p.seed}};
  } else if (sub == "katrate") {
    c = {{"degrees", {1, 2, 3}}, {"grids", {5, 10, 20, 40, 80}}, {"target", "sin2pi"}};
  } else if (sub == "hessian") {
    c = {{"d", 2},
         {"dprime", 1},
         {"G", 10},
         {"k", 3},
         {"tau", spectral::kDefaultTau},
         {"sweep", false},
         {"sweep_k", {1, 2, 3}},
         {"sweep_d", {1, 2, 3}},
         {"sweep_dprime", {1, 2}},
         {"sweep_G", {5, 10, 20, 40, 80}}};
  } else if (sub == "convert") {
    c = {{"direction", "mlp2kan"}, {"in", ""}, {"out", ""}, {"domain", "-1,1"}, {"verify", 1000}, {"seed", 0}};
  } else if (sub == "selftest") {
    c = {{"seed", 0}};
  } else {
    throw std::invalid_argument("unknown subcommand: " + sub);
  }
  return c;
}

void merge_config(ordered_json& base, const json& patch) {
  if (!patch.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, value] : patch.items()) {
    if (!base.contains(key)) throw std::invalid_argument("unknown config key: " + key);
    auto& slot = base[key];
    const bool ok = (slot.is_number_float() && value.is_number()) ||
                    (slot.is_number_unsigned() && value.is_number_unsigned()) ||
                    (slot.is_number_integer() && !slot.is_number_unsigned() && value.is_number_integer()) ||
                    (slot.is_string() && value.is_string()) || (slot.is_boolean() && value.is_boolean()) ||
                    (slot.is_array() && value.is_array());
    // "domain" also accepts an array of [lo, hi] pairs.
    if (!ok && !(key == "domain" && value.is_array()))
      throw std::invalid_argument("config key " + key + " has the wrong type (expected " +
                                  std::string(slot.type_name()) + ")");
    slot = slot.is_number_float() ? json(value.get<double>()) : value;
  }
}

std::string canonical(const json& config) { return json(config).dump(); }

namespace {

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  ex::Progress progress() {
    return [this](const std::string& line) {
      std::lock_guard lock(mu_);
      err_ << line << '\n';
    };
  }

  void log(const std::string& line) { progress()(line); }

  std::filesystem::path run_dir(const std::string& sub, const ordered_json& cfg, const std::string& out_root) {
    return std::filesystem::path(out_root) / (sub + "-" + ex::hex64(ex::fnv1a64(canonical(cfg))));
  }

  void finish(const std::string& sub, const ordered_json& cfg, const std::filesystem::path& dir,
              const std::map<std::string, std::string>& files, std::uint64_t seed) {
    std::vector<std::string> names;
    for (const auto& [name, content] : files) {
      ex::write_atomic(dir / name, content);
      names.push_back(name);
    }
    ex::write_atomic(dir / "manifest.json", ex::manifest_json(sub, seed, canonical(cfg), names));
    log("event=done experiment=" + sub + " run_dir=" + dir.string());
    out_ << dir.string() << '\n';
  }

  std::ostream& out() { return out_; }

 private:
  std::ostream& out_;
  std::ostream& err_;
  std::mutex mu_;
};

template <class T>
T get(const ordered_json& c, const char* key) {
  return c.at(key).get<T>();
}

int positive(const ordered_json& c, const char* key) {
  const int v = get<int>(c, key);
  if (v < 1) throw std::invalid_argument(std::string(key) + " must be positive");
  return v;
}

// ---------------------------------------------------------------- experiments

void run_waves(Runner& r, const ordered_json& c, const std::string& out_root, int jobs) {
  ex::WaveConfig w;
  w.net = get<std::string>(c, "net");
  w.shape = get<std::vector<int>>(c, "shape");
  w.grid = positive(c, "grid");
  w.degree = positive(c, "degree");
  w.power = positive(c, "power");
  w.steps = get<int>(c, "steps");
  w.record_every = get<int>(c, "record_every");
  w.lr = get<double>(c, "lr");
  w.runs = get<int>(c, "runs");
  w.samples = get<int>(c, "samples");
  w.freqs = get<std::vector<double>>(c, "freqs");
  w.amplitudes = parse_amplitudes(get<std::string>(c, "amplitudes"));
  w.threshold = get<double>(c, "threshold");
  w.seed = get<std::uint64_t>(c, "seed");
  const auto dir = r.run_dir("waves", c, out_root);
  r.log("event=start experiment=waves run_dir=" + dir.string());
  const auto res = ex::run_wave_experiment(w, jobs, r.progress());

  ordered_json s;
  s["freqs"] = w.freqs;
  s["threshold"] = w.threshold;
  s["mean_fit_step"] = res.mean_fit_step;
  s["fit_step"] = res.fit_step;
  s["flagged"] = res.flagged;
  s["initial_loss"] = res.initial_loss;
  s["final_loss"] = res.final_loss;
  r.finish("waves", c, dir, {{"waves.csv", ex::wave_csv(res)}, {"summary.json", s.dump(2) + "\n"}}, w.seed);
}

void run_grf(Runner& r, const ordered_json& c, const std::string& out_root) {
  ex::GrfConfig g;
  g.net = get<std::string>(c, "net");
  g.spec.dim = positive(c, "dim");
  g.spec.sigma = get<double>(c, "sigma");
  g.spec.points = get<int>(c, "points");
  g.spec.train_fraction = get<double>(c, "train_fraction");
  g.spec.cutoff = get<double>(c, "cutoff");
  g.shape = get<std::vector<int>>(c, "shape");
  g.degree = positive(c, "degree");
  g.grids = get<std::vector<int>>(c, "grids");
  for (int G : g.grids)
    if (G < 1) throw std::invalid_argument("grids must be positive");
  g.iterations = get<int>(c, "iterations");
  g.power = positive(c, "power");
  g.margin = get<double>(c, "margin");
  g.update_every = get<int>(c, "update_every");
  g.update_until = get<int>(c, "update_until");
  g.seed = get<std::uint64_t>(c, "seed");
  g.spec.seed = g.seed;
  const auto dir = r.run_dir("grf", c, out_root);
  r.log("event=start experiment=grf run_dir=" + dir.string());
  const auto res = ex::run_grf_experiment(g, r.progress());

  ordered_json s;
  s["modes"] = res.data.modes;
  s["leading_eigenvalues"] = std::vector<double>(
      res.data.eigenvalues.begin(), res.data.eigenvalues.begin() + std::min<std::size_t>(res.data.eigenvalues.size(), res.data.modes + 1));
  s["final_train"] = res.final_train;
  s["final_test"] = res.final_test;
  s["boundaries"] = json::array();
  for (const auto& b : res.boundaries)
    s["boundaries"].push_back({{"from", b.from_grid},
                               {"to", b.to_grid},
                               {"loss_before", b.loss_before},
                               {"loss_after", b.loss_after},
                               {"nested", b.nested}});
  r.finish("grf", c, dir, {{"grf.csv", ex::grf_csv(res)}, {"summary.json", s.dump(2) + "\n"}}, g.seed);
}

void run_poisson(Runner& r, const std::string& sub, const ordered_json& c, const std::string& out_root, int jobs) {
  ex::PoissonConfig p;
  p.dim = sub == "poisson1d" ? 1 : 2;
  p.net = get<std::string>(c, "net");
  p.shape = get<std::vector<int>>(c, "shape");
  p.degree = positive(c, "degree");
  p.grids = get<std::vector<int>>(c, "grids");
  for (int G : p.grids)
    if (G < 1) throw std::invalid_argument("grids must be positive");
  p.iterations = get<int>(c, "iterations");
  p.power = positive(c, "power");
  p.ks = get<std::vector<double>>(c, "ks");
  p.points = get<int>(c, "points");
  p.lambda = get<double>(c, "lambda");
  p.seed = get<std::uint64_t>(c, "seed");
  const auto dir = r.run_dir(sub, c, out_root);
  r.log("event=start experiment=" + sub + " run_dir=" + dir.string());
  const auto res = ex::run_poisson(p, jobs, r.progress());

  ordered_json s;
  s["ks"] = p.ks;
  s["final_rel_l2"] = json::array();
  s["final_rel_h1"] = json::array();
  for (const auto& e : res.final_errors) {
    s["final_rel_l2"].push_back(e.l2);
    s["final_rel_h1"].push_back(e.h1);
  }
  r.finish(sub, c, dir, {{"poisson.csv", ex::poisson_csv(res)}, {"summary.json", s.dump(2) + "\n"}}, p.seed);
}

void run_katrate(Runner& r, const ordered_json& c, const std::string& out_root) {
  const auto target = get<std::string>(c, "target");
  std::function<double(double)> f;
  if (target == "sin2pi")
    f = [](double x) { return std::sin(2 * std::numbers::pi * x); };
  else if (target == "exp")
    f = [](double x) { return std::exp(x); };
  else if (target == "linear")
    f = [](double x) { return 2.0 * x - 0.5; };
  else
    throw std::invalid_argument("target must be sin2pi, exp or linear");
  const auto grids = get<std::vector<int>>(c, "grids");
  const auto dir = r.run_dir("katrate", c, out_root);
  ex::Csv csv({"degree", "G", "sup_error"});
  ordered_json s = json::object();
  for (int k : get<std::vector<int>>(c, "degrees")) {
    if (k < 1 || k > splines::kMaxDegree) throw std::invalid_argument("degrees must lie in [1, 7]");
    const auto res = ex::kat_rate_check(f, k, grids);
    for (std::size_t i = 0; i < grids.size(); ++i)
      csv.row({std::to_string(k), std::to_string(grids[i]), ex::format_double(res.errors[i])});
    s[std::to_string(k)] = {{"slope", res.slope}, {"bound", -(k + 1) + 0.3}};
    r.log("experiment=katrate degree=" + std::to_string(k) + " slope=" + ex::format_double(res.slope));
  }
  r.finish("katrate", c, dir, {{"katrate.csv", csv.str()}, {"summary.json", s.dump(2) + "\n"}}, 0);
}

ordered_json report_json(const spectral::HessianReport& h) {
  ordered_json j;
  j["d"] = h.d;
  j["dprime"] = h.dprime;
  j["G"] = h.G;
  j["k"] = h.k;
  j["N"] = h.M.rows();
  j["tau"] = h.tau;
  j["degenerate_count"] = h.degenerate_count;
  j["expected_degenerate"] = h.expected_degenerate;
  j["ratio"] = h.ratio;
  j["lambda_min_nonzero"] = h.lambda_min_nonzero;
  j["lambda_max"] = h.lambda_max;
  j["eigenvalues"] = h.eigenvalues;
  return j;
}

void run_hessian(Runner& r, const ordered_json& c, const std::string& out_root, int jobs) {
  const double tau = get<double>(c, "tau");
  const auto dir = r.run_dir("hessian", c, out_root);
  if (!get<bool>(c, "sweep")) {
    const int k = positive(c, "k");
    const splines::Grid grid(-1.0, 1.0, positive(c, "G"), k);
    const auto h = spectral::hessian_report(positive(c, "d"), positive(c, "dprime"), grid, tau);
    const auto text = report_json(h).dump(2) + "\n";
    r.out() << text;
    r.finish("hessian", c, dir, {{"report.json", text}}, 0);
    return;
  }
  struct Case {
    int k, d, dp, G;
  };
  std::vector<Case> cases;
  for (int k : get<std::vector<int>>(c, "sweep_k"))
    for (int d : get<std::vector<int>>(c, "sweep_d"))
      for (int dp : get<std::vector<int>>(c, "sweep_dprime"))
        for (int G : get<std::vector<int>>(c, "sweep_G")) cases.push_back({k, d, dp, G});
  std::vector<spectral::HessianReport> reps(cases.size());
  auto prog = r.progress();
  ex::parallel_for(static_cast<int>(cases.size()), jobs, [&](int i) {
    const auto& cs = cases[i];
    reps[i] = spectral::hessian_report(cs.d, cs.dp, splines::Grid(-1.0, 1.0, cs.G, cs.k), tau);
    reps[i].M = {};
    prog("experiment=hessian k=" + std::to_string(cs.k) + " d=" + std::to_string(cs.d) + " dprime=" +
         std::to_string(cs.dp) + " G=" + std::to_string(cs.G) + " ratio=" + ex::format_double(reps[i].ratio));
  });
  ex::Csv csv({"d", "dprime", "G", "k", "N", "degenerate_count", "ratio", "lambda_min_nonzero", "lambda_max"});
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& h = reps[i];
    csv.row({std::to_string(h.d), std::to_string(h.dprime), std::to_string(h.G), std::to_string(h.k),
             std::to_string(h.eigenvalues.size()), std::to_string(h.degenerate_count), ex::format_double(h.ratio),
             ex::format_double(h.lambda_min_nonzero), ex::format_double(h.lambda_max)});
  }
  r.finish("hessian", c, dir, {{"hessian_sweep.csv", csv.str()}}, 0);
}

// ---------------------------------------------------------------- convert

convert::Box parse_domain(const json& v, int dim) {
  convert::Box box;
  if (v.is_string() && v.get<std::string>().rfind('[', 0) == 0) {
    const json pairs = json::parse(v.get<std::string>(), nullptr, false);
    if (pairs.is_discarded()) throw std::invalid_argument("domain is not valid JSON");
    return parse_domain(pairs, dim);
  }
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("domain must look like lo,hi");
    double lo = 0.0, hi = 0.0;
    try {
      lo = std::stod(s.substr(0, comma));
      hi = std::stod(s.substr(comma + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("domain must look like lo,hi");
    }
    box.assign(dim, {lo, hi});
  } else {
    for (const auto& p : v) {
      if (!p.is_array() || p.size() != 2) throw std::invalid_argument("domain entries must be [lo, hi] pairs");
      box.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    if (static_cast<int>(box.size()) != dim) throw std::invalid_argument("domain dimension does not match the model");
  }
  for (const auto& [lo, hi] : box)
    if (!(lo < hi)) throw std::invalid_argument("domain intervals need lo < hi");
  return box;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void run_convert(Runner& r, const ordered_json& c) {
  const auto dir = get<std::string>(c, "direction");
  const auto in = get<std::string>(c, "in"), outp = get<std::string>(c, "out");
  if (in.empty() || outp.empty()) throw std::invalid_argument("convert needs --in and --out");
  const int n = get<int>(c, "verify");
  if (n < 0) throw std::invalid_argument("verify must be >= 0");
  const auto text = read_file(in);
  ordered_json rep;
  rep["direction"] = dir;
  convert::VectorFn f, g;
  convert::Box box;
  if (dir == "mlp2kan") {
    if (models::model_kind(text) != "mlp") throw std::invalid_argument("input is not an MLP model");
    const auto mlp = models::mlp_from_json(text);
    box = parse_domain(c.at("domain"), mlp.shape.front());
    const auto bounds = convert::propagate_bounds(mlp, box, get<std::uint64_t>(c, "seed"));
    const auto kan = convert::mlp_to_kan(mlp, bounds);
    ex::write_atomic(outp, models::to_json(kan));
    rep["input_shape"] = mlp.shape;
    rep["output_shape"] = kan.shape;
    f = [mlp](std::span<const double> x) { return models::mlp_forward(mlp, x); };
    g = [kan](std::span<const double> x) { return models::kan_forward(kan, x); };
  } else if (dir == "kan2mlp") {
    if (models::model_kind(text) != "kan") throw std::invalid_argument("input is not a KAN model");
    const auto kan = models::kan_from_json(text);
    box = parse_domain(c.at("domain"), kan.shape.front());
    const auto mlp = convert::kan_to_mlp(kan);
    ex::write_atomic(outp, models::to_json(mlp));
    rep["input_shape"] = kan.shape;
    rep["output_shape"] = mlp.shape;
    f = [kan](std::span<const double> x) { return models::kan_forward(kan, x); };
    g = [mlp](std::span<const double> x) { return models::mlp_forward(mlp, x); };
  } else {
    throw std::invalid_argument("direction must be mlp2kan or kan2mlp");
  }
  rep["out"] = outp;
  if (n > 0) {
    const auto v = convert::verify_equivalence(f, g, box, static_cast<std::size_t>(n), get<std::uint64_t>(c, "seed"));
    rep["verify"] = {{"points", v.points}, {"max_abs", v.max_abs}, {"max_rel", v.max_rel}, {"argmax", v.argmax}};
  }
  r.out() << rep.dump(2) << '\n';
  r.log("event=done experiment=convert out=" + outp);
}

// ---------------------------------------------------------------- selftest

struct Check {
  const char* name;
  std::function<std::string()> run;  // empty string on success, else a diagnostic
};

std::string fail_if(bool bad, const std::string& what) { return bad ? what : std::string(); }

std::vector<Check> selftest_checks(std::uint64_t seed) {
  using std::numbers::pi;
  std::vector<Check> checks;
  checks.push_back({"spline_partition_of_unity", [] {
                      const splines::Grid g(-0.5, 2.0, 7, 3);
                      double worst = 0.0;
                      for (int i = 0; i <= 500; ++i) {
                        double s = 0.0;
                        for (double b : splines::basis_values(g, -0.5 + 2.5 * i / 500)) s += b;
                        worst = std::max(worst, std::abs(s - 1.0));
                      }
                      return fail_if(worst > 1e-13, "max |sum B - 1| = " + ex::format_double(worst));
                    }});
  checks.push_back({"field_loss_gradient", [seed] {
                      auto net = models::init_kan({1, 3, 1}, 5, 3, seed);
                      models::FieldLossData d;
                      d.points = {-0.7, -0.2, 0.3, 0.8};
                      d.target = {0.1, -0.4, 0.2, 0.5};
                      d.alpha = {1, 1, 1, 1};
                      d.beta = {0.2, -0.1, 0.3, 0.0};
                      d.gamma = {0.5, 0.5, 0.5, 0.5};
                      auto p = models::get_parameters(net);
                      std::vector<double> g(p.size());
                      models::field_loss(net, p, d, g);
                      double worst = 0.0;
                      for (std::size_t i = 0; i < p.size(); i += 3) {
                        const double h = 1e-6, p0 = p[i];
                        p[i] = p0 + h;
                        const double fp = models::field_loss(net, p, d, {});
                        p[i] = p0 - h;
                        const double fm = models::field_loss(net, p, d, {});
                        p[i] = p0;
                        const double fd = (fp - fm) / (2 * h);
                        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd)));
                      }
                      return fail_if(worst > 1e-5, "max rel err = " + ex::format_double(worst));
                    }});
  checks.push_back({"mlp_to_kan_exact", [seed] {
                      const auto mlp = models::init_mlp({2, 4, 4, 1}, 2, seed, models::MlpInit::FanIn);
                      const convert::Box box{{-1, 1}, {-1, 1}};
                      const auto kan = convert::mlp_to_kan(mlp, convert::propagate_bounds(mlp, box));
                      const auto v = convert::verify_equivalence(
                          [&](std::span<const double> x) { return models::mlp_forward(mlp, x); },
                          [&](std::span<const double> x) { return models::kan_forward(kan, x); }, box, 500, seed);
                      return fail_if(v.max_rel > 1e-8, "max rel = " + ex::format_double(v.max_rel));
                    }});
  checks.push_back({"kan_to_mlp_exact", [seed] {
                      auto kan = models::init_kan({2, 3, 1}, 5, 2, seed);
                      for (auto& l : kan.layers)
                        for (auto& a : l.acts) a.w_b = 0.0;
                      const auto mlp = convert::kan_to_mlp(kan);
                      const convert::Box box{{-1, 1}, {-1, 1}};
                      const auto v = convert::verify_equivalence(
                          [&](std::span<const double> x) { return models::kan_forward(kan, x); },
                          [&](std::span<const double> x) { return models::mlp_forward(mlp, x); }, box, 500, seed);
                      return fail_if(v.max_rel > 1e-8, "max rel = " + ex::format_double(v.max_rel));
                    }});
  checks.push_back({"hessian_degenerate_count", [] {
                      const auto h = spectral::hessian_report(2, 1, splines::Grid(-1, 1, 10, 3));
                      return fail_if(h.degenerate_count != 1, "count = " + std::to_string(h.degenerate_count));
                    }});
  checks.push_back({"mass_matrix_dominance", [] {
                      const auto gd = spectral::gram_matrix(splines::Grid(-1, 1, 12, 2));
                      const auto e = numerics::sym_eig(gd.C - gd.D);
                      return fail_if(e.values.front() < -1e-12, "min eig(C - D) = " + ex::format_double(e.values.front()));
                    }});
  checks.push_back({"dft_pure_tone", [] {
                      const ex::WaveSpec s{{25}, {0.7}, {1.3}};
                      std::vector<double> v;
                      for (double x : ex::wave_grid()) v.push_back(ex::wave_target(s, x));
                      const double m = ex::dft_magnitudes(v, s.freqs, s.amps)[0];
                      return fail_if(std::abs(m - 1.0) > 1e-12, "magnitude = " + ex::format_double(m));
                    }});
  checks.push_back({"kat_rate_cubic", [] {
                      const auto r = ex::kat_rate_check([](double x) { return std::sin(2 * pi * x); }, 3);
                      return fail_if(r.slope > -3.7, "slope = " + ex::format_double(r.slope));
                    }});
  checks.push_back({"lbfgs_quadratic", [] {
                      const std::vector<double> w{1, 10, 100};
                      const auto res = optim::lbfgs_minimize(
                          [&](std::span<const double> x, std::span<double> g) {
                            double f = 0;
                            for (std::size_t i = 0; i < x.size(); ++i) {
                              f += 0.5 * w[i] * (x[i] - 1) * (x[i] - 1);
                              g[i] = w[i] * (x[i] - 1);
                            }
                            return f;
                          },
                          {0, 0, 0});
                      double e = 0;
                      for (double x : res.params) e = std::max(e, std::abs(x - 1));
                      return fail_if(e > 1e-8, "max |x - 1| = " + ex::format_double(e));
                    }});
  checks.push_back({"grf_truncation_rule", [seed] {
                      ex::GrfSpec s;
                      s.points = 80;
                      s.seed = seed;
                      const auto b = ex::grf_basis(s);
                      const bool ok = b.eigenvalues[b.m - 1] >= 0.1 * b.eigenvalues[0] &&
                                      b.eigenvalues[b.m] < 0.1 * b.eigenvalues[0];
                      return fail_if(!ok, "m = " + std::to_string(b.m));
                    }});
  checks.push_back({"ritz_exact_energy", [] {
                      const auto grid = ex::ritz_grid(1, 2000);
                      const auto p = ex::poisson_problem_1d(2);
                      const auto d = ex::ritz_data(grid, [&](std::span<const double> x) { return p.f(x[0]); });
                      std::vector<double> u, ux;
                      for (double x : grid.points) {
                        u.push_back(p.u(x));
                        ux.push_back(p.ux(x));
                      }
                      const double l = ex::field_loss_from_values(d, u, ux), want = -ex::kRitzLambda * pi * pi;
                      return fail_if(std::abs(l - want) > 1e-9 * std::abs(want), "loss = " + ex::format_double(l));
                    }});
  return checks;
}

int run_selftest(Runner& r, std::uint64_t seed) {
  int failed = 0;
  for (const auto& c : selftest_checks(seed)) {
    std::string detail;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (detail.empty()) {
      r.out() << "check=" << c.name << " status=pass\n";
    } else {
      ++failed;
      r.out() << "check=" << c.name << " status=fail detail=\"" << detail << "\"\n";
    }
  }
  r.out() << "selftest failed=" << failed << '\n';
  return failed == 0 ? kOk : kNumericalFailure;
}

// Flag text as JSON when it parses, else as a string; "a,b,c" fills list slots.
json flag_value(const std::string& text, const json& slot) {
  json v = json::parse(text, nullptr, false);
  if (!v.is_discarded() && slot.is_array() && !v.is_array()) return json::array({v});
  if (!v.is_discarded() && !(slot.is_string() && !v.is_string())) return v;
  if (slot.is_array()) {
    json arr = json::array();
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
      json e = json::parse(item, nullptr, false);
      if (e.is_discarded()) e = item;
      arr.push_back(e);
    }
    return arr;
  }
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"kanlab: KAN / MLP experiments, conversion and spectral analysis"};
  app.require_subcommand(1);
  struct Sub {
    CLI::App* app = nullptr;
    std::string config_path, preset = "desk", out_root = "runs";
    bool full = false;
    int jobs = 1;
    std::map<std::string, std::string> flags;
  };
  std::map<std::string, Sub> subs;
  for (const auto& [name, help] : kSubcommands) {
    auto& s = subs[name];
    s.app = app.add_subcommand(name, help);
    s.app->add_option("--config", s.config_path, "JSON config file or a run's manifest.json");
    if (name != "convert" && name != "selftest") {
      s.app->add_option("--out", s.out_root, "root directory for run outputs");
      s.app->add_option("--jobs", s.jobs, "worker threads for independent runs")->check(CLI::PositiveNumber);
    }
    if (name == "waves" || name == "grf" || name == "poisson1d" || name == "poisson2d") {
      s.app->add_flag("--full", s.full, "larger preset (same as --preset full)");
      s.app->add_option("--preset", s.preset, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    }
    // One flag per config key; keys come from the kan preset, which shares them with mlp.
    const auto keys = default_config(name, "kan", false);
    for (const auto& [key, v] : keys.items()) {
      std::string names = "--" + key;
      if (key.find('_') != std::string::npos) {
        auto dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        names += ",--" + dashed;
      }
      s.app->add_option(names, s.flags[key], "config key " + key);
    }
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::string help;
    for (auto* sc : app.get_subcommands())
      if (sc->parsed()) help = sc->help();
    err << "error=invalid_arguments message=\"" << e.what() << "\"\n" << help;
    return kInvalidConfig;
  }

  std::string name;
  for (auto& [n, s] : subs)
    if (s.app->parsed()) name = n;
  auto& s = subs[name];
  Runner runner(out, err);
  try {
    json file_cfg = json::object();
    if (!s.config_path.empty()) {
      file_cfg = json::parse(read_file(s.config_path));
      if (file_cfg.contains("experiment") && file_cfg.contains("config")) {
        if (file_cfg["experiment"] != name)
          throw std::invalid_argument("manifest is for " + file_cfg["experiment"].get<std::string>());
        file_cfg = file_cfg["config"];
      }
    }
    // The preset depends on net and scale; both may come from the file or the flags.
    std::string net = file_cfg.is_object() && file_cfg.contains("net") && file_cfg["net"].is_string()
                          ? file_cfg["net"].get<std::string>()
                          : "kan";
    auto flag_it = s.flags.find("net");
    if (flag_it != s.flags.end() && !flag_it->second.empty()) net = flag_it->second;
    const bool full = s.full || s.preset == "full";
    auto cfg = default_config(name, net, full);
    merge_config(cfg, file_cfg);
    json patch = json::object();
    for (const auto& [key, text] : s.flags)
      if (s.app->count("--" + key) > 0) patch[key] = flag_value(text, cfg[key]);
    merge_config(cfg, patch);

    if (name == "waves") run_waves(runner, cfg, s.out_root, s.jobs);
    else if (name == "grf") run_grf(runner, cfg, s.out_root);
    else if (name == "poisson1d" || name == "poisson2d") run_poisson(runner, name, cfg, s.out_root, s.jobs);
    else if (name == "katrate") run_katrate(runner, cfg, s.out_root);
    else if (name == "hessian") run_hessian(runner, cfg, s.out_root, s.jobs);
    else if (name == "convert") run_convert(runner, cfg);
    else return run_selftest(runner, cfg.at("seed").get<std::uint64_t>());
    return kOk;
  } catch (const NumericalError& e) {
    err << "error=numerical experiment=" << name << " message=\"" << e.what() << "\"\n";
    return kNumericalFailure;
  } catch (const std::invalid_argument& e) {
    err << "error=invalid_config experiment=" << name << " message=\"" << e.what() << "\"\n";
    return kInvalidConfig;
  } catch (const json::exception& e) {
    err << "error=invalid_config experiment=" << name << " message=\"" << e.what() << "\"\n";
    return kInvalidConfig;
  } catch (const std::exception& e) {
    err << "error=failure experiment=" << name << " message=\"" << e.what() << "\"\n";
    return kNumericalFailure;
  }
}

}  // namespace kanlab::cli
