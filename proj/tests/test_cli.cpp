#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "kanlab/experiments.hpp"
#include "kanlab/models.hpp"

using namespace kanlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("kanlab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

fs::path first_line_path(const std::string& out) { return fs::path(out.substr(0, out.find('\n'))); }

}  // namespace

TEST_CASE("selftest passes every check") {
  const auto r = run({"selftest"});
  CHECK(r.code == 0);
  CHECK(r.out.find("status=fail") == std::string::npos);
  CHECK(r.out.find("selftest failed=0") != std::string::npos);
}

TEST_CASE("hessian example reports one degenerate direction") {
  const auto dir = scratch("hessian");
  const auto r = run({"hessian", "--d", "2", "--dprime", "1", "--G", "10", "--k", "3", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rep = json::parse(r.out.substr(0, r.out.rfind("}\n") + 1));
  CHECK(rep["degenerate_count"] == 1);
  CHECK(rep["N"] == 26);
  bool found = false;
  for (const auto& e : fs::directory_iterator(dir)) {
    CHECK(json::parse(slurp(e.path() / "report.json"))["degenerate_count"] == 1);
    CHECK(fs::exists(e.path() / "manifest.json"));
    found = true;
  }
  CHECK(found);
}

TEST_CASE("hessian sweep CSV schema") {
  const auto dir = scratch("sweep");
  const auto r = run({"hessian", "--sweep", "true", "--sweep_k", "1,2", "--sweep_d", "[2]", "--sweep_dprime", "1",
                      "--sweep_G", "5,10", "--jobs", "2", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto csv = slurp(first_line_path(r.out) / "hessian_sweep.csv");
  CHECK(csv.rfind("d,dprime,G,k,N,degenerate_count,ratio,lambda_min_nonzero,lambda_max\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("waves: schema, manifest and byte-identical re-run from the manifest") {
  const auto dir = scratch("waves");
  const auto a = run({"waves", "--net", "kan", "--steps", "20", "--runs", "2", "--grid", "10", "--seed", "5",
                      "--out", dir.string()});
  REQUIRE(a.code == 0);
  const auto run_dir = first_line_path(a.out);
  const auto csv = slurp(run_dir / "waves.csv");
  CHECK(csv.rfind("run,step,freq,magnitude\n", 0) == 0);
  const auto m = json::parse(slurp(run_dir / "manifest.json"));
  CHECK(m["experiment"] == "waves");
  CHECK(m["seed"] == 5);
  CHECK(m["version"] == experiments::kArtifactVersion);
  CHECK(m["config"]["steps"] == 20);
  CHECK(m["config_hash"] == experiments::hex64(experiments::fnv1a64(cli::canonical(m["config"]))));
  CHECK(run_dir.filename().string() == "waves-" + m["config_hash"].get<std::string>());
  CHECK(a.err.find("event=start experiment=waves") != std::string::npos);

  const auto copy = dir / "manifest_copy.json";
  fs::copy_file(run_dir / "manifest.json", copy);
  fs::remove_all(run_dir);
  const auto b = run({"waves", "--config", copy.string(), "--out", dir.string()});
  REQUIRE(b.code == 0);
  CHECK(first_line_path(b.out) == run_dir);
  CHECK(slurp(run_dir / "waves.csv") == csv);
  CHECK(!fs::exists(run_dir / "waves.csv.tmp"));
}

TEST_CASE("config round-trips through its canonical text") {
  for (const std::string sub : {"waves", "grf", "poisson1d", "poisson2d", "katrate", "hessian", "convert", "selftest"})
    for (const std::string net : {"kan", "mlp"})
      for (bool full : {false, true}) {
        if ((sub == "katrate" || sub == "hessian" || sub == "convert" || sub == "selftest") && (net == "mlp" || full))
          continue;
        const auto c = cli::default_config(sub, net, full);
        auto again = cli::default_config(sub, net, full);
        cli::merge_config(again, json::parse(cli::canonical(c)));
        CHECK(cli::canonical(again) == cli::canonical(c));
        CHECK(json::parse(cli::canonical(c)) == json(c));
      }
  auto w = cli::default_config("waves", "kan", false);
  cli::merge_config(w, json{{"lr", 0.1 + 0.2}});
  CHECK(json::parse(cli::canonical(w))["lr"].get<double>() == 0.1 + 0.2);
}

TEST_CASE("flags override the config file") {
  const auto dir = scratch("override");
  spit(dir / "c.json", R"({"steps": 7, "runs": 1, "grid": 5, "freqs": [5]})");
  const auto r = run({"waves", "--config", (dir / "c.json").string(), "--steps", "3", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto m = json::parse(slurp(first_line_path(r.out) / "manifest.json"));
  CHECK(m["config"]["steps"] == 3);
  CHECK(m["config"]["runs"] == 1);
  CHECK(m["config"]["freqs"] == json::array({5.0}));
}

TEST_CASE("presets follow net and scale") {
  CHECK(cli::default_config("waves", "mlp", false)["shape"] == json::array({1, 256, 256, 256, 1}));
  CHECK(cli::default_config("waves", "kan", true)["steps"] == 8000);
  CHECK(cli::default_config("grf", "kan", true)["points"] == 5000);
  CHECK(cli::default_config("poisson1d", "mlp", false)["iterations"] == 200);
}

TEST_CASE("invalid configurations exit with 2") {
  const auto dir = scratch("invalid");
  CHECK(run({"nonsense"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"waves", "--bogus", "1"}).code == 2);
  CHECK(run({"waves", "--steps", "2.5"}).code == 2);
  CHECK(run({"waves", "--net", "cnn"}).code == 2);
  CHECK(run({"waves", "--amplitudes", "loud", "--out", dir.string()}).code == 2);
  spit(dir / "bad.json", R"({"stepz": 3})");
  const auto r = run({"waves", "--config", (dir / "bad.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("unknown config key: stepz") != std::string::npos);
  spit(dir / "broken.json", "{");
  CHECK(run({"waves", "--config", (dir / "broken.json").string()}).code == 2);
  CHECK(run({"waves", "--config", (dir / "missing.json").string()}).code == 2);
  CHECK(run({"convert", "--direction", "mlp2kan"}).code == 2);
  CHECK(run({"katrate", "--target", "cosine", "--out", dir.string()}).code == 2);
  CHECK(run({"hessian", "--d", "0", "--out", dir.string()}).code == 2);
}

TEST_CASE("numerical failures exit with 3") {
  const auto dir = scratch("numerical");
  const auto r = run({"poisson1d", "--lambda", "1e308", "--ks", "2", "--iterations", "1", "--grids", "5",
                      "--points", "50", "--out", dir.string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("error=numerical") != std::string::npos);
}

TEST_CASE("convert both directions with verification") {
  const auto dir = scratch("convert");
  const auto mlp = models::init_mlp({2, 5, 1}, 2, 3, models::MlpInit::FanIn);
  spit(dir / "mlp.json", models::to_json(mlp));
  const auto a = run({"convert", "--direction", "mlp2kan", "--in", (dir / "mlp.json").string(), "--out",
                      (dir / "kan.json").string(), "--domain=-1,1", "--verify", "300"});
  REQUIRE(a.code == 0);
  const auto ra = json::parse(a.out);
  CHECK(ra["verify"]["points"] == 300);
  CHECK(ra["verify"]["max_rel"].get<double>() <= 1e-8);
  CHECK(models::model_kind(slurp(dir / "kan.json")) == "kan");

  auto kan = models::init_kan({2, 3, 1}, 4, 2, 8);
  for (auto& l : kan.layers)
    for (auto& act : l.acts) act.w_b = 0.0;
  spit(dir / "k.json", models::to_json(kan));
  const auto b = run({"convert", "--direction", "kan2mlp", "--in", (dir / "k.json").string(), "--out",
                      (dir / "m.json").string(), "--domain", "[[-1,1],[-0.5,2]]"});
  REQUIRE(b.code == 0);
  CHECK(json::parse(b.out)["verify"]["max_rel"].get<double>() <= 1e-8);
  CHECK(models::model_kind(slurp(dir / "m.json")) == "mlp");

  // Nonzero base weights have no exact MLP form.
  spit(dir / "kb.json", models::to_json(models::init_kan({1, 2, 1}, 4, 2, 8)));
  CHECK(run({"convert", "--direction", "kan2mlp", "--in", (dir / "kb.json").string(), "--out",
             (dir / "x.json").string()})
            .code == 2);
  CHECK(run({"convert", "--direction", "kan2mlp", "--in", (dir / "mlp.json").string(), "--out",
             (dir / "x.json").string()})
            .code == 2);
}

TEST_CASE("katrate and small experiment runs write their CSVs") {
  const auto dir = scratch("runs");
  const auto k = run({"katrate", "--degrees", "1,3", "--out", dir.string()});
  REQUIRE(k.code == 0);
  CHECK(slurp(first_line_path(k.out) / "katrate.csv").rfind("degree,G,sup_error\n", 0) == 0);
  const auto s = json::parse(slurp(first_line_path(k.out) / "summary.json"));
  CHECK(s["3"]["slope"].get<double>() <= -3.7);

  const auto g = run({"grf", "--points", "60", "--grids", "3,6", "--iterations", "4", "--out", dir.string()});
  REQUIRE(g.code == 0);
  CHECK(slurp(first_line_path(g.out) / "grf.csv").rfind("phase_grid,iteration,train_loss,test_loss\n", 0) == 0);

  const auto p = run({"poisson2d", "--points", "9", "--iterations", "2", "--ks", "1,2", "--grids", "4", "--jobs", "2",
                      "--out", dir.string()});
  REQUIRE(p.code == 0);
  CHECK(slurp(first_line_path(p.out) / "poisson.csv").rfind("k,iteration,loss,rel_l2,rel_h1\n", 0) == 0);
}
