#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unistd.h>

#include "mesokappa/cli.hpp"

using namespace mesokappa::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mesokappa_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_CASE("config round trip") {
  RunConfig c;
  c.kernel = "root-eta";
  c.out_dir = "some dir/with spaces";
  c.seed = 18446744073709551557ULL;
  c.sim.T = 1.0 / 3.0;
  c.sim.t_max = 0.1;
  c.quadrature.abs_tol = 1e-300;
  c.check_tolerance = std::nextafter(1e-9, 1.0);
  c.event_log = true;

  std::istringstream in(to_ini(c));
  RunConfig back;
  apply_ini(back, in);
  CHECK(back == c);
  CHECK(back.sim.T == c.sim.T);
  CHECK(back.quadrature.abs_tol == c.quadrature.abs_tol);
  CHECK(back.check_tolerance == c.check_tolerance);
  CHECK(back.out_dir == c.out_dir);
  CHECK(back.seed == c.seed);
  CHECK(to_ini(back) == to_ini(c));

  CHECK(to_json(c)["simulation"]["T"].get<double>() == c.sim.T);
}

TEST_CASE("config errors and overrides") {
  RunConfig c;
  std::istringstream unknown("[simulation]\nwidth = 3\n");
  CHECK_THROWS_AS(apply_ini(c, unknown), ConfigError);
  std::istringstream bad("[simulation]\nN = many\n");
  CHECK_THROWS_AS(apply_ini(c, bad), ConfigError);
  std::istringstream partial("[simulation]\nN = 12\n");
  apply_ini(c, partial);
  CHECK(c.sim.N == 12);
  CHECK(c.sim.replicas == RunConfig().sim.replicas);

  apply_setting(c, "variational.degree=4");
  CHECK(c.degree == 4);
  CHECK_THROWS_AS(apply_setting(c, "degree=4"), ConfigError);

  TempDir dir("cfg");
  {
    std::ofstream f(dir.path / "run.ini");
    f << "[general]\nkernel = uniform\nseed = 3\n[simulation]\nT = 4\n";
  }
  const auto r = call({"--config", (dir.path / "run.ini").string(), "--seed", "9", "--dump-config", "simulate",
                       "--T", "0.25"});
  REQUIRE(r.code == kOk);
  RunConfig dumped;
  std::istringstream din(r.out);
  apply_ini(dumped, din);
  CHECK(dumped.kernel == "uniform");
  CHECK(dumped.seed == 9);
  CHECK(dumped.sim.T == 0.25);
}

TEST_CASE("usage errors exit with 2") {
  TempDir dir("usage");
  CHECK(call({}).code == kUsage);
  CHECK(call({"kernel-check", "--kernel", "nope", "--out-dir", dir.str()}).code == kUsage);
  CHECK(call({"static", "--kernel", "broken-alpha", "--out-dir", dir.str()}).code == kUsage);
  CHECK(call({"simulate", "--estimator", "fast", "--out-dir", dir.str()}).code == kUsage);
  CHECK(call({"static", "--format", "xml", "--out-dir", dir.str()}).code == kUsage);
  CHECK(call({"--config", (dir.path / "absent.ini").string(), "static"}).code == kUsage);
  // The ring is too short for the requested lag window.
  CHECK(call({"simulate", "--N", "8", "--out-dir", dir.str()}).code == kUsage);
}

TEST_CASE("kernel-check") {
  TempDir dir("check");
  for (const auto* k : {"gg3", "uniform"}) {
    CAPTURE(k);
    CHECK(call({"kernel-check", "--kernel", k, "--out-dir", dir.str()}).code == kOk);
  }
  const auto r = call({"kernel-check", "--kernel", "broken-alpha", "--out-dir", dir.str()});
  CHECK(r.code == kVerdictFailure);
  CHECK(r.err.find("condition (ii)") != std::string::npos);
  const auto j = load(dir.path / "broken-alpha" / "kernel-check.json");
  CHECK_FALSE(j["pass"].get<bool>());
  CHECK_FALSE(j["conditions"]["ii"]["pass"].get<bool>());
  CHECK(j["conditions"]["i"]["pass"].get<bool>());
  CHECK(j["failed"][0] == "ii");
  CHECK(j["version"] == kVersion);
  CHECK(j["config"]["general"]["kernel"] == "broken-alpha");
}

TEST_CASE("static summaries") {
  TempDir dir("static");
  const auto g = call({"static", "--kernel", "gg3", "--out-dir", dir.str()});
  REQUIRE(g.code == kOk);
  const auto gj = json::parse(g.out);
  CHECK(gj == load(dir.path / "gg3" / "static.json"));
  for (const auto* q : {"kappa_f", "kappa_1", "kappa_2", "kappa_s"}) CHECK(std::abs(gj[q]["value"].get<double>() - 1.0) < 1e-6);
  CHECK_FALSE(gj["gradient"]["holds"].get<bool>());
  CHECK(gj["equalities"]["condition_3_4"].get<bool>());
  CHECK(g.err.find("gradient condition: fails") != std::string::npos);

  const auto r = call({"static", "--kernel", "root-eta", "--out-dir", dir.str()});
  REQUIRE(r.code == kOk);
  const auto rj = json::parse(r.out);
  CHECK(std::abs(rj["kappa_s"]["value"].get<double>() - 0.75 * std::sqrt(std::numbers::pi)) < 1e-8);
  CHECK(rj["gradient"]["holds"].get<bool>());
  CHECK(std::abs(rj["gradient"]["C"].get<double>() - 2.0 / 3.0) < 1e-6);

  const auto u = call({"static", "--kernel", "uniform", "--out-dir", dir.str(), "--format", "csv"});
  REQUIRE(u.code == kOk);
  CHECK(u.out == slurp(dir.path / "uniform" / "static.csv"));
  CHECK(u.out.rfind("kernel,d,kappa_f,", 0) == 0);
  const auto uj = load(dir.path / "uniform" / "static.json");
  CHECK(std::abs(uj["kappa_f"]["value"].get<double>() - 0.75 * std::sqrt(std::numbers::pi)) < 1e-6);
  CHECK(std::abs(uj["kappa_1"]["value"].get<double>() - 0.9693106997) < 1e-6);
  CHECK_FALSE(uj["equalities"]["kappa_f=kappa_s"].get<bool>());
  CHECK_FALSE(uj["equalities"]["condition_3_4"].get<bool>());
  CHECK(uj["equalities"]["kappa_s=kappa_1=kappa_2"].get<bool>());
}

TEST_CASE("quadrature failure exits with 3 and keeps a flagged report") {
  TempDir dir("nonconv");
  const auto r = call({"static", "--kernel", "gg2", "--set", "quadrature.max_subdivisions=2", "--out-dir", dir.str()});
  CHECK(r.code == kNonConvergence);
  const auto j = load(dir.path / "gg2" / "static.json");
  CHECK_FALSE(j["converged"].get<bool>());
}

TEST_CASE("simulate is byte-reproducible") {
  TempDir a("sim_a"), b("sim_b");
  auto args = [](const TempDir& d) {
    return std::vector<std::string>{"simulate", "--kernel", "gg3", "--seed", "7", "--N", "64", "--replicas", "8",
                                    "--t-max", "30", "--event-log", "--out-dir", d.str()};
  };
  const auto ra = call(args(a));
  const auto rb = call(args(b));
  REQUIRE(ra.code == kOk);
  REQUIRE(rb.code == kOk);
  auto ja = json::parse(ra.out);
  auto jb = json::parse(rb.out);
  ja["config"]["general"].erase("out_dir");
  jb["config"]["general"].erase("out_dir");
  CHECK(ja == jb);
  const auto ta = slurp(a.path / "gg3" / "trajectory.jsonl");
  CHECK_FALSE(ta.empty());
  CHECK(ta == slurp(b.path / "gg3" / "trajectory.jsonl"));
  CHECK(slurp(a.path / "gg3" / "events.bin") == slurp(b.path / "gg3" / "events.bin"));
  CHECK(fs::file_size(a.path / "gg3" / "events.bin") % 20 == 0);

  std::istringstream lines(ta);
  std::string line;
  std::getline(lines, line);
  const auto first = json::parse(line);
  CHECK(first["replica"] == 0);
  CHECK(first["t"] == 0.0);
  CHECK(first["Q_tot"] == 0.0);
  CHECK(first.contains("energy"));
}

TEST_CASE("report needs its inputs") {
  TempDir dir("missing");
  const auto r = call({"report", "--kernel", "gg3", "--out-dir", dir.str()});
  CHECK(r.code == kMissingInput);
  CHECK(r.err.find("mesokappa static --kernel gg3") != std::string::npos);
  CHECK(r.err.find("mesokappa simulate --kernel gg3") != std::string::npos);
}

TEST_CASE("full pipeline verdicts") {
  TempDir dir("pipeline");
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"root-eta", "gradient kernel: κ = κ_s"}, {"gg3", "non-gradient: κ < κ_s"}};
  for (const auto& [kernel, verdict] : cases) {
    CAPTURE(kernel);
    const std::vector<std::string> common{"--kernel", kernel, "--out-dir", dir.str(), "--seed", "2"};
    auto with = [&common](std::vector<std::string> a) {
      a.insert(a.end(), common.begin(), common.end());
      return a;
    };
    REQUIRE(call(with({"static"})).code == kOk);
    REQUIRE(call(with({"variational", "--samples", "2000000"})).code == kOk);
    REQUIRE(call(with({"simulate", "--N", "128", "--replicas", "16", "--t-max", "60"})).code == kOk);
    const auto r = call(with({"report"}));
    CHECK(r.code == kOk);
    const auto j = json::parse(r.out);
    CHECK(j["verdict"] == verdict);
    CHECK(j["pass"].get<bool>());
    CHECK(j["upstream"]["variational"]["variational"]["samples"] == 2000000);

    const fs::path d = dir.path / kernel;
    const auto curve = slurp(d / "plot_kappa_var.csv");
    CHECK(curve.rfind("degree,basis_size,kappa_var,std_error,kappa_s\n", 0) == 0);
    CHECK(std::count(curve.begin(), curve.end(), '\n') == 4);
    const auto var = slurp(d / "plot_var_q.csv");
    CHECK(var.rfind("t,var_q_tot\n0,0\n", 0) == 0);
  }
}
