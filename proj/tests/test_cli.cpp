// End-to-end command-line checks: the binary is driven as a subprocess and
// judged only on its files, stdout, and exit codes.

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const char* kBin = BHPORT_BIN;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_dir() {
  static int counter = 0;
  std::string dir = "/tmp/bhport_cli_" + std::to_string(getpid()) + "_" +
                    std::to_string(counter++);
  fs::create_directories(dir);
  return dir;
}

RunResult run_cli(const std::string& args) {
  const std::string dir = temp_dir();
  const std::string out_path = dir + "/stdout.txt";
  const std::string err_path = dir + "/stderr.txt";
  const std::string cmd = std::string(kBin) + " " + args + " >" + out_path +
                          " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

// Splits a forecast CSV printed by `predict` into per-asset (lower, upper).
std::vector<std::pair<double, double>> interval_rows(const std::string& csv) {
  std::vector<std::pair<double, double>> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 5);
    out.emplace_back(std::stod(cells[3]), std::stod(cells[4]));
  }
  return out;
}

}  // namespace

TEST_CASE("pipeline: generate, fit, predict, diagnose, backtest") {
  const std::string gen = temp_dir();
  RunResult g = run_cli("generate --out " + gen +
                        " --n 6 --p 1 --q 1 --months 40 --seed 2");
  REQUIRE(g.exit_code == 0);
  CHECK(g.out.find("generated 6 assets x 40 months") != std::string::npos);
  for (const char* name : {"returns.csv", "characteristics.csv", "macros.csv",
                           "truth.json", "config_used.json"}) {
    CHECK(fs::exists(gen + "/" + name));
  }
  CHECK(slurp(gen + "/returns.csv").rfind("date,asset,excess_return\n", 0) == 0);

  // Same seed, same bytes; the generator is a pure function of its flags.
  const std::string gen2 = temp_dir();
  RunResult g2 = run_cli("generate --out " + gen2 +
                         " --n 6 --p 1 --q 1 --months 40 --seed 2");
  REQUIRE(g2.exit_code == 0);
  CHECK(slurp(gen + "/returns.csv") == slurp(gen2 + "/returns.csv"));
  CHECK(slurp(gen + "/macros.csv") == slurp(gen2 + "/macros.csv"));

  const std::string inputs = " --returns " + gen + "/returns.csv --chars " +
                             gen + "/characteristics.csv --macros " + gen +
                             "/macros.csv";

  const std::string fit1 = temp_dir();
  RunResult f = run_cli("fit" + inputs + " --out " + fit1 +
                        " --iterations 300 --burn 100 --seed 4");
  REQUIRE(f.exit_code == 0);
  CHECK(f.out.find("fit complete: 200 retained draws") != std::string::npos);
  nlohmann::json model = nlohmann::json::parse(slurp(fit1 + "/model.json"));
  CHECK(model.at("format") == "bhport-model-v1");
  CHECK(slurp(fit1 + "/trace.csv").rfind("iteration,parameter,value\n", 0) == 0);
  nlohmann::json diag = nlohmann::json::parse(slurp(fit1 + "/diagnostics.json"));
  CHECK(diag.contains("min_ess_ratio"));

  const std::string fit2 = temp_dir();
  RunResult f2 = run_cli("fit" + inputs + " --out " + fit2 +
                         " --iterations 300 --burn 100 --seed 4");
  REQUIRE(f2.exit_code == 0);
  CHECK(slurp(fit1 + "/model.json") == slurp(fit2 + "/model.json"));

  const std::string pred = temp_dir();
  RunResult p = run_cli("predict --model " + fit1 + "/model.json" + inputs +
                        " --out " + pred);
  REQUIRE(p.exit_code == 0);
  CHECK(p.out.rfind("date,asset,forecast,lower,upper\n", 0) == 0);
  // Panel spans 1995-01..1998-04; the forecast targets the following month.
  CHECK(p.out.find("1998-05,") != std::string::npos);
  CHECK(slurp(pred + "/forecast.csv") == p.out);

  RunResult p_mid = run_cli("predict --model " + fit1 + "/model.json" + inputs +
                            " --date 1997-06");
  REQUIRE(p_mid.exit_code == 0);
  CHECK(p_mid.out.find("1997-07,") != std::string::npos);

  // Parameter-only intervals are never wider than total-covariance intervals.
  RunResult p_param = run_cli("predict --model " + fit1 + "/model.json" +
                              inputs + " --param-only");
  REQUIRE(p_param.exit_code == 0);
  auto total = interval_rows(p.out);
  auto param = interval_rows(p_param.out);
  REQUIRE(total.size() == 6);
  REQUIRE(param.size() == 6);
  for (std::size_t i = 0; i < total.size(); ++i) {
    CHECK(param[i].second - param[i].first <=
          total[i].second - total[i].first + 1e-12);
  }

  const std::string diag_dir = temp_dir();
  RunResult d = run_cli("diagnose --trace " + fit1 + "/trace.csv --out " +
                        diag_dir);
  REQUIRE(d.exit_code == 0);
  nlohmann::json dj = nlohmann::json::parse(slurp(diag_dir + "/diagnostics.json"));
  CHECK(dj.at("format") == "bhport-diagnostics-v1");
  CHECK(dj.at("n_draws") == 200);

  const std::string bt_ew = temp_dir();
  RunResult b = run_cli("backtest" + inputs + " --out " + bt_ew +
                        " --strategy ew --window 24");
  REQUIRE(b.exit_code == 0);
  nlohmann::json rj = nlohmann::json::parse(slurp(bt_ew + "/report.json"));
  CHECK(rj.at("format") == "bhport-backtest-v1");
  CHECK(rj.at("strategy") == "equal_weight");
  CHECK(rj.at("months").size() == 16);
  for (const char* name :
       {"report.json", "weights.csv", "cumulative.csv", "forecasts.csv",
        "config_used.json"}) {
    CHECK(fs::exists(bt_ew + "/" + name));
  }

  const std::string bt_bh = temp_dir();
  RunResult bb = run_cli("backtest" + inputs + " --out " + bt_bh +
                         " --strategy bh --window 24 --iterations 150 "
                         "--burn 50 --seed 3 --jobs 2");
  REQUIRE(bb.exit_code == 0);
  nlohmann::json rbh = nlohmann::json::parse(slurp(bt_bh + "/report.json"));
  CHECK(rbh.at("strategy") == "bh");
  CHECK(rbh.at("fit_windows").size() == 2);
  CHECK(rbh.at("overall").at("r2_oos").is_number());
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli("").exit_code == 2);                       // missing subcommand
  CHECK(run_cli("conquer").exit_code == 2);                // unknown subcommand
  CHECK(run_cli("generate").exit_code == 2);               // missing --out
  CHECK(run_cli("generate --out /tmp/x --bogus 1").exit_code == 2);
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("fit --help").exit_code == 0);

  // Domain errors in flag values are configuration errors, not crashes.
  const std::string gen = temp_dir();
  CHECK(run_cli("generate --out " + gen + " --months 10").exit_code == 2);
  CHECK(run_cli("generate --out " + gen + " --n 6 --months 40 --start 1995-13")
            .exit_code == 2);
}

TEST_CASE("missing or malformed inputs exit with code 3") {
  RunResult r = run_cli(
      "fit --returns /nonexistent/r.csv --chars /nonexistent/c.csv "
      "--macros /nonexistent/m.csv --out /tmp/bhport_cli_never");
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("ERROR") != std::string::npos);

  const std::string dir = temp_dir();
  std::ofstream(dir + "/model.json") << "{\"format\":\"wrong\"}";
  RunResult bad = run_cli("predict --model " + dir +
                          "/model.json --returns /tmp/x --chars /tmp/y "
                          "--macros /tmp/z");
  CHECK(bad.exit_code == 3);
}

TEST_CASE("config files apply beneath explicit flags") {
  const std::string gen = temp_dir();
  REQUIRE(run_cli("generate --out " + gen +
                  " --n 5 --p 1 --q 1 --months 30 --seed 6")
              .exit_code == 0);
  const std::string inputs = " --returns " + gen + "/returns.csv --chars " +
                             gen + "/characteristics.csv --macros " + gen +
                             "/macros.csv";

  const std::string dir = temp_dir();
  std::ofstream(dir + "/cfg.json")
      << "{\"seed\": 5, \"sampler\": {\"n_total\": 160, \"n_burn\": 40}}";

  const std::string out = temp_dir();
  RunResult r = run_cli("fit" + inputs + " --out " + out + " --config " + dir +
                        "/cfg.json --seed 9");
  REQUIRE(r.exit_code == 0);
  nlohmann::json used = nlohmann::json::parse(slurp(out + "/config_used.json"));
  CHECK(used.at("sampler").at("n_total") == 160);  // from the config file
  CHECK(used.at("sampler").at("n_burn") == 40);
  CHECK(used.at("sampler").at("seed") == 9);       // flag beats config

  std::ofstream(dir + "/bad_type.json")
      << "{\"sampler\": {\"n_total\": \"lots\"}}";
  CHECK(run_cli("fit" + inputs + " --out " + out + " --config " + dir +
                "/bad_type.json")
            .exit_code == 2);
  std::ofstream(dir + "/broken.json") << "{ nope";
  CHECK(run_cli("fit" + inputs + " --out " + out + " --config " + dir +
                "/broken.json")
            .exit_code == 2);
}

TEST_CASE("--quiet suppresses progress logging") {
  const std::string gen = temp_dir();
  REQUIRE(run_cli("generate --out " + gen +
                  " --n 5 --p 1 --q 1 --months 30 --seed 8")
              .exit_code == 0);
  const std::string inputs = " --returns " + gen + "/returns.csv --chars " +
                             gen + "/characteristics.csv --macros " + gen +
                             "/macros.csv";
  const std::string sampler = " --iterations 120 --burn 20";

  RunResult loud = run_cli("fit" + inputs + " --out " + temp_dir() + sampler);
  REQUIRE(loud.exit_code == 0);
  CHECK(loud.err.find("INFO") != std::string::npos);

  RunResult quiet =
      run_cli("--quiet fit" + inputs + " --out " + temp_dir() + sampler);
  REQUIRE(quiet.exit_code == 0);
  CHECK(quiet.err.find("INFO") == std::string::npos);

  // The flag is also accepted after the subcommand name.
  RunResult quiet2 =
      run_cli("fit --quiet" + inputs + " --out " + temp_dir() + sampler);
  REQUIRE(quiet2.exit_code == 0);
  CHECK(quiet2.err.find("INFO") == std::string::npos);
}
