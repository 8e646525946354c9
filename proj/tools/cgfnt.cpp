// cgfnt command-line front end: test | calibrate | power | verify.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgfnt/cgfnt.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitFailedChecks = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

// JSON has no infinity; a degenerate sample reports its statistic as null.
ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

struct CalibrationArgs {
  std::string path;
  double radius = 3.0;
  std::size_t n_points = 500;
  std::size_t s_reps = 10'000;
  std::uint64_t seed = 1;
};

void add_calibration_options(CLI::App* cmd, CalibrationArgs& a) {
  cmd->add_option("--R", a.radius, "Radius of the evaluation ball")->capture_default_str();
  cmd->add_option("--N", a.n_points, "Number of evaluation points")->capture_default_str();
  cmd->add_option("--S", a.s_reps, "Null replications")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Calibration seed (points and null draws)")->capture_default_str();
}

cgfnt::NullCalibration calibrate(std::size_t n, std::size_t p, const CalibrationArgs& a, unsigned threads) {
  const auto pts = cgfnt::sample_ball_points(p, a.n_points, a.radius, a.seed);
  return cgfnt::calibrate_null(n, p, pts, a.s_reps, a.seed, threads);
}

ordered_json calibration_summary(const cgfnt::NullCalibration& cal) {
  ordered_json j;
  j["kind"] = cgfnt::to_string(cal.kind);
  j["n"] = cal.n;
  j["p"] = cal.p;
  j["R"] = cal.point_set.radius;
  j["N"] = cal.point_set.size();
  j["S"] = cal.s_reps;
  j["seed"] = cal.seed;
  j["mean_h"] = cal.mean_h;
  j["sd_h"] = cal.sd_h;
  j["mean_d"] = cal.mean_d;
  j["sd_d"] = cal.sd_d;
  j["critical_value_05"] = cgfnt::critical_value(cal, 0.05);
  j["redraws"] = cal.redraws;
  return j;
}

int cmd_test(const std::string& input, bool header, const CalibrationArgs& ca, double alpha, bool univariate,
             unsigned threads) {
  const cgfnt::SampleMatrix x = cgfnt::parse_sample_csv(input, header);
  if (univariate && x.p() != 1) throw cgfnt::InvalidInput("--univariate needs a single-column sample");
  const bool uni = univariate || x.p() == 1;
  cgfnt::NullCalibration cal;
  if (!ca.path.empty()) {
    cal = cgfnt::read_calibration(ca.path);
  } else {
    cal = calibrate(x.n(), x.p(), ca, threads);
  }
  const cgfnt::TestResult r =
      uni ? cgfnt::run_test_univariate(x.data().col(0), cal, alpha) : cgfnt::run_test(x, cal, alpha, threads);

  ordered_json j;
  j["statistic"] = number_or_null(r.statistic);
  j["p_value"] = r.p_value;
  j["reject"] = r.reject;
  j["alpha"] = r.alpha;
  j["n"] = x.n();
  j["p"] = x.p();
  j["R"] = cal.point_set.radius;
  j["N"] = cal.point_set.size();
  j["S"] = cal.s_reps;
  j["seed"] = cal.seed;
  j["test"] = uni ? "U" : "T";
  if (r.components) {
    j["components"] = {{"h", r.components->h_stat},
                       {"d", r.components->d_stat},
                       {"studentized", {r.components->studentized_h, r.components->studentized_d}}};
  } else {
    j["components"] = nullptr;
  }
  j["degenerate_covariance"] = r.degenerate_covariance;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_calibrate(std::size_t n, std::size_t p, const CalibrationArgs& ca, const std::string& out, unsigned threads) {
  const auto cal = calibrate(n, p, ca, threads);
  cgfnt::write_calibration(cal, out);
  ordered_json j = calibration_summary(cal);
  j["file"] = out;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

std::vector<cgfnt::TestKind> parse_tests(const std::string& list, std::size_t p) {
  if (list.empty()) return cgfnt::default_tests(p);
  std::vector<cgfnt::TestKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(cgfnt::parse_test_kind(item));
  }
  return out;
}

int cmd_power(const std::string& spec_text, std::size_t n, std::size_t reps, double alpha, const CalibrationArgs& ca,
              std::uint64_t seed, const std::string& tests, const std::string& format, bool timing,
              unsigned threads) {
  cgfnt::PowerStudyConfig cfg;
  cfg.spec = cgfnt::parse_distribution(spec_text);
  const std::size_t p = cgfnt::dimension(cfg.spec);
  cfg.n = n;
  cfg.replications = reps;
  cfg.alpha = alpha;
  cfg.radius = ca.radius;
  cfg.n_points = ca.n_points;
  cfg.s_reps = ca.s_reps;
  cfg.calibration_seed = ca.seed;
  cfg.tests = parse_tests(tests, p);
  cfg.master_seed = seed;
  cfg.threads = threads;
  cgfnt::validate(cfg);

  cgfnt::NullCalibration cal = ca.path.empty() ? cgfnt::calibrate_for(cfg) : cgfnt::read_calibration(ca.path);
  std::optional<cgfnt::CompetitorCalibration> comp;
  for (auto k : cfg.tests) {
    if (cgfnt::needs_competitor_calibration(k)) {
      comp = cgfnt::calibrate_competitors(n, p, cfg.s_reps, cfg.calibration_seed, threads);
      break;
    }
  }
  const auto res = cgfnt::power_study(cfg, cal, comp ? &*comp : nullptr);

  if (format == "csv") {
    std::cout << "spec,n,p,test,rejection,se,replications,degenerate\n";
    const std::string canon = cgfnt::to_string(cfg.spec);
    for (const auto& r : res.rejections) {
      std::cout << '"' << canon << "\"," << n << ',' << p << ',' << cgfnt::to_string(r.test) << ','
                << ordered_json(r.proportion).dump() << ',' << ordered_json(r.se).dump() << ',' << res.replications
                << ',' << res.degenerate << '\n';
    }
    return kExitOk;
  }
  ordered_json j;
  j["spec"] = cgfnt::to_string(cfg.spec);
  j["n"] = n;
  j["p"] = p;
  j["alpha"] = alpha;
  j["replications"] = res.replications;
  j["calibration"] = {{"R", cal.point_set.radius}, {"N", cal.point_set.size()}, {"S", cal.s_reps}, {"seed", cal.seed}};
  j["seed"] = seed;
  ordered_json rows = ordered_json::array();
  for (const auto& r : res.rejections) {
    rows.push_back({{"test", cgfnt::to_string(r.test)}, {"rejection", r.proportion}, {"se", r.se}});
  }
  j["results"] = rows;
  j["degenerate_covariance_count"] = res.degenerate;
  j["energy_mc_fallbacks"] = res.energy_fallbacks;
  if (timing) j["wall_seconds"] = res.wall_seconds;
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_verify(bool quick, std::uint64_t seed, const std::string& out, bool timing, unsigned threads) {
  cgfnt::VerifyOptions opt;
  opt.quick = quick;
  opt.seed = seed;
  opt.threads = threads;
  const auto rep = cgfnt::run_verify_suite(opt);
  ordered_json j;
  j["quick"] = rep.quick;
  j["seed"] = rep.seed;
  j["passed"] = rep.passed();
  ordered_json checks = ordered_json::array();
  for (const auto& c : rep.checks) {
    ordered_json m = ordered_json::object();
    for (const auto& [k, v] : c.metrics) m[k] = number_or_null(v);
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"metrics", m}});
  }
  j["checks"] = checks;
  if (timing) j["wall_seconds"] = rep.wall_seconds;
  const std::string text = j.dump(2);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw cgfnt::InvalidInput("cannot write '" + out + "'");
    f << text << '\n';
  }
  std::cout << text << '\n';
  return rep.passed() ? kExitOk : kExitFailedChecks;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Normality tests based on Hessians of empirical cumulant generating functions"};
  app.require_subcommand(1);
  app.fallthrough();  // --threads may also follow the subcommand
  unsigned threads = cgfnt::default_threads();
  app.add_option("--threads", threads,
                 std::string("Worker threads (default: $") + cgfnt::kThreadsEnv + " or hardware concurrency)");

  CalibrationArgs test_cal;
  std::string input;
  bool header = false;
  double alpha = 0.05;
  bool univariate = false;
  auto* test = app.add_subcommand("test", "Test one CSV sample for normality");
  test->add_option("--input", input, "CSV file, one observation per row")->required();
  test->add_flag("--header", header, "Skip the first row");
  test->add_option("--calibration", test_cal.path, "Calibration file from 'calibrate'");
  add_calibration_options(test, test_cal);
  test->add_option("--alpha", alpha, "Level")->capture_default_str();
  test->add_flag("--univariate", univariate, "Use the univariate statistic (single-column input)");

  CalibrationArgs cal_args;
  std::size_t cal_n = 0, cal_p = 0;
  std::string cal_out;
  auto* calib = app.add_subcommand("calibrate", "Simulate the null distribution and write a calibration file");
  calib->add_option("--n", cal_n, "Sample size")->required();
  calib->add_option("--p", cal_p, "Dimension")->required();
  add_calibration_options(calib, cal_args);
  calib->add_option("--out", cal_out, "Output path")->required();

  CalibrationArgs pow_cal;
  std::string spec_text, tests, format = "json";
  std::size_t pow_n = 50, reps = 2000;
  double pow_alpha = 0.05;
  std::uint64_t pow_seed = 1;
  bool pow_timing = false;
  auto* power = app.add_subcommand("power", "Empirical rejection rates under a distribution");
  power->add_option("--spec", spec_text, "Distribution, e.g. product:uniform(0,1):p=3")->required();
  power->add_option("--n", pow_n, "Sample size")->capture_default_str();
  power->add_option("--reps", reps, "Replications")->capture_default_str();
  power->add_option("--alpha", pow_alpha, "Level")->capture_default_str();
  add_calibration_options(power, pow_cal);
  power->add_option("--calibration", pow_cal.path, "Calibration file (otherwise simulated from --R/--N/--S/--seed)");
  power->add_option("--sample-seed", pow_seed, "Seed for the replicated samples")->capture_default_str();
  power->add_option("--tests", tests, "Comma-separated subset of T,H,D,U,EN,MS,MK");
  power->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  power->add_flag("--timing", pow_timing, "Include wall-clock time in the output");

  bool quick = false, ver_timing = false;
  std::uint64_t ver_seed = 1;
  std::string ver_out;
  auto* verify = app.add_subcommand("verify", "Numerical checks of the first-order theory");
  verify->add_flag("--quick", quick, "Reduced suite");
  verify->add_option("--seed", ver_seed, "Seed")->capture_default_str();
  verify->add_option("--out", ver_out, "Also write the JSON report here");
  verify->add_flag("--timing", ver_timing, "Include wall-clock time in the output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }
  if (threads == 0) threads = 1;

  try {
    if (*test) return cmd_test(input, header, test_cal, alpha, univariate, threads);
    if (*calib) return cmd_calibrate(cal_n, cal_p, cal_args, cal_out, threads);
    if (*power) {
      return cmd_power(spec_text, pow_n, reps, pow_alpha, pow_cal, pow_seed, tests, format, pow_timing, threads);
    }
    if (*verify) return cmd_verify(quick, ver_seed, ver_out, ver_timing, threads);
  } catch (const cgfnt::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const cgfnt::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const cgfnt::CorruptCalibration& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const cgfnt::NumericLimit& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const cgfnt::SingularCovariance& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitInput;
}
