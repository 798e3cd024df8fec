#include "cli.hpp"

#include "markph/diagnostics.hpp"
#include "markph/estimator.hpp"
#include "markph/inference.hpp"
#include "markph/io.hpp"
#include "markph/numeric.hpp"
#include "markph/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace markph::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";

struct Options {
  std::optional<std::string> data;
  std::optional<std::string> config_path;
  std::optional<std::string> out_dir;
  std::optional<double> bandwidth;
  std::optional<std::vector<double>> interval;
  std::optional<std::size_t> grid;
  std::optional<std::vector<double>> grid_points;
  std::optional<std::string> kernel;
  std::optional<double> alpha;
  std::optional<std::size_t> resamples;
  std::optional<std::uint64_t> seed;
  std::optional<double> a1;
  std::optional<std::vector<double>> test_grid;
  std::optional<std::size_t> test_grid_count;
  std::optional<std::vector<double>> mark_range;
  std::optional<unsigned> threads;
  std::optional<std::string> method;
  std::optional<std::string> family;
  std::optional<std::string> model;
  std::optional<std::vector<double>> params;
  std::optional<std::size_t> n;
  std::optional<std::size_t> reps;
  std::optional<double> censoring;
};

template <class T>
void fill(std::optional<T>& slot, const json& value) {
  if (!slot) slot = value.get<T>();
}

// Config-file values fill only what the command line left unset.
void apply_config_file(Options& o) {
  if (!o.config_path) return;
  std::ifstream in(*o.config_path);
  if (!in) throw ConfigError("cannot open config " + *o.config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + *o.config_path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "data") fill(o.data, value);
      else if (key == "out") fill(o.out_dir, value);
      else if (key == "bandwidth") fill(o.bandwidth, value);
      else if (key == "interval") fill(o.interval, value);
      else if (key == "grid") fill(o.grid, value);
      else if (key == "grid_points") fill(o.grid_points, value);
      else if (key == "kernel") fill(o.kernel, value);
      else if (key == "alpha") fill(o.alpha, value);
      else if (key == "resamples") fill(o.resamples, value);
      else if (key == "seed") fill(o.seed, value);
      else if (key == "a1") fill(o.a1, value);
      else if (key == "test_grid") fill(o.test_grid, value);
      else if (key == "test_grid_count") fill(o.test_grid_count, value);
      else if (key == "mark_range") fill(o.mark_range, value);
      else if (key == "threads") fill(o.threads, value);
      else if (key == "method") fill(o.method, value);
      else if (key == "family") fill(o.family, value);
      else if (key == "model") fill(o.model, value);
      else if (key == "params") fill(o.params, value);
      else if (key == "n") fill(o.n, value);
      else if (key == "reps") fill(o.reps, value);
      else if (key == "censoring") fill(o.censoring, value);
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError("config " + *o.config_path + ": " + e.what());
  }
}

AnalysisConfig analysis_config(const Options& o) {
  AnalysisConfig cfg;
  if (o.bandwidth) cfg.bandwidth = *o.bandwidth;
  if (o.interval) {
    if (o.interval->size() != 2) throw ConfigError("--interval takes two values a b");
    cfg.a = (*o.interval)[0];
    cfg.b = (*o.interval)[1];
  }
  if (o.grid) cfg.grid_count = *o.grid;
  if (o.grid_points) cfg.grid_points = *o.grid_points;
  if (o.kernel) cfg.kernel = KernelSpec::from_name(*o.kernel);
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.resamples) cfg.resamples = *o.resamples;
  if (o.seed) cfg.seed = *o.seed;
  cfg.a1 = o.a1;
  if (o.test_grid) cfg.test_points = *o.test_grid;
  if (o.test_grid_count) cfg.test_grid_count = *o.test_grid_count;
  cfg.validate();
  return cfg;
}

unsigned thread_count(const Options& o) {
  return o.threads && *o.threads > 0 ? *o.threads : default_thread_count();
}

std::uint64_t require_seed(const Options& o) {
  if (!o.seed) throw ConfigError("--seed is required for resampling commands");
  return *o.seed;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Input {
  std::string path;
  std::string digest;
  Dataset data;
};

Input load_input(const Options& o) {
  if (!o.data) throw ConfigError("--data is required");
  Input input;
  input.path = *o.data;
  const std::string bytes = read_file(input.path);
  input.digest = sha256_hex(bytes);
  std::istringstream in(bytes);
  input.data = load_dataset(in);
  if (o.mark_range) {
    if (o.mark_range->size() != 2) throw ConfigError("--mark-range takes two values lo hi");
    input.data = rescale_marks(input.data, (*o.mark_range)[0], (*o.mark_range)[1]);
  }
  return input;
}

json config_json(const AnalysisConfig& cfg) {
  json j;
  j["bandwidth"] = cfg.bandwidth;
  j["interval"] = {cfg.a, cfg.b};
  j["grid"] = cfg.mark_grid();
  j["kernel"] = cfg.kernel.name();
  j["alpha"] = cfg.alpha;
  j["resamples"] = cfg.resamples;
  j["test_grid"] = cfg.test_grid();
  j["a1"] = cfg.resolved_a1();
  return j;
}

// Collects outputs and writes the run manifest.
class Run {
 public:
  Run(std::string command, const Options& o, std::ostream& out)
      : command_(std::move(command)),
        dir_(o.out_dir.value_or(".")),
        out_(out),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
  }

  std::ofstream open(const std::string& name) {
    const fs::path path = dir_ / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path.string());
    files_.push_back(name);
    return f;
  }

  void finish(const json& config, const std::optional<Input>& input,
              std::optional<std::uint64_t> seed) {
    json m;
    m["command"] = command_;
    m["config"] = config;
    if (input) m["input"] = {{"path", input->path}, {"sha256", input->digest}};
    if (seed) m["seed"] = *seed;
    m["versions"] = {{"markph", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                   std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"compiler", __VERSION__}};
    m["outputs"] = files_;
    m["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const fs::path path = dir_ / (command_ + "_manifest.json");
    std::ofstream f(path);
    f << m.dump(2) << '\n';
    out_ << "wrote";
    for (const auto& name : files_) out_ << ' ' << (dir_ / name).string();
    out_ << ' ' << path.string() << '\n';
  }

 private:
  std::string command_;
  fs::path dir_;
  std::ostream& out_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> files_;
};

void write_band(std::ostream& f, const Band& band) {
  f << "v,center,lower,upper,kind,level\n";
  const std::string kind = to_string(band.kind);
  for (std::size_t k = 0; k < band.v.size(); ++k) {
    f << format_double(band.v[k]) << ',' << format_double(band.center[k]) << ','
      << format_double(band.lower[k]) << ',' << format_double(band.upper[k]) << ',' << kind << ','
      << format_double(band.level) << '\n';
  }
}

std::string join_points(const std::vector<double>& points) {
  std::string s;
  for (double v : points) s += (s.empty() ? "" : ", ") + format_double(v);
  return s;
}

ProfileFit run_profile(const RiskSetIndex& index, const AnalysisConfig& cfg, const Options& o) {
  ProfileOptions options;
  options.threads = thread_count(o);
  return fit_profile(index, cfg, options);
}

int cmd_validate(const Options& o, std::ostream& out) {
  const Input input = load_input(o);
  const AnalysisConfig cfg = analysis_config(o);
  const ValidationReport report = validate(input.data, cfg);
  json j;
  j["subjects"] = report.subjects;
  j["events"] = report.events;
  j["censoring_fraction"] = report.censoring_fraction;
  j["windows"] = json::array();
  for (const auto& w : report.windows) j["windows"].push_back({{"v", w.v}, {"events", w.events_in_window}});
  j["flags"] = report.flags;
  j["ok"] = report.ok();
  out << j.dump(2) << '\n';
  return 0;
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
  const Input input = load_input(o);
  const AnalysisConfig cfg = analysis_config(o);
  const RiskSetIndex index(input.data);
  const ProfileFit profile = run_profile(index, cfg, o);
  const VarianceBundle variance = variance_bundle(profile, cfg.kernel);
  const std::size_t p = profile.p;
  const double scale = 1.0 / (static_cast<double>(profile.n) * profile.bandwidth);

  Run run("fit", o, out);
  {
    auto f = run.open("profile.csv");
    f << 'v';
    for (std::size_t k = 1; k <= p; ++k) f << ",beta" << k;
    for (std::size_t k = 1; k <= p; ++k) f << ",se" << k;
    for (std::size_t k = 1; k <= p; ++k) f << ",sigma" << k << k;
    f << ",iterations,status\n";
    for (std::size_t g = 0; g < profile.fits.size(); ++g) {
      const LocalFit& fit = profile.fits[g];
      const VariancePoint& vp = variance.points[g];
      f << format_double(fit.v);
      for (std::size_t k = 0; k < p; ++k) {
        f << ',' << (fit.converged ? format_double(fit.beta_hat[static_cast<Eigen::Index>(k)]) : "");
      }
      for (std::size_t k = 0; k < p; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        f << ',' << (vp.ok ? format_double(std::sqrt(vp.sigma1(kk, kk) * scale)) : "");
      }
      for (std::size_t k = 0; k < p; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        f << ',' << (vp.ok ? format_double(vp.sigma1(kk, kk)) : "");
      }
      f << ',' << fit.iterations << ',' << to_string(fit.status) << '\n';
    }
  }
  {
    const BaselineSurface baseline = baseline_surface(index, profile);
    auto f = run.open("baseline.csv");
    f << "time,mark,increment\n";
    for (const auto& j : baseline.jumps) {
      f << format_double(j.time) << ',' << format_double(j.mark) << ','
        << format_double(j.increment) << '\n';
    }
  }
  run.finish(config_json(cfg), input, std::nullopt);
  if (!profile.all_converged()) {
    err << "error: estimation failed at grid points " << join_points(profile.failed_points());
    for (const auto& fit : profile.fits) {
      if (!fit.converged) err << "\n  v=" << format_double(fit.v) << ": " << fit.message;
    }
    err << '\n';
    return 3;
  }
  return 0;
}

int cmd_bands(const Options& o, std::ostream& out) {
  const std::uint64_t seed = require_seed(o);
  const Input input = load_input(o);
  const AnalysisConfig cfg = analysis_config(o);
  const std::string method = o.method.value_or("bridge");
  if (method != "bridge" && method != "multiplier") {
    throw ConfigError("--method must be bridge or multiplier");
  }
  if (cfg.resamples < 1000) throw ConfigError("at least 1000 resamples are required");
  const unsigned threads = thread_count(o);
  const RiskSetIndex index(input.data);
  const ProfileFit profile = run_profile(index, cfg, o);
  const CumulativeCurves curves = cumulative_curves(index, profile);
  const VarianceBundle variance = variance_bundle(profile, cfg.kernel);

  const Band ve = ve_pointwise_band(profile, variance, cfg.alpha);
  const Band cv = cv_pointwise_band(curves, cfg.alpha);
  const Band simultaneous =
      method == "bridge"
          ? cv_simultaneous_band_bridge(curves, cfg.alpha, cfg.resamples, seed, {}, threads)
          : multiplier_band(index, profile, curves, cfg.alpha, cfg.resamples, seed, {}, threads);

  Run run("bands", o, out);
  {
    auto f = run.open("ve_pointwise_band.csv");
    write_band(f, ve);
  }
  {
    auto f = run.open("cv_pointwise_band.csv");
    write_band(f, cv);
  }
  {
    auto f = run.open("cv_simultaneous_band.csv");
    write_band(f, simultaneous);
  }
  json config = config_json(cfg);
  config["method"] = method;
  config["critical_value"] = simultaneous.critical_value;
  run.finish(config, input, seed);
  return 0;
}

json statistic_json(const TestStatistic& s) {
  return {{"name", s.name},
          {"value", s.value},
          {"critical_value", s.critical_value},
          {"p_value", s.p_value},
          {"reject", s.reject}};
}

json report_json(const TestReport& r) {
  json j;
  j["family"] = r.family == TestFamily::h10 ? "h10" : "h20";
  j["alpha"] = r.alpha;
  if (r.family == TestFamily::h20) j["a1"] = r.a1;
  j["test_grid"] = r.test_grid;
  j["integration_grid"] = r.integration_grid;
  j["resamples"] = r.resamples;
  j["seed"] = r.seed;
  j["statistics"] = {statistic_json(r.t_a), statistic_json(r.t_m1), statistic_json(r.t_m2)};
  return j;
}

int cmd_test(const Options& o, std::ostream& out) {
  const std::uint64_t seed = require_seed(o);
  const Input input = load_input(o);
  const AnalysisConfig cfg = analysis_config(o);
  const std::string family = o.family.value_or("both");
  if (family != "h10" && family != "h20" && family != "both") {
    throw ConfigError("--family must be h10, h20 or both");
  }
  TestOptions options;
  options.test_grid = cfg.test_grid();
  options.alpha = cfg.alpha;
  options.resamples = cfg.resamples;
  options.a1 = cfg.resolved_a1();
  options.threads = thread_count(o);
  if (options.test_grid.size() < 2) throw ConfigError("test grid needs K >= 2 points");
  if (options.resamples < 1000) throw ConfigError("at least 1000 resamples are required");

  const RiskSetIndex index(input.data);
  const ProfileFit profile = run_profile(index, cfg, o);
  const CumulativeCurves curves = cumulative_curves(index, profile);

  json reports = json::array();
  if (family != "h20") {
    options.seed = derive_seed(seed, 1);
    reports.push_back(report_json(test_H10(curves, options)));
  }
  if (family != "h10") {
    options.seed = derive_seed(seed, 2);
    reports.push_back(report_json(test_H20(curves, options)));
  }
  Run run("test", o, out);
  {
    auto f = run.open("tests.json");
    f << json{{"tests", reports}}.dump(2) << '\n';
  }
  for (const auto& r : reports) {
    for (const auto& s : r["statistics"]) {
      out << std::left << std::setw(8) << s["name"].get<std::string>() << " value "
          << format_double(s["value"].get<double>()) << "  p "
          << format_double(s["p_value"].get<double>()) << (s["reject"].get<bool>() ? "  reject" : "")
          << '\n';
    }
  }
  json config = config_json(cfg);
  config["family"] = family;
  run.finish(config, input, seed);
  return 0;
}

json proportion_json(const Proportion& p) {
  return {{"name", p.name}, {"hits", p.hits}, {"trials", p.trials}, {"rate", p.rate}, {"se", p.se}};
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const std::uint64_t seed = require_seed(o);
  MCConfig mc;
  if (o.model && o.params) throw ConfigError("use either --model or --params, not both");
  if (o.params) {
    if (o.params->size() != 3) throw ConfigError("--params takes alpha beta gamma");
    mc.model = SimModelSpec::mark13((*o.params)[0], (*o.params)[1], (*o.params)[2]);
  } else {
    mc.model = SimModelSpec::named(o.model.value_or("m1"));
  }
  if (o.censoring) mc.model.censoring_target = *o.censoring;
  mc.n = o.n.value_or(500);
  mc.replications = o.reps.value_or(500);
  mc.analysis = analysis_config(o);
  mc.analysis.seed = seed;
  mc.threads = thread_count(o);
  if (mc.analysis.resamples < 1000) throw ConfigError("at least 1000 resamples are required");

  const MCReport report = run_study(mc);

  json j;
  j["model"] = report.model;
  j["parameters"] = {{"alpha", mc.model.alpha},
                     {"beta", mc.model.beta},
                     {"gamma", mc.model.gamma},
                     {"censoring_target", mc.model.censoring_target}};
  j["n"] = report.n;
  j["bandwidth"] = report.bandwidth;
  j["alpha"] = report.alpha;
  j["replications"] = report.replications;
  j["completed"] = report.completed;
  j["failures"] = report.failures;
  j["failure_messages"] = report.failure_messages;
  j["rejections"] = json::array();
  for (const auto& p : report.rejections) j["rejections"].push_back(proportion_json(p));
  j["coverage"] = json::array();
  for (const auto& p : report.coverage) j["coverage"].push_back(proportion_json(p));
  j["points"] = json::array();
  for (const auto& p : report.points) {
    j["points"].push_back({{"v", p.v},
                           {"truth", p.truth},
                           {"mean_estimate", p.mean_estimate},
                           {"mean_abs_error", p.mean_abs_error},
                           {"ve_coverage", proportion_json(p.ve_coverage)}});
  }

  Run run("simulate", o, out);
  {
    auto f = run.open("mc_report.json");
    f << j.dump(2) << '\n';
  }
  {
    auto f = run.open("mc_table.csv");
    f << "model,n,h,statistic,rejection_pct,coverage_pct,se_pct\n";
    const std::string prefix =
        report.model + ',' + std::to_string(report.n) + ',' + format_double(report.bandwidth) + ',';
    for (const auto& p : report.rejections) {
      f << prefix << p.name << ',' << format_double(100.0 * p.rate) << ",," << format_double(100.0 * p.se)
        << '\n';
    }
    for (const auto& p : report.coverage) {
      f << prefix << p.name << ",," << format_double(100.0 * p.rate) << ',' << format_double(100.0 * p.se)
        << '\n';
    }
    for (const auto& p : report.points) {
      const auto& c = p.ve_coverage;
      f << prefix << c.name << ",," << format_double(100.0 * c.rate) << ',' << format_double(100.0 * c.se)
        << '\n';
    }
  }
  out << report.model << "  n=" << report.n << "  h=" << format_double(report.bandwidth)
      << "  completed " << report.completed << '/' << report.replications << '\n';
  for (const auto& p : report.rejections) {
    out << "  " << std::left << std::setw(20) << p.name << std::fixed << std::setprecision(1)
        << 100.0 * p.rate << "%\n";
  }
  for (const auto& p : report.coverage) {
    out << "  " << std::left << std::setw(20) << p.name << std::fixed << std::setprecision(1)
        << 100.0 * p.rate << "%\n";
  }
  out << std::defaultfloat << std::setprecision(6);
  json config = config_json(mc.analysis);
  config["model"] = j["parameters"];
  config["model"]["name"] = report.model;
  config["n"] = mc.n;
  config["replications"] = mc.replications;
  run.finish(config, std::nullopt, seed);
  return 0;
}

int cmd_residuals(const Options& o, std::ostream& out) {
  const Input input = load_input(o);
  const AnalysisConfig cfg = analysis_config(o);
  const RiskSetIndex index(input.data);
  const ProfileFit profile = run_profile(index, cfg, o);
  const BaselineSurface baseline = baseline_surface(index, profile);
  const Vector residual =
      martingale_residuals(index, profile, baseline, input.data.tau(), profile.b);
  const ResidualSumCheck check = residual_sum_check(index, profile, baseline);

  Run run("residuals", o, out);
  {
    auto f = run.open("residuals.csv");
    f << "subject,residual\n";
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
      f << (i + 1) << ',' << format_double(residual[i]) << '\n';
    }
  }
  {
    auto f = run.open("residual_check.json");
    const json j{{"sup_abs_scaled_sum", check.sup_abs},
                 {"at_t", check.at_t},
                 {"at_v", check.at_v},
                 {"time_points", check.time_points},
                 {"mark_points", check.mark_points},
                 {"tolerance", check.tolerance},
                 {"within_tolerance", check.within_tolerance}};
    f << j.dump(2) << '\n';
  }
  out << "residual sum sup " << format_double(check.sup_abs) << '\n';
  run.finish(config_json(cfg), input, std::nullopt);
  return 0;
}

int cmd_wald(const Options& o, std::ostream& out) {
  const Input input = load_input(o);
  const WaldResult w = wald_marginal(input.data);
  const json j{{"beta", w.beta},
               {"se", w.se},
               {"z", w.z},
               {"p_two_sided", w.p_two_sided},
               {"p_one_sided", w.p_one_sided}};
  out << j.dump(2) << '\n';
  return 0;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_path, "JSON config file; flags take precedence");
  sub->add_option("--out", o.out_dir, "output directory (default .)");
  sub->add_option("--threads", o.threads, "worker threads (default: MARKPH_THREADS or all cores)");
}

void add_data(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "CSV with header time,status,mark,z1..zp");
  sub->add_option("--mark-range", o.mark_range, "declared mark range lo hi, rescaled to [0,1]")
      ->expected(2);
}

void add_analysis(CLI::App* sub, Options& o) {
  sub->add_option("--bandwidth", o.bandwidth, "kernel bandwidth h");
  sub->add_option("--interval", o.interval, "analysis interval a b")->expected(2);
  sub->add_option("--grid", o.grid, "number of evenly spaced grid points on [a,b]");
  sub->add_option("--grid-points", o.grid_points, "explicit grid points")->expected(1, -1);
  sub->add_option("--kernel", o.kernel, "epanechnikov, uniform or biweight");
  sub->add_option("--alpha", o.alpha, "significance level");
}

void add_resampling(CLI::App* sub, Options& o) {
  sub->add_option("--resamples", o.resamples, "resampling draws (at least 1000)");
  sub->add_option("--seed", o.seed, "master seed (required)");
}

void add_test_grid(CLI::App* sub, Options& o) {
  sub->add_option("--test-grid", o.test_grid, "explicit test grid points")->expected(1, -1);
  sub->add_option("--test-grid-count", o.test_grid_count, "size of the default test grid");
  sub->add_option("--a1", o.a1, "left end of the constancy window");
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mark-specific proportional hazards analysis", "markph"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto* validate_cmd = app.add_subcommand("validate", "check a dataset against the analysis grid");
  add_data(validate_cmd, o);
  add_analysis(validate_cmd, o);
  add_common(validate_cmd, o);

  auto* fit = app.add_subcommand("fit", "estimate beta(v) on the grid and the baseline");
  add_data(fit, o);
  add_analysis(fit, o);
  add_common(fit, o);

  auto* bands = app.add_subcommand("bands", "pointwise and simultaneous confidence bands");
  add_data(bands, o);
  add_analysis(bands, o);
  add_resampling(bands, o);
  add_common(bands, o);
  bands->add_option("--method", o.method, "bridge (default) or multiplier");

  auto* test = app.add_subcommand("test", "tests of no efficacy (h10) and constant efficacy (h20)");
  add_data(test, o);
  add_analysis(test, o);
  add_resampling(test, o);
  add_test_grid(test, o);
  add_common(test, o);
  test->add_option("--family", o.family, "h10, h20 or both (default)");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study under a generative model");
  add_analysis(simulate, o);
  add_resampling(simulate, o);
  add_test_grid(simulate, o);
  add_common(simulate, o);
  simulate->add_option("--model", o.model, "m1..m8 or crossing");
  simulate->add_option("--params", o.params, "explicit alpha beta gamma")->expected(3);
  simulate->add_option("--n", o.n, "sample size (default 500)");
  simulate->add_option("--reps", o.reps, "replications (default 500)");
  simulate->add_option("--censoring", o.censoring, "target censored fraction (default 0.25)");

  auto* residuals = app.add_subcommand("residuals", "martingale residuals and the residual-sum check");
  add_data(residuals, o);
  add_analysis(residuals, o);
  add_common(residuals, o);

  auto* wald = app.add_subcommand("wald", "marginal Cox Wald test of the first covariate");
  add_data(wald, o);
  add_common(wald, o);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_config_file(o);
    if (*validate_cmd) return cmd_validate(o, out);
    if (*fit) return cmd_fit(o, out, err);
    if (*bands) return cmd_bands(o, out);
    if (*test) return cmd_test(o, out);
    if (*simulate) return cmd_simulate(o, out);
    if (*residuals) return cmd_residuals(o, out);
    if (*wald) return cmd_wald(o, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

}  // namespace markph::cli
