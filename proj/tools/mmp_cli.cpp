// mmp_cli: analyze matched binary data, run the sparse-response simulation,
// diagnose stored chains, and rerun the system-of-care example.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if __has_include("CLI11.hpp")
#include "CLI11.hpp"
#else
#include <CLI/CLI.hpp>
#endif
#include "mmp/mmp.hpp"

namespace fs = std::filesystem;
using namespace mmp;

namespace {

constexpr int kUsageError = 2;

struct Options {
  // data
  std::string input;
  bool pattern_counts = false;
  // methods
  std::string model = "mvp";
  long iterations = 20000;
  long burn_in = 10000;
  long thinning = 1;
  int chains = 1;
  std::uint64_t seed = 1;
  double A = 10.0;
  double xi = 0.01;
  int scores = 2;
  std::string rho_scale = "marginal";
  long bootstrap_resamples = 10000;
  bool fast = false;
  bool check_invariants = false;
  bool keep_fpca_blocks = false;
  // simulation
  std::vector<int> K;
  std::vector<double> theta12;
  int replicates = 200;
  int batch_size = 1000;
  int max_batches = 10;
  double theta_sd = 0.035;
  std::string theta_draw = "per-subject";
  std::string truth = "dataset";
  bool plan_only = false;
  // diagnose
  std::string chain_file;
  // output
  std::string out_dir;
  std::string format = "csv";
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
  return s;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : " ") + full(x);
  return s;
}

/// Every result-affecting setting of a command, in a canonical order.
std::map<std::string, std::string> settings_of(const std::string& command, const Options& o) {
  std::map<std::string, std::string> m{{"command", command}, {"seed", std::to_string(o.seed)}};
  if (command == "diagnose") {
    m["chain"] = o.chain_file;
    return m;
  }
  m["model"] = o.model;
  m["iterations"] = std::to_string(o.iterations);
  m["burn_in"] = std::to_string(o.burn_in);
  m["thinning"] = std::to_string(o.thinning);
  m["chains"] = std::to_string(o.chains);
  m["A"] = full(o.A);
  m["xi"] = full(o.xi);
  m["scores"] = std::to_string(o.scores);
  m["rho_scale"] = o.rho_scale;
  m["bootstrap_resamples"] = std::to_string(o.bootstrap_resamples);
  if (command == "analyze") {
    m["input"] = o.input;
    m["pattern_counts"] = o.pattern_counts ? "1" : "0";
  }
  if (command == "simulate") {
    m["K"] = join(o.K);
    m["theta12"] = join(o.theta12);
    m["replicates"] = std::to_string(o.replicates);
    m["batch_size"] = std::to_string(o.batch_size);
    m["max_batches"] = std::to_string(o.max_batches);
    m["theta_sd"] = full(o.theta_sd);
    m["theta_draw"] = o.theta_draw;
    m["truth"] = o.truth;
  }
  return m;
}

std::string config_hash(const std::map<std::string, std::string>& s) {
  std::string canon;
  for (const auto& [k, v] : s) canon += k + '=' + v + '\n';
  return hex(fnv1a(canon));
}

/// Tracks written files so a failed run leaves nothing half-finished behind.
class OutputSet {
 public:
  explicit OutputSet(std::string dir) : dir_(std::move(dir)) {}

  bool enabled() const { return !dir_.empty(); }

  std::ofstream open(const std::string& name) {
    if (!created_dir_checked_) {
      if (!fs::exists(dir_)) {
        fs::create_directories(dir_);
        created_dir_ = true;
      }
      created_dir_checked_ = true;
    }
    const auto path = fs::path(dir_) / name;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    written_.push_back(path);
    return f;
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    if (created_dir_) fs::remove(dir_, ec);
    written_.clear();
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : written_) out.push_back(p.filename().string());
    return out;
  }

 private:
  std::string dir_;
  std::vector<fs::path> written_;
  bool created_dir_ = false;
  bool created_dir_checked_ = false;
};

struct RunContext {
  std::string command;
  Options opt;
  std::map<std::string, std::string> settings;
  std::string hash;
  Metadata meta;

  RunContext(std::string cmd, const Options& o) : command(std::move(cmd)), opt(o) {
    settings = settings_of(command, opt);
    hash = config_hash(settings);
    meta = {{"version", std::string(version())}, {"seed", std::to_string(opt.seed)}, {"config_hash", hash},
            {"command", command}};
  }

  nlohmann::json meta_json() const {
    nlohmann::json j;
    for (const auto& [k, v] : meta) j[k] = v;
    j["settings"] = settings;
    return j;
  }
};

void write_run_record(OutputSet& out, const RunContext& ctx, double seconds) {
  if (!out.enabled()) return;
  auto j = ctx.meta_json();
  j["duration_seconds"] = seconds;
  auto names = out.names();
  j["outputs"] = names;
  auto f = out.open("run.json");
  f << j.dump(2) << '\n';
}

MethodSettings method_settings(const Options& o) {
  MethodSettings s;
  s.sampler = o.fast ? SamplerConfig::fast() : SamplerConfig{};
  if (!o.fast) {
    s.sampler.total_iterations = o.iterations;
    s.sampler.burn_in = o.burn_in;
  }
  s.sampler.thinning = o.thinning;
  s.sampler.chains = o.chains;
  s.sampler.seed = o.seed;
  s.sampler.check_invariants = o.check_invariants;
  s.sampler.validate();
  s.fpca.A = o.A;
  s.fpca.xi = o.xi;
  s.fpca.scores = o.scores;
  s.fpca.rho_scale = o.rho_scale == "latent" ? RhoScale::latent : RhoScale::marginal;
  s.fpca.keep_fpca_blocks = o.keep_fpca_blocks;
  s.bootstrap_resamples = o.bootstrap_resamples;
  return s;
}

std::vector<Method> methods_of(const std::string& model) {
  if (model == "all") return {std::begin(kAllMethods), std::end(kAllMethods)};
  std::vector<Method> out;
  std::stringstream ss(model);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto m = parse_method(tok);
    if (!m) throw CLI::ValidationError("--model", "unknown model '" + tok + "'");
    out.push_back(*m);
  }
  if (out.empty()) throw CLI::ValidationError("--model", "no model given");
  return out;
}

void emit_reports(const std::vector<EstimateReport>& reports, const RunContext& ctx, OutputSet& out) {
  for (const auto& r : reports) std::cout << format_table(r) << '\n';
  if (!out.enabled()) return;
  const bool json = ctx.opt.format == "json";
  for (const auto& r : reports) {
    const std::string name(method_name(r.method));
    if (json) {
      auto j = to_json(r);
      j["meta"] = ctx.meta_json();
      out.open("summary_" + name + ".json") << j.dump(2) << '\n';
    } else {
      auto f = out.open("summary_" + name + ".csv");
      write_summary_csv(f, {r}, ctx.meta);
    }
    if (r.chain) {
      auto f = out.open("chain_" + name + ".csv");
      write_chain_csv(f, *r.chain, {{"config_hash", ctx.hash}});
      if (r.method == Method::mvp && ctx.opt.keep_fpca_blocks) {
        auto g = out.open("fpca_blocks_" + name + ".csv");
        write_fpca_blocks_csv(g, *r.chain);
      }
    }
  }
  if (reports.size() > 1) {
    if (json) {
      nlohmann::json j;
      j["meta"] = ctx.meta_json();
      j["reports"] = nlohmann::json::array();
      for (const auto& r : reports) j["reports"].push_back(to_json(r));
      out.open("comparison.json") << j.dump(2) << '\n';
    } else {
      auto f = out.open("comparison.csv");
      write_summary_csv(f, reports, ctx.meta);
    }
  }
}

std::vector<EstimateReport> analyze_table(const MatchedBinaryTable& t, const RunContext& ctx) {
  const auto methods = methods_of(ctx.opt.model);
  const auto settings = method_settings(ctx.opt);
  const auto flags = sparsity_flags(paired_counts(t));
  for (std::size_t k = 0; k < flags.size(); ++k)
    if (flags[k]) std::cerr << "note: set '" << t.set_labels()[k] << "' is sparse (empty discordant cell)\n";
  std::vector<EstimateReport> reports;
  const RngStream root(ctx.opt.seed, 0);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    RngStream rng = root.derive(static_cast<std::uint64_t>(methods[i]));
    reports.push_back(run_method(methods[i], t, settings, rng));
  }
  return reports;
}

void cmd_analyze(const RunContext& ctx, OutputSet& out) {
  if (ctx.opt.input.empty()) throw CLI::RequiredError("--input");
  const auto t = ingest_csv(ctx.opt.input, ctx.opt.pattern_counts ? CsvLayout::pattern_counts : CsvLayout::subjects);
  std::cerr << "read " << t.n() << " subjects, K = " << t.K() << '\n';
  emit_reports(analyze_table(t, ctx), ctx, out);
}

void cmd_soc_demo(const RunContext& ctx, OutputSet& out) {
  const auto t = soc::table();
  if (out.enabled()) {
    auto f = out.open("soc_counts.json");
    f << to_json(paired_counts(t)).dump(2) << '\n';
  }
  emit_reports(analyze_table(t, ctx), ctx, out);
}

std::string cell_tag(int K, double theta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "K%d_theta%.2f", K, theta);
  return buf;
}

void cmd_simulate(const RunContext& ctx, OutputSet& out) {
  const auto& o = ctx.opt;
  const std::vector<int> Ks = o.K.empty() ? std::vector<int>(std::begin(kKGrid), std::end(kKGrid)) : o.K;
  const std::vector<double> thetas =
      o.theta12.empty() ? std::vector<double>(std::begin(kThetaGrid), std::end(kThetaGrid)) : o.theta12;
  if (o.plan_only) {
    std::cout << "planned cells: " << Ks.size() * thetas.size() << '\n';
    for (int K : Ks)
      for (double th : thetas) std::cout << "  K=" << K << " theta12=" << fixed(th, 2) << " replicates=" << o.replicates << '\n';
    return;
  }
  const auto methods = methods_of(o.model);
  const auto settings = method_settings(o);
  std::vector<MetricsTable> cells;
  for (std::size_t ki = 0; ki < Ks.size(); ++ki)
    for (std::size_t ti = 0; ti < thetas.size(); ++ti) {
      SimScenario s;
      s.K = Ks[ki];
      s.theta12 = thetas[ti];
      s.replicates = o.replicates;
      s.batch_size = o.batch_size;
      s.max_batches = o.max_batches;
      s.theta_draw_sd = o.theta_sd;
      s.draw = o.theta_draw == "per-dataset" ? ThetaDraw::per_dataset : ThetaDraw::per_subject;
      s.truth = o.truth == "design" ? TruthMode::design : TruthMode::dataset;
      // Each cell gets its own seed so cells can be rerun in isolation.
      s.seed = fnv1a(std::to_string(o.seed) + ':' + cell_tag(s.K, s.theta12));
      std::cerr << "simulating " << cell_tag(s.K, s.theta12) << " ...\n";
      auto t = run_scenario(s, methods, settings);
      std::cerr << "  " << t.achieved << " replicates from " << t.generated << " datasets (" << t.sparse_found
                << " sparse)\n";
      for (const auto& r : t.rows)
        std::cout << cell_tag(s.K, s.theta12) << ' ' << method_name(r.method) << " coverage=" << fixed(r.coverage)
                  << " power=" << fixed(r.power) << " bias=" << fixed(r.bias, 4) << " width=" << fixed(r.width)
                  << " n=" << r.replicates << '\n';
      if (out.enabled()) {
        const auto tag = cell_tag(s.K, s.theta12);
        if (o.format == "json") {
          auto j = to_json(t);
          j["meta"] = ctx.meta_json();
          out.open("metrics_" + tag + ".json") << j.dump(2) << '\n';
        } else {
          auto f = out.open("metrics_" + tag + ".csv");
          write_metrics_csv(f, t, ctx.meta);
        }
        auto f = out.open("replicates_" + tag + ".csv");
        write_replicates_csv(f, t, ctx.meta);
      }
      cells.push_back(std::move(t));
    }
  if (out.enabled())
    for (int K : Ks) {
      auto f = out.open("figure_K" + std::to_string(K) + ".csv");
      write_figure_data(f, cells, K, ctx.meta);
    }
}

void cmd_diagnose(const RunContext& ctx, OutputSet& out) {
  std::ifstream in(ctx.opt.chain_file);
  if (!in) throw DataError("cannot open '" + ctx.opt.chain_file + "'");
  const auto t = read_chain_csv(in);
  if (t.chains.empty()) throw DataError("chain file has no draws");
  std::ostringstream table;
  table << "parameter,median,lower,upper,prob_positive,r_hat,r_hat_upper_95\n";
  std::printf("%-22s %9s %9s %9s %9s %8s %10s\n", "parameter", "median", "2.5%", "97.5%", "P(>0)", "R-hat",
              "Upper 95%");
  for (std::size_t col = 0; col < t.columns.size(); ++col) {
    std::vector<Eigen::MatrixXd> per;
    Eigen::Index total = 0;
    for (const auto& c : t.chains) {
      per.push_back(c.col(static_cast<Eigen::Index>(col)));
      total += c.rows();
    }
    Eigen::VectorXd pooled(total);
    Eigen::Index r = 0;
    for (const auto& p : per) {
      pooled.segment(r, p.rows()) = p.col(0);
      r += p.rows();
    }
    auto s = summarize_draws(t.columns[col], pooled);
    try {
      s.psrf = gelman_rubin_column(per, 0);
    } catch (const std::invalid_argument&) {
    }
    std::printf("%-22s %9s %9s %9s %9s %8s %10s\n", s.label.c_str(), fixed(s.median).c_str(),
                fixed(s.lower).c_str(), fixed(s.upper).c_str(), fixed(s.prob_positive).c_str(),
                fixed(s.psrf.r_hat).c_str(), fixed(s.psrf.upper_95).c_str());
    table << s.label << ',' << full(s.median) << ',' << full(s.lower) << ',' << full(s.upper) << ','
          << full(s.prob_positive) << ',' << full(s.psrf.r_hat) << ',' << full(s.psrf.upper_95) << '\n';
  }
  if (out.enabled()) {
    auto f = out.open("diagnostics.csv");
    write_metadata(f, ctx.meta);
    f << table.str();
    // Trace data in long format, one row per draw and parameter.
    auto g = out.open("trace.csv");
    write_metadata(g, ctx.meta);
    g << "chain,draw,parameter,value\n";
    for (std::size_t c = 0; c < t.chains.size(); ++c)
      for (Eigen::Index d = 0; d < t.chains[c].rows(); ++d)
        for (std::size_t col = 0; col < t.columns.size(); ++col)
          g << c << ',' << d << ',' << t.columns[col] << ',' << full(t.chains[c](d, static_cast<Eigen::Index>(col)))
            << '\n';
  }
}

void add_sampler_options(CLI::App* app, Options& o) {
  app->add_option("--model", o.model, "naive|penalized|mvp|gee|bootstrap|erm|all, or a comma list")
      ->capture_default_str();
  app->add_option("--iterations", o.iterations, "Total Gibbs sweeps per chain")->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--burn-in", o.burn_in, "Discarded initial sweeps")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--thin", o.thinning, "Keep every n-th sweep")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--chains", o.chains, "Independent chains")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  app->add_option("--A", o.A, "Half-Cauchy scale")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--xi", o.xi, "Ridge weight of the spline penalty, in (0, 1]")
      ->check(CLI::Range(1e-12, 1.0))->capture_default_str();
  app->add_option("--scores", o.scores, "Number of FPCA scores")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--rho-scale", o.rho_scale, "FPCA rho: marginal (subject-averaged) or latent")
      ->check(CLI::IsMember({"marginal", "latent"}))->capture_default_str();
  app->add_option("--bootstrap-resamples", o.bootstrap_resamples, "Bootstrap resamples")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app->add_flag("--fast", o.fast, "Short 4000/2000 schedule");
  app->add_flag("--check-invariants", o.check_invariants, "Verify the latent sign pattern after every sweep");
  app->add_flag("--keep-fpca-blocks", o.keep_fpca_blocks, "Also write loadings and subject scores");
}

void add_output_options(CLI::App* app, Options& o) {
  app->add_option("--out-dir", o.out_dir, "Directory for output files");
  app->add_option("--format", o.format, "Summary format")->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
}

/// Fills options that were not given on the command line from a flat
/// `key=value` file (keys are long option names without the dashes).
void apply_config_file(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(path + ":" + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r\"");
      const auto e = v.find_last_not_of(" \t\r\"");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(0, 1);
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string value = trim(line.substr(eq + 1));
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config")
      throw DataError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    if (opt->get_expected_min() > 1 || opt->get_items_expected_max() > 1) {
      std::istringstream vs(value);
      std::string item;
      while (vs >> item) opt->add_result(item);
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian and frequentist analysis of multivariate matched proportions"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  Options o;

  auto* analyze = app.add_subcommand("analyze", "Analyze a CSV of matched binary responses");
  analyze->add_option("--input", o.input, "CSV with j1_<label>, j2_<label> columns")->required()
      ->check(CLI::ExistingFile);
  analyze->add_flag("--pattern-counts", o.pattern_counts, "Rows are patterns with a trailing count column");
  add_sampler_options(analyze, o);
  add_output_options(analyze, o);

  auto* demo = app.add_subcommand("soc-demo", "Re-analysis of the embedded system-of-care data");
  add_sampler_options(demo, o);
  add_output_options(demo, o);

  auto* sim = app.add_subcommand("simulate", "Sparse-response simulation study");
  add_sampler_options(sim, o);
  add_output_options(sim, o);
  sim->add_option("--K", o.K, "Set counts (default: 2 3 4 5)")->check(CLI::Range(2, 5));
  sim->add_option("--theta12", o.theta12, "theta_12 values (default: 0.05 0.10 0.15 0.20)")
      ->check(CLI::Range(0.0, 1.0));
  sim->add_option("--replicates", o.replicates, "Sparse datasets per cell")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim->add_option("--batch-size", o.batch_size, "Datasets per generation batch")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim->add_option("--max-batches", o.max_batches, "Generation batch cap")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim->add_option("--theta-sd", o.theta_sd, "Spread of the generating probabilities")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  sim->add_option("--theta-draw", o.theta_draw, "per-subject or per-dataset generating probabilities")
      ->check(CLI::IsMember({"per-subject", "per-dataset"}))->capture_default_str();
  sim->add_option("--truth", o.truth, "Coverage target: dataset or design")
      ->check(CLI::IsMember({"dataset", "design"}))->capture_default_str();
  sim->add_flag("--plan-only", o.plan_only, "List the planned cells and exit");

  auto* diag = app.add_subcommand("diagnose", "Summaries and Gelman-Rubin diagnostics of a chain file");
  diag->add_option("--chain", o.chain_file, "Chain CSV written by analyze")->required()->check(CLI::ExistingFile);
  diag->add_option("--out-dir", o.out_dir, "Directory for diagnostics.csv and trace.csv");

  std::string config_file;
  for (auto* sub : {analyze, demo, sim, diag})
    sub->add_option("--config", config_file, "File of key=value lines; command-line flags take precedence")
        ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  CLI::App* active = app.get_subcommands().front();
  const std::string command = active->get_name();
  try {
    if (!config_file.empty()) apply_config_file(active, config_file);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  // Per-command defaults that differ from the shared option block.
  if (command == "simulate" && active->get_option("--model")->count() == 0) o.model = "all";
  if (command == "soc-demo" && active->get_option("--chains")->count() == 0) o.chains = 4;
  if (command != "diagnose" && !o.fast && o.burn_in >= o.iterations) {
    std::cerr << "error: --burn-in must be smaller than --iterations\n";
    return kUsageError;
  }

  if (command != "diagnose") {
    try {
      methods_of(o.model);
    } catch (const CLI::ParseError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kUsageError;
    }
  }

  const RunContext ctx(command, o);
  OutputSet out(o.out_dir);
  const auto start = std::chrono::steady_clock::now();
  try {
    if (command == "analyze") cmd_analyze(ctx, out);
    else if (command == "soc-demo") cmd_soc_demo(ctx, out);
    else if (command == "simulate") cmd_simulate(ctx, out);
    else cmd_diagnose(ctx, out);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "done in " << fixed(seconds, 1) << " s (version " << version() << ", seed " << o.seed
              << ", config " << ctx.hash << ")\n";
    write_run_record(out, ctx, seconds);
  } catch (const CLI::ParseError& e) {
    out.rollback();
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    out.rollback();
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
