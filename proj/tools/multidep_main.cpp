#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <multidep/csv.hpp>
#include <multidep/engine.hpp>
#include <multidep/study.hpp>

using nlohmann::json;
using namespace multidep;

namespace {

// the environment variable wins over the flag; unset means all cores
int resolve_threads(int flag) {
  if (const char* env = std::getenv("MULTIDEP_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  if (flag >= 1) return flag;
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    token = detail::trim(token);
    double v = 0.0;
    if (!detail::parse_number(token, v))
      throw std::invalid_argument("expected a number in " + what + ", got '" + token + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument(what + " is empty");
  return out;
}

struct KindFlags {
  std::string family = "multivariance";
  int m = 2;
  bool raw = false;
};

StatisticKind make_kind(const KindFlags& flags, int n) {
  StatisticKind kind;
  if (flags.family == "total") kind.family = StatisticKind::Family::total;
  if (flags.family == "m-multivariance") kind.family = StatisticKind::Family::m_multivariance;
  kind.m = flags.m;
  kind.normalized = !flags.raw;
  if (kind.family == StatisticKind::Family::m_multivariance && (flags.m < 2 || flags.m > n))
    throw std::invalid_argument("m must lie between 2 and the number of variables");
  return kind;
}

const char* kind_family_name(StatisticKind kind) {
  switch (kind.family) {
    case StatisticKind::Family::multivariance: return "multivariance";
    case StatisticKind::Family::total: return "total";
    case StatisticKind::Family::m_multivariance: return "m-multivariance";
  }
  return "unknown";
}

json kind_json(StatisticKind kind) {
  return json{{"family", kind_family_name(kind)}, {"m", kind.m}, {"normalized", kind.normalized}};
}

struct EstimatorFlags {
  bool biased = false;
  bool limit = false;
  bool raw = false;
};

void add_estimator_flags(CLI::App* cmd, EstimatorFlags& est) {
  cmd->add_flag("--biased,!--unbiased", est.biased,
                "biased moment estimators (default: unbiased)");
  cmd->add_flag("--limit,!--finite-sample", est.limit,
                "limit-distribution moments (default: finite sample)");
}

struct TestOptions {
  std::string input;
  std::string variables;
  std::string beta;
  KindFlags kind;
  EstimatorFlags est;
  std::string method = "pearson";
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
  int threads = 0;
  bool as_json = false;
};

// every block with zero spread earns an explicit warning up front
std::vector<std::string> constant_warnings(const Dataset& data) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < data.n(); ++i) {
    Eigen::ArrayXXd diff = data.blocks[i].array().rowwise() - data.blocks[i].array().row(0);
    if ((diff == 0.0).all())
      w.push_back("variable " + std::to_string(i + 1) + " is a constant column");
  }
  return w;
}

Dataset load_dataset(const std::string& input, const std::string& variables,
                     const std::string& beta) {
  CsvTable table = read_csv_file(input);
  VariableSpec spec = parse_variable_spec(variables);
  std::vector<double> betas;
  if (!beta.empty()) betas = parse_double_list(beta, "--beta");
  return dataset_from_table(table, spec, betas);
}

int cmd_test(const TestOptions& opt) {
  const int threads = resolve_threads(opt.threads);
  Eigen::setNbThreads(threads);
  Dataset data = load_dataset(opt.input, opt.variables, opt.beta);

  TestSpec spec;
  spec.kind = make_kind(opt.kind, static_cast<int>(data.n()));
  spec.method = method_from_name(opt.method);
  spec.estimator.bias = opt.est.biased ? BiasMode::biased : BiasMode::unbiased;
  spec.estimator.horizon = opt.est.limit ? MomentHorizon::limit : MomentHorizon::finite_sample;
  spec.resamples = opt.resamples;
  spec.rng_seed = opt.seed;

  TestResult result = run_test(data, spec);
  std::vector<std::string> warnings = constant_warnings(data);
  warnings.insert(warnings.end(), result.warnings.begin(), result.warnings.end());

  if (opt.as_json) {
    json report{{"statistic", result.statistic},
                {"p_value", result.p},
                {"valid", result.valid},
                {"method", result.method},
                {"parameters", json(result.parameters)},
                {"warnings", json(warnings)},
                {"n", data.n()},
                {"N", data.N()},
                {"kind", kind_json(spec.kind)}};
    std::cout << report.dump(2) << "\n";
    return 0;
  }

  std::cout << "statistic: " << result.statistic << "\n";
  std::cout << "p-value: " << result.p << "\n";
  std::cout << "valid: " << (result.valid ? "yes" : "no") << "\n";
  std::cout << "method: " << result.method << "\n";
  std::cout << "kind: " << kind_family_name(spec.kind)
            << (spec.kind.family == StatisticKind::Family::m_multivariance
                    ? " (m = " + std::to_string(spec.kind.m) + ")"
                    : "")
            << (spec.kind.normalized ? ", normalized" : ", raw") << "\n";
  std::cout << "n: " << data.n() << "\n";
  std::cout << "N: " << data.N() << "\n";
  std::cout << "threads: " << threads << "\n";
  if (!result.parameters.empty()) {
    std::cout << "parameters:\n";
    for (const auto& [k, v] : result.parameters) std::cout << "  " << k << ": " << v << "\n";
  }
  for (const std::string& w : warnings) std::cout << "warning: " << w << "\n";
  if (!result.valid)
    std::cout << "warning: the tail bound is not certified at this statistic value\n";
  return 0;
}

struct MomentsOptions {
  std::string input;
  std::string variables;
  std::string beta;
  bool biased = false;
  int threads = 0;
  bool as_json = false;
};

json moments_json(const MarginalMoments& m) {
  json out{{"mu1", m.mu1}, {"mu2", m.mu2}, {"b", m.b},
           {"c", m.c},     {"d", m.d},     {"mu3_available", m.mu3_available},
           {"mu4_available", m.mu4_available}};
  if (m.mu3_available) {
    out["mu3"] = m.mu3;
    out["e"] = m.e;
    out["f"] = m.f;
    out["y"] = m.y;
    out["u"] = m.u;
  }
  if (m.mu4_available) out["mu4"] = m.mu4;
  return out;
}

int cmd_moments(const MomentsOptions& opt) {
  Eigen::setNbThreads(resolve_threads(opt.threads));
  Dataset data = load_dataset(opt.input, opt.variables, opt.beta);

  json vars = json::array();
  for (std::size_t i = 0; i < data.n(); ++i) {
    DistanceMatrix b = distance_matrix(data.blocks[i], data.psi(i));
    MatrixStats st = matrix_statistics(b);
    MarginalMoments m =
        opt.biased ? marginal_moments_biased(st) : marginal_moments_unbiased(st);
    vars.push_back(moments_json(m));
  }

  if (opt.as_json) {
    json report{{"estimator", opt.biased ? "biased" : "unbiased"},
                {"n", data.n()},
                {"N", data.N()},
                {"variables", vars}};
    std::cout << report.dump(2) << "\n";
    return 0;
  }

  std::cout << "estimator: " << (opt.biased ? "biased" : "unbiased") << "\n";
  std::cout << "n: " << data.n() << "\n";
  std::cout << "N: " << data.N() << "\n";
  for (std::size_t i = 0; i < vars.size(); ++i) {
    std::cout << "variable " << i + 1 << ":\n";
    for (const char* k : {"mu1", "mu2", "mu3", "mu4"})
      if (vars[i].contains(k)) std::cout << "  " << k << ": " << vars[i][k].get<double>() << "\n";
    if (!vars[i]["mu3_available"].get<bool>())
      std::cout << "  mu3: needs at least six observations\n";
    if (!vars[i]["mu4_available"].get<bool>()) std::cout << "  mu4: not estimated\n";
  }
  return 0;
}

struct QformOptions {
  double x = 0.0;
  std::string alphas;
  double mean = -1.0;
  double variance = -1.0;
  double skewness = 0.0;
  bool have_mean = false;
  bool have_variance = false;
  bool have_skewness = false;
  int threads = 0;
  bool as_json = false;
};

int cmd_qform(const QformOptions& opt) {
  Eigen::setNbThreads(resolve_threads(opt.threads));
  json results = json::object();
  QFormMoments m;
  AlphaSpectrum alphas;
  bool have_skew = opt.have_skewness;

  if (!opt.alphas.empty()) {
    if (opt.have_mean || opt.have_variance || opt.have_skewness)
      throw std::invalid_argument("give either --alphas or explicit moments, not both");
    alphas = parse_double_list(opt.alphas, "--alphas");
    for (double a : alphas)
      if (a < 0.0) throw std::invalid_argument("eigenvalues must be nonnegative");
    m = qform_moments(alphas);
    have_skew = true;
    results["exact"] = json{{"p", qform_exact_tail(alphas, opt.x)}, {"valid", true}};
  } else {
    if (!opt.have_mean) throw std::invalid_argument("need --mean or --alphas");
    m.mean = opt.mean;
    if (opt.have_variance) m.variance = opt.variance;
    m.skewness = opt.skewness;
  }

  auto record = [&](const char* name, const PValueResult& r) {
    json entry{{"p", r.p}, {"valid", r.valid}};
    if (!r.note.empty()) entry["note"] = r.note;
    results[name] = entry;
  };
  record("classical", pvalue_classical(opt.x, m.mean));
  const bool have_variance = opt.have_variance || !alphas.empty();
  if (have_variance) {
    record("variance", pvalue_variance(opt.x, m.mean, m.variance));
    record("clt", pvalue_clt(opt.x, m.mean, m.variance));
    if (have_skew) record("pearson", pvalue_pearson(opt.x, m.mean, m.variance, m.skewness));
  }

  if (opt.as_json) {
    json report{{"x", opt.x},
                {"mean", m.mean},
                {"ratio", opt.x / m.mean},
                {"validity_threshold", kTailValidityThreshold},
                {"results", results}};
    if (have_variance) report["variance"] = m.variance;
    if (have_skew) report["skewness"] = m.skewness;
    if (!alphas.empty()) report["alphas"] = alphas;
    std::cout << report.dump(2) << "\n";
    return 0;
  }

  std::cout << "x: " << opt.x << "\n";
  std::cout << "mean: " << m.mean << "\n";
  if (have_variance) std::cout << "variance: " << m.variance << "\n";
  if (have_skew) std::cout << "skewness: " << m.skewness << "\n";
  for (const auto& [name, entry] : results.items()) {
    std::cout << name << ": p = " << entry["p"].get<double>();
    if (entry.contains("note")) std::cout << " (" << entry["note"].get<std::string>() << ")";
    std::cout << "\n";
    if (!entry["valid"].get<bool>())
      std::cout << "warning: " << name << " is not certified at this statistic value\n";
  }
  return 0;
}

struct StudyOptions {
  std::string scenario;
  double param = 0.0;
  int n = 0;
  std::string N = "100";
  bool h0 = false;
  std::string methods = "pearson";
  KindFlags kind;
  EstimatorFlags est;
  std::size_t replicates = 500;
  std::size_t benchmark = 2000;
  double level = 0.05;
  std::uint64_t seed = 0;
  std::string output;
  int threads = 0;
  bool as_json = false;
};

int default_variable_count(Scenario::Kind kind) {
  switch (kind) {
    case Scenario::Kind::tetrahedron: return 3;
    case Scenario::Kind::mixed: return 6;
    case Scenario::Kind::coins: return 3;
    default: return 2;
  }
}

int cmd_study(const StudyOptions& opt) {
  Eigen::setNbThreads(resolve_threads(opt.threads));

  StudyConfig cfg;
  Scenario base;
  base.kind = scenario_kind_from_name(opt.scenario);
  base.n = opt.n > 0 ? opt.n : default_variable_count(base.kind);
  base.param = opt.param;
  base.h0 = opt.h0;
  for (double N : parse_double_list(opt.N, "--N")) {
    if (N < 2 || N != std::floor(N))
      throw std::invalid_argument("--N entries must be integers of at least 2");
    base.N = static_cast<Eigen::Index>(N);
    cfg.scenarios.push_back(base);
  }

  std::stringstream in(opt.methods);
  std::string token;
  while (std::getline(in, token, ',')) {
    TestSpec spec;
    spec.method = method_from_name(detail::trim(token));
    spec.kind = make_kind(opt.kind, base.n);
    spec.estimator.bias = opt.est.biased ? BiasMode::biased : BiasMode::unbiased;
    spec.estimator.horizon = opt.est.limit ? MomentHorizon::limit : MomentHorizon::finite_sample;
    cfg.methods.push_back(spec);
  }

  cfg.replicates = opt.replicates;
  cfg.benchmark_samples = opt.benchmark;
  cfg.level = opt.level;
  cfg.seed = opt.seed;

  std::vector<StudyCell> cells = run_study(cfg);
  std::string body;
  if (opt.as_json) {
    json rows = json::array();
    for (const StudyCell& c : cells) {
      rows.push_back(json{{"scenario", c.scenario}, {"method", c.method},
                          {"metric", "rel_mse"}, {"value", c.rel_mse}});
      rows.push_back(json{{"scenario", c.scenario}, {"method", c.method},
                          {"metric", "rel_mse_samples"}, {"value", c.rel_mse_samples}});
      rows.push_back(json{{"scenario", c.scenario}, {"method", c.method},
                          {"metric", "violation_rate"}, {"value", c.violation_rate}});
      rows.push_back(json{{"scenario", c.scenario}, {"method", c.method},
                          {"metric", "liberal"}, {"value", c.liberal ? 1.0 : 0.0}});
      rows.push_back(json{{"scenario", c.scenario}, {"method", c.method},
                          {"metric", "rejection_rate"}, {"value", c.rejection_rate}});
    }
    body = rows.dump(2) + "\n";
  } else {
    body = study_csv(cells);
  }

  if (opt.output.empty()) {
    std::cout << body;
  } else {
    std::ofstream out(opt.output);
    if (!out) throw CsvError("cannot write " + opt.output);
    out << body;
  }
  return 0;
}

void add_kind_flags(CLI::App* cmd, KindFlags& kind) {
  cmd->add_option("--kind", kind.family, "statistic family")
      ->check(CLI::IsMember({"multivariance", "total", "m-multivariance"}))
      ->capture_default_str();
  cmd->add_option("--m", kind.m, "subset size for m-multivariance")->capture_default_str();
  cmd->add_flag("--raw,!--normalized", kind.raw,
                "skip the per-variable scale normalization (default: normalized)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dependence tests built on distance multivariance"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "multidep 1.0.0");

  TestOptions topt;
  CLI::App* test = app.add_subcommand("test", "run a dependence test on CSV data");
  test->add_option("--input,-i", topt.input, "CSV file, optional header row")->required();
  test->add_option("--variables,-v", topt.variables,
                   "column groups, e.g. \"1-5,6-10\" (1-based, inclusive)")
      ->required();
  test->add_option("--method", topt.method, "p-value method")
      ->check(CLI::IsMember({"classical", "variance", "pearson", "clt", "eigenvalue",
                             "permutation", "bootstrap", "montecarlo"}))
      ->capture_default_str();
  add_kind_flags(test, topt.kind);
  add_estimator_flags(test, topt.est);
  test->add_option("--beta", topt.beta, "distance exponents in (0,2], one or one per variable");
  test->add_option("--resamples", topt.resamples, "resampling or Monte Carlo replicates")
      ->capture_default_str();
  test->add_option("--seed", topt.seed, "random seed for resampling methods")
      ->capture_default_str();
  test->add_option("--threads", topt.threads, "worker threads (default: all cores)");
  test->add_flag("--json", topt.as_json, "machine-readable report");
  test->callback([&] { std::exit(cmd_test(topt)); });

  MomentsOptions mopt;
  CLI::App* moments = app.add_subcommand("moments", "estimate distance moments per variable");
  moments->add_option("--input,-i", mopt.input, "CSV file, optional header row")->required();
  moments->add_option("--variables,-v", mopt.variables, "column groups")->required();
  moments->add_flag("--biased,!--unbiased", mopt.biased,
                    "biased moment estimators (default: unbiased)");
  moments->add_option("--beta", mopt.beta, "distance exponents");
  moments->add_option("--threads", mopt.threads, "worker threads");
  moments->add_flag("--json", mopt.as_json, "machine-readable report");
  moments->callback([&] { std::exit(cmd_moments(mopt)); });

  QformOptions qopt;
  CLI::App* qform = app.add_subcommand("qform", "tail probabilities of Gaussian quadratic forms");
  qform->add_option("--x", qopt.x, "statistic value to query")->required();
  qform->add_option("--alphas", qopt.alphas, "eigenvalue list, e.g. \"0.5,0.3,0.2\"");
  auto* mean_opt = qform->add_option("--mean", qopt.mean, "first moment");
  auto* var_opt = qform->add_option("--variance", qopt.variance, "second central moment");
  auto* skew_opt = qform->add_option("--skewness", qopt.skewness, "standardized third moment");
  qform->add_option("--threads", qopt.threads, "worker threads");
  qform->add_flag("--json", qopt.as_json, "machine-readable report");
  qform->callback([&] {
    qopt.have_mean = mean_opt->count() > 0;
    qopt.have_variance = var_opt->count() > 0;
    qopt.have_skewness = skew_opt->count() > 0;
    std::exit(cmd_qform(qopt));
  });

  StudyOptions sopt;
  CLI::App* study = app.add_subcommand("study", "size and power study against a benchmark");
  study->add_option("--scenario", sopt.scenario, "data-generating scenario")
      ->required()
      ->check(CLI::IsMember({"bernoulli", "uniform", "normal", "student_t", "mixed",
                             "tetrahedron", "srb1a", "srb2", "srb3", "mv_block", "coins"}));
  study->add_option("--param", sopt.param, "scenario parameter (noise, correlation, df)");
  study->add_option("--n", sopt.n, "number of variables (default: per scenario)");
  study->add_option("--N", sopt.N, "sample sizes, e.g. \"20,60,100\"")->capture_default_str();
  study->add_flag("--h0", sopt.h0, "generate the independent counterpart");
  study->add_option("--methods", sopt.methods, "comma list of p-value methods")
      ->capture_default_str();
  add_kind_flags(study, sopt.kind);
  add_estimator_flags(study, sopt.est);
  study->add_option("--replicates", sopt.replicates, "test replications per scenario")
      ->capture_default_str();
  study->add_option("--benchmark", sopt.benchmark, "Monte Carlo benchmark samples")
      ->capture_default_str();
  study->add_option("--level", sopt.level, "rejection level")->capture_default_str();
  study->add_option("--seed", sopt.seed, "random seed")->capture_default_str();
  study->add_option("--output,-o", sopt.output, "write CSV/JSON here instead of stdout");
  study->add_option("--threads", sopt.threads, "worker threads");
  study->add_flag("--json", sopt.as_json, "machine-readable report");
  study->callback([&] { std::exit(cmd_study(sopt)); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const CsvError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
