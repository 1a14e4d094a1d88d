// ctspline: synthesize data, fit smoothing splines, evaluate fitted curves.
//
// Exit codes: 0 success, 1 other failure, 2 usage error, 3 input/output
// error, 4 solver did not converge.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctspline/ctspline.hpp"

namespace {

using json = nlohmann::json;
using namespace ctspline;

constexpr int kExitOther = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNonConverged = 4;

constexpr const char* kFormatTag = "ctspline-fit";
constexpr int kFormatVersion = 1;
constexpr double kSparsityThreshold = 1e-3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable inputs; reported with the I/O exit code.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

Eigen::VectorXd json_vector(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError("'" + what + "' must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError("'" + what + "' must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd json_matrix(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw InputError("'" + what + "' must be a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd row = json_vector(j[static_cast<std::size_t>(i)], what);
    if (i == 0) m.resize(rows, row.size());
    if (row.size() != m.cols()) throw InputError("'" + what + "' has ragged rows");
    m.row(i) = row.transpose();
  }
  return m;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write to '" + path + "' failed");
}

/// {"A": [[...]], "b": [...], "c": [...]}
StateSpace system_from_json(const json& j) {
  if (!j.is_object() || !j.contains("A") || !j.contains("b") || !j.contains("c")) {
    throw InputError("system description needs keys \"A\", \"b\" and \"c\"");
  }
  return make_state_space(json_matrix(j.at("A"), "A"), json_vector(j.at("b"), "b"),
                          json_vector(j.at("c"), "c"));
}

json system_to_json(const StateSpace& sys) {
  return {{"A", matrix_json(sys.A())}, {"b", vector_json(sys.b())}, {"c", vector_json(sys.c())}};
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::uint64_t seed = 0;
  std::string out;
  double variance = 1.0;
};

int run_synth(const SynthArgs& args) {
  if (!(args.variance >= 0.0)) throw UsageError("--variance must be >= 0");
  const auto syn = synth_reference_dataset(args.seed, args.variance);
  write_dataset_file(args.out, syn.data);
  const auto n = syn.data.size();
  std::printf("N %ld\nT %s\nnoise_scale %s\n", static_cast<long>(n),
              format_double(syn.data.times(n - 1)).c_str(),
              format_double(laplace_scale(args.variance)).c_str());
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  std::string system;
  std::string preset;
  std::string mode;
  int p = 1;
  double eta = 0.01;
  double lambda = 1e-4;
  bool estimate_x0 = false;
  int max_iter = L1Config{}.max_iter;
  double tol_abs = L1Config{}.tol_abs;
  double tol_rel = L1Config{}.tol_rel;
  double rho = L1Config{}.rho;
  bool allow_nonconverged = false;
  std::string out;
};

json fit_record(const SplineFit& fit, const DataSet& data, const FitArgs& args, double objective_value,
                long sparsity_count) {
  json config = {{"mode", args.mode}, {"estimate_x0", fit.x0.has_value()}};
  if (args.mode == "l1") {
    config["p"] = args.p;
    config["eta"] = args.eta;
    config["max_iter"] = args.max_iter;
    config["tol_abs"] = args.tol_abs;
    config["tol_rel"] = args.tol_rel;
    config["rho"] = args.rho;
  } else {
    config["lambda"] = args.lambda;
  }
  config["weights"] = {{"count", data.size()},
                       {"min", data.weights.minCoeff()},
                       {"max", data.weights.maxCoeff()},
                       {"all_unit", (data.weights.array() == 1.0).all()}};
  return {
      {"format", kFormatTag},
      {"version", kFormatVersion},
      {"system", system_to_json(fit.system)},
      {"times", vector_json(fit.times)},
      {"theta", vector_json(fit.theta)},
      {"x0", fit.x0 ? vector_json(*fit.x0) : json(nullptr)},
      {"config", config},
      {"report",
       {{"solver", fit.report.solver_name},
        {"iterations", fit.report.iterations},
        {"kkt_residual", fit.report.kkt_residual},
        {"converged", fit.report.converged},
        {"objective", objective_value},
        {"sparsity_threshold", kSparsityThreshold},
        {"sparsity_count", sparsity_count}}},
  };
}

int run_fit(const FitArgs& args, const std::vector<std::string>& given) {
  auto was_given = [&](const std::string& flag) {
    return std::find(given.begin(), given.end(), flag) != given.end();
  };
  if (args.system.empty() == args.preset.empty()) {
    throw UsageError("give exactly one of --system and --preset");
  }
  if (args.mode == "l2") {
    for (const char* flag : {"--p", "--eta", "--estimate-x0", "--rho", "--max-iter", "--tol-abs",
                             "--tol-rel"}) {
      if (was_given(flag)) throw UsageError(std::string(flag) + " applies to --mode l1 only");
    }
    if (!(args.lambda > 0.0)) throw UsageError("--lambda must be > 0");
  } else {
    if (was_given("--lambda")) throw UsageError("--lambda applies to --mode l2 only");
    if (!(args.eta > 0.0)) throw UsageError("--eta must be > 0");
  }

  const StateSpace sys =
      args.preset.empty() ? system_from_json(read_json_file(args.system)) : reference_system();
  const DataSet data = read_dataset_file(args.data);
  const GramOperator op = make_gram_operator(sys, data.times);

  SplineFit fit = [&] {
    if (args.mode == "l2") return fit_l2(sys, data, op.G, args.lambda);
    L1Config config;
    config.eta = args.eta;
    config.p = args.p;
    config.estimate_x0 = args.estimate_x0;
    config.max_iter = args.max_iter;
    config.tol_abs = args.tol_abs;
    config.tol_rel = args.tol_rel;
    config.rho = args.rho;
    return fit_l1(sys, data, op, config);
  }();

  double value = 0.0;
  if (args.mode == "l2") {
    value = l2_objective(op.G, data.weights, data.values, args.lambda, fit.theta);
    fit.report.kkt_residual =
        l2_normal_residual(op.G, data.weights, data.values, args.lambda, fit.theta);
  } else {
    value = objective(fit.theta, fit.x0, op.G, op.H, data.weights, data.values, args.eta, args.p);
  }
  const long count = static_cast<long>(sparsity_report(fit.theta, kSparsityThreshold).count_above);

  write_text_file(args.out, fit_record(fit, data, args, value, count).dump(2) + "\n");
  std::printf("objective %s\niterations %d\nkkt_residual %s\nconverged %s\n"
              "sparsity_count %ld (|theta_i| > %s, of %ld)\n",
              format_double17(value).c_str(), fit.report.iterations,
              format_double(fit.report.kkt_residual).c_str(),
              fit.report.converged ? "true" : "false", count,
              format_double(kSparsityThreshold).c_str(), static_cast<long>(fit.theta.size()));

  if (!fit.report.converged && !args.allow_nonconverged) {
    std::fprintf(stderr,
                 "error: solver did not converge in %d iterations (kkt residual %s); the best "
                 "iterate was written to '%s'. Pass --allow-nonconverged to accept it.\n",
                 fit.report.iterations, format_double(fit.report.kkt_residual).c_str(),
                 args.out.c_str());
    return kExitNonConverged;
  }
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string fit;
  long grid = 1001;
  std::string reference;
  std::string out;
  std::string coef_out;
};

SplineFit fit_from_record(const json& j) {
  try {
    if (j.value("format", "") != kFormatTag) throw InputError("not a ctspline fit record");
    if (j.at("version").get<int>() != kFormatVersion) {
      throw InputError("unsupported fit record version " + j.at("version").dump());
    }
    SplineFit fit{system_from_json(j.at("system")), json_vector(j.at("times"), "times"),
                  json_vector(j.at("theta"), "theta"), std::nullopt, {}, {}};
    if (!j.at("x0").is_null()) fit.x0 = json_vector(j.at("x0"), "x0");
    const json& config = j.at("config");
    fit.settings.mode = config.at("mode").get<std::string>() == "l2" ? FitMode::L2 : FitMode::L1;
    fit.settings.p = config.value("p", 2);
    fit.settings.penalty = config.contains("eta") ? config.at("eta").get<double>()
                                                  : config.at("lambda").get<double>();
    fit.settings.estimate_x0 = fit.x0.has_value();
    const json& report = j.at("report");
    fit.report.solver_name = report.at("solver").get<std::string>();
    fit.report.iterations = report.at("iterations").get<int>();
    fit.report.kkt_residual = report.at("kkt_residual").get<double>();
    fit.report.converged = report.at("converged").get<bool>();
    validate_fit(fit);
    return fit;
  } catch (const json::exception& e) {
    throw InputError(std::string("fit record is incomplete: ") + e.what());
  } catch (const Error& e) {
    throw InputError(std::string("fit record is inconsistent: ") + e.what());
  }
}

std::string default_coef_path(const std::string& curve_path) {
  std::filesystem::path p(curve_path);
  const std::string stem = p.stem().string();
  return (p.parent_path() / (stem + "_coefficients.csv")).string();
}

int run_eval(const EvalArgs& args) {
  if (args.grid < 1) throw UsageError("--grid must be >= 1");
  const SplineFit fit = fit_from_record(read_json_file(args.fit));
  const double horizon = fit.horizon();
  const Eigen::VectorXd grid = uniform_grid(0.0, horizon, args.grid);
  const Eigen::VectorXd curve = output_curve(fit, grid);

  std::ostringstream csv;
  csv << "t,y,u\n";
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    csv << format_double17(grid(k)) << ',' << format_double17(curve(k)) << ','
        << format_double17(control_signal(fit, grid(k))) << '\n';
  }
  write_text_file(args.out, csv.str());

  std::ostringstream coef;
  coef << "i,t_i,theta_i\n";
  for (Eigen::Index i = 0; i < fit.theta.size(); ++i) {
    coef << i + 1 << ',' << format_double17(fit.times(i)) << ',' << format_double17(fit.theta(i))
         << '\n';
  }
  const std::string coef_path = args.coef_out.empty() ? default_coef_path(args.out) : args.coef_out;
  write_text_file(coef_path, coef.str());

  if (!args.reference.empty()) {
    FitError err;
    if (args.reference.rfind("synth:", 0) == 0) {
      // Clean curve on the same number of points over the data span.
      const Eigen::VectorXd span = uniform_grid(fit.times(0), horizon, args.grid);
      err = fit_error(fit, std::function<double(double)>(reference_curve), span);
    } else {
      const DataSet ref = read_dataset_file(args.reference);
      err = fit_error(fit, ref.values, ref.times);
    }
    std::printf("rmse %s\nmax_abs %s\n", format_double17(err.rmse).c_str(),
                format_double17(err.max_abs).c_str());
  }
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::IoError:
    case ErrorKind::ParseError:
    case ErrorKind::DuplicateTime:
    case ErrorKind::NonPositiveTime:
    case ErrorKind::NonPositiveWeight:
    case ErrorKind::NonIncreasingTimes:
      return kExitIo;
    case ErrorKind::MaxIterationsExceeded:
      return kExitNonConverged;
    default:
      return kExitOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-theoretic smoothing splines with L1 or L2 regularization."};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write the reference noisy dataset (sin(2t) + 1).");
  synth_cmd->add_option("--seed", synth.seed, "Noise seed")->capture_default_str();
  synth_cmd->add_option("--out", synth.out, "Output CSV path")->required();
  synth_cmd->add_option("--variance", synth.variance, "Laplace noise variance (0 for none)")
      ->capture_default_str();

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a spline and write a JSON fit record.");
  fit_cmd->add_option("--data", fit.data, "Dataset CSV (t,y or t,y,w)")->required();
  auto* system_opt =
      fit_cmd->add_option("--system", fit.system, "System JSON with keys A, b, c");
  auto* preset_opt = fit_cmd->add_option("--preset", fit.preset,
                                         "Built-in system 1/(s^3+1): 'reference' or 'paper'")
                         ->check(CLI::IsMember({"reference", "paper"}));
  system_opt->excludes(preset_opt);
  fit_cmd->add_option("--mode", fit.mode, "l1 or l2")
      ->required()
      ->check(CLI::IsMember({"l1", "l2"}));
  fit_cmd->add_option("--p", fit.p, "Loss exponent for l1 mode")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  fit_cmd->add_option("--eta", fit.eta, "L1 penalty")->capture_default_str();
  fit_cmd->add_option("--lambda", fit.lambda, "L2 penalty")->capture_default_str();
  fit_cmd->add_flag("--estimate-x0", fit.estimate_x0, "Fit the initial state as well");
  fit_cmd->add_option("--max-iter", fit.max_iter, "Iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit_cmd->add_option("--tol-abs", fit.tol_abs, "Absolute tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit_cmd->add_option("--tol-rel", fit.tol_rel, "Relative tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit_cmd->add_option("--rho", fit.rho, "Initial ADMM penalty (p = 1)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit_cmd->add_flag("--allow-nonconverged", fit.allow_nonconverged,
                    "Exit 0 even if the solver did not converge");
  fit_cmd->add_option("--out", fit.out, "Output fit record (JSON)")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a fit record on a uniform grid.");
  eval_cmd->add_option("--fit", eval.fit, "Fit record JSON")->required();
  eval_cmd->add_option("--grid", eval.grid, "Number of grid points over [0, T]")
      ->capture_default_str();
  eval_cmd->add_option("--reference", eval.reference,
                       "synth:<seed> for the clean curve, or a dataset CSV");
  eval_cmd->add_option("--out", eval.out, "Curve CSV (t,y,u)")->required();
  eval_cmd->add_option("--coef-out", eval.coef_out,
                       "Coefficient CSV (i,t_i,theta_i); default <out stem>_coefficients.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (fit_cmd->parsed()) {
      std::vector<std::string> given;
      for (const CLI::Option* opt : fit_cmd->get_options()) {
        if (opt->count() > 0) given.push_back(opt->get_name());
      }
      return run_fit(fit, given);
    }
    return run_eval(eval);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitOther;
  }
}
