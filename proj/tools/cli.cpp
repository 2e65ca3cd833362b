#include "cli.hpp"

#include "moe/datagen.hpp"
#include "moe/error.hpp"
#include "moe/estimation.hpp"
#include "moe/inference.hpp"
#include "moe/io.hpp"
#include "moe/selection.hpp"
#include "moe/tasks.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

namespace moe::cli {

namespace {

using nlohmann::ordered_json;

class UsageError : public Error {
 public:
  using Error::Error;
};

int default_threads() {
  if (const char* env = std::getenv("MOE_THREADS")) {
    const int t = std::atoi(env);
    if (t >= 1) return t;
  }
  return 1;
}

struct FitOptions {
  std::string data;
  std::string family = "gaussian";
  std::string response = "y";
  std::vector<std::string> covariates;
  std::string design = "raw";
  int classes = 0;
  int starts = 10;
  std::uint64_t seed = 1;
  int max_cycles = 1000;
  double rel_tol = 1e-8;
  double variance_floor = 1e-10;
  int irls_max_inner = 25;
  int threads = default_threads();
  bool covariance = false;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--data", data, "Input CSV")->required();
    app->add_option("--family", family, "gaussian | logistic | poisson | multinomial");
    app->add_option("--response", response, "Response column");
    app->add_option("--covariates", covariates, "Covariate columns (default: all others)")
        ->delimiter(',');
    app->add_option("--design", design, "Expert design: raw | poly:<degree>");
    app->add_option("--classes", classes, "K for multinomial (default: max label)");
    app->add_option("--starts", starts, "Random starts per g");
    app->add_option("--seed", seed, "Seed");
    app->add_option("--max-cycles", max_cycles, "Maximum MM cycles");
    app->add_option("--rel-tol", rel_tol, "Relative tolerance on Q_n");
    app->add_option("--variance-floor", variance_floor, "Variance floor factor");
    app->add_option("--irls-max-inner", irls_max_inner, "Inner IRLS iterations");
    app->add_option("--threads", threads, "Worker threads (env MOE_THREADS)");
    app->add_flag("--covariance", covariance, "Store the sandwich covariance in the model");
    app->add_option("--out", out, "Output model JSON")->required();
  }

  FitConfig config() const {
    FitConfig c;
    c.n_starts = starts;
    c.seed = seed;
    c.max_cycles = max_cycles;
    c.rel_tol = rel_tol;
    c.variance_floor_factor = variance_floor;
    c.irls_max_inner = irls_max_inner;
    c.threads = threads;
    c.validate();
    return c;
  }
};

struct LoadedData {
  Dataset data;
  std::vector<std::string> covariates;
};

LoadedData load_dataset(const FitOptions& o, Family family) {
  LoadedData out;
  const Table table = read_csv(o.data);
  out.data = dataset_from_table(table, o.response, o.covariates, family, o.classes, &out.covariates);
  return out;
}

ModelFile make_model(const FitResult& f, const Dataset& data, const std::vector<std::string>& covs,
                     const std::string& response, bool with_covariance, std::ostream& err) {
  ModelFile model;
  model.params = f.theta_hat;
  model.covariates = covs;
  model.response = response;
  FitMeta meta;
  meta.log_ql = f.log_ql();
  meta.dim = static_cast<int>(parameter_count(f.theta_hat));
  meta.bic = bic(f, data);
  meta.n = data.n();
  meta.cycles = f.cycles_used;
  meta.seed = f.seed_used;
  meta.converged = f.converged;
  meta.degenerate = f.degenerate;
  model.fit = meta;
  if (with_covariance) {
    model.covariance = sandwich_covariance(data, f.theta_hat).cov;
    err << "note: covariance refers to the root returned by multi-start; other local maxima may "
           "exist\n";
  }
  return model;
}

std::string summary_text(const ModelFile& m) {
  std::ostringstream s;
  s << "family: " << to_string(m.params.family) << "\n"
    << "g: " << m.params.g() << "\n"
    << "expert design: " << m.params.design.to_string() << "\n";
  if (m.fit) {
    s << "logQL: " << format_number(m.fit->log_ql) << "\n"
      << "dim: " << m.fit->dim << "\n"
      << "BIC: " << format_number(m.fit->bic) << "\n"
      << "n: " << m.fit->n << "\n"
      << "cycles: " << m.fit->cycles << "\n"
      << "converged: " << (m.fit->converged ? "yes" : "no") << "\n"
      << "degenerate: " << (m.fit->degenerate ? "yes" : "no") << "\n";
  }
  return s.str();
}

// ---------------------------------------------------------------------------

std::string sidecar_path(const std::string& out) { return out + ".json"; }

void write_sample(const std::string& out, const Dataset& data, const std::vector<int>* z,
                  ordered_json meta) {
  write_csv(out, dataset_table(data, z));
  write_text(sidecar_path(out), meta.dump(2) + "\n");
}

SignalSpec signal_spec_from_json(const ordered_json& doc, std::uint64_t seed) {
  SignalSpec spec;
  spec.seed = seed;
  try {
    spec.n = doc.value("n", Index{550});
    spec.breakpoints = doc.at("breakpoints").get<std::vector<double>>();
    for (const auto& r : doc.at("regimes"))
      spec.regimes.push_back({r.value("b0", 0.0), r.value("b1", 0.0), r.value("b2", 0.0),
                              r.at("sd").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad signal spec: ") + e.what());
  }
  return spec;
}

ordered_json signal_spec_json(const SignalSpec& spec) {
  ordered_json regimes = ordered_json::array();
  for (const auto& r : spec.regimes)
    regimes.push_back({{"b0", r.b0}, {"b1", r.b1}, {"b2", r.b2}, {"sd", r.noise_sd}});
  return {{"n", spec.n}, {"breakpoints", spec.breakpoints}, {"regimes", regimes}};
}

// ---------------------------------------------------------------------------

void report_columns(const std::vector<std::string>& expected, const Table& table) {
  std::string missing;
  for (const auto& name : expected)
    if (table.column(name) < 0) missing += "\n  - " + name;
  if (missing.empty()) return;
  std::string found;
  for (const auto& h : table.header) found += "\n  + " + h;
  throw UsageError("input columns do not match the model\nexpected but missing:" + missing +
                   "\nfound:" + found);
}

Table predict_table(const ModelFile& model, const Table& input, const std::string& mode,
                    double level) {
  const MoeParams& theta = model.params;
  std::vector<std::string> needed = model.covariates;
  if (mode == "cluster-posterior") needed.push_back(model.response);
  report_columns(needed, input);

  const Index n = input.values.rows();
  MatrixXd x(n, theta.p);
  for (int j = 0; j < theta.p; ++j) x.col(j) = input.values.col(input.column(model.covariates[j]));

  std::vector<std::string> extra;
  const int g = theta.g();
  if (mode == "classify") {
    if (theta.family != Family::Multinomial)
      throw UsageError("classify needs a multinomial model, found " +
                       std::string(to_string(theta.family)));
    for (int k = 1; k <= theta.num_classes; ++k) extra.push_back("post" + std::to_string(k));
    extra.push_back("label");
  } else if (mode == "cluster-posterior" || mode == "cluster-gate") {
    const std::string prefix = mode == "cluster-gate" ? "gate" : "tau";
    for (int z = 1; z <= g; ++z) extra.push_back(prefix + std::to_string(z));
    extra.push_back("label");
  } else if (mode == "mean" || mode == "variance" || mode == "mean-ci") {
    if (theta.family != Family::Gaussian)
      throw UsageError(mode + " needs a Gaussian model, found " +
                       std::string(to_string(theta.family)));
    if (mode == "mean") extra = {"mean"};
    if (mode == "variance") extra = {"variance"};
    if (mode == "mean-ci") {
      if (!model.covariance)
        throw UsageError("mean-ci needs a model saved with --covariance");
      extra = {"mean", "lower", "upper"};
    }
  } else {
    throw UsageError("unknown prediction mode '" + mode + "'");
  }

  Table out;
  out.header = input.header;
  out.header.insert(out.header.end(), extra.begin(), extra.end());
  out.values.resize(n, static_cast<Index>(out.header.size()));
  out.values.leftCols(input.values.cols()) = input.values;
  const Index base = input.values.cols();
  const Index ycol = input.column(model.response);
  for (Index i = 0; i < n; ++i) {
    const VectorXd xi = x.row(i).transpose();
    auto put_prediction = [&](const Prediction& p) {
      for (Index k = 0; k < p.posterior.size(); ++k) out.values(i, base + k) = p.posterior(k);
      out.values(i, base + p.posterior.size()) = p.label;
    };
    if (mode == "classify") {
      put_prediction(classify_map(xi, theta));
    } else if (mode == "cluster-posterior") {
      put_prediction(cluster_posterior(input.values(i, ycol), xi, theta));
    } else if (mode == "cluster-gate") {
      put_prediction(cluster_gate(xi, theta));
    } else if (mode == "mean") {
      out.values(i, base) = predict_mean(xi, theta);
    } else if (mode == "variance") {
      out.values(i, base) = predict_variance(xi, theta);
    } else {
      const Interval ci = mean_ci(xi, theta, *model.covariance, level);
      out.values(i, base) = predict_mean(xi, theta);
      out.values(i, base + 1) = ci.lower;
      out.values(i, base + 2) = ci.upper;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Soft-max gated mixture-of-experts: simulate, fit, select, predict, summarize",
               "moe"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->require_subcommand(1);
  Index sim_n = -1;
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  std::string sim_model;
  double box_low = -1.0, box_high = 1.0;
  std::string spec_path;
  std::string preset = "default";
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--n", sim_n, "Number of rows");
    sub->add_option("--seed", sim_seed, "Seed");
    sub->add_option("--out", sim_out, "Output CSV")->required();
  };
  auto* sim_three = simulate->add_subcommand("three-class", "Three-class problem on [-5,5]^2");
  add_common(sim_three);
  auto* sim_moe = simulate->add_subcommand("moe", "Sample from a model file");
  add_common(sim_moe);
  sim_moe->add_option("--model", sim_model, "Model JSON")->required();
  sim_moe->add_option("--low", box_low, "Lower bound of the uniform covariate box");
  sim_moe->add_option("--high", box_high, "Upper bound of the uniform covariate box");
  auto* sim_signal = simulate->add_subcommand("switch-signal", "Piecewise quadratic signal");
  add_common(sim_signal);
  sim_signal->add_option("--spec", spec_path, "Signal spec JSON");
  sim_signal->add_option("--preset", preset, "default (8 regimes) | four");

  // fit / select
  FitOptions fit_opts;
  int fit_g = 1;
  auto* fit_cmd = app.add_subcommand("fit", "Multi-start fit for one g");
  fit_opts.add_to(fit_cmd);
  fit_cmd->add_option("--g", fit_g, "Number of components")->required();

  FitOptions sel_opts;
  int max_g = 1;
  std::string bic_out, summary_out;
  auto* select_cmd = app.add_subcommand("select", "Fit g = 1..G and choose g by BIC");
  sel_opts.add_to(select_cmd);
  select_cmd->add_option("--G", max_g, "Largest g")->required();
  select_cmd->add_option("--bic-out", bic_out, "BIC table CSV");
  select_cmd->add_option("--summary-out", summary_out, "Summary text file");
  bool allow_unconverged = false;
  select_cmd->add_flag("--allow-unconverged", allow_unconverged,
                       "Let fits stopped by --max-cycles compete in the BIC choice");

  // predict
  std::string pred_model, pred_data, pred_mode, pred_out;
  double level = 0.95;
  auto* predict_cmd = app.add_subcommand("predict", "Apply a fitted model");
  predict_cmd->add_option("--model", pred_model, "Model JSON")->required();
  predict_cmd->add_option("--data", pred_data, "Input CSV")->required();
  predict_cmd
      ->add_option("--mode", pred_mode,
                   "classify | cluster-posterior | cluster-gate | mean | variance | mean-ci")
      ->required();
  predict_cmd->add_option("--out", pred_out, "Output CSV")->required();
  predict_cmd->add_option("--level", level, "Confidence level for mean-ci");

  // summarize
  std::string sum_model, sum_data, coef_out;
  double sum_level = 0.95;
  auto* summarize_cmd = app.add_subcommand("summarize", "Print a model and its coefficients");
  summarize_cmd->add_option("--model", sum_model, "Model JSON")->required();
  summarize_cmd->add_option("--data", sum_data, "Data for sandwich standard errors");
  summarize_cmd->add_option("--coef-out", coef_out, "Coefficient CSV");
  summarize_cmd->add_option("--level", sum_level, "Confidence level");

  std::vector<std::string> argv_store{"moe"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  if (simulate->parsed()) {
    if (sim_three->parsed()) {
      const Index n = sim_n < 0 ? 1000 : sim_n;
      if (n < 1) throw UsageError("--n must be at least 1");
      const Dataset data = gen_three_class(n, sim_seed);
      write_sample(sim_out, data, nullptr,
                   {{"generator", "three-class"}, {"n", n}, {"seed", sim_seed}, {"rng", "mt19937_64"}});
    } else if (sim_moe->parsed()) {
      const Index n = sim_n < 0 ? 1000 : sim_n;
      if (n < 1) throw UsageError("--n must be at least 1");
      if (!(box_low < box_high)) throw UsageError("--low must be below --high");
      const ModelFile model = load_model(sim_model);
      auto sample = gen_moe_sample(model.params, uniform_box(model.params.p, box_low, box_high), n, sim_seed);
      write_sample(sim_out, sample.data, &sample.z_true,
                   {{"generator", "moe"}, {"n", n}, {"seed", sim_seed}, {"rng", "mt19937_64"},
                    {"covariates", {{"distribution", "uniform"}, {"low", box_low}, {"high", box_high}}},
                    {"model", model_to_json(model)}});
    } else {
      SignalSpec spec;
      if (!spec_path.empty()) {
        ordered_json doc;
        try {
          doc = ordered_json::parse(read_text(spec_path));
        } catch (const nlohmann::json::parse_error& e) {
          throw IoError(std::string("cannot parse signal spec: ") + e.what());
        }
        spec = signal_spec_from_json(doc, sim_seed);
      } else if (preset == "default") {
        spec = SignalSpec::default_spec(sim_seed);
      } else if (preset == "four") {
        spec = SignalSpec::four_regimes(sim_seed);
      } else {
        throw UsageError("unknown preset '" + preset + "'");
      }
      if (sim_n >= 0) spec.n = sim_n;
      if (spec.n < 2) throw UsageError("--n must be at least 2 for a signal");
      auto sample = gen_switch_signal(spec);
      ordered_json meta = {{"generator", "switch-signal"}, {"seed", sim_seed}, {"rng", "mt19937_64"}};
      meta["spec"] = signal_spec_json(spec);
      write_sample(sim_out, sample.data, &sample.z_true, meta);
    }
    out << "wrote " << sim_out << "\n";
    return kExitOk;
  }

  if (fit_cmd->parsed()) {
    const Family family = parse_family(fit_opts.family);
    const ExpertDesign design = ExpertDesign::parse(fit_opts.design);
    const FitConfig config = fit_opts.config();
    if (fit_g < 1) throw UsageError("--g must be at least 1");
    const LoadedData loaded = load_dataset(fit_opts, family);
    const FitResult f = multi_start_fit(loaded.data, fit_g, family, design, config);
    const ModelFile model = make_model(f, loaded.data, loaded.covariates, fit_opts.response,
                                       fit_opts.covariance, err);
    save_model(fit_opts.out, model);
    out << summary_text(model);
    return kExitOk;
  }

  if (select_cmd->parsed()) {
    const Family family = parse_family(sel_opts.family);
    const ExpertDesign design = ExpertDesign::parse(sel_opts.design);
    const FitConfig config = sel_opts.config();
    if (max_g < 1) throw UsageError("--G must be at least 1");
    const LoadedData loaded = load_dataset(sel_opts, family);
    const SelectionReport report = select_g(loaded.data, max_g, family, design, config, !allow_unconverged);
    const ModelFile model = make_model(report.selected(), loaded.data, loaded.covariates,
                                       sel_opts.response, sel_opts.covariance, err);
    save_model(sel_opts.out, model);
    std::ostringstream table;
    write_bic_table(table, report);
    if (!bic_out.empty()) write_text(bic_out, table.str());
    std::ostringstream summary;
    summary << "selected g: " << report.g_hat << "\n" << summary_text(model) << "\n" << table.str();
    for (const auto& row : report.rows)
      if (row.failed) summary << "g = " << row.g << " failed: " << row.diagnostic << "\n";
    if (!summary_out.empty()) write_text(summary_out, summary.str());
    out << summary.str();
    return kExitOk;
  }

  if (predict_cmd->parsed()) {
    if (pred_mode == "mean-ci" && !(level > 0.0 && level < 1.0))
      throw UsageError("--level must be in (0, 1)");
    const ModelFile model = load_model(pred_model);
    const Table input = read_csv(pred_data);
    write_csv(pred_out, predict_table(model, input, pred_mode, level));
    out << "wrote " << pred_out << " (" << input.values.rows() << " rows)\n";
    return kExitOk;
  }

  if (summarize_cmd->parsed()) {
    if (!(sum_level > 0.0 && sum_level < 1.0)) throw UsageError("--level must be in (0, 1)");
    const ModelFile model = load_model(sum_model);
    out << summary_text(model);
    std::optional<MatrixXd> cov = model.covariance;
    if (!sum_data.empty()) {
      const Table table = read_csv(sum_data);
      report_columns(model.covariates, table);
      const Dataset data = dataset_from_table(table, model.response, model.covariates,
                                              model.params.family, model.params.num_classes);
      cov = sandwich_covariance(data, model.params).cov;
    }
    const VectorXd est = pack(model.params);
    const auto names = parameter_names(model.params);
    Table coef;
    coef.header = {"estimate"};
    if (cov) coef.header = {"estimate", "std_error", "lower", "upper"};
    coef.values.resize(est.size(), static_cast<Index>(coef.header.size()));
    const double zq = normal_quantile(0.5 * (1.0 + sum_level));
    for (Index j = 0; j < est.size(); ++j) {
      coef.values(j, 0) = est(j);
      if (cov) {
        const double se = std::sqrt(std::max(0.0, (*cov)(j, j)));
        coef.values(j, 1) = se;
        coef.values(j, 2) = est(j) - zq * se;
        coef.values(j, 3) = est(j) + zq * se;
      }
    }
    std::string text = "parameter";
    for (const auto& h : coef.header) text += "," + h;
    text += "\n";
    for (Index j = 0; j < est.size(); ++j) {
      text += names[j];
      for (Index c = 0; c < coef.values.cols(); ++c) text += "," + format_number(coef.values(j, c));
      text += "\n";
    }
    if (!coef_out.empty()) write_text(coef_out, text);
    out << "\n" << text;
    return kExitOk;
  }
  return kExitUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace moe::cli
