#include "ajm/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ajm/data_io.hpp"
#include "ajm/derivatives.hpp"
#include "ajm/formula.hpp"
#include "ajm/mcmc.hpp"
#include "ajm/metrics.hpp"
#include "ajm/mode.hpp"
#include "ajm/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ajm {

namespace {

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Eigen::VectorXd(m.row(i))));
  return rows;
}

Eigen::VectorXd vec_from(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

Eigen::MatrixXd mat_from(const json& a) {
  if (a.empty()) return Eigen::MatrixXd();
  Eigen::MatrixXd m(a.size(), a[0].size());
  for (std::size_t i = 0; i < a.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = vec_from(a[i]).transpose();
  return m;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& output_names) {
  json m;
  m["command"] = command;
  m["version"] = version;
  m["config"] = config;
  json inputs = json::object();
  for (const std::string& p : input_paths) inputs[p] = digest_hex(fnv1a64_file(p));
  m["inputs"] = inputs;
  m["outputs"] = output_names;
  write_file((dir / "manifest.json").string(), m.dump(2) + "\n");
}

int cmd_simulate(const std::string& setting_name, std::uint64_t seed, const std::string& out) {
  SimSetting setting = SimSetting::preset(setting_name, seed);
  SimResult result = assemble_dataset(setting);
  fs::create_directories(out);
  fs::path dir(out);
  write_joint_data(result.data, (dir / "longitudinal.csv").string(),
                   (dir / "survival.csv").string());
  save_truth(result.truth, (dir / "truth.csv").string());
  json config{{"setting", setting_name}, {"seed", seed}};
  write_manifest(dir, "simulate", config, {},
                 {"longitudinal.csv", "survival.csv", "truth.csv"});
  std::cout << "wrote " << result.data.n() << " subjects, " << result.data.N() << " records, "
            << result.data.event.sum() << " events to " << out << "\n";
  return exit_ok;
}

JointData load_data_dir(const std::string& dir) {
  return load_joint_data((fs::path(dir) / "longitudinal.csv").string(),
                         (fs::path(dir) / "survival.csv").string());
}

json mode_summary(const ModeFit& fit, const std::string& formula_text) {
  json out;
  out["estimator"] = "mode";
  out["version"] = version;
  out["formula"] = formula_text;
  out["config"] = {{"tol", fit.config.tol},
                   {"max_sweeps", fit.config.max_sweeps},
                   {"quad_points", fit.config.quad_points},
                   {"estimate_tau2", fit.config.estimate_tau2}};
  out["logpost"] = fit.logpost;
  out["converged"] = fit.converged;
  out["sweeps"] = fit.sweeps;
  json blocks = json::array();
  for (std::size_t bi = 0; bi < fit.blocks.size(); ++bi) {
    const DesignBlock& b = fit.state.blocks()[bi];
    const BlockEstimate& est = fit.blocks[bi];
    json jb;
    jb["label"] = b.term.label();
    jb["predictor"] = predictor_name(b.term.predictor);
    jb["p"] = b.p;
    jb["beta"] = to_json(est.beta);
    jb["se"] = to_json(est.se);
    jb["tau2"] = est.tau2;
    jb["edf"] = est.edf;
    jb["cov"] = to_json(est.cov);
    blocks.push_back(std::move(jb));
  }
  out["blocks"] = std::move(blocks);
  return out;
}

ModeFit load_mode_fit(const json& summary, const JointData& data) {
  if (summary.at("estimator").get<std::string>() != "mode")
    throw ValidationError("expected a mode fit summary");
  ModeFit fit;
  fit.spec = parse_formula(summary.at("formula").get<std::string>());
  fit.config.tol = summary.at("config").at("tol").get<double>();
  fit.config.max_sweeps = summary.at("config").at("max_sweeps").get<int>();
  fit.config.quad_points = summary.at("config").at("quad_points").get<int>();
  fit.config.estimate_tau2 = summary.at("config").at("estimate_tau2").get<bool>();
  fit.state = ModelState::build(fit.spec, data, fit.config.quad_points);
  fit.logpost = summary.at("logpost").get<double>();
  fit.converged = summary.at("converged").get<bool>();
  fit.sweeps = summary.at("sweeps").get<int>();
  const json& blocks = summary.at("blocks");
  if (blocks.size() != fit.state.blocks().size())
    throw ValidationError("fit summary does not match the model formula");
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const json& jb = blocks[bi];
    BlockEstimate est;
    est.beta = vec_from(jb.at("beta"));
    est.se = vec_from(jb.at("se"));
    est.tau2 = jb.at("tau2").get<std::vector<double>>();
    est.edf = jb.at("edf").get<double>();
    est.cov = mat_from(jb.at("cov"));
    fit.state.set_beta(static_cast<int>(bi), est.beta);
    for (std::size_t v = 0; v < est.tau2.size(); ++v)
      fit.state.blocks()[bi].set_tau2(static_cast<int>(v), est.tau2[v]);
    fit.blocks.push_back(std::move(est));
  }
  return fit;
}

std::string sampler_name(Tau2Sampler s) {
  switch (s) {
    case Tau2Sampler::automatic: return "auto";
    case Tau2Sampler::gibbs: return "gibbs";
    case Tau2Sampler::slice: return "slice";
  }
  return "auto";
}

json mean_summary(const PosteriorSamples& samples, const ChainSummary& summary,
                  const ModelState& state, const std::string& formula_text) {
  json out;
  out["estimator"] = "mean";
  out["version"] = version;
  out["formula"] = formula_text;
  out["config"] = {{"n_iter", samples.config.n_iter},   {"burn_in", samples.config.burn_in},
                   {"thin", samples.config.thin},       {"seed", samples.config.seed},
                   {"chains", samples.config.chains},   {"quad_points", samples.config.quad_points},
                   {"tau2_sampler", sampler_name(samples.config.tau2_sampler)}};
  out["kept"] = samples.kept();
  out["logpost_mean"] = samples.logpost.mean();
  json blocks = json::array();
  for (std::size_t bi = 0; bi < samples.blocks.size(); ++bi) {
    json jb;
    jb["label"] = state.blocks()[bi].term.label();
    jb["predictor"] = predictor_name(state.blocks()[bi].term.predictor);
    jb["p"] = state.blocks()[bi].p;
    jb["acceptance"] = samples.blocks[bi].acceptance();
    jb["beta_mean"] = to_json(summary.beta_mean[bi]);
    jb["beta_lo"] = to_json(summary.beta_lo[bi]);
    jb["beta_hi"] = to_json(summary.beta_hi[bi]);
    jb["tau2_mean"] = to_json(summary.tau2_mean[bi]);
    blocks.push_back(std::move(jb));
  }
  out["blocks"] = std::move(blocks);
  json bands = json::object();
  for (const auto& [k, band] : summary.bands) {
    bands[predictor_name(k)] = {{"times", to_json(band.times)},
                                {"mean", to_json(band.mean)},
                                {"lo", to_json(band.lo)},
                                {"hi", to_json(band.hi)}};
  }
  out["bands"] = std::move(bands);
  return out;
}

std::string trace_csv(const PosteriorSamples& samples) {
  std::ostringstream out;
  out << "kept,iteration,chain,block,parameter,index,value\n";
  int kept_per_chain = samples.config.chains ? samples.kept() / samples.config.chains : 0;
  for (int r = 0; r < samples.kept(); ++r) {
    int within = kept_per_chain ? r % kept_per_chain : r;
    long iteration = samples.config.burn_in + static_cast<long>(within) * samples.config.thin;
    std::string prefix = std::to_string(r) + "," + std::to_string(iteration) + "," +
                         std::to_string(samples.chain[r]) + ",";
    out << prefix << "-1,logpost,0," << fmt_double(samples.logpost(r)) << "\n";
    for (std::size_t bi = 0; bi < samples.blocks.size(); ++bi) {
      const BlockSamples& b = samples.blocks[bi];
      for (Eigen::Index j = 0; j < b.beta.cols(); ++j)
        out << prefix << bi << ",beta," << j << "," << fmt_double(b.beta(r, j)) << "\n";
      for (Eigen::Index j = 0; j < b.tau2.cols(); ++j)
        out << prefix << bi << ",tau2," << j << "," << fmt_double(b.tau2(r, j)) << "\n";
    }
  }
  return out.str();
}

PosteriorSamples load_trace(const std::string& path, const ModelState& state) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) ||
      line != "kept,iteration,chain,block,parameter,index,value")
    throw ValidationError(path + ": unexpected trace header");

  struct Row {
    int kept, chain, block, index;
    std::string parameter;
    double value;
  };
  std::vector<Row> rows;
  int kept = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r;
    std::istringstream ls(line);
    std::string field;
    std::getline(ls, field, ',');
    r.kept = std::stoi(field);
    std::getline(ls, field, ',');  // iteration, unused here
    std::getline(ls, field, ',');
    r.chain = std::stoi(field);
    std::getline(ls, field, ',');
    r.block = std::stoi(field);
    std::getline(ls, r.parameter, ',');
    std::getline(ls, field, ',');
    r.index = std::stoi(field);
    std::getline(ls, field, ',');
    r.value = std::strtod(field.c_str(), nullptr);
    kept = std::max(kept, r.kept + 1);
    rows.push_back(std::move(r));
  }

  PosteriorSamples samples;
  samples.logpost.resize(kept);
  samples.chain.assign(kept, 0);
  samples.blocks.resize(state.blocks().size());
  for (std::size_t bi = 0; bi < state.blocks().size(); ++bi) {
    samples.blocks[bi].beta.resize(kept, state.blocks()[bi].p);
    samples.blocks[bi].tau2.resize(kept,
                                   static_cast<Eigen::Index>(state.blocks()[bi].tau2.size()));
  }
  for (const Row& r : rows) {
    samples.chain[r.kept] = r.chain;
    if (r.parameter == "logpost") {
      samples.logpost(r.kept) = r.value;
    } else if (r.parameter == "beta") {
      samples.blocks.at(r.block).beta(r.kept, r.index) = r.value;
    } else if (r.parameter == "tau2") {
      samples.blocks.at(r.block).tau2(r.kept, r.index) = r.value;
    } else {
      throw ValidationError(path + ": unknown parameter '" + r.parameter + "'");
    }
  }
  return samples;
}

struct FitOptions {
  std::string estimator, data_dir, formula_path, out_dir, init_dir;
  ModeConfig mode;
  SamplerConfig sampler;
  std::string tau2_sampler = "auto";
  int quad_points = 25;
};

int cmd_fit(const FitOptions& opt) {
  JointData data = load_data_dir(opt.data_dir);
  std::string formula_text = read_file(opt.formula_path);
  ModelSpec spec = parse_formula(formula_text);
  fs::create_directories(opt.out_dir);
  fs::path dir(opt.out_dir);

  std::vector<std::string> inputs = {
      (fs::path(opt.data_dir) / "longitudinal.csv").string(),
      (fs::path(opt.data_dir) / "survival.csv").string(), opt.formula_path};

  if (opt.estimator == "mode") {
    ModeConfig config = opt.mode;
    config.quad_points = opt.quad_points;
    ModeFit fit = fit_mode(spec, data, config);
    write_file((dir / "summary.json").string(), mode_summary(fit, formula_text).dump(2) + "\n");
    json jconfig{{"estimator", "mode"},
                 {"tol", config.tol},
                 {"max_sweeps", config.max_sweeps},
                 {"quad_points", config.quad_points},
                 {"estimate_tau2", config.estimate_tau2}};
    write_manifest(dir, "fit", jconfig, inputs, {"summary.json"});
    std::cout << "mode fit: logpost " << fit.logpost << ", " << fit.sweeps << " sweeps, "
              << (fit.converged ? "converged" : "not converged") << "\n";
    return fit.converged ? exit_ok : exit_numerical;
  }

  SamplerConfig config = opt.sampler;
  config.quad_points = opt.quad_points;
  if (opt.tau2_sampler == "gibbs")
    config.tau2_sampler = Tau2Sampler::gibbs;
  else if (opt.tau2_sampler == "slice")
    config.tau2_sampler = Tau2Sampler::slice;

  ModeFit init;
  const ModeFit* init_ptr = nullptr;
  if (!opt.init_dir.empty()) {
    json init_summary =
        json::parse(read_file((fs::path(opt.init_dir) / "summary.json").string()));
    init = load_mode_fit(init_summary, data);
    if (!(init.spec == spec))
      throw ValidationError("--init fit uses a different model formula");
    init_ptr = &init;
    inputs.push_back((fs::path(opt.init_dir) / "summary.json").string());
  }

  PosteriorSamples samples = run_chain(spec, data, config, init_ptr);
  ModelState state = ModelState::build(spec, data, config.quad_points);
  Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(101, 0.0, data.T.maxCoeff());
  ChainSummary summary = summarize(samples, state, times);
  write_file((dir / "summary.json").string(),
             mean_summary(samples, summary, state, formula_text).dump(2) + "\n");
  write_file((dir / "trace.csv").string(), trace_csv(samples));
  json jconfig{{"estimator", "mean"},     {"n_iter", config.n_iter},
               {"burn_in", config.burn_in}, {"thin", config.thin},
               {"seed", config.seed},     {"chains", config.chains},
               {"quad_points", config.quad_points},
               {"tau2_sampler", sampler_name(config.tau2_sampler)}};
  write_manifest(dir, "fit", jconfig, inputs, {"summary.json", "trace.csv"});
  std::cout << "mean fit: " << samples.kept() << " kept samples";
  for (std::size_t bi = 0; bi < samples.blocks.size(); ++bi)
    std::cout << (bi ? ", " : "; acceptance ") << state.blocks()[bi].term.label() << " "
              << samples.blocks[bi].acceptance();
  std::cout << "\n";
  return exit_ok;
}

std::vector<fs::path> sorted_subdirs(const std::string& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string manifest_input_digest(const json& manifest, const std::string& basename) {
  for (const auto& [path, digest] : manifest.at("inputs").items()) {
    if (fs::path(path).filename().string() == basename) return digest.get<std::string>();
  }
  throw ValidationError("fit manifest records no input named '" + basename + "'");
}

int cmd_metrics(const std::string& fits_dir, const std::string& truth_dir,
                const std::string& out_path) {
  std::vector<fs::path> fits = sorted_subdirs(fits_dir);
  std::vector<fs::path> truths = sorted_subdirs(truth_dir);
  if (fits.empty()) throw ValidationError("no fit directories under '" + fits_dir + "'");
  if (fits.size() != truths.size())
    throw ValidationError("fit and truth replicate counts differ (" +
                          std::to_string(fits.size()) + " vs " + std::to_string(truths.size()) +
                          ")");

  std::vector<ReplicateMetrics> reps;
  std::vector<std::string> inputs;
  std::vector<JointData> datasets;  // keep alive for evaluators
  datasets.reserve(fits.size());
  for (std::size_t r = 0; r < fits.size(); ++r) {
    if (fits[r].filename() != truths[r].filename())
      throw ValidationError("replicate names differ: '" + fits[r].filename().string() +
                            "' vs '" + truths[r].filename().string() + "'");
    std::string long_path = (truths[r] / "longitudinal.csv").string();
    std::string surv_path = (truths[r] / "survival.csv").string();
    json manifest = json::parse(read_file((fits[r] / "manifest.json").string()));
    if (manifest_input_digest(manifest, "longitudinal.csv") !=
            digest_hex(fnv1a64_file(long_path)) ||
        manifest_input_digest(manifest, "survival.csv") != digest_hex(fnv1a64_file(surv_path)))
      throw ValidationError("fit '" + fits[r].filename().string() +
                            "' was not produced from the paired dataset");

    datasets.push_back(load_joint_data(long_path, surv_path));
    const JointData& data = datasets.back();
    SimTruth truth = load_truth((truths[r] / "truth.csv").string());
    json summary = json::parse(read_file((fits[r] / "summary.json").string()));

    if (summary.at("estimator").get<std::string>() == "mode") {
      ModeFit fit = load_mode_fit(summary, data);
      ModeEvaluator ev(fit);
      reps.push_back(replicate_metrics(ev, data, truth, truth.setting.grid));
    } else {
      ModelSpec spec = parse_formula(summary.at("formula").get<std::string>());
      ModelState state =
          ModelState::build(spec, data, summary.at("config").at("quad_points").get<int>());
      PosteriorSamples samples = load_trace((fits[r] / "trace.csv").string(), state);
      MeanEvaluator ev(state, samples);
      reps.push_back(replicate_metrics(ev, data, truth, truth.setting.grid));
    }
    inputs.push_back((fits[r] / "summary.json").string());
    inputs.push_back((truths[r] / "truth.csv").string());
  }

  MetricsReport report = aggregate(reps);
  std::ostringstream csv;
  csv << "predictor,scope,time,bias,mse,coverage,cells,replicates\n";
  auto row = [&](const std::string& name, const std::string& scope, const std::string& time,
                 const CellStats& s) {
    csv << name << "," << scope << "," << time << "," << fmt_double(s.bias) << ","
        << fmt_double(s.mse) << "," << fmt_double(s.coverage) << "," << s.cells << ","
        << report.replicates << "\n";
  };
  for (const auto& [k, s] : report.mean.overall) row(predictor_name(k), "overall", "", s);
  row("lambda+gamma", "overall", "", report.mean.lambda_plus_gamma);
  for (const auto& [k, cells] : report.mean.per_time)
    for (const TimeCell& c : cells) row(predictor_name(k), "time", fmt_double(c.time), c.stats);
  write_file(out_path, csv.str());

  fs::path out_dir = fs::path(out_path).parent_path();
  if (out_dir.empty()) out_dir = ".";
  json config{{"fits", fits_dir}, {"truth", truth_dir}, {"replicates", report.replicates}};
  write_manifest(out_dir, "metrics", config, inputs,
                 {fs::path(out_path).filename().string()});
  std::cout << "wrote " << out_path << " from " << report.replicates << " replicates\n";
  return exit_ok;
}

int cmd_check(const std::string& data_dir, const std::string& formula_path, double eps,
              double jitter, std::uint64_t seed) {
  JointData data = load_data_dir(data_dir);
  ModelSpec spec = parse_formula(read_file(formula_path));
  ModelState state = ModelState::build(spec, data);
  if (jitter > 0.0) {
    Rng rng(seed);
    for (int bi = 0; bi < static_cast<int>(state.blocks().size()); ++bi) {
      Eigen::VectorXd beta = state.blocks()[bi].beta;
      for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) += jitter * rng.normal();
      state.set_beta(bi, beta);
    }
  }
  FdCheckReport report = fd_check(state, eps);
  for (const FdCheckEntry& e : report.entries) {
    std::cout << (e.pass ? "pass" : "FAIL") << "  " << e.block << "  score " << e.score_rel_err
              << "  hessian " << e.hess_rel_err << "\n";
  }
  std::cout << (report.all_pass ? "all blocks pass" : "derivative check failed") << " (eps "
            << eps << ", tolerances " << report.tol_score << " / " << report.tol_hess << ")\n";
  return report.all_pass ? exit_ok : exit_numerical;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"additive joint models for longitudinal and time-to-event data"};
  app.set_version_flag("--version", std::string(version));
  app.require_subcommand(1);

  std::string setting, out_dir, data_dir, formula_path, init_dir, truth_dir;
  std::uint64_t seed = 1;

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--setting", setting, "preset name")
      ->required()
      ->check(CLI::IsMember({"1a", "1b", "2a", "2b", "1a-mini", "2a-mini"}));
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--out", out_dir, "output directory")->required();

  FitOptions fopt;
  CLI::App* fit = app.add_subcommand("fit", "estimate a model");
  fit->add_option("--estimator", fopt.estimator, "mode or mean")
      ->required()
      ->check(CLI::IsMember({"mode", "mean"}));
  fit->add_option("--data", fopt.data_dir, "directory with longitudinal.csv and survival.csv")
      ->required();
  fit->add_option("--formula", fopt.formula_path, "model formula file")->required();
  fit->add_option("--out", fopt.out_dir, "output directory")->required();
  fit->add_option("--init", fopt.init_dir, "mode fit directory used as starting values");
  fit->add_option("--quad", fopt.quad_points, "integration points per subject");
  fit->add_option("--tol", fopt.mode.tol, "mode convergence tolerance");
  fit->add_option("--max-sweeps", fopt.mode.max_sweeps, "mode sweep limit");
  fit->add_flag_callback("--fix-tau2", [&] { fopt.mode.estimate_tau2 = false; },
                         "keep smoothing variances fixed during mode estimation");
  fit->add_option("--n-iter", fopt.sampler.n_iter, "MCMC iterations");
  fit->add_option("--burn-in", fopt.sampler.burn_in, "burn-in iterations");
  fit->add_option("--thin", fopt.sampler.thin, "thinning stride");
  fit->add_option("--seed", fopt.sampler.seed, "RNG seed");
  fit->add_option("--chains", fopt.sampler.chains, "number of chains");
  fit->add_option("--tau2-sampler", fopt.tau2_sampler, "variance sampler")
      ->check(CLI::IsMember({"auto", "gibbs", "slice"}));

  std::string fits_dir, report_path;
  CLI::App* metrics = app.add_subcommand("metrics", "evaluate fits against simulation truth");
  metrics->add_option("--fits", fits_dir, "directory of fit subdirectories")->required();
  metrics->add_option("--truth", truth_dir, "directory of matching dataset subdirectories")
      ->required();
  metrics->add_option("--out", report_path, "report CSV path")->required();

  double eps = 1e-5, jitter = 0.1;
  CLI::App* check = app.add_subcommand("check-derivatives",
                                       "compare analytic derivatives to finite differences");
  check->add_option("--data", data_dir, "directory with longitudinal.csv and survival.csv")
      ->required();
  check->add_option("--formula", formula_path, "model formula file")->required();
  check->add_option("--eps", eps, "finite-difference step");
  check->add_option("--jitter", jitter, "sd of the random offset applied to coefficients");
  check->add_option("--seed", seed, "RNG seed for the jitter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(setting, seed, out_dir);
    if (fit->parsed()) return cmd_fit(fopt);
    if (metrics->parsed()) return cmd_metrics(fits_dir, truth_dir, report_path);
    if (check->parsed()) return cmd_check(data_dir, formula_path, eps, jitter, seed);
  } catch (const ChainDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  }
  return exit_usage;
}

}  // namespace ajm
