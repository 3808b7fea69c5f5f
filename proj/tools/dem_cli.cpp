#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dem/core/free_energy.hpp"
#include "dem/datagen/dataset_io.hpp"
#include "dem/datagen/ratings.hpp"
#include "dem/diagnostics/metrics.hpp"
#include "dem/diagnostics/trace_io.hpp"
#include "dem/lmm/information.hpp"
#include "dem/lmm/json.hpp"
#include "dem/lmm/model.hpp"
#include "dem/runtime/engine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

// JSON config: one object per subcommand, keys are long option names.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::App* sub : app->get_subcommands({})) {
      json section = json::object();
      for (const CLI::Option* opt : sub->get_options({})) {
        if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
        const std::string& name = opt->get_lnames()[0];
        if (name == "help" || name == "help-all") continue;
        if (opt->count() > 0) {
          section[name] = opt->as<std::string>();
        } else if (default_also && !opt->get_default_str().empty()) {
          section[name] = opt->get_default_str();
        }
      }
      if (!section.empty()) j[sub->get_name()] = section;
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be a JSON object");
    std::vector<CLI::ConfigItem> out;
    collect(j, {}, out);
    return out;
  }

 private:
  static void collect(const json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& out) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const auto& v = it.value();
      if (v.is_object()) {
        auto next = parents;
        next.push_back(it.key());
        collect(v, next, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (v.is_boolean()) {
        item.inputs = {v.get<bool>() ? "true" : "false"};
      } else if (v.is_string()) {
        item.inputs = {v.get<std::string>()};
      } else if (v.is_number()) {
        item.inputs = {v.dump()};
      } else if (v.is_array()) {
        for (const auto& e : v) item.inputs.push_back(e.is_string() ? e.get<std::string>() : e.dump());
      } else {
        throw CLI::ConversionError("config: unsupported value for " + it.key());
      }
      out.push_back(std::move(item));
    }
  }
};

fs::path with_suffix(const fs::path& stem, const std::string& suffix) {
  fs::path p = stem;
  p += suffix;
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  datagen::SimDesign design;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto data = datagen::simulate(a.design);
  datagen::save_dataset(a.out, data);
  std::cout << "wrote " << data.m() << " samples, " << data.n_obs() << " observations (p=" << data.p
            << ", q=" << data.q << ") to " << a.out << ".demd\n";
  return 0;
}

// ---- ingest --------------------------------------------------------------

struct IngestArgs {
  std::string ratings_csv;
  std::string dat_ratings;
  std::string dat_movies;
  std::string write_csv;
  std::size_t synthetic = 0;
  std::size_t synthetic_users = 200;
  std::size_t synthetic_movies = 300;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_ingest(const IngestArgs& a) {
  std::vector<datagen::RatingsRecord> records;
  const int sources = (!a.ratings_csv.empty()) + (!a.dat_ratings.empty()) + (a.synthetic > 0);
  if (sources != 1) {
    throw Error("ingest: give exactly one of --ratings, --dat-ratings/--dat-movies, --synthetic");
  }
  if (!a.ratings_csv.empty()) {
    std::ifstream is(a.ratings_csv);
    if (!is) throw FormatError("cannot open " + a.ratings_csv);
    records = datagen::read_ratings_csv(is);
  } else if (!a.dat_ratings.empty()) {
    if (a.dat_movies.empty()) throw Error("ingest: --dat-ratings needs --dat-movies");
    std::ifstream rs(a.dat_ratings), ms(a.dat_movies);
    if (!rs) throw FormatError("cannot open " + a.dat_ratings);
    if (!ms) throw FormatError("cannot open " + a.dat_movies);
    records = datagen::convert_double_colon(rs, ms);
  } else {
    records = datagen::synthetic_ratings(a.synthetic, a.synthetic_users, a.synthetic_movies, a.seed);
  }
  if (!a.write_csv.empty()) {
    std::ofstream os(a.write_csv);
    if (!os) throw FormatError("cannot open " + a.write_csv + " for writing");
    datagen::write_ratings_csv(os, records);
  }
  const std::size_t n = records.size();
  auto data = datagen::build_movielens_features(std::move(records));
  data.seed = a.seed;
  if (!a.out.empty()) datagen::save_dataset(a.out, data);
  std::cout << "ingested " << n << " ratings into " << data.m() << " users";
  if (!a.out.empty()) std::cout << ", wrote " << a.out << ".demd";
  std::cout << '\n';
  return 0;
}

// ---- fit -----------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string algo = "dem";
  double gamma = 1.0;
  std::size_t K = 1;
  double tol = 1e-7;
  std::size_t max_iter = 1000;
  std::uint64_t seed = 0;
  std::uint64_t partition_seed = 0;
  bool real = false;
  std::string scheme = "async";
  std::string transport = "in_process";
  std::string in_flight = "finish";
  std::string cm_order = "joint";
  std::string schedule = "uniform";
  bool exact_loglik = false;
  std::size_t threads = 0;
  std::string start;
  std::string out;
  bool allow_maxiter = false;
  bool check_free_energy = false;
};

runtime::RunConfig make_run_config(const FitArgs& a, std::size_t K) {
  runtime::RunConfig cfg;
  cfg.K = K;
  cfg.gamma = a.gamma;
  cfg.tol = a.tol;
  cfg.max_iter = a.max_iter;
  cfg.seed = a.seed;
  cfg.scheduler = a.real ? runtime::Scheduler::kReal : runtime::Scheduler::kDeterministic;
  cfg.schedule_mode =
      a.schedule == "forced" ? runtime::ScheduleMode::kForcedSplit : runtime::ScheduleMode::kUniform;
  cfg.transport =
      a.transport == "socket" ? runtime::TransportKind::kSocket : runtime::TransportKind::kInProcess;
  cfg.in_flight = a.in_flight == "abort" ? runtime::InFlightPolicy::kAbortAndRestart
                                         : runtime::InFlightPolicy::kFinishAndSend;
  cfg.exact_loglik_check = a.exact_loglik;
  cfg.threads = a.threads;
  if (a.scheme == "sync") cfg.scheme = runtime::Scheme::kSynchronous;
  else if (a.scheme == "allpairs") cfg.scheme = runtime::Scheme::kNaiveAllPairs;
  else cfg.scheme = runtime::Scheme::kAsynchronous;
  return cfg;
}

int cmd_fit(FitArgs a, const CLI::App& sub) {
  const bool gamma_given = sub.count("--gamma") > 0;
  const bool k_given = sub.count("--K") > 0;
  if (a.algo == "ecme0" && gamma_given) throw Error("fit: --gamma does not apply to --algo ecme0");
  if (a.algo == "iem" && gamma_given) throw Error("fit: --algo iem fixes gamma = 1/K");
  if (a.algo != "dem" && a.scheme != "async") throw Error("fit: --scheme only applies to --algo dem");

  const auto data = datagen::load_dataset(a.data);
  std::size_t K = a.K;
  if (a.algo == "iem" && !k_given) K = data.m();
  if (a.algo == "iem") a.gamma = 1.0 / static_cast<double>(K);
  const auto subsets = datagen::partition(data, K, a.partition_seed);
  const lmm::LmmModel model(data.p, data.q,
                            a.cm_order == "sequential" ? lmm::CmOrder::kSequential
                                                       : lmm::CmOrder::kBetaThenVariance);
  const lmm::Thetad theta0 =
      a.start.empty() ? lmm::Thetad::start(data.p, data.q) : lmm::theta_from_json(read_json(a.start));
  const auto cfg = make_run_config(a, K);
  const std::span<const lmm::SubsetDatad> view(subsets);

  runtime::RunResult<lmm::Thetad> result;
  if (a.algo == "ecme0") {
    result = runtime::run_ecme0(cfg, model, view, theta0);
  } else {
    result = runtime::run_dem(cfg, model, view, theta0);
    if (a.algo == "iem") result.trace.algorithm = "iem";
  }
  const auto& tr = result.trace;

  std::size_t violations = 0;
  if (a.check_free_energy) violations = check_monotone_F(tr, model, view).size();

  if (!a.out.empty()) {
    diagnostics::save_trace(with_suffix(a.out, ".trace.json"), tr);
    write_json(with_suffix(a.out, ".theta.json"), lmm::theta_to_json(result.theta));
    std::ofstream csv(with_suffix(a.out, ".trace.csv"));
    diagnostics::write_trace_csv(csv, tr);
  }
  std::cout << std::setprecision(12) << "algorithm=" << tr.algorithm << " K=" << K
            << " gamma=" << (a.algo == "ecme0" ? 1.0 : a.gamma) << " iterations=" << tr.iterations()
            << " converged=" << tr.converged << " max_iter_reached=" << tr.max_iter_reached
            << " final_loglik=" << tr.final_loglik << " max_staleness=" << tr.max_staleness()
            << " messages=" << tr.total_messages();
  if (a.check_free_energy) std::cout << " free_energy_decreases=" << violations;
  std::cout << '\n';
  if (!tr.converged && !a.allow_maxiter) {
    std::cerr << "fit: stopped at max_iter without converging (use --allow-maxiter to accept)\n";
    return kExitNotConverged;
  }
  return 0;
}

// ---- compare -------------------------------------------------------------

struct CompareArgs {
  std::vector<std::string> references;
  std::vector<std::string> runs;
  std::string out;
};

struct Estimate {
  lmm::Thetad theta;
  std::optional<diagnostics::LmmTrace> trace;
  std::string label;
};

Estimate load_estimate(const std::string& path) {
  const json j = read_json(path);
  Estimate e;
  e.label = fs::path(path).filename().string();
  if (j.contains("records")) {
    e.trace = diagnostics::trace_from_json(j);
    e.theta = e.trace->final_theta();
    e.label = e.trace->algorithm + ":" + e.label;
  } else {
    e.theta = lmm::theta_from_json(j);
  }
  return e;
}

int cmd_compare(const CompareArgs& a) {
  if (a.references.empty() || a.runs.empty()) throw Error("compare: need --reference and --run files");
  if (a.references.size() != 1 && a.references.size() != a.runs.size()) {
    throw Error("compare: give one reference, or one per run");
  }
  std::vector<Estimate> refs, runs;
  for (const auto& r : a.references) refs.push_back(load_estimate(r));
  for (const auto& r : a.runs) runs.push_back(load_estimate(r));

  std::ostringstream csv;
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);
  csv << "kind,run,reference,err_beta,err_tau2,err_var,err_cov,loglik_ratio,iter_ratio,time_ratio\n";
  std::vector<diagnostics::ErrReport> reports;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& ref = refs.size() == 1 ? refs[0] : refs[i];
    const auto& run = runs[i];
    auto err = diagnostics::compute_err(run.theta, ref.theta, ref.label);
    csv << "err," << run.label << ',' << ref.label << ',' << err.err_beta << ',' << err.err_tau2 << ','
        << err.err_var << ',';
    if (err.err_cov) csv << *err.err_cov;
    csv << ',';
    if (run.trace && ref.trace) {
      const auto r = diagnostics::ratio_report(*run.trace, *ref.trace);
      csv << r.loglik_ratio << ',' << r.iter_ratio << ',' << r.time_ratio;
    } else {
      csv << ",,";
    }
    csv << '\n';
    reports.push_back(std::move(err));
  }
  const auto rmse = diagnostics::aggregate_rmse(reports);
  csv << "rmse,all," << rmse.replications << ',' << rmse.beta.rmse << ',' << rmse.tau2.rmse << ','
      << rmse.var.rmse << ',';
  if (rmse.cov) csv << rmse.cov->rmse;
  csv << ",,,\n";
  csv << "rmse_se,all," << rmse.replications << ',' << rmse.beta.std_error << ',' << rmse.tau2.std_error
      << ',' << rmse.var.std_error << ',';
  if (rmse.cov) csv << rmse.cov->std_error;
  csv << ",,,\n";

  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream os(a.out);
    if (!os) throw FormatError("cannot open " + a.out + " for writing");
    os << csv.str();
    std::cout << "wrote " << runs.size() << " comparison rows to " << a.out << '\n';
  }
  return 0;
}

// ---- diagnose ------------------------------------------------------------

struct DiagnoseArgs {
  std::string data;
  std::string theta;
  std::size_t K = 1;
  std::uint64_t partition_seed = 0;
  std::vector<std::size_t> split;
  double gamma = 0.0;
  std::string spectrum = "singular";
  std::string out;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const auto data = datagen::load_dataset(a.data);
  const auto subsets = datagen::partition(data, a.K, a.partition_seed);
  const json tj = read_json(a.theta);
  const lmm::Thetad theta = tj.contains("records") ? diagnostics::trace_from_json(tj).final_theta()
                                                   : lmm::theta_from_json(tj);
  std::vector<std::size_t> A = a.split;
  if (A.empty()) {
    runtime::RunConfig cfg;
    cfg.K = a.K;
    cfg.gamma = a.gamma > 0.0 ? a.gamma : 1.0;
    A.resize(cfg.accept_threshold());
    std::iota(A.begin(), A.end(), std::size_t{0});
  }
  const auto info = lmm::information_matrices(theta, subsets, A);
  for (const auto& w : info.warnings) std::cerr << "warning: " << w << '\n';
  const auto sp = lmm::speed_matrices(info, a.spectrum == "eigen" ? lmm::Spectrum::kEigenvalues
                                                                    : lmm::Spectrum::kSingularValues);
  json report = {
      {"split", A},
      {"K", a.K},
      {"spectrum", a.spectrum},
      {"gradient_norm", info.gradient_norm},
      {"warnings", info.warnings},
      {"identity_residual", sp.identity_residual},
      {"identity_ok", sp.identity_ok},
      {"lambda_min_S_EM", sp.lambda_min_em},
      {"lambda_min_S_DEM", sp.lambda_min_dem},
      {"lambda_min_O", sp.lambda_min_o},
      {"lambda_min_C", sp.lambda_min_c},
      {"lambda_max_C", sp.lambda_max_c},
      {"lower_bound", sp.lower_bound},
      {"upper_bound", sp.upper_bound},
      {"lower_ok", sp.lower_ok},
      {"upper_ok", sp.upper_ok},
      {"dem_not_slower_ok", sp.dem_not_slower_ok},
      {"eigen_bounds_ok", sp.eigen_bounds_ok},
      {"S_EM", lmm::matrix_to_json(sp.S_EM)},
      {"S_DEM", lmm::matrix_to_json(sp.S_DEM)},
      {"C", lmm::matrix_to_json(sp.C)},
      {"O", lmm::matrix_to_json(sp.O)},
      {"i_obs", lmm::matrix_to_json(info.obs)},
      {"i_com", lmm::matrix_to_json(info.com)},
  };
  if (!a.out.empty()) write_json(a.out, report);
  std::cout << std::setprecision(8) << "identity_residual=" << sp.identity_residual
            << " identity_ok=" << sp.identity_ok << " lambda_min(S_EM)=" << sp.lambda_min_em
            << " lower_bound=" << sp.lower_bound << " upper_bound=" << sp.upper_bound
            << " lower_ok=" << sp.lower_ok << " upper_ok=" << sp.upper_ok
            << " dem_not_slower_ok=" << sp.dem_not_slower_ok << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed EM for linear mixed-effects models"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "",
                 "JSON file with one object per subcommand, e.g. {\"fit\": {\"gamma\": 0.5}}; "
                 "command-line flags take precedence");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a dataset from the +-1 covariate design");
  s->add_option("--m", sim.design.m, "Number of samples")->capture_default_str();
  s->add_option("--n", sim.design.n, "Total observations (n >= m)")->capture_default_str();
  s->add_option("--p", sim.design.p, "Fixed effects; beta alternates -2, 2")->capture_default_str();
  s->add_option("--q", sim.design.q, "Random effects; 3 and 6 are the canonical designs")
      ->capture_default_str();
  s->add_option("--seed", sim.design.seed, "RNG seed")->capture_default_str();
  s->add_option("--out", sim.out, "Output stem; writes <out>.demd and <out>.json")->required();

  IngestArgs ing;
  auto* i = app.add_subcommand("ingest", "Build the six-column ratings design from a ratings stream");
  i->add_option("--ratings", ing.ratings_csv, "CSV: user,movie,rating,timestamp,genre-bitfield");
  i->add_option("--dat-ratings", ing.dat_ratings, "'::'-separated ratings file (user::movie::rating::time)");
  i->add_option("--dat-movies", ing.dat_movies, "'::'-separated movies file (movie::title::A|B)");
  i->add_option("--synthetic", ing.synthetic, "Generate this many synthetic ratings instead");
  i->add_option("--synthetic-users", ing.synthetic_users, "Users in the synthetic stream")
      ->capture_default_str();
  i->add_option("--synthetic-movies", ing.synthetic_movies, "Movies in the synthetic stream")
      ->capture_default_str();
  i->add_option("--seed", ing.seed, "Seed for --synthetic")->capture_default_str();
  i->add_option("--write-csv", ing.write_csv, "Also write the records as ratings CSV");
  i->add_option("--out", ing.out, "Output dataset stem");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit the model with ECME0, IEM or distributed EM");
  f->add_option("--data", fit.data, "Dataset stem or .demd path")->required();
  f->add_option("--algo", fit.algo, "ecme0 | iem | dem")
      ->check(CLI::IsMember({"ecme0", "iem", "dem"}))
      ->capture_default_str();
  f->add_option("--gamma", fit.gamma, "Fraction of fresh worker results per M step, in (0, 1]")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  f->add_option("--K", fit.K, "Number of workers / data subsets (iem defaults to one per sample)")
      ->capture_default_str();
  f->add_option("--tol", fit.tol, "Stop when successive log-likelihoods differ by less than this")
      ->capture_default_str();
  f->add_option("--max-iter", fit.max_iter, "Iteration cap")->capture_default_str();
  f->add_option("--seed", fit.seed, "Seed of the deterministic completion order")->capture_default_str();
  f->add_option("--partition-seed", fit.partition_seed, "Seed of the sample-to-subset split")
      ->capture_default_str();
  f->add_flag("--real,!--deterministic", fit.real,
              "Run workers on a thread pool; --deterministic (default) uses the seeded scheduler");
  f->add_option("--scheme", fit.scheme, "async | sync | allpairs")
      ->check(CLI::IsMember({"async", "sync", "allpairs"}))
      ->capture_default_str();
  f->add_option("--transport", fit.transport, "in_process | socket")
      ->check(CLI::IsMember({"in_process", "socket"}))
      ->capture_default_str();
  f->add_option("--in-flight", fit.in_flight, "Busy worker on a new broadcast: finish | abort")
      ->check(CLI::IsMember({"finish", "abort"}))
      ->capture_default_str();
  f->add_option("--cm-order", fit.cm_order, "joint | sequential conditional maximization")
      ->check(CLI::IsMember({"joint", "sequential"}))
      ->capture_default_str();
  f->add_option("--schedule", fit.schedule, "Deterministic completion order: uniform | forced")
      ->check(CLI::IsMember({"uniform", "forced"}))
      ->capture_default_str();
  f->add_flag("--exact-loglik", fit.exact_loglik,
              "Stopping rule evaluates L(theta_t) on all data instead of cached worker values");
  f->add_option("--threads", fit.threads, "Thread pool size for --real (0 = min(K, cores))")
      ->capture_default_str();
  f->add_option("--start", fit.start, "Starting theta JSON (default beta=0, D=I, tau2=10)");
  f->add_option("--out", fit.out, "Output stem for .trace.json, .theta.json, .trace.csv");
  f->add_flag("--allow-maxiter", fit.allow_maxiter, "Exit 0 even when max_iter is reached");
  f->add_flag("--check-free-energy", fit.check_free_energy,
              "Recompute the free energy along the trace and report decreases");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Error, RMSE and ratio table of runs against references");
  c->add_option("--reference", cmp.references, "Reference trace or theta JSON (one, or one per run)")
      ->required();
  c->add_option("--run", cmp.runs, "Run trace or theta JSON files")->required();
  c->add_option("--out", cmp.out, "CSV output path (default stdout)");

  DiagnoseArgs dia;
  auto* d = app.add_subcommand("diagnose", "Information and speed matrices at a fitted theta");
  d->add_option("--data", dia.data, "Dataset stem")->required();
  d->add_option("--theta", dia.theta, "Theta or trace JSON at the optimum")->required();
  d->add_option("--K", dia.K, "Number of subsets")->capture_default_str();
  d->add_option("--partition-seed", dia.partition_seed, "Seed of the sample-to-subset split")
      ->capture_default_str();
  d->add_option("--split", dia.split, "Subset indices forming A");
  d->add_option("--gamma", dia.gamma, "Use A = first ceil(gamma K) subsets when --split is absent");
  d->add_option("--spectrum", dia.spectrum, "singular | eigen")
      ->check(CLI::IsMember({"singular", "eigen"}))
      ->capture_default_str();
  d->add_option("--out", dia.out, "JSON report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return cmd_simulate(sim);
    if (i->parsed()) return cmd_ingest(ing);
    if (f->parsed()) return cmd_fit(fit, *f);
    if (c->parsed()) return cmd_compare(cmp);
    if (d->parsed()) return cmd_diagnose(dia);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
