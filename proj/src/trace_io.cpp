#include "dem/diagnostics/trace_io.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>

#include "dem/lmm/json.hpp"

namespace dem::diagnostics {

nlohmann::json trace_to_json(const LmmTrace& trace) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : trace.records) {
    records.push_back({
        {"iteration", r.iteration},
        {"theta", lmm::theta_to_json(r.theta)},
        {"loglik", r.loglik},
        {"loglik_exact", r.loglik_exact},
        {"accepted", r.accepted},
        {"anchors", r.anchors},
        {"staleness", r.staleness},
        {"messages", r.messages},
        {"wall_seconds", r.wall_seconds},
    });
  }
  return {
      {"format", "dem-trace-1"},
      {"algorithm", trace.algorithm},
      {"num_subsets", trace.num_subsets},
      {"converged", trace.converged},
      {"max_iter_reached", trace.max_iter_reached},
      {"iterations", trace.iterations()},
      {"final_loglik", trace.final_loglik},
      {"wall_seconds", trace.wall_seconds},
      {"max_staleness", trace.max_staleness()},
      {"total_messages", trace.total_messages()},
      {"ascent_violations", trace.ascent_violations},
      {"final_theta", trace.records.empty() ? nlohmann::json() : lmm::theta_to_json(trace.final_theta())},
      {"records", records},
  };
}

LmmTrace trace_from_json(const nlohmann::json& j) {
  try {
    LmmTrace t;
    t.algorithm = j.at("algorithm").get<std::string>();
    t.num_subsets = j.at("num_subsets").get<std::size_t>();
    t.converged = j.at("converged").get<bool>();
    t.max_iter_reached = j.at("max_iter_reached").get<bool>();
    t.final_loglik = j.at("final_loglik").get<double>();
    t.wall_seconds = j.value("wall_seconds", 0.0);
    t.ascent_violations = j.value("ascent_violations", std::vector<std::size_t>{});
    for (const auto& r : j.at("records")) {
      IterationRecord<lmm::Thetad> rec;
      rec.iteration = r.at("iteration").get<std::size_t>();
      rec.theta = lmm::theta_from_json(r.at("theta"));
      rec.loglik = r.at("loglik").get<double>();
      rec.loglik_exact = r.value("loglik_exact", false);
      rec.accepted = r.value("accepted", std::vector<SubsetId>{});
      rec.anchors = r.value("anchors", std::vector<IterationTag>{});
      rec.staleness = r.value("staleness", std::vector<std::size_t>{});
      rec.messages = r.value("messages", std::size_t{0});
      rec.wall_seconds = r.value("wall_seconds", 0.0);
      t.records.push_back(std::move(rec));
    }
    if (t.records.empty()) throw FormatError("trace has no records");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("trace: ") + e.what());
  }
}

void save_trace(const std::filesystem::path& path, const LmmTrace& trace) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << trace_to_json(trace).dump(1)
     << '\n';
}

LmmTrace load_trace(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return trace_from_json(j);
}

void write_trace_csv(std::ostream& os, const LmmTrace& trace) {
  if (trace.records.empty()) return;
  const auto p = trace.records[0].theta.p();
  const auto q = trace.records[0].theta.q();
  os << "iteration,loglik,loglik_exact,accepted,max_staleness,messages,wall_seconds";
  for (Eigen::Index j = 0; j < p; ++j) os << ",beta" << j;
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) os << ",Sigma" << i << j;
  }
  os << ",tau2\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : trace.records) {
    const std::size_t stale =
        r.staleness.empty() ? 0 : *std::max_element(r.staleness.begin(), r.staleness.end());
    os << r.iteration << ',' << r.loglik << ',' << (r.loglik_exact ? 1 : 0) << ','
       << r.accepted.size() << ',' << stale << ',' << r.messages << ',' << r.wall_seconds;
    for (Eigen::Index j = 0; j < p; ++j) os << ',' << r.theta.beta(j);
    const Matrix S = r.theta.Sigma();
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) os << ',' << S(i, j);
    }
    os << ',' << r.theta.tau2 << '\n';
  }
}

}  // namespace dem::diagnostics
