#pragma once

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "dem/core/trace.hpp"
#include "dem/lmm/theta.hpp"

namespace dem::diagnostics {

using LmmTrace = Trace<lmm::Thetad>;

/// Trace as JSON; the layout is described in docs/formats.md.
nlohmann::json trace_to_json(const LmmTrace& trace);
LmmTrace trace_from_json(const nlohmann::json& j);

void save_trace(const std::filesystem::path& path, const LmmTrace& trace);
LmmTrace load_trace(const std::filesystem::path& path);

/// One row per record: iteration, loglik, loglik_exact, accepted count,
/// max staleness, messages, wall seconds, then the parameter coordinates.
void write_trace_csv(std::ostream& os, const LmmTrace& trace);

}  // namespace dem::diagnostics
