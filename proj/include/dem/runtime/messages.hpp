#pragma once

#include <exception>

#include "dem/core/model.hpp"
#include "dem/runtime/wire.hpp"

namespace dem::runtime {

template <EmModel M>
Frame theta_frame(const M& model, const typename M::Params& theta, IterationTag t) {
  return Frame{MsgKind::kTheta, 0, t, model.encode_params(theta)};
}

/// Stats payload layout: n_obs, loglik_at_anchor, then the model's flat stats.
template <EmModel M>
Frame stats_frame(const M& model, const SuffStats<typename M::Stats>& s,
                  MsgKind kind = MsgKind::kStats) {
  Frame f{kind, s.subset_id, s.anchor, {}};
  const auto body = model.encode_stats(s.payload);
  f.payload.reserve(body.size() + 2);
  f.payload.push_back(static_cast<double>(s.n_obs));
  f.payload.push_back(s.loglik_at_anchor);
  f.payload.insert(f.payload.end(), body.begin(), body.end());
  return f;
}

template <EmModel M>
SuffStats<typename M::Stats> stats_from_frame(const M& model, const Frame& f) {
  if (f.kind == MsgKind::kError) {
    throw WorkerError("worker " + std::to_string(f.subset_id) +
                          " failed: " + decode_text(f.payload),
                      f.subset_id);
  }
  if (f.kind != MsgKind::kStats && f.kind != MsgKind::kPeerStats) {
    throw ProtocolError("expected an E-step result frame");
  }
  if (f.payload.size() < 2) throw FormatError("E-step frame payload too short");
  SuffStats<typename M::Stats> s;
  s.subset_id = f.subset_id;
  s.anchor = f.iteration;
  s.n_obs = static_cast<std::size_t>(f.payload[0]);
  s.loglik_at_anchor = f.payload[1];
  s.payload = model.decode_stats(std::span<const double>(f.payload).subspan(2));
  return s;
}

/// Worker side of one exchange: local E step at the broadcast parameter.
/// Failures travel back as kError frames.
template <EmModel M>
Frame worker_step(const M& model, const typename M::Subset& subset, SubsetId id,
                  const Frame& theta_msg) {
  try {
    const auto theta = model.decode_params(theta_msg.payload);
    auto s = model.local_estep(theta, subset);
    s.subset_id = id;
    s.anchor = theta_msg.iteration;
    return stats_frame(model, s);
  } catch (const std::exception& e) {
    return Frame{MsgKind::kError, id, theta_msg.iteration, encode_text(e.what())};
  }
}

}  // namespace dem::runtime
