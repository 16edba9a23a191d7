#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "asbf/mimo.hpp"

namespace asbf {

struct BaselineResult {
  SelectionMatrix selection;
  HybridBeamformer beamformer;
  double rate = 0.0;
  double elapsed_s = 0.0;
  std::string algorithm;
};

inline constexpr double kExhaustiveLimit = 1e6;

/// C(N_T, N_TS) * 2^(N_TS N_RF), as a double so oversized spaces do not wrap.
double exhaustive_search_size(const SystemConfig& cfg);

/// Every subset and every 1-bit analog matrix, each with the optimal digital
/// beamformer. Throws SearchSpaceError above kExhaustiveLimit candidates.
BaselineResult exhaustive_joint_search(const ChannelMatrix& h, const SystemConfig& cfg);

/// Rate of a candidate column subset, used to rank greedy additions.
using SubsetRate = std::function<double(const ChannelMatrix& h_sub, const SystemConfig& cfg)>;

/// Water-filled full-digital capacity of `h_sub` with cfg.n_s streams.
double full_digital_rate(const ChannelMatrix& h_sub, const SystemConfig& cfg);

/// Incremental greedy: N_TS rounds, each adding the antenna that maximizes
/// `rate` of the grown submatrix. Ties keep the lowest index.
SelectionMatrix greedy_antenna_selection(const ChannelMatrix& h, const SystemConfig& cfg,
                                         const SubsetRate& rate = full_digital_rate,
                                         int count = -1);

/// Uniform random N_TS-subset, in random order.
SelectionMatrix random_antenna_selection(const SystemConfig& cfg, Rng& rng);

struct CdmResult {
  HybridBeamformer beamformer;
  /// ||F_opt - T_RF T_BB||_F after initialization and after each iteration.
  std::vector<double> objective;
};

/// Alternating minimization of ||F_opt - T_RF T_BB||_F toward the full-digital
/// precoder of the selected channel `h_s` (N_R x N_TS).
///
/// T_RF starts from the signs of Re F_opt (column r uses stream r mod N_S).
/// Each iteration solves T_BB by least squares and then sweeps every analog
/// entry once, keeping a sign flip whenever it lowers the objective. Stops
/// after `max_iters` iterations or when the relative change drops below
/// `tol`. The final T_BB is power-normalized.
CdmResult cdm_altmin(const ChannelMatrix& h_s, const SystemConfig& cfg, int max_iters = 50,
                     double tol = 1e-9);

/// Selection followed by CDM AltMin on the selected channel.
BaselineResult gas_cdm(const ChannelMatrix& h, const SystemConfig& cfg);
BaselineResult ras_cdm(const ChannelMatrix& h, const SystemConfig& cfg, Rng& rng);

/// Conventional hybrid structure over all N_T antennas (N_TS = N_T).
BaselineResult full_array_reference(const ChannelMatrix& h, const SystemConfig& cfg);

/// Greedy choice of N_RF antennas, T_RF = I and the optimal digital
/// beamformer.
BaselineResult switch_based_reference(const ChannelMatrix& h, const SystemConfig& cfg);

}  // namespace asbf
