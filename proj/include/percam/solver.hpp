#pragma once

#include "percam/rasterizer.hpp"
#include "percam/types.hpp"

#include <functional>
#include <vector>

namespace percam {

// Diagonal-scaled gradient descent over (log f, Tx, Ty[, log Tz]) with
// backtracking halving on objective increase. solve_camera runs a
// coarse-to-fine smoothing continuation (8x, 4x, 2x, 1x sigma_px); within each
// stage the finite-difference probes are widened to move the silhouette by a
// fraction of that stage's smoothing scale, because probes narrower than one
// rasterization flip read a zero gradient. fd_steps are per-coordinate floors
// on those probes.
struct CameraSolveConfig {
  double sigma_px = 2.0;
  int max_iters = 300;
  Eigen::Vector4d learning_rates{0.2, 0.02, 0.02, 0.2};  // log f, Tx, Ty, log Tz
  double convergence_tol = 1e-5;  // relative objective decrease ...
  int convergence_window = 10;    // ... over this many iterations
  bool optimize_tz = false;
  Eigen::Vector4d fd_steps{1e-3, 1e-4, 1e-4, 1e-3};  // log f, m, m, log Tz
  int max_backtracks = 8;
};

struct SolveIterate {
  double objective = 0;
  ObjectiveParams params;
};

struct CameraSolveResult {
  double f_px = 0;
  double tx = 0, ty = 0, tz = 0;
  double final_objective = 0;  // in [0, kObjectivePenalty]
  int iters_used = 0;
  bool converged = false;
  std::vector<SolveIterate> trace;  // accepted iterates, nonincreasing objective
};

// Central differences with per-coordinate steps. Throws SolverDivergedError
// if any probe evaluates non-finite.
VecX numerical_gradient(const std::function<double(const VecX&)>& fn,
                        const VecX& params, const VecX& steps);

// Recovers (f, Tx, Ty) -- and Tz when cfg.optimize_tz -- from a silhouette.
// Init: f = target height, Tx = Ty = 0, Tz = tz_init. A Binary target is
// smoothed internally with cfg.sigma_px; a Soft target is used as-is.
// Throws std::invalid_argument when fewer than 1% of target pixels are > 0.5.
CameraSolveResult solve_camera(const Mesh& mesh, const SilhouetteMask& target,
                               double tz_init, const CameraSolveConfig& cfg = {});

// Continues from `result` with Tz unlocked (4 free parameters). The returned
// objective never exceeds the input's; cfg.max_iters = 0 returns the input
// params unchanged with converged = false.
CameraSolveResult refine_tz(const Mesh& mesh, const SilhouetteMask& target,
                            const CameraSolveResult& result,
                            const CameraSolveConfig& cfg = {});

}  // namespace percam
