#include "percam/solver.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace percam {

namespace {

// Optimization runs in (log f, tx, ty[, log tz]) so multiplicative parameters
// take multiplicative steps.
ObjectiveParams unpack(const VecX& p, double fixed_tz) {
  ObjectiveParams params;
  params.f_px = std::exp(p(0));
  params.tx = p(1);
  params.ty = p(2);
  params.tz = p.size() > 3 ? std::exp(p(3)) : fixed_tz;
  return params;
}

// One level of the coarse-to-fine schedule: the image is reduced `downsample`
// times and smoothed by sigma_px in reduced pixels, so the effective smoothing
// at full resolution shrinks stage by stage while evaluations stay cheap.
struct Stage {
  int downsample;
  int max_iters;
};

std::vector<Stage> make_stages(int image_min_dim, int max_iters) {
  const double fractions[] = {0.15, 0.15, 0.2};
  const int reductions[] = {8, 4, 2};
  std::vector<Stage> stages;
  int used = 0;
  for (int k = 0; k < 3; ++k) {
    if (image_min_dim / reductions[k] < 32) continue;
    const int iters = static_cast<int>(std::lround(fractions[k] * max_iters));
    used += iters;
    stages.push_back({reductions[k], iters});
  }
  stages.push_back({1, std::max(max_iters - used, 0)});
  return stages;
}

// Block-average reduction; fractional edge blocks average their covered pixels.
SilhouetteMask downsample_mask(const SilhouetteMask& mask, int factor) {
  if (factor <= 1) return mask;
  const int w = (mask.width + factor - 1) / factor;
  const int h = (mask.height + factor - 1) / factor;
  SilhouetteMask out;
  out.width = w;
  out.height = h;
  out.values = MaskArray::Zero(h, w);
  out.kind = MaskKind::Soft;
  out.sigma_px = mask.sigma_px / factor;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int r0 = r * factor, c0 = c * factor;
      const int r1 = std::min(r0 + factor, mask.height);
      const int c1 = std::min(c0 + factor, mask.width);
      out.values(r, c) =
          mask.values.block(r0, c0, r1 - r0, c1 - c0).mean();
    }
  return out;
}

// Smooths to a total Gaussian scale, accounting for smoothing the target may
// already carry. A target already softer than requested is used as-is.
SilhouetteMask smooth_to(const SilhouetteMask& target, double sigma_px) {
  if (target.kind == MaskKind::Binary) return gaussian_smooth(target, sigma_px);
  const double have = target.sigma_px;
  if (have >= sigma_px) return target;
  return gaussian_smooth(target, std::sqrt(sigma_px * sigma_px - have * have));
}

// Probe steps sized to move the silhouette by ~probe_px at the (possibly
// reduced) image, floored by cfg.fd_steps: probes narrower than one
// rasterization flip read a zero gradient.
VecX probe_steps(const VecX& p, double fixed_tz, double probe_px, double f_scale,
                 double height, const CameraSolveConfig& cfg) {
  const ObjectiveParams params = unpack(p, fixed_tz);
  const double radius_px = 0.25 * height;                    // scale lever arm
  const double px_per_m = params.f_px * f_scale / params.tz; // shift per meter
  VecX steps(p.size());
  steps(0) = std::max(cfg.fd_steps(0), probe_px / radius_px);
  steps(1) = std::max(cfg.fd_steps(1), probe_px / px_per_m);
  steps(2) = std::max(cfg.fd_steps(2), probe_px / px_per_m);
  if (p.size() > 3) steps(3) = std::max(cfg.fd_steps(3), probe_px / radius_px);
  return steps;
}

struct MaskMoments {
  double area;    // pixels above 0.5
  double cu, cv;  // centroid in pixel coordinates
};

std::optional<MaskMoments> mask_moments(const SilhouetteMask& mask) {
  double area = 0, su = 0, sv = 0;
  for (Eigen::Index r = 0; r < mask.values.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.values.cols(); ++c)
      if (mask.values(r, c) > 0.5) {
        area += 1.0;
        su += static_cast<double>(c) + 0.5;
        sv += static_cast<double>(r) + 0.5;
      }
  if (area == 0) return std::nullopt;
  return MaskMoments{area, su / area, sv / area};
}

// Deterministic warm start: alternate matching silhouette area (scales f) and
// centroid (shifts Tx, Ty) against cheap binary renders. At the generating
// parameters the masks coincide, so this is an exact fixed point there. With
// adjust_f false only the centroid is matched, at the given focal length.
VecX moment_match(const Mesh& mesh, const SilhouetteMask& target, VecX p,
                  double fixed_tz, bool adjust_f) {
  const auto target_m = mask_moments(target);
  if (!target_m) return p;
  const double cu0 = 0.5 * target.width, cv0 = 0.5 * target.height;
  for (int round = 0; round < 8; ++round) {
    const ObjectiveParams params = unpack(p, fixed_tz);
    SilhouetteMask render;
    try {
      render = rasterize(mesh,
                         PerspectiveCamera::centered(params.f_px, target.width,
                                                     target.height),
                         {params.tx, params.ty, params.tz});
    } catch (const BehindCameraError&) {
      break;
    } catch (const EmptySilhouetteError&) {
      break;
    }
    const auto render_m = mask_moments(render);
    if (!render_m) break;
    const double scale =
        adjust_f
            ? std::clamp(std::sqrt(target_m->area / render_m->area), 1.0 / 3.0, 3.0)
            : 1.0;
    const double f_new = params.f_px * scale;
    // Scaling about the principal point moves the rendered centroid too.
    const double du = target_m->cu - ((render_m->cu - cu0) * scale + cu0);
    const double dv = target_m->cv - ((render_m->cv - cv0) * scale + cv0);
    p(0) = std::log(f_new);
    p(1) += du * params.tz / f_new;
    p(2) += dv * params.tz / f_new;
    if (std::abs(scale - 1.0) < 0.01 && std::abs(du) < 0.5 && std::abs(dv) < 0.5)
      break;
  }
  return p;
}

struct DescendResult {
  VecX p;
  double objective = 0;
  int iters_used = 0;
  bool converged = false;
};

// Parameterization-agnostic descent: numerical gradient with per-coordinate
// probe widths, backtracking halving on objective increase, multiplicative
// step-scale adaptation, and a sliding-window relative convergence check.
DescendResult descend_core(const std::function<double(const VecX&)>& eval,
                           const std::function<VecX(const VecX&)>& probes,
                           int max_iters, VecX p, const VecX& scale0,
                           const CameraSolveConfig& cfg,
                           const std::function<void(double, const VecX&)>& record) {
  double best = eval(p);
  if (!std::isfinite(best))
    throw SolverDivergedError("solve: objective non-finite at the starting point");
  if (record) record(best, p);
  std::vector<double> history{best};
  VecX scale = scale0;

  DescendResult result;
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    const VecX g = numerical_gradient(eval, p, probes(p));
    if (g.norm() > 0.0) {
      bool improved = false;
      double lambda = 1.0;
      VecX cand;
      double fc = best;
      for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
        cand = p - lambda * scale.cwiseProduct(g);
        fc = eval(cand);
        if (!std::isfinite(fc))
          throw SolverDivergedError("solve: objective became non-finite");
        if (fc < best) {
          improved = true;
          break;
        }
        lambda *= 0.5;
      }
      if (improved) {
        p = cand;
        best = fc;
        if (record) record(best, p);
        scale = (lambda == 1.0 ? scale * 1.3 : scale * std::max(lambda, 0.1))
                    .cwiseMin(scale0 * 30.0)
                    .cwiseMax(scale0 * 1e-3);
      } else {
        // The direction was misleading (raster noise); soften, do not collapse.
        scale = (scale * 0.5).cwiseMax(scale0 * 1e-3);
      }
    }
    history.push_back(best);
    if (static_cast<int>(history.size()) > cfg.convergence_window) {
      const double before = history[history.size() - 1 - cfg.convergence_window];
      if (before - best < cfg.convergence_tol * std::max(before, 1e-12)) {
        result.converged = true;
        ++iter;
        break;
      }
    }
  }
  result.p = std::move(p);
  result.objective = best;
  result.iters_used = iter;
  return result;
}

DescendResult descend_stage(const Mesh& mesh, const SilhouetteMask& smoothed,
                            const Stage& stage, VecX p, double fixed_tz,
                            const CameraSolveConfig& cfg,
                            std::vector<SolveIterate>* trace) {
  const int dims = static_cast<int>(p.size());
  const double f_scale = 1.0 / stage.downsample;
  auto eval = [&](const VecX& q) {
    ObjectiveParams params = unpack(q, fixed_tz);
    params.f_px *= f_scale;
    return objective(params, mesh, smoothed, cfg.sigma_px);
  };
  auto probes = [&](const VecX& q) {
    return probe_steps(q, fixed_tz, std::max(0.5, 0.25 * cfg.sigma_px), f_scale,
                       smoothed.height, cfg);
  };
  VecX scale0(dims);
  for (int i = 0; i < dims; ++i) scale0(i) = cfg.learning_rates(i);
  std::function<void(double, const VecX&)> record;
  if (trace)
    record = [&](double obj, const VecX& q) {
      trace->push_back({obj, unpack(q, fixed_tz)});
    };
  return descend_core(eval, probes, stage.max_iters, std::move(p), scale0, cfg,
                      record);
}

CameraSolveResult descend(const Mesh& mesh, const SilhouetteMask& target, VecX p,
                          double fixed_tz, const CameraSolveConfig& cfg,
                          const std::vector<Stage>& stages,
                          std::vector<SolveIterate> trace) {
  CameraSolveResult result;
  DescendResult last;
  last.p = std::move(p);
  for (size_t k = 0; k < stages.size(); ++k) {
    const bool final_stage = k + 1 == stages.size();
    const SilhouetteMask smoothed =
        smooth_to(downsample_mask(target, stages[k].downsample), cfg.sigma_px);
    last = descend_stage(mesh, smoothed, stages[k], std::move(last.p), fixed_tz,
                         cfg, final_stage ? &trace : nullptr);
    result.iters_used += last.iters_used;
    if (final_stage) result.converged = last.converged;
  }
  const ObjectiveParams final_params = unpack(last.p, fixed_tz);
  result.f_px = final_params.f_px;
  result.tx = final_params.tx;
  result.ty = final_params.ty;
  result.tz = final_params.tz;
  result.final_objective = last.objective;
  result.trace = std::move(trace);
  return result;
}

}  // namespace

VecX numerical_gradient(const std::function<double(const VecX&)>& fn,
                        const VecX& params, const VecX& steps) {
  if (steps.size() != params.size())
    throw std::invalid_argument("numerical_gradient: step count != param count");
  VecX g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    if (!(steps(i) > 0))
      throw std::invalid_argument("numerical_gradient: steps must be > 0");
    VecX probe = params;
    probe(i) = params(i) + steps(i);
    const double fp = fn(probe);
    probe(i) = params(i) - steps(i);
    const double fm = fn(probe);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw SolverDivergedError("numerical_gradient: non-finite objective at probe " +
                                std::to_string(i));
    g(i) = (fp - fm) / (2.0 * steps(i));
  }
  return g;
}

CameraSolveResult solve_camera(const Mesh& mesh, const SilhouetteMask& target,
                               double tz_init, const CameraSolveConfig& cfg) {
  if (!(tz_init > 0) || !std::isfinite(tz_init))
    throw std::invalid_argument("solve_camera: tz_init must be finite and > 0");
  if (target.width <= 0 || target.height <= 0)
    throw std::invalid_argument("solve_camera: empty target image");
  if (target.coverage() < 0.01)
    throw std::invalid_argument("solve_camera: target silhouette covers < 1% of pixels");

  const int dims = cfg.optimize_tz ? 4 : 3;
  VecX p(dims);
  p(0) = std::log(static_cast<double>(target.height));
  p(1) = 0.0;
  p(2) = 0.0;
  if (dims == 4) p(3) = std::log(tz_init);

  const auto stages = make_stages(std::min(target.width, target.height),
                                  cfg.max_iters);

  // Warm start. Clipped close-range silhouettes let area and centroid agree
  // on more than one (f, Tx, Ty) explanation, so besides the moment fixed
  // point an absolute ladder of focal lengths is tried (centroid rematched at
  // each). Candidates are ranked by a short descent on the coarsest stage:
  // where each one's basin bottoms out, not where the heuristic dropped it.
  // Strict comparison keeps the moment fixed point on ties, so an exact match
  // at the start stays put.
  VecX base = moment_match(mesh, target, std::move(p), tz_init, true);
  const int ds0 = stages.front().downsample;
  const SilhouetteMask coarse0 =
      smooth_to(downsample_mask(target, ds0), cfg.sigma_px);
  struct Candidate {
    double score;
    VecX p;
  };
  std::vector<Candidate> pool;
  auto consider = [&](VecX cand) {
    DescendResult r = descend_stage(mesh, coarse0, {ds0, 20}, std::move(cand),
                                    tz_init, cfg, nullptr);
    pool.push_back({r.objective, std::move(r.p)});
  };
  consider(base);
  for (const double mult :
       {0.08, 0.13, 0.21, 0.33, 0.52, 0.84, 1.34, 2.15, 3.44}) {
    VecX cand = base;
    cand(0) = std::log(mult * target.height);
    consider(moment_match(mesh, target, std::move(cand), tz_init, false));
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Candidate& a, const Candidate& b) {
                     return a.score < b.score;
                   });
  VecX start;
  // The coarsest blur can misrank basins; re-rank the leaders one level finer.
  if (ds0 > 4 && std::min(target.width, target.height) / 4 >= 32) {
    const SilhouetteMask coarse1 =
        smooth_to(downsample_mask(target, 4), cfg.sigma_px);
    double best_score = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < std::min<size_t>(3, pool.size()); ++i) {
      DescendResult r = descend_stage(mesh, coarse1, {4, 15},
                                      std::move(pool[i].p), tz_init, cfg, nullptr);
      if (r.objective < best_score) {
        best_score = r.objective;
        start = std::move(r.p);
      }
    }
  } else {
    start = std::move(pool.front().p);
  }
  return descend(mesh, target, std::move(start), tz_init, cfg, stages, {});
}

CameraSolveResult refine_tz(const Mesh& mesh, const SilhouetteMask& target,
                            const CameraSolveResult& result,
                            const CameraSolveConfig& cfg) {
  CameraSolveResult out = result;
  out.converged = false;
  if (cfg.max_iters == 0) return out;
  if (!(result.f_px > 0) || !(result.tz > 0))
    throw std::invalid_argument("refine_tz: input result has non-positive f or tz");

  // A fixed-depth solve absorbs a wrong Tz into f (dolly-zoom ambiguity), so
  // near the input the objective forms a curved valley along (f, Tz) that
  // axis-aligned steps in (log f, log tz) cannot follow. Refine instead in
  // (log(f/tz), tx, ty, log tz): the first three hold the weak-perspective
  // framing, and the last dollies the camera with framing fixed, so its
  // gradient reads the perspective-distortion signal that identifies depth.
  const SilhouetteMask smoothed = smooth_to(target, cfg.sigma_px);
  auto to_params = [](const VecX& q) {
    return ObjectiveParams{std::exp(q(0) + q(3)), q(1), q(2), std::exp(q(3))};
  };
  auto eval = [&](const VecX& q) {
    return objective(to_params(q), mesh, smoothed, cfg.sigma_px);
  };
  auto probes = [&](const VecX& q) {
    const double probe_px = std::max(0.5, 0.25 * cfg.sigma_px);
    const double px_per_m = std::exp(q(0));
    VecX steps(4);
    steps(0) = std::max(cfg.fd_steps(0), probe_px / (0.25 * smoothed.height));
    steps(1) = std::max(cfg.fd_steps(1), probe_px / px_per_m);
    steps(2) = std::max(cfg.fd_steps(2), probe_px / px_per_m);
    // Distortion responds slowly to the dolly, so probe a sizable depth ratio.
    steps(3) = std::max(cfg.fd_steps(3), 0.1);
    return steps;
  };
  VecX q(4);
  q(0) = std::log(result.f_px / result.tz);
  q(1) = result.tx;
  q(2) = result.ty;
  q(3) = std::log(result.tz);
  VecX scale0(4);
  for (int i = 0; i < 4; ++i) scale0(i) = cfg.learning_rates(i);

  std::vector<SolveIterate> trace = result.trace;
  auto record = [&](double obj, const VecX& pt) {
    trace.push_back({obj, to_params(pt)});
  };

  // The dolly gradient is tiny next to the framing gradients, so a gradient
  // step along w lands inside raster noise and is rejected. Scan w directly
  // instead (coarse grid, then fine around the best), keeping strictly
  // improving points only, and let the joint descent polish the framing at
  // the new depth. Two rounds, since polishing shifts the best depth a little.
  auto line_search_w = [&](VecX pt) {
    double best_obj = eval(pt);
    double best_w = pt(3);
    auto scan = [&](double lo, double hi, double step) {
      for (double w = lo; w <= hi + 1e-12; w += step) {
        VecX cand = pt;
        cand(3) = w;
        const double o = eval(cand);
        if (o < best_obj) {
          best_obj = o;
          best_w = w;
        }
      }
    };
    scan(pt(3) - 0.7, pt(3) + 0.7, 0.05);
    scan(best_w - 0.04, best_w + 0.04, 0.01);
    pt(3) = best_w;
    return pt;
  };

  // Accepted steps only ever decrease the objective, so the result is never
  // worse than the input.
  DescendResult r;
  r.p = std::move(q);
  const int rounds = 2;
  int iters_total = 0;
  for (int round = 0; round < rounds; ++round) {
    const int budget = round + 1 == rounds
                           ? cfg.max_iters - (rounds - 1) * (cfg.max_iters / rounds)
                           : cfg.max_iters / rounds;
    r = descend_core(eval, probes, budget, line_search_w(std::move(r.p)), scale0,
                     cfg, record);
    iters_total += r.iters_used;
  }
  r.iters_used = iters_total;
  const ObjectiveParams fp = to_params(r.p);
  out.f_px = fp.f_px;
  out.tx = fp.tx;
  out.ty = fp.ty;
  out.tz = fp.tz;
  out.final_objective = r.objective;
  out.iters_used = r.iters_used;
  out.converged = r.converged;
  out.trace = std::move(trace);
  return out;
}

}  // namespace percam
