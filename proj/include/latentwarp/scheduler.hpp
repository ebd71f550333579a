#pragma once

#include <functional>
#include <vector>

#include "latentwarp/grid.hpp"

namespace latentwarp {

enum class ScheduleKind { linear, scaled_linear };

inline constexpr double kDefaultBetaStart = 0.00085;
inline constexpr double kDefaultBetaEnd = 0.012;

/// Cumulative noise schedule. alpha_bar[t] for t in [0, T]; alpha_bar[0] = 1.
struct NoiseSchedule {
  int total_steps = 0;
  std::vector<double> alpha_bar;
  ScheduleKind kind = ScheduleKind::scaled_linear;

  double operator[](int t) const { return alpha_bar.at(static_cast<std::size_t>(t)); }
};

NoiseSchedule make_schedule(ScheduleKind kind, int total_steps,
                            double beta_start = kDefaultBetaStart,
                            double beta_end = kDefaultBetaEnd);

/// Sampling grid and the two operating points on it.
struct StepPlan {
  std::vector<int> timesteps;  // strictly increasing, within [1, T]
  int t1_index = 0;
  int t2_index = 0;

  int t1() const { return timesteps.at(t1_index); }
  int t2() const { return timesteps.at(t2_index); }
  /// Timestep reached by one sampling step from grid index `i` (0 after the first entry).
  int previous(int i) const { return i > 0 ? timesteps.at(i - 1) : 0; }
  int index_of(int t) const;  // -1 when t is not on the grid
};

/// Uniform grid {1, 1 + T/n, 1 + 2T/n, ...}; throws unless t1 and t2 lie on it.
StepPlan make_step_plan(int total_steps, int step_count, int t1, int t2);

/// Marginal forward transition q(x_to | x_from).
Grid ddpm_forward(const Grid& x_from, int t_from, int t_to, const Grid& noise,
                  const NoiseSchedule& schedule);

/// Deterministic (eta = 0) DDIM update from t to t_prev < t.
Grid ddim_step(const Grid& x_t, const Grid& eps, int t, int t_prev, const NoiseSchedule& schedule);

/// Algebraic inverse of ddim_step: t to t_next > t under the same eps.
Grid ddim_invert_step(const Grid& x_t, const Grid& eps, int t, int t_next,
                      const NoiseSchedule& schedule);

/// eps - lambda * sqrt(alpha_bar_prev) * grad
Grid guided_epsilon(const Grid& eps, const Grid& grad, double lambda, double alpha_bar_prev);

/// Noise prediction as a function of (latent, timestep).
using EpsFunction = std::function<Grid(const Grid& latent, int timestep)>;

/// One inversion step whose eps is evaluated at the destination: the
/// implicit equation x_next = invert(x_t, eps(x_next, t_next)) is solved by
/// fixed-point iteration seeded with eps(x_t, t). With refinement = 0 this
/// is the classic explicit inversion. Sampling back with ddim_step then
/// recovers x_t up to the fixed-point residual.
Grid ddim_invert_refined(const Grid& x_t, int t, int t_next, const EpsFunction& eps,
                         const NoiseSchedule& schedule, int refinement);

/// Inverts x_0 along plan.timesteps up to (and including) grid index `to_index`.
/// Returns the latent at every visited grid index [0, to_index].
std::vector<Grid> ddim_invert_to(const Grid& x0, const StepPlan& plan, int to_index,
                                 const EpsFunction& eps, const NoiseSchedule& schedule,
                                 int refinement);

/// Samples from grid index `from_index` down to t = 0.
Grid ddim_sample_from(const Grid& x, const StepPlan& plan, int from_index, const EpsFunction& eps,
                      const NoiseSchedule& schedule);

}  // namespace latentwarp
