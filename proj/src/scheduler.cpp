#include "latentwarp/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace latentwarp {

namespace {

void require_timestep(const NoiseSchedule& s, int t, const char* what) {
  if (t < 0 || t > s.total_steps) {
    throw std::invalid_argument(std::string(what) + ": timestep " + std::to_string(t) +
                                " outside [0, " + std::to_string(s.total_steps) + "]");
  }
}

// sqrt(ab_to) * (x - sqrt(1 - ab_from) * eps) / sqrt(ab_from) + sqrt(1 - ab_to) * eps
Grid ddim_transfer(const Grid& x, const Grid& eps, double ab_from, double ab_to) {
  require_same_shape(x, eps, "ddim");
  const double sa_from = std::sqrt(ab_from);
  const double sb_from = std::sqrt(1.0 - ab_from);
  const double sa_to = std::sqrt(ab_to);
  const double sb_to = std::sqrt(1.0 - ab_to);
  Grid out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = eps.data()[i];
    out.data()[i] = sa_to * (x.data()[i] - sb_from * e) / sa_from + sb_to * e;
  }
  return out;
}

}  // namespace

NoiseSchedule make_schedule(ScheduleKind kind, int total_steps, double beta_start, double beta_end) {
  if (total_steps < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw std::invalid_argument("make_schedule: betas must satisfy 0 < start <= end < 1");
  }
  NoiseSchedule s;
  s.total_steps = total_steps;
  s.kind = kind;
  s.alpha_bar.resize(static_cast<std::size_t>(total_steps) + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= total_steps; ++t) {
    const double frac = static_cast<double>(t - 1) / (total_steps - 1);
    double beta;
    if (kind == ScheduleKind::linear) {
      beta = beta_start + (beta_end - beta_start) * frac;
    } else {
      const double r = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * frac;
      beta = r * r;
    }
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
  }
  return s;
}

int StepPlan::index_of(int t) const {
  auto it = std::lower_bound(timesteps.begin(), timesteps.end(), t);
  if (it == timesteps.end() || *it != t) return -1;
  return static_cast<int>(it - timesteps.begin());
}

StepPlan make_step_plan(int total_steps, int step_count, int t1, int t2) {
  if (step_count < 1 || step_count > total_steps || total_steps % step_count != 0) {
    throw std::invalid_argument("make_step_plan: step count must divide T (T=" +
                                std::to_string(total_steps) + ", n=" + std::to_string(step_count) + ")");
  }
  StepPlan plan;
  const int stride = total_steps / step_count;
  for (int k = 0; k < step_count; ++k) plan.timesteps.push_back(1 + k * stride);
  plan.t1_index = plan.index_of(t1);
  plan.t2_index = plan.index_of(t2);
  if (plan.t1_index < 0 || plan.t2_index < 0) {
    throw std::invalid_argument("make_step_plan: t1=" + std::to_string(t1) + " and t2=" +
                                std::to_string(t2) + " must lie on the sampling grid (stride " +
                                std::to_string(stride) + ", offset 1)");
  }
  if (plan.t1_index >= plan.t2_index) throw std::invalid_argument("make_step_plan: need t1 < t2");
  return plan;
}

Grid ddpm_forward(const Grid& x_from, int t_from, int t_to, const Grid& noise,
                  const NoiseSchedule& schedule) {
  require_timestep(schedule, t_from, "ddpm_forward");
  require_timestep(schedule, t_to, "ddpm_forward");
  if (t_from >= t_to) throw std::invalid_argument("ddpm_forward: need t_from < t_to");
  require_same_shape(x_from, noise, "ddpm_forward");
  const double ratio = schedule[t_to] / schedule[t_from];
  const double keep = std::sqrt(ratio);
  const double add = std::sqrt(1.0 - ratio);
  Grid out(x_from.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = keep * x_from.data()[i] + add * noise.data()[i];
  }
  return out;
}

Grid ddim_step(const Grid& x_t, const Grid& eps, int t, int t_prev, const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "ddim_step");
  require_timestep(schedule, t_prev, "ddim_step");
  if (t_prev >= t) throw std::invalid_argument("ddim_step: need t_prev < t");
  return ddim_transfer(x_t, eps, schedule[t], schedule[t_prev]);
}

Grid ddim_invert_step(const Grid& x_t, const Grid& eps, int t, int t_next,
                      const NoiseSchedule& schedule) {
  require_timestep(schedule, t, "ddim_invert_step");
  require_timestep(schedule, t_next, "ddim_invert_step");
  if (t_next <= t) throw std::invalid_argument("ddim_invert_step: need t_next > t");
  return ddim_transfer(x_t, eps, schedule[t], schedule[t_next]);
}

Grid guided_epsilon(const Grid& eps, const Grid& grad, double lambda, double alpha_bar_prev) {
  require_same_shape(eps, grad, "guided_epsilon");
  if (!(lambda >= 0.0)) throw std::invalid_argument("guided_epsilon: lambda must be >= 0");
  if (lambda == 0.0) return eps;
  const double scale = lambda * std::sqrt(alpha_bar_prev);
  Grid out = eps;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= scale * grad.data()[i];
  return out;
}

Grid ddim_invert_refined(const Grid& x_t, int t, int t_next, const EpsFunction& eps,
                         const NoiseSchedule& schedule, int refinement) {
  // The model is never queried at t = 0; the first grid timestep stands in.
  Grid next = ddim_invert_step(x_t, eps(x_t, t > 0 ? t : t_next), t, t_next, schedule);
  for (int k = 0; k < refinement; ++k) {
    next = ddim_invert_step(x_t, eps(next, t_next), t, t_next, schedule);
  }
  return next;
}

std::vector<Grid> ddim_invert_to(const Grid& x0, const StepPlan& plan, int to_index,
                                 const EpsFunction& eps, const NoiseSchedule& schedule,
                                 int refinement) {
  if (to_index < 0 || to_index >= static_cast<int>(plan.timesteps.size())) {
    throw std::invalid_argument("ddim_invert_to: grid index out of range");
  }
  std::vector<Grid> path;
  path.reserve(static_cast<std::size_t>(to_index) + 1);
  Grid x = x0;
  int t = 0;
  for (int i = 0; i <= to_index; ++i) {
    x = ddim_invert_refined(x, t, plan.timesteps[i], eps, schedule, refinement);
    t = plan.timesteps[i];
    path.push_back(x);
  }
  return path;
}

Grid ddim_sample_from(const Grid& x, const StepPlan& plan, int from_index, const EpsFunction& eps,
                      const NoiseSchedule& schedule) {
  if (from_index < 0 || from_index >= static_cast<int>(plan.timesteps.size())) {
    throw std::invalid_argument("ddim_sample_from: grid index out of range");
  }
  Grid cur = x;
  for (int i = from_index; i >= 0; --i) {
    const int t = plan.timesteps[i];
    cur = ddim_step(cur, eps(cur, t), t, plan.previous(i), schedule);
  }
  return cur;
}

}  // namespace latentwarp
