#include <cmath>

#include "doctest.h"
#include "latentwarp/mock_backends.hpp"
#include "latentwarp/random.hpp"
#include "latentwarp/scheduler.hpp"

using namespace latentwarp;

namespace {

const NoiseSchedule& schedule() {
  static const NoiseSchedule s = make_schedule(ScheduleKind::scaled_linear, 1000);
  return s;
}

EpsFunction linear_mock_eps(std::uint64_t seed) {
  auto denoiser = std::make_shared<LinearMockDenoiser>(seed);
  const TextEmbedding text = MockTextEncoder().encode("a quiet harbor at dawn");
  return [denoiser, text](const Grid& x, int t) {
    DenoiserRequest r;
    r.latent = x;
    r.timestep = t;
    r.text = text;
    return run_denoiser(*denoiser, r).eps;
  };
}

}  // namespace

TEST_CASE("schedule invariants") {
  for (auto kind : {ScheduleKind::linear, ScheduleKind::scaled_linear}) {
    const auto s = make_schedule(kind, 1000);
    CHECK(s[0] == 1.0);
    for (int t = 1; t <= 1000; ++t) {
      CHECK(s[t] < s[t - 1]);
      CHECK(s[t] > 0.0);
    }
  }
  const auto s = make_schedule(ScheduleKind::linear, 2, 0.1, 0.2);
  CHECK(s[1] == doctest::Approx(0.9));
  CHECK(s[2] == doctest::Approx(0.9 * 0.8));
  CHECK_THROWS_AS(make_schedule(ScheduleKind::linear, 1), std::invalid_argument);
}

TEST_CASE("default step plan puts t1 and t2 on the 50-step grid") {
  const auto plan = make_step_plan(1000, 50, 21, 441);
  REQUIRE(plan.timesteps.size() == 50);
  CHECK(plan.timesteps.front() == 1);
  CHECK(plan.timesteps.back() == 981);
  CHECK(plan.t1_index == 1);
  CHECK(plan.t2_index == 22);
  CHECK(plan.previous(0) == 0);
  CHECK(plan.previous(22) == 421);
  CHECK(plan.index_of(441) == 22);
  CHECK(plan.index_of(440) == -1);
  CHECK_THROWS_AS(make_step_plan(1000, 50, 20, 441), std::invalid_argument);
  CHECK_THROWS_AS(make_step_plan(1000, 50, 441, 21), std::invalid_argument);
}

TEST_CASE("ddpm_forward from zero is the closed form bit for bit") {
  const Grid x0 = normal_grid({4, 8, 8}, 1), z = normal_grid({4, 8, 8}, 2);
  for (int t : {1, 21, 441, 1000}) {
    const Grid out = ddpm_forward(x0, 0, t, z, schedule());
    const double a = std::sqrt(schedule()[t]), b = std::sqrt(1.0 - schedule()[t]);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == a * x0.data()[i] + b * z.data()[i]);
  }
  const Grid scaled = ddpm_forward(x0, 21, 441, Grid(x0.shape()), schedule());
  CHECK(max_abs_diff(scaled, x0 * std::sqrt(schedule()[441] / schedule()[21])) < 1e-15);
  CHECK_THROWS_AS(ddpm_forward(x0, 441, 441, z, schedule()), std::invalid_argument);
}

TEST_CASE("ddpm transition variance matches the schedule") {
  const Grid zero(1, 1, 100000);
  const Grid out = ddpm_forward(zero, 21, 441, normal_grid(zero.shape(), 77), schedule());
  double mean = 0.0, var = 0.0;
  for (double v : out.data()) mean += v;
  mean /= out.size();
  for (double v : out.data()) var += (v - mean) * (v - mean);
  var /= out.size() - 1;
  const double expected = 1.0 - schedule()[441] / schedule()[21];
  CHECK(std::abs(var - expected) / expected < 0.01);
}

TEST_CASE("ddim step and inversion are exact inverses") {
  const auto plan = make_step_plan(1000, 50, 21, 441);
  const Grid x = normal_grid({4, 8, 8}, 3), eps = normal_grid({4, 8, 8}, 4);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < plan.timesteps.size(); ++i) {
    const int t = plan.timesteps[i], tn = plan.timesteps[i + 1];
    const Grid up = ddim_invert_step(x, eps, t, tn, schedule());
    worst = std::max(worst, max_abs_diff(ddim_step(up, eps, tn, t, schedule()), x));
  }
  CHECK(worst < 1e-10);
  const Grid zero(x.shape());
  CHECK(max_abs_diff(ddim_step(x, zero, 441, 21, schedule()), x * std::sqrt(schedule()[21] / schedule()[441])) < 1e-14);
  CHECK(max_abs_diff(ddim_invert_step(x, zero, 21, 441, schedule()), x * std::sqrt(schedule()[441] / schedule()[21])) < 1e-14);
  CHECK_THROWS_AS(ddim_step(x, eps, 21, 21, schedule()), std::invalid_argument);
  CHECK_THROWS_AS(ddim_invert_step(x, eps, 441, 21, schedule()), std::invalid_argument);
}

TEST_CASE("guided epsilon") {
  const Grid eps = normal_grid({4, 4, 4}, 5), grad = normal_grid({4, 4, 4}, 6);
  CHECK(guided_epsilon(eps, grad, 0.0, 0.5) == eps);
  CHECK(guided_epsilon(eps, Grid(eps.shape()), 300.0, 0.5) == eps);
  const Grid g = guided_epsilon(eps, grad, 300.0, 0.25);
  CHECK(max_abs_diff(g, eps - grad * 150.0) < 1e-12);
  CHECK_THROWS_AS(guided_epsilon(eps, Grid(1, 4, 4), 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("50-step sampling from noise with the linear mock stays finite and bounded") {
  const auto plan = make_step_plan(1000, 50, 21, 441);
  const Grid x = normal_grid({4, 16, 16}, 8);
  const Grid out = ddim_sample_from(x, plan, 49, linear_mock_eps(1), schedule());
  CHECK(all_finite(out));
  const double ratio = l2_norm(out) / l2_norm(x);
  CHECK(ratio > 0.1);
  CHECK(ratio < 10.0);
}

TEST_CASE("invert then sample reconstructs the clean latent with the linear mock") {
  const auto plan = make_step_plan(1000, 50, 21, 441);
  const auto eps = linear_mock_eps(2);
  for (std::uint64_t seed : {10u, 11u, 12u}) {
    const Grid x0 = normal_grid({4, 16, 16}, seed);
    for (int to : {plan.t1_index, plan.t2_index, 49}) {
      const auto path = ddim_invert_to(x0, plan, to, eps, schedule(), 5);
      REQUIRE(path.size() == static_cast<std::size_t>(to + 1));
      const Grid back = ddim_sample_from(path.back(), plan, to, eps, schedule());
      CHECK(max_abs_diff(back, x0) < 1e-4);
    }
  }
}

TEST_CASE("classic explicit inversion drifts without refinement") {
  const auto plan = make_step_plan(1000, 50, 21, 441);
  const auto eps = linear_mock_eps(2);
  const Grid x0 = normal_grid({4, 16, 16}, 10);
  const auto path = ddim_invert_to(x0, plan, 49, eps, schedule(), 0);
  const Grid back = ddim_sample_from(path.back(), plan, 49, eps, schedule());
  const auto refined = ddim_invert_to(x0, plan, 49, eps, schedule(), 5);
  const Grid back_refined = ddim_sample_from(refined.back(), plan, 49, eps, schedule());
  CHECK(max_abs_diff(back, x0) > max_abs_diff(back_refined, x0));
}
