#include <doctest.h>

#include <cmath>

#include "cdet/error.hpp"
#include "cdet/schedulers.hpp"

using namespace cdet;

namespace {

SchedulerConfig sc(SchedulerKind k, int total = 100) {
  SchedulerConfig c;
  c.kind = k;
  c.total_epochs = total;
  return c;
}

const SchedulerKind kAll[] = {SchedulerKind::none, SchedulerKind::multistep, SchedulerKind::cosine,
                              SchedulerKind::exponential, SchedulerKind::linear, SchedulerKind::polynomial};

}  // namespace

TEST_CASE("documented values") {
  CHECK(lr_at(sc(SchedulerKind::multistep), 79) == 1e-4);
  CHECK(lr_at(sc(SchedulerKind::multistep), 85) == doctest::Approx(5e-5).epsilon(1e-15));
  CHECK(lr_at(sc(SchedulerKind::multistep), 95) == doctest::Approx(2.5e-5).epsilon(1e-15));
  CHECK(lr_at(sc(SchedulerKind::cosine), 50) == doctest::Approx(5e-5).epsilon(1e-14));
  CHECK(lr_at(sc(SchedulerKind::exponential), 10) == doctest::Approx(5.987369392383789e-5).epsilon(1e-12));
  CHECK(milestone_epochs(sc(SchedulerKind::multistep)) == std::vector<int>{80, 90});
  CHECK(milestone_epochs(sc(SchedulerKind::multistep, 50)) == std::vector<int>{40, 45});
  CHECK(milestone_epochs(sc(SchedulerKind::multistep, 7)) == std::vector<int>{6, 7});
}

TEST_CASE("start value and monotone decay") {
  for (auto k : kAll) {
    for (int total : {1, 7, 50, 100}) {
      auto c = sc(k, total);
      CHECK(lr_at(c, 0) == c.base_lr);
      for (int e = 1; e < total; ++e) CHECK(lr_at(c, e) <= lr_at(c, e - 1));
    }
  }
}

TEST_CASE("exponential is log-linear") {
  auto c = sc(SchedulerKind::exponential);
  const double slope = std::log(lr_at(c, 1)) - std::log(lr_at(c, 0));
  for (int e = 0; e < 100; ++e)
    CHECK(std::abs(std::log(lr_at(c, e)) - (std::log(c.base_lr) + slope * e)) < 1e-12);
}

TEST_CASE("cosine final epoch") {
  auto c = sc(SchedulerKind::cosine, 40);
  CHECK(lr_at(c, 39) == (1 + std::cos(M_PI * 39 / 40)) / 2 * c.base_lr);
}

TEST_CASE("range and validation errors") {
  auto c = sc(SchedulerKind::cosine, 10);
  CHECK_THROWS_AS(lr_at(c, 10), Error);
  CHECK_THROWS_AS(lr_at(c, -1), Error);
  c.kind = SchedulerKind::multistep;
  c.multistep_milestones = {0.9, 0.8};
  CHECK_THROWS_AS(c.validate(), Error);
  c.multistep_milestones = {0.8, 0.9};
  c.multistep_gamma = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}
