#include <doctest.h>

#include <cmath>

#include "descatter3d/errors.hpp"
#include "descatter3d/rng.hpp"

using namespace descatter3d;

TEST_CASE("counter rng streams are deterministic and independent") {
  CounterRng a = CounterRng::stream(42, 0);
  CounterRng b = CounterRng::stream(42, 0);
  CounterRng c = CounterRng::stream(42, 1);
  bool differs = false;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    if (va != c.next_u64()) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("next_below covers the range without obvious bias") {
  CounterRng rng = CounterRng::stream(7, 0);
  std::array<int, 7> counts{};
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.next_below(7)];
  for (int c : counts) {
    CHECK(c > n / 7 - 600);
    CHECK(c < n / 7 + 600);
  }
}

TEST_CASE("normal draws have unit variance") {
  CounterRng rng = CounterRng::stream(12, 0);
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_normal();
    sum += x;
    sum2 += x * x;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.0).scale(1).margin(0.02));
  CHECK(sum2 / n == doctest::Approx(1.0).margin(0.03));
}

TEST_CASE("poisson rejects bad rates") {
  CounterRng rng(0);
  CHECK_THROWS_AS(poisson_sample(-1.0, rng), InvalidRate);
  CHECK_THROWS_AS(poisson_sample(std::nan(""), rng), InvalidRate);
  CHECK_THROWS_AS(poisson_sample(std::numeric_limits<double>::infinity(), rng), InvalidRate);
}

TEST_CASE("poisson lambda zero always yields zero") {
  CounterRng rng = CounterRng::stream(3, 0);
  for (int i = 0; i < 1000; ++i) CHECK(poisson_sample(0.0, rng) == 0);
}

TEST_CASE("poisson moments, small-lambda branch") {
  // Statistical oracle: mean of n draws concentrates within 3*sqrt(l/n).
  CounterRng rng = CounterRng::stream(101, 0);
  const int n = 100000;
  const double lambda = 4.0;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double k = static_cast<double>(poisson_sample(lambda, rng));
    sum += k;
    sum2 += k * k;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::fabs(mean - lambda) < 3.0 * std::sqrt(lambda / n));
  CHECK(std::fabs(var - lambda) < 0.2);
}

TEST_CASE("poisson moments, large-lambda branch") {
  CounterRng rng = CounterRng::stream(202, 0);
  const int n = 100000;
  const double lambda = 1000.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(poisson_sample(lambda, rng));
  CHECK(std::fabs(sum / n - lambda) < 3.0 * std::sqrt(lambda / n));
}

TEST_CASE("poisson is deterministic per rng state") {
  CounterRng a = CounterRng::stream(5, 9);
  CounterRng b = CounterRng::stream(5, 9);
  for (double lambda : {0.5, 7.0, 45.0, 400.0}) {
    for (int i = 0; i < 32; ++i) CHECK(poisson_sample(lambda, a) == poisson_sample(lambda, b));
  }
}
