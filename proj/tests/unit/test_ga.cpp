#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gasrotor/error.hpp"
#include "gasrotor/ga.hpp"

using namespace gasrotor;

namespace {

double toy(const Hyperparams& h, std::uint64_t) { return (h.learning_rate - 1e-3) * (h.learning_rate - 1e-3); }

}  // namespace

TEST_CASE("budget of one population returns the best initial individual") {
  GAOptions o;
  o.budget = o.population;
  o.seed = 3;
  const GAResult r = ga_search(GASpace{}, o, toy);
  REQUIRE(r.history.size() == static_cast<std::size_t>(o.population));
  const auto best = std::min_element(r.history.begin(), r.history.end(),
                                     [](const auto& a, const auto& b) { return a.fitness < b.fitness; });
  CHECK(r.best == best->params);
  CHECK(r.best_fitness == best->fitness);
  CHECK(r.budget_exhausted);
  for (const auto& e : r.history) CHECK(e.generation == 0);
}

TEST_CASE("toy fitness converges to the optimal learning rate") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    GAOptions o;
    o.seed = seed;
    const GAResult r = ga_search(GASpace{}, o, toy);
    CHECK(r.best_per_generation.size() == 10);
    CHECK(r.best.learning_rate >= 0.5e-3);
    CHECK(r.best.learning_rate <= 2e-3);
  }
}

TEST_CASE("best-ever fitness is non-increasing") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GAOptions o;
    o.seed = seed;
    o.budget = 200;
    o.max_generations = 30;
    // Noisy, non-convex fitness over every gene.
    const GAResult r = ga_search(GASpace{}, o, [](const Hyperparams& h, std::uint64_t s) {
      return std::sin(h.width * 0.3) + std::abs(std::log10(h.learning_rate) + 2.5) + 0.1 * h.hidden_layers +
             1e-3 * static_cast<double>(s % 1000) + (h.batch_size == 64 ? 0.0 : 0.2);
    });
    for (std::size_t g = 1; g < r.best_per_generation.size(); ++g)
      CHECK(r.best_per_generation[g] <= r.best_per_generation[g - 1]);
    double best = INFINITY;
    for (const auto& e : r.history) best = std::min(best, e.fitness);
    CHECK(best == r.best_fitness);
  }
}

TEST_CASE("same seed gives the same history, with any thread count") {
  GAOptions o;
  o.seed = 42;
  auto fit = [](const Hyperparams& h, std::uint64_t s) { return toy(h, s) + 1e-12 * static_cast<double>(s % 97); };
  const GAResult a = ga_search(GASpace{}, o, fit);
  o.threads = 4;
  const GAResult b = ga_search(GASpace{}, o, fit);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].params == b.history[i].params);
    CHECK(a.history[i].fitness == b.history[i].fitness);
    CHECK(a.history[i].generation == b.history[i].generation);
  }
}

TEST_CASE("individuals stay inside the search space") {
  GASpace s;
  GAOptions o;
  o.seed = 9;
  const GAResult r = ga_search(s, o, toy);
  for (const auto& e : r.history) {
    CHECK(e.params.hidden_layers >= s.min_layers);
    CHECK(e.params.hidden_layers <= s.max_layers);
    CHECK(e.params.width >= s.min_width);
    CHECK(e.params.width <= s.max_width);
    CHECK(e.params.learning_rate >= s.min_lr * (1 - 1e-12));
    CHECK(e.params.learning_rate <= s.max_lr * (1 + 1e-12));
    CHECK(std::find(s.batch_sizes.begin(), s.batch_sizes.end(), e.params.batch_size) != s.batch_sizes.end());
  }
}

TEST_CASE("budget exhausted mid-generation is flagged") {
  GAOptions o;
  o.budget = 20;
  const GAResult r = ga_search(GASpace{}, o, toy);
  CHECK(r.history.size() == 20);
  CHECK(r.budget_exhausted);
  o.budget = 80;
  CHECK_FALSE(ga_search(GASpace{}, o, toy).budget_exhausted);
  o.budget = 7;
  CHECK_THROWS_AS(ga_search(GASpace{}, o, toy), Error);
  GASpace bad;
  bad.batch_sizes.clear();
  o.budget = 80;
  CHECK_THROWS_AS(ga_search(bad, o, toy), Error);
}

TEST_CASE("non-finite fitness ranks last") {
  GAOptions o;
  o.budget = o.population;
  const GAResult r = ga_search(GASpace{}, o, [](const Hyperparams& h, std::uint64_t) {
    return h.width % 2 ? std::nan("") : 1.0 / h.width;
  });
  CHECK(std::isfinite(r.best_fitness));
  CHECK(r.best.width % 2 == 0);
}
