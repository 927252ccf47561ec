#include "gasrotor/ga.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "gasrotor/error.hpp"

namespace gasrotor {

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

// Box-Muller on the portable uniform draw.
double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double random_lr(const GASpace& s, std::mt19937_64& rng) {
  const double lo = std::log10(s.min_lr), hi = std::log10(s.max_lr);
  return std::pow(10.0, lo + (hi - lo) * uniform01(rng));
}

void mutate(Hyperparams& h, const GASpace& s, double p, std::mt19937_64& rng) {
  if (uniform01(rng) < p) h.hidden_layers = uniform_int(rng, s.min_layers, s.max_layers);
  if (uniform01(rng) < p) h.width = uniform_int(rng, s.min_width, s.max_width);
  if (uniform01(rng) < p) {
    const double lo = std::log10(s.min_lr), hi = std::log10(s.max_lr);
    h.learning_rate = std::pow(10.0, std::clamp(std::log10(h.learning_rate) + 0.25 * normal(rng), lo, hi));
  }
  if (uniform01(rng) < p) h.batch_size = s.batch_sizes[uniform_index(rng, s.batch_sizes.size())];
}

Hyperparams crossover(const Hyperparams& a, const Hyperparams& b, double p, std::mt19937_64& rng) {
  Hyperparams c = a;
  if (uniform01(rng) < p) c.hidden_layers = b.hidden_layers;
  if (uniform01(rng) < p) c.width = b.width;
  if (uniform01(rng) < p) c.learning_rate = b.learning_rate;
  if (uniform01(rng) < p) c.batch_size = b.batch_size;
  return c;
}

std::size_t tournament(const std::vector<double>& fit, int k, std::mt19937_64& rng) {
  std::size_t best = uniform_index(rng, fit.size());
  for (int i = 1; i < k; ++i) {
    const std::size_t c = uniform_index(rng, fit.size());
    if (fit[c] < fit[best]) best = c;
  }
  return best;
}

double sanitize(double f) { return std::isfinite(f) ? f : std::numeric_limits<double>::infinity(); }

}  // namespace

Hyperparams random_individual(const GASpace& space, std::mt19937_64& rng) {
  Hyperparams h;
  h.hidden_layers = uniform_int(rng, space.min_layers, space.max_layers);
  h.width = uniform_int(rng, space.min_width, space.max_width);
  h.learning_rate = random_lr(space, rng);
  h.batch_size = space.batch_sizes[uniform_index(rng, space.batch_sizes.size())];
  return h;
}

GAResult ga_search(const GASpace& space, const GAOptions& o, const Fitness& fitness) {
  if (o.population < 2) throw Error(errc::invalid_argument, "population must be >= 2", "population");
  if (o.budget < o.population) throw Error(errc::invalid_argument, "budget must be >= population size", "budget");
  if (o.tournament < 1 || o.elitism < 0 || o.elitism >= o.population)
    throw Error(errc::invalid_argument, "invalid tournament size or elitism");
  if (space.batch_sizes.empty() || space.min_layers < 1 || space.min_layers > space.max_layers ||
      space.min_width < 1 || space.min_width > space.max_width || !(space.min_lr > 0.0 && space.min_lr <= space.max_lr))
    throw Error(errc::invalid_argument, "invalid search space");

  std::mt19937_64 rng(o.seed);
  GAResult result;
  result.best_fitness = std::numeric_limits<double>::infinity();
  int evaluations = 0;

  // Evaluates `pop` in order up to the remaining budget; returns how many ran.
  auto evaluate = [&](int generation, const std::vector<Hyperparams>& pop, std::vector<double>& fit) {
    const int n = std::min(static_cast<int>(pop.size()), o.budget - evaluations);
    fit.assign(n, 0.0);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int i; (i = next++) < n;) {
        try {
          fit[i] = sanitize(fitness(pop[i], derive_seed(o.seed, 0x9a, generation, i)));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < std::max(1u, o.threads); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (int i = 0; i < n; ++i) {
      result.history.push_back({generation, pop[i], fit[i]});
      if (fit[i] < result.best_fitness) {
        result.best_fitness = fit[i];
        result.best = pop[i];
      }
    }
    evaluations += n;
    return n;
  };

  std::vector<Hyperparams> pop(o.population);
  for (auto& h : pop) h = random_individual(space, rng);
  std::vector<double> fit;
  evaluate(0, pop, fit);
  result.best_per_generation.push_back(result.best_fitness);

  for (int gen = 1; gen < o.max_generations; ++gen) {
    if (evaluations >= o.budget) {
      result.budget_exhausted = true;
      break;
    }
    std::vector<std::size_t> order(pop.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fit[a] < fit[b]; });

    std::vector<Hyperparams> elite, children;
    std::vector<double> elite_fit;
    for (int e = 0; e < o.elitism; ++e) {
      elite.push_back(pop[order[e]]);
      elite_fit.push_back(fit[order[e]]);
    }
    while (static_cast<int>(elite.size() + children.size()) < o.population) {
      const auto& a = pop[tournament(fit, o.tournament, rng)];
      const auto& b = pop[tournament(fit, o.tournament, rng)];
      Hyperparams c = crossover(a, b, o.crossover, rng);
      mutate(c, space, o.mutation, rng);
      children.push_back(c);
    }
    std::vector<double> child_fit;
    const int ran = evaluate(gen, children, child_fit);
    // Elites keep their fitness; they are not re-evaluated.
    pop = elite;
    fit = elite_fit;
    for (int i = 0; i < ran; ++i) {
      pop.push_back(children[i]);
      fit.push_back(child_fit[i]);
    }
    result.best_per_generation.push_back(result.best_fitness);
    if (ran < static_cast<int>(children.size())) {
      result.budget_exhausted = true;
      break;
    }
  }
  return result;
}

Fitness block_fitness(const TrainingDataset& data, int mode, Task task, int epochs, Activation activation) {
  const BlockData tr = block_data(data, Split::train, mode, task);
  const BlockData va = block_data(data, Split::val, mode, task);
  if (tr.X.cols() == 0 || va.X.cols() == 0)
    throw Error(errc::invalid_argument, "GA needs training and validation rows for the chosen block");
  return [tr, va, task, epochs, activation](const Hyperparams& h, std::uint64_t seed) {
    MLPSpec spec;
    spec.widths.push_back(FeatureVector::kSize);
    for (int l = 0; l < h.hidden_layers; ++l) spec.widths.push_back(h.width);
    spec.widths.push_back(1);
    spec.activation = activation;
    TrainHyper hyper;
    hyper.learning_rate = h.learning_rate;
    hyper.batch_size = h.batch_size;
    hyper.epochs = epochs;
    hyper.patience = epochs;
    TrainingTrace trace;
    try {
      train_block(task, spec, hyper, tr.X, tr.y, va.X, va.y, seed, 1, &trace);
    } catch (const Error& e) {
      if (e.code() == errc::divergence) return std::numeric_limits<double>::infinity();
      throw;
    }
    double sum = 0.0;
    for (double l : trace.final_val_loss) sum += l;
    return sum / kEnsembleMembers;
  };
}

}  // namespace gasrotor
