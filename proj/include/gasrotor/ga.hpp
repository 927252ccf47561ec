#pragma once

// Generational genetic search over network hyperparameters.

#include <cstdint>
#include <functional>
#include <vector>

#include "gasrotor/surrogate.hpp"

namespace gasrotor {

struct Hyperparams {
  int hidden_layers = 2;
  int width = 32;
  double learning_rate = 1e-3;
  int batch_size = 64;

  bool operator==(const Hyperparams&) const = default;
};

struct GASpace {
  int min_layers = 1, max_layers = 4;
  int min_width = 8, max_width = 128;
  double min_lr = 1e-4, max_lr = 1e-2;  // sampled in log10
  std::vector<int> batch_sizes{32, 64, 128};
};

struct GAOptions {
  int population = 8;
  int tournament = 3;
  double crossover = 0.5;  // per-gene swap probability
  double mutation = 0.2;   // per-gene
  int elitism = 1;
  int budget = 80;         // fitness evaluations, >= population
  int max_generations = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct GAEvaluation {
  int generation = 0;
  Hyperparams params;
  double fitness = 0.0;
};

struct GAResult {
  Hyperparams best;
  double best_fitness = 0.0;
  std::vector<GAEvaluation> history;       // evaluation order
  std::vector<double> best_per_generation; // best-ever after each generation
  bool budget_exhausted = false;           // stopped inside a generation
};

/// Lower is better. The seed is fixed per individual, so results do not depend
/// on scheduling.
using Fitness = std::function<double(const Hyperparams&, std::uint64_t seed)>;

GAResult ga_search(const GASpace& space, const GAOptions& options, const Fitness& fitness);

Hyperparams random_individual(const GASpace& space, std::mt19937_64& rng);

/// Fitness = mean validation loss of one block trained for `epochs` epochs with
/// the candidate architecture.
Fitness block_fitness(const TrainingDataset& data, int mode, Task task, int epochs, Activation activation = Activation::tanh);

}  // namespace gasrotor
