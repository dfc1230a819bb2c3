// Benchmark of the ELBO/gradient evaluation: serial reference (one chunk)
// against the OpenMP path at higher thread counts, on the default synthetic
// workload.

#include <chrono>
#include <cstdio>
#include <vector>

#include "ipgp/model.hpp"
#include "ipgp/simulate.hpp"

using namespace ipgp;

namespace {

double time_ms(const SviEngine& engine, const SviEngine::State& state,
               const std::vector<int>& batch, int repeats) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    engine.gradients(state, batch);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    if (ms < best) best = ms;
  }
  return best;
}

}  // namespace

int main() {
  SimulationConfig sim;
  sim.seed = 7;
  const SimulationResult data = simulate(sim);

  std::vector<int> full(data.train.size());
  for (int i = 0; i < data.train.size(); ++i) full[i] = i;

  const ModelSpec spec = make_model_spec(Variant::NP, sim.num_factors, sim.num_levels);
  std::printf("full-batch ELBO gradient over %d observations, %d units\n", data.train.size(),
              data.train.units());
  std::printf("%-10s %12s %10s\n", "threads", "best ms", "speedup");

  double serial_ms = 0.0;
  for (const int threads : {1, 2, 4}) {
    TrainConfig cfg;
    cfg.seed = 7;
    cfg.threads = threads;
    SviEngine engine(data.train, spec, cfg);
    const SviEngine::State state = engine.initial_state();
    const double ms = time_ms(engine, state, full, 5);
    if (threads == 1) serial_ms = ms;
    std::printf("%-10d %12.2f %9.2fx\n", threads, ms, serial_ms / ms);
  }
  return 0;
}
