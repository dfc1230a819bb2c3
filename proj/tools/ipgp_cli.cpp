#include <string>

#include "CLI11.hpp"

#include "ipgp/pipeline.hpp"

namespace {

struct Flags {
  std::string config_path, data, eval, out, model, link, protocol, prior_loadings, model_state,
      trait_map, fit_dir, prior_weights, lengthscale_pool;
  int factors = -1, threads = -1, clusters = -1, restarts = -1, levels = -1, epochs = -1,
      batch_size = -1, num_inducing = -1, quadrature = -1, num_seeds = -1;
  int sim_units = -1, sim_periods = -1, sim_factors = -1, sim_items = -1, sim_levels = -1;
  double sim_sparsity = -1.0, sim_train_fraction = -1.0, sim_dominant = -1.0;
  long long seed = -1;
  double learning_rate = -1.0, train_days = -1.0, horizon_days = -1.0, train_fraction = -1.0;
  bool freeze_lengthscale = false;
};

void add_common(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path,
                  "config file (key=value) or a manifest.json to re-run");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--seed", flags.seed, "root random seed");
  cmd->add_option("--threads", flags.threads, "worker threads (1 = bit-deterministic baseline)");
}

void add_data(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--data", flags.data, "long-format response CSV");
  cmd->add_option("--eval", flags.eval, "held-out response CSV evaluated after fitting");
  cmd->add_option("--levels", flags.levels, "ordinal level count (default: inferred)");
  cmd->add_option("--trait-map", flags.trait_map, "item_id,trait CSV");
}

void add_model(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--model", flags.model,
                  "model variant (IPGP, IPGP-NOM, IPGP-IND, IPGP-LOW, IPGP-NP); "
                  "compare takes a comma list");
  cmd->add_option("--factors", flags.factors, "population factor count K");
  cmd->add_option("--link", flags.link, "ordinal link: logit or probit");
  cmd->add_option("--prior-loadings", flags.prior_loadings,
                  "frozen population loading CSV (factor,<item ids...>)");
}

void add_train(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--learning-rate", flags.learning_rate, "Adam learning rate");
  cmd->add_option("--epochs", flags.epochs, "training epochs");
  cmd->add_option("--batch-size", flags.batch_size, "minibatch size");
  cmd->add_option("--inducing", flags.num_inducing, "inducing point budget per unit");
  cmd->add_option("--quadrature", flags.quadrature, "Gauss-Hermite order");
  cmd->add_flag("--freeze-lengthscale", flags.freeze_lengthscale,
                "keep per-unit time lengthscales at their initial value");
}

void add_protocol(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--protocol", flags.protocol, "evaluation protocol: random, forecast or loto");
  cmd->add_option("--train-days", flags.train_days, "forecast: training window in days");
  cmd->add_option("--horizon-days", flags.horizon_days, "forecast: prediction horizon in days");
  cmd->add_option("--train-fraction", flags.train_fraction, "random protocol split fraction");
}

ipgp::KvConfig resolve(const Flags& flags) {
  ipgp::KvConfig config;
  if (!flags.config_path.empty()) config = ipgp::KvConfig::from_file(flags.config_path);
  const auto set_str = [&config](const std::string& key, const std::string& value) {
    if (!value.empty()) config.set(key, value);
  };
  const auto set_int = [&config](const std::string& key, int value) {
    if (value >= 0) config.set(key, std::to_string(value));
  };
  const auto set_num = [&config](const std::string& key, double value) {
    if (value >= 0.0) config.set(key, ipgp::format_double(value));
  };
  set_str("data.path", flags.data);
  set_str("data.eval_path", flags.eval);
  set_str("data.trait_map", flags.trait_map);
  set_str("out.dir", flags.out);
  set_str("model.variant", flags.model);
  set_str("model.link", flags.link);
  set_str("model.prior_loadings", flags.prior_loadings);
  set_str("predict.model_state", flags.model_state);
  set_str("cluster.fit_dir", flags.fit_dir);
  set_str("protocol.kind", flags.protocol);
  set_str("compare.prior_weights", flags.prior_weights);
  set_str("sim.lengthscale_pool", flags.lengthscale_pool);
  set_int("data.levels", flags.levels);
  set_int("model.factors", flags.factors);
  set_int("threads", flags.threads);
  set_int("clusters.k", flags.clusters);
  set_int("clusters.restarts", flags.restarts);
  set_int("train.epochs", flags.epochs);
  set_int("train.batch_size", flags.batch_size);
  set_int("train.num_inducing", flags.num_inducing);
  set_int("train.quadrature_points", flags.quadrature);
  set_int("reproduce.num_seeds", flags.num_seeds);
  set_int("sim.units", flags.sim_units);
  set_int("sim.periods", flags.sim_periods);
  set_int("sim.factors", flags.sim_factors);
  set_int("sim.items", flags.sim_items);
  set_int("sim.levels", flags.sim_levels);
  set_num("sim.sparsity", flags.sim_sparsity);
  set_num("sim.train_fraction", flags.sim_train_fraction);
  set_num("sim.dominant_loading", flags.sim_dominant);
  set_num("train.learning_rate", flags.learning_rate);
  set_num("protocol.train_days", flags.train_days);
  set_num("protocol.horizon_days", flags.horizon_days);
  set_num("protocol.train_fraction", flags.train_fraction);
  if (flags.seed >= 0) config.set("seed", std::to_string(flags.seed));
  if (flags.freeze_lengthscale) config.set("train.freeze_lengthscale", "true");
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"idiographic personality Gaussian process toolkit"};
  app.require_subcommand(1);

  Flags flags;

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic longitudinal dataset");
  add_common(sim, flags);
  sim->add_option("--units", flags.sim_units, "number of units (default 10)");
  sim->add_option("--periods", flags.sim_periods, "number of periods (default 30)");
  sim->add_option("--factors", flags.sim_factors, "latent factor count (default 5)");
  sim->add_option("--items", flags.sim_items, "item count (default 20)");
  sim->add_option("--levels", flags.sim_levels, "ordinal level count (default 5)");
  sim->add_option("--sparsity", flags.sim_sparsity, "fraction of loadings zeroed (default 0.5)");
  sim->add_option("--train-fraction", flags.sim_train_fraction,
                  "train split fraction (default 0.8)");
  sim->add_option("--dominant-loading", flags.sim_dominant, "block loading value (default 3)");
  sim->add_option("--lengthscale-pool", flags.lengthscale_pool,
                  "comma list of candidate lengthscales");

  CLI::App* fit = app.add_subcommand("fit", "fit one model variant and emit its artifacts");
  add_common(fit, flags);
  add_data(fit, flags);
  add_model(fit, flags);
  add_train(fit, flags);
  add_protocol(fit, flags);

  CLI::App* predict = app.add_subcommand("predict", "evaluate a saved model on new responses");
  add_common(predict, flags);
  add_data(predict, flags);
  predict->add_option("--model-state", flags.model_state, "model_state.json from a fit run");

  CLI::App* compare = app.add_subcommand("compare", "fit several variants and compare evidence");
  add_common(compare, flags);
  add_data(compare, flags);
  add_model(compare, flags);
  add_train(compare, flags);
  add_protocol(compare, flags);
  compare->add_option("--prior-weights", flags.prior_weights, "comma list of model prior weights");

  CLI::App* cluster = app.add_subcommand("cluster", "k-means profiles of unit correlations");
  add_common(cluster, flags);
  cluster->add_option("--fit-dir", flags.fit_dir, "directory holding model_state.json");
  cluster->add_option("--clusters", flags.clusters, "cluster count k (default 4)");
  cluster->add_option("--restarts", flags.restarts, "k-means restarts (default 10)");

  CLI::App* reproduce =
      app.add_subcommand("reproduce-sim-study", "desk-scale rerun of the simulation study");
  add_common(reproduce, flags);
  add_train(reproduce, flags);
  reproduce->add_option("--num-seeds", flags.num_seeds, "seed count (default 5)");

  CLI11_PARSE(app, argc, argv);

  const std::string subcommand = app.get_subcommands().front()->get_name();
  return ipgp::run_pipeline(subcommand, resolve(flags));
}
