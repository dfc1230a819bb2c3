#include "ipgp/model.hpp"

#include <algorithm>
#include <cmath>

#include "ipgp/rng.hpp"

namespace ipgp {

namespace {

constexpr std::uint64_t kStreamStage2 = 11;
constexpr std::uint64_t kStreamStage2Idio = 12;

FittedModel make_fitted(const SviEngine& engine, const FitOutput& out,
                        const ResponseDataset& train) {
  FittedModel model;
  model.spec = engine.spec();
  model.params = out.params;
  SviEngine::State state{out.params, out.var};
  model.states = engine.materialize(state);
  model.inducing_times = engine.inducing_times();
  model.link = engine.config().link;
  model.quadrature_points = engine.config().quadrature_points;
  model.final_elbo = out.final_elbo;
  model.train_observations = train.size();
  model.unit_ids = train.unit_ids;
  model.item_ids = train.item_ids;
  model.trait_names = train.trait_names;
  model.item_trait = train.item_trait;
  return model;
}

}  // namespace

SviEngine build_model(const ModelSpec& spec, const ResponseDataset& data,
                      const TrainConfig& config) {
  spec.validate();
  if (data.num_levels > spec.num_levels) {
    throw StructuralError("build_model: dataset has " + std::to_string(data.num_levels) +
                          " levels but the spec allows " + std::to_string(spec.num_levels));
  }
  return SviEngine(data, spec, config);
}

FitBundle fit_model(const ResponseDataset& train, const ModelSpec& spec,
                    const TrainConfig& config, const FitBundle* stage1,
                    const Mat* prior_w_pop) {
  FitBundle bundle;
  SviEngine engine = build_model(spec, train, config);
  SviEngine::State start = engine.initial_state();

  if (spec.w_pop_frozen()) {
    if (prior_w_pop != nullptr) {
      if (prior_w_pop->rows() != spec.num_factors ||
          prior_w_pop->cols() != train.items()) {
        throw StructuralError("fit_model: prior loading matrix has shape " +
                              std::to_string(prior_w_pop->rows()) + "x" +
                              std::to_string(prior_w_pop->cols()) + ", expected " +
                              std::to_string(spec.num_factors) + "x" +
                              std::to_string(train.items()));
      }
      start.params.w_pop = *prior_w_pop;
    } else {
      const FitBundle* prior_bundle = stage1;
      std::optional<FitBundle> owned;
      if (prior_bundle == nullptr) {
        TrainConfig stage1_config = config;
        stage1_config.seed = derive_seed(config.seed, kStreamStage2);
        owned = fit_model(train, make_model_spec(Variant::NOM, spec.num_factors, spec.num_levels),
                          stage1_config);
        prior_bundle = &*owned;
      }
      if (prior_bundle->model.spec.num_factors != spec.num_factors) {
        throw StructuralError("fit_model: stage-1 factor count " +
                              std::to_string(prior_bundle->model.spec.num_factors) +
                              " != stage-2 factor count " + std::to_string(spec.num_factors));
      }
      // warm start: stage 2 continues from the stage-1 optimum, adding only
      // the idiographic loadings (small random values)
      start.params.w_pop = prior_bundle->out.params.w_pop;
      start.params.log_v = prior_bundle->out.params.log_v;
      start.params.log_ell = prior_bundle->out.params.log_ell;
      start.params.raw_cuts = prior_bundle->out.params.raw_cuts;
      start.var = prior_bundle->out.var;
      if (spec.include_idio()) {
        Rng rng(derive_seed(config.seed, kStreamStage2Idio));
        for (Eigen::Index u = 0; u < start.params.w_ind.rows(); ++u) {
          for (Eigen::Index j = 0; j < start.params.w_ind.cols(); ++j) {
            start.params.w_ind(u, j) = 0.1 * rng.normal();
          }
        }
      }
      if (owned.has_value()) bundle.stage1 = owned->out;
    }
  }

  bundle.out = engine.fit(start);
  bundle.model = make_fitted(engine, bundle.out, train);
  return bundle;
}

PriorFit fit_population_prior(const ResponseDataset& train, int num_factors,
                              const TrainConfig& config) {
  PriorFit prior;
  prior.bundle =
      fit_model(train, make_model_spec(Variant::NOM, num_factors, train.num_levels), config);
  prior.w_pop = prior.bundle.out.params.w_pop;
  return prior;
}

ComparisonTable bayes_factor_table(const std::vector<EvidenceEntry>& entries,
                                   const Vec& prior_weights) {
  if (entries.empty()) throw ConfigError("bayes_factor_table: no models given");
  if (prior_weights.size() != static_cast<Eigen::Index>(entries.size())) {
    throw ConfigError("bayes_factor_table: prior weight count != model count");
  }
  for (Eigen::Index i = 0; i < prior_weights.size(); ++i) {
    if (!(prior_weights[i] > 0.0)) {
      throw ConfigError("bayes_factor_table: prior weights must be positive");
    }
  }
  for (const auto& e : entries) {
    if (e.obs_count != entries.front().obs_count) {
      throw ConfigError("bayes_factor_table: models were fitted on different observation "
                        "counts (" +
                        std::to_string(e.obs_count) + " vs " +
                        std::to_string(entries.front().obs_count) + ")");
    }
  }
  const double prior_total = prior_weights.sum();

  // posterior in log space
  Vec log_post(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    log_post[i] = entries[i].elbo + std::log(prior_weights[i] / prior_total);
  }
  const double max_lp = log_post.maxCoeff();
  const double lse = max_lp + std::log((log_post.array() - max_lp).exp().sum());

  ComparisonTable table;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ComparisonRow row;
    row.label = entries[i].label;
    row.log_evidence = entries[i].elbo;
    row.log_bf_vs_ref = entries[i].elbo - entries.front().elbo;
    row.prior_weight = prior_weights[i] / prior_total;
    row.posterior_weight = std::exp(log_post[i] - lse);
    table.rows.push_back(row);
  }
  return table;
}

Mat correlation_from_kernel(const Mat& kernel) {
  const Eigen::Index j = kernel.rows();
  Vec d(j);
  for (Eigen::Index i = 0; i < j; ++i) {
    if (!(kernel(i, i) > 0.0)) {
      throw NumericalError("task correlation: kernel diagonal entry " + std::to_string(i) +
                           " is not positive");
    }
    d[i] = 1.0 / std::sqrt(kernel(i, i));
  }
  return d.asDiagonal() * kernel * d.asDiagonal();
}

Mat estimated_task_correlation(const ModelSpec& spec, const ModelParams& params, int unit) {
  if (unit < 0) {
    const Vec v = params.log_v.array().exp();
    return correlation_from_kernel(
        task_kernel(spec.include_pop() ? params.w_pop : Mat(0, v.size()), Vec(), v));
  }
  return correlation_from_kernel(params.task_kernel_for_unit(spec, unit));
}

}  // namespace ipgp
