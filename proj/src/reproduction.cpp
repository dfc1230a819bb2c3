#include "ipgp/reproduction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include "ipgp/dataset.hpp"
#include "ipgp/rng.hpp"

namespace ipgp {

namespace {

MetricReport evaluate_split(const FittedModel& model, const ResponseDataset& data) {
  std::vector<QueryPoint> queries;
  queries.reserve(data.size());
  for (int i = 0; i < data.size(); ++i) {
    queries.push_back(QueryPoint{data.unit[i], data.item[i], data.time[i]});
  }
  const Mat probs = predict_responses(model, queries);
  return accuracy_and_ll(probs, data.response);
}

SimStudyCell evaluate_cell(const std::string& label, const FitBundle& bundle,
                           const ResponseDataset& train, const ResponseDataset& test,
                           const GroundTruth& truth) {
  SimStudyCell cell;
  cell.model = label;
  cell.train = evaluate_split(bundle.model, train);
  cell.test = evaluate_split(bundle.model, test);
  cell.cmd_to_truth = mean_cmd_to_truth(bundle.model.spec, bundle.model.params, truth);
  cell.elbo = bundle.out.final_elbo;
  return cell;
}

double sample_se(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1)) /
         std::sqrt(static_cast<double>(values.size()));
}

}  // namespace

double mean_cmd_to_truth(const ModelSpec& spec, const ModelParams& params,
                         const GroundTruth& truth) {
  const int n = static_cast<int>(truth.task_correlation.size());
  double total = 0.0;
  for (int u = 0; u < n; ++u) {
    const int unit = spec.include_idio() ? u : -1;
    total += cmd(estimated_task_correlation(spec, params, unit), truth.task_correlation[u]);
  }
  return total / static_cast<double>(n);
}

double SimStudyResult::mean_test_acc(const std::string& model) const {
  double total = 0.0;
  int count = 0;
  for (const auto& row : cells) {
    for (const auto& cell : row) {
      if (cell.model == model) {
        total += cell.test.accuracy;
        ++count;
      }
    }
  }
  return count > 0 ? total / count : 0.0;
}

double SimStudyResult::mean_test_ll(const std::string& model) const {
  double total = 0.0;
  int count = 0;
  for (const auto& row : cells) {
    for (const auto& cell : row) {
      if (cell.model == model) {
        total += cell.test.mean_log_lik;
        ++count;
      }
    }
  }
  return count > 0 ? total / count : 0.0;
}

double SimStudyResult::mean_cmd(const std::string& model) const {
  double total = 0.0;
  int count = 0;
  for (const auto& row : cells) {
    for (const auto& cell : row) {
      if (cell.model == model) {
        total += cell.cmd_to_truth;
        ++count;
      }
    }
  }
  return count > 0 ? total / count : 0.0;
}

SimStudyResult reproduce_sim_study(int num_seeds, std::uint64_t base_seed,
                                   const TrainConfig& train_config,
                                   const SimulationConfig& sim_config) {
  if (num_seeds < 1) throw ConfigError("reproduce_sim_study: need at least one seed");

  SimStudyResult result;
  result.models = {"IPGP-NOM", "IPGP-IND", "IPGP-LOW", "IPGP-NP", "IPGP"};
  result.min_ind_cmd_gap = std::numeric_limits<double>::infinity();

  for (int s = 0; s < num_seeds; ++s) {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
    result.seeds.push_back(seed);

    SimulationConfig sim = sim_config;
    sim.seed = seed;
    const SimulationResult data = simulate(sim);
    const int levels = sim.num_levels;

    const auto cfg_for = [&](std::uint64_t model_stream) {
      TrainConfig cfg = train_config;
      cfg.seed = derive_seed(seed, model_stream);
      return cfg;
    };

    // the stage-1 nomothetic fit doubles as the IPGP-NOM pool entry and as
    // the informative prior for the full model
    const FitBundle nom =
        fit_model(data.train, make_model_spec(Variant::NOM, sim.num_factors, levels),
                  cfg_for(0));
    const FitBundle ipgp =
        fit_model(data.train, make_model_spec(Variant::IPGP, sim.num_factors, levels),
                  cfg_for(1), &nom);
    const FitBundle ind = fit_model(
        data.train, make_model_spec(Variant::IND, sim.num_factors, levels), cfg_for(2));
    const FitBundle low =
        fit_model(data.train, make_model_spec(Variant::LOW, 2, levels), cfg_for(3));
    const FitBundle np = fit_model(
        data.train, make_model_spec(Variant::NP, sim.num_factors, levels), cfg_for(4));

    std::vector<SimStudyCell> row;
    row.push_back(evaluate_cell("IPGP-NOM", nom, data.train, data.test, data.truth));
    row.push_back(evaluate_cell("IPGP-IND", ind, data.train, data.test, data.truth));
    row.push_back(evaluate_cell("IPGP-LOW", low, data.train, data.test, data.truth));
    row.push_back(evaluate_cell("IPGP-NP", np, data.train, data.test, data.truth));
    row.push_back(evaluate_cell("IPGP", ipgp, data.train, data.test, data.truth));

    const SimStudyCell& full = row.back();
    bool acc_win = true, cmd_win = true;
    for (std::size_t i = 0; i + 1 < row.size(); ++i) {
      if (!(full.test.accuracy > row[i].test.accuracy)) acc_win = false;
      if (!(full.cmd_to_truth < row[i].cmd_to_truth)) cmd_win = false;
    }
    if (acc_win) ++result.acc_win_seeds;
    if (cmd_win) ++result.cmd_win_seeds;
    if (!(full.elbo - row[0].elbo > 0.0)) result.bf_positive_every_seed = false;
    const double floor = std::log(1.0 / static_cast<double>(levels));
    for (const auto& cell : row) {
      if (!(cell.test.mean_log_lik > floor)) result.ll_floor_every_model = false;
    }
    result.min_ind_cmd_gap =
        std::min(result.min_ind_cmd_gap, row[1].cmd_to_truth - full.cmd_to_truth);

    result.cells.push_back(std::move(row));
    result.seconds_per_seed.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }
  return result;
}

void write_sim_study_csv(const SimStudyResult& result, const std::string& out_dir) {
  {
    std::ofstream out(out_dir + "/seed_metrics.csv");
    if (!out) throw DataError("cannot write " + out_dir + "/seed_metrics.csv");
    out << "seed,model,train_acc,train_ll,test_acc,test_ll,cmd,elbo\n";
    for (std::size_t s = 0; s < result.cells.size(); ++s) {
      for (const auto& cell : result.cells[s]) {
        out << result.seeds[s] << ',' << cell.model << ',' << format_double(cell.train.accuracy)
            << ',' << format_double(cell.train.mean_log_lik) << ','
            << format_double(cell.test.accuracy) << ','
            << format_double(cell.test.mean_log_lik) << ','
            << format_double(cell.cmd_to_truth) << ',' << format_double(cell.elbo) << '\n';
      }
    }
  }
  {
    std::ofstream out(out_dir + "/table1_desk.csv");
    if (!out) throw DataError("cannot write " + out_dir + "/table1_desk.csv");
    out << "model,train_acc,train_acc_se,train_ll,train_ll_se,test_acc,test_acc_se,"
           "test_ll,test_ll_se,cmd,cmd_se\n";
    for (const auto& model : result.models) {
      std::vector<double> train_acc, train_ll, test_acc, test_ll, cmds;
      for (const auto& row : result.cells) {
        for (const auto& cell : row) {
          if (cell.model != model) continue;
          train_acc.push_back(cell.train.accuracy);
          train_ll.push_back(cell.train.mean_log_lik);
          test_acc.push_back(cell.test.accuracy);
          test_ll.push_back(cell.test.mean_log_lik);
          cmds.push_back(cell.cmd_to_truth);
        }
      }
      const auto mean_of = [](const std::vector<double>& v) {
        double t = 0.0;
        for (const double x : v) t += x;
        return v.empty() ? 0.0 : t / static_cast<double>(v.size());
      };
      out << model << ',' << format_double(mean_of(train_acc)) << ','
          << format_double(sample_se(train_acc)) << ',' << format_double(mean_of(train_ll))
          << ',' << format_double(sample_se(train_ll)) << ','
          << format_double(mean_of(test_acc)) << ',' << format_double(sample_se(test_acc))
          << ',' << format_double(mean_of(test_ll)) << ',' << format_double(sample_se(test_ll))
          << ',' << format_double(mean_of(cmds)) << ',' << format_double(sample_se(cmds))
          << '\n';
    }
  }
}

}  // namespace ipgp
