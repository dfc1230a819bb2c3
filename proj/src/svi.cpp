#include "ipgp/svi.hpp"

#include <algorithm>
#include <cmath>

#include "ipgp/adam.hpp"
#include "ipgp/parallel.hpp"
#include "ipgp/rng.hpp"

namespace ipgp {

namespace {

// rng stream ids under the fit seed
constexpr std::uint64_t kStreamWPop = 0;
constexpr std::uint64_t kStreamWInd = 1;
constexpr std::uint64_t kStreamShuffle = 2;

Mat cholesky_jittered(const Mat& matrix, const char* what, double* jitter_used = nullptr) {
  for (const double jitter : {kJitter, kJitterMax}) {
    Mat shifted = matrix;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() == Eigen::Success) {
      if (jitter_used != nullptr) *jitter_used = jitter;
      return Mat(llt.matrixL());
    }
  }
  throw NumericalError(std::string(what) + ": Cholesky factorization failed after jitter " +
                       "escalation (size " + std::to_string(matrix.rows()) + ", diag min " +
                       std::to_string(matrix.diagonal().minCoeff()) + ", diag max " +
                       std::to_string(matrix.diagonal().maxCoeff()) + ")");
}

Mat assemble_kuu(const Mat& task, const Mat& time_cov, int num_items) {
  const int n_z = static_cast<int>(time_cov.rows());
  Mat kuu(num_items * n_z, num_items * n_z);
  for (int a = 0; a < num_items; ++a) {
    for (int b = 0; b < num_items; ++b) {
      kuu.block(a * n_z, b * n_z, n_z, n_z) = task(a, b) * time_cov;
    }
  }
  return kuu;
}

// KL of the whitened state against N(0, I).
double whitened_kl(const WhitenedState& ws) {
  const Eigen::Index m = ws.mean.size();
  double frob = 0.0, logdet = 0.0;
  for (Eigen::Index c = 0; c < m; ++c) {
    const double d = std::exp(ws.l_raw(c, c));
    frob += d * d;
    logdet += ws.l_raw(c, c);
    for (Eigen::Index r = c + 1; r < m; ++r) frob += ws.l_raw(r, c) * ws.l_raw(r, c);
  }
  return 0.5 * (ws.mean.squaredNorm() + frob - static_cast<double>(m)) - logdet;
}

void pack_lower(const Mat& lower, Vec& flat, Eigen::Index& pos) {
  for (Eigen::Index c = 0; c < lower.cols(); ++c) {
    for (Eigen::Index r = c; r < lower.rows(); ++r) flat[pos++] = lower(r, c);
  }
}

void unpack_lower(const Vec& flat, Mat& lower, Eigen::Index& pos) {
  for (Eigen::Index c = 0; c < lower.cols(); ++c) {
    for (Eigen::Index r = c; r < lower.rows(); ++r) lower(r, c) = flat[pos++];
  }
}

}  // namespace

void VariationalState::validate() const {
  const int m = size();
  if (m < 1) throw StructuralError("variational state needs at least one inducing point");
  if (mean.size() != m || cov_factor.rows() != m || cov_factor.cols() != m) {
    throw StructuralError("variational state dimensions disagree with inducing point count");
  }
  for (int i = 0; i < m; ++i) {
    if (!(cov_factor(i, i) > 0.0)) {
      throw StructuralError("variational covariance factor needs a strictly positive diagonal");
    }
    for (int j = i + 1; j < m; ++j) {
      if (inducing[i].item == inducing[j].item && inducing[i].time == inducing[j].time) {
        throw StructuralError("inducing points must be distinct");
      }
    }
  }
  thresholds.validate();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (epochs < 0) throw ConfigError("train config: epochs must be nonnegative");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be positive");
  if (num_inducing < 1) throw ConfigError("train config: num_inducing must be positive");
  if (quadrature_points < 1) {
    throw ConfigError("train config: quadrature_points must be positive");
  }
  if (threads < 1) throw ConfigError("train config: threads must be positive");
}

std::vector<MarginalPrediction> marginal_q_f(const VariationalState& state, const Mat& task_cov,
                                             double time_lengthscale,
                                             const std::vector<InducingPoint>& queries) {
  state.validate();
  if (!(time_lengthscale > 0.0)) {
    throw ConfigError("marginal_q_f: time lengthscale must be positive");
  }
  const int m = state.size();
  const int num_items = static_cast<int>(task_cov.rows());
  const double inv_sq = 1.0 / (time_lengthscale * time_lengthscale);
  for (const auto& p : state.inducing) {
    if (p.item < 0 || p.item >= num_items) {
      throw StructuralError("marginal_q_f: inducing item index outside task kernel");
    }
  }

  Mat kuu(m, m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      const double d = state.inducing[a].time - state.inducing[b].time;
      kuu(a, b) = task_cov(state.inducing[a].item, state.inducing[b].item) *
                  std::exp(-d * d * inv_sq);
    }
  }
  const Mat r = cholesky_jittered(kuu, "marginal_q_f");
  auto lower = r.triangularView<Eigen::Lower>();
  auto upper = r.transpose().triangularView<Eigen::Upper>();

  Vec alpha = state.mean;
  lower.solveInPlace(alpha);
  upper.solveInPlace(alpha);  // alpha = Kuu^-1 mu

  std::vector<MarginalPrediction> out;
  out.reserve(queries.size());
  Vec k(m), beta(m);
  for (const auto& q : queries) {
    if (q.item < 0 || q.item >= num_items) {
      throw StructuralError("marginal_q_f: query item index outside task kernel");
    }
    for (int a = 0; a < m; ++a) {
      const double d = state.inducing[a].time - q.time;
      k[a] = task_cov(state.inducing[a].item, q.item) * std::exp(-d * d * inv_sq);
    }
    MarginalPrediction pred;
    pred.mean = k.dot(alpha);
    beta = k;
    lower.solveInPlace(beta);
    const double explained = beta.squaredNorm();
    upper.solveInPlace(beta);  // beta = Kuu^-1 k
    const double requantified =
        (state.cov_factor.transpose().triangularView<Eigen::Upper>() * beta).squaredNorm();
    pred.variance = std::max(task_cov(q.item, q.item) - explained + requantified, 1e-12);
    out.push_back(pred);
  }
  return out;
}

double kl_gaussian(const VariationalState& state, const Mat& prior_cov) {
  const int m = state.size();
  if (prior_cov.rows() != m || prior_cov.cols() != m) {
    throw StructuralError("kl_gaussian: prior covariance size mismatch");
  }
  for (int i = 0; i < m; ++i) {
    if (!(state.cov_factor(i, i) > 0.0)) {
      throw NumericalError("kl_gaussian: variational covariance is not positive definite");
    }
  }
  Eigen::LLT<Mat> llt(prior_cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("kl_gaussian: prior covariance is not positive definite");
  }
  const Mat r = llt.matrixL();
  auto lower = r.triangularView<Eigen::Lower>();

  Mat a = state.cov_factor;
  lower.solveInPlace(a);  // R^-1 L
  Vec b = state.mean;
  lower.solveInPlace(b);  // R^-1 mu

  double logdet_prior = 0.0, logdet_q = 0.0;
  for (int i = 0; i < m; ++i) {
    logdet_prior += std::log(r(i, i));
    logdet_q += std::log(state.cov_factor(i, i));
  }
  return 0.5 * (a.squaredNorm() + b.squaredNorm() - m) + logdet_prior - logdet_q;
}

Mat cholesky_backward(const Mat& chol_lower, const Mat& chol_bar) {
  Mat p = chol_lower.transpose() * chol_bar;
  p = Mat(p.triangularView<Eigen::Lower>());
  p.diagonal() *= 0.5;
  auto upper = chol_lower.transpose().triangularView<Eigen::Upper>();
  const Mat s1 = upper.solve(p);            // L^-T Phi
  const Mat s1t = s1.transpose();
  const Mat s = Mat(upper.solve(s1t)).transpose();  // (L^-T Phi) L^-1
  return 0.5 * (s + s.transpose());
}

Mat ModelParams::task_kernel_for_unit(const ModelSpec& spec, int unit) const {
  Vec v = log_v.array().exp();
  Vec w;
  if (spec.include_idio()) {
    if (unit < 0 || unit >= w_ind.rows()) {
      throw StructuralError("task kernel: unit index outside idiographic table");
    }
    w = w_ind.row(unit).transpose();
  }
  return task_kernel(spec.include_pop() ? w_pop : Mat(0, v.size()), w, v);
}

Mat WhitenedState::l_tilde() const {
  Mat l = Mat::Zero(l_raw.rows(), l_raw.cols());
  for (Eigen::Index c = 0; c < l_raw.cols(); ++c) {
    l(c, c) = std::exp(l_raw(c, c));
    for (Eigen::Index r = c + 1; r < l_raw.rows(); ++r) l(r, c) = l_raw(r, c);
  }
  return l;
}

// ---------------------------------------------------------------------------
// SviEngine
// ---------------------------------------------------------------------------

SviEngine::SviEngine(const ResponseDataset& data, ModelSpec spec, TrainConfig config)
    : data_(data), spec_(spec), config_(config), gh_(GaussHermite::make(config.quadrature_points)) {
  spec_.validate();
  config_.validate();
  if (data_.size() == 0) throw DataError("svi engine: dataset has no observations");
  for (const int r : data_.response) {
    if (r > spec_.num_levels) {
      throw StructuralError("dataset carries response " + std::to_string(r) +
                            " above the model's " + std::to_string(spec_.num_levels) +
                            " levels");
    }
  }
  global_t_min_ = data_.time_min();
  global_t_max_ = data_.time_max();

  const int num_items = data_.items();
  const auto by_unit = data_.rows_by_unit();
  inducing_times_.resize(data_.units());
  for (int u = 0; u < data_.units(); ++u) {
    double lo = global_t_min_, hi = global_t_max_;
    if (!by_unit[u].empty()) {
      lo = hi = data_.time[by_unit[u].front()];
      for (const int row : by_unit[u]) {
        lo = std::min(lo, data_.time[row]);
        hi = std::max(hi, data_.time[row]);
      }
    }
    int n_z = std::max(1, config_.num_inducing / std::max(1, num_items));
    if (hi <= lo) n_z = 1;
    if (n_z == 1) {
      inducing_times_[u] = Vec::Constant(1, 0.5 * (lo + hi));
    } else {
      inducing_times_[u] = Vec::LinSpaced(n_z, lo, hi);
    }
  }
}

std::vector<InducingPoint> SviEngine::inducing_points(int unit) const {
  const Vec& times = inducing_times_[unit];
  std::vector<InducingPoint> points;
  points.reserve(data_.items() * times.size());
  for (int a = 0; a < data_.items(); ++a) {
    for (Eigen::Index q = 0; q < times.size(); ++q) {
      points.push_back(InducingPoint{a, times[q]});
    }
  }
  return points;
}

SviEngine::State SviEngine::initial_state() const {
  State state;
  const int num_items = data_.items();
  const int num_units = data_.units();

  if (spec_.include_pop()) {
    Rng rng(derive_seed(config_.seed, kStreamWPop));
    state.params.w_pop.resize(spec_.num_factors, num_items);
    for (int k = 0; k < spec_.num_factors; ++k) {
      for (int j = 0; j < num_items; ++j) state.params.w_pop(k, j) = 0.1 * rng.normal();
    }
  }
  state.params.log_v = Vec::Zero(num_items);
  if (spec_.include_idio()) {
    Rng rng(derive_seed(config_.seed, kStreamWInd));
    state.params.w_ind.resize(num_units, num_items);
    for (int u = 0; u < num_units; ++u) {
      for (int j = 0; j < num_items; ++j) state.params.w_ind(u, j) = 0.1 * rng.normal();
    }
  }
  state.params.log_ell.resize(num_units);
  for (int u = 0; u < num_units; ++u) {
    const Vec& times = inducing_times_[u];
    const double range = times.size() > 1 ? times[times.size() - 1] - times[0]
                                          : global_t_max_ - global_t_min_;
    state.params.log_ell[u] = std::log(std::max(range, 1.0) / 4.0);
  }
  const int num_cuts = spec_.num_levels - 1;
  state.params.raw_cuts =
      num_cuts == 1 ? Vec::Zero(1) : Vec(Vec::LinSpaced(num_cuts, -2.0, 2.0));

  state.var.resize(num_units);
  for (int u = 0; u < num_units; ++u) {
    const int m = num_items * static_cast<int>(inducing_times_[u].size());
    state.var[u].mean = Vec::Zero(m);
    state.var[u].l_raw = Mat::Zero(m, m);
    state.var[u].l_raw.diagonal().setConstant(std::log(0.1));
  }
  return state;
}

// Shared per-unit quantities plus per-unit gradient accumulators. The
// observation loop runs over contiguous batch chunks, one accumulator set per
// chunk, merged in chunk order: bit-deterministic for a fixed thread count
// and identical to the serial loop when a single chunk is used.
struct SviEngine::UnitWorkspace {
  bool active = false;
  Mat task;       // J x J
  Mat time_cov;   // n_z x n_z
  Mat time_dlog;  // d time_cov / d log(ell)
  Mat r;          // chol(Kuu + jitter)
  Mat l_tilde;
  double ell = 1.0;
  int n_z = 0;
};

namespace {

struct UnitAccum {
  Mat task_bar;
  Mat r_bar;
  Vec mu_bar;
  Mat l_bar;
  double logell_bar = 0.0;
};

struct ChunkAccum {
  std::vector<UnitAccum> units;
  Vec cuts_bar;
  double value = 0.0;
};

struct ScratchPad {
  Vec e, g, k, a, b, abar, kbar, lb;
};

}  // namespace

void SviEngine::build_unit_workspace(const State& state, int unit, UnitWorkspace& ws) const {
  ws.task = state.params.task_kernel_for_unit(spec_, unit);
  ws.ell = std::exp(state.params.log_ell[unit]);
  const Vec& times = inducing_times_[unit];
  ws.n_z = static_cast<int>(times.size());
  ws.time_cov = rbf_time_kernel(times, ws.ell);
  ws.time_dlog.resize(ws.n_z, ws.n_z);
  const double inv_sq = 1.0 / (ws.ell * ws.ell);
  for (int q = 0; q < ws.n_z; ++q) {
    for (int r = 0; r < ws.n_z; ++r) {
      const double d = times[q] - times[r];
      ws.time_dlog(q, r) = ws.time_cov(q, r) * 2.0 * d * d * inv_sq;
    }
  }
  const Mat kuu = assemble_kuu(ws.task, ws.time_cov, data_.items());
  ws.r = cholesky_jittered(kuu, "svi inducing covariance");
  ws.l_tilde = state.var[unit].l_tilde();
}

template <bool WithGrad>
double SviEngine::accumulate(const State& state, const std::vector<int>& batch,
                             Gradients* grads) const {
  (void)grads;
  const int num_units = data_.units();
  const int num_items = data_.items();
  const int num_cuts = spec_.num_levels - 1;
  const OrdinalThresholds thresholds = state.params.thresholds();
  const double scale =
      batch.empty() ? 0.0 : static_cast<double>(data_.size()) / static_cast<double>(batch.size());

  std::vector<char> active(num_units, 0);
  for (const int row : batch) active[data_.unit[row]] = 1;

  std::vector<UnitWorkspace> ws(num_units);
#pragma omp parallel for schedule(static) num_threads(config_.threads)
  for (int u = 0; u < num_units; ++u) {
    if (!active[u]) continue;
    ws[u].active = true;
    build_unit_workspace(state, u, ws[u]);
  }

  const auto chunks = chunk_ranges(static_cast<int>(batch.size()), config_.threads);
  std::vector<ChunkAccum> accums(chunks.size());

#pragma omp parallel for schedule(static, 1) num_threads(config_.threads)
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    ChunkAccum& acc = accums[c];
    acc.cuts_bar = Vec::Zero(num_cuts);
    if constexpr (WithGrad) {
      acc.units.resize(num_units);
      for (int u = 0; u < num_units; ++u) {
        if (!active[u]) continue;
        const int m = static_cast<int>(state.var[u].mean.size());
        acc.units[u].task_bar = Mat::Zero(num_items, num_items);
        acc.units[u].r_bar = Mat::Zero(m, m);
        acc.units[u].mu_bar = Vec::Zero(m);
        acc.units[u].l_bar = Mat::Zero(m, m);
      }
    }
    ScratchPad pad;
    for (int idx = chunks[c].first; idx < chunks[c].second; ++idx) {
      const int row = batch[idx];
      const int u = data_.unit[row];
      const int j = data_.item[row];
      const double t = data_.time[row];
      const int level = data_.response[row];
      const UnitWorkspace& w = ws[u];
      const int n_z = w.n_z;
      const int m = num_items * n_z;
      const Vec& times = inducing_times_[u];

      pad.e.resize(n_z);
      pad.g.resize(n_z);
      const double inv_sq = 1.0 / (w.ell * w.ell);
      for (int q = 0; q < n_z; ++q) {
        const double d = times[q] - t;
        pad.e[q] = std::exp(-d * d * inv_sq);
        pad.g[q] = pad.e[q] * 2.0 * d * d * inv_sq;
      }

      pad.k.resize(m);
      for (int a = 0; a < num_items; ++a) {
        pad.k.segment(a * n_z, n_z) = w.task(a, j) * pad.e;
      }
      pad.a = pad.k;
      w.r.triangularView<Eigen::Lower>().solveInPlace(pad.a);
      pad.b.resize(m);
      pad.b.noalias() = w.l_tilde.transpose().triangularView<Eigen::Upper>() * pad.a;

      const double mean = pad.a.dot(state.var[u].mean);
      double variance = w.task(j, j) - pad.a.squaredNorm() + pad.b.squaredNorm();
      bool clamped = false;
      if (variance < 1e-12) {
        variance = 1e-12;
        clamped = true;
      }

      if constexpr (!WithGrad) {
        acc.value +=
            gh_expect_ordinal_log_prob(gh_, mean, variance, level, thresholds, config_.link);
        continue;
      } else {
        const GhExpectGrad gq = gh_expect_ordinal_log_prob_grad(gh_, mean, variance, level,
                                                                thresholds, config_.link);
        acc.value += gq.value;
        if (gq.lower_index >= 0) acc.cuts_bar[gq.lower_index] += gq.d_cut_lower;
        if (gq.upper_index >= 0) acc.cuts_bar[gq.upper_index] += gq.d_cut_upper;
        const double dm = gq.d_mean;
        const double dv = clamped ? 0.0 : gq.d_var;

        UnitAccum& au = acc.units[u];
        au.mu_bar.noalias() += dm * pad.a;
        au.l_bar.noalias() += (2.0 * dv) * (pad.a * pad.b.transpose());

        pad.lb.resize(m);
        pad.lb.noalias() = w.l_tilde.triangularView<Eigen::Lower>() * pad.b;
        pad.abar = dm * state.var[u].mean;
        pad.abar.noalias() += (-2.0 * dv) * pad.a;
        pad.abar.noalias() += (2.0 * dv) * pad.lb;

        pad.kbar = pad.abar;
        w.r.transpose().triangularView<Eigen::Upper>().solveInPlace(pad.kbar);
        au.r_bar.noalias() -= pad.kbar * pad.a.transpose();

        Eigen::Map<const Mat> kb(pad.kbar.data(), n_z, num_items);
        au.task_bar.col(j).noalias() += kb.transpose() * pad.e;
        au.task_bar(j, j) += dv;
        au.logell_bar += (kb.transpose() * pad.g).dot(w.task.col(j));
      }
    }
  }

  // merge in chunk order
  double data_value = 0.0;
  Vec cuts_bar = Vec::Zero(num_cuts);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    data_value += accums[c].value;
    cuts_bar += accums[c].cuts_bar;
  }
  if constexpr (WithGrad) {
    for (int u = 0; u < num_units; ++u) {
      if (!active[u]) continue;
      for (std::size_t c = 1; c < chunks.size(); ++c) {
        accums[0].units[u].task_bar += accums[c].units[u].task_bar;
        accums[0].units[u].r_bar += accums[c].units[u].r_bar;
        accums[0].units[u].mu_bar += accums[c].units[u].mu_bar;
        accums[0].units[u].l_bar += accums[c].units[u].l_bar;
        accums[0].units[u].logell_bar += accums[c].units[u].logell_bar;
      }
    }
  }

  double kl_total = 0.0;
  for (int u = 0; u < num_units; ++u) kl_total += whitened_kl(state.var[u]);
  const double elbo_value = scale * data_value - kl_total;

  if constexpr (!WithGrad) return elbo_value;

  // finalize gradients
  Gradients& g = *grads;
  const bool train_w_pop = spec_.include_pop() && !spec_.w_pop_frozen();
  if (train_w_pop) g.w_pop = Mat::Zero(spec_.num_factors, num_items);
  g.log_v = Vec::Zero(num_items);
  if (spec_.include_idio()) g.w_ind = Mat::Zero(num_units, num_items);
  if (!config_.freeze_lengthscale) g.log_ell = Vec::Zero(num_units);
  g.raw_cuts = Vec::Zero(num_cuts);
  g.var_mean.resize(num_units);
  g.var_l_raw.resize(num_units);

  const Vec v = state.params.log_v.array().exp();
  for (int u = 0; u < num_units; ++u) {
    const int m = static_cast<int>(state.var[u].mean.size());
    const Mat l_tilde = ws[u].active ? ws[u].l_tilde : state.var[u].l_tilde();

    Vec mean_grad = -state.var[u].mean;  // from -KL
    Mat l_raw_grad = Mat::Zero(m, m);
    if (ws[u].active) {
      UnitAccum& au = accums[0].units[u];
      const Mat r_bar = au.r_bar.triangularView<Eigen::Lower>();
      const Mat kuu_bar = cholesky_backward(ws[u].r, r_bar);
      const int n_z = ws[u].n_z;
      for (int a = 0; a < num_items; ++a) {
        for (int b = 0; b < num_items; ++b) {
          const auto block = kuu_bar.block(a * n_z, b * n_z, n_z, n_z);
          au.task_bar(a, b) += block.cwiseProduct(ws[u].time_cov).sum();
          au.logell_bar += ws[u].task(a, b) * block.cwiseProduct(ws[u].time_dlog).sum();
        }
      }
      const Mat task_sym = au.task_bar + au.task_bar.transpose();
      if (train_w_pop) g.w_pop.noalias() += scale * (state.params.w_pop * task_sym);
      if (spec_.include_idio()) {
        g.w_ind.row(u).noalias() =
            scale * (task_sym * state.params.w_ind.row(u).transpose()).transpose();
      }
      g.log_v.noalias() += scale * au.task_bar.diagonal().cwiseProduct(v);
      if (!config_.freeze_lengthscale) g.log_ell[u] = scale * au.logell_bar;
      mean_grad.noalias() += scale * au.mu_bar;
      l_raw_grad = scale * au.l_bar;
    }
    // -KL contribution to the whitened factor, then chain to the raw storage
    for (int c = 0; c < m; ++c) {
      const double diag = l_tilde(c, c);
      l_raw_grad(c, c) = l_raw_grad(c, c) * diag - (diag * diag - 1.0);
      for (int r = c + 1; r < m; ++r) l_raw_grad(r, c) -= l_tilde(r, c);
      for (int r = 0; r < c; ++r) l_raw_grad(r, c) = 0.0;
    }
    g.var_mean[u] = std::move(mean_grad);
    g.var_l_raw[u] = std::move(l_raw_grad);
  }

  // chain cut gradients through the softplus parameterization
  cuts_bar *= scale;
  double suffix = 0.0;
  for (int k = num_cuts - 1; k >= 0; --k) {
    suffix += cuts_bar[k];
    g.raw_cuts[k] = k == 0 ? suffix : sigmoid(state.params.raw_cuts[k]) * suffix;
  }

  return elbo_value;
}

double SviEngine::elbo_full(const State& state) const {
  std::vector<int> all(data_.size());
  for (int i = 0; i < data_.size(); ++i) all[i] = i;
  return accumulate<false>(state, all, nullptr);
}

double SviEngine::elbo_batch(const State& state, const std::vector<int>& batch) const {
  return accumulate<false>(state, batch, nullptr);
}

Gradients SviEngine::gradients(const State& state, const std::vector<int>& batch,
                               double* elbo_out) const {
  Gradients grads;
  const double value = accumulate<true>(state, batch, &grads);
  if (elbo_out != nullptr) *elbo_out = value;
  return grads;
}

int SviEngine::free_parameter_count() const {
  int count = 0;
  if (spec_.include_pop() && !spec_.w_pop_frozen()) count += spec_.num_factors * data_.items();
  count += data_.items();           // log_v
  count += spec_.num_levels - 1;    // raw cuts
  for (int u = 0; u < data_.units(); ++u) {
    if (spec_.include_idio()) count += data_.items();
    if (!config_.freeze_lengthscale) count += 1;
    const int m = data_.items() * static_cast<int>(inducing_times_[u].size());
    count += m + m * (m + 1) / 2;
  }
  return count;
}

Vec SviEngine::flatten(const State& state) const {
  Vec flat(free_parameter_count());
  Eigen::Index pos = 0;
  if (spec_.include_pop() && !spec_.w_pop_frozen()) {
    for (Eigen::Index c = 0; c < state.params.w_pop.cols(); ++c) {
      for (Eigen::Index r = 0; r < state.params.w_pop.rows(); ++r) {
        flat[pos++] = state.params.w_pop(r, c);
      }
    }
  }
  flat.segment(pos, data_.items()) = state.params.log_v;
  pos += data_.items();
  flat.segment(pos, spec_.num_levels - 1) = state.params.raw_cuts;
  pos += spec_.num_levels - 1;
  for (int u = 0; u < data_.units(); ++u) {
    if (spec_.include_idio()) {
      flat.segment(pos, data_.items()) = state.params.w_ind.row(u).transpose();
      pos += data_.items();
    }
    if (!config_.freeze_lengthscale) flat[pos++] = state.params.log_ell[u];
    flat.segment(pos, state.var[u].mean.size()) = state.var[u].mean;
    pos += state.var[u].mean.size();
    pack_lower(state.var[u].l_raw, flat, pos);
  }
  return flat;
}

Vec SviEngine::flatten_gradients(const Gradients& grads) const {
  Vec flat(free_parameter_count());
  Eigen::Index pos = 0;
  if (spec_.include_pop() && !spec_.w_pop_frozen()) {
    for (Eigen::Index c = 0; c < grads.w_pop.cols(); ++c) {
      for (Eigen::Index r = 0; r < grads.w_pop.rows(); ++r) flat[pos++] = grads.w_pop(r, c);
    }
  }
  flat.segment(pos, data_.items()) = grads.log_v;
  pos += data_.items();
  flat.segment(pos, spec_.num_levels - 1) = grads.raw_cuts;
  pos += spec_.num_levels - 1;
  for (int u = 0; u < data_.units(); ++u) {
    if (spec_.include_idio()) {
      flat.segment(pos, data_.items()) = grads.w_ind.row(u).transpose();
      pos += data_.items();
    }
    if (!config_.freeze_lengthscale) flat[pos++] = grads.log_ell[u];
    flat.segment(pos, grads.var_mean[u].size()) = grads.var_mean[u];
    pos += grads.var_mean[u].size();
    pack_lower(grads.var_l_raw[u], flat, pos);
  }
  return flat;
}

void SviEngine::unflatten(const Vec& flat, State& state) const {
  Eigen::Index pos = 0;
  if (spec_.include_pop() && !spec_.w_pop_frozen()) {
    for (Eigen::Index c = 0; c < state.params.w_pop.cols(); ++c) {
      for (Eigen::Index r = 0; r < state.params.w_pop.rows(); ++r) {
        state.params.w_pop(r, c) = flat[pos++];
      }
    }
  }
  state.params.log_v = flat.segment(pos, data_.items());
  pos += data_.items();
  state.params.raw_cuts = flat.segment(pos, spec_.num_levels - 1);
  pos += spec_.num_levels - 1;
  for (int u = 0; u < data_.units(); ++u) {
    if (spec_.include_idio()) {
      state.params.w_ind.row(u) = flat.segment(pos, data_.items()).transpose();
      pos += data_.items();
    }
    if (!config_.freeze_lengthscale) state.params.log_ell[u] = flat[pos++];
    state.var[u].mean = flat.segment(pos, state.var[u].mean.size());
    pos += state.var[u].mean.size();
    unpack_lower(flat, state.var[u].l_raw, pos);
  }
}

FitOutput SviEngine::fit(const State& start) const {
  // shape checks against this engine's dataset and spec
  if (static_cast<int>(start.var.size()) != data_.units()) {
    throw StructuralError("fit: variational state count != unit count");
  }
  if (spec_.include_pop() &&
      (start.params.w_pop.rows() != spec_.num_factors || start.params.w_pop.cols() != data_.items())) {
    throw StructuralError("fit: population loading matrix has the wrong shape");
  }
  if (start.params.log_v.size() != data_.items()) {
    throw StructuralError("fit: noise vector has the wrong length");
  }
  if (spec_.include_idio() && (start.params.w_ind.rows() != data_.units() ||
                               start.params.w_ind.cols() != data_.items())) {
    throw StructuralError("fit: idiographic loading table has the wrong shape");
  }
  if (start.params.raw_cuts.size() != spec_.num_levels - 1) {
    throw StructuralError("fit: threshold vector has the wrong length");
  }
  if (start.params.log_ell.size() != data_.units()) {
    throw StructuralError("fit: lengthscale vector has the wrong length");
  }

  State state = start;
  FitOutput out;
  if (config_.epochs == 0) {
    out.params = state.params;
    out.var = state.var;
    out.trace = Vec();
    out.final_elbo = elbo_full(state);
    return out;
  }

  const int n = data_.size();
  const int steps_per_epoch = (n + config_.batch_size - 1) / config_.batch_size;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(steps_per_epoch) * config_.epochs);

  Vec flat = flatten(state);
  Adam adam(flat.size(), config_.learning_rate);
  Rng shuffle_rng(derive_seed(config_.seed, kStreamShuffle));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  int step = 0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int offset = 0; offset < n; offset += config_.batch_size) {
      const int len = std::min(config_.batch_size, n - offset);
      const std::vector<int> batch(order.begin() + offset, order.begin() + offset + len);
      double batch_elbo = 0.0;
      const Gradients grads = gradients(state, batch, &batch_elbo);
      if (!std::isfinite(batch_elbo)) {
        throw NumericalError("fit: ELBO became non-finite at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step));
      }
      const Vec gflat = flatten_gradients(grads);
      if (!gflat.allFinite()) {
        throw NumericalError("fit: gradient became non-finite at epoch " +
                             std::to_string(epoch) + ", step " + std::to_string(step));
      }
      flat += adam.step(gflat);
      unflatten(flat, state);
      trace.push_back(batch_elbo);
      ++step;
    }
  }

  out.params = state.params;
  out.var = state.var;
  out.trace = Eigen::Map<const Vec>(trace.data(), static_cast<Eigen::Index>(trace.size()));
  out.final_elbo = elbo_full(state);
  return out;
}

std::vector<VariationalState> SviEngine::materialize(const State& state) const {
  std::vector<VariationalState> states(data_.units());
  const OrdinalThresholds thresholds = state.params.thresholds();
  for (int u = 0; u < data_.units(); ++u) {
    UnitWorkspace ws;
    build_unit_workspace(state, u, ws);
    VariationalState& vs = states[u];
    vs.inducing = inducing_points(u);
    vs.mean = ws.r.triangularView<Eigen::Lower>() * state.var[u].mean;
    vs.cov_factor = ws.r.triangularView<Eigen::Lower>() * ws.l_tilde;
    vs.thresholds = thresholds;
  }
  return states;
}

Mat predict_responses(const FittedModel& model, const std::vector<QueryPoint>& queries,
                      std::vector<MarginalPrediction>* marginals) {
  const int num_units = static_cast<int>(model.states.size());
  const int levels = model.spec.num_levels;
  const GaussHermite rule = GaussHermite::make(model.quadrature_points);
  Mat probs(static_cast<Eigen::Index>(queries.size()), levels);
  if (marginals != nullptr) marginals->resize(queries.size());

  std::vector<std::vector<int>> by_unit(num_units);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const int u = queries[i].unit;
    if (u < 0 || u >= num_units) {
      throw DataError("predict: unknown unit index " + std::to_string(u) +
                      " (no cold-start units)");
    }
    by_unit[u].push_back(static_cast<int>(i));
  }
  for (int u = 0; u < num_units; ++u) {
    if (by_unit[u].empty()) continue;
    const Mat task = model.params.task_kernel_for_unit(model.spec, u);
    const double ell = std::exp(model.params.log_ell[u]);
    std::vector<InducingPoint> pts;
    pts.reserve(by_unit[u].size());
    for (const int qi : by_unit[u]) {
      const auto& q = queries[qi];
      if (q.item < 0 || q.item >= static_cast<int>(task.rows())) {
        throw DataError("predict: unknown item index " + std::to_string(q.item));
      }
      pts.push_back(InducingPoint{q.item, q.time});
    }
    const auto preds = marginal_q_f(model.states[u], task, ell, pts);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const int qi = by_unit[u][i];
      probs.row(qi) = gh_predict_probs(rule, preds[i].mean, preds[i].variance,
                                       model.states[u].thresholds, model.link)
                          .transpose();
      if (marginals != nullptr) (*marginals)[qi] = preds[i];
    }
  }
  return probs;
}

}  // namespace ipgp
