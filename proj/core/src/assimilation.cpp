#include "floodda/assimilation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "floodda/csv.hpp"
#include "floodda/error.hpp"
#include "floodda/random.hpp"

namespace floodda::assim {

namespace {

// Floor on the transformed observation-error variance, reached only when every
// perturbed observation maps to the same Gaussian value.
constexpr double kMinTransformedVariance = 1e-12;

}  // namespace

PriorSpec PriorSpec::around(const ControlVector& mean, const std::array<double, kControlSize>& std) {
  PriorSpec p;
  for (std::size_t j = 0; j < kControlSize; ++j)
    p.elements[j] = {mean[j], std[j], ControlVector::lower_bound(j), ControlVector::upper_bound(j)};
  return p;
}

ControlVector PriorSpec::mean() const {
  ControlVector c;
  for (std::size_t j = 0; j < kControlSize; ++j) c[j] = elements[j].mean;
  return c;
}

void PriorSpec::validate() const {
  for (std::size_t j = 0; j < kControlSize; ++j) {
    const auto& e = elements[j];
    const auto name = ControlVector::element_name(j);
    if (!(e.std >= 0.0)) throw ConfigError("prior " + name + ": std must be >= 0");
    if (!(e.lower <= e.upper)) throw ConfigError("prior " + name + ": lower bound above upper bound");
    if (e.lower < ControlVector::lower_bound(j) || e.upper > ControlVector::upper_bound(j))
      throw ConfigError("prior " + name + ": bounds outside the admissible range");
    if (e.mean < e.lower || e.mean > e.upper)
      throw ConfigError("prior " + name + ": mean outside its bounds");
  }
}

PriorSpec default_prior() {
  ControlVector mean;
  mean.friction = FrictionField::uniform(30.0);
  mean.friction.ks[0] = 20.0;
  mean.mu = 1.0;
  std::array<double, kControlSize> std{};
  for (std::size_t j = 0; j < kFrictionCount; ++j) std[j] = 5.0;
  std[kFrictionCount] = 0.25;
  for (std::size_t k = 0; k < kSubdomainCount; ++k) std[kFrictionCount + 1 + k] = 0.5;
  return PriorSpec::around(mean, std);
}

std::vector<ControlVector> draw_ensemble(const PriorSpec& prior, std::size_t n_members,
                                         std::uint64_t seed, std::uint64_t stream) {
  if (n_members < 2) throw std::invalid_argument("draw_ensemble: need at least 2 members");
  prior.validate();
  std::vector<ControlVector> out(n_members);
  for (std::size_t i = 0; i < n_members; ++i) {
    const random::Stream s({seed, random::Purpose::PriorDraw, stream, i});
    for (std::size_t j = 0; j < kControlSize; ++j) {
      const auto& e = prior.elements[j];
      out[i][j] = random::truncated_normal(e.mean, e.std, e.lower, e.upper, s.uniform(j));
    }
  }
  return out;
}

obs::ObsVector observe(const hydro::HydroModel& model, const hydro::Trajectory& trajectory,
                       const obs::ObsVector& templ) {
  obs::ObsVector out = templ;
  const double half = 0.5 * model.params().output_interval;
  const auto& stations = model.geometry().stations;
  for (auto& e : out.entries) {
    if (e.time < trajectory.start() - half || e.time > trajectory.end() + half)
      throw std::invalid_argument(fmt::format("observe: t={} outside trajectory [{}, {}]", e.time,
                                              trajectory.start(), trajectory.end()));
    if (e.kind == obs::Kind::WL) {
      const auto& s = trajectory.nearest(e.time);
      if (std::abs(s.time - e.time) > half)
        throw std::invalid_argument(fmt::format("observe: no sample within {} s of t={}", half, e.time));
      e.value = model.water_level_at_cell(s, stations.at(static_cast<std::size_t>(e.id)).cell);
    } else {
      e.value = model.wsr(trajectory.at(e.time), static_cast<std::size_t>(e.id));
    }
  }
  return out;
}

Eigen::MatrixXd perturb_observations(const obs::ObsVector& y, std::size_t n_members,
                                     std::uint64_t seed, std::uint64_t stream) {
  const auto m = static_cast<Eigen::Index>(y.size());
  Eigen::MatrixXd out(m, static_cast<Eigen::Index>(n_members));
  for (std::size_t i = 0; i < n_members; ++i) {
    const random::Stream s({seed, random::Purpose::ObsPerturbation, stream, i});
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto& e = y.entries[static_cast<std::size_t>(j)];
      double v = e.value + e.sigma * s.normal(static_cast<std::uint64_t>(j));
      if (e.kind == obs::Kind::WSR) v = std::clamp(v, 0.0, 1.0);
      out(j, static_cast<Eigen::Index>(i)) = v;
    }
  }
  return out;
}

Anamorphosis Anamorphosis::build(const Eigen::MatrixXd& values, const std::vector<bool>& transform) {
  if (static_cast<std::size_t>(values.rows()) != transform.size())
    throw std::invalid_argument("anamorphosis: one flag per component required");
  const auto n = static_cast<std::size_t>(values.cols());
  if (n < 2) throw std::invalid_argument("anamorphosis: need at least 2 members");
  Anamorphosis a;
  a.components_.resize(transform.size());
  std::vector<double> v(n);
  for (std::size_t j = 0; j < transform.size(); ++j) {
    auto& c = a.components_[j];
    if (!transform[j]) continue;
    for (std::size_t i = 0; i < n; ++i) v[i] = values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    std::sort(v.begin(), v.end());
    // Ties share the mean of their 1-based ranks.
    for (std::size_t i = 0; i < n;) {
      std::size_t k = i;
      while (k < n && v[k] == v[i]) ++k;
      const double rank = 0.5 * static_cast<double>(i + 1 + k);
      c.knots.push_back(v[i]);
      c.images.push_back(random::normal_quantile((rank - 0.5) / static_cast<double>(n)));
      i = k;
    }
    if (c.knots.size() < 2) {
      c.knots.clear();
      c.images.clear();
      c.degenerate = true;
      continue;
    }
    c.identity = false;
  }
  return a;
}

namespace {

// Piecewise-linear interpolation through (xs, ys) with the end-segment slopes
// continued outside.
double pl_map(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  const std::size_t n = xs.size();
  std::size_t i;
  if (x <= xs.front()) i = 0;
  else if (x >= xs.back()) i = n - 2;
  else i = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
  if (x == xs[i]) return ys[i];
  if (x == xs[i + 1]) return ys[i + 1];
  const double slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
  return ys[i] + slope * (x - xs[i]);
}

}  // namespace

double Anamorphosis::forward(std::size_t j, double v) const {
  const auto& c = components_.at(j);
  return c.identity ? v : pl_map(c.knots, c.images, v);
}

double Anamorphosis::inverse(std::size_t j, double z) const {
  const auto& c = components_.at(j);
  return c.identity ? z : pl_map(c.images, c.knots, z);
}

Eigen::MatrixXd Anamorphosis::forward(const Eigen::MatrixXd& values) const {
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.rows(); ++j)
    for (Eigen::Index i = 0; i < values.cols(); ++i)
      out(j, i) = forward(static_cast<std::size_t>(j), values(j, i));
  return out;
}

KalmanWorkspace kalman_gain(const Eigen::MatrixXd& xb, const Eigen::MatrixXd& yb,
                            const Eigen::VectorXd& r_diag) {
  const Eigen::Index n = xb.cols();
  if (n < 2 || yb.cols() != n) throw std::invalid_argument("kalman_gain: member count mismatch");
  if (r_diag.size() != yb.rows()) throw std::invalid_argument("kalman_gain: R size mismatch");
  const Eigen::MatrixXd xa = xb.colwise() - xb.rowwise().mean();
  const Eigen::MatrixXd ya = yb.colwise() - yb.rowwise().mean();
  const double scale = 1.0 / static_cast<double>(n - 1);
  KalmanWorkspace w;
  w.cross_cov = scale * xa * ya.transpose();
  w.obs_cov = scale * ya * ya.transpose();
  Eigen::MatrixXd s = w.obs_cov;
  s.diagonal() += r_diag;
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    s.diagonal().array() += 1e-10 * s.trace();
    llt.compute(s);
    w.jittered = true;
    if (llt.info() != Eigen::Success)
      throw ModelError("innovation covariance is not positive definite");
    spdlog::warn("innovation covariance needed diagonal jitter");
  }
  w.gain = llt.solve(w.cross_cov.transpose()).transpose();
  return w;
}

Eigen::MatrixXd enkf_update(const Eigen::MatrixXd& xb, const Eigen::MatrixXd& yb,
                            const Eigen::MatrixXd& yo, const Eigen::VectorXd& r_diag,
                            KalmanWorkspace* workspace) {
  if (yo.rows() != yb.rows() || yo.cols() != yb.cols())
    throw std::invalid_argument("enkf_update: observation matrix shape mismatch");
  KalmanWorkspace w = kalman_gain(xb, yb, r_diag);
  Eigen::MatrixXd xa = xb + w.gain * (yo - yb);
  if (workspace) *workspace = std::move(w);
  return xa;
}

Eigen::MatrixXd to_matrix(const std::vector<ControlVector>& controls) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(kControlSize), static_cast<Eigen::Index>(controls.size()));
  for (std::size_t i = 0; i < controls.size(); ++i)
    for (std::size_t j = 0; j < kControlSize; ++j)
      x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = controls[i][j];
  return x;
}

std::vector<ControlVector> from_matrix(const Eigen::MatrixXd& x) {
  if (x.rows() != static_cast<Eigen::Index>(kControlSize))
    throw std::invalid_argument("from_matrix: expected 13 rows");
  std::vector<ControlVector> out(static_cast<std::size_t>(x.cols()));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < kControlSize; ++j)
      out[i][j] = x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
  return out;
}

Eigen::MatrixXd to_matrix(const std::vector<obs::ObsVector>& equivalents) {
  const std::size_t m = equivalents.empty() ? 0 : equivalents.front().size();
  Eigen::MatrixXd y(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(equivalents.size()));
  for (std::size_t i = 0; i < equivalents.size(); ++i) {
    if (equivalents[i].size() != m) throw std::invalid_argument("equivalents: size mismatch");
    for (std::size_t j = 0; j < m; ++j)
      y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = equivalents[i].entries[j].value;
  }
  return y;
}

std::array<ElementStats, kControlSize> ensemble_stats(const std::vector<ControlVector>& controls) {
  std::array<ElementStats, kControlSize> out{};
  const double n = static_cast<double>(controls.size());
  for (std::size_t j = 0; j < kControlSize; ++j) {
    double mean = 0.0;
    for (const auto& c : controls) mean += c[j];
    mean /= n;
    double ss = 0.0;
    for (const auto& c : controls) ss += (c[j] - mean) * (c[j] - mean);
    out[j].background_mean = out[j].analysis_mean = mean;
    out[j].background_std = out[j].analysis_std = controls.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return out;
}

AnalysisResult analysis_from_perturbed(const std::vector<ControlVector>& background,
                                       const std::vector<obs::ObsVector>& equivalents,
                                       const obs::ObsVector& y, const Eigen::MatrixXd& perturbed,
                                       bool use_anamorphosis) {
  AnalysisResult res;
  const auto bg = ensemble_stats(background);
  res.n_obs = y.size();
  res.n_wsr = y.count(obs::Kind::WSR);
  if (y.empty()) {
    res.controls = background;
    res.stats = bg;
    return res;
  }
  if (equivalents.size() != background.size())
    throw std::invalid_argument("analysis: one equivalent vector per member required");
  const Eigen::MatrixXd xb = to_matrix(background);
  Eigen::MatrixXd yb = to_matrix(equivalents);
  Eigen::MatrixXd yo = perturbed;
  if (yb.rows() != static_cast<Eigen::Index>(y.size()))
    throw std::invalid_argument("analysis: equivalents do not match the observation vector");

  std::vector<bool> transform(y.size(), false);
  for (std::size_t j = 0; j < y.size(); ++j)
    transform[j] = use_anamorphosis && y.entries[j].kind == obs::Kind::WSR;
  const Anamorphosis ana = Anamorphosis::build(yb, transform);
  yb = ana.forward(yb);
  yo = ana.forward(yo);

  Eigen::VectorXd r(static_cast<Eigen::Index>(y.size()));
  const double n = static_cast<double>(yo.cols());
  for (std::size_t j = 0; j < y.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (ana.component(j).identity) {
      r(jj) = y.entries[j].sigma * y.entries[j].sigma;
      if (ana.component(j).degenerate) ++res.degenerate_components;
    } else {
      const double mean = yo.row(jj).mean();
      const double var = (yo.row(jj).array() - mean).square().sum() / (n - 1.0);
      r(jj) = std::max(var, kMinTransformedVariance);
    }
  }
  if (res.degenerate_components > 0)
    spdlog::debug("{} anamorphosis component(s) collapsed to identity", res.degenerate_components);

  KalmanWorkspace w;
  const Eigen::MatrixXd xa = enkf_update(xb, yb, yo, r, &w);
  res.jittered = w.jittered;
  res.controls = from_matrix(xa);
  for (auto& c : res.controls) c = c.clipped();
  const auto an = ensemble_stats(res.controls);
  for (std::size_t j = 0; j < kControlSize; ++j) {
    res.stats[j].background_mean = bg[j].background_mean;
    res.stats[j].background_std = bg[j].background_std;
    res.stats[j].analysis_mean = an[j].analysis_mean;
    res.stats[j].analysis_std = an[j].analysis_std;
  }
  return res;
}

AnalysisResult analysis_update(const std::vector<ControlVector>& background,
                               const std::vector<obs::ObsVector>& equivalents,
                               const obs::ObsVector& y, bool use_anamorphosis,
                               std::uint64_t seed, std::uint64_t stream) {
  y.validate();
  const Eigen::MatrixXd yo = perturb_observations(y, background.size(), seed, stream);
  return analysis_from_perturbed(background, equivalents, y, yo, use_anamorphosis);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Propagation propagate(const hydro::HydroModel& model, const std::vector<hydro::HydroState>& initial,
                      std::vector<ControlVector> controls, const forcing::Hydrograph& forcing,
                      const Window& window, const obs::ObsVector& templ,
                      const PropagationOptions& options) {
  const std::size_t n = controls.size();
  if (initial.size() != n) throw std::invalid_argument("propagate: one initial state per member");

  std::vector<double> passes;
  for (double t : window.overpasses)
    if (t > window.run_start && t <= window.run_end) passes.push_back(t);
  std::array<double, kSubdomainCount> mean_dh{};
  if (!window.member_corrections) {
    for (const auto& c : controls)
      for (std::size_t k = 0; k < kSubdomainCount; ++k) mean_dh[k] += c.delta_h[k];
    for (auto& v : mean_dh) v /= static_cast<double>(n);
  }

  Propagation out;
  out.members.resize(n);
  std::vector<int> attempts(n, 0);
  auto run_member = [&](std::size_t i) {
    for (;;) {
      const ControlVector& c = controls[i];
      hydro::RunOptions ro;
      ro.extra_instants = passes;
      ro.extra_instants.insert(ro.extra_instants.end(), window.extra_instants.begin(),
                               window.extra_instants.end());
      const auto& dh = window.member_corrections ? c.delta_h : mean_dh;
      if (std::any_of(dh.begin(), dh.end(), [](double v) { return v != 0.0; }))
        for (double t : passes) ro.corrections.push_back({t, std::vector<double>(dh.begin(), dh.end())});
      try {
        auto traj = model.run(initial[i], c, forcing, window.run_start, window.run_end, ro);
        out.members[i].equivalents = observe(model, traj, templ);
        out.members[i].trajectory = std::move(traj);
        return;
      } catch (const ModelError& e) {
        if (!options.replacement_prior || attempts[i] >= options.max_replacements) throw;
        ++attempts[i];
        spdlog::warn("member {} diverged ({}); replacing it with a fresh prior draw", i, e.what());
        const random::Stream s({options.seed, random::Purpose::MemberReplacement,
                                options.stream * 1000003ULL + static_cast<std::uint64_t>(attempts[i]), i});
        ControlVector fresh;
        for (std::size_t j = 0; j < kControlSize; ++j) {
          const auto& p = options.replacement_prior->elements[j];
          fresh[j] = random::truncated_normal(p.mean, p.std, p.lower, p.upper, s.uniform(j));
        }
        if (window.member_corrections) controls[i] = fresh;
        else {
          // Keep the shared correction unchanged for the analysis run.
          const auto keep = controls[i].delta_h;
          controls[i] = fresh;
          controls[i].delta_h = keep;
        }
      }
    }
  };
  parallel_for(n, options.threads, run_member);
  for (int a : attempts) out.replaced += a > 0 ? 1 : 0;
  out.controls = std::move(controls);
  return out;
}

Propagation propagate_background(const hydro::HydroModel& model,
                                 const std::vector<hydro::HydroState>& initial,
                                 std::vector<ControlVector> controls,
                                 const forcing::Hydrograph& forcing, Window window,
                                 const obs::ObsVector& templ, const PropagationOptions& options) {
  window.member_corrections = true;
  return propagate(model, initial, std::move(controls), forcing, window, templ, options);
}

Propagation propagate_analysis(const hydro::HydroModel& model,
                               const std::vector<hydro::HydroState>& initial,
                               std::vector<ControlVector> controls,
                               const forcing::Hydrograph& forcing, Window window,
                               const obs::ObsVector& templ, const PropagationOptions& options) {
  window.member_corrections = false;
  return propagate(model, initial, std::move(controls), forcing, window, templ, options);
}

void write_analysis_csv(const std::filesystem::path& path, std::size_t cycle,
                        const std::array<ElementStats, kControlSize>& stats) {
  csv::Writer w(path, {"cycle", "element", "background_mean", "background_std", "analysis_mean",
                       "analysis_std"});
  for (std::size_t j = 0; j < kControlSize; ++j)
    w.row({std::to_string(cycle), ControlVector::element_name(j),
           csv::format_double(stats[j].background_mean), csv::format_double(stats[j].background_std),
           csv::format_double(stats[j].analysis_mean), csv::format_double(stats[j].analysis_std)});
}

}  // namespace floodda::assim
