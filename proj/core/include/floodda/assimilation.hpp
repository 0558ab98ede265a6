#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "floodda/control.hpp"
#include "floodda/forcing.hpp"
#include "floodda/hydro.hpp"
#include "floodda/observations.hpp"

namespace floodda::assim {

/// Truncated-Gaussian prior of one control element.
struct PriorElement {
  double mean = 0.0;
  double std = 1.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct PriorSpec {
  std::array<PriorElement, kControlSize> elements{};

  /// Means at `mean`, bounds at the admissible box.
  static PriorSpec around(const ControlVector& mean, const std::array<double, kControlSize>& std);
  ControlVector mean() const;
  void validate() const;
};

/// Twin-experiment default: friction 30 +- 5 (floodplain 20 +- 5), mu 1 +- 0.25,
/// stage corrections 0 +- 0.5 m.
PriorSpec default_prior();

/// Independent truncated-normal draws; member i, element j uses draw j of the
/// stream (seed, PriorDraw, stream, i).
std::vector<ControlVector> draw_ensemble(const PriorSpec& prior, std::size_t n_members,
                                         std::uint64_t seed, std::uint64_t stream = 0);

/// Model equivalents of the template entries (values replaced, sigma kept).
/// WL uses the nearest sample within half an output interval, WSR the state
/// at the overpass instant.
obs::ObsVector observe(const hydro::HydroModel& model, const hydro::Trajectory& trajectory,
                       const obs::ObsVector& templ);

/// n_obs x n_members matrix of y + eps, eps ~ N(0, sigma^2); WSR rows clipped
/// to [0, 1]. Column i comes from stream (seed, ObsPerturbation, stream, i).
Eigen::MatrixXd perturb_observations(const obs::ObsVector& y, std::size_t n_members,
                                     std::uint64_t seed, std::uint64_t stream = 0);

/// Empirical Gaussian anamorphosis, one piecewise-linear map per observation
/// component.
class Anamorphosis {
 public:
  struct Component {
    bool identity = true;
    bool degenerate = false;     // requested but collapsed to identity
    std::vector<double> knots;   // distinct sorted ensemble values
    std::vector<double> images;  // Gaussian quantiles of the averaged ranks
  };

  Anamorphosis() = default;

  /// `values` is n_obs x n_members; rows with transform[j] false use identity.
  static Anamorphosis build(const Eigen::MatrixXd& values, const std::vector<bool>& transform);

  std::size_t size() const { return components_.size(); }
  const Component& component(std::size_t j) const { return components_.at(j); }
  double forward(std::size_t j, double v) const;
  double inverse(std::size_t j, double z) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& values) const;

 private:
  std::vector<Component> components_;
};

struct KalmanWorkspace {
  Eigen::MatrixXd cross_cov;  // n x n_obs
  Eigen::MatrixXd obs_cov;    // n_obs x n_obs
  Eigen::MatrixXd gain;       // n x n_obs
  bool jittered = false;
};

/// K = P^{xy} (P^{yy} + R)^{-1} from sample covariances (1/(N-1)) via a
/// Cholesky solve. Adds 1e-10 * trace on failure, then throws ModelError.
KalmanWorkspace kalman_gain(const Eigen::MatrixXd& xb, const Eigen::MatrixXd& yb,
                            const Eigen::VectorXd& r_diag);

/// x^a_i = x^b_i + K (y^o_i - y^b_i) for every column.
Eigen::MatrixXd enkf_update(const Eigen::MatrixXd& xb, const Eigen::MatrixXd& yb,
                            const Eigen::MatrixXd& yo, const Eigen::VectorXd& r_diag,
                            KalmanWorkspace* workspace = nullptr);

Eigen::MatrixXd to_matrix(const std::vector<ControlVector>& controls);
std::vector<ControlVector> from_matrix(const Eigen::MatrixXd& x);
Eigen::MatrixXd to_matrix(const std::vector<obs::ObsVector>& equivalents);

struct ElementStats {
  double background_mean = 0.0;
  double background_std = 0.0;
  double analysis_mean = 0.0;
  double analysis_std = 0.0;
};

struct AnalysisResult {
  std::vector<ControlVector> controls;
  std::array<ElementStats, kControlSize> stats{};
  std::size_t n_obs = 0;
  std::size_t n_wsr = 0;
  std::size_t degenerate_components = 0;
  bool jittered = false;
};

/// Analysis from already perturbed observations (n_obs x N). WSR rows are
/// anamorphosed when `use_anamorphosis`; R-tilde is the sample variance of the
/// transformed perturbed observations for those rows and sigma^2 elsewhere.
AnalysisResult analysis_from_perturbed(const std::vector<ControlVector>& background,
                                       const std::vector<obs::ObsVector>& equivalents,
                                       const obs::ObsVector& y, const Eigen::MatrixXd& perturbed,
                                       bool use_anamorphosis);

/// Perturbs `y` and runs analysis_from_perturbed. Results clipped to bounds.
AnalysisResult analysis_update(const std::vector<ControlVector>& background,
                               const std::vector<obs::ObsVector>& equivalents,
                               const obs::ObsVector& y, bool use_anamorphosis,
                               std::uint64_t seed, std::uint64_t stream = 0);

std::array<ElementStats, kControlSize> ensemble_stats(const std::vector<ControlVector>& controls);

/// Runs fn(i) for i in [0, n) on at most `threads` workers. Exceptions are
/// rethrown for the lowest failing index.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Integration request shared by all members of one propagation.
struct Window {
  double run_start = 0.0;    // restart instant (spin-up begins here)
  double run_end = 0.0;
  std::vector<double> overpasses;   // instants where stage corrections apply
  std::vector<double> extra_instants;
  bool member_corrections = true;   // own delta_h (background) or ensemble mean (analysis)
};

struct MemberRun {
  hydro::Trajectory trajectory;
  obs::ObsVector equivalents;
};

struct PropagationOptions {
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;          // cycle index, keys member replacement draws
  const PriorSpec* replacement_prior = nullptr;
  int max_replacements = 3;
};

struct Propagation {
  std::vector<MemberRun> members;
  std::vector<ControlVector> controls;  // differs from input where a member was replaced
  std::size_t replaced = 0;
};

/// Integrates every member from its own initial state. Diverged members are
/// replaced by a fresh prior draw when a replacement prior is given.
Propagation propagate(const hydro::HydroModel& model, const std::vector<hydro::HydroState>& initial,
                      std::vector<ControlVector> controls, const forcing::Hydrograph& forcing,
                      const Window& window, const obs::ObsVector& templ,
                      const PropagationOptions& options);

/// Background: each member applies its own delta_h at the overpasses.
Propagation propagate_background(const hydro::HydroModel& model,
                                 const std::vector<hydro::HydroState>& initial,
                                 std::vector<ControlVector> controls,
                                 const forcing::Hydrograph& forcing, Window window,
                                 const obs::ObsVector& templ, const PropagationOptions& options);

/// Analysis: the ensemble-mean delta_h is applied identically to all members.
Propagation propagate_analysis(const hydro::HydroModel& model,
                               const std::vector<hydro::HydroState>& initial,
                               std::vector<ControlVector> controls,
                               const forcing::Hydrograph& forcing, Window window,
                               const obs::ObsVector& templ, const PropagationOptions& options);

/// cycle,element,background_mean,background_std,analysis_mean,analysis_std
void write_analysis_csv(const std::filesystem::path& path, std::size_t cycle,
                        const std::array<ElementStats, kControlSize>& stats);

}  // namespace floodda::assim
