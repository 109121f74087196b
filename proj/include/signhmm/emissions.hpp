#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "signhmm/types.hpp"

namespace signhmm {

inline constexpr double kVarianceFloor = 1e-3;
inline constexpr double kWeightFloor = 1e-6;
inline constexpr int kDefaultMixtures = 3;

// Diagonal-covariance Gaussian.
struct GaussianEmission {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;

  Eigen::Index dim() const { return mean.size(); }
};

struct GmmEmission {
  Eigen::VectorXd weights;
  std::vector<GaussianEmission> components;

  Eigen::Index dim() const { return components.front().dim(); }
  int n_components() const { return static_cast<int>(components.size()); }
};

enum class EmissionKind { Gaussian, Gmm };

double gaussian_logpdf(const GaussianEmission& g, std::span<const double> x);
double gmm_logpdf(const GmmEmission& m, std::span<const double> x);

// Column means and biased column variances, floored at kVarianceFloor.
GaussianEmission fit_gaussian_mle(const Frames& points);

// Same, with a non-negative weight per row. Throws if the weights sum to zero.
GaussianEmission fit_gaussian_weighted(const Frames& points, std::span<const double> weights);

struct GmmFitOptions {
  int em_iters = 100;
  double rel_tol = 1e-6;
};

struct GmmFit {
  GmmEmission model;
  // Total data log-likelihood before each M-step, plus the final value.
  std::vector<double> log_likelihood_trace;
};

// k-means++ seeding, Lloyd refinement, then EM. Deterministic for a seed.
GmmFit fit_gmm_traced(const Frames& points, int n_components, int em_iters, std::uint64_t seed);
GmmEmission fit_gmm(const Frames& points, int n_components, int em_iters, std::uint64_t seed);

// EM iterations starting from `start`. Used for warm-started refits where
// the data likelihood must not drop below that of `start`.
GmmFit refine_gmm(const Frames& points, GmmEmission start, const GmmFitOptions& opts);

// Maximizes sum_k counts[k] * log(w_k) subject to sum w = 1 and w_k >= floor.
Eigen::VectorXd floored_weights(const Eigen::VectorXd& counts, double floor = kWeightFloor);

// Per-state emission: a Gaussian or a Gaussian mixture.
class Emission {
 public:
  Emission() = default;
  Emission(GaussianEmission g) : rep_(std::move(g)) {}
  Emission(GmmEmission m) : rep_(std::move(m)) {}

  EmissionKind kind() const {
    return std::holds_alternative<GaussianEmission>(rep_) ? EmissionKind::Gaussian
                                                          : EmissionKind::Gmm;
  }
  Eigen::Index dim() const;
  double logpdf(std::span<const double> x) const;
  Eigen::VectorXd draw(std::mt19937_64& rng) const;

  const GaussianEmission& gaussian() const { return std::get<GaussianEmission>(rep_); }
  const GmmEmission& gmm() const { return std::get<GmmEmission>(rep_); }

 private:
  std::variant<GaussianEmission, GmmEmission> rep_;
};

nlohmann::json to_json(const GaussianEmission& g);
nlohmann::json to_json(const GmmEmission& m);
nlohmann::json to_json(const Emission& e);
Emission emission_from_json(const nlohmann::json& j);

}  // namespace signhmm
