#include "signhmm/emissions.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "signhmm/log_math.hpp"

namespace signhmm {

namespace {

void check_dim(Eigen::Index expected, std::size_t got) {
  if (static_cast<std::size_t>(expected) != got) {
    throw std::invalid_argument("dimension mismatch: model has " + std::to_string(expected) +
                                ", input has " + std::to_string(got));
  }
}

double squared_distance(std::span<const double> x, const Eigen::VectorXd& c) {
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - c[static_cast<Eigen::Index>(i)];
    d += diff * diff;
  }
  return d;
}

Eigen::VectorXd to_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

nlohmann::json to_array(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

GaussianEmission gaussian_from_json(const nlohmann::json& j) {
  GaussianEmission g{to_vector(j.at("mean")), to_vector(j.at("var"))};
  if (g.mean.size() == 0 || g.mean.size() != g.var.size()) {
    throw std::invalid_argument("gaussian emission: mean/var size mismatch");
  }
  if ((g.var.array() <= 0.0).any() || !g.var.allFinite() || !g.mean.allFinite()) {
    throw std::invalid_argument("gaussian emission: variances must be positive and finite");
  }
  return g;
}

}  // namespace

double gaussian_logpdf(const GaussianEmission& g, std::span<const double> x) {
  check_dim(g.dim(), x.size());
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < g.dim(); ++i) {
    const double diff = x[static_cast<std::size_t>(i)] - g.mean[i];
    acc += std::log(two_pi * g.var[i]) + diff * diff / g.var[i];
  }
  return -0.5 * acc;
}

double gmm_logpdf(const GmmEmission& m, std::span<const double> x) {
  check_dim(m.dim(), x.size());
  std::vector<double> terms(m.components.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    terms[k] = std::log(m.weights[static_cast<Eigen::Index>(k)]) + gaussian_logpdf(m.components[k], x);
  }
  return log_sum_exp(terms);
}

GaussianEmission fit_gaussian_mle(const Frames& points) {
  if (points.rows() == 0) throw std::invalid_argument("fit_gaussian_mle: no points");
  const double n = static_cast<double>(points.rows());
  GaussianEmission g;
  g.mean = points.colwise().sum().transpose() / n;
  g.var = (points.rowwise() - g.mean.transpose()).array().square().colwise().sum().transpose() / n;
  g.var = g.var.cwiseMax(kVarianceFloor);
  return g;
}

GaussianEmission fit_gaussian_weighted(const Frames& points, std::span<const double> weights) {
  if (static_cast<std::size_t>(points.rows()) != weights.size()) {
    throw std::invalid_argument("fit_gaussian_weighted: one weight per point required");
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("fit_gaussian_weighted: zero total weight");

  const Eigen::Index d = points.cols();
  GaussianEmission g{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    g.mean += weights[static_cast<std::size_t>(i)] * points.row(i).transpose();
  }
  g.mean /= total;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    g.var += weights[static_cast<std::size_t>(i)] *
             (points.row(i).transpose() - g.mean).array().square().matrix();
  }
  g.var /= total;
  g.var = g.var.cwiseMax(kVarianceFloor);
  return g;
}

Eigen::VectorXd floored_weights(const Eigen::VectorXd& counts, double floor) {
  const Eigen::Index k = counts.size();
  if (k == 0) throw std::invalid_argument("floored_weights: no components");
  if (floor * static_cast<double>(k) >= 1.0) throw std::invalid_argument("floored_weights: floor too large");

  // Water-filling: w_k = max(floor, c_k / lambda), with lambda fixing the sum.
  std::vector<bool> pinned(static_cast<std::size_t>(k), false);
  Eigen::VectorXd w(k);
  for (;;) {
    double free_mass = 1.0;
    double free_counts = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (pinned[static_cast<std::size_t>(i)]) {
        free_mass -= floor;
      } else {
        free_counts += counts[i];
      }
    }
    if (free_counts <= 0.0) {
      w.setConstant(1.0 / static_cast<double>(k));
      return w;
    }
    bool changed = false;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (pinned[static_cast<std::size_t>(i)]) {
        w[i] = floor;
        continue;
      }
      w[i] = counts[i] * free_mass / free_counts;
      if (w[i] < floor) {
        pinned[static_cast<std::size_t>(i)] = true;
        changed = true;
      }
    }
    if (!changed) return w;
  }
}

GmmFit refine_gmm(const Frames& points, GmmEmission start, const GmmFitOptions& opts) {
  const Eigen::Index n = points.rows();
  const int k = start.n_components();
  if (n == 0) throw std::invalid_argument("refine_gmm: no points");
  if (k < 1) throw std::invalid_argument("refine_gmm: mixture has no components");
  if (start.dim() != points.cols()) throw std::invalid_argument("refine_gmm: dimension mismatch");

  GmmFit fit{std::move(start), {}};
  Eigen::MatrixXd resp(n, k);
  std::vector<double> terms(static_cast<std::size_t>(k));

  for (int it = 0;; ++it) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto x = frame_at(points, i);
      for (int c = 0; c < k; ++c) {
        terms[static_cast<std::size_t>(c)] =
            std::log(fit.model.weights[c]) + gaussian_logpdf(fit.model.components[static_cast<std::size_t>(c)], x);
      }
      const double row = log_sum_exp(terms);
      ll += row;
      for (int c = 0; c < k; ++c) resp(i, c) = std::exp(terms[static_cast<std::size_t>(c)] - row);
    }
    const bool settled = it > 0 && std::abs(ll - fit.log_likelihood_trace.back()) /
                                           (std::abs(ll) + 1.0) < opts.rel_tol;
    fit.log_likelihood_trace.push_back(ll);
    if (it >= opts.em_iters || settled) break;

    const Eigen::VectorXd mass = resp.colwise().sum().transpose();
    fit.model.weights = floored_weights(mass);
    for (int c = 0; c < k; ++c) {
      // A component with (numerically) no responsibility keeps its parameters.
      if (mass[c] < 1e-10) continue;
      const Eigen::VectorXd r = resp.col(c);
      fit.model.components[static_cast<std::size_t>(c)] =
          fit_gaussian_weighted(points, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
    }
  }
  return fit;
}

GmmFit fit_gmm_traced(const Frames& points, int n_components, int em_iters, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (n_components < 1) throw std::invalid_argument("fit_gmm: need at least one component");
  if (n < n_components) {
    throw std::invalid_argument("fit_gmm: " + std::to_string(n) + " points cannot support " +
                                std::to_string(n_components) + " components");
  }
  if (em_iters < 0) throw std::invalid_argument("fit_gmm: em_iters must be non-negative");

  if (n_components == 1) {
    GmmEmission single{Eigen::VectorXd::Ones(1), {fit_gaussian_mle(points)}};
    return refine_gmm(points, std::move(single), {0, 1e-6});
  }

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> centers;
  centers.reserve(static_cast<std::size_t>(n_components));
  {
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.emplace_back(points.row(pick(rng)).transpose());
  }
  std::vector<double> d2(static_cast<std::size_t>(n));
  while (static_cast<int>(centers.size()) < n_components) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = squared_distance(frame_at(points, i), centers.front());
      for (std::size_t c = 1; c < centers.size(); ++c) {
        best = std::min(best, squared_distance(frame_at(points, i), centers[c]));
      }
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    Eigen::Index chosen = n - 1;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double run = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        run += d2[static_cast<std::size_t>(i)];
        if (run > target && d2[static_cast<std::size_t>(i)] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    centers.emplace_back(points.row(chosen).transpose());
  }

  // Lloyd iterations; ties go to the lower center index.
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(frame_at(points, i), centers[0]);
      for (int c = 1; c < n_components; ++c) {
        const double dc = squared_distance(frame_at(points, i), centers[static_cast<std::size_t>(c)]);
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        moved = true;
      }
    }
    if (!moved) break;
    for (int c = 0; c < n_components; ++c) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(points.cols());
      int count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] == c) {
          sum += points.row(i).transpose();
          ++count;
        }
      }
      if (count > 0) centers[static_cast<std::size_t>(c)] = sum / count;
    }
  }

  const GaussianEmission global = fit_gaussian_mle(points);
  GmmEmission init;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_components);
  for (int c = 0; c < n_components; ++c) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (assign[static_cast<std::size_t>(i)] == c) members.push_back(i);
    }
    counts[c] = static_cast<double>(members.size());
    if (members.empty()) {
      init.components.push_back({centers[static_cast<std::size_t>(c)], global.var});
    } else {
      Frames sub(static_cast<Eigen::Index>(members.size()), points.cols());
      for (std::size_t r = 0; r < members.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = points.row(members[r]);
      init.components.push_back(fit_gaussian_mle(sub));
    }
  }
  init.weights = floored_weights(counts);
  return refine_gmm(points, std::move(init), {em_iters, 1e-6});
}

GmmEmission fit_gmm(const Frames& points, int n_components, int em_iters, std::uint64_t seed) {
  return fit_gmm_traced(points, n_components, em_iters, seed).model;
}

Eigen::Index Emission::dim() const {
  return kind() == EmissionKind::Gaussian ? gaussian().dim() : gmm().dim();
}

double Emission::logpdf(std::span<const double> x) const {
  return kind() == EmissionKind::Gaussian ? gaussian_logpdf(gaussian(), x) : gmm_logpdf(gmm(), x);
}

Eigen::VectorXd Emission::draw(std::mt19937_64& rng) const {
  const GaussianEmission* g = nullptr;
  if (kind() == EmissionKind::Gaussian) {
    g = &gaussian();
  } else {
    const auto& m = gmm();
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double run = 0.0;
    std::size_t pick = m.components.size() - 1;
    for (std::size_t k = 0; k < m.components.size(); ++k) {
      run += m.weights[static_cast<Eigen::Index>(k)];
      if (u < run) {
        pick = k;
        break;
      }
    }
    g = &m.components[pick];
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd x(g->dim());
  for (Eigen::Index i = 0; i < g->dim(); ++i) x[i] = g->mean[i] + std::sqrt(g->var[i]) * normal(rng);
  return x;
}

nlohmann::json to_json(const GaussianEmission& g) {
  return {{"type", "gaussian"}, {"mean", to_array(g.mean)}, {"var", to_array(g.var)}};
}

nlohmann::json to_json(const GmmEmission& m) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : m.components) comps.push_back(to_json(c));
  return {{"type", "gmm"}, {"weights", to_array(m.weights)}, {"components", comps}};
}

nlohmann::json to_json(const Emission& e) {
  return e.kind() == EmissionKind::Gaussian ? to_json(e.gaussian()) : to_json(e.gmm());
}

Emission emission_from_json(const nlohmann::json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "gaussian") return gaussian_from_json(j);
  if (type != "gmm") throw std::invalid_argument("unknown emission type '" + type + "'");
  GmmEmission m;
  m.weights = to_vector(j.at("weights"));
  for (const auto& c : j.at("components")) m.components.push_back(gaussian_from_json(c));
  if (m.components.empty() || static_cast<std::size_t>(m.weights.size()) != m.components.size()) {
    throw std::invalid_argument("gmm emission: weights/components size mismatch");
  }
  for (const auto& c : m.components) {
    if (c.dim() != m.components.front().dim()) throw std::invalid_argument("gmm emission: mixed dimensions");
  }
  if ((m.weights.array() <= 0.0).any() || std::abs(m.weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("gmm emission: weights must be positive and sum to 1");
  }
  return m;
}

}  // namespace signhmm
