#include "qlk/quantal.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace qlk {

ProfileSupport::ProfileSupport(std::vector<HiddenProfile> profiles)
    : profiles_(std::move(profiles)) {
  if (profiles_.empty()) {
    throw std::invalid_argument("profile support must not be empty");
  }
  for (std::size_t i = 0; i < profiles_.size(); ++i) {
    const HiddenProfile& p = profiles_[i];
    if (p.k < 1) throw std::invalid_argument("profile level must be >= 1");
    if (!(p.lambda > 0.0) || !std::isfinite(p.lambda)) {
      throw std::invalid_argument("profile lambda must be positive");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (profiles_[j] == p) {
        throw std::invalid_argument("duplicate profile (k=" +
                                    std::to_string(p.k) + ", lambda=" +
                                    std::to_string(p.lambda) + ")");
      }
    }
  }
}

ProfileSupport ProfileSupport::grid(int k_max, std::span<const double> lambdas) {
  std::vector<HiddenProfile> out;
  for (int k = 1; k <= k_max; ++k) {
    for (double l : lambdas) out.push_back({k, l});
  }
  return ProfileSupport(std::move(out));
}

ProfileSupport ProfileSupport::default_support() {
  static constexpr double kLambdas[] = {1.0, 3.0, 5.0};
  return grid(2, kLambdas);
}

int ProfileSupport::max_level() const {
  int m = 0;
  for (const auto& p : profiles_) m = std::max(m, p.k);
  return m;
}

Belief::Belief(std::shared_ptr<const ProfileSupport> support,
               std::vector<double> probs)
    : support_(std::move(support)), probs_(std::move(probs)) {
  if (!support_) throw std::invalid_argument("belief needs a support");
  if (probs_.size() != support_->size()) {
    throw std::invalid_argument("belief size does not match its support");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw std::invalid_argument("belief entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("belief does not sum to 1 (sum = " +
                                std::to_string(total) + ")");
  }
}

Belief Belief::uniform(std::shared_ptr<const ProfileSupport> support) {
  const std::size_t n = support->size();
  return Belief(std::move(support), std::vector<double>(n, 1.0 / n));
}

double Belief::level_probability(int k) const {
  double p = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if ((*support_)[i].k == k) p += probs_[i];
  }
  return p;
}

PolicyDist quantal_policy(std::span<const double> q_row, double lambda) {
  if (q_row.size() != kNumHumanActions) {
    throw ContractViolation("quantal_policy expects one value per human action");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double q : q_row) {
    if (!std::isfinite(q)) throw std::domain_error("non-finite Q value");
    m = std::max(m, q);
  }
  PolicyDist p{};
  double z = 0.0;
  for (int a = 0; a < kNumHumanActions; ++a) {
    p[a] = std::exp(lambda * (q_row[a] - m));
    z += p[a];
  }
  for (double& x : p) x /= z;
  return p;
}

PolicyDist quantal_policy(const QTable& q, std::int64_t state_index,
                          double lambda) {
  if (state_index < 0 || state_index >= q.states()) {
    throw std::out_of_range("state index out of range for Q-table");
  }
  return quantal_policy(q.row(state_index), lambda);
}

PolicyDist predictive_policy(const Belief& belief, const QHierarchy& tables,
                             std::int64_t state_index) {
  PolicyDist mix{};
  const ProfileSupport& support = belief.support();
  for (std::size_t i = 0; i < support.size(); ++i) {
    const double w = belief[i];
    if (w == 0.0) continue;
    const PolicyDist p = quantal_policy(tables.human_level(support[i].k),
                                        state_index, support[i].lambda);
    for (int a = 0; a < kNumHumanActions; ++a) mix[a] += w * p[a];
  }
  return mix;
}

Belief belief_update(const Belief& belief, std::int64_t state_index,
                     HumanAction observed, const QHierarchy& tables) {
  const ProfileSupport& support = belief.support();
  const int a = static_cast<int>(observed);
  std::vector<double> post(belief.size());
  double z = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (belief[i] == 0.0) continue;
    const PolicyDist p = quantal_policy(tables.human_level(support[i].k),
                                        state_index, support[i].lambda);
    post[i] = belief[i] * std::max(p[a], kLikelihoodFloor);
    z += post[i];
  }
  for (double& x : post) x /= z;
  return Belief(belief.support_ptr(), std::move(post));
}

double entropy(const Belief& belief) {
  double h = 0.0;
  for (double p : belief.probs()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double info_gain(std::span<const Belief> parent, std::span<const Belief> child) {
  if (parent.size() != child.size()) {
    throw ContractViolation("info_gain: " + std::to_string(parent.size()) +
                            " parent beliefs vs " +
                            std::to_string(child.size()) + " child beliefs");
  }
  double g = 0.0;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    g += entropy(parent[i]) - entropy(child[i]);
  }
  return g;
}

}  // namespace qlk
