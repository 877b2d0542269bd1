#pragma once

// Runtime quantal level-k policies and the per-opponent belief over hidden
// (level, rationality) profiles.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "qlk/grid_env.h"
#include "qlk/levelk.h"

namespace qlk {

struct HiddenProfile {
  int k = 1;
  double lambda = 1.0;
  bool operator==(const HiddenProfile&) const = default;
};

class ProfileSupport {
 public:
  explicit ProfileSupport(std::vector<HiddenProfile> profiles);

  // k in {1..k_max} x lambda in `lambdas`, level-major.
  static ProfileSupport grid(int k_max, std::span<const double> lambdas);
  static ProfileSupport default_support();

  std::span<const HiddenProfile> profiles() const { return profiles_; }
  std::size_t size() const { return profiles_.size(); }
  const HiddenProfile& operator[](std::size_t i) const { return profiles_[i]; }
  int max_level() const;
  bool operator==(const ProfileSupport&) const = default;

 private:
  std::vector<HiddenProfile> profiles_;
};

using PolicyDist = std::array<double, kNumHumanActions>;

inline constexpr double kLikelihoodFloor = 1e-6;

class Belief {
 public:
  Belief(std::shared_ptr<const ProfileSupport> support,
         std::vector<double> probs);
  static Belief uniform(std::shared_ptr<const ProfileSupport> support);

  const ProfileSupport& support() const { return *support_; }
  const std::shared_ptr<const ProfileSupport>& support_ptr() const {
    return support_;
  }
  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::size_t size() const { return probs_.size(); }

  // Marginal probability that the opponent reasons at level k.
  double level_probability(int k) const;

  bool operator==(const Belief& o) const {
    return *support_ == *o.support_ && probs_ == o.probs_;
  }

 private:
  std::shared_ptr<const ProfileSupport> support_;
  std::vector<double> probs_;
};

// Softmax of lambda * q with max subtraction. lambda == 0 is the uniform
// limit.
PolicyDist quantal_policy(std::span<const double> q_row, double lambda);
PolicyDist quantal_policy(const QTable& q, std::int64_t state_index,
                          double lambda);

// Belief-weighted mixture of the profiles' quantal policies.
PolicyDist predictive_policy(const Belief& belief, const QHierarchy& tables,
                             std::int64_t state_index);

// Bayes on one observed action with likelihoods floored at kLikelihoodFloor.
Belief belief_update(const Belief& belief, std::int64_t state_index,
                     HumanAction observed, const QHierarchy& tables);

// Natural-log entropy of the belief.
double entropy(const Belief& belief);

double info_gain(std::span<const Belief> parent, std::span<const Belief> child);

}  // namespace qlk
