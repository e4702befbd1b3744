#include "gift/theory.hpp"

#include <sstream>

namespace gift::theory {

namespace {

CheckResult check_loss(int trials, std::uint64_t seed) {
  Rng rng = derive_stream(seed, "theory", "loss");
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto rows = static_cast<Eigen::Index>(1 + uniform_index(rng, 8));
    const auto cols = static_cast<Eigen::Index>(2 + uniform_index(rng, 7));
    const auto model = random_conditional(rows, cols, rng);
    const Eigen::VectorXd P_d = random_distribution(rows, rng);
    const auto target = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(rows)));

    const double marginal = loss_marginal(model, P_d, target);
    double expected = 0.0;
    for (Eigen::Index j = 0; j < rows; ++j) expected += P_d(j) * loss_conditional(model, target, j);
    worst = std::max(worst, std::abs(marginal - expected));
  }
  std::ostringstream detail;
  detail << trials << " instances, max |L_marg - E[L]| = " << worst;
  return {"loss", worst < kIdentityTolerance, detail.str()};
}

CheckResult check_gibbs(int trials, std::uint64_t seed) {
  Rng rng = derive_stream(seed, "theory", "gibbs");
  int close = 0;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto rows = static_cast<Eigen::Index>(2 + uniform_index(rng, 5));
    const auto cols = static_cast<Eigen::Index>(2 + uniform_index(rng, 5));
    const auto joint = random_joint(rows, cols, rng);
    const auto empirical = gibbs_chain(joint, 0, 101000, 1000, rng);
    const double tv = total_variation(empirical, exact_marginal(joint));
    worst = std::max(worst, tv);
    if (tv < 0.02) ++close;
  }
  std::ostringstream detail;
  detail << close << "/" << trials << " chains within TV 0.02, worst TV = " << worst;
  return {"gibbs", close * 50 >= trials * 48, detail.str()};
}

CheckResult check_variance(int trials, std::uint64_t seed) {
  Rng rng = derive_stream(seed, "theory", "variance");
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto rows = static_cast<Eigen::Index>(1 + uniform_index(rng, 6));
    const auto cols = static_cast<Eigen::Index>(2 + uniform_index(rng, 6));
    const auto terms = variance_decomposition(random_joint(rows, cols, rng, true));
    worst = std::max(worst, std::abs(terms.var_c - terms.expected_cond_var - terms.var_of_cond_mean));
    if (terms.var_c < terms.expected_cond_var - kIdentityTolerance)
      return {"variance", false, "Var(c) below E[Var(c|d)]"};
  }
  std::ostringstream detail;
  detail << trials << " joints, max decomposition error = " << worst;
  return {"variance", worst < kIdentityTolerance, detail.str()};
}

}  // namespace

std::vector<CheckResult> run_checks(const std::string& which, int trials, std::uint64_t seed) {
  if (trials < 1) throw PreconditionError("trials must be >= 1");
  std::vector<CheckResult> out;
  const bool all = which == "all";
  if (!all && which != "gibbs" && which != "variance" && which != "loss")
    throw PreconditionError("unknown check '" + which + "'");
  if (all || which == "loss") out.push_back(check_loss(trials, seed));
  if (all || which == "gibbs") out.push_back(check_gibbs(trials, seed));
  if (all || which == "variance") out.push_back(check_variance(trials, seed));
  return out;
}

}  // namespace gift::theory
