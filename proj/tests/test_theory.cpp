#include <doctest.h>

#include "gift/theory.hpp"

using namespace gift;
using namespace gift::theory;

namespace {

DiscreteJoint<double> symmetric(bool with_values = false) {
  Eigen::MatrixXd P(2, 2);
  P << 0.4, 0.1, 0.1, 0.4;
  std::optional<Eigen::VectorXd> values;
  if (with_values) values = Eigen::Vector2d(0.0, 1.0);
  return DiscreteJoint<double>(P, values);
}

ModelConditional<double> two_rows() {
  Eigen::MatrixXd Q(2, 2);
  Q << 0.8, 0.2, 0.2, 0.8;
  return ModelConditional<double>(Q);
}

}  // namespace

TEST_CASE("exact marginal") {
  auto m = exact_marginal(symmetric());
  CHECK(m(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m(1) == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(8);
  auto joint = random_joint(4, 5, rng);
  auto marginal = exact_marginal(joint);
  for (Eigen::Index c = 0; c < 5; ++c) {
    double sum = 0;
    for (Eigen::Index d = 0; d < 4; ++d) sum += joint.P()(d, c);
    CHECK(std::abs(marginal(c) - sum) < 1e-12);
  }
}

TEST_CASE("joint invariants") {
  Eigen::MatrixXd zero_col(2, 2);
  zero_col << 0.5, 0.0, 0.5, 0.0;
  CHECK_THROWS_AS(DiscreteJoint<double>{zero_col}, InvariantError);
  Eigen::MatrixXd unnormalized(1, 2);
  unnormalized << 0.5, 0.6;
  CHECK_THROWS_AS(DiscreteJoint<double>{unnormalized}, InvariantError);
  Eigen::MatrixXd with_zero(2, 2);
  with_zero << 0.5, 0.5, 0.0, 1.0;
  CHECK_THROWS_AS(ModelConditional<double>{with_zero}, InvariantError);
}

TEST_CASE("gibbs chain converges on the symmetric joint") {
  Rng rng(17);
  auto empirical = gibbs_chain(symmetric(), 0, 101000, 1000, rng);
  CHECK(total_variation(empirical, exact_marginal(symmetric())) < 0.02);
  CHECK(empirical.sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(gibbs_chain(symmetric(), 0, 10, 10, rng), PreconditionError);
}

TEST_CASE("gibbs chain on a degenerate joint is constant") {
  Eigen::MatrixXd P(1, 1);
  P << 1.0;
  Rng rng(1);
  auto empirical = gibbs_chain(DiscreteJoint<double>(P), 0, 100, 10, rng);
  CHECK(empirical(0) == 1.0);
}

TEST_CASE("gibbs chain on a random 3x3 joint") {
  Rng rng(23);
  auto joint = random_joint(3, 3, rng);
  auto empirical = gibbs_chain(joint, 1, 101000, 1000, rng);
  CHECK(total_variation(empirical, exact_marginal(joint)) < 0.02);
}

TEST_CASE("conditional loss") {
  auto Q = two_rows();
  CHECK(loss_conditional(Q, 0, 0) == doctest::Approx(0.50040242353818788).epsilon(1e-14));
  CHECK(loss_conditional(Q, 0, 1) == doctest::Approx(1.3321790402101223).epsilon(1e-14));
  Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(2, 4, 0.25);
  CHECK(loss_conditional(ModelConditional<double>(uniform), 0, 1) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("marginal loss equals the expected conditional loss") {
  auto Q = two_rows();
  CHECK(loss_marginal(Q, Eigen::Vector2d(0.5, 0.5), 0) == doctest::Approx(0.91629073187415507).epsilon(1e-14));
  CHECK(loss_marginal(Q, Eigen::Vector2d(1.0, 0.0), 0) == doctest::Approx(loss_conditional(Q, 0, 0)).epsilon(1e-14));
  CHECK_THROWS_AS(loss_marginal(Q, Eigen::Vector2d(0.7, 0.7), 0), PreconditionError);
}

TEST_CASE("law of total variance on the worked example") {
  auto terms = variance_decomposition(symmetric(true));
  CHECK(terms.var_c == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(terms.expected_cond_var == doctest::Approx(0.16).epsilon(1e-14));
  CHECK(terms.var_of_cond_mean == doctest::Approx(0.09).epsilon(1e-14));
  CHECK_THROWS_AS(variance_decomposition(symmetric(false)), PreconditionError);
}

TEST_CASE("independent joint has no between-description variance") {
  Eigen::Vector3d pd(0.2, 0.3, 0.5);
  Eigen::Vector4d pc(0.1, 0.2, 0.3, 0.4);
  Eigen::MatrixXd P = pd * pc.transpose();
  auto terms = variance_decomposition(DiscreteJoint<double>(P, Eigen::VectorXd(Eigen::Vector4d(1, 2, 3, 4))));
  CHECK(std::abs(terms.var_of_cond_mean) < 1e-15);
  CHECK(terms.var_c == doctest::Approx(terms.expected_cond_var));
}

TEST_CASE("randomized identity checks pass") {
  for (const auto& r : run_checks("loss", 200, 5)) CHECK_MESSAGE(r.passed, r.detail);
  for (const auto& r : run_checks("variance", 200, 5)) CHECK_MESSAGE(r.passed, r.detail);
  CHECK_THROWS_AS(run_checks("bogus", 1, 1), PreconditionError);
}

TEST_CASE("long double instantiation") {
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> Q(2, 2);
  Q << 0.8L, 0.2L, 0.2L, 0.8L;
  ModelConditional<long double> model(Q);
  Eigen::Matrix<long double, Eigen::Dynamic, 1> pd(2);
  pd << 0.5L, 0.5L;
  CHECK(static_cast<double>(loss_marginal(model, pd, 0)) == doctest::Approx(0.91629073187415507));
}
