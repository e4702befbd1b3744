#pragma once

// Exact checks of the description/code joint-distribution arguments on small
// dense matrices: Gibbs sampling converges to the code marginal, the
// marginal SFT loss is the expectation of per-description losses, and the
// law of total variance splits code variance into within- and
// between-description parts.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gift/errors.hpp"
#include "gift/random.hpp"

namespace gift::theory {

inline constexpr double kIdentityTolerance = 1e-12;

/// Joint P(d, c): rows are descriptions, columns are codes.
template <class Scalar = double>
class DiscreteJoint {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit DiscreteJoint(Matrix P, std::optional<Vector> code_values = std::nullopt)
      : P_(std::move(P)), code_values_(std::move(code_values)) {
    if (P_.size() == 0) throw InvariantError("joint must have at least one description and one code");
    if ((P_.array() < Scalar(0)).any()) throw InvariantError("joint entries must be >= 0");
    if (std::abs(P_.sum() - Scalar(1)) > Scalar(kIdentityTolerance)) throw InvariantError("joint must sum to 1");
    if ((P_.rowwise().sum().array() <= Scalar(0)).any()) throw InvariantError("every description needs positive mass");
    if ((P_.colwise().sum().array() <= Scalar(0)).any()) throw InvariantError("every code needs positive mass");
    if (code_values_ && code_values_->size() != P_.cols())
      throw InvariantError("one code value per code column is required");
  }

  const Matrix& P() const noexcept { return P_; }
  Eigen::Index descriptions() const noexcept { return P_.rows(); }
  Eigen::Index codes() const noexcept { return P_.cols(); }
  const std::optional<Vector>& code_values() const noexcept { return code_values_; }

  Vector code_marginal() const { return P_.colwise().sum().transpose(); }
  Vector description_marginal() const { return P_.rowwise().sum(); }

  /// Row j of P(c | d).
  Vector code_given(Eigen::Index d) const { return P_.row(d).transpose() / P_.row(d).sum(); }
  /// Column k of P(d | c).
  Vector description_given(Eigen::Index c) const { return P_.col(c) / P_.col(c).sum(); }

 private:
  Matrix P_;
  std::optional<Vector> code_values_;
};

/// Q(j, k) = P_M(c_k | d_j); rows sum to 1 and all entries are positive.
template <class Scalar = double>
class ModelConditional {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit ModelConditional(Matrix Q) : Q_(std::move(Q)) {
    if (Q_.size() == 0) throw InvariantError("conditional must be nonempty");
    if ((Q_.array() <= Scalar(0)).any()) throw InvariantError("conditional entries must be strictly positive");
    if (((Q_.rowwise().sum().array() - Scalar(1)).abs() > Scalar(kIdentityTolerance)).any())
      throw InvariantError("every conditional row must sum to 1");
  }

  const Matrix& Q() const noexcept { return Q_; }
  Eigen::Index descriptions() const noexcept { return Q_.rows(); }
  Eigen::Index codes() const noexcept { return Q_.cols(); }

 private:
  Matrix Q_;
};

template <class Scalar>
typename DiscreteJoint<Scalar>::Vector exact_marginal(const DiscreteJoint<Scalar>& joint) {
  return joint.code_marginal();
}

namespace detail {

template <class Vector>
Eigen::Index sample_categorical(const Vector& cdf, Rng& rng) {
  const double u = uniform01(rng) * static_cast<double>(cdf(cdf.size() - 1));
  for (Eigen::Index i = 0; i < cdf.size(); ++i)
    if (u < static_cast<double>(cdf(i))) return i;
  return cdf.size() - 1;
}

template <class Vector>
Vector cumulative(const Vector& p) {
  Vector cdf(p.size());
  typename Vector::Scalar running(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) cdf(i) = running += p(i);
  return cdf;
}

}  // namespace detail

/// Alternates c ~ P(c | d) and d ~ P(d | c) from description `start_d` for
/// `steps` sweeps and returns the code frequencies after the first `burn_in`.
template <class Scalar>
typename DiscreteJoint<Scalar>::Vector gibbs_chain(const DiscreteJoint<Scalar>& joint, Eigen::Index start_d,
                                                   std::size_t steps, std::size_t burn_in, Rng& rng) {
  using Vector = typename DiscreteJoint<Scalar>::Vector;
  if (steps <= burn_in) throw PreconditionError("steps must exceed burn_in");
  if (start_d < 0 || start_d >= joint.descriptions()) throw PreconditionError("start description out of range");

  std::vector<Vector> code_cdf, desc_cdf;
  for (Eigen::Index d = 0; d < joint.descriptions(); ++d) code_cdf.push_back(detail::cumulative(Vector(joint.code_given(d))));
  for (Eigen::Index c = 0; c < joint.codes(); ++c)
    desc_cdf.push_back(detail::cumulative(Vector(joint.description_given(c))));

  Vector counts = Vector::Zero(joint.codes());
  Eigen::Index d = start_d;
  for (std::size_t step = 0; step < steps; ++step) {
    const Eigen::Index c = detail::sample_categorical(code_cdf[static_cast<std::size_t>(d)], rng);
    d = detail::sample_categorical(desc_cdf[static_cast<std::size_t>(c)], rng);
    if (step >= burn_in) counts(c) += Scalar(1);
  }
  return counts / static_cast<Scalar>(steps - burn_in);
}

template <class Vector>
typename Vector::Scalar total_variation(const Vector& p, const Vector& q) {
  return (p - q).cwiseAbs().sum() / typename Vector::Scalar(2);
}

/// Cross-entropy -sum_c Q(source, c) log Q(target, c); the entropy of the
/// row when source == target.
template <class Scalar>
Scalar loss_conditional(const ModelConditional<Scalar>& model, Eigen::Index target_d, Eigen::Index source_d) {
  const auto& Q = model.Q();
  if (target_d < 0 || target_d >= Q.rows() || source_d < 0 || source_d >= Q.rows())
    throw PreconditionError("description index out of range");
  return -(Q.row(source_d).array() * Q.row(target_d).array().log()).sum();
}

/// -sum_c P_c(c) log Q(target, c) with P_c = P_d^T Q. Throws
/// InternalConsistencyError unless it equals sum_j P_d(j) loss_conditional(target, j).
template <class Scalar>
Scalar loss_marginal(const ModelConditional<Scalar>& model, const typename ModelConditional<Scalar>::Vector& P_d,
                     Eigen::Index target_d) {
  const auto& Q = model.Q();
  if (P_d.size() != Q.rows()) throw PreconditionError("one description probability per row of Q is required");
  if ((P_d.array() < Scalar(0)).any() || std::abs(P_d.sum() - Scalar(1)) > Scalar(kIdentityTolerance))
    throw PreconditionError("description distribution must be nonnegative and sum to 1");
  if (target_d < 0 || target_d >= Q.rows()) throw PreconditionError("description index out of range");

  const typename ModelConditional<Scalar>::Vector P_c = Q.transpose() * P_d;
  const Scalar marginal = -(P_c.array() * Q.row(target_d).transpose().array().log()).sum();

  Scalar expected(0);
  for (Eigen::Index j = 0; j < Q.rows(); ++j) expected += P_d(j) * loss_conditional(model, target_d, j);
  if (std::abs(marginal - expected) > Scalar(kIdentityTolerance))
    throw InternalConsistencyError("marginal loss differs from the expected conditional loss");
  return marginal;
}

template <class Scalar>
struct VarianceTerms {
  Scalar var_c;
  Scalar expected_cond_var;
  Scalar var_of_cond_mean;
};

/// Var(c) = E[Var(c | d)] + Var(E[c | d]) over the joint's code values.
/// Throws InternalConsistencyError if the two sides disagree.
template <class Scalar>
VarianceTerms<Scalar> variance_decomposition(const DiscreteJoint<Scalar>& joint) {
  if (!joint.code_values()) throw PreconditionError("variance needs code values");
  const auto& x = *joint.code_values();
  const auto p_d = joint.description_marginal();
  const auto p_c = joint.code_marginal();

  const Scalar mean = p_c.dot(x);
  const Scalar var_c = p_c.dot((x.array() - mean).square().matrix());

  Scalar expected_cond_var(0), var_of_cond_mean(0);
  for (Eigen::Index d = 0; d < joint.descriptions(); ++d) {
    const auto cond = joint.code_given(d);
    const Scalar m = cond.dot(x);
    expected_cond_var += p_d(d) * cond.dot((x.array() - m).square().matrix());
    var_of_cond_mean += p_d(d) * (m - mean) * (m - mean);
  }
  if (std::abs(var_c - (expected_cond_var + var_of_cond_mean)) > Scalar(kIdentityTolerance))
    throw InternalConsistencyError("law of total variance violated");
  return {var_c, expected_cond_var, var_of_cond_mean};
}

/// Strictly positive random joint, so every conditional is well defined and
/// the induced Gibbs chain is ergodic.
inline DiscreteJoint<double> random_joint(Eigen::Index rows, Eigen::Index cols, Rng& rng, bool with_values = false) {
  Eigen::MatrixXd P(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) P(i, j) = 0.05 + uniform01(rng);
  P /= P.sum();
  std::optional<Eigen::VectorXd> values;
  if (with_values) {
    values = Eigen::VectorXd(cols);
    for (Eigen::Index j = 0; j < cols; ++j) (*values)(j) = 10.0 * uniform01(rng) - 5.0;
  }
  return DiscreteJoint<double>(P, values);
}

inline ModelConditional<double> random_conditional(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd Q(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) Q(i, j) = 0.01 + uniform01(rng);
  for (Eigen::Index i = 0; i < rows; ++i) Q.row(i) /= Q.row(i).sum();
  return ModelConditional<double>(Q);
}

inline Eigen::VectorXd random_distribution(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd p(n);
  for (Eigen::Index i = 0; i < n; ++i) p(i) = 0.01 + uniform01(rng);
  return p / p.sum();
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Randomized checks behind `gift theory --check`. `which` is one of all,
/// gibbs, variance, loss.
std::vector<CheckResult> run_checks(const std::string& which, int trials, std::uint64_t seed);

}  // namespace gift::theory
