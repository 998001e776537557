#include "ddup/losses.hpp"

#include <cmath>

#include "ddup/table.hpp"

namespace ddup {

namespace {

void check_pair(const Eigen::Ref<const Eigen::VectorXd>& t, const Eigen::Ref<const Eigen::VectorXd>& s) {
  if (t.size() != s.size()) throw Error("logit vectors differ in length");
}

double ce_impl(const Eigen::Ref<const Eigen::VectorXd>& teacher,
               const Eigen::Ref<const Eigen::VectorXd>& student, double temperature,
               Eigen::VectorXd* grad_out) {
  check_pair(teacher, student);
  if (!(temperature > 0.0)) throw Error("annealed_ce: temperature must be positive");
  if (teacher.size() < 2) throw Error("annealed_ce: need at least two classes");
  const Eigen::VectorXd p = softmax(teacher, temperature);
  const Eigen::VectorXd zs = student / temperature;
  const double m = zs.maxCoeff();
  const double lse = m + std::log((zs.array() - m).exp().sum());
  const double loss = -(p.array() * (zs.array() - lse)).sum();
  if (grad_out) *grad_out = ((zs.array() - lse).exp() - p.array()).matrix() / temperature;
  return loss;
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& z, double temperature) {
  Eigen::VectorXd e = ((z.array() - z.maxCoeff()) / temperature).exp();
  return e / e.sum();
}

double annealed_ce(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                   const Eigen::Ref<const Eigen::VectorXd>& student, double temperature,
                   Eigen::Ref<Eigen::VectorXd> grad_student) {
  Eigen::VectorXd g;
  const double loss = ce_impl(teacher, student, temperature, &g);
  if (grad_student.size() != g.size()) throw Error("annealed_ce: gradient length mismatch");
  grad_student += g;
  return loss;
}

double annealed_ce(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                   const Eigen::Ref<const Eigen::VectorXd>& student, double temperature) {
  return ce_impl(teacher, student, temperature, nullptr);
}

double logit_mse(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                 const Eigen::Ref<const Eigen::VectorXd>& student,
                 Eigen::Ref<Eigen::VectorXd> grad_student) {
  check_pair(teacher, student);
  if (grad_student.size() != student.size()) throw Error("logit_mse: gradient length mismatch");
  grad_student += 2.0 * (student - teacher);
  return (teacher - student).squaredNorm();
}

double logit_mse(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                 const Eigen::Ref<const Eigen::VectorXd>& student) {
  check_pair(teacher, student);
  return (teacher - student).squaredNorm();
}

}  // namespace ddup
