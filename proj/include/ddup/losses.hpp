// Distillation losses over logit vectors: temperature-softened cross-entropy
// and squared error.

#pragma once

#include <Eigen/Dense>

namespace ddup {

/// -sum_i softmax(t/T)_i * log softmax(s/T)_i. Adds d/ds into `grad_student` when given.
double annealed_ce(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                   const Eigen::Ref<const Eigen::VectorXd>& student, double temperature,
                   Eigen::Ref<Eigen::VectorXd> grad_student);
double annealed_ce(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                   const Eigen::Ref<const Eigen::VectorXd>& student, double temperature);

/// sum_i (t_i - s_i)^2. Adds d/ds into `grad_student` when given.
double logit_mse(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                 const Eigen::Ref<const Eigen::VectorXd>& student,
                 Eigen::Ref<Eigen::VectorXd> grad_student);
double logit_mse(const Eigen::Ref<const Eigen::VectorXd>& teacher,
                 const Eigen::Ref<const Eigen::VectorXd>& student);

/// Numerically stable softmax of z / temperature.
Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& z, double temperature = 1.0);

}  // namespace ddup
