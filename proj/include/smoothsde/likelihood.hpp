#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smoothsde/dataset.hpp"
#include "smoothsde/sde_models.hpp"

namespace smoothsde {

/// Responses of a dataset arranged for likelihood evaluation.
struct ResponseData {
    Family family = Family::BM_DRIFT;
    FamilyAux aux;
    std::vector<SeriesRange> series;
    std::vector<double> time;
    Eigen::MatrixXd y;  // n x d, NaN marks a missing observation
};

/// Validates responses for a family: missing values only for latent
/// families, positive values for GBM.
ResponseData prepare_responses(Family family, const Dataset& data, const std::vector<std::string>& responses,
                               const FamilyAux& aux = {});

/// Columns of the linear predictors that depend on a coefficient vector:
/// eta_a = sum over blocks of param a of X * coef.segment(offset, X.cols()).
struct CoefficientBlock {
    int offset = 0;
    Eigen::MatrixXd X;
};

struct CoefficientMap {
    int size = 0;
    std::vector<std::vector<CoefficientBlock>> blocks;  // per SDE parameter
};

struct LoglikDerivs {
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

/// Log-likelihood given linear predictors (n x num_params). Returns -inf and
/// sets `bad_row` when a transition density is not finite.
double loglik_value(const ResponseData& data, const Eigen::MatrixXd& eta, int* bad_row = nullptr);

/// Log-likelihood with exact gradient and Hessian with respect to the
/// coefficients described by `map`.
LoglikDerivs loglik_derivs(const ResponseData& data, const Eigen::MatrixXd& eta, const CoefficientMap& map);

}  // namespace smoothsde
