#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smoothsde/basis.hpp"
#include "smoothsde/dataset.hpp"
#include "smoothsde/errors.hpp"
#include "smoothsde/likelihood.hpp"
#include "smoothsde/optimizer.hpp"
#include "smoothsde/sde_models.hpp"

namespace smoothsde {

/// Gaussian penalty on a named fixed-effect coefficient (e.g. "s.(Intercept)") or "zeta".
struct Prior {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
};

struct ModelSpec {
    Family family = Family::BM_DRIFT;
    std::vector<std::string> response;
    std::vector<ParameterFormula> formulas;  // one per family parameter
    FamilyAux aux;
    bool estimate_zeta = false;
    std::vector<Prior> priors;
    /// Optional starting values of the parameters on their natural scale.
    std::map<std::string, double> init;
};

struct FitOptions {
    OptimizerOptions optimizer;
    int inner_max_iterations = 200;
    double inner_tol = 1e-8;
    double log_lambda_min = -10.0;
    double log_lambda_max = 20.0;
};

/// Thrown when the inner Newton iterations do not converge.
struct InnerFailure : NumericalError {
    InnerFailure(const std::string& what, Eigen::VectorXd last) : NumericalError(what), beta(std::move(last)) {}
    Eigen::VectorXd beta;
};

struct InnerResult {
    Eigen::VectorXd beta;
    Eigen::MatrixXd hessian;  // of the joint NLL in beta
    double nll = 0.0;
    int iterations = 0;
    bool degenerate = false;  // ridge added to the Hessian
};

/// Penalised joint negative log-likelihood of a model on a dataset.
class JointObjective {
public:
    JointObjective(ModelSpec spec, const Dataset& data);

    const ModelSpec& spec() const { return spec_; }
    const DesignSet& design() const { return design_; }
    const ResponseData& responses() const { return responses_; }
    int p_fe() const { return design_.p_fe(); }
    int p_re() const { return design_.p_re(); }
    int num_penalties() const { return static_cast<int>(design_.penalties.size()); }

    /// Linear predictors, n x num_params.
    Eigen::MatrixXd eta(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) const;

    /// -log L(alpha, beta) - log[beta | lambda] + prior terms. Returns +inf
    /// when a transition density is not finite and sets `bad_row`.
    double joint_nll(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, const Eigen::VectorXd& log_lambda,
                     const FamilyAux& aux, int* bad_row = nullptr) const;

    /// -log[beta | lambda] alone, with all normalising constants.
    double penalty_nll(const Eigen::VectorXd& beta, const Eigen::VectorXd& log_lambda) const;

    /// Newton iterations for the mode of the joint NLL in beta.
    InnerResult inner_mode(const Eigen::VectorXd& alpha, const Eigen::VectorXd& log_lambda, const FamilyAux& aux,
                           const Eigen::VectorXd& beta0, int max_iterations = 200, double tol = 1e-8) const;

    /// Laplace approximation of the marginal NLL, integrating over beta.
    double laplace_marginal_nll(const Eigen::VectorXd& alpha, const Eigen::VectorXd& log_lambda,
                                const FamilyAux& aux, const Eigen::VectorXd& beta0,
                                InnerResult* inner = nullptr, int max_iterations = 200, double tol = 1e-8) const;

    /// Exact Hessian of the joint NLL in (alpha, beta).
    Eigen::MatrixXd joint_hessian(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& log_lambda, const FamilyAux& aux) const;

    /// Method-of-moments starting values for alpha (and zeta for OU).
    std::pair<Eigen::VectorXd, FamilyAux> start_values() const;

private:
    double prior_nll(const Eigen::VectorXd& alpha, const FamilyAux& aux) const;
    Eigen::MatrixXd penalty_matrix(const Eigen::VectorXd& log_lambda) const;

    ModelSpec spec_;
    DesignSet design_;
    ResponseData responses_;
    CoefficientMap re_map_;
    CoefficientMap joint_map_;
    std::vector<std::pair<int, Prior>> alpha_priors_;
    const Prior* zeta_prior_ = nullptr;
};

struct FitResult {
    std::shared_ptr<const JointObjective> objective;
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
    Eigen::VectorXd log_lambda;
    FamilyAux aux;
    Eigen::MatrixXd precision;  // joint precision of (alpha, beta)
    double marginal_nll = 0.0;
    double joint_nll = 0.0;
    bool converged = false;
    bool degenerate = false;
    double grad_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    std::string message;
    std::vector<OptimizerTraceEntry> trace;

    int num_aux_estimated() const;
};

/// Maximises the Laplace-approximated marginal likelihood over
/// (alpha, log lambda, zeta when estimated).
FitResult fit(const ModelSpec& spec, const Dataset& data, const FitOptions& options = {});

/// Fitted parameter values at the data rows, n x num_params (natural scale).
Eigen::MatrixXd fitted_parameters(const FitResult& fit);

/// Draws from N((alpha, beta), precision^-1), one draw per row.
Eigen::MatrixXd posterior_samples(const FitResult& fit, int n_samples, std::uint64_t seed);

/// Covariate values at which to evaluate parameter curves.
struct PredictionGrid {
    std::map<std::string, std::vector<double>> covariates;
    std::map<std::string, std::vector<std::string>> factors;
    std::size_t size = 0;
};

/// Evenly spaced grid over the training range of `covariate`; other numeric
/// covariates are held at `fixed` values or their training means.
PredictionGrid covariate_grid(const FitResult& fit, const Dataset& data, const std::string& covariate, int grid_size,
                              const std::map<std::string, double>& fixed = {});

struct ParameterCurve {
    std::vector<std::string> params;
    Eigen::MatrixXd mean;   // grid x num_params, inverse link of the estimate
    Eigen::MatrixXd lower;
    Eigen::MatrixXd upper;
    double level = 0.95;
    bool extrapolated = false;
};

/// Pointwise bands from posterior quantiles passed through the links.
ParameterCurve predict_parameters(const FitResult& fit, const PredictionGrid& grid, int n_post, double level,
                                  std::uint64_t seed);

/// Same, reusing existing posterior draws.
ParameterCurve predict_parameters(const FitResult& fit, const PredictionGrid& grid, const Eigen::MatrixXd& draws,
                                  double level);

/// 2 * marginal NLL + 2 * (fixed effects + smoothing parameters + estimated auxiliaries).
double marginal_aic(const FitResult& fit);

/// Type-7 sample quantile of unsorted values.
double quantile(std::vector<double> values, double p);

}  // namespace smoothsde
