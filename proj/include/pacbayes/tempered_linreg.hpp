#pragma once

// Conjugate Bayesian linear regression with a tempered likelihood, and exact
// diagnostics for the cold-posterior effect.
//
// Model: y | x, theta ~ N(theta^T phi(x), sigma^2), theta ~ N(m0, v0 I).
// The lambda-tempered posterior multiplies the data likelihood by lambda,
// which for this family equals replacing sigma^2 by sigma^2 / lambda.
//
// Diagnostics follow two exact identities for the tempering path:
//   d/dlambda E_gibbs = -Var(ln p(D|theta)) / n        (empirical Gibbs loss)
//   d/dlambda B      = G(p_bar) - G(p)                 (population Bayes loss)
// where G is the posterior expectation of -ln p(D|theta) and p_bar is the
// posterior reweighted by the predictive density of a fresh point, averaged
// over the data distribution. Negative Bayes derivative at lambda = 1 is the
// cold-posterior effect; positive is the warm effect.

#include "pacbayes/concentration.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace pacbayes {

struct RegressionTask {
    Eigen::MatrixXd X;      // n x K feature rows phi(x_i)
    Eigen::VectorXd y;
    Eigen::VectorXd raw_x;  // generating inputs, kept for reference
    double noise_var_true = 1.0;
    Eigen::VectorXd true_weights;
    std::uint64_t seed = 0;

    long n() const { return X.rows(); }
    long dim() const { return X.cols(); }
};

struct GaussianModelSpec {
    double likelihood_var = 1.0;
    Eigen::VectorXd prior_mean; // empty means zero
    double prior_var = 2.0;

    void validate() const; // throws std::domain_error on nonpositive variances
    Eigen::VectorXd prior_mean_for(long K) const;
};

// The closed set of model configurations used by the misspecification
// experiments. Data generation is identical everywhere (noise variance 1);
// only the model's likelihood variance or prior width is wrong.
enum class MisspecSetting {
    WellSpecified,            // likelihood var 1.0, prior var 2.0
    LikelihoodOverconfident,  // likelihood var 0.15 (warm effect)
    LikelihoodUnderconfident, // likelihood var 3.0  (cold-posterior effect)
    PriorOverconfident,       // prior var 0.5       (cold-posterior effect)
};
GaussianModelSpec model_for_setting(MisspecSetting setting);

// Bounded Fourier basis: phi_1 = 1/sqrt(2 pi); odd k >= 3: sin(kx)/sqrt(pi);
// even k: cos(kx)/sqrt(pi).
Eigen::VectorXd fourier_features(double x, long K);

// x_i ~ U[-1,1], y_i ~ N(1^T phi(x_i), 1): the all-ones regression target.
RegressionTask generate_regression_data(long n, long K, std::uint64_t seed);

struct TemperedLinRegPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
    Eigen::MatrixXd chol_lower; // Cholesky factor of covariance, for sampling
    double lambda = 1.0;

    long dim() const { return mean.size(); }
    // theta = mean + chol_lower z, z from the per-sample stream (seed, index).
    Eigen::VectorXd sample(std::uint64_t seed, std::uint64_t index) const;
};

// Precision v0^-1 I + (lambda/sigma^2) X^T X, solved by Cholesky; lambda = 0
// returns the prior. Throws std::domain_error for lambda < 0.
TemperedLinRegPosterior fit_tempered_posterior(const RegressionTask& task, const GaussianModelSpec& spec,
                                               double lambda);

// E_post[-(1/n) ln p(D|theta)], closed form. Throws on n = 0.
double empirical_gibbs_loss(const TemperedLinRegPosterior& post, const RegressionTask& task,
                            const GaussianModelSpec& spec);

// Average predictive negative log-likelihood over eval rows; the predictive
// at phi is N(mean^T phi, sigma^2 + phi^T Cov phi). Closed form.
double bayes_loss(const TemperedLinRegPosterior& post, const GaussianModelSpec& spec,
                  const RegressionTask& eval);

// -Var_post(ln p(D|theta)) / n in closed form (Gaussian quartic moments):
// the exact lambda-derivative of empirical_gibbs_loss. Always <= 0; n = 0
// gives exactly 0.
double gibbs_derivative(const TemperedLinRegPosterior& post, const RegressionTask& task,
                        const GaussianModelSpec& spec);

// Monte-Carlo fallback for the same quantity (sample variance over m draws).
double gibbs_derivative_mc(const TemperedLinRegPosterior& post, const RegressionTask& task,
                           const GaussianModelSpec& spec, long m, std::uint64_t seed);

struct DerivativeEstimate {
    double estimate = 0.0;
    double stderr_value = 0.0;
    double ess_min = 0.0; // smallest per-point effective sample size of the weights
};

// Monte-Carlo estimate of the Bayes-loss lambda-derivative
// G(p_bar_lambda) - G(p_lambda) by self-normalized importance sampling:
// m posterior draws are reweighted per eval point by the point's likelihood.
// Standard error combines a 20-block jackknife over draws with the eval-point
// sampling variance. Deterministic in seed and independent of threads.
DerivativeEstimate bayes_derivative(const RegressionTask& task, const GaussianModelSpec& spec,
                                    double lambda, const RegressionTask& eval, long m,
                                    std::uint64_t seed, int threads = 1);

// Exact value of the same derivative against the finite eval set: p_bar is a
// uniform mixture of rank-one posterior updates, each evaluated in closed
// form (Sherman-Morrison). Used as the estimator's oracle.
double bayes_derivative_exact(const RegressionTask& task, const GaussianModelSpec& spec,
                              double lambda, const RegressionTask& eval);

// Signed coordinate permutation h(v)_i = signs_i * v_{perm_i}: the feature-
// space analogue of a data-augmentation transformation. Bijective by
// construction.
struct Transform {
    std::vector<int> perm;
    Eigen::VectorXd signs;
    Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
};

struct TransformationSet {
    std::vector<Transform> transforms;

    static TransformationSet identity(long K);
    // Valid augmentations for the all-ones target: permutations preserve
    // 1^T phi, hence the data distribution.
    static TransformationSet random_permutations(long K, int count, std::uint64_t seed);
    // Fabricated augmentations: sign flips change 1^T phi.
    static TransformationSet random_sign_flips(long K, int count, std::uint64_t seed);

    void validate(long K) const; // throws std::domain_error if empty or shape-mismatched
};

// Augmentation-averaged empirical loss (1/n) sum_i mean_h -ln p(y_i | h(phi_i), theta).
double da_pseudo_loss(const Eigen::VectorXd& theta, const RegressionTask& task,
                      const GaussianModelSpec& spec, const TransformationSet& transforms);

// Posterior proportional to exp(-n lambda L_DA(D, theta)) p(theta); conjugacy
// is preserved because the pseudo-loss is an average of quadratics.
TemperedLinRegPosterior fit_da_tempered_posterior(const RegressionTask& task, const GaussianModelSpec& spec,
                                                  const TransformationSet& transforms, double lambda);

struct DaCovDiagnostics {
    // -Cov(n L_DA(D, theta), L(theta)): lambda-derivative of the population
    // Gibbs loss at the posterior. More negative = stronger cooling benefit.
    double gibbs_grad_cov = 0.0;
    double gibbs_grad_cov_se = 0.0;
    // -Cov(n L_DA(D, theta), S(theta)) with the posterior-normalized score
    // S(theta) = -E_nu[p(y|x,theta) / E_post p(y|x,theta')]: lambda-derivative
    // of the population Bayes loss.
    double bayes_grad_cov = 0.0;
    double bayes_grad_cov_se = 0.0;
    // E_post[-S] should equal 1; estimated with split sample batches so the
    // check is statistical rather than arithmetic.
    double neg_score_mean = 0.0;
    double neg_score_mean_se = 0.0;
};

// m posterior draws split evenly: first half estimates the predictive
// normalizer, second half the covariances. Deterministic in seed.
DaCovDiagnostics da_cov_diagnostics(const TemperedLinRegPosterior& post, const RegressionTask& task,
                                    const GaussianModelSpec& spec, const TransformationSet& transforms,
                                    const RegressionTask& holdout, long m, std::uint64_t seed,
                                    int threads = 1);

} // namespace pacbayes
