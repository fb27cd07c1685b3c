#pragma once

// Closed-form reparameterizations of likelihood tempering.
//
// Raising a likelihood to the power lambda and renormalizing yields a new
// likelihood in the same family for several standard models; tempering the
// Bayes update is then an ordinary Bayes update under a transformed
// (prior, likelihood) pair. These maps make that equivalence executable:
//   Bernoulli(theta)  -> Bernoulli(theta^lambda / (theta^lambda + (1-theta)^lambda))
//   N(mu, var)        -> N(mu, var / lambda^power), power = 1 by default
//                        (the exponent is kept as an explicit constant
//                        because the literature also quotes lambda^2)
//   Beta-Bernoulli    -> new prior  Beta(a,b) * (theta^lambda + (1-theta)^lambda)
//   Inverse-gamma     -> shape + n(lambda - 1), same scale
// Tempering also strictly sharpens the Bernoulli likelihood: the entropy of
// the tempered distribution is decreasing in lambda away from theta = 1/2.

#include <vector>

namespace pacbayes {

// Density evaluated on a strictly increasing grid, trapezoid-normalized so
// it integrates to 1 over the grid span.
struct GridDensity {
    std::vector<double> points;
    std::vector<double> density;
};

// theta^lambda / (theta^lambda + (1-theta)^lambda), computed as a logistic
// in log-odds so large lambda cannot overflow. Fixed points: 0, 1/2, 1.
// Throws std::domain_error for theta outside [0,1] or lambda < 0.
double temper_bernoulli(double theta, double lambda);

struct GaussianParams {
    double mean = 0.0;
    double var = 1.0;
};

// Tempered Gaussian observation model: variance shrinks by lambda^power.
// Throws std::domain_error for var <= 0, lambda <= 0, or power < 0.
GaussianParams temper_gaussian(double mean, double var, double lambda, double power = 1.0);

// -p ln p - (1-p) ln(1-p), zero at the endpoints.
double bernoulli_entropy(double p);

// Entropy of the tempered Bernoulli along a lambda path.
std::vector<double> tempered_entropy_curve(double theta, const std::vector<double>& lambdas);

// True when the entropy curve is monotone nonincreasing along an increasing
// lambda path, with strict decrease whenever theta is interior and != 1/2
// (at theta in {0, 1/2, 1} tempering is a fixed point and entropy is flat).
bool entropy_monotonicity_check(double theta, const std::vector<double>& lambdas);

// Unnormalized-to-normalized grid density of the transformed prior
// Beta(a,b)(theta^lambda + (1-theta)^lambda). Grid points must lie strictly
// inside (0,1) and increase.
GridDensity beta_bernoulli_new_prior(double a, double b, double lambda, const std::vector<double>& grid);

// Transformed inverse-gamma prior for a Gaussian scale parameter observed n
// times: shape' = shape + n(lambda-1), scale unchanged. Throws
// std::domain_error when shape' <= 0 (the transform leaves the family).
GridDensity inverse_gamma_new_prior(double shape, double scale, long n, double lambda,
                                    const std::vector<double>& grid);

// Normalized tempered Bernoulli likelihood q(y | theta, lambda) for y in {0,1}.
double bernoulli_new_likelihood(int y, double theta, double lambda);

// Max pointwise difference between the grid-normalized tempered posterior
// Beta(a,b) theta^(lambda y) (1-theta)^(lambda(1-y)) and the posterior built
// from the transformed prior and likelihood. Zero up to float rounding; the
// executable form of the equivalence statement.
double verify_bayes_equivalence(double a, double b, double lambda, int y,
                                const std::vector<double>& grid);

} // namespace pacbayes
