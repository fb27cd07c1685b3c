#include "pacbayes/tempering_transforms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pacbayes {

double temper_bernoulli(double theta, double lambda) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::domain_error("temper_bernoulli: theta outside [0,1]");
    if (!(lambda >= 0.0)) throw std::domain_error("temper_bernoulli: lambda must be >= 0");
    if (theta == 0.0 || theta == 1.0 || theta == 0.5) return theta;
    double z = lambda * (std::log(theta) - std::log1p(-theta));
    return 1.0 / (1.0 + std::exp(-z));
}

GaussianParams temper_gaussian(double mean, double var, double lambda, double power) {
    if (!(var > 0.0)) throw std::domain_error("temper_gaussian: var must be positive");
    if (!(lambda > 0.0)) throw std::domain_error("temper_gaussian: lambda must be positive");
    if (!(power >= 0.0)) throw std::domain_error("temper_gaussian: power must be >= 0");
    return GaussianParams{mean, var / std::pow(lambda, power)};
}

double bernoulli_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("bernoulli_entropy: p outside [0,1]");
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
    return h;
}

std::vector<double> tempered_entropy_curve(double theta, const std::vector<double>& lambdas) {
    std::vector<double> out;
    out.reserve(lambdas.size());
    for (double l : lambdas) out.push_back(bernoulli_entropy(temper_bernoulli(theta, l)));
    return out;
}

bool entropy_monotonicity_check(double theta, const std::vector<double>& lambdas) {
    if (lambdas.size() < 2) throw std::domain_error("entropy_monotonicity_check: need >= 2 lambdas");
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] > lambdas[i - 1]))
            throw std::domain_error("entropy_monotonicity_check: lambdas must increase");
    auto h = tempered_entropy_curve(theta, lambdas);
    bool fixed_point = theta == 0.0 || theta == 0.5 || theta == 1.0;
    for (std::size_t i = 1; i < h.size(); ++i) {
        if (fixed_point) {
            if (h[i] != h[i - 1]) return false;
        } else if (!(h[i] < h[i - 1])) {
            return false;
        }
    }
    return true;
}

static void check_grid(const std::vector<double>& grid, double lo, double hi, const char* fn) {
    if (grid.size() < 3) throw std::domain_error(std::string(fn) + ": grid needs >= 3 points");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > lo && grid[i] < hi))
            throw std::domain_error(std::string(fn) + ": grid point outside open domain");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw std::domain_error(std::string(fn) + ": grid must strictly increase");
    }
}

// exp-normalize a log-density over the grid with trapezoid weights
static GridDensity normalize_log_density(const std::vector<double>& grid, std::vector<double> logd) {
    double mx = *std::max_element(logd.begin(), logd.end());
    GridDensity g;
    g.points = grid;
    g.density.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) g.density[i] = std::exp(logd[i] - mx);
    double z = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        z += 0.5 * (g.density[i] + g.density[i - 1]) * (grid[i] - grid[i - 1]);
    if (!(z > 0.0)) throw std::runtime_error("normalize_log_density: zero mass on grid");
    for (auto& d : g.density) d /= z;
    return g;
}

static double log_sum_exp2(double a, double b) {
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

GridDensity beta_bernoulli_new_prior(double a, double b, double lambda, const std::vector<double>& grid) {
    if (!(a > 0.0 && b > 0.0)) throw std::domain_error("beta_bernoulli_new_prior: a, b must be positive");
    if (!(lambda > 0.0)) throw std::domain_error("beta_bernoulli_new_prior: lambda must be positive");
    check_grid(grid, 0.0, 1.0, "beta_bernoulli_new_prior");
    std::vector<double> logd(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double lt = std::log(grid[i]), l1t = std::log1p(-grid[i]);
        logd[i] = (a - 1.0) * lt + (b - 1.0) * l1t + log_sum_exp2(lambda * lt, lambda * l1t);
    }
    return normalize_log_density(grid, std::move(logd));
}

GridDensity inverse_gamma_new_prior(double shape, double scale, long n, double lambda,
                                    const std::vector<double>& grid) {
    if (!(shape > 0.0 && scale > 0.0)) throw std::domain_error("inverse_gamma_new_prior: shape, scale must be positive");
    if (!(lambda > 0.0) || n < 0) throw std::domain_error("inverse_gamma_new_prior: need lambda > 0, n >= 0");
    double new_shape = shape + n * (lambda - 1.0);
    if (!(new_shape > 0.0))
        throw std::domain_error("inverse_gamma_new_prior: shape + n(lambda-1) must stay positive");
    check_grid(grid, 0.0, std::numeric_limits<double>::infinity(), "inverse_gamma_new_prior");
    std::vector<double> logd(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        logd[i] = -(new_shape + 1.0) * std::log(grid[i]) - scale / grid[i];
    return normalize_log_density(grid, std::move(logd));
}

double bernoulli_new_likelihood(int y, double theta, double lambda) {
    if (y != 0 && y != 1) throw std::domain_error("bernoulli_new_likelihood: y must be 0 or 1");
    double p1 = temper_bernoulli(theta, lambda);
    return y == 1 ? p1 : 1.0 - p1;
}

double verify_bayes_equivalence(double a, double b, double lambda, int y,
                                const std::vector<double>& grid) {
    if (y != 0 && y != 1) throw std::domain_error("verify_bayes_equivalence: y must be 0 or 1");
    if (!(a > 0.0 && b > 0.0 && lambda > 0.0))
        throw std::domain_error("verify_bayes_equivalence: a, b, lambda must be positive");
    check_grid(grid, 0.0, 1.0, "verify_bayes_equivalence");

    // Route one: temper the Bernoulli likelihood directly.
    std::vector<double> log_direct(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double lt = std::log(grid[i]), l1t = std::log1p(-grid[i]);
        log_direct[i] = (a - 1.0) * lt + (b - 1.0) * l1t + lambda * (y == 1 ? lt : l1t);
    }
    GridDensity direct = normalize_log_density(grid, std::move(log_direct));

    // Route two: transformed prior times transformed likelihood.
    GridDensity new_prior = beta_bernoulli_new_prior(a, b, lambda, grid);
    std::vector<double> log_product(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        log_product[i] = std::log(new_prior.density[i]) + std::log(bernoulli_new_likelihood(y, grid[i], lambda));
    GridDensity product = normalize_log_density(grid, std::move(log_product));

    double max_diff = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        max_diff = std::max(max_diff, std::abs(direct.density[i] - product.density[i]));
    return max_diff;
}

} // namespace pacbayes
