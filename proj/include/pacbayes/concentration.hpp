#pragma once

// Concentration primitives for losses on [0, 1] and their discrete-valued
// generalization.
//
// kl(p_hat || p) is the Bernoulli relative entropy. Its partial inverses
//   kl_inv_upper(p_hat, eps) = max { p : kl(p_hat || p) <= eps }
//   kl_inv_lower(p_hat, eps) = min { p : kl(p_hat || p) <= eps }
// turn empirical means into one-sided confidence limits. Bounded variables
// taking finitely many values b_0 < b_1 < ... < b_K decompose as
//   Z = b_0 + sum_j alpha_j 1[Z >= b_j],   alpha_j = b_j - b_{j-1},
// so each binary segment gets its own kl bound and the pieces recombine
// without the slack a single [0,1] rescaling would add.

#include <string>
#include <vector>

namespace pacbayes {

// Nonnegative divergence value that may be unbounded. The unbounded state is
// explicit, it never leaks a float sentinel into arithmetic.
class KlValue {
  public:
    static KlValue finite(double v);
    static KlValue unbounded();

    bool is_finite() const { return finite_; }
    // Throws std::logic_error when unbounded.
    double value() const;
    // Comparison usable in bisection: unbounded exceeds every threshold.
    bool leq(double eps) const { return finite_ && value_ <= eps; }

  private:
    double value_ = 0.0;
    bool finite_ = true;
};

// kl(p_hat || p) with the 0 ln 0 = 0 convention. Unbounded when p is 0 or 1
// and p_hat disagrees. Throws std::domain_error outside [0,1]^2.
KlValue bernoulli_kl(double p_hat, double p);

// Largest p with kl(p_hat || p) <= eps. Endpoints are analytic
// (p_hat = 0: 1 - exp(-eps); p_hat = 1: 1; eps = 0: p_hat); interior cases
// bisect on [p_hat, 1] to ulp resolution (100 iterations cap). The returned
// value always dominates p_hat. Throws std::domain_error for p_hat outside
// [0,1] or eps < 0 or non-finite eps.
double kl_inv_upper(double p_hat, double eps);

// Smallest p with kl(p_hat || p) <= eps; mirror of kl_inv_upper on [0, p_hat]
// (p_hat = 1: exp(-eps); p_hat = 0: 0).
double kl_inv_lower(double p_hat, double eps);

// Strictly increasing finite support b_0 < b_1 < ... < b_K, K >= 1 segments.
class DiscreteSupport {
  public:
    explicit DiscreteSupport(std::vector<double> points);

    const std::vector<double>& points() const { return points_; }
    // alpha_j = b_j - b_{j-1}, j = 1..K. All positive.
    const std::vector<double>& alphas() const { return alphas_; }
    int segments() const { return static_cast<int>(alphas_.size()); }
    double b0() const { return points_.front(); }

  private:
    std::vector<double> points_;
    std::vector<double> alphas_;
};

// Indicator vector (1[value >= b_j])_{j=1..K}. value must be one of the
// support points (exact comparison); reconstruction b_0 + sum alpha_j Z_j
// is then exact. Throws std::domain_error otherwise.
std::vector<double> decompose_discrete(double value, const DiscreteSupport& support);

// b_0 + sum_j alpha_j kl_inv_upper(seg_means[j], ln(K/delta)/n): an upper
// confidence limit at level delta for the mean of an i.i.d. sample of n
// support-valued variables, given the segment empirical means.
double split_kl_bound(const DiscreteSupport& support, const std::vector<double>& seg_means,
                      long n, double delta);

// kl_inv_upper(emp, (kl_div + ln(2 sqrt(n)/delta)) / n): upper confidence
// limit for the expected population loss of a Gibbs classifier with
// posterior-prior divergence kl_div, from its expected empirical loss emp.
double pac_bayes_kl_bound(double emp, double kl_div, long n, double delta);

// Split-kl analogue for support-valued losses: b_0 + sum_j alpha_j *
// kl_inv_upper(seg_means[j], (kl_div + ln(2 K sqrt(n)/delta)) / n).
double pac_bayes_split_kl_bound(const DiscreteSupport& support, const std::vector<double>& seg_means,
                                double kl_div, long n, double delta);

// emp + sqrt((kl_div + ln(2 sqrt(n)/delta)) / (2n)). Differentiable
// relaxation of pac_bayes_kl_bound used as a training surrogate only;
// certificates must go through the kl inverses.
double mcallester_bound(double emp, double kl_div, long n, double delta);

// kl_inv_upper(mean, ln(1/delta_prime)/m): upper confidence limit for a
// posterior expectation estimated by m independent [0,1] draws. No
// divergence term; the randomness is the sampling of hypotheses.
double mc_correction_bound(double mean, long m, double delta_prime);

// Failure-probability budget for a certificate built from one PAC-Bayes
// layer (delta) plus Monte-Carlo estimation layers (delta_prime), valid
// simultaneously with probability >= 1 - delta - delta_prime.
struct ConfidenceBudget {
    double delta = 0.025;
    double delta_prime = 0.01;

    // Equal split over the 1 + 3(T-1) estimated quantities of a T-step
    // recursive certificate.
    double per_quantity(int steps) const;

    void validate() const; // throws std::domain_error unless 0 < delta, 0 < delta_prime, delta + delta_prime < 1
};

} // namespace pacbayes
