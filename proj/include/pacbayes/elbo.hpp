#pragma once

// Mean-field KL decomposition for a shared scalar prior.
//
// For D independent coordinates q_1..q_D against one prior p, the penalty
// Sum_d KL(q_d, p) equals D * (KL(q_avg, p) + I), where q_avg is the equal
// weight mixture of the q_d and I is the mutual information between a
// uniform coordinate index and theta ~ q_d. The identity is verified here
// numerically: the left side in closed form, the right side by Simpson
// quadrature of the mixture integrals. A two-parameter generalization
// weights the two terms separately.

#include <vector>

namespace pacbayes {

struct Gaussian1d {
    double mean = 0.0;
    double std_dev = 1.0;
};

// Simpson quadrature over [min_d(mean_d - window_stds*std_d),
// max_d(mean_d + window_stds*std_d)]; nodes must be odd and >= 3.
struct QuadratureConfig {
    long nodes = 2001;
    double window_stds = 8.0;
};

struct MixtureTerms {
    double kl_avg = 0.0;      // KL(q_avg, p)
    double mutual_info = 0.0; // (1/D) Sum_d KL(q_d, q_avg)
    // |full-resolution - half-resolution| quadrature differences
    double kl_avg_error = 0.0;
    double mutual_info_error = 0.0;
};

// Closed-form KL between one-dimensional Gaussians.
double gaussian_kl_1d(const Gaussian1d& q, const Gaussian1d& p);

// Sum_d KL(q_d, p), closed form. Throws std::domain_error for empty q or
// nonpositive standard deviations.
double meanfield_kl(const std::vector<Gaussian1d>& q, const Gaussian1d& p);

// Mixture-side quantities by quadrature. Throws std::domain_error when any
// component puts more than 1e-10 mass outside the window, or for an invalid
// node count.
MixtureTerms mixture_terms(const std::vector<Gaussian1d>& q, const Gaussian1d& p,
                           const QuadratureConfig& cfg = {});

// |meanfield_kl - D * (kl_avg + mutual_info)|.
double verify_decomposition(const std::vector<Gaussian1d>& q, const Gaussian1d& p,
                            const QuadratureConfig& cfg = {});

// data_fit + D * (kl_avg / lambda1 + mutual_info / lambda2). Either lambda
// may be +infinity, dropping its term. Throws std::domain_error for
// lambda <= 0.
double generalized_objective(double data_fit, double kl_avg, double mutual_info, long count,
                             double lambda1, double lambda2);

} // namespace pacbayes
