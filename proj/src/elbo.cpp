#include "pacbayes/elbo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pacbayes {

namespace {

void check_components(const std::vector<Gaussian1d>& q, const Gaussian1d& p) {
    if (q.empty()) throw std::domain_error("meanfield_kl: empty component list");
    if (!(p.std_dev > 0.0)) throw std::domain_error("meanfield_kl: prior std must be positive");
    for (const auto& g : q)
        if (!(g.std_dev > 0.0))
            throw std::domain_error("meanfield_kl: component std must be positive");
}

double log_pdf(double x, const Gaussian1d& g) {
    double z = (x - g.mean) / g.std_dev;
    return -0.5 * std::log(2.0 * M_PI) - std::log(g.std_dev) - 0.5 * z * z;
}

// Gaussian upper-tail probability P(Z > z).
double tail_prob(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Composite Simpson weights applied to samples of f on an odd-length
// uniform grid with spacing h.
double simpson(const std::vector<double>& f, double h) {
    double odd = 0.0, even = 0.0;
    long n = static_cast<long>(f.size());
    for (long i = 1; i + 1 < n; i += 2) odd += f[i];
    for (long i = 2; i + 1 < n; i += 2) even += f[i];
    return h / 3.0 * (f.front() + f.back() + 4.0 * odd + 2.0 * even);
}

struct MixtureIntegrals {
    double kl_avg;
    double mutual_info;
};

MixtureIntegrals integrate(const std::vector<Gaussian1d>& q, const Gaussian1d& p, double lo,
                           double hi, long nodes) {
    const long d_count = static_cast<long>(q.size());
    const double h = (hi - lo) / double(nodes - 1);
    const double log_d = std::log(double(d_count));

    std::vector<double> f_kl(nodes), f_mi(nodes);
    std::vector<double> lq(d_count);
    for (long i = 0; i < nodes; ++i) {
        double x = lo + h * double(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (long d = 0; d < d_count; ++d) {
            lq[d] = log_pdf(x, q[d]);
            mx = std::max(mx, lq[d]);
        }
        double s = 0.0;
        for (long d = 0; d < d_count; ++d) s += std::exp(lq[d] - mx);
        double lavg = mx + std::log(s) - log_d;
        f_kl[i] = std::exp(lavg) * (lavg - log_pdf(x, p));
        double mi = 0.0;
        for (long d = 0; d < d_count; ++d) mi += std::exp(lq[d]) * (lq[d] - lavg);
        f_mi[i] = mi / double(d_count);
    }
    return {simpson(f_kl, h), simpson(f_mi, h)};
}

} // namespace

double gaussian_kl_1d(const Gaussian1d& q, const Gaussian1d& p) {
    if (!(q.std_dev > 0.0) || !(p.std_dev > 0.0))
        throw std::domain_error("gaussian_kl_1d: std must be positive");
    double vr = (q.std_dev * q.std_dev) / (p.std_dev * p.std_dev);
    double dm = q.mean - p.mean;
    return std::log(p.std_dev / q.std_dev) + 0.5 * (vr + dm * dm / (p.std_dev * p.std_dev)) - 0.5;
}

double meanfield_kl(const std::vector<Gaussian1d>& q, const Gaussian1d& p) {
    check_components(q, p);
    double total = 0.0;
    for (const auto& g : q) total += gaussian_kl_1d(g, p);
    return total;
}

MixtureTerms mixture_terms(const std::vector<Gaussian1d>& q, const Gaussian1d& p,
                           const QuadratureConfig& cfg) {
    check_components(q, p);
    if (cfg.nodes < 3 || cfg.nodes % 2 == 0)
        throw std::domain_error("mixture_terms: Simpson rule needs an odd node count >= 3");
    if (!(cfg.window_stds > 0.0))
        throw std::domain_error("mixture_terms: window must be positive");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& g : q) {
        lo = std::min(lo, g.mean - cfg.window_stds * g.std_dev);
        hi = std::max(hi, g.mean + cfg.window_stds * g.std_dev);
    }
    for (const auto& g : q) {
        double outside = tail_prob((g.mean - lo) / g.std_dev) + tail_prob((hi - g.mean) / g.std_dev);
        if (outside > 1e-10)
            throw std::domain_error("mixture_terms: window too narrow, component tail mass " +
                                    std::to_string(outside) + " outside it");
    }

    auto fine = integrate(q, p, lo, hi, cfg.nodes);
    long half = cfg.nodes / 2 + 1;
    if (half % 2 == 0) ++half;
    auto coarse = integrate(q, p, lo, hi, half);

    MixtureTerms out;
    out.kl_avg = fine.kl_avg;
    out.mutual_info = fine.mutual_info;
    out.kl_avg_error = std::abs(fine.kl_avg - coarse.kl_avg);
    out.mutual_info_error = std::abs(fine.mutual_info - coarse.mutual_info);
    return out;
}

double verify_decomposition(const std::vector<Gaussian1d>& q, const Gaussian1d& p,
                            const QuadratureConfig& cfg) {
    double lhs = meanfield_kl(q, p);
    auto terms = mixture_terms(q, p, cfg);
    return std::abs(lhs - double(q.size()) * (terms.kl_avg + terms.mutual_info));
}

double generalized_objective(double data_fit, double kl_avg, double mutual_info, long count,
                             double lambda1, double lambda2) {
    if (count < 1) throw std::domain_error("generalized_objective: count must be positive");
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0))
        throw std::domain_error("generalized_objective: lambdas must be positive");
    double kl_term = std::isinf(lambda1) ? 0.0 : kl_avg / lambda1;
    double mi_term = std::isinf(lambda2) ? 0.0 : mutual_info / lambda2;
    return data_fit + double(count) * (kl_term + mi_term);
}

} // namespace pacbayes
