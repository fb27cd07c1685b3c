#include "pacbayes/concentration.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pacbayes {

KlValue KlValue::finite(double v) {
    KlValue k;
    k.value_ = v;
    k.finite_ = true;
    return k;
}

KlValue KlValue::unbounded() {
    KlValue k;
    k.finite_ = false;
    return k;
}

double KlValue::value() const {
    if (!finite_) throw std::logic_error("KlValue: value() on unbounded divergence");
    return value_;
}

static void check_unit(double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) // negated to reject NaN
        throw std::domain_error(std::string("bernoulli_kl: ") + name + " outside [0,1]");
}

KlValue bernoulli_kl(double p_hat, double p) {
    check_unit(p_hat, "p_hat");
    check_unit(p, "p");
    if (p == 0.0) return p_hat == 0.0 ? KlValue::finite(0.0) : KlValue::unbounded();
    if (p == 1.0) return p_hat == 1.0 ? KlValue::finite(0.0) : KlValue::unbounded();
    double v = 0.0;
    if (p_hat > 0.0) v += p_hat * std::log(p_hat / p);
    if (p_hat < 1.0) v += (1.0 - p_hat) * std::log((1.0 - p_hat) / (1.0 - p));
    return KlValue::finite(v < 0.0 ? 0.0 : v); // clamp float noise at p_hat == p
}

static void check_eps(double eps, const char* fn) {
    if (!(eps >= 0.0) || !std::isfinite(eps))
        throw std::domain_error(std::string(fn) + ": eps must be finite and nonnegative");
}

// Bisection on [lo, hi] for the boundary of { p : kl(p_hat || p) <= eps }.
// feasible_low says which endpoint satisfies the constraint. Runs until the
// bracket no longer bisects in double precision (at most 100 iterations) and
// returns the conservative (infeasible-side) endpoint, so upper inverses are
// never undershot and lower inverses never overshot.
static double bisect_kl(double p_hat, double eps, double lo, double hi, bool feasible_low) {
    for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        bool ok = bernoulli_kl(p_hat, mid).leq(eps);
        if (ok == feasible_low)
            lo = mid;
        else
            hi = mid;
    }
    return feasible_low ? hi : lo;
}

double kl_inv_upper(double p_hat, double eps) {
    check_unit(p_hat, "p_hat");
    check_eps(eps, "kl_inv_upper");
    if (p_hat >= 1.0) return 1.0;
    if (eps == 0.0) return p_hat;
    if (p_hat == 0.0) {
        // kl(0 || q) = ln(1/(1-q)) <= eps  <=>  q <= 1 - exp(-eps)
        return 1.0 - std::exp(-eps);
    }
    return bisect_kl(p_hat, eps, p_hat, 1.0, true);
}

double kl_inv_lower(double p_hat, double eps) {
    check_unit(p_hat, "p_hat");
    check_eps(eps, "kl_inv_lower");
    if (p_hat <= 0.0) return 0.0;
    if (eps == 0.0) return p_hat;
    if (p_hat == 1.0) {
        // kl(1 || q) = ln(1/q) <= eps  <=>  q >= exp(-eps)
        return std::exp(-eps);
    }
    return bisect_kl(p_hat, eps, 0.0, p_hat, false);
}

DiscreteSupport::DiscreteSupport(std::vector<double> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::domain_error("DiscreteSupport: need at least two points");
    alphas_.reserve(points_.size() - 1);
    for (std::size_t j = 1; j < points_.size(); ++j) {
        if (!std::isfinite(points_[j - 1]) || !std::isfinite(points_[j]))
            throw std::domain_error("DiscreteSupport: points must be finite");
        if (!(points_[j] > points_[j - 1]))
            throw std::domain_error("DiscreteSupport: points must be strictly increasing");
        alphas_.push_back(points_[j] - points_[j - 1]);
    }
}

std::vector<double> decompose_discrete(double value, const DiscreteSupport& support) {
    const auto& pts = support.points();
    bool member = false;
    for (double b : pts)
        if (value == b) member = true;
    if (!member) throw std::domain_error("decompose_discrete: value is not a support point");
    std::vector<double> z(support.segments());
    for (int j = 1; j <= support.segments(); ++j) z[j - 1] = value >= pts[j] ? 1.0 : 0.0;
    return z;
}

static void check_scalars(const char* fn, long n, double delta) {
    if (n < 1) throw std::domain_error(std::string(fn) + ": n must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error(std::string(fn) + ": delta must be in (0,1)");
}

static void check_seg_means(const char* fn, const DiscreteSupport& support, const std::vector<double>& seg_means) {
    if (static_cast<int>(seg_means.size()) != support.segments())
        throw std::domain_error(std::string(fn) + ": seg_means size must equal segment count");
    for (double m : seg_means)
        if (!(m >= 0.0 && m <= 1.0)) throw std::domain_error(std::string(fn) + ": segment means must be in [0,1]");
}

double split_kl_bound(const DiscreteSupport& support, const std::vector<double>& seg_means,
                      long n, double delta) {
    check_scalars("split_kl_bound", n, delta);
    check_seg_means("split_kl_bound", support, seg_means);
    double k = static_cast<double>(support.segments());
    double eps = std::log(k / delta) / static_cast<double>(n);
    double b = support.b0();
    for (int j = 0; j < support.segments(); ++j)
        b += support.alphas()[j] * kl_inv_upper(seg_means[j], eps);
    return b;
}

static void check_kl_div(const char* fn, double kl_div) {
    if (!(kl_div >= 0.0) || !std::isfinite(kl_div))
        throw std::domain_error(std::string(fn) + ": kl_div must be finite and nonnegative");
}

double pac_bayes_kl_bound(double emp, double kl_div, long n, double delta) {
    check_scalars("pac_bayes_kl_bound", n, delta);
    check_kl_div("pac_bayes_kl_bound", kl_div);
    double nn = static_cast<double>(n);
    double eps = (kl_div + std::log(2.0 * std::sqrt(nn) / delta)) / nn;
    return kl_inv_upper(emp, eps);
}

double pac_bayes_split_kl_bound(const DiscreteSupport& support, const std::vector<double>& seg_means,
                                double kl_div, long n, double delta) {
    check_scalars("pac_bayes_split_kl_bound", n, delta);
    check_kl_div("pac_bayes_split_kl_bound", kl_div);
    check_seg_means("pac_bayes_split_kl_bound", support, seg_means);
    double nn = static_cast<double>(n);
    double k = static_cast<double>(support.segments());
    double eps = (kl_div + std::log(2.0 * k * std::sqrt(nn) / delta)) / nn;
    double b = support.b0();
    for (int j = 0; j < support.segments(); ++j)
        b += support.alphas()[j] * kl_inv_upper(seg_means[j], eps);
    return b;
}

double mcallester_bound(double emp, double kl_div, long n, double delta) {
    check_scalars("mcallester_bound", n, delta);
    check_kl_div("mcallester_bound", kl_div);
    double nn = static_cast<double>(n);
    return emp + std::sqrt((kl_div + std::log(2.0 * std::sqrt(nn) / delta)) / (2.0 * nn));
}

double mc_correction_bound(double mean, long m, double delta_prime) {
    check_scalars("mc_correction_bound", m, delta_prime);
    return kl_inv_upper(mean, std::log(1.0 / delta_prime) / static_cast<double>(m));
}

double ConfidenceBudget::per_quantity(int steps) const {
    if (steps < 1) throw std::domain_error("ConfidenceBudget: steps must be >= 1");
    return delta_prime / static_cast<double>(1 + 3 * (steps - 1));
}

void ConfidenceBudget::validate() const {
    if (!(delta > 0.0) || !(delta_prime > 0.0) || !(delta + delta_prime < 1.0))
        throw std::domain_error("ConfidenceBudget: need delta > 0, delta_prime > 0, delta + delta_prime < 1");
}

} // namespace pacbayes
