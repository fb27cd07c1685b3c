#include "pacbayes/tempered_linreg.hpp"

#include "pacbayes/parallel.hpp"
#include "pacbayes/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace pacbayes {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr std::uint64_t kTagData = 0x646174ULL;
constexpr std::uint64_t kTagTheta = 0x746874ULL;
constexpr std::uint64_t kTagPerm = 0x7065726dULL;
constexpr std::uint64_t kTagFlip = 0x666c6970ULL;
} // namespace

void GaussianModelSpec::validate() const {
    if (!(likelihood_var > 0.0) || !(prior_var > 0.0))
        throw std::domain_error("GaussianModelSpec: variances must be positive");
}

Eigen::VectorXd GaussianModelSpec::prior_mean_for(long K) const {
    if (prior_mean.size() == 0) return Eigen::VectorXd::Zero(K);
    if (prior_mean.size() != K) throw std::domain_error("GaussianModelSpec: prior_mean dimension mismatch");
    return prior_mean;
}

GaussianModelSpec model_for_setting(MisspecSetting setting) {
    GaussianModelSpec s;
    switch (setting) {
        case MisspecSetting::WellSpecified: s.likelihood_var = 1.0; s.prior_var = 2.0; break;
        case MisspecSetting::LikelihoodOverconfident: s.likelihood_var = 0.15; s.prior_var = 2.0; break;
        case MisspecSetting::LikelihoodUnderconfident: s.likelihood_var = 3.0; s.prior_var = 2.0; break;
        case MisspecSetting::PriorOverconfident: s.likelihood_var = 1.0; s.prior_var = 0.5; break;
    }
    return s;
}

Eigen::VectorXd fourier_features(double x, long K) {
    if (K < 1) throw std::domain_error("fourier_features: K must be >= 1");
    Eigen::VectorXd phi(K);
    const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
    for (long k = 1; k <= K; ++k) {
        if (k == 1)
            phi[k - 1] = 1.0 / std::sqrt(kTwoPi);
        else if (k % 2 == 1)
            phi[k - 1] = std::sin(k * x) * inv_sqrt_pi;
        else
            phi[k - 1] = std::cos(k * x) * inv_sqrt_pi;
    }
    return phi;
}

RegressionTask generate_regression_data(long n, long K, std::uint64_t seed) {
    if (n < 0 || K < 1) throw std::domain_error("generate_regression_data: need n >= 0, K >= 1");
    RegressionTask t;
    t.X.resize(n, K);
    t.y.resize(n);
    t.raw_x.resize(n);
    t.noise_var_true = 1.0;
    t.true_weights = Eigen::VectorXd::Ones(K);
    t.seed = seed;
    for (long i = 0; i < n; ++i) {
        CounterRng rng(seed, {kTagData, static_cast<std::uint64_t>(i)});
        double x = 2.0 * rng.next_double() - 1.0;
        t.raw_x[i] = x;
        t.X.row(i) = fourier_features(x, K).transpose();
        t.y[i] = t.X.row(i).sum() + rng.next_gaussian();
    }
    return t;
}

Eigen::VectorXd TemperedLinRegPosterior::sample(std::uint64_t seed, std::uint64_t index) const {
    CounterRng rng(seed, {kTagTheta, index});
    Eigen::VectorXd z(dim());
    for (long j = 0; j < dim(); ++j) z[j] = rng.next_gaussian();
    return mean + chol_lower * z;
}

static TemperedLinRegPosterior posterior_from_suff(const Eigen::MatrixXd& gram, const Eigen::VectorXd& lin,
                                                   const GaussianModelSpec& spec, double lambda, long K) {
    spec.validate();
    if (!(lambda >= 0.0)) throw std::domain_error("fit_tempered_posterior: lambda must be >= 0");
    double s2 = spec.likelihood_var;
    Eigen::VectorXd m0 = spec.prior_mean_for(K);
    Eigen::MatrixXd prec = gram * (lambda / s2);
    prec.diagonal().array() += 1.0 / spec.prior_var;
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) throw std::runtime_error("fit_tempered_posterior: precision not PD");
    TemperedLinRegPosterior post;
    post.lambda = lambda;
    post.mean = llt.solve((lambda / s2) * lin + m0 / spec.prior_var);
    post.covariance = llt.solve(Eigen::MatrixXd::Identity(K, K));
    Eigen::LLT<Eigen::MatrixXd> cov_llt(post.covariance);
    if (cov_llt.info() != Eigen::Success) throw std::runtime_error("fit_tempered_posterior: covariance not PD");
    post.chol_lower = cov_llt.matrixL();
    return post;
}

TemperedLinRegPosterior fit_tempered_posterior(const RegressionTask& task, const GaussianModelSpec& spec,
                                               double lambda) {
    return posterior_from_suff(task.X.transpose() * task.X, task.X.transpose() * task.y, spec, lambda,
                               task.dim());
}

// E[ ||y - X theta||^2 ] = ||y - X mean||^2 + tr(X^T X Cov)
static double expected_sq_resid(const TemperedLinRegPosterior& post, const RegressionTask& task) {
    Eigen::VectorXd r = task.y - task.X * post.mean;
    Eigen::MatrixXd xl = task.X * post.chol_lower;
    return r.squaredNorm() + xl.squaredNorm();
}

double empirical_gibbs_loss(const TemperedLinRegPosterior& post, const RegressionTask& task,
                            const GaussianModelSpec& spec) {
    if (task.n() == 0) throw std::domain_error("empirical_gibbs_loss: empty data");
    double s2 = spec.likelihood_var;
    return 0.5 * std::log(kTwoPi * s2) + expected_sq_resid(post, task) / (2.0 * task.n() * s2);
}

double bayes_loss(const TemperedLinRegPosterior& post, const GaussianModelSpec& spec,
                  const RegressionTask& eval) {
    if (eval.n() == 0) throw std::domain_error("bayes_loss: empty eval set");
    double s2 = spec.likelihood_var;
    double acc = 0.0;
    Eigen::MatrixXd xl = eval.X * post.chol_lower; // row norms give phi^T Cov phi
    Eigen::VectorXd pred = eval.X * post.mean;
    for (long j = 0; j < eval.n(); ++j) {
        double pv = s2 + xl.row(j).squaredNorm();
        double e = eval.y[j] - pred[j];
        acc += 0.5 * std::log(kTwoPi * pv) + e * e / (2.0 * pv);
    }
    return acc / eval.n();
}

double gibbs_derivative(const TemperedLinRegPosterior& post, const RegressionTask& task,
                        const GaussianModelSpec& spec) {
    if (task.n() == 0) return 0.0;
    double s2 = spec.likelihood_var;
    // Var(||y - X theta||^2) = 4 r^T X Cov X^T r + 2 tr((X^T X Cov)^2), r = y - X mean
    Eigen::VectorXd r = task.y - task.X * post.mean;
    Eigen::VectorXd xtr = task.X.transpose() * r;
    Eigen::MatrixXd a = task.X.transpose() * task.X * post.covariance;
    double var_q = 4.0 * xtr.dot(post.covariance * xtr) + 2.0 * (a * a).trace();
    return -var_q / (4.0 * s2 * s2 * task.n());
}

// n * (-ln p(D|theta)) for one draw
static double full_data_nll(const Eigen::VectorXd& theta, const RegressionTask& task, double s2) {
    double q = (task.y - task.X * theta).squaredNorm();
    return 0.5 * task.n() * std::log(kTwoPi * s2) + q / (2.0 * s2);
}

double gibbs_derivative_mc(const TemperedLinRegPosterior& post, const RegressionTask& task,
                           const GaussianModelSpec& spec, long m, std::uint64_t seed) {
    if (task.n() == 0) return 0.0;
    if (m < 2) throw std::domain_error("gibbs_derivative_mc: need m >= 2");
    double s2 = spec.likelihood_var;
    double sum = 0.0, sum2 = 0.0;
    for (long i = 0; i < m; ++i) {
        double v = full_data_nll(post.sample(seed, static_cast<std::uint64_t>(i)), task, s2);
        sum += v;
        sum2 += v * v;
    }
    double var = (sum2 - sum * sum / m) / (m - 1);
    return -var / task.n();
}

DerivativeEstimate bayes_derivative(const RegressionTask& task, const GaussianModelSpec& spec,
                                    double lambda, const RegressionTask& eval, long m,
                                    std::uint64_t seed, int threads) {
    if (m < 100) throw std::domain_error("bayes_derivative: need m >= 100");
    if (eval.n() == 0) throw std::domain_error("bayes_derivative: empty eval set");
    TemperedLinRegPosterior post = fit_tempered_posterior(task, spec, lambda);
    const double s2 = spec.likelihood_var;
    const long ne = eval.n();
    constexpr int kBlocks = 20;

    Eigen::MatrixXd theta(m, task.dim());
    Eigen::VectorXd nll(m);
    for (long i = 0; i < m; ++i) {
        Eigen::VectorXd th = post.sample(seed, static_cast<std::uint64_t>(i));
        theta.row(i) = th.transpose();
        nll[i] = full_data_nll(th, task, s2);
    }
    std::vector<long> block_of(m);
    Eigen::VectorXd block_nll_sum = Eigen::VectorXd::Zero(kBlocks);
    Eigen::VectorXd block_count = Eigen::VectorXd::Zero(kBlocks);
    for (long i = 0; i < m; ++i) {
        long b = i * kBlocks / m;
        block_of[i] = b;
        block_nll_sum[b] += nll[i];
        block_count[b] += 1.0;
    }

    const long chunk = 512;
    const long nchunks = (ne + chunk - 1) / chunk;
    Eigen::VectorXd cg_sum = Eigen::VectorXd::Zero(nchunks);   // sum_j g_j
    Eigen::VectorXd cg_sum2 = Eigen::VectorXd::Zero(nchunks);  // sum_j g_j^2
    Eigen::VectorXd cess_min(nchunks);
    cess_min.setConstant(std::numeric_limits<double>::infinity());
    Eigen::MatrixXd cjack = Eigen::MatrixXd::Zero(nchunks, kBlocks); // sum_j leave-block-out g_j

    parallel_for(static_cast<std::size_t>(nchunks), threads, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) {
            long j0 = static_cast<long>(c) * chunk;
            long j1 = std::min(ne, j0 + chunk);
            long w = j1 - j0;
            Eigen::MatrixXd pred = theta * eval.X.middleRows(j0, w).transpose(); // m x w
            for (long jj = 0; jj < w; ++jj) {
                double yj = eval.y[j0 + jj];
                double mx = -std::numeric_limits<double>::infinity();
                for (long i = 0; i < m; ++i) {
                    double e = yj - pred(i, jj);
                    double a = -e * e / (2.0 * s2);
                    pred(i, jj) = a;
                    mx = std::max(mx, a);
                }
                double sw = 0.0, swg = 0.0, sw2 = 0.0;
                double bw[kBlocks] = {0.0}, bwg[kBlocks] = {0.0};
                for (long i = 0; i < m; ++i) {
                    double wgt = std::exp(pred(i, jj) - mx);
                    sw += wgt;
                    sw2 += wgt * wgt;
                    swg += wgt * nll[i];
                    bw[block_of[i]] += wgt;
                    bwg[block_of[i]] += wgt * nll[i];
                }
                double g = swg / sw;
                cg_sum[c] += g;
                cg_sum2[c] += g * g;
                cess_min[c] = std::min(cess_min[c], sw * sw / sw2);
                for (int b = 0; b < kBlocks; ++b) cjack(c, b) += (swg - bwg[b]) / (sw - bw[b]);
            }
        }
    });

    double g_sum = 0.0, g_sum2 = 0.0, ess = std::numeric_limits<double>::infinity();
    Eigen::VectorXd jack_sum = Eigen::VectorXd::Zero(kBlocks);
    for (long c = 0; c < nchunks; ++c) {
        g_sum += cg_sum[c];
        g_sum2 += cg_sum2[c];
        ess = std::min(ess, cess_min[c]);
        jack_sum += cjack.row(c).transpose();
    }

    double nll_mean = nll.mean();
    DerivativeEstimate out;
    out.estimate = g_sum / ne - nll_mean;
    out.ess_min = ess;

    double nll_total = nll.sum();
    Eigen::VectorXd jack_est(kBlocks);
    for (int b = 0; b < kBlocks; ++b) {
        double base_mean = (nll_total - block_nll_sum[b]) / (m - block_count[b]);
        jack_est[b] = jack_sum[b] / ne - base_mean;
    }
    double jack_bar = jack_est.mean();
    double var_jack = (kBlocks - 1.0) / kBlocks * (jack_est.array() - jack_bar).square().sum();
    double var_fresh = (g_sum2 - g_sum * g_sum / ne) / (ne - 1) / ne;
    out.stderr_value = std::sqrt(var_jack + var_fresh);
    return out;
}

double bayes_derivative_exact(const RegressionTask& task, const GaussianModelSpec& spec,
                              double lambda, const RegressionTask& eval) {
    if (eval.n() == 0) throw std::domain_error("bayes_derivative_exact: empty eval set");
    TemperedLinRegPosterior post = fit_tempered_posterior(task, spec, lambda);
    const double s2 = spec.likelihood_var;
    // Rank-one update per eval point (x, y): posterior gains one untempered
    // observation. With k = Cov phi, s_pred = s2 + phi^T k, e = y - mean^T phi:
    //   mean'  = mean + k e / s_pred
    //   Cov'   = Cov - k k^T / s_pred
    // so the Gibbs gap in closed form needs only X k and X mean.
    Eigen::MatrixXd ck = post.covariance * eval.X.transpose();      // K x ne, columns k_j
    Eigen::MatrixXd xk = task.X * ck;                               // n x ne, columns X k_j
    Eigen::VectorXd pred = eval.X * post.mean;                      // ne
    Eigen::VectorXd quad = (eval.X.transpose().array() * ck.array()).colwise().sum(); // phi^T k
    Eigen::VectorXd r = task.y - task.X * post.mean;
    double acc = 0.0;
    for (long j = 0; j < eval.n(); ++j) {
        double s_pred = s2 + quad[j];
        double e = eval.y[j] - pred[j];
        double c1 = e / s_pred;
        double xknorm = xk.col(j).squaredNorm();
        double delta = -2.0 * c1 * r.dot(xk.col(j)) + c1 * c1 * xknorm - xknorm / s_pred;
        acc += delta;
    }
    return acc / eval.n() / (2.0 * s2);
}

Eigen::VectorXd Transform::apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(v.size());
    for (long i = 0; i < v.size(); ++i) out[i] = signs[i] * v[perm[i]];
    return out;
}

TransformationSet TransformationSet::identity(long K) {
    Transform t;
    t.perm.resize(K);
    for (long i = 0; i < K; ++i) t.perm[i] = static_cast<int>(i);
    t.signs = Eigen::VectorXd::Ones(K);
    return TransformationSet{{t}};
}

TransformationSet TransformationSet::random_permutations(long K, int count, std::uint64_t seed) {
    if (count < 1) throw std::domain_error("random_permutations: count must be >= 1");
    TransformationSet set;
    for (int c = 0; c < count; ++c) {
        CounterRng rng(seed, {kTagPerm, static_cast<std::uint64_t>(c)});
        Transform t;
        t.perm.resize(K);
        for (long i = 0; i < K; ++i) t.perm[i] = static_cast<int>(i);
        for (long i = K - 1; i > 0; --i) {
            long j = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(t.perm[i], t.perm[j]);
        }
        t.signs = Eigen::VectorXd::Ones(K);
        set.transforms.push_back(std::move(t));
    }
    return set;
}

TransformationSet TransformationSet::random_sign_flips(long K, int count, std::uint64_t seed) {
    if (count < 1) throw std::domain_error("random_sign_flips: count must be >= 1");
    TransformationSet set;
    for (int c = 0; c < count; ++c) {
        CounterRng rng(seed, {kTagFlip, static_cast<std::uint64_t>(c)});
        Transform t;
        t.perm.resize(K);
        for (long i = 0; i < K; ++i) t.perm[i] = static_cast<int>(i);
        t.signs.resize(K);
        for (long i = 0; i < K; ++i) t.signs[i] = rng.next_double() < 0.5 ? -1.0 : 1.0;
        set.transforms.push_back(std::move(t));
    }
    return set;
}

void TransformationSet::validate(long K) const {
    if (transforms.empty()) throw std::domain_error("TransformationSet: empty");
    for (const auto& t : transforms) {
        if (static_cast<long>(t.perm.size()) != K || t.signs.size() != K)
            throw std::domain_error("TransformationSet: transform dimension mismatch");
        std::vector<bool> seen(K, false);
        for (int p : t.perm) {
            if (p < 0 || p >= K || seen[p]) throw std::domain_error("TransformationSet: not a permutation");
            seen[p] = true;
        }
        for (long i = 0; i < K; ++i)
            if (t.signs[i] != 1.0 && t.signs[i] != -1.0)
                throw std::domain_error("TransformationSet: signs must be +-1");
    }
}

// Sufficient statistics of the augmentation-averaged quadratic:
// n L_DA(theta) = (n/2) ln(2 pi s2) + (y^T y - 2 theta^T m1 + theta^T m2 theta) / (2 s2)
struct DaSuffStats {
    Eigen::VectorXd m1;
    Eigen::MatrixXd m2;
    double yty = 0.0;
};

static DaSuffStats da_suff_stats(const RegressionTask& task, const TransformationSet& transforms) {
    transforms.validate(task.dim());
    DaSuffStats s;
    long K = task.dim();
    s.m1 = Eigen::VectorXd::Zero(K);
    s.m2 = Eigen::MatrixXd::Zero(K, K);
    s.yty = task.y.squaredNorm();
    Eigen::MatrixXd xh(task.n(), K);
    for (const auto& t : transforms.transforms) {
        for (long i = 0; i < task.n(); ++i) xh.row(i) = t.apply(task.X.row(i).transpose()).transpose();
        s.m1 += xh.transpose() * task.y;
        s.m2 += xh.transpose() * xh;
    }
    s.m1 /= static_cast<double>(transforms.transforms.size());
    s.m2 /= static_cast<double>(transforms.transforms.size());
    return s;
}

static double da_nll_from_suff(const Eigen::VectorXd& theta, const DaSuffStats& s, long n, double s2) {
    double q = s.yty - 2.0 * theta.dot(s.m1) + theta.dot(s.m2 * theta);
    return 0.5 * n * std::log(kTwoPi * s2) + q / (2.0 * s2);
}

double da_pseudo_loss(const Eigen::VectorXd& theta, const RegressionTask& task,
                      const GaussianModelSpec& spec, const TransformationSet& transforms) {
    if (task.n() == 0) throw std::domain_error("da_pseudo_loss: empty data");
    spec.validate();
    DaSuffStats s = da_suff_stats(task, transforms);
    return da_nll_from_suff(theta, s, task.n(), spec.likelihood_var) / task.n();
}

TemperedLinRegPosterior fit_da_tempered_posterior(const RegressionTask& task, const GaussianModelSpec& spec,
                                                  const TransformationSet& transforms, double lambda) {
    DaSuffStats s = da_suff_stats(task, transforms);
    return posterior_from_suff(s.m2, s.m1, spec, lambda, task.dim());
}

namespace {
struct CovAccum {
    double mean_a = 0.0, mean_b = 0.0, cov = 0.0, se = 0.0;
};

// Sample covariance with a delta-method standard error.
CovAccum cov_with_se(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    long m = a.size();
    CovAccum r;
    r.mean_a = a.mean();
    r.mean_b = b.mean();
    Eigen::ArrayXd prod = (a.array() - r.mean_a) * (b.array() - r.mean_b);
    r.cov = prod.sum() / (m - 1);
    double pv = (prod - prod.mean()).square().sum() / (m - 1);
    r.se = std::sqrt(pv / m);
    return r;
}
} // namespace

DaCovDiagnostics da_cov_diagnostics(const TemperedLinRegPosterior& post, const RegressionTask& task,
                                    const GaussianModelSpec& spec, const TransformationSet& transforms,
                                    const RegressionTask& holdout, long m, std::uint64_t seed,
                                    int threads) {
    if (m < 200 || m % 2 != 0) throw std::domain_error("da_cov_diagnostics: need even m >= 200");
    if (holdout.n() == 0) throw std::domain_error("da_cov_diagnostics: empty holdout");
    spec.validate();
    const double s2 = spec.likelihood_var;
    const long ne = holdout.n();
    const long half = m / 2;
    DaSuffStats suff = da_suff_stats(task, transforms);

    Eigen::MatrixXd theta(m, task.dim());
    for (long i = 0; i < m; ++i) theta.row(i) = post.sample(seed, static_cast<std::uint64_t>(i)).transpose();

    // Pass 1: predictive normalizer per holdout point from the first half.
    const long chunk = 512;
    const long nchunks = (ne + chunk - 1) / chunk;
    Eigen::VectorXd pbar = Eigen::VectorXd::Zero(ne);
    const double lik_norm = 1.0 / std::sqrt(kTwoPi * s2);
    parallel_for(static_cast<std::size_t>(nchunks), threads, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) {
            long j0 = static_cast<long>(c) * chunk;
            long j1 = std::min(ne, j0 + chunk);
            long w = j1 - j0;
            Eigen::MatrixXd pred = theta.topRows(half) * holdout.X.middleRows(j0, w).transpose();
            for (long jj = 0; jj < w; ++jj) {
                double yj = holdout.y[j0 + jj];
                double acc = 0.0;
                for (long i = 0; i < half; ++i) {
                    double e = yj - pred(i, jj);
                    acc += std::exp(-e * e / (2.0 * s2));
                }
                pbar[j0 + jj] = acc * lik_norm / half;
            }
        }
    });

    // Pass 2: per-draw population loss and normalized score from the second half.
    Eigen::VectorXd a_vec(half), l_vec(half), s_vec(half);
    parallel_for(static_cast<std::size_t>(half), threads, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t ii = i0; ii < i1; ++ii) {
            long i = half + static_cast<long>(ii);
            Eigen::VectorXd th = theta.row(i).transpose();
            a_vec[ii] = da_nll_from_suff(th, suff, task.n(), s2);
            Eigen::VectorXd resid = holdout.y - holdout.X * th;
            l_vec[ii] = 0.5 * std::log(kTwoPi * s2) + resid.squaredNorm() / (2.0 * s2 * ne);
            double sacc = 0.0;
            for (long j = 0; j < ne; ++j)
                sacc += std::exp(-resid[j] * resid[j] / (2.0 * s2)) * lik_norm / pbar[j];
            s_vec[ii] = -sacc / ne;
        }
    });

    DaCovDiagnostics d;
    CovAccum g = cov_with_se(a_vec, l_vec);
    d.gibbs_grad_cov = -g.cov;
    d.gibbs_grad_cov_se = g.se;
    CovAccum b = cov_with_se(a_vec, s_vec);
    d.bayes_grad_cov = -b.cov;
    d.bayes_grad_cov_se = b.se;
    d.neg_score_mean = -s_vec.mean();
    d.neg_score_mean_se = std::sqrt((s_vec.array() + d.neg_score_mean).square().sum() / (half - 1) / half);
    return d;
}

} // namespace pacbayes
