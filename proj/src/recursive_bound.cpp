#include "pacbayes/recursive_bound.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace pacbayes {

namespace {

constexpr std::uint64_t kTagSplit = 0x73706c74;
constexpr std::uint64_t kTagInit = 0x696e6974;
constexpr std::uint64_t kTagTrain = 0x7472616e;
constexpr std::uint64_t kTagHprime = 0x68707273;
constexpr std::uint64_t kTagRound = 0x726f756e;
constexpr std::uint64_t kTagTest = 0x74657374;
constexpr std::uint64_t kTagErm = 0x65726d21;

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

} // namespace

long SplitPlan::total() const { return std::accumulate(chunk_sizes.begin(), chunk_sizes.end(), 0L); }

long SplitPlan::n_train(long t) const {
    if (t < 1 || t > step_count()) throw std::domain_error("SplitPlan: step index out of range");
    return std::accumulate(chunk_sizes.begin(), chunk_sizes.begin() + t, 0L);
}

long SplitPlan::n_val(long t) const {
    if (t < 1 || t > step_count()) throw std::domain_error("SplitPlan: step index out of range");
    return std::accumulate(chunk_sizes.begin() + (t - 1), chunk_sizes.end(), 0L);
}

void SplitPlan::validate() const {
    if (chunk_sizes.empty()) throw std::domain_error("SplitPlan: empty plan");
    for (long s : chunk_sizes)
        if (s < 1) throw std::domain_error("SplitPlan: every chunk must hold at least one point");
}

SplitPlan geometric_split(long n, long T) {
    if (T < 1) throw std::domain_error("geometric_split: depth must be >= 1");
    if (n < T) throw std::domain_error("geometric_split: need at least one point per chunk");
    SplitPlan plan;
    plan.chunk_sizes.assign(size_t(T), 0);
    long remaining = n;
    for (long t = T; t >= 2; --t) {
        long half = (remaining + 1) / 2; // ceil; the earliest chunk absorbs rounding
        plan.chunk_sizes[size_t(t - 1)] = half;
        remaining -= half;
    }
    plan.chunk_sizes[0] = remaining;
    plan.validate();
    return plan;
}

double implied_temperature(const SplitPlan& plan, long t) {
    plan.validate();
    return double(plan.chunk_sizes[size_t(t - 1)]) / double(plan.n_val(t));
}

DiscreteSupport excess_support(double gamma) {
    if (!(gamma >= 1e-6) || !(gamma <= 1.0 - 1e-6))
        throw std::domain_error("excess_support: gamma must lie in [1e-6, 1-1e-6]");
    return DiscreteSupport({-gamma, 0.0, 1.0 - gamma, 1.0});
}

ExcessSegments excess_empiricals(const ClassifierArch& arch, const MeanFieldGaussian& pi_t,
                                 const std::vector<double>& reference_losses,
                                 const LabeledDataset& data, double gamma, std::uint64_t h_seed,
                                 long threads) {
    if (data.n() == 0) throw std::domain_error("excess_empiricals: empty dataset");
    if (static_cast<long>(reference_losses.size()) != data.n())
        throw std::domain_error("excess_empiricals: reference losses must align with the dataset");
    auto h_losses = sampled_zero_one_losses(arch, pi_t, data, h_seed, threads);
    ExcessSegments seg;
    const double thresholds[3] = {0.0, 1.0 - gamma, 1.0};
    for (long i = 0; i < data.n(); ++i) {
        double f = h_losses[size_t(i)] - gamma * reference_losses[size_t(i)];
        seg.mean_excess += f;
        if (f >= thresholds[0]) seg.p1 += 1.0;
        if (f >= thresholds[1]) seg.p2 += 1.0;
        if (f >= thresholds[2]) seg.p3 += 1.0;
    }
    double inv = 1.0 / double(data.n());
    seg.p1 *= inv;
    seg.p2 *= inv;
    seg.p3 *= inv;
    seg.mean_excess *= inv;
    return seg;
}

void PosteriorChain::validate() const {
    arch.validate();
    if (T < 1) throw std::domain_error("PosteriorChain: T must be >= 1");
    if (static_cast<long>(posteriors.size()) != T + 1)
        throw std::domain_error("PosteriorChain: need T + 1 posteriors (pi_0 .. pi_T)");
    if (static_cast<long>(gammas.size()) != T - 1)
        throw std::domain_error("PosteriorChain: need T - 1 gammas");
    if (static_cast<long>(hprime_seeds.size()) != T - 1)
        throw std::domain_error("PosteriorChain: need T - 1 reference-draw seeds");
    if (plan.step_count() != T) throw std::domain_error("PosteriorChain: plan depth mismatch");
    plan.validate();
    for (double g : gammas)
        if (!(g >= 1e-6) || !(g <= 1.0 - 1e-6))
            throw std::domain_error("PosteriorChain: gamma out of range");
    for (const auto& p : posteriors) p.validate(arch.param_count());
    surrogate.validate();
}

PosteriorChain train_chain(const ClassifierArch& arch, const LabeledDataset& data, long T,
                           double gamma, const ChainHyper& hyper, std::uint64_t seed,
                           const std::string& dataset_descriptor,
                           std::vector<TrainStepDiagnostics>* diagnostics) {
    arch.validate();
    hyper.budget.validate();
    hyper.trainer.validate();
    if (T < 1) throw std::domain_error("train_chain: T must be >= 1");

    PosteriorChain chain;
    chain.arch = arch;
    chain.T = T;
    chain.gammas.assign(size_t(T - 1), gamma);
    chain.plan = geometric_split(data.n(), T);
    chain.dataset_descriptor = dataset_descriptor;
    chain.split_seed = derive_key(seed, {kTagSplit});
    chain.init_seed = derive_key(seed, {kTagInit});
    chain.train_seed = seed;
    chain.sigma0 = hyper.sigma0;
    chain.surrogate = hyper.surrogate;
    for (long t = 2; t <= T; ++t)
        chain.hprime_seeds.push_back(derive_key(seed, {kTagHprime, std::uint64_t(t)}));

    auto chunks = split_dataset(data, chain.plan.chunk_sizes, chain.split_seed);
    const long n = data.n();
    const double delta = hyper.budget.delta;

    chain.posteriors.push_back(init_posterior(arch, hyper.sigma0, chain.init_seed));
    if (diagnostics) diagnostics->clear();

    // pi_1: plain bounded-cross-entropy surrogate on S_1; the certificate
    // is later evaluated on all of S, so the denominator stays n.
    {
        ObjectiveSpec spec;
        spec.kind = ObjectiveKind::BoundedCe;
        spec.prior = chain.posteriors[0];
        spec.complexity_log = std::log(2.0 * double(T) * std::sqrt(double(n)) / delta);
        spec.denominator = n;
        spec.surrogate = hyper.surrogate;
        SgdState state;
        chain.posteriors.push_back(train_posterior(arch, chain.posteriors[0], chunks[0], spec,
                                                   hyper.trainer,
                                                   derive_key(seed, {kTagTrain, 1}), &state));
        if (diagnostics) diagnostics->push_back({1, state.last_objective, state.steps_rejected});
    }

    // pi_t: smoothed split-kl excess surrogate on S_t against frozen
    // pi_{t-1} reference losses, denominator n_val_t.
    for (long t = 2; t <= T; ++t) {
        const LabeledDataset& st = chunks[size_t(t - 1)];
        const long nv = chain.plan.n_val(t);
        ObjectiveSpec spec;
        spec.kind = ObjectiveKind::Excess;
        spec.prior = chain.posteriors[size_t(t - 1)];
        spec.complexity_log = std::log(6.0 * double(T) * std::sqrt(double(nv)) / delta);
        spec.denominator = nv;
        spec.gamma = gamma;
        spec.reference_losses = sampled_zero_one_losses(arch, chain.posteriors[size_t(t - 1)], st,
                                                        chain.hprime_seeds[size_t(t - 2)],
                                                        hyper.threads);
        spec.surrogate = hyper.surrogate;
        SgdState state;
        chain.posteriors.push_back(train_posterior(arch, chain.posteriors[size_t(t - 1)], st, spec,
                                                   hyper.trainer,
                                                   derive_key(seed, {kTagTrain, std::uint64_t(t)}),
                                                   &state));
        if (diagnostics) diagnostics->push_back({t, state.last_objective, state.steps_rejected});
    }
    chain.validate();
    return chain;
}

double recursive_combiner(double e_t, double gamma_t, double b_prev) {
    return e_t + gamma_t * b_prev;
}

namespace {

// Mean sampled 0-1 loss over rounds fresh per-datum draws.
double mc_loss(const ClassifierArch& arch, const MeanFieldGaussian& dist,
               const LabeledDataset& data, std::uint64_t seed, long rounds, long threads) {
    double acc = 0.0;
    for (long r = 0; r < rounds; ++r)
        acc += mean_of(sampled_zero_one_losses(arch, dist, data,
                                               derive_key(seed, {kTagRound, std::uint64_t(r)}),
                                               threads));
    return acc / double(rounds);
}

} // namespace

BoundReport evaluate_bound_chain(const PosteriorChain& chain, const LabeledDataset& data,
                                 const ConfidenceBudget& budget, long eval_rounds,
                                 std::uint64_t eval_seed, const LabeledDataset* test,
                                 long threads) {
    chain.validate();
    budget.validate();
    if (eval_rounds < 1) throw std::domain_error("evaluate_bound_chain: need at least one round");
    if (data.n() != chain.plan.total())
        throw std::domain_error("evaluate_bound_chain: dataset size does not match the split plan");

    auto chunks = split_dataset(data, chain.plan.chunk_sizes, chain.split_seed);
    const long T = chain.T;
    const long n = data.n();
    const double delta = budget.delta;
    const double delta_q = budget.per_quantity(int(T));

    BoundReport report;
    report.method = "recursive";
    report.delta = budget.delta;
    report.delta_prime = budget.delta_prime;

    double b_prev = 0.0;
    for (long t = 1; t <= T; ++t) {
        StepReport step;
        step.t = t;
        step.implied_temp = implied_temperature(chain.plan, t);
        const MeanFieldGaussian& pi_t = chain.posteriors[size_t(t)];
        const MeanFieldGaussian& pi_prev = chain.posteriors[size_t(t - 1)];
        double kl = gaussian_kl(pi_t, pi_prev);
        if (!std::isfinite(kl)) report.valid = false;

        if (t == 1) {
            step.n_val = n;
            step.kl_over_nval = kl / double(n);
            double raw = mc_loss(chain.arch, pi_t, data,
                                 derive_key(eval_seed, {std::uint64_t(t)}), eval_rounds, threads);
            step.f_hat = mc_correction_bound(raw, eval_rounds * n, delta_q);
            step.e_t = pac_bayes_kl_bound(step.f_hat, kl, n, delta / double(T));
            step.b_t = step.e_t;
        } else {
            std::vector<LabeledDataset> suffix(chunks.begin() + (t - 1), chunks.end());
            LabeledDataset val = concat_datasets(suffix);
            const long nv = val.n();
            step.n_val = nv;
            step.kl_over_nval = kl / double(nv);
            const double gamma = chain.gammas[size_t(t - 2)];
            const double thresholds[3] = {0.0, 1.0 - gamma, 1.0};
            double counts[3] = {0.0, 0.0, 0.0};
            double raw_mean = 0.0;
            for (long r = 0; r < eval_rounds; ++r) {
                auto hl = sampled_zero_one_losses(
                    chain.arch, pi_t, val,
                    derive_key(eval_seed, {std::uint64_t(t), std::uint64_t(r)}), threads);
                auto hpl = sampled_zero_one_losses(
                    chain.arch, pi_prev, val,
                    derive_key(chain.hprime_seeds[size_t(t - 2)], {kTagRound, std::uint64_t(r)}),
                    threads);
                for (long i = 0; i < nv; ++i) {
                    double f = hl[size_t(i)] - gamma * hpl[size_t(i)];
                    raw_mean += f;
                    for (int j = 0; j < 3; ++j)
                        if (f >= thresholds[j]) counts[j] += 1.0;
                }
            }
            const double m = double(eval_rounds) * double(nv);
            raw_mean /= m;
            auto support = excess_support(gamma);
            std::vector<double> corrected(3);
            for (int j = 0; j < 3; ++j)
                corrected[size_t(j)] = mc_correction_bound(counts[j] / m, long(m), delta_q);
            step.f_hat = support.b0();
            for (int j = 0; j < 3; ++j)
                step.f_hat += support.alphas()[size_t(j)] * corrected[size_t(j)];
            step.e_t = pac_bayes_split_kl_bound(support, corrected, kl, nv, delta / double(T));
            step.b_t = recursive_combiner(step.e_t, gamma, b_prev);
            step.gamma_margin = (1.0 - step.e_t / b_prev) - gamma;
        }

        if (test)
            step.test01 = mc_loss(chain.arch, pi_t, *test,
                                  derive_key(eval_seed, {kTagTest, std::uint64_t(t)}), 1, threads);
        b_prev = step.b_t;
        report.steps.push_back(step);
    }
    report.final_bound = b_prev;
    return report;
}

BoundReport baseline(BaselineMethod method, const ClassifierArch& arch, const LabeledDataset& data,
                     const ChainHyper& hyper, std::uint64_t seed, const LabeledDataset* test) {
    arch.validate();
    hyper.budget.validate();
    const long n = data.n();
    const double delta = hyper.budget.delta;
    const double delta_prime = hyper.budget.delta_prime;
    const std::uint64_t eval_seed = derive_key(seed, {kTagRound, 0xb});

    BoundReport report;
    report.delta = delta;
    report.delta_prime = delta_prime;
    StepReport step;
    step.t = 1;

    MeanFieldGaussian pi0 = init_posterior(arch, hyper.sigma0, derive_key(seed, {kTagInit}));

    if (method == BaselineMethod::Uninformed) {
        report.method = "uninformed";
        ObjectiveSpec spec;
        spec.kind = ObjectiveKind::BoundedCe;
        spec.prior = pi0;
        spec.complexity_log = std::log(2.0 * std::sqrt(double(n)) / delta);
        spec.denominator = n;
        spec.surrogate = hyper.surrogate;
        auto rho = train_posterior(arch, pi0, data, spec, hyper.trainer,
                                   derive_key(seed, {kTagTrain, 1}));
        double kl = gaussian_kl(rho, pi0);
        double raw = mean_of(sampled_zero_one_losses(arch, rho, data, eval_seed, hyper.threads));
        step.n_val = n;
        step.f_hat = mc_correction_bound(raw, n, delta_prime);
        step.kl_over_nval = kl / double(n);
        step.e_t = pac_bayes_kl_bound(step.f_hat, kl, n, delta);
        step.b_t = step.e_t;
        if (test)
            step.test01 = mean_of(sampled_zero_one_losses(arch, rho, *test,
                                                          derive_key(eval_seed, {kTagTest}),
                                                          hyper.threads));
        report.steps.push_back(step);
        report.final_bound = step.b_t;
        return report;
    }

    // both informed variants: pi_1 on the first half, certificate on the second
    auto plan = geometric_split(n, 2);
    auto chunks = split_dataset(data, plan.chunk_sizes, derive_key(seed, {kTagSplit}));
    const LabeledDataset& s1 = chunks[0];
    const LabeledDataset& s2 = chunks[1];
    const long n2 = s2.n();

    ObjectiveSpec prior_spec;
    prior_spec.kind = ObjectiveKind::BoundedCe;
    prior_spec.prior = pi0;
    prior_spec.complexity_log = std::log(2.0 * std::sqrt(double(s1.n())) / delta);
    prior_spec.denominator = s1.n();
    prior_spec.surrogate = hyper.surrogate;
    auto pi1 = train_posterior(arch, pi0, s1, prior_spec, hyper.trainer,
                               derive_key(seed, {kTagTrain, 1}));

    if (method == BaselineMethod::Informed) {
        report.method = "informed";
        ObjectiveSpec spec;
        spec.kind = ObjectiveKind::BoundedCe;
        spec.prior = pi1;
        spec.complexity_log = std::log(2.0 * std::sqrt(double(n2)) / delta);
        spec.denominator = n2;
        spec.surrogate = hyper.surrogate;
        auto rho = train_posterior(arch, pi1, s2, spec, hyper.trainer,
                                   derive_key(seed, {kTagTrain, 2}));
        double kl = gaussian_kl(rho, pi1);
        double raw = mean_of(sampled_zero_one_losses(arch, rho, s2, eval_seed, hyper.threads));
        step.n_val = n2;
        step.f_hat = mc_correction_bound(raw, n2, delta_prime);
        step.kl_over_nval = kl / double(n2);
        step.e_t = pac_bayes_kl_bound(step.f_hat, kl, n2, delta);
        step.b_t = step.e_t;
        if (test)
            step.test01 = mean_of(sampled_zero_one_losses(arch, rho, *test,
                                                          derive_key(eval_seed, {kTagTest}),
                                                          hyper.threads));
        report.steps.push_back(step);
        report.final_bound = step.b_t;
        return report;
    }

    // informed_excess: certify the excess over a deterministic reference
    // hypothesis (ternary support) plus a single-hypothesis bound on the
    // reference, each at delta / 2; delta' splits over the two estimated
    // excess segments.
    report.method = "informed_excess";
    Eigen::VectorXd h_star = train_erm_weights(arch, pi1.means, s1, hyper.surrogate, hyper.trainer,
                                               derive_key(seed, {kTagErm}));
    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::Excess;
    spec.prior = pi1;
    spec.gamma = 1.0;
    spec.complexity_log = std::log(4.0 * std::sqrt(double(n2)) / (delta / 2.0));
    spec.denominator = n2;
    spec.surrogate = hyper.surrogate;
    spec.reference_losses.resize(size_t(n2));
    for (long i = 0; i < n2; ++i) {
        Eigen::VectorXd scores = forward(arch, h_star, s2.features.row(i).transpose());
        long best = 0;
        scores.maxCoeff(&best);
        spec.reference_losses[size_t(i)] = best == s2.labels[size_t(i)] ? 0.0 : 1.0;
    }
    auto rho = train_posterior(arch, pi1, s2, spec, hyper.trainer, derive_key(seed, {kTagTrain, 2}));

    double kl = gaussian_kl(rho, pi1);
    auto h_losses = sampled_zero_one_losses(arch, rho, s2, eval_seed, hyper.threads);
    double p1 = 0.0, p2 = 0.0;
    for (long i = 0; i < n2; ++i) {
        double f = h_losses[size_t(i)] - spec.reference_losses[size_t(i)];
        if (f >= 0.0) p1 += 1.0;
        if (f >= 1.0) p2 += 1.0;
    }
    p1 /= double(n2);
    p2 /= double(n2);
    DiscreteSupport ternary({-1.0, 0.0, 1.0});
    std::vector<double> corrected{mc_correction_bound(p1, n2, delta_prime / 2.0),
                                  mc_correction_bound(p2, n2, delta_prime / 2.0)};
    double excess_bound = pac_bayes_split_kl_bound(ternary, corrected, kl, n2, delta / 2.0);
    double ref_emp = 0.0;
    for (double v : spec.reference_losses) ref_emp += v;
    ref_emp /= double(n2);
    double ref_bound = kl_inv_upper(ref_emp, std::log(2.0 / delta) / double(n2));

    step.n_val = n2;
    step.f_hat = -1.0 + corrected[0] + corrected[1];
    step.kl_over_nval = kl / double(n2);
    step.e_t = excess_bound;
    step.b_t = excess_bound + ref_bound;
    if (test)
        step.test01 = mean_of(sampled_zero_one_losses(arch, rho, *test,
                                                      derive_key(eval_seed, {kTagTest}),
                                                      hyper.threads));
    report.steps.push_back(step);
    report.final_bound = step.b_t;
    return report;
}

std::string chain_to_json(const PosteriorChain& chain) {
    chain.validate();
    nlohmann::json j;
    j["T"] = chain.T;
    j["gammas"] = chain.gammas;
    j["split_sizes"] = chain.plan.chunk_sizes;
    j["dataset"] = chain.dataset_descriptor;
    j["seeds"] = {{"split", chain.split_seed},
                  {"init", chain.init_seed},
                  {"train", chain.train_seed},
                  {"hprime", chain.hprime_seeds}};
    j["sigma0"] = chain.sigma0;
    j["surrogate"] = {{"c1", chain.surrogate.c1},
                      {"c2", chain.surrogate.c2},
                      {"p_min", chain.surrogate.p_min}};
    j["arch"] = {{"kind", chain.arch.kind == ArchKind::LinearSoftmax ? "linear-softmax"
                                                                     : "one-hidden"},
                 {"input_dim", chain.arch.input_dim},
                 {"hidden_dim", chain.arch.hidden_dim},
                 {"class_count", chain.arch.class_count}};
    j["posteriors"] = nlohmann::json::array();
    for (const auto& p : chain.posteriors) {
        nlohmann::json jp;
        jp["means"] = std::vector<double>(p.means.data(), p.means.data() + p.dim());
        jp["log_stds"] = std::vector<double>(p.log_stds.data(), p.log_stds.data() + p.dim());
        j["posteriors"].push_back(std::move(jp));
    }
    return j.dump();
}

PosteriorChain chain_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    PosteriorChain chain;
    chain.T = j.at("T").get<long>();
    chain.gammas = j.at("gammas").get<std::vector<double>>();
    chain.plan.chunk_sizes = j.at("split_sizes").get<std::vector<long>>();
    chain.dataset_descriptor = j.at("dataset").get<std::string>();
    chain.split_seed = j.at("seeds").at("split").get<std::uint64_t>();
    chain.init_seed = j.at("seeds").at("init").get<std::uint64_t>();
    chain.train_seed = j.at("seeds").at("train").get<std::uint64_t>();
    chain.hprime_seeds = j.at("seeds").at("hprime").get<std::vector<std::uint64_t>>();
    chain.sigma0 = j.at("sigma0").get<double>();
    chain.surrogate.c1 = j.at("surrogate").at("c1").get<double>();
    chain.surrogate.c2 = j.at("surrogate").at("c2").get<double>();
    chain.surrogate.p_min = j.at("surrogate").at("p_min").get<double>();
    std::string kind = j.at("arch").at("kind").get<std::string>();
    if (kind == "linear-softmax")
        chain.arch.kind = ArchKind::LinearSoftmax;
    else if (kind == "one-hidden")
        chain.arch.kind = ArchKind::OneHidden;
    else
        throw std::domain_error("chain_from_json: unknown architecture kind " + kind);
    chain.arch.input_dim = j.at("arch").at("input_dim").get<long>();
    chain.arch.hidden_dim = j.at("arch").at("hidden_dim").get<long>();
    chain.arch.class_count = j.at("arch").at("class_count").get<long>();
    for (const auto& jp : j.at("posteriors")) {
        MeanFieldGaussian p;
        auto means = jp.at("means").get<std::vector<double>>();
        auto log_stds = jp.at("log_stds").get<std::vector<double>>();
        p.means = Eigen::Map<const Eigen::VectorXd>(means.data(), long(means.size()));
        p.log_stds = Eigen::Map<const Eigen::VectorXd>(log_stds.data(), long(log_stds.size()));
        chain.posteriors.push_back(std::move(p));
    }
    chain.validate();
    return chain;
}

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string report_to_csv(const BoundReport& report) {
    std::string out = "t,n_val,F_hat,kl_over_nval,E_t,B_t,implied_T,test01\n";
    for (const auto& s : report.steps) {
        out += std::to_string(s.t) + "," + std::to_string(s.n_val) + "," + fmt17(s.f_hat) + "," +
               fmt17(s.kl_over_nval) + "," + fmt17(s.e_t) + "," + fmt17(s.b_t) + "," +
               fmt17(s.implied_temp) + "," + fmt17(s.test01) + "\n";
    }
    return out;
}

std::string report_summary_json(const BoundReport& report) {
    nlohmann::json j;
    j["method"] = report.method;
    j["delta"] = report.delta;
    j["delta_prime"] = report.delta_prime;
    j["final_bound"] = report.final_bound;
    j["valid"] = report.valid;
    nlohmann::json margins = nlohmann::json::array();
    for (const auto& s : report.steps)
        if (s.t >= 2) margins.push_back(s.gamma_margin);
    j["gamma_margins"] = margins;
    return j.dump();
}

} // namespace pacbayes
