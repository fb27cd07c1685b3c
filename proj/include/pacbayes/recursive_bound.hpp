#pragma once

// Recursive PAC-Bayes bounds over a chain of mean-field posteriors.
//
// The data is cut into T chunks by halving the remaining pool from the end,
// so every validation suffix U_t^val = S_t + ... + S_T keeps at least half
// the sample. pi_1 is trained on S_1 against the uninformed prior pi_0 and
// certified on all of S; each later pi_t is trained on S_t to shrink its
// excess loss over gamma_t times pi_{t-1}'s loss, certified on U_t^val via
// the split-kl inequality on the four-point excess support. The certified
// risk recursion is B_t = E_t + gamma_t * B_{t-1}. Every posterior
// expectation is Monte-Carlo estimated (one weight draw per datum) and
// replaced by its kl upper confidence bound before entering a bound, with
// the MC budget delta' split over the 1 + 3(T-1) estimated quantities.
//
// Three one-shot baselines are included: an uninformed-prior bound on all
// data, an informed prior trained on half the data, and the informed prior
// plus an excess certificate against a deterministic reference hypothesis.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pacbayes/concentration.hpp"
#include "pacbayes/prob_model.hpp"

namespace pacbayes {

struct SplitPlan {
    std::vector<long> chunk_sizes; // |S_1| ... |S_T|

    long step_count() const { return static_cast<long>(chunk_sizes.size()); }
    long total() const;
    long n_train(long t) const; // sum of |S_s| for s <= t, t is 1-based
    long n_val(long t) const;   // sum of |S_s| for s >= t
    void validate() const;
};

// Halve the remaining pool at each step from the end; the earliest chunk
// absorbs rounding. (60000, 4) -> (7500, 7500, 15000, 30000).
SplitPlan geometric_split(long n, long T);

// |S_t| / n_val_t: the effective KL downweighting of step t's objective.
double implied_temperature(const SplitPlan& plan, long t);

// Four-point excess support (-gamma, 0, 1-gamma, 1) with segment widths
// (gamma, 1-gamma, gamma). Requires gamma in [1e-6, 1-1e-6].
DiscreteSupport excess_support(double gamma);

struct ExcessSegments {
    // empirical means of 1[f >= b_j] for thresholds (0, 1-gamma, 1)
    double p1 = 0.0, p2 = 0.0, p3 = 0.0;
    double mean_excess = 0.0; // average of f itself
};

// One weight draw per datum from pi_t (stream keyed by h_seed and row);
// f_i = 0-1 loss of the draw minus gamma times reference_losses[i].
// reference_losses must align with data rows.
ExcessSegments excess_empiricals(const ClassifierArch& arch, const MeanFieldGaussian& pi_t,
                                 const std::vector<double>& reference_losses,
                                 const LabeledDataset& data, double gamma, std::uint64_t h_seed,
                                 long threads = 1);

struct ChainHyper {
    TrainHyper trainer;
    SurrogateConfig surrogate;
    ConfidenceBudget budget;
    double sigma0 = 0.03;
    long threads = 1;
};

struct PosteriorChain {
    ClassifierArch arch;
    long T = 1;
    std::vector<double> gammas; // gamma_2 ... gamma_T (empty for T = 1)
    SplitPlan plan;
    std::string dataset_descriptor;
    std::uint64_t split_seed = 0;
    std::uint64_t init_seed = 0;
    std::uint64_t train_seed = 0;
    std::vector<std::uint64_t> hprime_seeds; // per step t = 2..T
    double sigma0 = 0.03;
    SurrogateConfig surrogate;
    std::vector<MeanFieldGaussian> posteriors; // pi_0 ... pi_T

    void validate() const;
};

struct TrainStepDiagnostics {
    long t = 0;
    double final_objective = 0.0;
    long steps_rejected = 0;
};

// Sequential chain training; each pi_t sees only S_t and pi_{t-1}. The
// step-t surrogate computes its data term on S_t while the complexity
// denominator is n_val_t.
PosteriorChain train_chain(const ClassifierArch& arch, const LabeledDataset& data, long T,
                           double gamma, const ChainHyper& hyper, std::uint64_t seed,
                           const std::string& dataset_descriptor = "",
                           std::vector<TrainStepDiagnostics>* diagnostics = nullptr);

struct StepReport {
    long t = 0;
    long n_val = 0;
    double f_hat = 0.0; // MC-corrected empirical quantity entering the bound
    double kl_over_nval = 0.0;
    double e_t = 0.0;
    double b_t = 0.0;
    double implied_temp = 1.0;
    double test01 = std::numeric_limits<double>::quiet_NaN();
    double gamma_margin = 0.0; // (1 - E_t / B_{t-1}) - gamma_t, t >= 2
};

struct BoundReport {
    std::string method = "recursive";
    std::vector<StepReport> steps;
    double delta = 0.025;
    double delta_prime = 0.01;
    double final_bound = 1.0;
    bool valid = true;
};

// B_t = E_t + gamma_t * B_{t-1}.
double recursive_combiner(double e_t, double gamma_t, double b_prev);

// Re-derives the chunking from the chain's split seed, Monte-Carlo
// estimates every posterior quantity with eval_rounds draws per datum, and
// assembles the recursion. test (optional) adds a held-out 0-1 column.
BoundReport evaluate_bound_chain(const PosteriorChain& chain, const LabeledDataset& data,
                                 const ConfidenceBudget& budget, long eval_rounds,
                                 std::uint64_t eval_seed,
                                 const LabeledDataset* test = nullptr, long threads = 1);

enum class BaselineMethod { Uninformed, Informed, InformedExcess };

// One-shot certificates; see the header comment. Each returns a
// single-step report whose final_bound is the certified 0-1 risk.
BoundReport baseline(BaselineMethod method, const ClassifierArch& arch,
                     const LabeledDataset& data, const ChainHyper& hyper, std::uint64_t seed,
                     const LabeledDataset* test = nullptr);

std::string chain_to_json(const PosteriorChain& chain);
PosteriorChain chain_from_json(const std::string& text);

// CSV with header t,n_val,F_hat,kl_over_nval,E_t,B_t,implied_T,test01.
std::string report_to_csv(const BoundReport& report);
// JSON summary {method, delta, delta_prime, final_bound, valid, ...}.
std::string report_summary_json(const BoundReport& report);

} // namespace pacbayes
