#pragma once

// Mean-field Gaussian distributions over classifier weights.
//
// A posterior is a diagonal Gaussian over the flattened parameter vector of
// a small classifier (linear softmax, or one ReLU hidden layer). Training
// minimizes a PAC-Bayes surrogate objective by SGD with momentum on
// reparameterized samples: w = means + exp(log_stds) * eps with one eps per
// mini-batch, so the gradient of the sampled objective is an unbiased
// gradient of the expected one. Evaluation draws one fresh weight sample
// per datum from counter-based streams, which keeps multi-threaded runs
// bit-reproducible.
//
// Two objectives are supported:
//   - bounded cross-entropy + sqrt((KL + C) / (2 n)): the McAllester
//     relaxation of the kl bound;
//   - the smoothed split-kl excess surrogate: the excess of the sampled
//     hypothesis over gamma times a frozen reference loss sequence,
//     decomposed into sigmoid segment indicators, plus
//     (1 + gamma) * sqrt((KL + C) / (2 n)).

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "pacbayes/dataset.hpp"
#include "pacbayes/rng.hpp"

namespace pacbayes {

enum class ArchKind { LinearSoftmax, OneHidden };

struct ClassifierArch {
    ArchKind kind = ArchKind::LinearSoftmax;
    long input_dim = 0;
    long hidden_dim = 0; // 0 for linear
    long class_count = 2;

    long param_count() const;
    void validate() const;
};

struct MeanFieldGaussian {
    Eigen::VectorXd means;
    Eigen::VectorXd log_stds;

    long dim() const { return means.size(); }
    void validate(long expected_dim) const;
};

struct SurrogateConfig {
    double c1 = 5.0;    // sigmoid sharpness of the smoothed indicator
    double c2 = 5.0;    // softmax temperature of the bounded cross-entropy
    double p_min = 1e-5; // probability floor
    void validate() const;
};

// Means drawn uniformly in +-1/sqrt(fan_in) per layer, all stds = sigma0.
MeanFieldGaussian init_posterior(const ClassifierArch& arch, double sigma0, std::uint64_t seed);

struct WeightSample {
    Eigen::VectorXd weights;
    Eigen::VectorXd noise; // the eps used, retained for the backward pass
};

// w = means + exp(log_stds) * eps, eps standard normal from rng.
WeightSample sample_weights(const MeanFieldGaussian& dist, CounterRng& rng);

// Class scores; deterministic in (weights, x).
Eigen::VectorXd forward(const ClassifierArch& arch, const Eigen::VectorXd& weights,
                        const Eigen::VectorXd& x);

// d objective / d weights given d objective / d scores.
Eigen::VectorXd backward(const ClassifierArch& arch, const Eigen::VectorXd& weights,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& score_grad);

// -ln(max(softmax_c2(scores)[label], p_min)) / ln(1/p_min), in [0,1].
// grad (optional) is with respect to the scores; zero where the floor binds.
double bounded_cross_entropy(const Eigen::VectorXd& scores, int label, const SurrogateConfig& cfg,
                             Eigen::VectorXd* grad = nullptr);

// Increasing logistic approximation of 1[z >= z0].
double smooth_indicator(double z, double z0, double c1);

// Sum of per-coordinate Gaussian KLs. Optional gradients with respect to
// q's means and log_stds.
double gaussian_kl(const MeanFieldGaussian& q, const MeanFieldGaussian& p,
                   Eigen::VectorXd* grad_means = nullptr,
                   Eigen::VectorXd* grad_log_stds = nullptr);

enum class ObjectiveKind { BoundedCe, Excess };

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::BoundedCe;
    MeanFieldGaussian prior;       // KL reference
    double complexity_log = 0.0;   // C in sqrt((KL + C) / (2 denominator))
    long denominator = 1;          // n in the same expression
    double gamma = 0.5;            // excess only
    std::vector<double> reference_losses; // excess only: frozen 0-1 losses, aligned with rows
    SurrogateConfig surrogate;
    void validate(long data_rows) const;
};

// Surrogate objective and its reparameterized gradient at fixed noise eps.
// rows indexes the mini-batch within data. Either gradient output may be
// null.
double surrogate_objective(const ClassifierArch& arch, const MeanFieldGaussian& dist,
                           const LabeledDataset& data, const std::vector<long>& rows,
                           const ObjectiveSpec& spec, const Eigen::VectorXd& eps,
                           Eigen::VectorXd* grad_means, Eigen::VectorXd* grad_log_stds);

struct TrainHyper {
    long epochs = 50;
    long batch_size = 250;
    double learning_rate = 0.001;
    double momentum = 0.95;
    void validate() const;
};

struct SgdState {
    Eigen::VectorXd vel_means, vel_log_stds;
    long steps_taken = 0;
    long steps_rejected = 0; // non-finite gradients leave parameters untouched
    double last_objective = 0.0;
};

// One SGD-with-momentum step on (means, log_stds) for the given batch.
void objective_grad_step(const ClassifierArch& arch, MeanFieldGaussian& dist,
                         const LabeledDataset& data, const std::vector<long>& rows,
                         const ObjectiveSpec& spec, const Eigen::VectorXd& eps,
                         const TrainHyper& hyper, SgdState& state);

// Full training loop: per-epoch shuffle and one weight sample per
// mini-batch, both from counter streams under seed. Deterministic.
MeanFieldGaussian train_posterior(const ClassifierArch& arch, const MeanFieldGaussian& init,
                                  const LabeledDataset& data, const ObjectiveSpec& spec,
                                  const TrainHyper& hyper, std::uint64_t seed,
                                  SgdState* state_out = nullptr);

// Point-estimate ERM on the bounded cross-entropy data term alone (no KL,
// no sampling); used for excess-loss reference hypotheses.
Eigen::VectorXd train_erm_weights(const ClassifierArch& arch, const Eigen::VectorXd& init,
                                  const LabeledDataset& data, const SurrogateConfig& cfg,
                                  const TrainHyper& hyper, std::uint64_t seed);

// One fresh weight draw per datum (stream keyed by seed and row index);
// entry i is the 0-1 loss of that draw on datum i.
std::vector<double> sampled_zero_one_losses(const ClassifierArch& arch,
                                            const MeanFieldGaussian& dist,
                                            const LabeledDataset& data, std::uint64_t seed,
                                            long threads = 1);

// 0-1 loss of one fixed weight vector over the dataset.
double zero_one_loss(const ClassifierArch& arch, const Eigen::VectorXd& weights,
                     const LabeledDataset& data);

// JSON round-trip; doubles survive bit-exactly.
std::string posterior_to_json(const ClassifierArch& arch, const MeanFieldGaussian& dist);
void posterior_from_json(const std::string& text, ClassifierArch& arch, MeanFieldGaussian& dist);

} // namespace pacbayes
