#include "pacbayes/prob_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pacbayes/parallel.hpp"

namespace pacbayes {

namespace {

constexpr std::uint64_t kTagInit = 0x696e6974;    // posterior initialization
constexpr std::uint64_t kTagShuffle = 0x73686621; // per-epoch batch order
constexpr std::uint64_t kTagNoise = 0x6e6f6973;   // per-batch weight noise
constexpr std::uint64_t kTagEval = 0x6576616c;    // per-datum evaluation draws

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;

struct LinearView {
    ConstMap w;
    Eigen::Map<const Eigen::VectorXd> b;
};

LinearView layer_view(const double* base, long out_dim, long in_dim) {
    return {ConstMap(base, out_dim, in_dim),
            Eigen::Map<const Eigen::VectorXd>(base + out_dim * in_dim, out_dim)};
}

} // namespace

long ClassifierArch::param_count() const {
    if (kind == ArchKind::LinearSoftmax) return class_count * (input_dim + 1);
    return hidden_dim * (input_dim + 1) + class_count * (hidden_dim + 1);
}

void ClassifierArch::validate() const {
    if (class_count < 2) throw std::domain_error("ClassifierArch: class_count must be >= 2");
    if (input_dim < 1) throw std::domain_error("ClassifierArch: input_dim must be >= 1");
    if (kind == ArchKind::OneHidden && hidden_dim < 1)
        throw std::domain_error("ClassifierArch: hidden_dim must be >= 1 for the hidden layer");
    if (kind == ArchKind::LinearSoftmax && hidden_dim != 0)
        throw std::domain_error("ClassifierArch: hidden_dim must be 0 for linear softmax");
}

void MeanFieldGaussian::validate(long expected_dim) const {
    if (means.size() != expected_dim || log_stds.size() != expected_dim)
        throw std::domain_error("MeanFieldGaussian: dimension mismatch with architecture");
    if (!means.allFinite() || !log_stds.allFinite())
        throw std::domain_error("MeanFieldGaussian: non-finite parameters");
}

void SurrogateConfig::validate() const {
    if (!(c1 > 0.0) || !(c2 > 0.0))
        throw std::domain_error("SurrogateConfig: c1 and c2 must be positive");
    if (!(p_min > 0.0) || !(p_min < 1.0))
        throw std::domain_error("SurrogateConfig: p_min must lie in (0,1)");
}

MeanFieldGaussian init_posterior(const ClassifierArch& arch, double sigma0, std::uint64_t seed) {
    arch.validate();
    if (!(sigma0 > 0.0)) throw std::domain_error("init_posterior: sigma0 must be positive");
    const long n = arch.param_count();
    MeanFieldGaussian dist;
    dist.means.resize(n);
    dist.log_stds = Eigen::VectorXd::Constant(n, std::log(sigma0));

    CounterRng rng(seed, {kTagInit});
    auto fill_layer = [&](long offset, long out_dim, long in_dim) {
        double scale = 1.0 / std::sqrt(double(in_dim));
        for (long i = 0; i < out_dim * (in_dim + 1); ++i)
            dist.means[offset + i] = scale * (2.0 * rng.next_double() - 1.0);
    };
    if (arch.kind == ArchKind::LinearSoftmax) {
        fill_layer(0, arch.class_count, arch.input_dim);
    } else {
        fill_layer(0, arch.hidden_dim, arch.input_dim);
        fill_layer(arch.hidden_dim * (arch.input_dim + 1), arch.class_count, arch.hidden_dim);
    }
    return dist;
}

WeightSample sample_weights(const MeanFieldGaussian& dist, CounterRng& rng) {
    WeightSample s;
    s.noise.resize(dist.dim());
    for (long i = 0; i < dist.dim(); ++i) s.noise[i] = rng.next_gaussian();
    s.weights = dist.means + dist.log_stds.array().exp().matrix().cwiseProduct(s.noise);
    return s;
}

Eigen::VectorXd forward(const ClassifierArch& arch, const Eigen::VectorXd& weights,
                        const Eigen::VectorXd& x) {
    if (weights.size() != arch.param_count())
        throw std::domain_error("forward: weight vector does not match architecture");
    if (x.size() != arch.input_dim) throw std::domain_error("forward: input dimension mismatch");
    if (arch.kind == ArchKind::LinearSoftmax) {
        auto l = layer_view(weights.data(), arch.class_count, arch.input_dim);
        return l.w * x + l.b;
    }
    auto l1 = layer_view(weights.data(), arch.hidden_dim, arch.input_dim);
    auto l2 = layer_view(weights.data() + arch.hidden_dim * (arch.input_dim + 1), arch.class_count,
                         arch.hidden_dim);
    Eigen::VectorXd hidden = (l1.w * x + l1.b).cwiseMax(0.0);
    return l2.w * hidden + l2.b;
}

Eigen::VectorXd backward(const ClassifierArch& arch, const Eigen::VectorXd& weights,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& score_grad) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(arch.param_count());
    if (arch.kind == ArchKind::LinearSoftmax) {
        const long k = arch.class_count, d = arch.input_dim;
        Eigen::Map<RowMajor> gw(grad.data(), k, d);
        gw = score_grad * x.transpose();
        grad.segment(k * d, k) = score_grad;
        return grad;
    }
    const long h = arch.hidden_dim, d = arch.input_dim, k = arch.class_count;
    auto l1 = layer_view(weights.data(), h, d);
    auto l2 = layer_view(weights.data() + h * (d + 1), k, h);
    Eigen::VectorXd pre = l1.w * x + l1.b;
    Eigen::VectorXd hidden = pre.cwiseMax(0.0);

    Eigen::Map<RowMajor> gw2(grad.data() + h * (d + 1), k, h);
    gw2 = score_grad * hidden.transpose();
    grad.segment(h * (d + 1) + k * h, k) = score_grad;

    Eigen::VectorXd ghidden = l2.w.transpose() * score_grad;
    for (long i = 0; i < h; ++i)
        if (pre[i] <= 0.0) ghidden[i] = 0.0;
    Eigen::Map<RowMajor> gw1(grad.data(), h, d);
    gw1 = ghidden * x.transpose();
    grad.segment(h * d, h) = ghidden;
    return grad;
}

double bounded_cross_entropy(const Eigen::VectorXd& scores, int label, const SurrogateConfig& cfg,
                             Eigen::VectorXd* grad) {
    cfg.validate();
    if (label < 0 || label >= scores.size())
        throw std::domain_error("bounded_cross_entropy: label out of range");
    const double scale = 1.0 / std::log(1.0 / cfg.p_min);
    Eigen::ArrayXd t = cfg.c2 * scores.array();
    double mx = t.maxCoeff();
    Eigen::ArrayXd ex = (t - mx).exp();
    double z = ex.sum();
    double log_p = t[label] - mx - std::log(z);
    if (log_p <= std::log(cfg.p_min)) {
        // floor binds: loss saturates at 1 with zero gradient
        if (grad) *grad = Eigen::VectorXd::Zero(scores.size());
        return 1.0;
    }
    if (grad) {
        Eigen::ArrayXd softmax = ex / z;
        softmax[label] -= 1.0;
        *grad = (softmax * cfg.c2 * scale).matrix();
    }
    return -log_p * scale;
}

double smooth_indicator(double z, double z0, double c1) {
    if (!(c1 > 0.0)) throw std::domain_error("smooth_indicator: c1 must be positive");
    return 1.0 / (1.0 + std::exp(-c1 * (z - z0)));
}

double gaussian_kl(const MeanFieldGaussian& q, const MeanFieldGaussian& p,
                   Eigen::VectorXd* grad_means, Eigen::VectorXd* grad_log_stds) {
    if (q.dim() != p.dim()) throw std::domain_error("gaussian_kl: dimension mismatch");
    Eigen::ArrayXd var_q = (2.0 * q.log_stds.array()).exp();
    Eigen::ArrayXd var_p = (2.0 * p.log_stds.array()).exp();
    Eigen::ArrayXd dm = (q.means - p.means).array();
    double kl = (p.log_stds - q.log_stds).sum() +
                0.5 * ((var_q + dm.square()) / var_p - 1.0).sum();
    if (grad_means) *grad_means = (dm / var_p).matrix();
    if (grad_log_stds) *grad_log_stds = (var_q / var_p - 1.0).matrix();
    return kl;
}

void ObjectiveSpec::validate(long data_rows) const {
    surrogate.validate();
    if (denominator < 1) throw std::domain_error("ObjectiveSpec: denominator must be >= 1");
    if (!(complexity_log >= 0.0))
        throw std::domain_error("ObjectiveSpec: complexity term must be nonnegative");
    if (kind == ObjectiveKind::Excess) {
        // gamma = 1 is the ternary excess against a deterministic reference;
        // the duplicated support point carries weight 1 - gamma = 0
        if (!(gamma >= 1e-6) || !(gamma <= 1.0))
            throw std::domain_error("ObjectiveSpec: gamma must lie in [1e-6, 1]");
        if (static_cast<long>(reference_losses.size()) != data_rows)
            throw std::domain_error("ObjectiveSpec: reference losses must align with the dataset");
    }
}

double surrogate_objective(const ClassifierArch& arch, const MeanFieldGaussian& dist,
                           const LabeledDataset& data, const std::vector<long>& rows,
                           const ObjectiveSpec& spec, const Eigen::VectorXd& eps,
                           Eigen::VectorXd* grad_means, Eigen::VectorXd* grad_log_stds) {
    const long dim = arch.param_count();
    dist.validate(dim);
    spec.prior.validate(dim);
    spec.validate(data.n());
    if (rows.empty()) throw std::domain_error("surrogate_objective: empty batch");
    if (eps.size() != dim) throw std::domain_error("surrogate_objective: noise dimension mismatch");

    Eigen::VectorXd w = dist.means + dist.log_stds.array().exp().matrix().cwiseProduct(eps);
    Eigen::VectorXd gw = Eigen::VectorXd::Zero(dim);
    const bool want_grad = grad_means || grad_log_stds;
    const double inv_b = 1.0 / double(rows.size());

    double data_term = 0.0;
    Eigen::VectorXd score_grad;
    for (long row : rows) {
        if (row < 0 || row >= data.n()) throw std::domain_error("surrogate_objective: row out of range");
        Eigen::VectorXd x = data.features.row(row).transpose();
        Eigen::VectorXd scores = forward(arch, w, x);
        double ce = bounded_cross_entropy(scores, data.labels[size_t(row)], spec.surrogate,
                                          want_grad ? &score_grad : nullptr);
        if (spec.kind == ObjectiveKind::BoundedCe) {
            data_term += inv_b * ce;
            if (want_grad) gw += inv_b * backward(arch, w, x, score_grad);
        } else {
            const double g = spec.gamma;
            double f = ce - g * spec.reference_losses[size_t(row)];
            const double thresholds[3] = {0.0, 1.0 - g, 1.0};
            const double alphas[3] = {g, 1.0 - g, g};
            double df = 0.0;
            for (int j = 0; j < 3; ++j) {
                double s = smooth_indicator(f, thresholds[j], spec.surrogate.c1);
                data_term += inv_b * alphas[j] * s;
                df += alphas[j] * spec.surrogate.c1 * s * (1.0 - s);
            }
            if (want_grad) gw += (inv_b * df) * backward(arch, w, x, score_grad);
        }
    }
    if (spec.kind == ObjectiveKind::Excess) data_term -= spec.gamma;

    Eigen::VectorXd kl_gm, kl_gs;
    double kl = gaussian_kl(dist, spec.prior, want_grad ? &kl_gm : nullptr,
                            want_grad ? &kl_gs : nullptr);
    double coeff = spec.kind == ObjectiveKind::Excess ? 1.0 + spec.gamma : 1.0;
    double inner = (kl + spec.complexity_log) / (2.0 * double(spec.denominator));
    double value = data_term + coeff * std::sqrt(std::max(inner, 0.0));

    if (want_grad) {
        double dkl = inner > 0.0
                         ? coeff / (4.0 * double(spec.denominator) * std::sqrt(inner))
                         : 0.0;
        Eigen::VectorXd gm = gw + dkl * kl_gm;
        // d w / d log_std = exp(log_std) * eps = w - means
        Eigen::VectorXd gs = gw.cwiseProduct(w - dist.means) + dkl * kl_gs;
        if (grad_means) *grad_means = gm;
        if (grad_log_stds) *grad_log_stds = gs;
    }
    return value;
}

void TrainHyper::validate() const {
    if (epochs < 0) throw std::domain_error("TrainHyper: epochs must be nonnegative");
    if (batch_size < 1) throw std::domain_error("TrainHyper: batch size must be positive");
    if (!(learning_rate >= 0.0)) throw std::domain_error("TrainHyper: learning rate must be >= 0");
    if (!(momentum >= 0.0) || !(momentum < 1.0))
        throw std::domain_error("TrainHyper: momentum must lie in [0,1)");
}

void objective_grad_step(const ClassifierArch& arch, MeanFieldGaussian& dist,
                         const LabeledDataset& data, const std::vector<long>& rows,
                         const ObjectiveSpec& spec, const Eigen::VectorXd& eps,
                         const TrainHyper& hyper, SgdState& state) {
    hyper.validate();
    const long dim = arch.param_count();
    if (state.vel_means.size() != dim) {
        state.vel_means = Eigen::VectorXd::Zero(dim);
        state.vel_log_stds = Eigen::VectorXd::Zero(dim);
    }
    Eigen::VectorXd gm, gs;
    state.last_objective = surrogate_objective(arch, dist, data, rows, spec, eps, &gm, &gs);
    if (!std::isfinite(state.last_objective) || !gm.allFinite() || !gs.allFinite()) {
        ++state.steps_rejected;
        return;
    }
    state.vel_means = hyper.momentum * state.vel_means + gm;
    state.vel_log_stds = hyper.momentum * state.vel_log_stds + gs;
    dist.means -= hyper.learning_rate * state.vel_means;
    dist.log_stds -= hyper.learning_rate * state.vel_log_stds;
    ++state.steps_taken;
}

namespace {

std::vector<long> shuffled_rows(long n, std::uint64_t seed, long epoch) {
    std::vector<long> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0L);
    CounterRng rng(seed, {kTagShuffle, std::uint64_t(epoch)});
    for (long i = n - 1; i > 0; --i)
        std::swap(rows[size_t(i)], rows[rng.next_below(std::uint64_t(i) + 1)]);
    return rows;
}

} // namespace

MeanFieldGaussian train_posterior(const ClassifierArch& arch, const MeanFieldGaussian& init,
                                  const LabeledDataset& data, const ObjectiveSpec& spec,
                                  const TrainHyper& hyper, std::uint64_t seed,
                                  SgdState* state_out) {
    hyper.validate();
    if (data.n() == 0) throw std::domain_error("train_posterior: empty dataset");
    MeanFieldGaussian dist = init;
    SgdState state;
    const long dim = arch.param_count();
    for (long epoch = 0; epoch < hyper.epochs; ++epoch) {
        auto order = shuffled_rows(data.n(), seed, epoch);
        const long batches = (data.n() + hyper.batch_size - 1) / hyper.batch_size;
        for (long b = 0; b < batches; ++b) {
            long lo = b * hyper.batch_size;
            long hi = std::min<long>(lo + hyper.batch_size, data.n());
            std::vector<long> rows(order.begin() + lo, order.begin() + hi);
            CounterRng noise(seed, {kTagNoise, std::uint64_t(epoch), std::uint64_t(b)});
            Eigen::VectorXd eps(dim);
            for (long i = 0; i < dim; ++i) eps[i] = noise.next_gaussian();
            objective_grad_step(arch, dist, data, rows, spec, eps, hyper, state);
        }
    }
    if (state_out) *state_out = state;
    return dist;
}

Eigen::VectorXd train_erm_weights(const ClassifierArch& arch, const Eigen::VectorXd& init,
                                  const LabeledDataset& data, const SurrogateConfig& cfg,
                                  const TrainHyper& hyper, std::uint64_t seed) {
    hyper.validate();
    cfg.validate();
    if (init.size() != arch.param_count())
        throw std::domain_error("train_erm_weights: init does not match architecture");
    Eigen::VectorXd w = init;
    Eigen::VectorXd vel = Eigen::VectorXd::Zero(w.size());
    Eigen::VectorXd score_grad;
    for (long epoch = 0; epoch < hyper.epochs; ++epoch) {
        auto order = shuffled_rows(data.n(), seed, epoch);
        const long batches = (data.n() + hyper.batch_size - 1) / hyper.batch_size;
        for (long b = 0; b < batches; ++b) {
            long lo = b * hyper.batch_size;
            long hi = std::min<long>(lo + hyper.batch_size, data.n());
            Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
            for (long idx = lo; idx < hi; ++idx) {
                long row = order[size_t(idx)];
                Eigen::VectorXd x = data.features.row(row).transpose();
                Eigen::VectorXd scores = forward(arch, w, x);
                bounded_cross_entropy(scores, data.labels[size_t(row)], cfg, &score_grad);
                g += backward(arch, w, x, score_grad);
            }
            g /= double(hi - lo);
            if (!g.allFinite()) continue;
            vel = hyper.momentum * vel + g;
            w -= hyper.learning_rate * vel;
        }
    }
    return w;
}

std::vector<double> sampled_zero_one_losses(const ClassifierArch& arch,
                                            const MeanFieldGaussian& dist,
                                            const LabeledDataset& data, std::uint64_t seed,
                                            long threads) {
    dist.validate(arch.param_count());
    if (data.n() == 0) throw std::domain_error("sampled_zero_one_losses: empty dataset");
    std::vector<double> losses(size_t(data.n()));
    parallel_for(data.n(), threads, [&](long begin, long end) {
        for (long i = begin; i < end; ++i) {
            CounterRng rng(seed, {kTagEval, std::uint64_t(i)});
            WeightSample s = sample_weights(dist, rng);
            Eigen::VectorXd scores = forward(arch, s.weights, data.features.row(i).transpose());
            long best = 0;
            scores.maxCoeff(&best);
            losses[size_t(i)] = best == data.labels[size_t(i)] ? 0.0 : 1.0;
        }
    });
    return losses;
}

double zero_one_loss(const ClassifierArch& arch, const Eigen::VectorXd& weights,
                     const LabeledDataset& data) {
    if (data.n() == 0) throw std::domain_error("zero_one_loss: empty dataset");
    long errors = 0;
    for (long i = 0; i < data.n(); ++i) {
        Eigen::VectorXd scores = forward(arch, weights, data.features.row(i).transpose());
        long best = 0;
        scores.maxCoeff(&best);
        if (best != data.labels[size_t(i)]) ++errors;
    }
    return double(errors) / double(data.n());
}

std::string posterior_to_json(const ClassifierArch& arch, const MeanFieldGaussian& dist) {
    dist.validate(arch.param_count());
    nlohmann::json j;
    j["arch"] = {{"kind", arch.kind == ArchKind::LinearSoftmax ? "linear-softmax" : "one-hidden"},
                 {"input_dim", arch.input_dim},
                 {"hidden_dim", arch.hidden_dim},
                 {"class_count", arch.class_count}};
    j["means"] = std::vector<double>(dist.means.data(), dist.means.data() + dist.dim());
    j["log_stds"] = std::vector<double>(dist.log_stds.data(), dist.log_stds.data() + dist.dim());
    return j.dump();
}

void posterior_from_json(const std::string& text, ClassifierArch& arch, MeanFieldGaussian& dist) {
    nlohmann::json j = nlohmann::json::parse(text);
    std::string kind = j.at("arch").at("kind").get<std::string>();
    if (kind == "linear-softmax")
        arch.kind = ArchKind::LinearSoftmax;
    else if (kind == "one-hidden")
        arch.kind = ArchKind::OneHidden;
    else
        throw std::domain_error("posterior_from_json: unknown architecture kind " + kind);
    arch.input_dim = j.at("arch").at("input_dim").get<long>();
    arch.hidden_dim = j.at("arch").at("hidden_dim").get<long>();
    arch.class_count = j.at("arch").at("class_count").get<long>();
    arch.validate();
    auto means = j.at("means").get<std::vector<double>>();
    auto log_stds = j.at("log_stds").get<std::vector<double>>();
    dist.means = Eigen::Map<const Eigen::VectorXd>(means.data(), long(means.size()));
    dist.log_stds = Eigen::Map<const Eigen::VectorXd>(log_stds.data(), long(log_stds.size()));
    dist.validate(arch.param_count());
}

} // namespace pacbayes
