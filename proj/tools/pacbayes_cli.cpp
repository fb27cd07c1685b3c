// Command-line front end. Every experiment runs as a seeded subcommand that
// writes CSV/JSON artifacts and prints a one-line summary to stdout.
//
// Exit codes: 0 success, 1 validation failure (a run that completes but
// fails its own check, e.g. an invalid bound report or a residual above
// threshold), 2 usage error (unknown flags, missing files, bad ranges).

#include "pacbayes/concentration.hpp"
#include "pacbayes/dataset.hpp"
#include "pacbayes/elbo.hpp"
#include "pacbayes/prob_model.hpp"
#include "pacbayes/recursive_bound.hpp"
#include "pacbayes/rng.hpp"
#include "pacbayes/tempered_linreg.hpp"
#include "pacbayes/tempering_transforms.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace pacbayes;

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// "lo:hi:count" -> geometric grid lo * (hi/lo)^(i/(count-1)).
std::vector<double> parse_lambda_grid(const std::string& text) {
    double lo = 0.0, hi = 0.0;
    long count = 0;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%ld%c", &lo, &hi, &count, &extra) != 3)
        throw std::runtime_error("bad --lambda-grid, expected lo:hi:count: " + text);
    if (!(lo > 0.0) || !(hi > lo) || count < 2)
        throw std::runtime_error("bad --lambda-grid range, need 0 < lo < hi and count >= 2: " + text);
    std::vector<double> grid(static_cast<std::size_t>(count));
    double ratio = hi / lo;
    for (long i = 0; i < count; ++i)
        grid[static_cast<std::size_t>(i)] =
            lo * std::pow(ratio, double(i) / double(count - 1));
    return grid;
}

// Dataset descriptors persisted in chain files so evaluation can rebuild
// the exact dataset:
//   blobs:n=4000,k=2,d=2,sep=3,seed=1
//   idx:images=train-images.idx,labels=train-labels.idx,limit=0
std::string blobs_descriptor(long n, int k, int d, double sep, std::uint64_t seed) {
    std::ostringstream ss;
    ss << "blobs:n=" << n << ",k=" << k << ",d=" << d << ",sep=" << fmt17(sep)
       << ",seed=" << seed;
    return ss.str();
}

std::string idx_descriptor(const std::string& images, const std::string& labels, long limit) {
    return "idx:images=" + images + ",labels=" + labels + ",limit=" + std::to_string(limit);
}

LabeledDataset take_prefix(const LabeledDataset& ds, long limit) {
    if (limit <= 0 || limit >= ds.n()) return ds;
    LabeledDataset out;
    out.features = ds.features.topRows(limit);
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + limit);
    out.class_count = ds.class_count;
    out.source_index.assign(ds.source_index.begin(), ds.source_index.begin() + limit);
    return out;
}

std::map<std::string, std::string> parse_kv(const std::string& body) {
    std::map<std::string, std::string> kv;
    std::istringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("bad descriptor field (want key=value): " + item);
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

LabeledDataset dataset_from_descriptor(const std::string& desc) {
    auto colon = desc.find(':');
    if (colon == std::string::npos)
        throw std::runtime_error("bad dataset descriptor: " + desc);
    std::string kind = desc.substr(0, colon);
    auto kv = parse_kv(desc.substr(colon + 1));
    auto need = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw std::runtime_error("dataset descriptor missing field '" + std::string(key) +
                                     "': " + desc);
        return it->second;
    };
    if (kind == "blobs") {
        return make_blobs(std::stol(need("n")), std::stoi(need("k")), std::stoi(need("d")),
                          std::stod(need("sep")), std::stoull(need("seed")));
    }
    if (kind == "idx") {
        auto ds = load_idx(need("images"), need("labels"));
        long limit = kv.count("limit") ? std::stol(kv["limit"]) : 0;
        return take_prefix(ds, limit);
    }
    throw std::runtime_error("unknown dataset kind '" + kind + "' in descriptor: " + desc);
}

MisspecSetting setting_from_name(const std::string& name) {
    if (name == "well-specified") return MisspecSetting::WellSpecified;
    if (name == "lik-overconfident") return MisspecSetting::LikelihoodOverconfident;
    if (name == "lik-underconfident") return MisspecSetting::LikelihoodUnderconfident;
    if (name == "prior-misspec") return MisspecSetting::PriorOverconfident;
    throw std::runtime_error("unknown --setting: " + name);
}

// Shared dataset flags for rpb train / rpb baseline.
struct DataOpts {
    std::string dataset = "blobs";
    long n = 4000;
    int classes = 2;
    int dim = 2;
    double separation = 3.0;
    std::uint64_t data_seed = 1;
    std::string images;
    std::string labels;
    long limit = 0;
};

void add_data_flags(CLI::App* cmd, DataOpts& opts) {
    cmd->add_option("--dataset", opts.dataset, "Dataset kind: blobs or idx")
        ->check(CLI::IsMember({"blobs", "idx"}));
    cmd->add_option("--n", opts.n, "Blob dataset size");
    cmd->add_option("--classes", opts.classes, "Blob cluster count");
    cmd->add_option("--dim", opts.dim, "Blob feature dimension");
    cmd->add_option("--separation", opts.separation, "Blob center separation");
    cmd->add_option("--data-seed", opts.data_seed, "Blob generation seed");
    cmd->add_option("--images", opts.images, "IDX image file path");
    cmd->add_option("--labels", opts.labels, "IDX label file path");
    cmd->add_option("--limit", opts.limit, "IDX row cap (0 = all rows)");
}

std::string descriptor_from_opts(const DataOpts& opts) {
    if (opts.dataset == "blobs")
        return blobs_descriptor(opts.n, opts.classes, opts.dim, opts.separation, opts.data_seed);
    if (opts.images.empty() || opts.labels.empty())
        throw std::runtime_error("--dataset idx requires --images and --labels");
    return idx_descriptor(opts.images, opts.labels, opts.limit);
}

struct TrainFlags {
    long epochs = 100;
    long batch = 250;
    double lr = 0.01;
    double momentum = 0.95;
    double sigma0 = 0.03;
    int hidden = 0;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--epochs", f.epochs, "Training epochs per step");
    cmd->add_option("--batch", f.batch, "Mini-batch size");
    cmd->add_option("--lr", f.lr, "Learning rate");
    cmd->add_option("--momentum", f.momentum, "SGD momentum");
    cmd->add_option("--sigma0", f.sigma0, "Initial posterior std and prior width");
    cmd->add_option("--hidden", f.hidden, "Hidden units (0 = linear softmax)");
}

ChainHyper hyper_from_flags(const TrainFlags& f, double delta, double delta_prime, long threads) {
    ChainHyper hyper;
    hyper.trainer.epochs = f.epochs;
    hyper.trainer.batch_size = f.batch;
    hyper.trainer.learning_rate = f.lr;
    hyper.trainer.momentum = f.momentum;
    hyper.sigma0 = f.sigma0;
    hyper.budget.delta = delta;
    hyper.budget.delta_prime = delta_prime;
    hyper.threads = threads;
    return hyper;
}

ClassifierArch arch_for(const LabeledDataset& data, int hidden) {
    ClassifierArch arch;
    arch.kind = hidden > 0 ? ArchKind::OneHidden : ArchKind::LinearSoftmax;
    arch.input_dim = data.dim();
    arch.hidden_dim = hidden;
    arch.class_count = data.class_count;
    arch.validate();
    return arch;
}

constexpr std::uint64_t kTagCoverage = 0x636f7665; // "cove"
constexpr std::uint64_t kTagDerivative = 0x64727665; // "drve"
constexpr std::uint64_t kTagNuProxy = 0x6e755f70; // "nu_p"
constexpr std::uint64_t kTagDemo = 0x64656d6f; // "demo"
constexpr std::uint64_t kTagElbo = 0x656c626f; // "elbo"
constexpr std::uint64_t kTagTransform = 0x7472616e; // "tran"

// ---------------------------------------------------------------- conc ----

int run_conc_coverage(const std::string& mode, long n, double delta, long trials,
                      std::uint64_t seed, const std::string& out_path) {
    if (n < 1 || trials < 1) throw std::runtime_error("--n and --trials must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::runtime_error("--delta must lie in (0,1)");
    DiscreteSupport support({-0.5, 0.0, 0.5, 1.0});
    const auto& pts = support.points();
    long violations = 0;
    std::ostringstream csv;
    csv << "trial,violated\n";
    for (long trial = 0; trial < trials; ++trial) {
        CounterRng rng(seed, {kTagCoverage, static_cast<std::uint64_t>(trial)});
        bool violated = false;
        if (mode == "split-kl") {
            // Random 4-point distribution per trial; violation means the
            // split-kl upper bound undercuts the true mean.
            std::vector<double> probs(pts.size());
            double norm = 0.0;
            for (auto& p : probs) {
                p = -std::log(rng.next_double());
                norm += p;
            }
            double true_mean = 0.0;
            for (std::size_t j = 0; j < pts.size(); ++j) {
                probs[j] /= norm;
                true_mean += probs[j] * pts[j];
            }
            std::vector<double> seg(pts.size() - 1, 0.0);
            for (long i = 0; i < n; ++i) {
                double u = rng.next_double(), acc = 0.0;
                std::size_t pick = pts.size() - 1;
                for (std::size_t j = 0; j < probs.size(); ++j) {
                    acc += probs[j];
                    if (u < acc) { pick = j; break; }
                }
                for (std::size_t j = 1; j < pts.size(); ++j)
                    if (pts[pick] >= pts[j]) seg[j - 1] += 1.0;
            }
            for (auto& s : seg) s /= double(n);
            violated = split_kl_bound(support, seg, n, delta) < true_mean;
        } else {
            // Two-hypothesis class with Bernoulli losses; fixed posterior.
            const double p_true[2] = {0.3, 0.6};
            const double rho[2] = {0.7, 0.3};
            double kl = rho[0] * std::log(rho[0] / 0.5) + rho[1] * std::log(rho[1] / 0.5);
            double emp[2] = {0.0, 0.0};
            for (long i = 0; i < n; ++i)
                for (int h = 0; h < 2; ++h)
                    emp[h] += rng.next_double() < p_true[h] ? 1.0 : 0.0;
            double gibbs_emp = (rho[0] * emp[0] + rho[1] * emp[1]) / double(n);
            double gibbs_true = rho[0] * p_true[0] + rho[1] * p_true[1];
            violated = pac_bayes_kl_bound(gibbs_emp, kl, n, delta) < gibbs_true;
        }
        violations += violated ? 1 : 0;
        csv << trial << ',' << (violated ? 1 : 0) << '\n';
    }
    if (!out_path.empty()) write_text_file(out_path, csv.str());
    double rate = double(violations) / double(trials);
    double threshold = delta + 3.0 * std::sqrt(delta * (1.0 - delta) / double(trials));
    bool ok = rate <= threshold;
    std::cout << "coverage mode=" << mode << " n=" << n << " trials=" << trials
              << " rate=" << fmt17(rate) << " threshold=" << fmt17(threshold)
              << (ok ? " ok" : " VIOLATION-RATE-TOO-HIGH") << '\n';
    return ok ? 0 : 1;
}

// ----------------------------------------------------------------- cpe ----

int run_cpe_scan(const std::string& setting_name, long n, long basis, std::uint64_t seed,
                 const std::string& grid_text, long samples, long nu_points,
                 const std::string& out_path, long threads) {
    if (n < 1 || basis < 1 || samples < 100 || nu_points < 10)
        throw std::runtime_error("bad --n/--K/--samples/--nu range");
    auto setting = setting_from_name(setting_name);
    auto grid = parse_lambda_grid(grid_text);
    auto spec = model_for_setting(setting);
    auto task = generate_regression_data(n, basis, seed);
    auto nu = generate_regression_data(nu_points, basis, derive_key(seed, {kTagNuProxy}));

    std::ostringstream csv;
    csv << "lambda,gibbs_emp,bayes,dgibbs,dbayes,dbayes_stderr\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double lambda = grid[i];
        auto post = fit_tempered_posterior(task, spec, lambda);
        double gibbs_emp = empirical_gibbs_loss(post, task, spec);
        double bayes = bayes_loss(post, spec, nu);
        double dgibbs = gibbs_derivative(post, task, spec);
        auto est = bayes_derivative(task, spec, lambda, nu, samples,
                                    derive_key(seed, {kTagDerivative, i}), int(threads));
        csv << fmt17(lambda) << ',' << fmt17(gibbs_emp) << ',' << fmt17(bayes) << ','
            << fmt17(dgibbs) << ',' << fmt17(est.estimate) << ',' << fmt17(est.stderr_value)
            << '\n';
    }
    write_text_file(out_path, csv.str());

    // The cold-posterior flag is always read at lambda = 1 regardless of grid.
    auto at_one = bayes_derivative(task, spec, 1.0, nu, samples,
                                   derive_key(seed, {kTagDerivative, grid.size()}), int(threads));
    bool cpe = at_one.estimate < -3.0 * at_one.stderr_value;
    std::cout << "cpe-scan setting=" << setting_name << " n=" << n
              << " rows=" << grid.size() << " dbayes_at_1=" << fmt17(at_one.estimate)
              << " stderr=" << fmt17(at_one.stderr_value) << " cpe=" << (cpe ? "true" : "false")
              << " out=" << out_path << '\n';
    return 0;
}

int run_cpe_da(const std::string& transform, int count, long n, long basis, double lambda,
               long samples, long holdout_points, std::uint64_t seed, std::uint64_t holdout_seed,
               const std::string& out_path, long threads) {
    if (n < 1 || basis < 1 || count < 1 || samples < 100 || holdout_points < 10)
        throw std::runtime_error("bad --n/--K/--count/--m/--holdout range");
    auto spec = model_for_setting(MisspecSetting::WellSpecified);
    auto task = generate_regression_data(n, basis, seed);
    auto holdout = generate_regression_data(holdout_points, basis, holdout_seed);
    TransformationSet transforms;
    if (transform == "identity")
        transforms = TransformationSet::identity(basis);
    else if (transform == "permutation")
        transforms = TransformationSet::random_permutations(basis, count,
                                                            derive_key(seed, {kTagTransform}));
    else if (transform == "sign-flip")
        transforms = TransformationSet::random_sign_flips(basis, count,
                                                          derive_key(seed, {kTagTransform}));
    else
        throw std::runtime_error("unknown --transform: " + transform);

    auto post = fit_da_tempered_posterior(task, spec, transforms, lambda);
    auto diag = da_cov_diagnostics(post, task, spec, transforms, holdout, samples, seed,
                                   int(threads));
    if (!out_path.empty()) {
        std::ostringstream csv;
        csv << "transform,gibbs_cov,gibbs_cov_stderr,bayes_cov,bayes_cov_stderr,"
               "neg_score_mean,neg_score_stderr\n"
            << transform << ',' << fmt17(diag.gibbs_grad_cov) << ','
            << fmt17(diag.gibbs_grad_cov_se) << ',' << fmt17(diag.bayes_grad_cov) << ','
            << fmt17(diag.bayes_grad_cov_se) << ',' << fmt17(diag.neg_score_mean) << ','
            << fmt17(diag.neg_score_mean_se) << '\n';
        write_text_file(out_path, csv.str());
    }
    // E[-S] = 1 is an identity of the score construction; a miss marks the
    // Monte-Carlo run itself as unusable.
    bool score_ok = std::abs(diag.neg_score_mean - 1.0) <= 3.0 * diag.neg_score_mean_se;
    std::cout << "cpe-da transform=" << transform << " bayes_cov=" << fmt17(diag.bayes_grad_cov)
              << " stderr=" << fmt17(diag.bayes_grad_cov_se)
              << " neg_score_mean=" << fmt17(diag.neg_score_mean)
              << " stderr=" << fmt17(diag.neg_score_mean_se)
              << (score_ok ? " ok" : " SCORE-CHECK-FAILED") << '\n';
    return score_ok ? 0 : 1;
}

// ---------------------------------------------------------- transforms ----

int run_transforms_demo(long configs, std::uint64_t seed, long grid_points,
                        const std::string& out_path) {
    if (configs < 1 || grid_points < 3) throw std::runtime_error("bad --configs/--grid-points");
    std::vector<double> grid(static_cast<std::size_t>(grid_points));
    for (long i = 0; i < grid_points; ++i)
        grid[static_cast<std::size_t>(i)] =
            1e-6 + (1.0 - 2e-6) * double(i) / double(grid_points - 1);
    std::ostringstream csv;
    csv << "config,a,b,lambda,y,max_diff\n";
    double worst = 0.0;
    for (long c = 0; c < configs; ++c) {
        CounterRng rng(seed, {kTagDemo, static_cast<std::uint64_t>(c)});
        double a = 0.5 + 4.5 * rng.next_double();
        double b = 0.5 + 4.5 * rng.next_double();
        double lambda = 0.25 + 7.75 * rng.next_double();
        int y = rng.next_double() < 0.5 ? 0 : 1;
        double diff = verify_bayes_equivalence(a, b, lambda, y, grid);
        worst = std::max(worst, diff);
        csv << c << ',' << fmt17(a) << ',' << fmt17(b) << ',' << fmt17(lambda) << ',' << y << ','
            << fmt17(diff) << '\n';
    }
    if (!out_path.empty()) write_text_file(out_path, csv.str());
    bool ok = worst < 1e-10;
    std::cout << "transforms-demo configs=" << configs << " max_diff=" << fmt17(worst)
              << (ok ? " ok" : " EQUIVALENCE-FAILED") << '\n';
    return ok ? 0 : 1;
}

// ----------------------------------------------------------------- rpb ----

int run_rpb_split(long n, long T, const std::string& out_path) {
    auto plan = geometric_split(n, T);
    std::ostringstream csv;
    csv << "t,size,n_train,n_val,implied_T\n";
    std::ostringstream sizes;
    for (long t = 1; t <= plan.step_count(); ++t) {
        csv << t << ',' << plan.chunk_sizes[static_cast<std::size_t>(t - 1)] << ','
            << plan.n_train(t) << ',' << plan.n_val(t) << ','
            << fmt17(implied_temperature(plan, t)) << '\n';
        if (t > 1) sizes << ',';
        sizes << plan.chunk_sizes[static_cast<std::size_t>(t - 1)];
    }
    if (!out_path.empty()) write_text_file(out_path, csv.str());
    std::cout << "split n=" << n << " T=" << T << " sizes=" << sizes.str() << '\n';
    return 0;
}

int run_rpb_train(const DataOpts& data_opts, const TrainFlags& train_flags, long T, double gamma,
                  double delta, double delta_prime, std::uint64_t seed,
                  const std::string& out_path, long threads) {
    std::string descriptor = descriptor_from_opts(data_opts);
    auto data = dataset_from_descriptor(descriptor);
    auto arch = arch_for(data, train_flags.hidden);
    auto hyper = hyper_from_flags(train_flags, delta, delta_prime, threads);
    std::vector<TrainStepDiagnostics> diag;
    auto chain = train_chain(arch, data, T, gamma, hyper, seed, descriptor, &diag);
    write_text_file(out_path, chain_to_json(chain));
    long rejected = 0;
    for (const auto& d : diag) rejected += d.steps_rejected;
    std::cout << "trained T=" << T << " n=" << data.n()
              << " final_objective=" << fmt17(diag.back().final_objective)
              << " steps_rejected=" << rejected << " out=" << out_path << '\n';
    return 0;
}

int run_rpb_eval(const std::string& chain_path, double delta, double delta_prime, long rounds,
                 std::uint64_t eval_seed, long holdout_n, std::uint64_t holdout_seed,
                 const std::string& out_path, const std::string& summary_path, long threads) {
    auto chain = chain_from_json(read_text_file(chain_path));
    if (chain.dataset_descriptor.empty())
        throw std::runtime_error("chain file has no dataset descriptor; cannot rebuild data");
    auto data = dataset_from_descriptor(chain.dataset_descriptor);
    LabeledDataset holdout;
    const LabeledDataset* test = nullptr;
    if (holdout_n > 0) {
        if (chain.dataset_descriptor.rfind("blobs:", 0) != 0)
            throw std::runtime_error("--holdout-n requires a blobs chain");
        auto kv = parse_kv(chain.dataset_descriptor.substr(6));
        holdout = make_blobs(holdout_n, std::stoi(kv.at("k")), std::stoi(kv.at("d")),
                             std::stod(kv.at("sep")), holdout_seed);
        test = &holdout;
    }
    ConfidenceBudget budget{delta, delta_prime};
    auto report = evaluate_bound_chain(chain, data, budget, rounds, eval_seed, test, threads);
    write_text_file(out_path, report_to_csv(report));
    if (!summary_path.empty()) write_text_file(summary_path, report_summary_json(report));
    std::cout << "eval chain=" << chain_path << " T=" << chain.T
              << " final_bound=" << fmt17(report.final_bound)
              << " valid=" << (report.valid ? "true" : "false") << " out=" << out_path << '\n';
    return report.valid ? 0 : 1;
}

int run_rpb_baseline(const std::string& method_name, const DataOpts& data_opts,
                     const TrainFlags& train_flags, double delta, double delta_prime,
                     std::uint64_t seed, long holdout_n, std::uint64_t holdout_seed,
                     const std::string& out_path, long threads) {
    BaselineMethod method;
    if (method_name == "uninformed") method = BaselineMethod::Uninformed;
    else if (method_name == "informed") method = BaselineMethod::Informed;
    else if (method_name == "informed-excess") method = BaselineMethod::InformedExcess;
    else throw std::runtime_error("unknown --method: " + method_name);

    std::string descriptor = descriptor_from_opts(data_opts);
    auto data = dataset_from_descriptor(descriptor);
    auto arch = arch_for(data, train_flags.hidden);
    auto hyper = hyper_from_flags(train_flags, delta, delta_prime, threads);
    LabeledDataset holdout;
    const LabeledDataset* test = nullptr;
    if (holdout_n > 0) {
        if (data_opts.dataset != "blobs")
            throw std::runtime_error("--holdout-n requires --dataset blobs");
        holdout = make_blobs(holdout_n, data_opts.classes, data_opts.dim, data_opts.separation,
                             holdout_seed);
        test = &holdout;
    }
    auto report = baseline(method, arch, data, hyper, seed, test);
    if (!out_path.empty()) write_text_file(out_path, report_to_csv(report));
    std::cout << "baseline method=" << method_name
              << " final_bound=" << fmt17(report.final_bound)
              << " valid=" << (report.valid ? "true" : "false") << '\n';
    return report.valid ? 0 : 1;
}

// ---------------------------------------------------------------- elbo ----

int run_elbo_verify(long D, long trials, std::uint64_t seed, long nodes, double window,
                    const std::string& out_path) {
    if (D < 1 || trials < 1) throw std::runtime_error("--D and --trials must be >= 1");
    QuadratureConfig cfg;
    cfg.nodes = nodes;
    cfg.window_stds = window;
    std::ostringstream csv;
    csv << "trial,residual,kl_avg,mutual_info\n";
    double worst = 0.0;
    for (long trial = 0; trial < trials; ++trial) {
        CounterRng rng(seed, {kTagElbo, static_cast<std::uint64_t>(trial)});
        std::vector<Gaussian1d> q(static_cast<std::size_t>(D));
        for (auto& g : q) {
            g.mean = -3.0 + 6.0 * rng.next_double();
            g.std_dev = 0.2 + 1.8 * rng.next_double();
        }
        Gaussian1d prior{-1.0 + 2.0 * rng.next_double(), 0.5 + 1.5 * rng.next_double()};
        auto terms = mixture_terms(q, prior, cfg);
        double residual = verify_decomposition(q, prior, cfg);
        worst = std::max(worst, residual);
        csv << trial << ',' << fmt17(residual) << ',' << fmt17(terms.kl_avg) << ','
            << fmt17(terms.mutual_info) << '\n';
    }
    if (!out_path.empty()) write_text_file(out_path, csv.str());
    bool ok = worst < 1e-6;
    std::cout << "elbo-verify D=" << D << " trials=" << trials << " max_residual=" << fmt17(worst)
              << (ok ? " ok" : " RESIDUAL-TOO-LARGE") << '\n';
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tempered-posterior diagnostics and recursive PAC-Bayes bounds"};
    app.require_subcommand(1);
    long threads = 1;
    app.add_option("--threads", threads, "Worker threads for parallel evaluation");

    // conc coverage
    auto* conc = app.add_subcommand("conc", "Concentration-inequality experiments");
    conc->require_subcommand(1);
    conc->fallthrough();
    std::string cov_mode = "split-kl", cov_out;
    long cov_n = 100, cov_trials = 10000;
    double cov_delta = 0.05;
    std::uint64_t cov_seed = 1;
    auto* coverage = conc->add_subcommand("coverage", "Empirical coverage of the bounds");
    coverage->fallthrough();
    coverage->add_option("--mode", cov_mode, "split-kl or finite-class")
        ->check(CLI::IsMember({"split-kl", "finite-class"}));
    coverage->add_option("--n", cov_n, "Sample size per trial");
    coverage->add_option("--delta", cov_delta, "Bound confidence level");
    coverage->add_option("--trials", cov_trials, "Number of independent trials");
    coverage->add_option("--seed", cov_seed, "Random seed");
    coverage->add_option("--out", cov_out, "CSV output path (trial,violated)");

    // cpe scan / cpe da
    auto* cpe = app.add_subcommand("cpe", "Cold-posterior-effect diagnostics");
    cpe->require_subcommand(1);
    cpe->fallthrough();
    std::string scan_setting, scan_grid = "0.25:8:32", scan_out;
    long scan_n = 5, scan_basis = 10, scan_samples = 10000, scan_nu = 10000;
    std::uint64_t scan_seed = 1;
    auto* scan = cpe->add_subcommand("scan", "Loss curves and derivatives over a lambda grid");
    scan->fallthrough();
    scan->add_option("--setting", scan_setting,
                     "well-specified, lik-overconfident, lik-underconfident, prior-misspec")
        ->required()
        ->check(CLI::IsMember(
            {"well-specified", "lik-overconfident", "lik-underconfident", "prior-misspec"}));
    scan->add_option("--n", scan_n, "Training points");
    scan->add_option("--K", scan_basis, "Fourier basis size");
    scan->add_option("--seed", scan_seed, "Data seed");
    scan->add_option("--lambda-grid", scan_grid, "Geometric grid lo:hi:count");
    scan->add_option("--samples", scan_samples, "Posterior draws for the derivative estimate");
    scan->add_option("--nu", scan_nu, "Evaluation-proxy points");
    scan->add_option("--out", scan_out, "CSV output path")->required();

    std::string da_transform = "permutation", da_out;
    int da_count = 50;
    long da_n = 5, da_basis = 10, da_samples = 10000, da_holdout = 10000;
    double da_lambda = 1.0;
    std::uint64_t da_seed = 5, da_holdout_seed = 2001;
    auto* da = cpe->add_subcommand("da", "Augmentation-averaged posterior diagnostics");
    da->fallthrough();
    da->add_option("--transform", da_transform, "identity, permutation, or sign-flip")
        ->check(CLI::IsMember({"identity", "permutation", "sign-flip"}));
    da->add_option("--count", da_count, "Transformations in the set");
    da->add_option("--n", da_n, "Training points");
    da->add_option("--K", da_basis, "Fourier basis size");
    da->add_option("--lambda", da_lambda, "Tempering parameter");
    da->add_option("--m", da_samples, "Posterior draws");
    da->add_option("--holdout", da_holdout, "Holdout points");
    da->add_option("--seed", da_seed, "Data seed");
    da->add_option("--holdout-seed", da_holdout_seed, "Holdout data seed");
    da->add_option("--out", da_out, "CSV output path");

    // transforms demo
    auto* transforms = app.add_subcommand("transforms", "Conjugate tempering identities");
    transforms->require_subcommand(1);
    transforms->fallthrough();
    long demo_configs = 100, demo_grid = 2001;
    std::uint64_t demo_seed = 42;
    std::string demo_out;
    auto* demo = transforms->add_subcommand(
        "demo", "Tempered Beta-Bernoulli vs reweighted prior-likelihood pairs");
    demo->fallthrough();
    demo->add_option("--configs", demo_configs, "Random configurations");
    demo->add_option("--seed", demo_seed, "Random seed");
    demo->add_option("--grid-points", demo_grid, "Density grid resolution");
    demo->add_option("--out", demo_out, "CSV output path");

    // rpb split / train / eval / baseline
    auto* rpb = app.add_subcommand("rpb", "Recursive PAC-Bayes pipeline");
    rpb->require_subcommand(1);
    rpb->fallthrough();

    long split_n = 60000, split_T = 8;
    std::string split_out;
    auto* split = rpb->add_subcommand("split", "Geometric data split plan");
    split->fallthrough();
    split->add_option("--n", split_n, "Dataset size")->required();
    split->add_option("--T", split_T, "Recursion depth")->required();
    split->add_option("--out", split_out, "CSV output path");

    DataOpts train_data;
    TrainFlags train_flags;
    long train_T = 2;
    double train_gamma = 0.5, train_delta = 0.025, train_delta_prime = 0.01;
    std::uint64_t train_seed = 1;
    std::string train_out;
    auto* train = rpb->add_subcommand("train", "Train a posterior chain");
    train->fallthrough();
    add_data_flags(train, train_data);
    add_train_flags(train, train_flags);
    train->add_option("--T", train_T, "Recursion depth")->required();
    train->add_option("--gamma", train_gamma, "Excess-loss discount per step");
    train->add_option("--delta", train_delta, "Bound confidence (enters objectives)");
    train->add_option("--delta-prime", train_delta_prime, "Monte-Carlo confidence");
    train->add_option("--seed", train_seed, "Master training seed");
    train->add_option("--out", train_out, "Chain JSON output path")->required();

    std::string eval_chain, eval_out, eval_summary;
    double eval_delta = 0.025, eval_delta_prime = 0.01;
    long eval_rounds = 20, eval_holdout_n = 0;
    std::uint64_t eval_seed = 1, eval_holdout_seed = 0;
    auto* eval = rpb->add_subcommand("eval", "Evaluate the certified bound of a chain");
    eval->fallthrough();
    eval->add_option("--chain", eval_chain, "Chain JSON path")->required();
    eval->add_option("--delta", eval_delta, "Bound confidence");
    eval->add_option("--delta-prime", eval_delta_prime, "Monte-Carlo confidence");
    eval->add_option("--rounds", eval_rounds, "Weight draws per datum");
    eval->add_option("--seed", eval_seed, "Evaluation seed");
    eval->add_option("--holdout-n", eval_holdout_n, "Holdout size for the test column (blobs)");
    eval->add_option("--holdout-seed", eval_holdout_seed, "Holdout generation seed");
    eval->add_option("--out", eval_out, "Report CSV output path")->required();
    eval->add_option("--summary", eval_summary, "Report summary JSON path");

    std::string base_method = "uninformed", base_out;
    DataOpts base_data;
    TrainFlags base_flags;
    double base_delta = 0.025, base_delta_prime = 0.01;
    std::uint64_t base_seed = 1;
    long base_holdout_n = 0;
    std::uint64_t base_holdout_seed = 0;
    auto* base = rpb->add_subcommand("baseline", "One-shot certificate baselines");
    base->fallthrough();
    base->add_option("--method", base_method, "uninformed, informed, or informed-excess")
        ->check(CLI::IsMember({"uninformed", "informed", "informed-excess"}));
    add_data_flags(base, base_data);
    add_train_flags(base, base_flags);
    base->add_option("--delta", base_delta, "Bound confidence");
    base->add_option("--delta-prime", base_delta_prime, "Monte-Carlo confidence");
    base->add_option("--seed", base_seed, "Training seed");
    base->add_option("--holdout-n", base_holdout_n, "Holdout size for the test column (blobs)");
    base->add_option("--holdout-seed", base_holdout_seed, "Holdout generation seed");
    base->add_option("--out", base_out, "Report CSV output path");

    // elbo verify
    auto* elbo = app.add_subcommand("elbo", "Mean-field objective decomposition");
    elbo->require_subcommand(1);
    elbo->fallthrough();
    long elbo_D = 4, elbo_trials = 100, elbo_nodes = 2001;
    double elbo_window = 8.0;
    std::uint64_t elbo_seed = 7;
    std::string elbo_out;
    auto* verify = elbo->add_subcommand("verify", "Quadrature check of the KL decomposition");
    verify->fallthrough();
    verify->add_option("--D", elbo_D, "Mean-field dimension");
    verify->add_option("--trials", elbo_trials, "Random configurations");
    verify->add_option("--seed", elbo_seed, "Random seed");
    verify->add_option("--nodes", elbo_nodes, "Quadrature nodes (odd)");
    verify->add_option("--window", elbo_window, "Integration window in component stds");
    verify->add_option("--out", elbo_out, "CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    try {
        if (coverage->parsed())
            return run_conc_coverage(cov_mode, cov_n, cov_delta, cov_trials, cov_seed, cov_out);
        if (scan->parsed())
            return run_cpe_scan(scan_setting, scan_n, scan_basis, scan_seed, scan_grid,
                                scan_samples, scan_nu, scan_out, threads);
        if (da->parsed())
            return run_cpe_da(da_transform, da_count, da_n, da_basis, da_lambda, da_samples,
                              da_holdout, da_seed, da_holdout_seed, da_out, threads);
        if (demo->parsed())
            return run_transforms_demo(demo_configs, demo_seed, demo_grid, demo_out);
        if (split->parsed()) return run_rpb_split(split_n, split_T, split_out);
        if (train->parsed())
            return run_rpb_train(train_data, train_flags, train_T, train_gamma, train_delta,
                                 train_delta_prime, train_seed, train_out, threads);
        if (eval->parsed())
            return run_rpb_eval(eval_chain, eval_delta, eval_delta_prime, eval_rounds, eval_seed,
                                eval_holdout_n, eval_holdout_seed, eval_out, eval_summary,
                                threads);
        if (base->parsed())
            return run_rpb_baseline(base_method, base_data, base_flags, base_delta,
                                    base_delta_prime, base_seed, base_holdout_n,
                                    base_holdout_seed, base_out, threads);
        if (verify->parsed())
            return run_elbo_verify(elbo_D, elbo_trials, elbo_seed, elbo_nodes, elbo_window,
                                   elbo_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    std::cerr << "no subcommand dispatched\n";
    return 2;
}
