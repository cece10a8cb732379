// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Pass criterion names as arguments to run a subset.
//
// Training-based criteria use a desk-scale network (three hidden layers of 32
// units, Adam at 1.5e-4) on the synthetic task; see README for the rationale.

#include "gradient_check.hpp"
#include "oracles.hpp"

#include <milpool/milpool.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

using namespace milpool;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Verdict {
    bool pass = true;
    std::string detail;
};

std::string fmt(double x, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << x;
    return s.str();
}

std::string sci(double x) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(1) << x;
    return s.str();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// -- desk-scale training ---------------------------------------------------------

ExperimentConfig desk_config(PoolingKind pooling, Phi phi, std::uint64_t seed) {
    ExperimentConfig c;
    c.pooling = pooling;
    c.phi = phi;
    c.hidden = {32, 32, 32};
    c.dropout = 0.2;
    c.lr = 1.5e-4;
    c.batch_size = 32;
    c.steps = 10000;
    c.eval_every = 500;
    c.seed = seed;
    return c;
}

struct Split {
    Dataset train, eval;
};

/// K=10, M=16, L=10, 1-2 positive instances; 6000 bags split 5000 / 1000.
Split default_task(std::uint64_t seed) {
    SyntheticSpec s;
    s.bags_per_class.assign(10, 600);
    s.separation = 3.5;
    s.seed = seed;
    SplitResult parts = split(generate_synthetic(s).dataset, 5.0 / 6.0, 1.0 / 6.0, Rng(seed).derive(Stream::split));
    return {std::move(parts.train), std::move(parts.eval)};
}

/// Class 0 is 50 times more frequent than each of the other nine classes.
Split skewed_task(std::uint64_t seed) {
    SyntheticSpec s;
    s.bags_per_class.assign(10, 60);
    s.bags_per_class[0] = 3000;
    s.separation = 3.5;
    s.seed = seed;
    SplitResult parts = split(generate_synthetic(s).dataset, 5.0 / 6.0, 1.0 / 6.0, Rng(seed).derive(Stream::split));
    return {std::move(parts.train), std::move(parts.eval)};
}

struct RunResult {
    double map = 0.0;
    MetricsReport report;
};

RunResult train_once(const ExperimentConfig& cfg, const Split& data, const std::string& label) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainOutcome out = train_model(cfg, data.train, data.eval);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  " << label << " seed " << cfg.seed << ": best mAP " << fmt(out.log.best_map) << " at step "
              << out.log.best_step << " (" << fmt(secs, 1) << " s)\n";
    return {out.log.best_map, out.best_report};
}

// Softmax-attention runs are shared by the ordering and the phi criteria.
std::map<std::uint64_t, double>& softmax_attention_maps() {
    static std::map<std::uint64_t, double> cache;
    return cache;
}

double softmax_attention_map(std::uint64_t seed, const Split& data) {
    auto& cache = softmax_attention_maps();
    if (!cache.count(seed))
        cache[seed] = train_once(desk_config(PoolingKind::attention, Phi::softmax, seed), data, "attention-softmax").map;
    return cache[seed];
}

// -- criteria ----------------------------------------------------------------------

Verdict reference_d_prime() {
    // (AUC, d-prime) reference rows from the balancing, measure and pooling comparisons.
    const std::pair<double, double> rows[] = {{0.957, 2.429}, {0.960, 2.473}, {0.961, 2.500}, {0.964, 2.547},
                                              {0.965, 2.558}, {0.958, 2.442}, {0.960, 2.473}, {0.959, 2.452},
                                              {0.960, 2.480}, {0.965, 2.558}};
    Verdict v;
    double worst = 0.0;
    for (auto [a, d] : rows) {
        const double err = std::abs(d_prime(a) - d);
        worst = std::max(worst, err);
        if (err > 0.01) v.pass = false;
    }
    v.detail = std::to_string(std::size(rows)) + " rows, max |error| " + fmt(worst) + " (limit 0.01)";
    return v;
}

Verdict pooling_ordering() {
    Verdict v;
    std::size_t ordered = 0;
    std::vector<double> gaps;
    std::ostringstream per_seed;
    for (auto seed : kSeeds) {
        const Split data = default_task(seed);
        const double att = softmax_attention_map(seed, data);
        const double col = train_once(desk_config(PoolingKind::collective, Phi::softmax, seed), data, "collective").map;
        const double mx = train_once(desk_config(PoolingKind::max, Phi::softmax, seed), data, "max").map;
        ordered += att > col && col > mx;
        gaps.push_back(att - col);
        per_seed << " s" << seed << "=" << fmt(att, 3) << "/" << fmt(col, 3) << "/" << fmt(mx, 3);
    }
    const double gap = median(gaps);
    v.pass = ordered >= 4 && gap >= 0.02;
    v.detail = "attention>collective>max on " + std::to_string(ordered) + "/5 seeds (need 4), median gap " +
               fmt(gap) + " (need 0.02); mAP att/col/max:" + per_seed.str();
    return v;
}

Verdict measure_variants() {
    Verdict v;
    std::vector<double> relu_maps, sigmoid_maps, softmax_maps, softmax_minus_relu;
    for (auto seed : kSeeds) {
        const Split data = default_task(seed);
        const double sm = softmax_attention_map(seed, data);
        const double re = train_once(desk_config(PoolingKind::attention, Phi::relu, seed), data, "attention-relu").map;
        const double sg =
            train_once(desk_config(PoolingKind::attention, Phi::sigmoid, seed), data, "attention-sigmoid").map;
        softmax_maps.push_back(sm);
        relu_maps.push_back(re);
        sigmoid_maps.push_back(sg);
        softmax_minus_relu.push_back(sm - re);
    }
    const double m_re = median(relu_maps), m_sg = median(sigmoid_maps), m_sm = median(softmax_maps);
    const double d = median(softmax_minus_relu);
    v.pass = m_re > 0.5 && m_sg > 0.5 && m_sm > 0.5 && d >= 0.0;
    v.detail = "median mAP relu " + fmt(m_re) + ", sigmoid " + fmt(m_sg) + ", softmax " + fmt(m_sm) +
               " (need > 0.5); median softmax-relu " + fmt(d) + " (need >= 0)";
    return v;
}

Verdict balancing() {
    Verdict v;
    std::size_t wins = 0;
    std::ostringstream per_seed;
    for (auto seed : kSeeds) {
        const Split data = skewed_task(seed);
        auto minority_ap = [&](bool balanced) {
            ExperimentConfig c = desk_config(PoolingKind::collective, Phi::softmax, seed);
            c.balanced = balanced;
            const RunResult r = train_once(c, data, balanced ? "balanced" : "unbalanced");
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t k = 1; k < r.report.per_class.size(); ++k)
                if (!r.report.skipped(k)) {
                    sum += r.report.per_class[k].ap;
                    ++n;
                }
            return sum / static_cast<double>(n);
        };
        const double on = minority_ap(true), off = minority_ap(false);
        wins += on > off;
        per_seed << " s" << seed << "=" << fmt(on, 3) << "/" << fmt(off, 3);
    }
    v.pass = wins >= 4;
    v.detail = "balanced beats unbalanced on minority-class AP on " + std::to_string(wins) +
               "/5 seeds (need 4); on/off:" + per_seed.str();
    return v;
}

Verdict gradient_sweep() {
    const std::vector<std::pair<std::string, PoolingStrategy>> strategies = {
        {"collective", Collective{}},
        {"max", MaxSelection{}},
        {"weighted(w(x))", WeightedCollective{[](std::span<const double> x) { return 1.0 + x[0] * x[0]; }}},
        {"weighted(learned)", WeightedCollective{}},
        {"attention-relu", Attention{Phi::relu}},
        {"attention-sigmoid", Attention{Phi::sigmoid}},
        {"attention-softmax", Attention{Phi::softmax}},
    };
    Verdict v;
    std::ostringstream detail;
    std::uint64_t seed = 10;
    for (const auto& [name, s] : strategies) {
        const Phi phi = std::holds_alternative<Attention>(s) ? std::get<Attention>(s).phi : Phi::softmax;
        Rng rng(++seed);
        MilNetwork net = init_network({4, 3, {5}, 0.0, phi}, rng);
        net.params.measure.bias = rng_normal(rng, 1, 3, 0.5, 0.2);
        const std::vector<Matrix> bags = {rng_normal(rng, 4, 4, 0.0, 1.0)};
        const auto res = milpool::testing::check_gradients(net, s, bags, Matrix{{1, 0, 1}}, Rng(1));
        if (!(res.max_relative_error < 1e-5)) v.pass = false;
        detail << ' ' << name << '=' << sci(res.max_relative_error);
    }
    v.detail = "max relative error (limit 1e-5):" + detail.str();
    return v;
}

Verdict invariants() {
    Verdict v;
    std::vector<std::string> failed;
    auto check = [&](bool ok, const std::string& what) {
        if (!ok) failed.push_back(what);
    };
    Rng rng(2024);

    // Measure normalization, uniform reduction, expectation bounds.
    double worst_norm = 0.0, worst_uniform = 0.0;
    bool bounded = true;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t L = 1 + rng.below(12), K = 1 + rng.below(6);
        const Matrix f = rng_uniform(rng, L, K);
        const double scale = std::pow(10.0, static_cast<double>(rng.below(9)) - 4.0);
        const ProbabilityMeasure pm = normalize_measure(relu(rng_normal(rng, L, K, 0.0, scale)));
        const Matrix colsum = sum(pm.p(), Axis::rows);
        for (double c : colsum.values()) worst_norm = std::max(worst_norm, std::abs(c - 1.0));
        const Matrix F = pool(Attention{}, f, &pm);
        const Matrix hi = max(f, Axis::rows), lo = mul(max(mul(f, -1.0), Axis::rows), -1.0);
        for (std::size_t k = 0; k < K; ++k)
            bounded = bounded && F(0, k) >= lo(0, k) * (1 - 1e-15) && F(0, k) <= hi(0, k) * (1 + 1e-15);
        const ProbabilityMeasure uni = normalize_measure(Matrix(L, K, 0.1 + rng.uniform()));
        const Matrix a = pool(Attention{}, f, &uni), c = pool(Collective{}, f);
        for (std::size_t k = 0; k < K; ++k) worst_uniform = std::max(worst_uniform, std::abs(a(0, k) - c(0, k)));
    }
    check(worst_norm <= 1e-9, "normalization");
    check(worst_uniform <= 1e-12, "uniform reduction");
    check(bounded, "expectation bounds");

    // Permutation invariance of the full model, every strategy.
    {
        Rng init(5);
        const MilNetwork net = init_network({6, 4, {8, 8}, 0.2, Phi::softmax}, init);
        const Matrix bag = rng_normal(rng, 9, 6, 0.0, 1.0);
        Matrix shuffled(9, 6);
        std::vector<std::size_t> order{3, 8, 0, 5, 1, 7, 2, 6, 4};
        for (std::size_t l = 0; l < 9; ++l)
            std::copy(bag.row(order[l]).begin(), bag.row(order[l]).end(), shuffled.row(l).begin());
        double worst = 0.0;
        Rng unused(0);
        for (const PoolingStrategy& s :
             std::vector<PoolingStrategy>{Collective{}, MaxSelection{}, WeightedCollective{}, Attention{Phi::softmax}}) {
            const Matrix a = forward_bag(net, s, bag, unused).F, b = forward_bag(net, s, shuffled, unused).F;
            for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::abs(a(0, k) - b(0, k)));
        }
        check(worst <= 1e-12, "permutation invariance");
    }

    // Archive round trip.
    {
        SyntheticSpec s;
        s.num_classes = 13;
        s.bags_per_class.assign(13, 20);
        s.instances_per_bag = 7;
        s.extra_label_prob = 0.4;
        s.seed = 3;
        const Dataset ds = generate_synthetic(s).dataset;
        const auto bytes = encode_archive(ds);
        const Dataset back = decode_archive(io::ByteReader(bytes));
        check(back == ds && encode_archive(back) == bytes, "archive round trip");
    }

    // Sampler frequency bound: each class within +-B of B slots per K*B window.
    {
        SyntheticSpec s;
        s.num_classes = 6;
        s.bags_per_class = {300, 2, 17, 60, 5, 1};
        s.seed = 4;
        const Dataset ds = generate_synthetic(s).dataset;
        const std::size_t K = 6, B = 32;
        BalancedSampler sampler(ds, Rng(9));
        std::vector<std::size_t> stream;
        for (int b = 0; b < 40; ++b)
            for (auto i : sampler.next_batch(B)) stream.push_back(i);
        bool ok = true;
        for (std::size_t start = 0; start + K * B <= stream.size(); ++start) {
            std::vector<long> count(K, 0);
            for (std::size_t j = start; j < start + K * B; ++j)
                for (std::size_t k = 0; k < K; ++k) count[k] += ds.bags[stream[j]].label[k];
            for (auto c : count) ok = ok && std::abs(c - static_cast<long>(B)) <= static_cast<long>(B);
        }
        check(ok, "sampler frequency bound");
    }

    // Metric oracles.
    {
        double worst = 0.0;
        for (int trial = 0; trial < 300; ++trial) {
            const std::size_t n = 2 + rng.below(40);
            std::vector<double> s(n);
            std::vector<std::uint8_t> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = trial % 2 ? rng.uniform() : static_cast<double>(rng.below(5));
                y[i] = i == 0 ? 1 : i == 1 ? 0 : rng.uniform() < 0.4;
            }
            worst = std::max(worst, std::abs(auc(s, y) - oracle::pairwise_auc(s, y)));
            worst = std::max(worst, std::abs(average_precision(s, y) - oracle::rank_ap(s, y)));
        }
        check(worst <= 1e-9, "metric oracles");
    }

    v.pass = failed.empty();
    v.detail = "normalization err " + sci(worst_norm) + ", uniform-vs-collective err " + sci(worst_uniform);
    for (const auto& f : failed) v.detail += "; FAILED " + f;
    if (v.pass) v.detail += "; bounds, permutation, archive, sampler, metric oracles all hold";
    return v;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(MILPOOL_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict determinism() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "milpool_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string data = (dir / "task.milb").string();
    const std::string ck = (dir / "model.miln").string();
    Verdict v;
    if (run_cli("generate --seed 7 --bags-per-class 100 --out " + data) != 0) {
        v.pass = false;
        v.detail = "generate failed";
        return v;
    }
    std::string first_ck, first_log;
    for (int run = 0; run < 2; ++run) {
        const int code = run_cli("train --data " + data + " --out " + ck +
                                 " --hidden 32,32,32 --steps 400 --eval-every 100 --seed 7 --quiet");
        if (code != 0) {
            v.pass = false;
            v.detail = "train exited with " + std::to_string(code);
            return v;
        }
        if (run == 0) {
            first_ck = slurp(ck);
            first_log = slurp(ck + ".log");
        }
    }
    const bool same_ck = first_ck == slurp(ck) && !first_ck.empty();
    const bool same_log = first_log == slurp(ck + ".log") && !first_log.empty();
    v.pass = same_ck && same_log;
    v.detail = std::string("checkpoint ") + (same_ck ? "identical" : "DIFFERS") + " (" +
               std::to_string(first_ck.size()) + " bytes), run log " + (same_log ? "identical" : "DIFFERS");
    fs::remove_all(dir);
    return v;
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"reference-d-prime", reference_d_prime},
        {"gradient-sweep", gradient_sweep},
        {"invariant-suite", invariants},
        {"determinism", determinism},
        {"pooling-ordering", pooling_ordering},
        {"measure-variants", measure_variants},
        {"balancing", balancing},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && !only.count(name)) continue;
        std::cerr << "running " << name << '\n';
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
        failures += !v.pass;
    }
    return failures == 0 ? 0 : 1;
}
