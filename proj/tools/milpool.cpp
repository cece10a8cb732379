// milpool command-line tool: generate, train, eval, inspect.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <milpool/milpool.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using namespace milpool;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

/// Anything wrong with an input file or its fit to the model.
struct DataFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class F>
auto data_stage(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const DataFailure&) {
        throw;
    } catch (const Error& e) {
        throw DataFailure(e.what());
    }
}

const std::map<std::string, bool> kOnOff{{"on", true}, {"off", false}};

std::vector<std::size_t> parse_widths(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream in(text);
    for (std::string item; std::getline(in, item, ',');) {
        std::size_t used = 0;
        unsigned long long w = 0;
        try {
            w = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || w == 0) throw ConfigError("--hidden: '" + text + "' is not a list of positive widths");
        out.push_back(static_cast<std::size_t>(w));
    }
    if (out.empty()) throw ConfigError("--hidden: at least one width is required");
    return out;
}

/// Expands `train --config FILE` into flags placed before the command-line
/// ones, so explicit flags take precedence. Keys are flag names; a leading
/// "config." and underscores are accepted so run-log headers can be replayed.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    if (args.size() < 2 || args[1] != "train") return args;
    std::string path;
    std::vector<std::string> rest;
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw DataFailure("cannot read config file '" + path + "'");
    const auto pairs = kv::parse(in);
    const bool run_log = pairs.count("format") && pairs.at("format") == "milpool-runlog";
    std::vector<std::string> out{args[0], args[1]};
    for (const auto& [name, value] : pairs) {
        std::string key = name;
        if (key.rfind("config.", 0) == 0)
            key = key.substr(7);
        else if (run_log)
            continue;
        if (key == "checkpoint") key = "out";
        std::replace(key.begin(), key.end(), '_', '-');
        out.push_back("--" + key);
        out.push_back(value);
    }
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

struct GenerateArgs {
    SyntheticSpec spec;
    std::size_t bags_per_class = 500;
    std::string out;
};

struct TrainArgs {
    ExperimentConfig cfg;
    std::string strategy = "attention";
    std::string phi = "softmax";
    std::string balanced = "on";
    std::string deterministic = "on";
    std::string hidden = "500,500,500";
    std::string data, eval_data, out, last_out, log;
    double eval_fraction = 0.2;
    bool quiet = false;
};

struct EvalArgs {
    std::string checkpoint, data, out;
};

int run_generate(const GenerateArgs& a) {
    SyntheticSpec spec = a.spec;
    spec.bags_per_class.assign(spec.num_classes, a.bags_per_class);
    const Dataset ds = generate_synthetic(spec).dataset;
    data_stage([&] { write_archive(ds, a.out); });
    std::cout << "wrote " << a.out << ": N=" << ds.size() << " K=" << ds.num_classes << " M=" << ds.feature_dim
              << '\n';
    const auto counts = ds.class_counts();
    for (std::size_t k = 0; k < counts.size(); ++k) std::cout << "class " << k << ": " << counts[k] << " bags\n";
    return 0;
}

int run_train(TrainArgs a) {
    ExperimentConfig& cfg = a.cfg;
    cfg.pooling = *parse_pooling(a.strategy);
    cfg.phi = *parse_phi(a.phi);
    cfg.balanced = kOnOff.at(a.balanced);
    cfg.deterministic = kOnOff.at(a.deterministic);
    cfg.hidden = parse_widths(a.hidden);
    cfg.validate();
    if (!(a.eval_fraction >= 0.0 && a.eval_fraction < 1.0)) throw ConfigError("--eval-fraction must be in [0, 1)");

    Dataset train, eval;
    std::vector<std::string> warnings;
    data_stage([&] {
        Dataset all = read_archive(a.data);
        if (all.empty()) throw DataFailure("training archive '" + a.data + "' holds no bags");
        if (!a.eval_data.empty()) {
            train = std::move(all);
            eval = read_archive(a.eval_data);
            if (eval.num_classes != train.num_classes || eval.feature_dim != train.feature_dim)
                throw DataFailure("eval archive has M=" + std::to_string(eval.feature_dim) + ", K=" +
                                  std::to_string(eval.num_classes) + " but training archive has M=" +
                                  std::to_string(train.feature_dim) + ", K=" + std::to_string(train.num_classes));
        } else {
            SplitResult parts = split(all, 1.0 - a.eval_fraction, a.eval_fraction, Rng(cfg.seed).derive(Stream::split));
            train = std::move(parts.train);
            eval = std::move(parts.eval);
            warnings = std::move(parts.warnings);
        }
        if (cfg.balanced) BalancedSampler(train, Rng(0)); // surface empty classes as data errors
    });
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

    TrainOutcome result = train_model(cfg, train, eval, a.quiet ? nullptr : &std::cerr);
    result.log.header.emplace_back("config.data", a.data);
    result.log.header.emplace_back("config.eval_data", a.eval_data);
    result.log.header.emplace_back("config.eval_fraction", kv::format_double(a.eval_fraction));
    result.log.header.emplace_back("config.checkpoint", a.out);

    data_stage([&] {
        write_checkpoint(result.best, a.out);
        if (!a.last_out.empty()) write_checkpoint(result.last, a.last_out);
        const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
        std::ofstream log(log_path);
        if (!log) throw DataFailure("cannot write run log '" + log_path + "'");
        result.log.write(log, !cfg.deterministic);
    });
    std::cout << "best mAP " << result.log.best_map << " at step " << result.log.best_step << "; checkpoint "
              << a.out << '\n';
    return 0;
}

int run_eval(const EvalArgs& a) {
    const auto [ck, ds] = data_stage([&] {
        Checkpoint c = read_checkpoint(a.checkpoint);
        Dataset d = read_archive(a.data);
        require_compatible(c.network, d);
        if (d.empty()) throw DataFailure("archive '" + a.data + "' holds no bags");
        return std::pair{std::move(c), std::move(d)};
    });
    const MetricsReport report = data_stage([&] { return evaluate_model(ck.network, ck.strategy, ds); });
    kv::print_report(std::cout, report);
    if (!a.out.empty())
        data_stage([&] {
            std::ofstream out(a.out);
            if (!out) throw DataFailure("cannot write report '" + a.out + "'");
            kv::write_report(out, report);
        });
    return 0;
}

int run_inspect(const std::string& path) {
    io::ByteReader r = data_stage([&] { return io::ByteReader::load(path); });
    const ArchiveHeader h = data_stage([&] { return read_archive_header(r); });
    const Dataset ds = data_stage([&] { return read_archive(path); });
    std::cout << "magic=MILB version=" << h.version << '\n'
              << "N=" << ds.size() << " K=" << ds.num_classes << " M=" << ds.feature_dim << '\n';
    const auto counts = ds.class_counts();
    for (std::size_t k = 0; k < counts.size(); ++k) std::cout << "class " << k << ": " << counts[k] << " positive\n";
    std::map<std::size_t, std::size_t> lengths;
    for (const Bag& b : ds.bags) ++lengths[b.size()];
    if (lengths.empty()) {
        std::cout << "instances per bag: none\n";
    } else {
        std::cout << "instances per bag: min " << lengths.begin()->first << " max " << lengths.rbegin()->first << '\n';
        for (auto [len, n] : lengths) std::cout << "  L=" << len << ": " << n << " bags\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiple-instance learning with attention pooling"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic bag archive");
    g->add_option("--classes", gen.spec.num_classes, "Number of classes K")->capture_default_str();
    g->add_option("--features", gen.spec.feature_dim, "Feature dimension M")->capture_default_str();
    g->add_option("--instances", gen.spec.instances_per_bag, "Instances per bag L")->capture_default_str();
    g->add_option("--bags-per-class", gen.bags_per_class, "Bags whose primary label is each class")
        ->capture_default_str();
    g->add_option("--min-positive", gen.spec.min_positive, "Fewest class instances in a positive bag")
        ->capture_default_str();
    g->add_option("--max-positive", gen.spec.max_positive, "Most class instances in a positive bag")
        ->capture_default_str();
    g->add_option("--separation", gen.spec.separation, "Distance of class centres from the origin")
        ->capture_default_str();
    g->add_option("--noise", gen.spec.noise_std, "Instance noise standard deviation")->capture_default_str();
    g->add_option("--extra-label-prob", gen.spec.extra_label_prob, "Chance of a second label per bag")
        ->capture_default_str();
    g->add_option("--seed", gen.spec.seed, "Generator seed")->capture_default_str();
    g->add_option("--out", gen.out, "Archive path")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model on an archive");
    t->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_path;
    t->add_option("--config", config_path,
                  "key=value file of train flags (a run log's config.* keys also work); command-line flags win");
    t->add_option("--data", tr.data, "Training archive")->required();
    t->add_option("--eval-data", tr.eval_data, "Eval archive (default: split off --eval-fraction of --data)");
    t->add_option("--eval-fraction", tr.eval_fraction, "Stratified eval share when --eval-data is absent")
        ->capture_default_str();
    t->add_option("--out", tr.out, "Best-mAP checkpoint path")->required();
    t->add_option("--last-out", tr.last_out, "Also write the final checkpoint here");
    t->add_option("--log", tr.log, "Run log path (default: <out>.log)");
    t->add_option("--strategy", tr.strategy, "Pooling strategy")
        ->check(CLI::IsMember({"collective", "max", "attention"}))
        ->capture_default_str();
    t->add_option("--phi", tr.phi, "Measure nonlinearity")
        ->check(CLI::IsMember({"relu", "sigmoid", "softmax"}))
        ->capture_default_str();
    t->add_option("--hidden", tr.hidden, "Comma-separated hidden layer widths")->capture_default_str();
    t->add_option("--dropout", tr.cfg.dropout, "Dropout rate")->check(CLI::Range(0.0, 0.999))->capture_default_str();
    t->add_option("--lr", tr.cfg.lr, "Adam learning rate")->capture_default_str();
    t->add_option("--batch-size", tr.cfg.batch_size, "Bags per step")->capture_default_str();
    t->add_option("--steps", tr.cfg.steps, "Optimizer steps")->capture_default_str();
    t->add_option("--eval-every", tr.cfg.eval_every, "Evaluation cadence in steps")->capture_default_str();
    t->add_option("--balanced", tr.balanced, "Class-balanced batches")->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    t->add_option("--deterministic", tr.deterministic, "Bitwise reproducible output (omits wall time from the log)")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    t->add_option("--seed", tr.cfg.seed, "Experiment seed")->capture_default_str();
    t->add_flag("--quiet", tr.quiet, "No progress lines on stderr");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score a checkpoint on an archive");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
    e->add_option("--data", ev.data, "Archive path")->required();
    e->add_option("--out", ev.out, "Write the key=value report here");

    std::string inspect_path;
    auto* in = app.add_subcommand("inspect", "Print an archive's header and statistics");
    in->add_option("path", inspect_path, "Archive path")->required();

    try {
        std::vector<std::string> args;
        try {
            args = expand_config(argc, argv);
        } catch (const std::exception& err) {
            std::cerr << "error: " << err.what() << '\n';
            return kExitUsage;
        }
        std::reverse(args.begin(), args.end());
        args.pop_back(); // program name
        app.parse(args);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*g) return run_generate(gen);
        if (*t) return run_train(tr);
        if (*e) return run_eval(ev);
        return run_inspect(inspect_path);
    } catch (const DataFailure& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitData;
    } catch (const NumericError& err) {
        std::cerr << "numeric failure: " << err.what() << '\n';
        return kExitNumeric;
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitData;
    }
}
