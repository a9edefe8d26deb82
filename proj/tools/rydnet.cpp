// Command-line driver: dataset generation, classifier and regressor training,
// evaluation, tomography of new records, and a few physics utilities.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rydnet/classify.hpp"
#include "rydnet/config.hpp"
#include "rydnet/datagen.hpp"
#include "rydnet/dynamics.hpp"
#include "rydnet/evaluate.hpp"
#include "rydnet/neuralnet.hpp"
#include "rydnet/random.hpp"
#include "rydnet/units.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rydnet;

namespace {

// Exit codes: 0 success, 1 computational failure, 2 usage or configuration error.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::string config_path;
    std::uint64_t seed = 1;
    bool seed_given = false;
    unsigned workers = 1;
    std::string out_dir = "runs";
    std::vector<std::string> overrides;
};

Config load_config(const Globals& g)
{
    Config cfg;
    if (!g.config_path.empty()) {
        if (!fs::exists(g.config_path))
            throw UsageError("config file not found: " + g.config_path);
        cfg = Config::load(g.config_path);
    }
    for (const auto& kv : g.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw UsageError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

std::uint64_t global_seed(const Globals& g, const Config& cfg)
{
    if (g.seed_given)
        return g.seed;
    return static_cast<std::uint64_t>(cfg.get_int("seed", 1));
}

std::vector<int> parse_Ms(const Config& cfg)
{
    std::vector<int> Ms;
    for (double v : cfg.get_doubles("Ms", {1, 2, 3, 4})) {
        const int M = static_cast<int>(v);
        if (M != v || M < 1 || M > 4)
            throw UsageError("Ms entries must be integers in 1..4");
        Ms.push_back(M);
    }
    return Ms;
}

DatasetManifest manifest_from(const Config& cfg, std::uint64_t seed)
{
    DatasetManifest m;
    m.global_seed = seed;
    m.Ms = parse_Ms(cfg);
    const long long train = cfg.get_int("train_per_M", 40);
    const long long test = cfg.get_int("test_per_M", 8);
    if (train < 1 || test < 1)
        throw UsageError("train_per_M and test_per_M must be at least 1");
    m.train_per_M = static_cast<std::size_t>(train);
    m.test_per_M = static_cast<std::size_t>(test);
    m.settings = GenerationSettings::from_config(cfg);
    return m;
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

// Run directories are keyed by the dataset-defining configuration.
fs::path run_dir(const Globals& g, const Config& cfg)
{
    if (auto name = cfg.find("run_name"))
        return fs::path(g.out_dir) / *name;
    const DatasetManifest m = manifest_from(cfg, global_seed(g, cfg));
    const std::string text = json(m).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;   // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fs::path(g.out_dir) / ("run-" + hex64(h));
}

void write_text(const fs::path& path, const std::string& text)
{
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw UsageError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

Dataset open_dataset(const fs::path& dir, const DatasetFilter& filter = {})
{
    if (!fs::exists(dir / "manifest.json"))
        throw UsageError("no dataset at " + dir.string() + " (run 'generate' first or pass --dataset)");
    return load_dataset(dir, filter);
}

// ---------------------------------------------------------------- generate

int cmd_generate(const Globals& g, const std::string& dataset_opt)
{
    const Config cfg = load_config(g);
    const DatasetManifest manifest = manifest_from(cfg, global_seed(g, cfg));
    const fs::path dir = dataset_opt.empty() ? run_dir(g, cfg) / "dataset" : fs::path(dataset_opt);
    std::size_t last_pct = 101;
    const auto progress = generate_dataset(manifest, dir, g.workers, [&](const GenerationProgress& p) {
        const std::size_t pct = p.total ? 100 * p.done / p.total : 100;
        if (pct != last_pct && pct % 10 == 0) {
            std::cerr << "generate: " << p.done << "/" << p.total << " records\n";
            last_pct = pct;
        }
    });
    std::cout << "dataset " << dir.string() << "\n"
              << "records train " << manifest.n_train() << " test " << manifest.n_test() << " (resumed "
              << progress.resumed << ")\n"
              << "M values";
    for (int M : manifest.Ms)
        std::cout << ' ' << M;
    std::cout << "\nper M: train " << manifest.train_per_M << " test " << manifest.test_per_M << "\n"
              << "decoherence " << to_string(manifest.settings.decoherence.mode) << " gamma_target_MHz "
              << units::to_mhz(manifest.settings.decoherence.gamma_target) << "\n"
              << "L_um " << manifest.settings.L << " t_end_us " << manifest.settings.readout_time() << "\n"
              << "global_seed " << manifest.global_seed << "\n";
    return 0;
}

// ---------------------------------------------------------------- classifiers

ClassifierModel train_classifier(const std::string& kind, const Config& cfg, const Eigen::MatrixXd& X,
                                 const std::vector<int>& y, std::uint64_t seed, unsigned workers)
{
    if (kind == "knn")
        return KnnModel::train(X, y, {static_cast<int>(cfg.get_int("knn_k", 5))});
    if (kind == "rf") {
        ForestParams p;
        p.trees = static_cast<int>(cfg.get_int("rf_trees", 100));
        p.max_depth = static_cast<int>(cfg.get_int("rf_max_depth", -1));
        p.m_try = static_cast<int>(cfg.get_int("rf_m_try", 20));
        p.seed = derive_seed(seed, 101);
        p.workers = workers;
        return ForestModel::train(X, y, p);
    }
    if (kind == "svm") {
        SvmParams p;
        p.C = cfg.get_double("svm_C", 10.0);
        p.sigma2 = cfg.get_double("svm_sigma2", 0.0);
        p.tol = cfg.get_double("svm_tol", 1e-3);
        return SvmModel::train(X, y, p);
    }
    throw UsageError("unknown classifier '" + kind + "' (knn, svm, rf)");
}

std::vector<std::string> classifier_list(const std::string& choice)
{
    if (choice == "all")
        return {"knn", "svm", "rf"};
    return {choice};
}

int cmd_train_classifier(const Globals& g, const std::string& dataset_opt, const std::string& choice_opt)
{
    const Config cfg = load_config(g);
    const fs::path run = run_dir(g, cfg);
    const fs::path dir = dataset_opt.empty() ? run / "dataset" : fs::path(dataset_opt);
    const Dataset data = open_dataset(dir);
    if (data.train.empty() || data.test.empty())
        throw UsageError("dataset has an empty train or test split");
    const Eigen::MatrixXd X = feature_matrix(data.train);
    const std::vector<int> y = labels(data.train);
    const Eigen::MatrixXd Xt = feature_matrix(data.test);
    const std::vector<int> yt = labels(data.test);
    const std::string choice = choice_opt.empty() ? cfg.get_string("classifier", "rf") : choice_opt;
    const std::uint64_t seed = global_seed(g, cfg);

    std::vector<int> distinct = y;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() == 1)
        std::cerr << "warning: training set holds a single class (M=" << distinct.front() << ")\n";

    fs::create_directories(run / "models");
    json summary = json::object();
    for (const auto& kind : classifier_list(choice)) {
        const ClassifierModel model = train_classifier(kind, cfg, X, y, seed, g.workers);
        save_classifier(model, run / "models" / ("classifier_" + kind + ".json"));
        const ConfusionMatrix cm = evaluate_classifier(model, Xt, yt);
        std::ostringstream table;
        cm.write_table(table);
        write_text(run / "reports" / ("confusion_" + kind + ".txt"), table.str());
        write_json(run / "reports" / ("confusion_" + kind + ".json"), json(cm));
        std::cout << "[" << kind << "]\n" << table.str();
        summary[kind] = cm.accuracy();
    }
    write_json(run / "reports" / "classifier_summary.json", summary);
    return 0;
}

// ---------------------------------------------------------------- regressors

TrainingConfig training_config(const Config& cfg, std::uint64_t seed)
{
    TrainingConfig c;
    c.epochs = static_cast<int>(cfg.get_int("mlp_epochs", 1000));
    c.batch_size = static_cast<int>(cfg.get_int("mlp_batch_size", 64));
    c.validation_fraction = cfg.get_double("mlp_validation_fraction", 0.1);
    c.patience = static_cast<int>(cfg.get_int("mlp_patience", 50));
    c.adam.lr = cfg.get_double("mlp_lr", 1e-3);
    c.adam.beta1 = cfg.get_double("mlp_beta1", 0.9);
    c.adam.beta2 = cfg.get_double("mlp_beta2", 0.999);
    c.adam.eps = cfg.get_double("mlp_eps", 1e-8);
    c.seed = seed;
    c.validate();
    return c;
}

AssignmentRule assignment_rule(const Config& cfg)
{
    const std::string r = cfg.get_string("assignment", "greedy");
    if (r == "greedy")
        return AssignmentRule::greedy;
    if (r == "optimal")
        return AssignmentRule::optimal;
    throw UsageError("assignment must be greedy or optimal");
}

std::string regressor_name(RegressionTask task, int M)
{
    return "regressor_" + to_string(task) + "_M" + std::to_string(M);
}

CeilingEstimate position_ceiling(const Config& cfg, int M, double L, double min_sep, std::uint64_t seed)
{
    const auto draws = static_cast<std::size_t>(cfg.get_int("mre_max_draws", 1000));
    const std::uint64_t s = derive_seed(seed, 300 + static_cast<std::uint64_t>(M));
    return M == 1 ? mae_max(L, draws, s) : mre_max(M, L, draws, s, min_sep, assignment_rule(cfg));
}

json evaluate_regressor(const TrainedRegressor& model, const std::vector<FeatureRecord>& test, const Config& cfg,
                        std::uint64_t seed, double min_sep, std::string* table)
{
    const int M = model.codec.M;
    if (model.codec.task == RegressionTask::positions) {
        std::vector<std::vector<Vec2>> actual, predicted;
        for (const auto& r : test) {
            actual.push_back(r.box_positions);
            predicted.push_back(model.predict_positions(regression_inputs(r, false)));
        }
        const auto ceiling = position_ceiling(cfg, M, model.codec.L, min_sep, seed);
        const auto rep = position_report(actual, predicted, ceiling, assignment_rule(cfg));
        std::size_t inside = 0;
        const double h = 0.5 * model.codec.L;
        for (const auto& p : predicted)
            inside += std::all_of(p.begin(), p.end(), [&](const Vec2& v) { return std::abs(v.x) <= h && std::abs(v.y) <= h; });
        std::ostringstream os;
        rep.write_table(os);
        *table = os.str();
        json j = rep;
        j["inside_box_fraction"] = static_cast<double>(inside) / static_cast<double>(predicted.size());
        j["ratio_to_ceiling"] = rep.mean / ceiling.value;
        return j;
    }
    std::vector<Eigen::VectorXd> ah, ph;
    std::vector<Eigen::VectorXcd> al, pl;
    for (const auto& r : test) {
        const auto est = model.predict_operators(regression_inputs(r, model.appends_positions));
        ah.push_back(r.h_prime);
        al.push_back(r.l);
        ph.push_back(est.h_prime);
        pl.push_back(est.l);
    }
    const Eigen::VectorXd floors = 1e-6 * model.codec.scale;
    const auto rep = operator_report(ah, al, ph, pl, floors);
    std::ostringstream os;
    rep.write_table(os);
    *table = os.str();
    return rep;
}

int cmd_train_regressor(const Globals& g, const std::string& dataset_opt, int M, const std::string& task_name,
                        bool append_flag)
{
    const Config cfg = load_config(g);
    const fs::path run = run_dir(g, cfg);
    const fs::path dir = dataset_opt.empty() ? run / "dataset" : fs::path(dataset_opt);
    const RegressionTask task = [&] {
        try {
            return regression_task_from_string(task_name);
        } catch (const TrainingError& e) {
            throw UsageError(e.what());
        }
    }();
    const Dataset data = open_dataset(dir, DatasetFilter{M, std::nullopt});
    if (data.train.empty())
        throw UsageError("branch M=" + std::to_string(M) + " has no training records in " + dir.string());
    if (data.test.empty())
        throw UsageError("branch M=" + std::to_string(M) + " has no test records in " + dir.string());
    const bool append = task == RegressionTask::operators && (append_flag || cfg.get_bool("append_positions", false));
    if (task == RegressionTask::operators && data.manifest.settings.decoherence.mode == DecoherenceMode::none)
        std::cerr << "warning: decoherence mode 'none' leaves every operator element at zero\n";

    const std::uint64_t seed = global_seed(g, cfg);
    const TargetCodec codec = task == RegressionTask::positions ? TargetCodec::positions(M, data.manifest.settings.L)
                                                                : TargetCodec::operators(data.train);
    const Eigen::MatrixXd X = regression_inputs(data.train, append);
    Eigen::MatrixXd T(X.rows(), codec.outputs());
    for (std::size_t r = 0; r < data.train.size(); ++r)
        T.row(static_cast<Eigen::Index>(r)) = codec.encode(data.train[r]).transpose();
    const TrainingConfig tc = training_config(cfg, derive_seed(seed, 200 + 2 * static_cast<std::uint64_t>(M) +
                                                                          (task == RegressionTask::operators)));
    const auto arch = MlpArchitecture::standard(static_cast<int>(X.cols()), codec.outputs());
    const bool verbose = cfg.get_bool("verbose", false);
    TrainedRegressor model = train_regressor(X, T, codec, arch, tc, [&](int epoch, double tr, double va) {
        if (verbose || epoch % 25 == 0)
            std::cerr << "epoch " << epoch << " train " << tr << " validation " << va << "\n";
    });
    model.appends_positions = append;

    const std::string name = regressor_name(task, M);
    fs::create_directories(run / "models");
    model.save(run / "models" / (name + ".bin"));
    std::string table;
    json report = evaluate_regressor(model, data.test, cfg, seed, data.manifest.settings.min_separation, &table);
    report["task"] = to_string(task);
    report["M"] = M;
    report["epochs_run"] = model.history.validation_loss.size();
    report["best_epoch"] = model.history.best_epoch;
    report["initial_validation_loss"] = model.history.initial_validation_loss;
    report["best_validation_loss"] = model.history.best_epoch >= 0
                                         ? model.history.validation_loss[static_cast<std::size_t>(model.history.best_epoch)]
                                         : model.history.initial_validation_loss;
    report["gamma_target_MHz"] = units::to_mhz(data.manifest.settings.decoherence.gamma_target);
    write_json(run / "reports" / (name + ".json"), report);
    write_text(run / "reports" / (name + ".txt"), table);
    std::ostringstream curve;
    curve << "# epoch train_mse validation_mse\n" << std::setprecision(10);
    for (std::size_t e = 0; e < model.history.train_loss.size(); ++e)
        curve << e << ' ' << model.history.train_loss[e] << ' ' << model.history.validation_loss[e] << '\n';
    write_text(run / "reports" / (name + "_curve.txt"), curve.str());
    std::cout << table;
    return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Globals& g, const std::string& dataset_opt)
{
    const Config cfg = load_config(g);
    const fs::path run = run_dir(g, cfg);
    const fs::path dir = dataset_opt.empty() ? run / "dataset" : fs::path(dataset_opt);
    const Dataset data = open_dataset(dir);
    const fs::path models = run / "models";
    if (!fs::exists(models))
        throw UsageError("no models under " + models.string());
    const std::uint64_t seed = global_seed(g, cfg);
    json out = json::object();
    const Eigen::MatrixXd Xt = feature_matrix(data.test);
    const std::vector<int> yt = labels(data.test);
    for (const std::string kind : {"knn", "svm", "rf"}) {
        const fs::path p = models / ("classifier_" + kind + ".json");
        if (!fs::exists(p))
            continue;
        const ConfusionMatrix cm = evaluate_classifier(load_classifier(p), Xt, yt);
        out["classifiers"][kind] = cm;
        std::cout << "[" << kind << "] accuracy " << cm.accuracy() << "\n";
    }
    for (int M = 1; M <= 4; ++M)
        for (auto task : {RegressionTask::positions, RegressionTask::operators}) {
            const fs::path p = models / (regressor_name(task, M) + ".bin");
            if (!fs::exists(p))
                continue;
            std::vector<FeatureRecord> test;
            for (const auto& r : data.test)
                if (r.M == M)
                    test.push_back(r);
            if (test.empty())
                continue;
            const TrainedRegressor model = TrainedRegressor::load(p);
            std::string table;
            out["regressors"][regressor_name(task, M)] =
                evaluate_regressor(model, test, cfg, seed, data.manifest.settings.min_separation, &table);
            std::cout << "[" << regressor_name(task, M) << "]\n" << table;
        }
    write_json(run / "reports" / "eval.json", out);
    return 0;
}

// ---------------------------------------------------------------- tomography

struct TomographyInput {
    std::vector<double> features;
    std::optional<FeatureRecord> record;
};

std::vector<TomographyInput> read_tomography_input(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw UsageError("cannot read " + path.string());
    std::vector<TomographyInput> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        TomographyInput item;
        if (line.find('{') != std::string::npos) {
            try {
                FeatureRecord r = json::parse(line).get<FeatureRecord>();
                r.validate();
                item.features = r.features;
                item.record = std::move(r);
            } catch (const std::exception& e) {
                throw UsageError(path.string() + ":" + std::to_string(number) + ": " + e.what());
            }
        } else {
            for (char& c : line)
                if (c == ',')
                    c = ' ';
            std::istringstream ls(line);
            double v;
            while (ls >> v)
                item.features.push_back(v);
            if (!ls.eof())
                throw UsageError(path.string() + ":" + std::to_string(number) + ": not a number list");
        }
        if (item.features.size() != kFeatureCount)
            throw UsageError(path.string() + ":" + std::to_string(number) + ": expected " +
                             std::to_string(kFeatureCount) + " features, found " + std::to_string(item.features.size()));
        out.push_back(std::move(item));
    }
    return out;
}

int cmd_tomography(const Globals& g, const std::string& models_opt, const std::string& input,
                   const std::string& classifier_opt, const std::string& output)
{
    const Config cfg = load_config(g);
    const fs::path models = models_opt.empty() ? run_dir(g, cfg) / "models" : fs::path(models_opt);
    const std::string kind = classifier_opt.empty() ? cfg.get_string("classifier", "rf") : classifier_opt;
    const fs::path cpath = models / ("classifier_" + kind + ".json");
    if (!fs::exists(cpath))
        throw UsageError("missing classifier model " + cpath.string());
    std::map<int, TrainedRegressor> positions, operators;
    for (int M = 1; M <= 4; ++M) {
        const fs::path p = models / (regressor_name(RegressionTask::positions, M) + ".bin");
        if (!fs::exists(p))
            throw UsageError("missing branch model " + p.string());
        positions.emplace(M, TrainedRegressor::load(p));
        const fs::path q = models / (regressor_name(RegressionTask::operators, M) + ".bin");
        if (fs::exists(q))
            operators.emplace(M, TrainedRegressor::load(q));
    }
    const ClassifierModel classifier = load_classifier(cpath);
    const auto items = read_tomography_input(input);

    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(item.features.data(), static_cast<Eigen::Index>(item.features.size()));
        const int M_hat = predict(classifier, x);
        const auto pos = positions.at(M_hat).predict_positions(x);
        json doc{{"item", i}, {"M_hat", M_hat}, {"N_hat", M_hat + 3}, {"positions_um", pos}};
        if (auto it = operators.find(M_hat); it != operators.end()) {
            Eigen::VectorXd in = x;
            if (it->second.appends_positions) {
                in.conservativeResize(x.size() + 2 * M_hat);
                in.tail(2 * M_hat) = TargetCodec::positions(M_hat, it->second.codec.L).encode_positions(pos);
            }
            const auto est = it->second.predict_operators(in);
            std::vector<std::array<double, 2>> l;
            std::vector<double> abs_l;
            for (Eigen::Index n = 0; n < est.l.size(); ++n) {
                l.push_back({est.l[n].real(), est.l[n].imag()});
                abs_l.push_back(std::abs(est.l[n]));
            }
            doc["operators"] = {{"h_prime", std::vector<double>(est.h_prime.data(), est.h_prime.data() + est.h_prime.size())},
                                {"l", l},
                                {"abs_l", abs_l}};
        }
        if (item.record) {
            const auto& r = *item.record;
            json truth{{"M", r.M}, {"index", r.index}, {"M_correct", r.M == M_hat}};
            if (r.M == M_hat)
                truth[r.M == 1 ? "MAE_um" : "MRE"] = r.M == 1 ? mae(r.box_positions, pos) : mre(r.box_positions, pos);
            doc["truth"] = truth;
        }
        os << doc.dump() << '\n';
    }
    if (output.empty())
        std::cout << os.str();
    else
        write_text(output, os.str());
    return 0;
}

// ---------------------------------------------------------------- utilities

int cmd_mre_max(const Globals& g, int M, double L, long draws, bool mae_variant)
{
    const Config cfg = load_config(g);
    const std::uint64_t seed = global_seed(g, cfg);
    if (draws < 1)
        throw UsageError("--draws must be positive");
    json out;
    if (M == 1) {
        if (!mae_variant)
            throw UsageError("the MRE ceiling needs M >= 2; pass --mae for the single-atom MAE ceiling");
        out = json{{"metric", "MAE_um"}, {"M", 1}, {"L", L}, {"ceiling", mae_max(L, static_cast<std::size_t>(draws), seed)}};
    } else {
        const double min_sep = cfg.get_double("min_separation_um", kDefaultMinSeparation);
        out = json{{"metric", "MRE"}, {"M", M}, {"L", L},
                   {"ceiling", mre_max(M, L, static_cast<std::size_t>(draws), seed, min_sep, assignment_rule(cfg))}};
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_transport_trace(const Globals& g, int M, std::size_t probe, std::size_t samples, const std::string& output)
{
    const Config cfg = load_config(g);
    const GenerationSettings s = GenerationSettings::from_config(cfg);
    const std::uint64_t seed = global_seed(g, cfg);
    if (probe >= kProbeConfigurations)
        throw UsageError("--probe must be below " + std::to_string(kProbeConfigurations));
    if (samples < 2)
        throw UsageError("--samples must be at least 2");
    const BoxLayout box = sample_box_layout(M, s.L, derive_seed(seed, 1), s.min_separation);
    const auto trajectory = probe_trajectory(s.L, s.probe2);
    const NetworkRealization real = assemble_realization(box, trajectory[probe]);
    const std::size_t n = real.sites();

    EnvironmentRealization env = EnvironmentRealization::none(n);
    const auto& deco = s.decoherence;
    if (deco.mode != DecoherenceMode::none) {
        Rng rng(derive_seed(seed, 3));
        env = sample_environment(box, rng.uniform(deco.Omega_p_lo, deco.Omega_p_hi), s.eit, s.consts, derive_seed(seed, 2));
        if (deco.mode == DecoherenceMode::rescaled)
            env = rescale_decoherence(env, deco.gamma_target, rescale_sites(M));
    }
    const double t_end = cfg.get_double("trace_t_end_us", s.readout_time());
    PropagationSettings prop{s.dt, t_end, s.integrator == IntegratorChoice::exp_rk4 ? Integrator::exp_rk4 : Integrator::rk4};
    if (s.integrator == IntegratorChoice::automatic) {
        const auto H = build_hamiltonian(real, s.consts);
        if (prop.step() * stability_bound(H, env, Integrator::rk4) > kStabilityGuard)
            prop.method = Integrator::exp_rk4;
    }
    std::vector<double> times;
    for (std::size_t i = 0; i < samples; ++i)
        times.push_back(t_end * static_cast<double>(i) / static_cast<double>(samples - 1));
    const auto trace = transport_trace(real, s.consts, env, prop, times);
    std::ostringstream os;
    trace.write_table(os);
    if (output.empty())
        std::cout << os.str();
    else
        write_text(output, os.str());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Rydberg network transport simulation and network tomography"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "flat key = value configuration file");
    auto* seed_opt = app.add_option("--seed", g.seed, "global seed (overrides the 'seed' key)");
    app.add_option("--workers", g.workers, "worker threads for generation and forest training")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "root of the run directories");
    app.add_option("--set", g.overrides, "override a configuration key (key=value), repeatable");

    std::string dataset, classifier, models, input, output, task = "positions";
    int M = 2;
    double L = 10.0;
    long draws = 1000;
    bool mae_variant = false, append = false;
    std::size_t probe = 0, samples = 101;

    auto* gen = app.add_subcommand("generate", "generate a dataset");
    gen->add_option("--dataset", dataset, "output directory (default <run>/dataset)");

    auto* tc = app.add_subcommand("train-classifier", "train knn, svm, rf or all, and report confusion matrices");
    tc->add_option("--dataset", dataset, "dataset directory (default <run>/dataset)");
    tc->add_option("--classifier", classifier, "knn | svm | rf | all");

    auto* tr = app.add_subcommand("train-regressor", "train one regression branch");
    tr->add_option("--dataset", dataset, "dataset directory (default <run>/dataset)");
    tr->add_option("--M", M, "branch (box atom count)")->check(CLI::Range(1, 4));
    tr->add_option("--task", task, "positions | operators");
    tr->add_flag("--append-positions", append, "operator task: append true positions to the inputs");

    auto* ev = app.add_subcommand("eval", "evaluate every model in <run>/models on the test split");
    ev->add_option("--dataset", dataset, "dataset directory (default <run>/dataset)");

    auto* tomo = app.add_subcommand("tomography", "infer network descriptions for new records");
    tomo->add_option("--models", models, "model directory (default <run>/models)");
    tomo->add_option("--input", input, "JSONL records or lines of 400 numbers")->required();
    tomo->add_option("--classifier", classifier, "knn | svm | rf");
    tomo->add_option("--output", output, "write JSON lines here instead of stdout");

    auto* mm = app.add_subcommand("mre-max", "random-prediction MRE ceiling");
    mm->add_option("--M", M, "box atom count")->check(CLI::Range(1, 4));
    mm->add_option("--L", L, "box size in um")->check(CLI::PositiveNumber);
    mm->add_option("--draws", draws, "number of random layout pairs");
    mm->add_flag("--mae", mae_variant, "M = 1: report the MAE ceiling instead");

    auto* tt = app.add_subcommand("transport-trace", "site populations over time for one realization");
    tt->add_option("--M", M, "box atom count")->check(CLI::Range(1, 4));
    tt->add_option("--probe", probe, "probe configuration index 0..199");
    tt->add_option("--samples", samples, "number of sample times");
    tt->add_option("--output", output, "write the table here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    g.seed_given = seed_opt->count() > 0;

    try {
        if (gen->parsed())
            return cmd_generate(g, dataset);
        if (tc->parsed())
            return cmd_train_classifier(g, dataset, classifier);
        if (tr->parsed())
            return cmd_train_regressor(g, dataset, M, task, append);
        if (ev->parsed())
            return cmd_eval(g, dataset);
        if (tomo->parsed())
            return cmd_tomography(g, models, input, classifier, output);
        if (mm->parsed())
            return cmd_mre_max(g, M, L, draws, mae_variant);
        if (tt->parsed())
            return cmd_transport_trace(g, M, probe, samples, output);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DatasetError& e) {
        std::cerr << "dataset error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
