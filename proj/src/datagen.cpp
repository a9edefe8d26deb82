#include "rydnet/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "rydnet/units.hpp"

namespace rydnet {

using nlohmann::json;

DecoherenceSpec DecoherenceSpec::rescaled(double gamma_target)
{
    DecoherenceSpec s;
    s.mode = DecoherenceMode::rescaled;
    s.gamma_target = gamma_target;
    // Only the shape of l survives rescaling, so any fixed probe strength will do.
    s.Omega_p_lo = s.Omega_p_hi = units::from_mhz(5.0);
    return s;
}

DecoherenceSpec DecoherenceSpec::realistic(double Omega_p_lo, double Omega_p_hi)
{
    DecoherenceSpec s;
    s.mode = DecoherenceMode::realistic;
    s.Omega_p_lo = Omega_p_lo;
    s.Omega_p_hi = Omega_p_hi;
    return s;
}

namespace {

std::string integrator_name(IntegratorChoice c)
{
    switch (c) {
    case IntegratorChoice::automatic: return "auto";
    case IntegratorChoice::rk4: return "rk4";
    case IntegratorChoice::exp_rk4: return "exp_rk4";
    }
    return "auto";
}

IntegratorChoice integrator_from_string(const std::string& s)
{
    if (s == "auto")
        return IntegratorChoice::automatic;
    if (s == "rk4")
        return IntegratorChoice::rk4;
    if (s == "exp_rk4")
        return IntegratorChoice::exp_rk4;
    throw ConfigError("integrator must be auto, rk4 or exp_rk4, got '" + s + "'");
}

std::string format_double(double v)
{
    // Shortest text that parses back to the same double.
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace

GenerationSettings GenerationSettings::from_config(const Config& cfg)
{
    GenerationSettings s;
    s.L = cfg.get_double("L_um", s.L);
    s.min_separation = cfg.get_double("min_separation_um", s.min_separation);
    s.dt = cfg.get_double("dt_us", s.dt);
    if (cfg.has("t_end_us"))
        s.t_end = cfg.get_double("t_end_us", 0.0);
    s.integrator = integrator_from_string(cfg.get_string("integrator", "auto"));
    const std::string path = cfg.get_string("probe2_path", "x_sweep");
    if (path == "x_sweep")
        s.probe2 = Probe2Path::x_sweep;
    else if (path == "y_axis")
        s.probe2 = Probe2Path::y_axis;
    else
        throw ConfigError("probe2_path must be x_sweep or y_axis, got '" + path + "'");
    s.consts = physical_constants(cfg);
    s.eit = eit_parameters(cfg);

    const auto mode = decoherence_mode_from_string(cfg.get_string("decoherence_mode", "none"));
    switch (mode) {
    case DecoherenceMode::none:
        s.decoherence = DecoherenceSpec::none();
        break;
    case DecoherenceMode::rescaled: {
        const double g = cfg.get_double("gamma_target_MHz", 0.0);
        if (!(g >= 0.0))
            throw ConfigError("gamma_target_MHz must be non-negative");
        s.decoherence = DecoherenceSpec::rescaled(units::from_mhz(g));
        break;
    }
    case DecoherenceMode::realistic: {
        const auto range = cfg.get_doubles("Omega_p_range_MHz", {1.0, 13.0});
        if (range.size() != 2 || !(range[0] > 0.0) || range[1] < range[0])
            throw ConfigError("Omega_p_range_MHz needs two increasing positive values");
        s.decoherence = DecoherenceSpec::realistic(units::from_mhz(range[0]), units::from_mhz(range[1]));
        break;
    }
    }
    if (!(s.L > 2.0 * s.min_separation))
        throw ConfigError("L_um must exceed twice min_separation_um");
    return s;
}

Config GenerationSettings::to_config() const
{
    Config c;
    c.set("L_um", format_double(L));
    c.set("min_separation_um", format_double(min_separation));
    c.set("dt_us", format_double(dt));
    if (t_end)
        c.set("t_end_us", format_double(*t_end));
    c.set("integrator", integrator_name(integrator));
    c.set("probe2_path", probe2 == Probe2Path::x_sweep ? "x_sweep" : "y_axis");
    c.set("C3_MHz_um3", format_double(units::to_mhz(consts.C3)));
    c.set("C6_MHz_um6", format_double(units::to_mhz(consts.C6)));
    c.set("C4_MHz_um4", format_double(units::to_mhz(consts.C4)));
    c.set("Omega_c_MHz", format_double(units::to_mhz(eit.Omega_c)));
    c.set("Gamma_p_MHz", format_double(units::to_mhz(eit.Gamma_p)));
    c.set("rho_bg_per_um2", format_double(eit.rho_bg));
    c.set("bg_cutoff_um", format_double(eit.bg_cutoff));
    c.set("decoherence_mode", to_string(decoherence.mode));
    c.set("gamma_target_MHz", format_double(units::to_mhz(decoherence.gamma_target)));
    c.set("Omega_p_range_MHz", format_double(units::to_mhz(decoherence.Omega_p_lo)) + "," +
                                   format_double(units::to_mhz(decoherence.Omega_p_hi)));
    return c;
}

void FeatureRecord::validate() const
{
    auto fail = [&](const std::string& what) {
        throw DatasetError("record " + std::to_string(index) + ": " + what);
    };
    if (schema_version != kSchemaVersion)
        fail("unsupported schema_version " + std::to_string(schema_version));
    if (M < 1 || M > 4)
        fail("M must be in 1..4");
    if (box_positions.size() != static_cast<std::size_t>(M))
        fail("expected " + std::to_string(M) + " box positions");
    if (features.size() != kFeatureCount)
        fail("expected " + std::to_string(kFeatureCount) + " features, found " + std::to_string(features.size()));
    for (double f : features)
        if (!(f >= 0.0 && f <= 1.0))
            fail("feature outside [0, 1]");
    if (static_cast<std::size_t>(h_prime.size()) != sites() || static_cast<std::size_t>(l.size()) != sites())
        fail("operator vectors must have N = M + 3 entries");
    if (split != "train" && split != "test")
        fail("split must be train or test");
}

void to_json(json& j, const FeatureRecord& r)
{
    json l = json::array();
    for (Eigen::Index i = 0; i < r.l.size(); ++i)
        l.push_back({r.l[i].real(), r.l[i].imag()});
    j = json{{"schema_version", r.schema_version},
             {"index", r.index},
             {"split", r.split},
             {"seed", r.seed},
             {"M", r.M},
             {"L", r.L},
             {"t_end", r.t_end},
             {"box_positions", r.box_positions},
             {"mode", to_string(r.mode)},
             {"gamma_target", r.gamma_target},
             {"Omega_p", r.Omega_p},
             {"scale", r.scale},
             {"gamma_mean", r.gamma_mean},
             {"h_prime", std::vector<double>(r.h_prime.data(), r.h_prime.data() + r.h_prime.size())},
             {"l", l},
             {"features", r.features}};
}

void from_json(const json& j, FeatureRecord& r)
{
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != kSchemaVersion)
        throw DatasetError("unsupported schema_version " + std::to_string(r.schema_version));
    r.index = j.at("index").get<std::size_t>();
    r.split = j.at("split").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.M = j.at("M").get<int>();
    r.L = j.at("L").get<double>();
    r.t_end = j.at("t_end").get<double>();
    r.box_positions = j.at("box_positions").get<std::vector<Vec2>>();
    r.mode = decoherence_mode_from_string(j.at("mode").get<std::string>());
    r.gamma_target = j.at("gamma_target").get<double>();
    r.Omega_p = j.at("Omega_p").get<double>();
    r.scale = j.at("scale").get<double>();
    r.gamma_mean = j.at("gamma_mean").get<double>();
    const auto h = j.at("h_prime").get<std::vector<double>>();
    r.h_prime = Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
    const auto& l = j.at("l");
    r.l.resize(static_cast<Eigen::Index>(l.size()));
    for (std::size_t i = 0; i < l.size(); ++i)
        r.l[static_cast<Eigen::Index>(i)] = {l[i].at(0).get<double>(), l[i].at(1).get<double>()};
    r.features = j.at("features").get<std::vector<double>>();
}

std::vector<std::size_t> rescale_sites(int M)
{
    std::vector<std::size_t> sites;
    if (M == 1)
        sites.push_back(0);
    for (int m = 1; m <= M; ++m)
        sites.push_back(static_cast<std::size_t>(m));
    return sites;
}

FeatureRecord generate_record(int M, const GenerationSettings& settings, std::uint64_t seed)
{
    const BoxLayout box = sample_box_layout(M, settings.L, derive_seed(seed, 1), settings.min_separation);
    const std::size_t n = static_cast<std::size_t>(M) + 3;
    const DecoherenceSpec& deco = settings.decoherence;

    FeatureRecord rec;
    rec.seed = seed;
    rec.M = M;
    rec.L = settings.L;
    rec.t_end = settings.readout_time();
    rec.box_positions = box.positions;
    rec.mode = deco.mode;

    EnvironmentRealization env = EnvironmentRealization::none(n);
    if (deco.mode != DecoherenceMode::none) {
        Rng rng(derive_seed(seed, 3));
        const double Omega_p = rng.uniform(deco.Omega_p_lo, deco.Omega_p_hi);
        env = sample_environment(box, Omega_p, settings.eit, settings.consts, derive_seed(seed, 2));
        const auto sites = rescale_sites(M);
        if (deco.mode == DecoherenceMode::rescaled)
            env = rescale_decoherence(env, deco.gamma_target, sites);
        rec.Omega_p = Omega_p;
        rec.gamma_target = deco.gamma_target;
        rec.scale = env.scale;
        rec.gamma_mean = mean_pair_rate(env.l, sites);
    }
    rec.h_prime = env.h_prime;
    rec.l = env.l;

    const auto trajectory = probe_trajectory(settings.L, settings.probe2);
    std::vector<AggregateHamiltonian> couplings;
    couplings.reserve(trajectory.size());
    double w_max = 0.0;
    for (const auto& config : trajectory) {
        couplings.push_back(build_hamiltonian(assemble_realization(box, config), settings.consts));
        w_max = std::max(w_max, couplings.back().max_abs());
    }

    PropagationSettings prop{settings.dt, rec.t_end, Integrator::rk4};
    switch (settings.integrator) {
    case IntegratorChoice::rk4: break;
    case IntegratorChoice::exp_rk4: prop.method = Integrator::exp_rk4; break;
    case IntegratorChoice::automatic: {
        AggregateHamiltonian probe{Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), w_max)};
        if (prop.step() * stability_bound(probe, env, Integrator::rk4) > kStabilityGuard)
            prop.method = Integrator::exp_rk4;
        break;
    }
    }

    const BatchPropagator engine(env, prop);
    const auto states = engine.run(couplings, initial_state(n));
    rec.features.assign(kFeatureCount, 0.0);
    for (std::size_t a = 0; a < states.size(); ++a) {
        const double drift = std::abs(states[a].rho.trace().real() - 1.0);
        if (!(drift <= 1e-9))
            throw std::runtime_error("record seed " + std::to_string(seed) + ": population drift " +
                                     std::to_string(drift) + " at probe configuration " + std::to_string(a));
        rec.features[a] = measure_output(states[a], static_cast<std::size_t>(M) + 1, M);
        rec.features[kProbeConfigurations + a] = measure_output(states[a], static_cast<std::size_t>(M) + 2, M);
    }
    return rec;
}

int DatasetManifest::label_of(std::size_t index) const
{
    const std::size_t within = index < n_train() ? index : index - n_train();
    return Ms[within % Ms.size()];
}

void DatasetManifest::validate() const
{
    if (schema_version != kSchemaVersion)
        throw DatasetError("unsupported manifest schema_version " + std::to_string(schema_version));
    if (Ms.empty())
        throw DatasetError("manifest lists no M values");
    for (int M : Ms)
        if (M < 1 || M > 4)
            throw DatasetError("manifest M values must be in 1..4");
    if (total() == 0)
        throw DatasetError("manifest requests no records");
}

void to_json(json& j, const DatasetManifest& m)
{
    std::map<int, std::size_t> train_counts, test_counts;
    for (int M : m.Ms) {
        train_counts[M] += m.train_per_M;
        test_counts[M] += m.test_per_M;
    }
    json counts = json::object();
    for (const auto& [M, c] : train_counts)
        counts[std::to_string(M)] = {{"train", c}, {"test", test_counts[M]}};
    j = json{{"schema_version", m.schema_version},
             {"global_seed", m.global_seed},
             {"seed_rule", "record_seed = splitmix64(global_seed ^ splitmix64(record_index))"},
             {"Ms", m.Ms},
             {"train_per_M", m.train_per_M},
             {"test_per_M", m.test_per_M},
             {"n_train", m.n_train()},
             {"n_test", m.n_test()},
             {"counts", counts},
             {"settings", m.settings.to_config().values()}};
}

void from_json(const json& j, DatasetManifest& m)
{
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion)
        throw DatasetError("unsupported manifest schema_version " + std::to_string(m.schema_version));
    m.global_seed = j.at("global_seed").get<std::uint64_t>();
    m.Ms = j.at("Ms").get<std::vector<int>>();
    m.train_per_M = j.at("train_per_M").get<std::size_t>();
    m.test_per_M = j.at("test_per_M").get<std::size_t>();
    Config cfg;
    for (const auto& [k, v] : j.at("settings").items())
        cfg.set(k, v.get<std::string>());
    m.settings = GenerationSettings::from_config(cfg);
}

namespace {

// Count leading lines of `file` that parse as the expected records; rewrite
// the file without anything after them.
std::size_t salvage(const std::filesystem::path& file, const DatasetManifest& manifest, std::size_t first_index,
                    std::size_t expected)
{
    if (!std::filesystem::exists(file))
        return 0;
    std::ifstream in(file, std::ios::binary);
    std::string kept, line;
    std::size_t good = 0;
    while (good < expected && std::getline(in, line)) {
        if (in.eof())
            break;   // no trailing newline: partial write
        try {
            FeatureRecord r = json::parse(line).get<FeatureRecord>();
            r.validate();
            const std::size_t idx = first_index + good;
            if (r.index != idx || r.seed != manifest.seed_of(idx) || r.M != manifest.label_of(idx))
                break;
        } catch (const std::exception&) {
            break;
        }
        kept += line;
        kept += '\n';
        ++good;
    }
    in.close();
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out << kept;
    return good;
}

} // namespace

GenerationProgress generate_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir,
                                    unsigned workers, const std::function<void(const GenerationProgress&)>& on_progress)
{
    manifest.validate();
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path manifest_path = dir / "manifest.json";
    const std::string manifest_text = json(manifest).dump(2) + "\n";

    bool resume = false;
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        if (ss.str() != manifest_text)
            throw DatasetError(dir.string() + " already holds a dataset with a different manifest");
        resume = true;
    } else {
        std::ofstream out(manifest_path, std::ios::binary);
        out << manifest_text;
        if (!out)
            throw DatasetError("cannot write " + manifest_path.string());
    }

    const fs::path train_path = dir / "train.jsonl";
    const fs::path test_path = dir / "test.jsonl";
    std::size_t start = 0;
    if (resume) {
        start = salvage(train_path, manifest, 0, manifest.n_train());
        if (start == manifest.n_train())
            start += salvage(test_path, manifest, manifest.n_train(), manifest.n_test());
        else
            std::ofstream(test_path, std::ios::binary | std::ios::trunc);
    } else {
        std::ofstream(train_path, std::ios::binary | std::ios::trunc);
        std::ofstream(test_path, std::ios::binary | std::ios::trunc);
    }

    GenerationProgress progress{start, manifest.total(), start};
    if (start == manifest.total()) {
        if (on_progress)
            on_progress(progress);
        return progress;
    }

    const std::size_t total = manifest.total();
    std::vector<std::string> lines(total);
    std::vector<char> ready(total, 0);
    std::exception_ptr failure;
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{start};
    std::atomic<bool> stop{false};
    // Bounded look-ahead keeps memory flat when one record is slow.
    const std::size_t window = std::max<std::size_t>(4 * std::max(workers, 1u), 16);
    std::size_t written = start;

    auto work = [&] {
        for (;;) {
            std::size_t idx;
            {
                std::unique_lock lock(mu);
                cv.wait(lock, [&] { return stop || next.load() < written + window || next.load() >= total; });
                if (stop || next.load() >= total)
                    return;
                idx = next++;
            }
            try {
                FeatureRecord r = generate_record(manifest.label_of(idx), manifest.settings, manifest.seed_of(idx));
                r.index = idx;
                r.split = idx < manifest.n_train() ? "train" : "test";
                std::string text = json(r).dump();
                std::lock_guard lock(mu);
                lines[idx] = std::move(text);
                ready[idx] = 1;
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure)
                    failure = std::current_exception();
                stop = true;
            }
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::max(workers, 1u); ++w)
        pool.emplace_back(work);

    std::ofstream train_out(train_path, std::ios::binary | std::ios::app);
    std::ofstream test_out(test_path, std::ios::binary | std::ios::app);
    {
        std::unique_lock lock(mu);
        while (written < total) {
            cv.wait(lock, [&] { return stop || ready[written]; });
            if (stop && !ready[written])
                break;
            std::string text = std::move(lines[written]);
            const bool is_train = written < manifest.n_train();
            ++written;
            lock.unlock();
            std::ofstream& out = is_train ? train_out : test_out;
            out << text << '\n';
            out.flush();
            progress.done = written;
            if (on_progress)
                on_progress(progress);
            lock.lock();
            cv.notify_all();
        }
        stop = true;
    }
    cv.notify_all();
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
    return progress;
}

DatasetManifest load_manifest(const std::filesystem::path& dir)
{
    const auto path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in)
        throw DatasetError("cannot read " + path.string());
    try {
        DatasetManifest m = json::parse(in).get<DatasetManifest>();
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw DatasetError(path.string() + ": " + e.what());
    }
}

std::vector<FeatureRecord> load_records(const std::filesystem::path& file, const DatasetFilter& filter)
{
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw DatasetError("cannot read " + file.string());
    std::vector<FeatureRecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (in.eof() && !line.empty())
            throw DatasetError(file.string() + ":" + std::to_string(number) + ": truncated record (no newline)");
        if (line.empty())
            continue;
        FeatureRecord r;
        try {
            r = json::parse(line).get<FeatureRecord>();
            r.validate();
        } catch (const std::exception& e) {
            throw DatasetError(file.string() + ":" + std::to_string(number) + ": " + e.what());
        }
        if (filter.M && r.M != *filter.M)
            continue;
        if (filter.mode && r.mode != *filter.mode)
            continue;
        out.push_back(std::move(r));
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& dir, const DatasetFilter& filter)
{
    Dataset d;
    d.manifest = load_manifest(dir);
    d.train = load_records(dir / "train.jsonl", filter);
    d.test = load_records(dir / "test.jsonl", filter);
    return d;
}

Eigen::MatrixXd feature_matrix(const std::vector<FeatureRecord>& records)
{
    Eigen::MatrixXd X(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(kFeatureCount));
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].features.size() != kFeatureCount)
            throw DatasetError("record " + std::to_string(records[r].index) + " has the wrong feature count");
        for (std::size_t j = 0; j < kFeatureCount; ++j)
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = records[r].features[j];
    }
    return X;
}

std::vector<int> labels(const std::vector<FeatureRecord>& records)
{
    std::vector<int> y;
    y.reserve(records.size());
    for (const auto& r : records)
        y.push_back(r.M);
    return y;
}

} // namespace rydnet
