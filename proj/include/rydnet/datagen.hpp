#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rydnet/config.hpp"
#include "rydnet/dynamics.hpp"
#include "rydnet/geometry.hpp"
#include "rydnet/physics.hpp"
#include "rydnet/random.hpp"

namespace rydnet {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kFeatureCount = 2 * kProbeConfigurations;

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Which environment a record is generated with. Rates are angular (rad/us).
struct DecoherenceSpec {
    DecoherenceMode mode = DecoherenceMode::none;
    double gamma_target = 0.0;          // rescaled
    double Omega_p_lo = 0.0;            // realistic and rescaled: Omega_p ~ U[lo, hi]
    double Omega_p_hi = 0.0;

    static DecoherenceSpec none() { return {}; }
    static DecoherenceSpec rescaled(double gamma_target);
    static DecoherenceSpec realistic(double Omega_p_lo, double Omega_p_hi);
};

enum class IntegratorChoice { automatic, rk4, exp_rk4 };

/// Everything but M and the seed that determines a record.
struct GenerationSettings {
    double L = 10.0;
    double min_separation = kDefaultMinSeparation;
    double dt = 1e-4;
    std::optional<double> t_end;   // default_t_end(L) when unset
    IntegratorChoice integrator = IntegratorChoice::automatic;
    Probe2Path probe2 = Probe2Path::x_sweep;
    PhysicalConstants consts = PhysicalConstants::defaults();
    EitParameters eit = EitParameters::defaults();
    DecoherenceSpec decoherence;

    double readout_time() const { return t_end ? *t_end : default_t_end(L); }
    /// Reads L_um, min_separation_um, dt_us, t_end_us, integrator, probe2_path,
    /// decoherence_mode, gamma_target_MHz, Omega_p_range_MHz and the physics keys.
    static GenerationSettings from_config(const Config& cfg);
    Config to_config() const;
};

struct FeatureRecord {
    int schema_version = kSchemaVersion;
    std::size_t index = 0;
    std::string split;              // "train" or "test"
    std::uint64_t seed = 0;
    int M = 1;
    double L = 10.0;
    double t_end = 0.0;
    std::vector<Vec2> box_positions;
    DecoherenceMode mode = DecoherenceMode::none;
    double gamma_target = 0.0;      // rad/us
    double Omega_p = 0.0;           // rad/us
    double scale = 1.0;
    double gamma_mean = 0.0;        // mean pair rate over the rescaling sites, rad/us
    Eigen::VectorXd h_prime;        // N entries, rad/us
    Eigen::VectorXcd l;             // N entries
    std::vector<double> features;   // P1(a = 0..199) then P2(a = 0..199)

    std::size_t sites() const { return static_cast<std::size_t>(M) + 3; }
    /// Throws DatasetError naming the violated invariant.
    void validate() const;
};

void to_json(nlohmann::json& j, const FeatureRecord& r);
void from_json(const nlohmann::json& j, FeatureRecord& r);

/// Sites whose mean pair rate is fixed by rescaling: the box atoms, plus the
/// input site when M = 1 (a single box atom has no pair).
std::vector<std::size_t> rescale_sites(int M);

/// Samples one layout and one environment from `seed` and runs the 200 probe
/// propagations. Sub-seeds: layout derive_seed(seed, 1), environment
/// derive_seed(seed, 2), Omega_p derive_seed(seed, 3).
FeatureRecord generate_record(int M, const GenerationSettings& settings, std::uint64_t seed);

struct DatasetManifest {
    int schema_version = kSchemaVersion;
    std::uint64_t global_seed = 0;
    std::vector<int> Ms{1, 2, 3, 4};
    std::size_t train_per_M = 0;
    std::size_t test_per_M = 0;
    GenerationSettings settings;

    std::size_t n_train() const { return train_per_M * Ms.size(); }
    std::size_t n_test() const { return test_per_M * Ms.size(); }
    std::size_t total() const { return n_train() + n_test(); }
    /// Record i < n_train is train, the rest test; M cycles through Ms within each split.
    int label_of(std::size_t index) const;
    std::uint64_t seed_of(std::size_t index) const { return derive_seed(global_seed, index); }
    void validate() const;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

struct GenerationProgress {
    std::size_t done = 0;
    std::size_t total = 0;
    std::size_t resumed = 0;
};

/// Writes manifest.json, train.jsonl and test.jsonl under `dir`. Records are
/// produced by `workers` threads and written in index order. An existing,
/// matching manifest with complete leading records is resumed; a trailing
/// partial line is dropped.
GenerationProgress generate_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir,
                                    unsigned workers = 1,
                                    const std::function<void(const GenerationProgress&)>& on_progress = {});

struct DatasetFilter {
    std::optional<int> M;
    std::optional<DecoherenceMode> mode;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<FeatureRecord> train;
    std::vector<FeatureRecord> test;
};

DatasetManifest load_manifest(const std::filesystem::path& dir);
/// Reads one .jsonl file; errors name the file and the first bad line.
std::vector<FeatureRecord> load_records(const std::filesystem::path& file, const DatasetFilter& filter = {});
Dataset load_dataset(const std::filesystem::path& dir, const DatasetFilter& filter = {});

/// Rows are records, columns the 400 features.
Eigen::MatrixXd feature_matrix(const std::vector<FeatureRecord>& records);
std::vector<int> labels(const std::vector<FeatureRecord>& records);

} // namespace rydnet
