#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rydnet/classify.hpp"
#include "rydnet/geometry.hpp"

namespace rydnet {

struct FeatureRecord;

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Layer widths from input to output; every layer but the last uses ReLU.
struct MlpArchitecture {
    std::vector<int> widths;

    /// in -> 1024 -> 512 -> 256 -> out
    static MlpArchitecture standard(int inputs, int outputs);
    std::size_t layers() const { return widths.size() - 1; }
    void validate() const;
};

/// Weights W[l] are (widths[l+1] x widths[l]); samples are columns.
struct Mlp {
    MlpArchitecture arch;
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;

    /// He-style uniform weights U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)), zero biases.
    static Mlp init(const MlpArchitecture& arch, std::uint64_t seed);
    static Mlp zeros(const MlpArchitecture& arch);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;
    Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
    std::size_t parameter_count() const;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
};

/// Mean squared error over all batch entries and outputs, plus its gradient.
/// X is (inputs x batch), T is (outputs x batch).
double loss_and_gradients(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T, Gradients& grads);
double mse(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T);

struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    void validate() const;
};

struct AdamState {
    std::vector<Eigen::MatrixXd> mW, vW;
    std::vector<Eigen::VectorXd> mb, vb;
    long t = 0;

    static AdamState for_net(const Mlp& net);
};

/// Increments state.t, then applies the bias-corrected update.
void adam_step(Mlp& net, AdamState& state, const Gradients& grads, const AdamParams& params);

enum class RegressionTask { positions, operators };

std::string to_string(RegressionTask task);
RegressionTask regression_task_from_string(const std::string& s);

struct OperatorEstimate {
    Eigen::VectorXd h_prime;
    Eigen::VectorXcd l;
};

/// Maps labels to network targets and back. Positions: (x / L + 1/2,
/// y / L + 1/2) per box atom. Operators: per-component z-scores of
/// h'_0..h'_{N-1}, Re l_0..Re l_{N-1}, Im l_0..Im l_{N-1}.
struct TargetCodec {
    RegressionTask task = RegressionTask::positions;
    int M = 1;
    double L = 10.0;
    Eigen::VectorXd mean;    // operators only
    Eigen::VectorXd scale;   // operators only; 1 where a component is constant

    static TargetCodec positions(int M, double L);
    static TargetCodec operators(const std::vector<FeatureRecord>& train);

    int outputs() const;
    Eigen::VectorXd encode(const FeatureRecord& r) const;
    Eigen::VectorXd encode_positions(const std::vector<Vec2>& p) const;
    Eigen::VectorXd encode_operators(const Eigen::VectorXd& h_prime, const Eigen::VectorXcd& l) const;
    std::vector<Vec2> decode_positions(const Eigen::VectorXd& y) const;
    OperatorEstimate decode_operators(const Eigen::VectorXd& y) const;
};

void to_json(nlohmann::json& j, const TargetCodec& c);
void from_json(const nlohmann::json& j, TargetCodec& c);

struct TrainingConfig {
    int epochs = 1000;
    int batch_size = 64;
    double validation_fraction = 0.1;
    int patience = 50;
    AdamParams adam;
    std::uint64_t seed = 0;
    void validate() const;
};

struct TrainingHistory {
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    double initial_validation_loss = 0.0;
    int best_epoch = -1;   // 0-based, -1 if the initial weights were never beaten
    bool stopped_early = false;
};

struct TrainedRegressor {
    Mlp net;
    StandardizationStats input_stats;
    TargetCodec codec;
    TrainingConfig config;
    TrainingHistory history;
    bool appends_positions = false;   // operator task fed [features, encoded positions]

    Eigen::VectorXd predict_encoded(const Eigen::VectorXd& inputs) const;
    std::vector<Vec2> predict_positions(const Eigen::VectorXd& inputs) const;
    OperatorEstimate predict_operators(const Eigen::VectorXd& inputs) const;

    /// Binary layout: 8-byte magic "RYDMLP01", uint64 little-endian header
    /// length, UTF-8 JSON header (architecture, codec, input statistics,
    /// config, history), then for each layer the weight matrix in
    /// column-major order followed by the bias, all as little-endian float64.
    void save(const std::filesystem::path& path) const;
    static TrainedRegressor load(const std::filesystem::path& path);
};

/// Network inputs for a record: the 400 features, optionally followed by the
/// encoded box positions.
Eigen::VectorXd regression_inputs(const FeatureRecord& r, bool append_positions);
Eigen::MatrixXd regression_inputs(const std::vector<FeatureRecord>& records, bool append_positions);

/// Trains on rows of X (inputs) and T (encoded targets). The last
/// validation_fraction of a seeded shuffle is held out; the weights with the
/// lowest validation loss are kept. Throws TrainingError on a non-finite loss.
TrainedRegressor train_regressor(const Eigen::MatrixXd& X, const Eigen::MatrixXd& T, const TargetCodec& codec,
                                 const MlpArchitecture& arch, const TrainingConfig& config,
                                 const std::function<void(int epoch, double train, double val)>& on_epoch = {});

} // namespace rydnet
