#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rydnet/simd/kernels.hpp"

namespace rydnet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-feature z-scoring. Constant features (sigma < 1e-12) keep sigma = 1.
struct StandardizationStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;

    static StandardizationStats fit(const Eigen::MatrixXd& X);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

void to_json(nlohmann::json& j, const StandardizationStats& s);
void from_json(const nlohmann::json& j, StandardizationStats& s);

/// Labels are the node counts 1..4; row = actual, column = predicted.
inline constexpr int kClassCount = 4;

struct ConfusionMatrix {
    std::array<std::array<long, kClassCount>, kClassCount> counts{};

    void add(int actual, int predicted);
    long total() const;
    long correct() const;
    long row_sum(int actual) const;
    double accuracy() const;
    void write_table(std::ostream& os) const;
};

void to_json(nlohmann::json& j, const ConfusionMatrix& c);

struct KnnParams {
    int k = 5;
};

class KnnModel {
public:
    static KnnModel train(const Eigen::MatrixXd& X, const std::vector<int>& y, const KnnParams& params = {});
    int predict(const Eigen::VectorXd& x) const;
    /// Indices of the k nearest training rows, nearest first (distance ties by index).
    std::vector<std::size_t> neighbours(const Eigen::VectorXd& x) const;

    nlohmann::json to_json() const;
    static KnnModel from_json(const nlohmann::json& j);

    int k() const { return k_; }
    const StandardizationStats& stats() const { return stats_; }

private:
    StandardizationStats stats_;
    RowMatrix X_;   // standardized training features
    std::vector<int> y_;
    int k_ = 5;
    simd::Isa isa_ = simd::detect_isa();
};

struct ForestParams {
    int trees = 100;
    int max_depth = -1;   // unlimited
    int m_try = 20;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

struct TreeNode {
    int feature = -1;   // -1 marks a leaf
    double threshold = 0.0;   // go left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    std::array<int, kClassCount> histogram{};   // bootstrap counts per label 1..4
};

struct DecisionTree {
    std::vector<TreeNode> nodes;   // nodes[0] is the root

    int predict(const double* x) const;
    int depth() const;
};

class ForestModel {
public:
    static ForestModel train(const Eigen::MatrixXd& X, const std::vector<int>& y, const ForestParams& params = {});
    int predict(const Eigen::VectorXd& x) const;
    std::array<int, kClassCount> votes(const Eigen::VectorXd& x) const;

    nlohmann::json to_json() const;
    static ForestModel from_json(const nlohmann::json& j);

    const std::vector<DecisionTree>& trees() const { return trees_; }

private:
    std::vector<DecisionTree> trees_;
    ForestParams params_;
    std::size_t n_features_ = 0;
};

/// Grows one tree on the rows `sample` of X (duplicates allowed). Exposed for tests.
DecisionTree grow_tree(const Eigen::MatrixXd& X, const std::vector<int>& y, std::vector<std::size_t> sample,
                       int max_depth, int m_try, std::uint64_t seed);

struct SvmParams {
    double C = 10.0;
    double sigma2 = 0.0;   // RBF width; <= 0 selects the median pairwise squared distance
    double tol = 1e-3;
    long max_iterations = 0;   // <= 0: 100 * n + 10^6
};

/// Binary soft-margin SVM dual solved by SMO with second-order working-set
/// selection. Inputs: precomputed kernel matrix K and labels +-1.
struct BinarySvmSolution {
    Eigen::VectorXd alpha;
    double rho = 0.0;   // decision f(x) = sum_i alpha_i y_i K(x_i, x) - rho
    long iterations = 0;
    double objective = 0.0;   // 1/2 a'Qa - e'a
};

BinarySvmSolution solve_svm_dual(const Eigen::MatrixXd& K, const std::vector<int>& y_pm, double C, double tol,
                                 long max_iterations);

double median_pairwise_sq_distance(const Eigen::MatrixXd& X);
/// exp(-|a - b|^2 / (2 sigma2)) for all row pairs.
Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double sigma2);

class SvmModel {
public:
    static SvmModel train(const Eigen::MatrixXd& X, const std::vector<int>& y, const SvmParams& params = {});
    int predict(const Eigen::VectorXd& x) const;
    /// One-vs-rest decision values, one per entry of classes().
    Eigen::VectorXd decision(const Eigen::VectorXd& x) const;

    nlohmann::json to_json() const;
    static SvmModel from_json(const nlohmann::json& j);

    const std::vector<int>& classes() const { return classes_; }
    double sigma2() const { return sigma2_; }
    double C() const { return C_; }
    /// Dual coefficients alpha (not multiplied by y) of class c's machine, over its support vectors.
    const std::vector<double>& alphas(std::size_t c) const { return machines_[c].alpha; }

private:
    struct Machine {
        std::vector<std::size_t> support;   // rows of sv_
        std::vector<double> alpha;
        std::vector<double> coef;           // alpha_i * y_i
        double rho = 0.0;
        long iterations = 0;
    };
    StandardizationStats stats_;
    Eigen::MatrixXd sv_;   // union of support vectors, standardized
    std::vector<int> classes_;
    std::vector<Machine> machines_;
    double sigma2_ = 1.0;
    double C_ = 10.0;
};

using ClassifierModel = std::variant<KnnModel, ForestModel, SvmModel>;

std::string classifier_kind(const ClassifierModel& model);
int predict(const ClassifierModel& model, const Eigen::VectorXd& x);
ConfusionMatrix evaluate_classifier(const ClassifierModel& model, const Eigen::MatrixXd& X, const std::vector<int>& y);

/// Self-describing JSON document {schema_version, kind, model}.
void save_classifier(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_classifier(const std::filesystem::path& path);

} // namespace rydnet
