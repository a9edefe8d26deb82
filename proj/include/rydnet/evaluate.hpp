#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rydnet/geometry.hpp"

namespace rydnet {

enum class AssignmentRule {
    greedy,    // atom n (in index order) takes the nearest unused prediction
    optimal,   // minimum total distance over all permutations
};

struct Assignment {
    std::vector<std::size_t> prediction_of;   // prediction index paired with actual atom n
    double total_distance = 0.0;
};

/// Distance ties go to the smaller prediction index (greedy) or the
/// lexicographically first permutation (optimal).
Assignment assign_predictions(std::span<const Vec2> actual, std::span<const Vec2> predicted,
                              AssignmentRule rule = AssignmentRule::greedy);

/// Mean distance over all unordered pairs of box atoms (M >= 2).
double mean_pair_distance(std::span<const Vec2> atoms);

/// (1/M) sum_n |R_n^pred - R_n| / d_mean. Throws std::invalid_argument for M = 1.
double mre(std::span<const Vec2> actual, std::span<const Vec2> predicted, AssignmentRule rule = AssignmentRule::greedy);
/// |R^pred - R| for a single atom. Throws std::invalid_argument unless M = 1.
double mae(std::span<const Vec2> actual, std::span<const Vec2> predicted);

struct CeilingEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t draws = 0;
};

/// Random-prediction ceiling: P_N independent (actual, predicted) layout
/// pairs drawn like sample_box_layout, scored with mre(); d_mean from the
/// actual layout. Draw p uses seeds derive_seed(seed, 2p) and derive_seed(seed, 2p + 1).
CeilingEstimate mre_max(int M, double L, std::size_t P_N = 1000, std::uint64_t seed = 0,
                        double min_separation = kDefaultMinSeparation, AssignmentRule rule = AssignmentRule::greedy);
/// M = 1 analogue: mean |R^pred - R| for independent uniform points in the box.
CeilingEstimate mae_max(double L, std::size_t P_N = 1000, std::uint64_t seed = 0);

struct PositionErrorReport {
    std::string metric;                // "MRE" or "MAE_um"
    std::vector<double> per_record;
    std::vector<double> d_mean;        // per record, um (empty for MAE)
    double mean = 0.0;
    double median = 0.0;
    CeilingEstimate ceiling;

    void write_table(std::ostream& os) const;
};

PositionErrorReport position_report(const std::vector<std::vector<Vec2>>& actual,
                                    const std::vector<std::vector<Vec2>>& predicted, const CeilingEstimate& ceiling,
                                    AssignmentRule rule = AssignmentRule::greedy);

void to_json(nlohmann::json& j, const CeilingEstimate& c);
void to_json(nlohmann::json& j, const PositionErrorReport& r);

struct Histogram {
    double lo = 0.0;
    double width = 0.05;
    std::vector<long> counts;   // last bin collects everything >= lo + width * (bins - 1)
};

/// Relative errors of one operator component pooled over sites and records.
struct ComponentErrors {
    std::string name;                  // "h_prime", "re_l", "im_l", "abs_l"
    std::vector<double> relative;      // included elements only
    std::size_t excluded = 0;          // |actual| below the floor
    double floor = 0.0;
    double median = 0.0;
    double mean = 0.0;
    double pearson = 0.0;              // over the included elements
    std::vector<std::pair<double, double>> scatter;   // (actual, predicted)
    Histogram histogram;
};

/// Per-element |pred - act| / |act| for elements with |act| >= floor.
/// Throws std::invalid_argument if every element is below the floor.
ComponentErrors operator_mre(const std::string& name, std::span<const double> actual, std::span<const double> predicted,
                             double floor);

double pearson(std::span<const double> a, std::span<const double> b);
double median(std::vector<double> v);
Histogram histogram(std::span<const double> values, double lo, double width, std::size_t bins);

struct OperatorErrorReport {
    std::vector<ComponentErrors> components;
    double median_all = 0.0;   // median over every included element of h_prime, re_l, im_l
    std::size_t included = 0;
    std::size_t excluded = 0;

    void write_table(std::ostream& os) const;
};

void to_json(nlohmann::json& j, const ComponentErrors& c);
void to_json(nlohmann::json& j, const OperatorErrorReport& r);

/// Builds the h', Re l, Im l and |l| breakdown. `floors` has 3N entries laid
/// out like the operator targets (h' sites, Re l sites, Im l sites); |l| uses
/// the smaller of the Re l and Im l floors.
OperatorErrorReport operator_report(const std::vector<Eigen::VectorXd>& actual_h,
                                    const std::vector<Eigen::VectorXcd>& actual_l,
                                    const std::vector<Eigen::VectorXd>& predicted_h,
                                    const std::vector<Eigen::VectorXcd>& predicted_l, const Eigen::VectorXd& floors);

} // namespace rydnet
