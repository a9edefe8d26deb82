#include "rydnet/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "rydnet/random.hpp"

namespace rydnet {

using nlohmann::json;

namespace {

constexpr int kModelSchema = 1;

int label_slot(int label)
{
    if (label < 1 || label > kClassCount)
        throw ModelError("class label " + std::to_string(label) + " outside 1.." + std::to_string(kClassCount));
    return label - 1;
}

void check_training_set(const Eigen::MatrixXd& X, const std::vector<int>& y)
{
    if (X.rows() == 0)
        throw ModelError("empty training set");
    if (static_cast<std::size_t>(X.rows()) != y.size())
        throw ModelError("feature rows and labels differ in count");
    for (int label : y)
        label_slot(label);
}

json matrix_to_json(const Eigen::MatrixXd& M)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(M.cols()));
        for (Eigen::Index c = 0; c < M.cols(); ++c)
            row[static_cast<std::size_t>(c)] = M(r, c);
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j)
{
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw ModelError("ragged matrix in model file");
        for (Eigen::Index c = 0; c < cols; ++c)
            M(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return M;
}

Eigen::VectorXd vector_from_json(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

} // namespace

StandardizationStats StandardizationStats::fit(const Eigen::MatrixXd& X)
{
    if (X.rows() == 0)
        throw ModelError("cannot standardize an empty training set");
    StandardizationStats s;
    const double n = static_cast<double>(X.rows());
    s.mean = X.colwise().sum().transpose() / n;
    s.stddev.resize(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double var = (X.col(j).array() - s.mean[j]).square().sum() / n;
        const double sd = std::sqrt(var);
        s.stddev[j] = sd < 1e-12 ? 1.0 : sd;
        if (X.col(j).maxCoeff() == X.col(j).minCoeff())
            s.mean[j] = X(0, j);   // the summed mean can be off by an ulp
    }
    return s;
}

Eigen::MatrixXd StandardizationStats::apply(const Eigen::MatrixXd& X) const
{
    if (X.cols() != mean.size())
        throw ModelError("feature width " + std::to_string(X.cols()) + " does not match the model (" +
                         std::to_string(mean.size()) + ")");
    return (X.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
}

Eigen::VectorXd StandardizationStats::apply(const Eigen::VectorXd& x) const
{
    if (x.size() != mean.size())
        throw ModelError("feature width " + std::to_string(x.size()) + " does not match the model (" +
                         std::to_string(mean.size()) + ")");
    return (x - mean).cwiseQuotient(stddev);
}

void to_json(json& j, const StandardizationStats& s)
{
    j = json{{"mean", to_std(s.mean)}, {"stddev", to_std(s.stddev)}};
}

void from_json(const json& j, StandardizationStats& s)
{
    s.mean = vector_from_json(j.at("mean"));
    s.stddev = vector_from_json(j.at("stddev"));
    if (s.mean.size() != s.stddev.size())
        throw ModelError("standardization vectors differ in length");
}

void ConfusionMatrix::add(int actual, int predicted)
{
    ++counts[static_cast<std::size_t>(label_slot(actual))][static_cast<std::size_t>(label_slot(predicted))];
}

long ConfusionMatrix::total() const
{
    long t = 0;
    for (const auto& row : counts)
        t += std::accumulate(row.begin(), row.end(), 0L);
    return t;
}

long ConfusionMatrix::correct() const
{
    long c = 0;
    for (std::size_t i = 0; i < counts.size(); ++i)
        c += counts[i][i];
    return c;
}

long ConfusionMatrix::row_sum(int actual) const
{
    const auto& row = counts[static_cast<std::size_t>(label_slot(actual))];
    return std::accumulate(row.begin(), row.end(), 0L);
}

double ConfusionMatrix::accuracy() const
{
    const long t = total();
    if (t == 0)
        throw ModelError("accuracy of an empty confusion matrix");
    return static_cast<double>(correct()) / static_cast<double>(t);
}

void ConfusionMatrix::write_table(std::ostream& os) const
{
    os << "actual\\predicted";
    for (int c = 1; c <= kClassCount; ++c)
        os << std::setw(8) << c;
    os << '\n';
    for (int r = 1; r <= kClassCount; ++r) {
        os << std::setw(16) << r;
        for (int c = 1; c <= kClassCount; ++c)
            os << std::setw(8) << counts[static_cast<std::size_t>(r - 1)][static_cast<std::size_t>(c - 1)];
        os << '\n';
    }
    os << "accuracy " << std::fixed << std::setprecision(4) << accuracy() << std::defaultfloat << '\n';
}

void to_json(json& j, const ConfusionMatrix& c)
{
    j = json{{"labels", {1, 2, 3, 4}}, {"counts", c.counts}, {"total", c.total()}, {"accuracy", c.accuracy()}};
}

// ---------------------------------------------------------------- KNN

KnnModel KnnModel::train(const Eigen::MatrixXd& X, const std::vector<int>& y, const KnnParams& params)
{
    check_training_set(X, y);
    if (params.k < 1 || static_cast<std::size_t>(params.k) > y.size())
        throw ModelError("knn: k must lie in [1, number of training rows]");
    KnnModel m;
    m.stats_ = StandardizationStats::fit(X);
    m.X_ = m.stats_.apply(X);
    m.y_ = y;
    m.k_ = params.k;
    return m;
}

std::vector<std::size_t> KnnModel::neighbours(const Eigen::VectorXd& x) const
{
    const Eigen::VectorXd q = stats_.apply(x);
    const auto n = static_cast<std::size_t>(X_.rows());
    std::vector<double> d(n);
    simd::squared_distances(isa_, q.data(), X_.data(), n, static_cast<std::size_t>(X_.cols()), d.data());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto k = static_cast<std::size_t>(k_);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return d[a] < d[b] || (d[a] == d[b] && a < b); });
    idx.resize(k);
    return idx;
}

int KnnModel::predict(const Eigen::VectorXd& x) const
{
    const Eigen::VectorXd q = stats_.apply(x);
    const auto nb = neighbours(x);
    std::array<int, kClassCount> votes{};
    std::array<double, kClassCount> dist{};
    for (std::size_t i : nb) {
        const auto slot = static_cast<std::size_t>(label_slot(y_[i]));
        ++votes[slot];
        dist[slot] += (X_.row(static_cast<Eigen::Index>(i)).transpose() - q).norm();
    }
    int best = -1;
    for (int c = 0; c < kClassCount; ++c) {
        const auto sc = static_cast<std::size_t>(c);
        if (votes[sc] == 0)
            continue;
        if (best < 0) {
            best = c;
            continue;
        }
        const auto sb = static_cast<std::size_t>(best);
        if (votes[sc] > votes[sb] || (votes[sc] == votes[sb] && dist[sc] / votes[sc] < dist[sb] / votes[sb]))
            best = c;
    }
    return best + 1;
}

json KnnModel::to_json() const
{
    return json{{"k", k_}, {"stats", stats_}, {"labels", y_}, {"features", matrix_to_json(X_)}};
}

KnnModel KnnModel::from_json(const json& j)
{
    KnnModel m;
    m.k_ = j.at("k").get<int>();
    m.stats_ = j.at("stats").get<StandardizationStats>();
    m.y_ = j.at("labels").get<std::vector<int>>();
    m.X_ = matrix_from_json(j.at("features"));
    if (static_cast<std::size_t>(m.X_.rows()) != m.y_.size() || m.k_ < 1)
        throw ModelError("inconsistent knn model");
    return m;
}

// ---------------------------------------------------------------- random forest

int DecisionTree::predict(const double* x) const
{
    std::size_t n = 0;
    while (nodes[n].feature >= 0)
        n = static_cast<std::size_t>(x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right);
    const auto& h = nodes[n].histogram;
    return static_cast<int>(std::max_element(h.begin(), h.end()) - h.begin()) + 1;
}

int DecisionTree::depth() const
{
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, d[i]);
        if (nodes[i].feature >= 0) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return deepest;
}

namespace {

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double score = -1.0;   // sum_k c_lk^2 / n_l + sum_k c_rk^2 / n_r, larger is purer
};

double purity(const std::array<int, kClassCount>& c, int n)
{
    double s = 0.0;
    for (int v : c)
        s += static_cast<double>(v) * v;
    return s / n;
}

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& X, const std::vector<int>& y, int max_depth, int m_try, std::uint64_t seed)
        : X_(X), y_(y), max_depth_(max_depth), m_try_(m_try), rng_(seed)
    {}

    DecisionTree build(std::vector<std::size_t> sample)
    {
        DecisionTree tree;
        tree.nodes.emplace_back();
        struct Task {
            std::size_t node;
            std::vector<std::size_t> rows;
            int depth;
        };
        std::vector<Task> stack;
        stack.push_back({0, std::move(sample), 0});
        while (!stack.empty()) {
            Task t = std::move(stack.back());
            stack.pop_back();
            std::array<int, kClassCount> hist{};
            for (std::size_t r : t.rows)
                ++hist[static_cast<std::size_t>(y_[r] - 1)];
            tree.nodes[t.node].histogram = hist;
            const bool pure = std::count_if(hist.begin(), hist.end(), [](int c) { return c > 0; }) <= 1;
            if (pure || t.rows.size() < 2 || (max_depth_ >= 0 && t.depth >= max_depth_))
                continue;
            const SplitCandidate split = best_split(t.rows);
            if (split.feature < 0)
                continue;
            std::vector<std::size_t> left, right;
            for (std::size_t r : t.rows)
                (X_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left : right).push_back(r);
            const auto l = tree.nodes.size();
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            tree.nodes[t.node].feature = split.feature;
            tree.nodes[t.node].threshold = split.threshold;
            tree.nodes[t.node].left = static_cast<int>(l);
            tree.nodes[t.node].right = static_cast<int>(l + 1);
            // Right first so the left subtree is expanded next (depth-first, left to right).
            stack.push_back({l + 1, std::move(right), t.depth + 1});
            stack.push_back({l, std::move(left), t.depth + 1});
        }
        return tree;
    }

private:
    // Features are drawn without replacement; if all m_try draws are constant
    // on this node, drawing continues until a usable feature turns up.
    SplitCandidate best_split(const std::vector<std::size_t>& rows)
    {
        const auto n_features = static_cast<std::size_t>(X_.cols());
        std::vector<std::size_t> pool(n_features);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        SplitCandidate best;
        std::size_t usable = 0;
        for (std::size_t drawn = 0; drawn < n_features; ++drawn) {
            if (usable >= static_cast<std::size_t>(m_try_))
                break;
            const std::size_t pick = drawn + rng_.index(n_features - drawn);
            std::swap(pool[drawn], pool[pick]);
            if (scan_feature(static_cast<int>(pool[drawn]), rows, best))
                ++usable;
        }
        return best;
    }

    bool scan_feature(int f, const std::vector<std::size_t>& rows, SplitCandidate& best)
    {
        vals_.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            vals_[i] = {X_(static_cast<Eigen::Index>(rows[i]), f), y_[rows[i]]};
        std::sort(vals_.begin(), vals_.end());
        if (vals_.front().first == vals_.back().first)
            return false;
        std::array<int, kClassCount> left{}, right{};
        for (const auto& v : vals_)
            ++right[static_cast<std::size_t>(v.second - 1)];
        const int n = static_cast<int>(vals_.size());
        for (int i = 0; i + 1 < n; ++i) {
            const auto slot = static_cast<std::size_t>(vals_[static_cast<std::size_t>(i)].second - 1);
            ++left[slot];
            --right[slot];
            const double a = vals_[static_cast<std::size_t>(i)].first;
            const double b = vals_[static_cast<std::size_t>(i) + 1].first;
            if (a == b)
                continue;
            const double score = purity(left, i + 1) + purity(right, n - i - 1);
            if (score > best.score) {
                double thr = a + 0.5 * (b - a);
                if (!(thr < b))
                    thr = a;
                best = {f, thr, score};
            }
        }
        return true;
    }

    const Eigen::MatrixXd& X_;
    const std::vector<int>& y_;
    int max_depth_;
    int m_try_;
    Rng rng_;
    std::vector<std::pair<double, int>> vals_;
};

} // namespace

DecisionTree grow_tree(const Eigen::MatrixXd& X, const std::vector<int>& y, std::vector<std::size_t> sample,
                       int max_depth, int m_try, std::uint64_t seed)
{
    check_training_set(X, y);
    if (m_try < 1)
        throw ModelError("m_try must be at least 1");
    if (sample.empty())
        throw ModelError("cannot grow a tree on an empty sample");
    TreeBuilder builder(X, y, max_depth, m_try, seed);
    return builder.build(std::move(sample));
}

ForestModel ForestModel::train(const Eigen::MatrixXd& X, const std::vector<int>& y, const ForestParams& params)
{
    check_training_set(X, y);
    if (params.trees < 1)
        throw ModelError("random forest needs at least one tree");
    ForestModel m;
    m.params_ = params;
    m.params_.m_try = std::clamp(params.m_try, 1, static_cast<int>(X.cols()));
    m.n_features_ = static_cast<std::size_t>(X.cols());
    m.trees_.resize(static_cast<std::size_t>(params.trees));

    const std::size_t n = y.size();
    auto grow = [&](std::size_t t) {
        // Bootstrap and feature draws come from one per-tree stream.
        const std::uint64_t tree_seed = derive_seed(params.seed, t);
        Rng rng(tree_seed);
        std::vector<std::size_t> sample(n);
        for (auto& s : sample)
            s = rng.index(n);
        m.trees_[t] = grow_tree(X, y, std::move(sample), params.max_depth, m.params_.m_try, derive_seed(tree_seed, 1));
    };
    const unsigned workers = std::max(1u, params.workers);
    if (workers == 1) {
        for (std::size_t t = 0; t < m.trees_.size(); ++t)
            grow(t);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t t = w; t < m.trees_.size(); t += workers)
                    grow(t);
            });
        for (auto& th : pool)
            th.join();
    }
    return m;
}

std::array<int, kClassCount> ForestModel::votes(const Eigen::VectorXd& x) const
{
    if (static_cast<std::size_t>(x.size()) != n_features_)
        throw ModelError("feature width " + std::to_string(x.size()) + " does not match the forest (" +
                         std::to_string(n_features_) + ")");
    std::array<int, kClassCount> v{};
    for (const auto& t : trees_)
        ++v[static_cast<std::size_t>(t.predict(x.data()) - 1)];
    return v;
}

int ForestModel::predict(const Eigen::VectorXd& x) const
{
    const auto v = votes(x);
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()) + 1;
}

json ForestModel::to_json() const
{
    json trees = json::array();
    for (const auto& t : trees_) {
        std::vector<int> feature, left, right;
        std::vector<double> threshold;
        std::vector<std::array<int, kClassCount>> hist;
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            hist.push_back(n.histogram);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"histogram", hist}});
    }
    return json{{"trees_count", params_.trees}, {"max_depth", params_.max_depth}, {"m_try", params_.m_try},
                {"seed", params_.seed}, {"n_features", n_features_}, {"trees", trees}};
}

ForestModel ForestModel::from_json(const json& j)
{
    ForestModel m;
    m.params_.trees = j.at("trees_count").get<int>();
    m.params_.max_depth = j.at("max_depth").get<int>();
    m.params_.m_try = j.at("m_try").get<int>();
    m.params_.seed = j.at("seed").get<std::uint64_t>();
    m.n_features_ = j.at("n_features").get<std::size_t>();
    for (const auto& jt : j.at("trees")) {
        const auto feature = jt.at("feature").get<std::vector<int>>();
        const auto threshold = jt.at("threshold").get<std::vector<double>>();
        const auto left = jt.at("left").get<std::vector<int>>();
        const auto right = jt.at("right").get<std::vector<int>>();
        const auto hist = jt.at("histogram").get<std::vector<std::array<int, kClassCount>>>();
        DecisionTree t;
        for (std::size_t i = 0; i < feature.size(); ++i) {
            TreeNode n{feature[i], threshold[i], left[i], right[i], hist[i]};
            const auto count = static_cast<int>(feature.size());
            if (n.feature >= 0 && (n.left <= static_cast<int>(i) || n.right <= static_cast<int>(i) || n.left >= count ||
                                   n.right >= count || static_cast<std::size_t>(n.feature) >= m.n_features_))
                throw ModelError("malformed tree in forest model");
            t.nodes.push_back(n);
        }
        if (t.nodes.empty())
            throw ModelError("empty tree in forest model");
        m.trees_.push_back(std::move(t));
    }
    return m;
}

// ---------------------------------------------------------------- SVM

double median_pairwise_sq_distance(const Eigen::MatrixXd& X)
{
    const Eigen::Index n = X.rows();
    if (n < 2)
        return 1.0;
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = a + 1; b < n; ++b)
            d.push_back((X.row(a) - X.row(b)).squaredNorm());
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) {
        const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (lower + med);
    }
    return med > 0.0 ? med : 1.0;
}

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double sigma2)
{
    const Eigen::VectorXd a2 = A.rowwise().squaredNorm();
    const Eigen::VectorXd b2 = B.rowwise().squaredNorm();
    Eigen::MatrixXd K = -2.0 * (A * B.transpose());
    K.colwise() += a2;
    K.rowwise() += b2.transpose();
    const double g = -1.0 / (2.0 * sigma2);
    return (K.array().max(0.0) * g).exp().matrix();
}

BinarySvmSolution solve_svm_dual(const Eigen::MatrixXd& K, const std::vector<int>& y, double C, double tol,
                                 long max_iterations)
{
    const auto n = static_cast<Eigen::Index>(y.size());
    if (K.rows() != n || K.cols() != n)
        throw ModelError("svm: kernel matrix does not match the labels");
    if (!(C > 0.0))
        throw ModelError("svm: C must be positive");
    constexpr double tau = 1e-12;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
    auto yd = [&](Eigen::Index t) { return static_cast<double>(y[static_cast<std::size_t>(t)]); };
    auto in_up = [&](Eigen::Index t) { return (yd(t) > 0 && alpha[t] < C) || (yd(t) < 0 && alpha[t] > 0); };
    auto in_low = [&](Eigen::Index t) { return (yd(t) > 0 && alpha[t] > 0) || (yd(t) < 0 && alpha[t] < C); };

    long iter = 0;
    for (;; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        Eigen::Index i = -1;
        for (Eigen::Index t = 0; t < n; ++t)
            if (in_up(t) && -yd(t) * G[t] > gmax) {
                gmax = -yd(t) * G[t];
                i = t;
            }
        double gmax2 = -std::numeric_limits<double>::infinity();
        Eigen::Index j = -1;
        double obj_min = std::numeric_limits<double>::infinity();
        if (i >= 0) {
            for (Eigen::Index t = 0; t < n; ++t) {
                if (!in_low(t))
                    continue;
                gmax2 = std::max(gmax2, yd(t) * G[t]);
                const double b = gmax + yd(t) * G[t];
                if (b > 0) {
                    double a = K(i, i) + K(t, t) - 2.0 * K(i, t);
                    if (a <= 0)
                        a = tau;
                    const double obj = -(b * b) / a;
                    if (obj < obj_min) {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
        }
        if (i < 0 || j < 0 || gmax + gmax2 < tol)
            break;
        if (max_iterations > 0 && iter >= max_iterations) {
            throw ModelError("svm: SMO did not reach tolerance " + std::to_string(tol) + " after " +
                             std::to_string(iter) + " iterations (violation " + std::to_string(gmax + gmax2) + ")");
        }

        const double old_i = alpha[i];
        const double old_j = alpha[j];
        const double quad_raw = K(i, i) + K(j, j) - 2.0 * K(i, j);
        const double quad = quad_raw > 0 ? quad_raw : tau;
        if (y[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(j)]) {
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0) {
                alpha[j] = 0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = sum;
            }
        }
        const double di = (alpha[i] - old_i) * yd(i);
        const double dj = (alpha[j] - old_j) * yd(j);
        for (Eigen::Index t = 0; t < n; ++t)
            G[t] += yd(t) * (K(t, i) * di + K(t, j) * dj);
    }

    // Offset from the free vectors, or the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    long n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = yd(t) * G[t];
        if (alpha[t] >= C) {
            if (yd(t) < 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else if (alpha[t] <= 0) {
            if (yd(t) > 0)
                ub = std::min(ub, yg);
            else
                lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    BinarySvmSolution sol;
    sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
    sol.iterations = iter;
    sol.objective = 0.5 * alpha.dot(G - Eigen::VectorXd::Ones(n));
    sol.alpha = std::move(alpha);
    return sol;
}

SvmModel SvmModel::train(const Eigen::MatrixXd& X, const std::vector<int>& y, const SvmParams& params)
{
    check_training_set(X, y);
    SvmModel m;
    m.C_ = params.C;
    m.stats_ = StandardizationStats::fit(X);
    const Eigen::MatrixXd Z = m.stats_.apply(X);
    m.sigma2_ = params.sigma2 > 0.0 ? params.sigma2 : median_pairwise_sq_distance(Z);
    m.classes_ = y;
    std::sort(m.classes_.begin(), m.classes_.end());
    m.classes_.erase(std::unique(m.classes_.begin(), m.classes_.end()), m.classes_.end());

    const auto n = static_cast<std::size_t>(Z.rows());
    const long max_iter = params.max_iterations > 0 ? params.max_iterations : 100 * static_cast<long>(n) + 1'000'000;
    std::vector<char> used(n, 0);
    std::vector<std::vector<std::pair<std::size_t, double>>> per_class;
    if (m.classes_.size() > 1) {
        Eigen::MatrixXd K = rbf_kernel(Z, Z, m.sigma2_);
        K.diagonal().setOnes();
        for (int c : m.classes_) {
            std::vector<int> ypm(n);
            for (std::size_t i = 0; i < n; ++i)
                ypm[i] = y[i] == c ? 1 : -1;
            const auto sol = solve_svm_dual(K, ypm, params.C, params.tol, max_iter);
            Machine mach;
            mach.rho = sol.rho;
            mach.iterations = sol.iterations;
            std::vector<std::pair<std::size_t, double>> sv;
            for (std::size_t i = 0; i < n; ++i) {
                const double a = sol.alpha[static_cast<Eigen::Index>(i)];
                if (a > 0.0) {
                    sv.emplace_back(i, a * ypm[i]);
                    mach.alpha.push_back(a);
                    used[i] = 1;
                }
            }
            per_class.push_back(std::move(sv));
            m.machines_.push_back(std::move(mach));
        }
    } else {
        // A single class needs no machine; decision() is empty and predict returns it.
        m.machines_.clear();
    }

    std::vector<std::size_t> row_of(n, 0);
    std::size_t rows = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (used[i])
            row_of[i] = rows++;
    m.sv_.resize(static_cast<Eigen::Index>(rows), Z.cols());
    for (std::size_t i = 0; i < n; ++i)
        if (used[i])
            m.sv_.row(static_cast<Eigen::Index>(row_of[i])) = Z.row(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < per_class.size(); ++c)
        for (const auto& [i, coef] : per_class[c]) {
            m.machines_[c].support.push_back(row_of[i]);
            m.machines_[c].coef.push_back(coef);
        }
    return m;
}

Eigen::VectorXd SvmModel::decision(const Eigen::VectorXd& x) const
{
    const Eigen::VectorXd q = stats_.apply(x);
    Eigen::VectorXd k(sv_.rows());
    for (Eigen::Index r = 0; r < sv_.rows(); ++r)
        k[r] = std::exp(-(sv_.row(r).transpose() - q).squaredNorm() / (2.0 * sigma2_));
    Eigen::VectorXd f(static_cast<Eigen::Index>(machines_.size()));
    for (std::size_t c = 0; c < machines_.size(); ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < machines_[c].support.size(); ++i)
            s += machines_[c].coef[i] * k[static_cast<Eigen::Index>(machines_[c].support[i])];
        f[static_cast<Eigen::Index>(c)] = s - machines_[c].rho;
    }
    return f;
}

int SvmModel::predict(const Eigen::VectorXd& x) const
{
    if (machines_.empty())
        return classes_.front();
    const Eigen::VectorXd f = decision(x);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < f.size(); ++c)
        if (f[c] > f[best])
            best = c;
    return classes_[static_cast<std::size_t>(best)];
}

json SvmModel::to_json() const
{
    json machines = json::array();
    for (const auto& mach : machines_)
        machines.push_back({{"support", mach.support}, {"alpha", mach.alpha}, {"coef", mach.coef}, {"rho", mach.rho},
                            {"iterations", mach.iterations}});
    return json{{"C", C_}, {"sigma2", sigma2_}, {"kernel", "rbf"}, {"classes", classes_}, {"stats", stats_},
                {"support_vectors", matrix_to_json(sv_)}, {"machines", machines}};
}

SvmModel SvmModel::from_json(const json& j)
{
    SvmModel m;
    m.C_ = j.at("C").get<double>();
    m.sigma2_ = j.at("sigma2").get<double>();
    m.classes_ = j.at("classes").get<std::vector<int>>();
    m.stats_ = j.at("stats").get<StandardizationStats>();
    m.sv_ = matrix_from_json(j.at("support_vectors"));
    for (const auto& jm : j.at("machines")) {
        Machine mach;
        mach.support = jm.at("support").get<std::vector<std::size_t>>();
        mach.alpha = jm.at("alpha").get<std::vector<double>>();
        mach.coef = jm.at("coef").get<std::vector<double>>();
        mach.rho = jm.at("rho").get<double>();
        mach.iterations = jm.at("iterations").get<long>();
        for (std::size_t s : mach.support)
            if (s >= static_cast<std::size_t>(m.sv_.rows()))
                throw ModelError("svm support index out of range");
        m.machines_.push_back(std::move(mach));
    }
    if (m.classes_.empty() || (m.machines_.size() != m.classes_.size() && !(m.classes_.size() == 1 && m.machines_.empty())))
        throw ModelError("inconsistent svm model");
    return m;
}

// ---------------------------------------------------------------- dispatch

std::string classifier_kind(const ClassifierModel& model)
{
    switch (model.index()) {
    case 0: return "knn";
    case 1: return "rf";
    default: return "svm";
    }
}

int predict(const ClassifierModel& model, const Eigen::VectorXd& x)
{
    return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

ConfusionMatrix evaluate_classifier(const ClassifierModel& model, const Eigen::MatrixXd& X, const std::vector<int>& y)
{
    if (X.rows() == 0)
        throw ModelError("empty test set");
    if (static_cast<std::size_t>(X.rows()) != y.size())
        throw ModelError("test features and labels differ in count");
    ConfusionMatrix cm;
    for (Eigen::Index r = 0; r < X.rows(); ++r)
        cm.add(y[static_cast<std::size_t>(r)], predict(model, X.row(r).transpose()));
    return cm;
}

void save_classifier(const ClassifierModel& model, const std::filesystem::path& path)
{
    const json body = std::visit([](const auto& m) { return m.to_json(); }, model);
    const json doc{{"schema_version", kModelSchema}, {"kind", classifier_kind(model)}, {"model", body}};
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ModelError("cannot write " + path.string());
    out << doc.dump() << '\n';
}

ClassifierModel load_classifier(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ModelError("cannot read " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ModelError(path.string() + ": " + e.what());
    }
    if (doc.value("schema_version", 0) != kModelSchema)
        throw ModelError(path.string() + ": unsupported schema_version");
    const std::string kind = doc.at("kind").get<std::string>();
    const json& body = doc.at("model");
    if (kind == "knn")
        return KnnModel::from_json(body);
    if (kind == "rf")
        return ForestModel::from_json(body);
    if (kind == "svm")
        return SvmModel::from_json(body);
    throw ModelError(path.string() + ": unknown classifier kind '" + kind + "'");
}

} // namespace rydnet
