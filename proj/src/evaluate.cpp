#include "rydnet/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "rydnet/random.hpp"

namespace rydnet {

using nlohmann::json;

Assignment assign_predictions(std::span<const Vec2> actual, std::span<const Vec2> predicted, AssignmentRule rule)
{
    if (actual.size() != predicted.size())
        throw std::invalid_argument("assign_predictions: actual and predicted counts differ");
    const std::size_t M = actual.size();
    Assignment out;
    out.prediction_of.assign(M, 0);
    if (rule == AssignmentRule::greedy) {
        std::vector<char> used(M, 0);
        for (std::size_t n = 0; n < M; ++n) {
            std::size_t best = M;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < M; ++k) {
                if (used[k])
                    continue;
                const double d = distance(actual[n], predicted[k]);
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            used[best] = 1;
            out.prediction_of[n] = best;
            out.total_distance += best_d;
        }
        return out;
    }
    std::vector<std::size_t> perm(M);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best_total = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t n = 0; n < M; ++n)
            total += distance(actual[n], predicted[perm[n]]);
        if (total < best_total) {
            best_total = total;
            out.prediction_of = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.total_distance = best_total;
    return out;
}

double mean_pair_distance(std::span<const Vec2> atoms)
{
    if (atoms.size() < 2)
        throw std::invalid_argument("mean_pair_distance: need at least two atoms");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < atoms.size(); ++a)
        for (std::size_t b = a + 1; b < atoms.size(); ++b) {
            sum += distance(atoms[a], atoms[b]);
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

double mre(std::span<const Vec2> actual, std::span<const Vec2> predicted, AssignmentRule rule)
{
    if (actual.size() < 2)
        throw std::invalid_argument("mre needs M >= 2; use mae for a single atom");
    const Assignment a = assign_predictions(actual, predicted, rule);
    return a.total_distance / (static_cast<double>(actual.size()) * mean_pair_distance(actual));
}

double mae(std::span<const Vec2> actual, std::span<const Vec2> predicted)
{
    if (actual.size() != 1 || predicted.size() != 1)
        throw std::invalid_argument("mae is defined for M = 1 only; use mre");
    return distance(actual[0], predicted[0]);
}

namespace {

CeilingEstimate summarize(const std::vector<double>& v)
{
    CeilingEstimate c;
    c.draws = v.size();
    const double n = static_cast<double>(v.size());
    c.value = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v)
            ss += (x - c.value) * (x - c.value);
        c.stderr_ = std::sqrt(ss / (n - 1.0) / n);
    }
    return c;
}

} // namespace

CeilingEstimate mre_max(int M, double L, std::size_t P_N, std::uint64_t seed, double min_separation,
                        AssignmentRule rule)
{
    if (M < 2)
        throw std::invalid_argument("mre_max needs M >= 2; use mae_max for a single atom");
    if (P_N == 0)
        throw std::invalid_argument("mre_max needs at least one draw");
    std::vector<double> v;
    v.reserve(P_N);
    for (std::size_t p = 0; p < P_N; ++p) {
        const BoxLayout actual = sample_box_layout(M, L, derive_seed(seed, 2 * p), min_separation);
        const BoxLayout fake = sample_box_layout(M, L, derive_seed(seed, 2 * p + 1), min_separation);
        v.push_back(mre(actual.positions, fake.positions, rule));
    }
    return summarize(v);
}

CeilingEstimate mae_max(double L, std::size_t P_N, std::uint64_t seed)
{
    if (P_N == 0)
        throw std::invalid_argument("mae_max needs at least one draw");
    Rng rng(seed);
    const double h = 0.5 * L;
    std::vector<double> v;
    v.reserve(P_N);
    for (std::size_t p = 0; p < P_N; ++p) {
        const Vec2 a{rng.uniform(-h, h), rng.uniform(-h, h)};
        const Vec2 b{rng.uniform(-h, h), rng.uniform(-h, h)};
        v.push_back(distance(a, b));
    }
    return summarize(v);
}

double median(std::vector<double> v)
{
    if (v.empty())
        throw std::invalid_argument("median of an empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0)
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    return m;
}

PositionErrorReport position_report(const std::vector<std::vector<Vec2>>& actual,
                                    const std::vector<std::vector<Vec2>>& predicted, const CeilingEstimate& ceiling,
                                    AssignmentRule rule)
{
    if (actual.empty() || actual.size() != predicted.size())
        throw std::invalid_argument("position_report: need matching, non-empty record lists");
    PositionErrorReport r;
    const bool single = actual.front().size() == 1;
    r.metric = single ? "MAE_um" : "MRE";
    r.ceiling = ceiling;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (single) {
            r.per_record.push_back(mae(actual[i], predicted[i]));
        } else {
            r.per_record.push_back(mre(actual[i], predicted[i], rule));
            r.d_mean.push_back(mean_pair_distance(actual[i]));
        }
    }
    r.mean = std::accumulate(r.per_record.begin(), r.per_record.end(), 0.0) / static_cast<double>(r.per_record.size());
    r.median = median(r.per_record);
    return r;
}

void PositionErrorReport::write_table(std::ostream& os) const
{
    os << "# record " << metric << (d_mean.empty() ? "" : " d_mean_um") << '\n';
    os << std::setprecision(8);
    for (std::size_t i = 0; i < per_record.size(); ++i) {
        os << i << ' ' << per_record[i];
        if (!d_mean.empty())
            os << ' ' << d_mean[i];
        os << '\n';
    }
    os << "# mean " << mean << " median " << median << " ceiling " << ceiling.value << " +- " << ceiling.stderr_ << '\n';
}

void to_json(json& j, const CeilingEstimate& c)
{
    j = json{{"value", c.value}, {"stderr", c.stderr_}, {"draws", c.draws}};
}

void to_json(json& j, const PositionErrorReport& r)
{
    j = json{{"metric", r.metric}, {"mean", r.mean},       {"median", r.median},
             {"ceiling", r.ceiling}, {"per_record", r.per_record}, {"d_mean", r.d_mean}};
}

double pearson(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("pearson: need two equally long series of length >= 2");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0)
        return 0.0;
    return sab / std::sqrt(saa * sbb);
}

Histogram histogram(std::span<const double> values, double lo, double width, std::size_t bins)
{
    if (bins == 0 || !(width > 0.0))
        throw std::invalid_argument("histogram: need positive width and at least one bin");
    Histogram h{lo, width, std::vector<long>(bins, 0)};
    for (double v : values) {
        const double pos = std::floor((v - lo) / width);
        const auto bin = pos < 0.0 ? std::size_t{0} : std::min(static_cast<std::size_t>(pos), bins - 1);
        ++h.counts[bin];
    }
    return h;
}

namespace {

ComponentErrors component_errors(const std::string& name, std::span<const double> actual,
                                 std::span<const double> predicted, std::span<const double> floors)
{
    if (actual.size() != predicted.size() || actual.size() != floors.size())
        throw std::invalid_argument("operator_mre: actual and predicted lengths differ");
    ComponentErrors c;
    c.name = name;
    c.floor = floors.empty() ? 0.0 : *std::min_element(floors.begin(), floors.end());
    std::vector<double> kept_actual, kept_predicted;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        c.scatter.emplace_back(actual[i], predicted[i]);
        if (std::abs(actual[i]) < floors[i]) {
            ++c.excluded;
            continue;
        }
        kept_actual.push_back(actual[i]);
        kept_predicted.push_back(predicted[i]);
        c.relative.push_back(std::abs(predicted[i] - actual[i]) / std::abs(actual[i]));
    }
    if (c.relative.empty())
        throw std::invalid_argument("operator_mre: every '" + name + "' element is below the floor");
    c.median = median(c.relative);
    c.mean = std::accumulate(c.relative.begin(), c.relative.end(), 0.0) / static_cast<double>(c.relative.size());
    c.pearson = kept_actual.size() >= 2 ? pearson(kept_actual, kept_predicted) : 0.0;
    c.histogram = histogram(c.relative, 0.0, 0.05, 41);
    return c;
}

} // namespace

ComponentErrors operator_mre(const std::string& name, std::span<const double> actual, std::span<const double> predicted,
                             double floor)
{
    const std::vector<double> floors(actual.size(), floor);
    return component_errors(name, actual, predicted, floors);
}

OperatorErrorReport operator_report(const std::vector<Eigen::VectorXd>& actual_h,
                                    const std::vector<Eigen::VectorXcd>& actual_l,
                                    const std::vector<Eigen::VectorXd>& predicted_h,
                                    const std::vector<Eigen::VectorXcd>& predicted_l, const Eigen::VectorXd& floors)
{
    const std::size_t R = actual_h.size();
    if (R == 0 || actual_l.size() != R || predicted_h.size() != R || predicted_l.size() != R)
        throw std::invalid_argument("operator_report: need matching, non-empty record lists");
    const Eigen::Index N = actual_h.front().size();
    if (floors.size() != 3 * N)
        throw std::invalid_argument("operator_report: floors must have 3N entries");

    std::vector<double> a[4], p[4], f[4];
    for (std::size_t r = 0; r < R; ++r) {
        for (Eigen::Index n = 0; n < N; ++n) {
            a[0].push_back(actual_h[r][n]);
            p[0].push_back(predicted_h[r][n]);
            f[0].push_back(floors[n]);
            a[1].push_back(actual_l[r][n].real());
            p[1].push_back(predicted_l[r][n].real());
            f[1].push_back(floors[N + n]);
            a[2].push_back(actual_l[r][n].imag());
            p[2].push_back(predicted_l[r][n].imag());
            f[2].push_back(floors[2 * N + n]);
            a[3].push_back(std::abs(actual_l[r][n]));
            p[3].push_back(std::abs(predicted_l[r][n]));
            f[3].push_back(std::min(floors[N + n], floors[2 * N + n]));
        }
    }
    const char* names[4] = {"h_prime", "re_l", "im_l", "abs_l"};
    OperatorErrorReport rep;
    std::vector<double> pooled;
    for (int g = 0; g < 4; ++g) {
        rep.components.push_back(component_errors(names[g], a[g], p[g], f[g]));
        if (g < 3) {
            const auto& c = rep.components.back();
            pooled.insert(pooled.end(), c.relative.begin(), c.relative.end());
            rep.included += c.relative.size();
            rep.excluded += c.excluded;
        }
    }
    rep.median_all = median(pooled);
    return rep;
}

void OperatorErrorReport::write_table(std::ostream& os) const
{
    os << "# component median_rel_err mean_rel_err pearson included excluded\n";
    os << std::setprecision(6);
    for (const auto& c : components)
        os << c.name << ' ' << c.median << ' ' << c.mean << ' ' << c.pearson << ' ' << c.relative.size() << ' '
           << c.excluded << '\n';
    os << "# pooled median (h_prime, re_l, im_l) " << median_all << '\n';
}

void to_json(json& j, const ComponentErrors& c)
{
    json scatter = json::array();
    for (const auto& [a, p] : c.scatter)
        scatter.push_back({a, p});
    j = json{{"name", c.name},
             {"median", c.median},
             {"mean", c.mean},
             {"pearson", c.pearson},
             {"included", c.relative.size()},
             {"excluded", c.excluded},
             {"floor", c.floor},
             {"histogram", {{"lo", c.histogram.lo}, {"width", c.histogram.width}, {"counts", c.histogram.counts}}},
             {"scatter", scatter}};
}

void to_json(json& j, const OperatorErrorReport& r)
{
    j = json{{"median_all", r.median_all}, {"included", r.included}, {"excluded", r.excluded}, {"components", r.components}};
}

} // namespace rydnet
