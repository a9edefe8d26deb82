#include "rydnet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rydnet/random.hpp"

namespace rydnet {

namespace {

bool inside(const CellBounds& c, Vec2 p)
{
    return p.x >= c.x_lo && p.x <= c.x_hi && p.y >= c.y_lo && p.y <= c.y_hi;
}

int quadrant_of(Vec2 p)
{
    if (p.y >= 0.0)
        return p.x >= 0.0 ? 0 : 1;
    return p.x < 0.0 ? 2 : 3;
}

double min_pair_distance(const std::vector<Vec2>& pts)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            best = std::min(best, distance(pts[i], pts[j]));
    return best;
}

} // namespace

CellBounds quadrant_bounds(double L, int quadrant)
{
    const double h = 0.5 * L;
    switch (quadrant) {
    case 0: return {0.0, h, 0.0, h};
    case 1: return {-h, 0.0, 0.0, h};
    case 2: return {-h, 0.0, -h, 0.0};
    case 3: return {0.0, h, -h, 0.0};
    default: throw std::invalid_argument("quadrant index must be 0..3");
    }
}

std::vector<CellBounds> partition_cells(int M, double L)
{
    const double h = 0.5 * L;
    switch (M) {
    case 1: return {{-h, h, -h, h}};
    case 2: return {{-h, 0.0, -h, h}, {0.0, h, -h, h}};
    case 3:
    case 4: return {quadrant_bounds(L, 0), quadrant_bounds(L, 1), quadrant_bounds(L, 2), quadrant_bounds(L, 3)};
    default: throw std::invalid_argument("M must be in 1..4");
    }
}

void BoxLayout::validate() const
{
    if (M < 1 || M > 4)
        throw GeometryError("box layout: M must be in 1..4");
    if (positions.size() != static_cast<std::size_t>(M))
        throw GeometryError("box layout: position count differs from M");
    const double h = 0.5 * L;
    for (const auto& p : positions)
        if (std::abs(p.x) > h || std::abs(p.y) > h)
            throw GeometryError("box layout: atom outside the box");
    if (M > 1 && min_pair_distance(positions) < min_separation)
        throw GeometryError("box layout: atoms closer than the minimum separation");

    const auto cells = partition_cells(M, L);
    if (M == 1 || M == 2 || M == 4) {
        for (int i = 0; i < M; ++i)
            if (!inside(cells[static_cast<std::size_t>(i)], positions[static_cast<std::size_t>(i)]))
                throw GeometryError("box layout: atom " + std::to_string(i) + " outside its partition cell");
    } else {
        int prev = -1;
        for (const auto& p : positions) {
            const int q = quadrant_of(p);
            if (q <= prev)
                throw GeometryError("box layout: M=3 atoms must occupy distinct quadrants in ascending order");
            prev = q;
        }
    }
}

BoxLayout sample_box_layout(int M, double L, std::uint64_t seed, double min_separation)
{
    if (M < 1 || M > 4)
        throw std::invalid_argument("sample_box_layout: M must be in 1..4");
    if (!(L > 2.0 * min_separation))
        throw std::invalid_argument("sample_box_layout: need L > 2 * min_separation");

    Rng rng(seed);
    std::vector<CellBounds> cells = partition_cells(M, L);
    if (M == 3) {
        const std::size_t dropped = rng.index(4);
        cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(dropped));
    }

    BoxLayout layout;
    layout.L = L;
    layout.M = M;
    layout.min_separation = min_separation;
    layout.positions.resize(static_cast<std::size_t>(M));

    for (int attempt = 0; attempt <= kMaxLayoutRejections; ++attempt) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto& c = cells[i];
            // Half-open draws keep atoms off the far cell edge; the shared
            // edges at x = 0 / y = 0 then belong to exactly one cell.
            layout.positions[i] = {rng.uniform(c.x_lo, c.x_hi), rng.uniform(c.y_lo, c.y_hi)};
        }
        if (M == 1 || min_pair_distance(layout.positions) >= min_separation) {
            layout.rejections = attempt;
            return layout;
        }
    }
    std::ostringstream msg;
    msg << "sample_box_layout: no layout with min separation " << min_separation << " um after " << kMaxLayoutRejections
        << " rejections (M=" << M << ", L=" << L << ")";
    throw GeometryError(msg.str());
}

std::vector<ProbeConfiguration> probe_trajectory(double L, Probe2Path path)
{
    if (!(L > 0.0))
        throw std::invalid_argument("probe_trajectory: L must be positive");
    std::vector<ProbeConfiguration> out;
    out.reserve(kProbeConfigurations);
    const double last = static_cast<double>(kRimLocations - 1);
    for (std::size_t i = 0; i < kRimLocations; ++i) {
        const double frac = static_cast<double>(i) / last;
        const double angle = std::numbers::pi * (frac - 0.5);   // -90 .. +90 deg
        const double sweep = -L + 2.0 * L * frac;               // -L .. L
        for (std::size_t j = 0; j < kRadialOffsets; ++j) {
            const double offset = kProbeStep * static_cast<double>(j);
            ProbeConfiguration cfg;
            cfg.index = i * kRadialOffsets + j;
            const double radius = L + offset;
            cfg.r1 = {radius * std::cos(angle), radius * std::sin(angle), 0.0};
            if (path == Probe2Path::x_sweep)
                cfg.r2 = {sweep, 0.0, L + offset};
            else
                cfg.r2 = {0.0, sweep, 0.5 * L + offset};
            out.push_back(cfg);
        }
    }
    return out;
}

std::size_t NetworkRealization::output_site(int which) const
{
    if (which != 1 && which != 2)
        throw std::out_of_range("output atom must be 1 or 2");
    return static_cast<std::size_t>(box.M) + static_cast<std::size_t>(which);
}

std::vector<Vec3> NetworkRealization::positions() const
{
    std::vector<Vec3> out;
    out.reserve(sites());
    out.push_back(input_pos);
    for (const auto& p : box.positions)
        out.push_back(Vec3::in_plane(p));
    out.push_back(probe.r1);
    out.push_back(probe.r2);
    return out;
}

NetworkRealization assemble_realization(const BoxLayout& box, const ProbeConfiguration& config)
{
    return NetworkRealization{box, input_site(box.L), config};
}

void to_json(nlohmann::json& j, const Vec2& v) { j = nlohmann::json::array({v.x, v.y}); }
void from_json(const nlohmann::json& j, Vec2& v)
{
    if (!j.is_array() || j.size() != 2)
        throw std::invalid_argument("expected [x, y]");
    v = {j[0].get<double>(), j[1].get<double>()};
}
void to_json(nlohmann::json& j, const Vec3& v) { j = nlohmann::json::array({v.x, v.y, v.z}); }
void from_json(const nlohmann::json& j, Vec3& v)
{
    if (!j.is_array() || j.size() != 3)
        throw std::invalid_argument("expected [x, y, z]");
    v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(nlohmann::json& j, const BoxLayout& b)
{
    j = {{"L", b.L}, {"M", b.M}, {"positions", b.positions}, {"min_separation", b.min_separation}};
}
void from_json(const nlohmann::json& j, BoxLayout& b)
{
    b.L = j.at("L").get<double>();
    b.M = j.at("M").get<int>();
    b.positions = j.at("positions").get<std::vector<Vec2>>();
    b.min_separation = j.value("min_separation", kDefaultMinSeparation);
    b.rejections = 0;
}

void to_json(nlohmann::json& j, const ProbeConfiguration& p) { j = {{"index", p.index}, {"r1", p.r1}, {"r2", p.r2}}; }
void from_json(const nlohmann::json& j, ProbeConfiguration& p)
{
    p.index = j.at("index").get<std::size_t>();
    p.r1 = j.at("r1").get<Vec3>();
    p.r2 = j.at("r2").get<Vec3>();
}

void to_json(nlohmann::json& j, const NetworkRealization& r)
{
    j = {{"box", r.box}, {"input", r.input_pos}, {"probe", r.probe}};
}
void from_json(const nlohmann::json& j, NetworkRealization& r)
{
    r.box = j.at("box").get<BoxLayout>();
    r.input_pos = j.at("input").get<Vec3>();
    r.probe = j.at("probe").get<ProbeConfiguration>();
}

} // namespace rydnet
