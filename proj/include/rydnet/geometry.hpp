#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace rydnet {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Vec2&, const Vec2&) = default;
    double norm() const { return std::hypot(x, y); }
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static Vec3 in_plane(Vec2 p) { return {p.x, p.y, 0.0}; }
    friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend bool operator==(const Vec3&, const Vec3&) = default;
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }
inline double distance(Vec3 a, Vec3 b) { return (a - b).norm(); }

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultMinSeparation = 3.1;   // um
inline constexpr int kMaxLayoutRejections = 10'000;
inline constexpr std::size_t kRimLocations = 20;
inline constexpr std::size_t kRadialOffsets = 10;
inline constexpr std::size_t kProbeConfigurations = kRimLocations * kRadialOffsets;
inline constexpr double kProbeStep = 0.2;               // um, both dr and dz

/// The M atoms inside the L x L box, centred on the origin in the z = 0 plane.
/// Atom order follows the partition cells (see cell_bounds()).
struct BoxLayout {
    double L = 10.0;
    int M = 1;
    std::vector<Vec2> positions;
    double min_separation = kDefaultMinSeparation;
    int rejections = 0;   // rejected joint draws before acceptance

    /// Throws GeometryError describing the first violated invariant.
    void validate() const;
};

struct CellBounds {
    double x_lo, x_hi, y_lo, y_hi;
};

/// Partition cells used by sample_box_layout: M=1 whole box, M=2 left/right
/// halves, M=3/M=4 quadrants. Quadrant q follows the usual orientation:
/// 0 (+,+), 1 (-,+), 2 (-,-), 3 (+,-).
CellBounds quadrant_bounds(double L, int quadrant);
std::vector<CellBounds> partition_cells(int M, double L);

/// Draws a layout by joint rejection sampling (at most kMaxLayoutRejections
/// rejected draws). For M=3 the three occupied quadrants are chosen uniformly
/// from the four; positions stay in ascending quadrant order.
BoxLayout sample_box_layout(int M, double L, std::uint64_t seed, double min_separation = kDefaultMinSeparation);

enum class Probe2Path {
    x_sweep,  // x sweep in [-L, L] at y = 0, z = L + j dz
    y_axis,   // y sweep in [-L, L] at x = 0, z = L/2 + j dz
};

struct ProbeConfiguration {
    std::size_t index = 0;   // 10 * rim_location + radial_offset
    Vec3 r1;                 // output atom 1
    Vec3 r2;                 // output atom 2
};

/// The 200 joint output-atom positions. Output atom 1 sits on 20 rim angles
/// spread evenly over [-90, +90] degrees (the side facing away from the input
/// site) at radius L + j*0.2; output atom 2 follows `path`.
std::vector<ProbeConfiguration> probe_trajectory(double L, Probe2Path path = Probe2Path::x_sweep);

/// One fully placed aggregate. Site indices are zero-based:
/// 0 input, 1..M box atoms, M+1 and M+2 the two output atoms.
struct NetworkRealization {
    BoxLayout box;
    Vec3 input_pos;
    ProbeConfiguration probe;

    std::size_t sites() const { return static_cast<std::size_t>(box.M) + 3; }
    std::size_t output_site(int which) const;   // which = 1 or 2
    std::vector<Vec3> positions() const;
};

/// Input site at distance L to the left of the box centre.
inline Vec3 input_site(double L) { return {-L, 0.0, 0.0}; }

NetworkRealization assemble_realization(const BoxLayout& box, const ProbeConfiguration& config);

void to_json(nlohmann::json& j, const Vec2& v);
void from_json(const nlohmann::json& j, Vec2& v);
void to_json(nlohmann::json& j, const Vec3& v);
void from_json(const nlohmann::json& j, Vec3& v);
void to_json(nlohmann::json& j, const BoxLayout& b);
void from_json(const nlohmann::json& j, BoxLayout& b);
void to_json(nlohmann::json& j, const ProbeConfiguration& p);
void from_json(const nlohmann::json& j, ProbeConfiguration& p);
void to_json(nlohmann::json& j, const NetworkRealization& r);
void from_json(const nlohmann::json& j, NetworkRealization& r);

} // namespace rydnet
