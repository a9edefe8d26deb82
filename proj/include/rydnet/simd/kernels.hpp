#pragma once

// Data-parallel inner loops with one scalar reference implementation and
// AVX2 / AVX-512 variants selected at runtime. All variants perform the same
// IEEE operations in the same order (explicit fused multiply-adds, fixed
// reduction trees), so they agree bit for bit.

#include <cstddef>
#include <string>
#include <string_view>

namespace rydnet::simd {

enum class Isa { scalar, avx2, avx512 };

/// Most capable instruction set supported by both the build and the CPU.
/// The RYDNET_ISA environment variable (scalar|avx2|avx512) caps the choice.
Isa detect_isa();
bool isa_supported(Isa isa);
std::string_view isa_name(Isa isa);
Isa isa_from_string(std::string_view name);

/// Number of independent systems propagated together. State and coupling
/// arrays are element-major: value (n, m) of lane j lives at
/// [(n * sites + m) * kLanes + j].
inline constexpr std::size_t kLanes = 8;

enum class Scheme {
    rk4,       // classical RK4 on the full generator
    exp_rk4,   // exponential RK4 (Cox-Matthews); diagonal part integrated exactly
};

/// Read-only operator data for one batch.
///
/// The generator is d rho_nm/dt = i sum_k (W_km rho_nk - W_nk rho_km) + c_nm rho_nm
/// where W is real symmetric per lane and c (shared by all lanes) collects the
/// diagonal environment terms.
struct LindbladBatch {
    std::size_t sites = 0;
    const double* coupling = nullptr;   // sites*sites*kLanes
    const double* gen_re = nullptr;     // sites*sites, rk4 only
    const double* gen_im = nullptr;
    /// exp_rk4 only: per element 12 doubles, the (re, im) pairs of
    /// exp(c h), exp(c h/2), (exp(c h/2)-1)/c, f1, f2, f3.
    const double* etd = nullptr;
    double dt = 0.0;
    Scheme scheme = Scheme::rk4;
};

/// Advances `steps` fixed steps in place. `re`/`im` hold Hermitian states;
/// every step ends with an exact Hermitian re-symmetrisation.
void lindblad_advance(Isa isa, const LindbladBatch& op, double* re, double* im, std::size_t steps);

/// out[r] = sum_j (query[j] - rows[r * dim + j])^2 for r < n_rows.
void squared_distances(Isa isa, const double* query, const double* rows, std::size_t n_rows, std::size_t dim,
                       double* out);

namespace detail {
void lindblad_advance_scalar(const LindbladBatch& op, double* re, double* im, std::size_t steps);
void lindblad_advance_avx2(const LindbladBatch& op, double* re, double* im, std::size_t steps);
void lindblad_advance_avx512(const LindbladBatch& op, double* re, double* im, std::size_t steps);
void squared_distances_scalar(const double* q, const double* rows, std::size_t n_rows, std::size_t dim, double* out);
void squared_distances_avx2(const double* q, const double* rows, std::size_t n_rows, std::size_t dim, double* out);
void squared_distances_avx512(const double* q, const double* rows, std::size_t n_rows, std::size_t dim, double* out);
bool compiled_avx2();
bool compiled_avx512();
} // namespace detail

} // namespace rydnet::simd
