#include <cstdlib>
#include <stdexcept>
#include <string>

#include "rydnet/simd/kernels.hpp"

namespace rydnet::simd {

namespace {

bool cpu_has(Isa isa)
{
#if defined(__x86_64__) || defined(__i386__)
    switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Isa::avx512: return __builtin_cpu_supports("avx512f");
    }
    return false;
#else
    return isa == Isa::scalar;
#endif
}

int rank(Isa isa) { return static_cast<int>(isa); }

} // namespace

bool isa_supported(Isa isa)
{
    switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return detail::compiled_avx2() && cpu_has(Isa::avx2);
    case Isa::avx512: return detail::compiled_avx512() && cpu_has(Isa::avx512);
    }
    return false;
}

std::string_view isa_name(Isa isa)
{
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
    }
    return "scalar";
}

Isa isa_from_string(std::string_view name)
{
    if (name == "scalar")
        return Isa::scalar;
    if (name == "avx2")
        return Isa::avx2;
    if (name == "avx512")
        return Isa::avx512;
    throw std::invalid_argument("unknown instruction set '" + std::string(name) + "'");
}

Isa detect_isa()
{
    static const Isa chosen = [] {
        Isa cap = Isa::avx512;
        if (const char* env = std::getenv("RYDNET_ISA"); env && *env)
            cap = isa_from_string(env);
        for (Isa isa : {Isa::avx512, Isa::avx2})
            if (rank(isa) <= rank(cap) && isa_supported(isa))
                return isa;
        return Isa::scalar;
    }();
    return chosen;
}

void lindblad_advance(Isa isa, const LindbladBatch& op, double* re, double* im, std::size_t steps)
{
    if (!isa_supported(isa))
        throw std::invalid_argument("instruction set not available: " + std::string(isa_name(isa)));
    switch (isa) {
    case Isa::scalar: detail::lindblad_advance_scalar(op, re, im, steps); break;
    case Isa::avx2: detail::lindblad_advance_avx2(op, re, im, steps); break;
    case Isa::avx512: detail::lindblad_advance_avx512(op, re, im, steps); break;
    }
}

void squared_distances(Isa isa, const double* query, const double* rows, std::size_t n_rows, std::size_t dim,
                       double* out)
{
    if (!isa_supported(isa))
        throw std::invalid_argument("instruction set not available: " + std::string(isa_name(isa)));
    switch (isa) {
    case Isa::scalar: detail::squared_distances_scalar(query, rows, n_rows, dim, out); break;
    case Isa::avx2: detail::squared_distances_avx2(query, rows, n_rows, dim, out); break;
    case Isa::avx512: detail::squared_distances_avx512(query, rows, n_rows, dim, out); break;
    }
}

} // namespace rydnet::simd
