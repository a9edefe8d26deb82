// AVX-512F variant: one __m512d per logical 8-lane vector.

#include "kernel_impl.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>

namespace rydnet::simd {
namespace {

struct Avx512 {
    __m512d v;

    static Avx512 zero() { return {_mm512_setzero_pd()}; }
    static Avx512 set1(double x) { return {_mm512_set1_pd(x)}; }
    static Avx512 load(const double* p) { return {_mm512_loadu_pd(p)}; }
    static Avx512 loadu(const double* p) { return load(p); }
    void store(double* p) const { _mm512_storeu_pd(p, v); }
    static Avx512 add(const Avx512& a, const Avx512& b) { return {_mm512_add_pd(a.v, b.v)}; }
    static Avx512 sub(const Avx512& a, const Avx512& b) { return {_mm512_sub_pd(a.v, b.v)}; }
    static Avx512 mul(const Avx512& a, const Avx512& b) { return {_mm512_mul_pd(a.v, b.v)}; }
    static Avx512 neg(const Avx512& a) { return sub(zero(), a); }
    static Avx512 fmadd(const Avx512& a, const Avx512& b, const Avx512& c) { return {_mm512_fmadd_pd(a.v, b.v, c.v)}; }
    static Avx512 fnmadd(const Avx512& a, const Avx512& b, const Avx512& c) { return {_mm512_fnmadd_pd(a.v, b.v, c.v)}; }
};

} // namespace

namespace detail {

bool compiled_avx512() { return true; }

void lindblad_advance_avx512(const LindbladBatch& op, double* re, double* im, std::size_t steps)
{
    LindbladKernel<Avx512>::advance(op, re, im, steps);
}

void squared_distances_avx512(const double* q, const double* rows, std::size_t n_rows, std::size_t dim, double* out)
{
    squared_distances_impl<Avx512>(q, rows, n_rows, dim, out);
}

} // namespace detail
} // namespace rydnet::simd

#else

#include <stdexcept>

namespace rydnet::simd::detail {
bool compiled_avx512() { return false; }
void lindblad_advance_avx512(const LindbladBatch&, double*, double*, std::size_t)
{
    throw std::logic_error("AVX-512 kernels not compiled in");
}
void squared_distances_avx512(const double*, const double*, std::size_t, std::size_t, double*)
{
    throw std::logic_error("AVX-512 kernels not compiled in");
}
} // namespace rydnet::simd::detail

#endif
