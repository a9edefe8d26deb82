// AVX2 + FMA variant: each logical 8-lane vector is a pair of __m256d.

#include "kernel_impl.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace rydnet::simd {
namespace {

struct Avx2x2 {
    __m256d lo, hi;

    static Avx2x2 zero() { return {_mm256_setzero_pd(), _mm256_setzero_pd()}; }
    static Avx2x2 set1(double x) { return {_mm256_set1_pd(x), _mm256_set1_pd(x)}; }
    static Avx2x2 load(const double* p) { return {_mm256_loadu_pd(p), _mm256_loadu_pd(p + 4)}; }
    static Avx2x2 loadu(const double* p) { return load(p); }
    void store(double* p) const
    {
        _mm256_storeu_pd(p, lo);
        _mm256_storeu_pd(p + 4, hi);
    }
    static Avx2x2 add(const Avx2x2& a, const Avx2x2& b) { return {_mm256_add_pd(a.lo, b.lo), _mm256_add_pd(a.hi, b.hi)}; }
    static Avx2x2 sub(const Avx2x2& a, const Avx2x2& b) { return {_mm256_sub_pd(a.lo, b.lo), _mm256_sub_pd(a.hi, b.hi)}; }
    static Avx2x2 mul(const Avx2x2& a, const Avx2x2& b) { return {_mm256_mul_pd(a.lo, b.lo), _mm256_mul_pd(a.hi, b.hi)}; }
    static Avx2x2 neg(const Avx2x2& a) { return sub(zero(), a); }
    static Avx2x2 fmadd(const Avx2x2& a, const Avx2x2& b, const Avx2x2& c)
    {
        return {_mm256_fmadd_pd(a.lo, b.lo, c.lo), _mm256_fmadd_pd(a.hi, b.hi, c.hi)};
    }
    static Avx2x2 fnmadd(const Avx2x2& a, const Avx2x2& b, const Avx2x2& c)
    {
        return {_mm256_fnmadd_pd(a.lo, b.lo, c.lo), _mm256_fnmadd_pd(a.hi, b.hi, c.hi)};
    }
};

} // namespace

namespace detail {

bool compiled_avx2() { return true; }

void lindblad_advance_avx2(const LindbladBatch& op, double* re, double* im, std::size_t steps)
{
    LindbladKernel<Avx2x2>::advance(op, re, im, steps);
}

void squared_distances_avx2(const double* q, const double* rows, std::size_t n_rows, std::size_t dim, double* out)
{
    squared_distances_impl<Avx2x2>(q, rows, n_rows, dim, out);
}

} // namespace detail
} // namespace rydnet::simd

#else

#include <stdexcept>

namespace rydnet::simd::detail {
bool compiled_avx2() { return false; }
void lindblad_advance_avx2(const LindbladBatch&, double*, double*, std::size_t)
{
    throw std::logic_error("AVX2 kernels not compiled in");
}
void squared_distances_avx2(const double*, const double*, std::size_t, std::size_t, double*)
{
    throw std::logic_error("AVX2 kernels not compiled in");
}
} // namespace rydnet::simd::detail

#endif
