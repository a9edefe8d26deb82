// Reference variant: eight plain lanes, explicit std::fma, no contraction.

#include <cmath>

#include "kernel_impl.hpp"

namespace rydnet::simd {
namespace {

struct Lanes8 {
    double v[8];

    static Lanes8 zero() { return set1(0.0); }
    static Lanes8 set1(double x)
    {
        Lanes8 r;
        for (double& e : r.v)
            e = x;
        return r;
    }
    static Lanes8 load(const double* p)
    {
        Lanes8 r;
        for (int i = 0; i < 8; ++i)
            r.v[i] = p[i];
        return r;
    }
    static Lanes8 loadu(const double* p) { return load(p); }
    void store(double* p) const
    {
        for (int i = 0; i < 8; ++i)
            p[i] = v[i];
    }
    static Lanes8 add(const Lanes8& a, const Lanes8& b)
    {
        Lanes8 r;
        for (int i = 0; i < 8; ++i)
            r.v[i] = a.v[i] + b.v[i];
        return r;
    }
    static Lanes8 sub(const Lanes8& a, const Lanes8& b)
    {
        Lanes8 r;
        for (int i = 0; i < 8; ++i)
            r.v[i] = a.v[i] - b.v[i];
        return r;
    }
    static Lanes8 mul(const Lanes8& a, const Lanes8& b)
    {
        Lanes8 r;
        for (int i = 0; i < 8; ++i)
            r.v[i] = a.v[i] * b.v[i];
        return r;
    }
    static Lanes8 neg(const Lanes8& a) { return sub(zero(), a); }
    // a * b + c
    static Lanes8 fmadd(const Lanes8& a, const Lanes8& b, const Lanes8& c)
    {
        Lanes8 r;
        for (int i = 0; i < 8; ++i)
            r.v[i] = std::fma(a.v[i], b.v[i], c.v[i]);
        return r;
    }
    // c - a * b
    static Lanes8 fnmadd(const Lanes8& a, const Lanes8& b, const Lanes8& c)
    {
        Lanes8 r;
        for (int i = 0; i < 8; ++i)
            r.v[i] = std::fma(-a.v[i], b.v[i], c.v[i]);
        return r;
    }
};

} // namespace

namespace detail {

void lindblad_advance_scalar(const LindbladBatch& op, double* re, double* im, std::size_t steps)
{
    LindbladKernel<Lanes8>::advance(op, re, im, steps);
}

void squared_distances_scalar(const double* q, const double* rows, std::size_t n_rows, std::size_t dim, double* out)
{
    squared_distances_impl<Lanes8>(q, rows, n_rows, dim, out);
}

} // namespace detail
} // namespace rydnet::simd
