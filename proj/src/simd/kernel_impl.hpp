#pragma once

// Shared kernel bodies, instantiated once per instruction set. Everything here
// lives in an anonymous namespace: each ISA translation unit gets a private
// copy compiled with its own target flags.

#include <cmath>
#include <cstddef>
#include <vector>

#include "rydnet/simd/kernels.hpp"

namespace rydnet::simd {
namespace {

template <class V>
struct LindbladKernel {
    static constexpr std::size_t L = kLanes;

    // d = i * commutator part (+ c * rho when gen != nullptr), upper triangle
    // computed, lower triangle mirrored.
    static void rhs(const LindbladBatch& op, const double* re, const double* im, double* dre, double* dim,
                    bool with_generator)
    {
        const std::size_t n = op.sites;
        const double* w = op.coupling;
        for (std::size_t a = 0; a < n; ++a) {
            const double* wa = w + a * n * L;
            const double* ra = re + a * n * L;
            const double* ia = im + a * n * L;
            for (std::size_t b = a; b < n; ++b) {
                const double* wb = w + b * n * L;
                const double* rb = re + b * n * L;
                const double* ib = im + b * n * L;
                V s_re = V::zero();
                V neg_s_im = V::zero();
                for (std::size_t k = 0; k < n; ++k) {
                    const V w_bk = V::load(wb + k * L);
                    const V w_ak = V::load(wa + k * L);
                    s_re = V::fmadd(w_bk, V::load(ra + k * L), s_re);
                    s_re = V::fnmadd(w_ak, V::load(rb + k * L), s_re);
                    neg_s_im = V::fnmadd(w_bk, V::load(ia + k * L), neg_s_im);
                    neg_s_im = V::fnmadd(w_ak, V::load(ib + k * L), neg_s_im);
                }
                V d_re = neg_s_im;
                V d_im = s_re;
                const std::size_t e = a * n + b;
                if (with_generator) {
                    const V cr = V::set1(op.gen_re[e]);
                    const V ci = V::set1(op.gen_im[e]);
                    const V xr = V::load(re + e * L);
                    const V xi = V::load(im + e * L);
                    d_re = V::fmadd(cr, xr, d_re);
                    d_re = V::fnmadd(ci, xi, d_re);
                    d_im = V::fmadd(cr, xi, d_im);
                    d_im = V::fmadd(ci, xr, d_im);
                }
                if (a == b)
                    d_im = V::zero();
                d_re.store(dre + e * L);
                d_im.store(dim + e * L);
                if (a != b) {
                    const std::size_t t = b * n + a;
                    d_re.store(dre + t * L);
                    V::neg(d_im).store(dim + t * L);
                }
            }
        }
    }

    static void hermitize(std::size_t n, double* re, double* im)
    {
        for (std::size_t a = 0; a < n; ++a) {
            V::zero().store(im + (a * n + a) * L);
            for (std::size_t b = a + 1; b < n; ++b) {
                const std::size_t e = a * n + b;
                const std::size_t t = b * n + a;
                const V half = V::set1(0.5);
                const V r = V::mul(half, V::add(V::load(re + e * L), V::load(re + t * L)));
                const V i = V::mul(half, V::sub(V::load(im + e * L), V::load(im + t * L)));
                r.store(re + e * L);
                r.store(re + t * L);
                i.store(im + e * L);
                V::neg(i).store(im + t * L);
            }
        }
    }

    // y = x + s * k
    static void axpy(std::size_t count, double s, const double* x, const double* k, double* y)
    {
        const V vs = V::set1(s);
        for (std::size_t i = 0; i < count; i += L)
            V::fmadd(vs, V::load(k + i), V::load(x + i)).store(y + i);
    }

    static void advance_rk4(const LindbladBatch& op, double* re, double* im, std::size_t steps)
    {
        const std::size_t count = op.sites * op.sites * L;
        std::vector<double> buf(6 * count);
        double* k_re = buf.data();
        double* k_im = k_re + count;
        double* acc_re = k_im + count;
        double* acc_im = acc_re + count;
        double* t_re = acc_im + count;
        double* t_im = t_re + count;
        const double h = op.dt;
        const V two = V::set1(2.0);
        const V sixth = V::set1(h / 6.0);

        for (std::size_t s = 0; s < steps; ++s) {
            rhs(op, re, im, k_re, k_im, true);
            for (std::size_t i = 0; i < count; i += L) {
                V::load(k_re + i).store(acc_re + i);
                V::load(k_im + i).store(acc_im + i);
            }
            axpy(count, 0.5 * h, re, k_re, t_re);
            axpy(count, 0.5 * h, im, k_im, t_im);

            rhs(op, t_re, t_im, k_re, k_im, true);
            for (std::size_t i = 0; i < count; i += L) {
                V::fmadd(two, V::load(k_re + i), V::load(acc_re + i)).store(acc_re + i);
                V::fmadd(two, V::load(k_im + i), V::load(acc_im + i)).store(acc_im + i);
            }
            axpy(count, 0.5 * h, re, k_re, t_re);
            axpy(count, 0.5 * h, im, k_im, t_im);

            rhs(op, t_re, t_im, k_re, k_im, true);
            for (std::size_t i = 0; i < count; i += L) {
                V::fmadd(two, V::load(k_re + i), V::load(acc_re + i)).store(acc_re + i);
                V::fmadd(two, V::load(k_im + i), V::load(acc_im + i)).store(acc_im + i);
            }
            axpy(count, h, re, k_re, t_re);
            axpy(count, h, im, k_im, t_im);

            rhs(op, t_re, t_im, k_re, k_im, true);
            for (std::size_t i = 0; i < count; i += L) {
                const V ar = V::add(V::load(acc_re + i), V::load(k_re + i));
                const V ai = V::add(V::load(acc_im + i), V::load(k_im + i));
                V::fmadd(sixth, ar, V::load(re + i)).store(re + i);
                V::fmadd(sixth, ai, V::load(im + i)).store(im + i);
            }
            hermitize(op.sites, re, im);
        }
    }

    // acc += c * x with broadcast complex c = (cr, ci)
    static void cmul_acc(V cr, V ci, V xr, V xi, V& acc_r, V& acc_i)
    {
        acc_r = V::fmadd(cr, xr, acc_r);
        acc_r = V::fnmadd(ci, xi, acc_r);
        acc_i = V::fmadd(cr, xi, acc_i);
        acc_i = V::fmadd(ci, xr, acc_i);
    }

    static void advance_exp_rk4(const LindbladBatch& op, double* re, double* im, std::size_t steps)
    {
        const std::size_t n2 = op.sites * op.sites;
        const std::size_t count = n2 * L;
        std::vector<double> buf(14 * count);
        double* p = buf.data();
        auto take = [&]() { double* q = p; p += count; return q; };
        double* nu_re = take(); double* nu_im = take();
        double* a_re = take(); double* a_im = take();
        double* na_re = take(); double* na_im = take();
        double* b_re = take(); double* b_im = take();
        double* nb_re = take(); double* nb_im = take();
        double* c_re = take(); double* c_im = take();
        double* nc_re = take(); double* nc_im = take();
        const double* etd = op.etd;
        auto coef = [&](std::size_t e, int which, V& cr, V& ci) {
            cr = V::set1(etd[e * 12 + 2 * which]);
            ci = V::set1(etd[e * 12 + 2 * which + 1]);
        };
        const V two = V::set1(2.0);

        for (std::size_t s = 0; s < steps; ++s) {
            rhs(op, re, im, nu_re, nu_im, false);
            for (std::size_t e = 0; e < n2; ++e) {
                V e2r, e2i, qr, qi;
                coef(e, 1, e2r, e2i);
                coef(e, 2, qr, qi);
                const std::size_t i = e * L;
                V ar = V::zero(), ai = V::zero();
                cmul_acc(e2r, e2i, V::load(re + i), V::load(im + i), ar, ai);
                cmul_acc(qr, qi, V::load(nu_re + i), V::load(nu_im + i), ar, ai);
                ar.store(a_re + i);
                ai.store(a_im + i);
            }
            rhs(op, a_re, a_im, na_re, na_im, false);
            for (std::size_t e = 0; e < n2; ++e) {
                V e2r, e2i, qr, qi;
                coef(e, 1, e2r, e2i);
                coef(e, 2, qr, qi);
                const std::size_t i = e * L;
                V br = V::zero(), bi = V::zero();
                cmul_acc(e2r, e2i, V::load(re + i), V::load(im + i), br, bi);
                cmul_acc(qr, qi, V::load(na_re + i), V::load(na_im + i), br, bi);
                br.store(b_re + i);
                bi.store(b_im + i);
            }
            rhs(op, b_re, b_im, nb_re, nb_im, false);
            for (std::size_t e = 0; e < n2; ++e) {
                V e2r, e2i, qr, qi;
                coef(e, 1, e2r, e2i);
                coef(e, 2, qr, qi);
                const std::size_t i = e * L;
                const V fr = V::fmadd(two, V::load(nb_re + i), V::neg(V::load(nu_re + i)));
                const V fi = V::fmadd(two, V::load(nb_im + i), V::neg(V::load(nu_im + i)));
                V cr = V::zero(), ci = V::zero();
                cmul_acc(e2r, e2i, V::load(a_re + i), V::load(a_im + i), cr, ci);
                cmul_acc(qr, qi, fr, fi, cr, ci);
                cr.store(c_re + i);
                ci.store(c_im + i);
            }
            rhs(op, c_re, c_im, nc_re, nc_im, false);
            for (std::size_t e = 0; e < n2; ++e) {
                V er, ei, f1r, f1i, f2r, f2i, f3r, f3i;
                coef(e, 0, er, ei);
                coef(e, 3, f1r, f1i);
                coef(e, 4, f2r, f2i);
                coef(e, 5, f3r, f3i);
                const std::size_t i = e * L;
                const V sr = V::mul(two, V::add(V::load(na_re + i), V::load(nb_re + i)));
                const V si = V::mul(two, V::add(V::load(na_im + i), V::load(nb_im + i)));
                V ur = V::zero(), ui = V::zero();
                cmul_acc(er, ei, V::load(re + i), V::load(im + i), ur, ui);
                cmul_acc(f1r, f1i, V::load(nu_re + i), V::load(nu_im + i), ur, ui);
                cmul_acc(f2r, f2i, sr, si, ur, ui);
                cmul_acc(f3r, f3i, V::load(nc_re + i), V::load(nc_im + i), ur, ui);
                ur.store(re + i);
                ui.store(im + i);
            }
            hermitize(op.sites, re, im);
        }
    }

    static void advance(const LindbladBatch& op, double* re, double* im, std::size_t steps)
    {
        if (op.scheme == Scheme::rk4)
            advance_rk4(op, re, im, steps);
        else
            advance_exp_rk4(op, re, im, steps);
    }
};

// Eight partial sums (index j mod 8), reduced as ((a0+a4)+(a2+a6)) + ((a1+a5)+(a3+a7)).
inline double finish_partials(double* acc, const double* q, const double* x, std::size_t from, std::size_t dim)
{
    for (std::size_t j = from; j < dim; ++j) {
        const double d = q[j] - x[j];
        acc[j % 8] = std::fma(d, d, acc[j % 8]);
    }
    double s[4];
    for (int l = 0; l < 4; ++l)
        s[l] = acc[l] + acc[l + 4];
    const double t0 = s[0] + s[2];
    const double t1 = s[1] + s[3];
    return t0 + t1;
}

template <class V>
void squared_distances_impl(const double* q, const double* rows, std::size_t n_rows, std::size_t dim, double* out)
{
    const std::size_t body = dim - dim % 8;
    alignas(64) double acc[8];
    for (std::size_t r = 0; r < n_rows; ++r) {
        const double* x = rows + r * dim;
        V a = V::zero();
        for (std::size_t j = 0; j < body; j += 8) {
            const V d = V::sub(V::loadu(q + j), V::loadu(x + j));
            a = V::fmadd(d, d, a);
        }
        a.store(acc);
        out[r] = finish_partials(acc, q, x, body, dim);
    }
}

} // namespace
} // namespace rydnet::simd
