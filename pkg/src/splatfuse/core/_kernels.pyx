# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel ray/disk rasterizer kernels.

Mirrors ``_fallback`` exactly: same hit rule, same (depth, disk index)
ordering, same compact hit cache. Pixels are processed serially so gradient
accumulation is deterministic.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

cdef double PARALLEL_EPS = 1e-9

ctypedef struct Hit:
    double d
    double q
    int idx


cdef int _cmp_hit(const void* pa, const void* pb) noexcept nogil:
    cdef const Hit* a = <const Hit*> pa
    cdef const Hit* b = <const Hit*> pb
    if a.d < b.d:
        return -1
    if a.d > b.d:
        return 1
    if a.idx < b.idx:
        return -1
    if a.idx > b.idx:
        return 1
    return 0


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _dot(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef struct Geo:
    double r[3]
    double n[3]
    double x[3]
    double nr
    double lam
    double u
    double v


cdef inline void _geometry(const double* mu, const double* ta, const double* tb,
                           double rx, double ry, Geo* o) noexcept nogil:
    o.r[0] = rx
    o.r[1] = ry
    o.r[2] = 1.0
    _cross(ta, tb, o.n)
    o.nr = _dot(o.n, o.r)
    if fabs(o.nr) < PARALLEL_EPS:
        o.lam = 0.0
        return
    o.lam = _dot(o.n, mu) / o.nr
    o.x[0] = o.lam * rx - mu[0]
    o.x[1] = o.lam * ry - mu[1]
    o.x[2] = o.lam - mu[2]
    o.u = _dot(ta, o.x)
    o.v = _dot(tb, o.x)


def forward(double[:, ::1] mu, double[:, ::1] ta, double[:, ::1] tb, double[:, ::1] scale,
            double[::1] alpha, double[:, ::1] color, int[:, ::1] bbox,
            int width, int height, double fx, double fy, double cx, double cy,
            double[::1] bg, double near, double cutoff_q, double t_min, double acc_eps):
    cdef Py_ssize_t n = mu.shape[0]
    cdef Py_ssize_t npix = <Py_ssize_t> width * height
    cdef Py_ssize_t i, p, k, j, x, y, nh, m, total, maxc
    cdef cnp.int64_t[::1] cand_off = np.zeros(npix + 1, dtype=np.int64)
    for i in range(n):
        for y in range(bbox[i, 1], bbox[i, 3] + 1):
            for x in range(bbox[i, 0], bbox[i, 2] + 1):
                cand_off[y * width + x + 1] += 1
    maxc = 0
    for p in range(npix):
        if cand_off[p + 1] > maxc:
            maxc = cand_off[p + 1]
        cand_off[p + 1] += cand_off[p]
    total = cand_off[npix]
    cdef cnp.int32_t[::1] cand = np.empty(max(total, 1), dtype=np.int32)
    cdef cnp.int64_t[::1] cursor = np.array(cand_off[:npix], dtype=np.int64)
    for i in range(n):
        for y in range(bbox[i, 1], bbox[i, 3] + 1):
            for x in range(bbox[i, 0], bbox[i, 2] + 1):
                p = y * width + x
                cand[cursor[p]] = <int> i
                cursor[p] += 1

    rgb_np = np.empty((height, width, 3))
    depth_np = np.zeros((height, width))
    trans_np = np.ones((height, width))
    valid_np = np.zeros((height, width), dtype=np.uint8)
    cdef double[:, :, ::1] rgb = rgb_np
    cdef double[:, ::1] depth = depth_np
    cdef double[:, ::1] trans = trans_np
    cdef cnp.uint8_t[:, ::1] valid = valid_np
    cdef cnp.int64_t[::1] hit_off = np.zeros(npix + 1, dtype=np.int64)
    hit_idx_np = np.empty(max(total, 1), dtype=np.int32)
    cdef cnp.int32_t[::1] hit_idx = hit_idx_np

    cdef Hit* buf = <Hit*> malloc((maxc + 1) * sizeof(Hit))
    cdef Geo geo
    cdef double q, T, a, wgt, c0, c1, c2, dn, acc, su, sv
    cdef Py_ssize_t written = 0
    try:
        for p in range(npix):
            y = p // width
            x = p - y * width
            nh = 0
            for k in range(cand_off[p], cand_off[p + 1]):
                i = cand[k]
                _geometry(&mu[i, 0], &ta[i, 0], &tb[i, 0], (x - cx) / fx, (y - cy) / fy, &geo)
                if fabs(geo.nr) < PARALLEL_EPS or geo.lam <= near:
                    continue
                su = scale[i, 0]
                sv = scale[i, 1]
                q = (geo.u / su) * (geo.u / su) + (geo.v / sv) * (geo.v / sv)
                if q > cutoff_q:
                    continue
                buf[nh].d = geo.lam
                buf[nh].q = q
                buf[nh].idx = <int> i
                nh += 1
            if nh > 1:
                qsort(buf, nh, sizeof(Hit), _cmp_hit)
            T = 1.0
            c0 = 0.0
            c1 = 0.0
            c2 = 0.0
            dn = 0.0
            m = 0
            for j in range(nh):
                i = buf[j].idx
                a = alpha[i] * exp(-0.5 * buf[j].q)
                wgt = a * T
                c0 += wgt * color[i, 0]
                c1 += wgt * color[i, 1]
                c2 += wgt * color[i, 2]
                dn += wgt * buf[j].d
                T *= 1.0 - a
                hit_idx[written + m] = <int> i
                m += 1
                if T < t_min:
                    break
            written += m
            hit_off[p + 1] = written
            rgb[y, x, 0] = c0 + bg[0] * T
            rgb[y, x, 1] = c1 + bg[1] * T
            rgb[y, x, 2] = c2 + bg[2] * T
            trans[y, x] = T
            acc = 1.0 - T
            if acc > acc_eps:
                depth[y, x] = dn / acc
                valid[y, x] = 1
    finally:
        free(buf)
    return (rgb_np, depth_np, trans_np, valid_np.astype(bool),
            np.asarray(hit_off), hit_idx_np[:written].copy())


def backward(double[:, ::1] mu, double[:, ::1] ta, double[:, ::1] tb, double[:, ::1] scale,
             double[::1] alpha, double[:, ::1] color, int width, int height,
             double fx, double fy, double cx, double cy, double[::1] bg, double acc_eps,
             cnp.int64_t[::1] hit_off, cnp.int32_t[::1] hit_idx,
             double[:, ::1] depth_img, double[:, ::1] trans_img,
             double[:, :, ::1] g_rgb, double[:, ::1] g_depth, double[:, ::1] g_trans):
    cdef Py_ssize_t n = mu.shape[0]
    cdef Py_ssize_t npix = <Py_ssize_t> width * height
    out_mu_np = np.zeros((n, 3))
    out_ta_np = np.zeros((n, 3))
    out_tb_np = np.zeros((n, 3))
    out_ls_np = np.zeros((n, 2))
    out_alpha_np = np.zeros(n)
    out_color_np = np.zeros((n, 3))
    contrib_np = np.zeros(n, dtype=np.uint8)
    cdef double[:, ::1] out_mu = out_mu_np
    cdef double[:, ::1] out_ta = out_ta_np
    cdef double[:, ::1] out_tb = out_tb_np
    cdef double[:, ::1] out_ls = out_ls_np
    cdef double[::1] out_alpha = out_alpha_np
    cdef double[:, ::1] out_color = out_color_np
    cdef cnp.uint8_t[::1] contrib = contrib_np

    cdef Py_ssize_t p, j, i, k, x, y, nh, maxh = 0, start
    for p in range(npix):
        if hit_off[p + 1] - hit_off[p] > maxh:
            maxh = hit_off[p + 1] - hit_off[p]
    cdef double* tb_buf = <double*> malloc((maxh + 1) * sizeof(double))
    cdef double* a_buf = <double*> malloc((maxh + 1) * sizeof(double))
    cdef double* g_buf = <double*> malloc((maxh + 1) * sizeof(double))
    cdef Geo geo
    cdef double gc0, gc1, gc2, gdn, gtt, acc, rc0, rc1, rc2, rd, rt
    cdef double ga, wgt, gg, gu, gv, su2, sv2, lam_tot, inv_nr, t, g
    cdef double gn[3]
    cdef double cr[3]
    cdef const double* tai
    cdef const double* tbi
    try:
        for p in range(npix):
            start = hit_off[p]
            nh = hit_off[p + 1] - start
            if nh == 0:
                continue
            y = p // width
            x = p - y * width
            t = 1.0
            for j in range(nh):
                i = hit_idx[start + j]
                _geometry(&mu[i, 0], &ta[i, 0], &tb[i, 0], (x - cx) / fx, (y - cy) / fy, &geo)
                g = exp(-0.5 * (geo.u * geo.u / (scale[i, 0] * scale[i, 0])
                                + geo.v * geo.v / (scale[i, 1] * scale[i, 1])))
                g_buf[j] = g
                a_buf[j] = alpha[i] * g
                tb_buf[j] = t
                t *= 1.0 - a_buf[j]
            gc0 = g_rgb[y, x, 0]
            gc1 = g_rgb[y, x, 1]
            gc2 = g_rgb[y, x, 2]
            acc = 1.0 - trans_img[y, x]
            gtt = g_trans[y, x]
            gdn = 0.0
            if acc > acc_eps:
                gdn = g_depth[y, x] / acc
                gtt += g_depth[y, x] * depth_img[y, x] / acc
            rc0 = bg[0]
            rc1 = bg[1]
            rc2 = bg[2]
            rd = 0.0
            rt = 1.0
            for j in range(nh - 1, -1, -1):
                i = hit_idx[start + j]
                _geometry(&mu[i, 0], &ta[i, 0], &tb[i, 0], (x - cx) / fx, (y - cy) / fy, &geo)
                ga = tb_buf[j] * (gc0 * (color[i, 0] - rc0) + gc1 * (color[i, 1] - rc1)
                                  + gc2 * (color[i, 2] - rc2) + gdn * (geo.lam - rd) - gtt * rt)
                wgt = a_buf[j] * tb_buf[j]
                out_color[i, 0] += wgt * gc0
                out_color[i, 1] += wgt * gc1
                out_color[i, 2] += wgt * gc2
                contrib[i] = 1
                g = g_buf[j]
                out_alpha[i] += ga * g
                gg = ga * alpha[i]
                su2 = scale[i, 0] * scale[i, 0]
                sv2 = scale[i, 1] * scale[i, 1]
                gu = -gg * g * geo.u / su2
                gv = -gg * g * geo.v / sv2
                out_ls[i, 0] += gg * g * geo.u * geo.u / su2
                out_ls[i, 1] += gg * g * geo.v * geo.v / sv2
                tai = &ta[i, 0]
                tbi = &tb[i, 0]
                lam_tot = wgt * gdn + gu * _dot(tai, geo.r) + gv * _dot(tbi, geo.r)
                inv_nr = 1.0 / geo.nr
                for k in range(3):
                    out_mu[i, k] += -gu * tai[k] - gv * tbi[k] + lam_tot * inv_nr * geo.n[k]
                    gn[k] = -lam_tot * inv_nr * geo.x[k]
                _cross(tbi, gn, cr)
                for k in range(3):
                    out_ta[i, k] += gu * geo.x[k] + cr[k]
                _cross(gn, tai, cr)
                for k in range(3):
                    out_tb[i, k] += gv * geo.x[k] + cr[k]
                rc0 = color[i, 0] * a_buf[j] + (1.0 - a_buf[j]) * rc0
                rc1 = color[i, 1] * a_buf[j] + (1.0 - a_buf[j]) * rc1
                rc2 = color[i, 2] * a_buf[j] + (1.0 - a_buf[j]) * rc2
                rd = geo.lam * a_buf[j] + (1.0 - a_buf[j]) * rd
                rt = (1.0 - a_buf[j]) * rt
    finally:
        free(tb_buf)
        free(a_buf)
        free(g_buf)
    return (out_mu_np, out_ta_np, out_tb_np, out_ls_np, out_alpha_np, out_color_np,
            contrib_np.astype(bool))
