"""Compiled bar and dihedral-hinge energy kernels.

Coordinates are reduced: every node owns up to three generalized coordinates
q and a 3x3 basis P (unused columns are zero), so that x = P q.  Nodes on a
mirror plane carry two coordinates (in-plane ray direction and z).  A hinge
vertex may be the mirror image R x of a node; its effective basis is R P.
"""
import numpy as np
from numba import njit

CSTEP = 1e-30


@njit(cache=True)
def dihedral(p):
    """Angle in [0, 2pi) between triangles (i, j, k) and (j, k, l); flat is pi."""
    a0, a1, a2 = p[0, 0] - p[1, 0], p[0, 1] - p[1, 1], p[0, 2] - p[1, 2]
    b0, b1, b2 = p[2, 0] - p[1, 0], p[2, 1] - p[1, 1], p[2, 2] - p[1, 2]
    c0, c1, c2 = p[2, 0] - p[3, 0], p[2, 1] - p[3, 1], p[2, 2] - p[3, 2]
    m0, m1, m2 = a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0
    n0, n1, n2 = b1 * c2 - b2 * c1, b2 * c0 - b0 * c2, b0 * c1 - b1 * c0
    x0, x1, x2 = m1 * n2 - m2 * n1, m2 * n0 - m0 * n2, m0 * n1 - m1 * n0
    s = (x0 * b0 + x1 * b1 + x2 * b2) / np.sqrt(b0 * b0 + b1 * b1 + b2 * b2)
    c = m0 * n0 + m1 * n1 + m2 * n2
    return np.pi - np.arctan2(s, -c)


@njit(cache=True)
def _grad_into(p, out):
    """Gradient of `dihedral` w.r.t. the four vertices, written into out (4, 3).

    Plain scalar arithmetic (products, sums, square roots) so it also runs on
    complex input for complex-step second derivatives, without allocating.
    """
    a0, a1, a2 = p[0, 0] - p[1, 0], p[0, 1] - p[1, 1], p[0, 2] - p[1, 2]     # r_ij
    b0, b1, b2 = p[2, 0] - p[1, 0], p[2, 1] - p[1, 1], p[2, 2] - p[1, 2]     # r_kj
    c0, c1, c2 = p[2, 0] - p[3, 0], p[2, 1] - p[3, 1], p[2, 2] - p[3, 2]     # r_kl
    m0, m1, m2 = a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0
    n0, n1, n2 = b1 * c2 - b2 * c1, b2 * c0 - b0 * c2, b0 * c1 - b1 * c0
    mm = m0 * m0 + m1 * m1 + m2 * m2
    nn = n0 * n0 + n1 * n1 + n2 * n2
    l2 = b0 * b0 + b1 * b1 + b2 * b2
    lk = np.sqrt(l2)
    fi = lk / mm
    fl = -lk / nn
    sa = (a0 * b0 + a1 * b1 + a2 * b2) / l2
    sb = (c0 * b0 + c1 * b1 + c2 * b2) / l2
    gi = (fi * m0, fi * m1, fi * m2)
    gl = (fl * n0, fl * n1, fl * n2)
    for d in range(3):
        out[0, d] = gi[d]
        out[3, d] = gl[d]
        out[1, d] = (sa - 1.0) * gi[d] - sb * gl[d]
        out[2, d] = (sb - 1.0) * gl[d] - sa * gi[d]


@njit(cache=True)
def dihedral_grad(p):
    """Gradient of `dihedral` with respect to the four vertices, shape (4, 3)."""
    out = np.empty((4, 3), dtype=p.dtype)
    _grad_into(p, out)
    return out


@njit(cache=True)
def _hessian_into(p, pc, gc, H):
    """12x12 Hessian of the dihedral angle by complex-step differentiation of the gradient."""
    for v in range(4):
        for d in range(3):
            pc[v, d] = p[v, d]
    for c in range(12):
        v, d = c // 3, c % 3
        pc[v, d] = p[v, d] + 1j * CSTEP
        _grad_into(pc, gc)
        pc[v, d] = p[v, d]
        for r in range(12):
            H[r, c] = gc[r // 3, r % 3].imag / CSTEP


@njit(cache=True)
def dihedral_hessian(p):
    H = np.empty((12, 12))
    _hessian_into(p, np.empty((4, 3), dtype=np.complex128), np.empty((4, 3), dtype=np.complex128), H)
    return H


@njit(cache=True)
def _area_into(p, out):
    """Area of triangle p (3, 3) with its gradient written into out; complex-safe."""
    a0, a1, a2 = p[1, 0] - p[0, 0], p[1, 1] - p[0, 1], p[1, 2] - p[0, 2]
    b0, b1, b2 = p[2, 0] - p[0, 0], p[2, 1] - p[0, 1], p[2, 2] - p[0, 2]
    n0, n1, n2 = a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0
    nn = np.sqrt(n0 * n0 + n1 * n1 + n2 * n2)
    u0, u1, u2 = n0 / nn, n1 / nn, n2 / nn
    # dA/dx_a = 0.5 (x_b - x_c) x u for cyclic (a, b, c)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        e0, e1, e2 = p[b, 0] - p[c, 0], p[b, 1] - p[c, 1], p[b, 2] - p[c, 2]
        out[a, 0] = 0.5 * (e1 * u2 - e2 * u1)
        out[a, 1] = 0.5 * (e2 * u0 - e0 * u2)
        out[a, 2] = 0.5 * (e0 * u1 - e1 * u0)
    return 0.5 * nn


@njit(cache=True)
def area_grad(p):
    out = np.empty((3, 3), dtype=p.dtype)
    A = _area_into(p, out)
    return A, out


@njit(cache=True)
def _area_hessian_into(p, pc, gc, H):
    for v in range(3):
        for d in range(3):
            pc[v, d] = p[v, d]
    for c in range(9):
        v, d = c // 3, c % 3
        pc[v, d] = p[v, d] + 1j * CSTEP
        _area_into(pc, gc)
        pc[v, d] = p[v, d]
        for r in range(9):
            H[r, c] = gc[r // 3, r % 3].imag / CSTEP


@njit(cache=True)
def bar_lengths(X, bars):
    """Bar lengths with the same arithmetic as `evaluate`, so rest states are exact."""
    out = np.empty(bars.shape[0])
    for e in range(bars.shape[0]):
        i, j = bars[e, 0], bars[e, 1]
        d0, d1, d2 = X[j, 0] - X[i, 0], X[j, 1] - X[i, 1], X[j, 2] - X[i, 2]
        out[e] = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    return out


@njit(cache=True)
def triangle_areas(X, tris):
    out = np.empty(tris.shape[0])
    p = np.empty((3, 3))
    G = np.empty((3, 3))
    for e in range(tris.shape[0]):
        for v in range(3):
            for r in range(3):
                p[v, r] = X[tris[e, v], r]
        out[e] = _area_into(p, G)
    return out


@njit(cache=True)
def positions(q, dof, basis):
    n = dof.shape[0]
    X = np.zeros((n, 3))
    for a in range(n):
        for c in range(3):
            if dof[a, c] >= 0:
                for r in range(3):
                    X[a, r] += basis[a, r, c] * q[dof[a, c]]
    return X


@njit(cache=True)
def hinge_angles(X, hinges, hmirror, refl):
    nh = hinges.shape[0]
    out = np.empty(nh)
    p = np.empty((4, 3))
    for h in range(nh):
        for v in range(4):
            p[v] = refl[hmirror[h, v]] @ X[hinges[h, v]]
        out[h] = dihedral(p)
    return out


@njit(cache=True)
def _scatter_grad(gq, a, M, scale, gvec, row, dof):
    """gq[dof_a] += scale * M^T gvec[row]."""
    for c in range(3):
        d = dof[a, c]
        if d >= 0:
            s = 0.0
            for r in range(3):
                s += M[r, c] * gvec[row, r]
            gq[d] += scale * s


@njit(cache=True)
def _scatter_hess(Hq, a, Ma, b, Mb, blk, dof):
    # Hq[dof_a, dof_b] += Ma^T blk Mb
    for c in range(3):
        da = dof[a, c]
        if da < 0:
            continue
        for e in range(3):
            db = dof[b, e]
            if db < 0:
                continue
            s = 0.0
            for r in range(3):
                for t in range(3):
                    s += Ma[r, c] * blk[r, t] * Mb[t, e]
            Hq[da, db] += s


@njit(cache=True)
def evaluate(q, dof, basis, refl, bars, bar_k, bar_L0, hinges, hmirror, hinge_k, hinge_rest,
             tris, tri_k, tri_A0, want_hess):
    """Total energy, gradient in q and (optionally) the dense Hessian in q.

    Triangles carry an areal barrier k A0 (J - 1 - ln J), J = A / A0, which is
    quadratic near rest and keeps elements from collapsing.
    """
    nq = q.shape[0]
    X = positions(q, dof, basis)
    gq = np.zeros(nq)
    Hq = np.zeros((nq, nq)) if want_hess else np.zeros((1, 1))
    energy = 0.0
    blk = np.empty((3, 3))
    u = np.empty((1, 3))

    for e in range(bars.shape[0]):
        i, j = bars[e, 0], bars[e, 1]
        d0, d1, d2 = X[j, 0] - X[i, 0], X[j, 1] - X[i, 1], X[j, 2] - X[i, 2]
        L = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        u[0, 0], u[0, 1], u[0, 2] = d0 / L, d1 / L, d2 / L
        stretch = L - bar_L0[e]
        f = bar_k[e] * stretch
        energy += 0.5 * bar_k[e] * stretch * stretch
        _scatter_grad(gq, j, basis[j], f, u, 0, dof)
        _scatter_grad(gq, i, basis[i], -f, u, 0, dof)
        if want_hess:
            # K = k u u^T + (f / L)(I - u u^T)
            for r in range(3):
                for t in range(3):
                    blk[r, t] = (bar_k[e] - f / L) * u[0, r] * u[0, t]
                blk[r, r] += f / L
            _scatter_hess(Hq, i, basis[i], i, basis[i], blk, dof)
            _scatter_hess(Hq, j, basis[j], j, basis[j], blk, dof)
            for r in range(3):
                for t in range(3):
                    blk[r, t] = -blk[r, t]
            _scatter_hess(Hq, i, basis[i], j, basis[j], blk, dof)
            _scatter_hess(Hq, j, basis[j], i, basis[i], blk, dof)

    pt = np.empty((3, 3))
    Gt = np.empty((3, 3))
    Ht = np.empty((9, 9))
    ptc = np.empty((3, 3), dtype=np.complex128)
    gtc = np.empty((3, 3), dtype=np.complex128)
    for e in range(tris.shape[0]):
        kt = tri_k[e]
        if kt == 0.0:
            continue
        for v in range(3):
            for r in range(3):
                pt[v, r] = X[tris[e, v], r]
        A = _area_into(pt, Gt)
        J = A / tri_A0[e]
        if not J > 0.0:
            return np.inf, gq, Hq
        energy += kt * tri_A0[e] * (J - 1.0 - np.log(J))
        dW = kt * (1.0 - 1.0 / J)            # dW/dA
        for v in range(3):
            _scatter_grad(gq, tris[e, v], basis[tris[e, v]], dW, Gt, v, dof)
        if want_hess:
            d2W = kt / (tri_A0[e] * J * J)      # d2W/dA2
            _area_hessian_into(pt, ptc, gtc, Ht)
            for v in range(3):
                for w in range(3):
                    for r in range(3):
                        for t in range(3):
                            blk[r, t] = d2W * Gt[v, r] * Gt[w, t] + dW * Ht[3 * v + r, 3 * w + t]
                    _scatter_hess(Hq, tris[e, v], basis[tris[e, v]], tris[e, w],
                                  basis[tris[e, w]], blk, dof)

    p = np.empty((4, 3))
    M = np.empty((4, 3, 3))
    G = np.empty((4, 3))
    Hp = np.empty((12, 12))
    pc = np.empty((4, 3), dtype=np.complex128)
    gc = np.empty((4, 3), dtype=np.complex128)
    for h in range(hinges.shape[0]):
        for v in range(4):
            R = refl[hmirror[h, v]]
            a = hinges[h, v]
            for r in range(3):
                s = 0.0
                for t in range(3):
                    s += R[r, t] * X[a, t]
                p[v, r] = s
                for c in range(3):
                    s = 0.0
                    for t in range(3):
                        s += R[r, t] * basis[a, t, c]
                    M[v, r, c] = s
        dpsi = dihedral(p) - hinge_rest[h]
        k = hinge_k[h]
        energy += 0.5 * k * dpsi * dpsi
        _grad_into(p, G)
        for v in range(4):
            _scatter_grad(gq, hinges[h, v], M[v], k * dpsi, G, v, dof)
        if want_hess:
            _hessian_into(p, pc, gc, Hp)
            for v in range(4):
                for w in range(4):
                    for r in range(3):
                        for t in range(3):
                            blk[r, t] = k * (G[v, r] * G[w, t] + dpsi * Hp[3 * v + r, 3 * w + t])
                    _scatter_hess(Hq, hinges[h, v], M[v], hinges[h, w], M[w], blk, dof)
    return energy, gq, Hq
