"""Compiled rigid-body kernels for the four-leg tree (numba).

Same conventions as the array code in ``model``: world-frame Plucker vectors with the
angular part first, motion vectors referred to the world origin.
"""

import numpy as np
from numba import njit

NL = 4  # legs
NK = 4  # links per leg


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _spatial_inertia(m, c, Ic, out):
    # [[Ic + m C C^T, m C], [m C^T, m I]] with C = skew(c)
    C = np.zeros((3, 3))
    C[0, 1] = -c[2]
    C[0, 2] = c[1]
    C[1, 0] = c[2]
    C[1, 2] = -c[0]
    C[2, 0] = -c[1]
    C[2, 1] = c[0]
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += C[i, k] * C[j, k]
            out[i, j] = Ic[i, j] + m * s
            out[i, 3 + j] = m * C[i, j]
            out[3 + i, j] = m * C[j, i]
            out[3 + i, 3 + j] = m if i == j else 0.0


@njit(cache=True)
def _cross_motion(V, m, out):
    # [w x m_w; v x m_w + w x m_v]
    t = np.empty(3)
    _cross(V[:3], m[:3], out[:3])
    _cross(V[3:], m[:3], out[3:])
    _cross(V[:3], m[3:], t)
    out[3] += t[0]
    out[4] += t[1]
    out[5] += t[2]


@njit(cache=True)
def _cross_force(V, f, out):
    # [w x f_w + v x f_v; w x f_v]
    t = np.empty(3)
    _cross(V[:3], f[:3], out[:3])
    _cross(V[3:], f[3:], t)
    out[0] += t[0]
    out[1] += t[1]
    out[2] += t[2]
    _cross(V[:3], f[3:], out[3:])


@njit(cache=True)
def kinematics(R_base, r_base, w_body, v_lin, qj, dqj, joint_axis, joint_origin, link_com, link_inertia,
               link_mass, base_mass, base_com_local, base_inertia):
    w = R_base @ w_body
    S_base = np.zeros((6, 6))
    for i in range(3):
        S_base[3 + i, i] = 1.0
        for j in range(3):
            S_base[i, 3 + j] = R_base[i, j]
    rx = np.zeros((3, 3))
    rx[0, 1] = -r_base[2]
    rx[0, 2] = r_base[1]
    rx[1, 0] = r_base[2]
    rx[1, 2] = -r_base[0]
    rx[2, 0] = -r_base[1]
    rx[2, 1] = r_base[0]
    S_base[3:, 3:] = rx @ R_base
    V_base = np.empty(6)
    A_base = np.zeros(6)
    t = np.empty(3)
    V_base[:3] = w
    _cross(r_base, w, t)
    V_base[3:] = v_lin + t
    _cross(v_lin, w, t)
    A_base[3:] = t

    R = np.empty((NL, NK, 3, 3))
    o = np.empty((NL, NK, 3))
    a = np.empty((NL, NK, 3))
    com = np.empty((NL, NK, 3))
    S = np.empty((NL, NK, 6))
    V = np.empty((NL, NK, 6))
    zeta = np.empty((NL, NK, 6))
    A = np.empty((NL, NK, 6))
    I = np.empty((NL, NK, 6, 6))
    Rj = np.empty((3, 3))
    Sq = np.empty(6)
    for l in range(NL):
        pR = R_base
        po = r_base
        Vp = V_base
        Ap = A_base
        for k in range(NK):
            ax = joint_axis[l, k]
            c = np.cos(qj[l, k])
            s = np.sin(qj[l, k])
            # Rodrigues
            Rj[0, 0] = c + (1 - c) * ax[0] * ax[0]
            Rj[0, 1] = -s * ax[2] + (1 - c) * ax[0] * ax[1]
            Rj[0, 2] = s * ax[1] + (1 - c) * ax[0] * ax[2]
            Rj[1, 0] = s * ax[2] + (1 - c) * ax[1] * ax[0]
            Rj[1, 1] = c + (1 - c) * ax[1] * ax[1]
            Rj[1, 2] = -s * ax[0] + (1 - c) * ax[1] * ax[2]
            Rj[2, 0] = -s * ax[1] + (1 - c) * ax[2] * ax[0]
            Rj[2, 1] = s * ax[0] + (1 - c) * ax[2] * ax[1]
            Rj[2, 2] = c + (1 - c) * ax[2] * ax[2]
            o[l, k] = po + pR @ joint_origin[l, k]
            R[l, k] = pR @ Rj
            a[l, k] = R[l, k] @ ax
            com[l, k] = o[l, k] + R[l, k] @ link_com[l, k]
            S[l, k, :3] = a[l, k]
            _cross(o[l, k], a[l, k], t)
            S[l, k, 3:] = t
            for i in range(6):
                Sq[i] = S[l, k, i] * dqj[l, k]
            V[l, k] = Vp + Sq
            _cross_motion(V[l, k], Sq, zeta[l, k])
            A[l, k] = Ap + zeta[l, k]
            Ic = R[l, k] @ link_inertia[l, k] @ R[l, k].T
            _spatial_inertia(link_mass[l, k], com[l, k], Ic, I[l, k])
            pR = R[l, k]
            po = o[l, k]
            Vp = V[l, k]
            Ap = A[l, k]
    base_com = r_base + R_base @ base_com_local
    I_base = np.empty((6, 6))
    _spatial_inertia(base_mass, base_com, R_base @ base_inertia @ R_base.T, I_base)
    return w, S_base, V_base, A_base, R, o, a, com, S, V, zeta, A, I, I_base, base_com


@njit(cache=True)
def mass_matrix(I, I_base, S, S_base):
    """Composite-rigid-body algorithm."""
    nu = 6 + NL * NK
    M = np.zeros((nu, nu))
    Ic = I.copy()
    Iall = I_base.copy()
    F = np.empty(6)
    for l in range(NL):
        for k in range(NK - 2, -1, -1):
            Ic[l, k] += Ic[l, k + 1]
        Iall += Ic[l, 0]
    M[:6, :6] = S_base.T @ Iall @ S_base
    for l in range(NL):
        for k in range(NK):
            F[:] = Ic[l, k] @ S[l, k]
            col = 6 + NK * l + k
            Fb = S_base.T @ F
            for i in range(6):
                M[i, col] = Fb[i]
                M[col, i] = Fb[i]
            for j in range(k + 1):
                v = 0.0
                for i in range(6):
                    v += S[l, j, i] * F[i]
                cj = 6 + NK * l + j
                M[cj, col] = v
                M[col, cj] = v
    return M


@njit(cache=True)
def inverse_dynamics(I, I_base, S, S_base, V, V_base, zeta, A_base, udot, gravity):
    """Recursive Newton-Euler; ``gravity`` is the world gravity vector (zeros to drop it)."""
    nu = 6 + NL * NK
    A0 = S_base @ udot[:6] + A_base
    A0[3] -= gravity[0]
    A0[4] -= gravity[1]
    A0[5] -= gravity[2]
    f = np.empty((NL, NK, 6))
    Al = np.empty(6)
    IV = np.empty(6)
    cf = np.empty(6)
    out = np.zeros(nu)
    fb = I_base @ A0
    _cross_force(V_base, I_base @ V_base, cf)
    fb += cf
    for l in range(NL):
        Ap = A0
        for k in range(NK):
            qdd = udot[6 + NK * l + k]
            for i in range(6):
                Al[i] = Ap[i] + S[l, k, i] * qdd + zeta[l, k, i]
            IV[:] = I[l, k] @ V[l, k]
            _cross_force(V[l, k], IV, cf)
            f[l, k] = I[l, k] @ Al + cf
            Ap = Al.copy()
        for k in range(NK - 2, -1, -1):
            f[l, k] += f[l, k + 1]
        for k in range(NK):
            v = 0.0
            for i in range(6):
                v += S[l, k, i] * f[l, k, i]
            out[6 + NK * l + k] = v
        fb += f[l, 0]
    out[:6] = S_base.T @ fb
    return out


@njit(cache=True)
def com_terms(V_base, A_base, base_com, base_mass, r_base, R_base, V, A, a, o, com, link_mass):
    """Whole-body COM position, velocity, Jacobian (3 x 22) and drift ``Jdot u``."""
    mt = base_mass
    for l in range(NL):
        for k in range(NK):
            mt += link_mass[l, k]
    p = base_mass * base_com
    t = np.empty(3)
    t2 = np.empty(3)
    _cross(V_base[:3], base_com, t)
    vb = V_base[3:] + t
    v = base_mass * vb
    _cross(A_base[:3], base_com, t)
    _cross(V_base[:3], vb, t2)
    acc = base_mass * (A_base[3:] + t + t2)
    for l in range(NL):
        for k in range(NK):
            m = link_mass[l, k]
            c = com[l, k]
            p += m * c
            _cross(V[l, k, :3], c, t)
            vl = V[l, k, 3:] + t
            v += m * vl
            _cross(A[l, k, :3], c, t)
            _cross(V[l, k, :3], vl, t2)
            acc += m * (A[l, k, 3:] + t + t2)
    p /= mt
    v /= mt
    acc /= mt
    J = np.zeros((3, 6 + NL * NK))
    for i in range(3):
        J[i, i] = 1.0
    d = p - r_base
    # -skew(d) @ R_base
    for j in range(3):
        col = R_base[:, j]
        _cross(col, d, t)   # -d x col = col x d
        J[0, 3 + j] = t[0]
        J[1, 3 + j] = t[1]
        J[2, 3 + j] = t[2]
    s = np.empty(3)
    for l in range(NL):
        s[:] = 0.0
        md = 0.0
        for k in range(NK - 1, -1, -1):
            s += link_mass[l, k] * com[l, k]
            md += link_mass[l, k]
            _cross(a[l, k], s - md * o[l, k], t)
            col = 6 + NK * l + k
            J[0, col] = t[0] / mt
            J[1, col] = t[1] / mt
            J[2, col] = t[2] / mt
    return p, v, mt, J, acc
