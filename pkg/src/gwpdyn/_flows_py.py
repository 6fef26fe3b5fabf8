"""Pure-numpy fallback for the compiled parameter-flow kernels.

Same call signatures and storage contract as ``gwpdyn._kernels``; selected
automatically when the extension is unavailable (or forced through the
GWPDYN_DISABLE_EXT environment variable).
"""
from __future__ import annotations

import numpy as np

from .errors import StepSizeError

_HALF_PI = 0.5 * np.pi


def _value(code, pp, offset, q):
    if code == 0:
        return offset
    if code == 1:
        return offset + 0.5 * float(np.sum(pp ** 2 * q ** 2))
    if code == 2:
        return offset + float(np.sum(1.0 - np.cos(q)))
    if code == 3:
        a, w = pp
        return offset + a * (1.0 - np.exp(-np.dot(q, q) / (2.0 * w * w)))
    return offset + 0.25 * float(np.sum(pp * q ** 4))


def _grad(code, pp, q):
    if code == 0:
        return np.zeros_like(q)
    if code == 1:
        return pp ** 2 * q
    if code == 2:
        return np.sin(q)
    if code == 3:
        a, w = pp
        return a * q / (w * w) * np.exp(-np.dot(q, q) / (2.0 * w * w))
    return pp * q ** 3


def _hess(code, pp, q):
    d = q.size
    if code == 0:
        return np.zeros((d, d))
    if code == 1:
        return np.diag(pp ** 2)
    if code == 2:
        return np.diag(np.cos(q))
    if code == 3:
        a, w = pp
        g = a * np.exp(-np.dot(q, q) / (2.0 * w * w))
        return g * (np.eye(d) / w ** 2 - np.multiply.outer(q, q) / w ** 4)
    return np.diag(3.0 * pp * q ** 2)


def _grad_v1(code, pp, q, W):
    if code in (0, 1):
        return np.zeros_like(q)
    if code == 2:
        return -0.25 * np.diag(W) * np.sin(q)
    if code == 3:
        a, w = pp
        w2 = w * w
        g = a * np.exp(-np.dot(q, q) / (2.0 * w2))
        Wq = W @ q
        return -0.25 * g * ((2.0 * Wq + np.trace(W) * q) / w2 ** 2
                            - q * (q @ Wq) / w2 ** 3)
    return 1.5 * pp * q * np.diag(W)


def _force(code, pp, eps, corrected, q, Q):
    f = _grad(code, pp, q)
    h = _hess(code, pp, q)
    if corrected:
        W = (Q @ Q.conj().T).real
        f = f + eps * _grad_v1(code, pp, q, W)
    return f, h


def _advance_branch(theta, det_prev, Q):
    det_new = complex(np.linalg.det(Q))
    dtheta = float(np.angle(det_new * np.conj(det_prev)))
    if abs(dtheta) >= _HALF_PI:
        raise StepSizeError(
            "arg det Q rotated by >= pi/2 within one step; halve dt and retry")
    return theta + dtheta, det_new


def _store(idx, q, p, Q, P, S, theta, out_q, out_p, out_Q, out_P, out_S, out_theta):
    out_q[idx] = q
    out_p[idx] = p
    out_Q[idx] = Q
    out_P[idx] = P
    out_S[idx] = S
    out_theta[idx] = theta


def verlet_flow(code, pp, offset, eps, corrected, q0, p0, Q0, P0, S0, theta0, det0,
                dt, n_steps, store_every,
                out_q, out_p, out_Q, out_P, out_S, out_theta):
    q = np.array(q0, dtype=float)
    p = np.array(p0, dtype=float)
    Q = np.array(Q0, dtype=complex)
    P = np.array(P0, dtype=complex)
    S, theta, det_prev = float(S0), float(theta0), complex(det0)
    _store(0, q, p, Q, P, S, theta, out_q, out_p, out_Q, out_P, out_S, out_theta)
    for step in range(n_steps):
        f, h = _force(code, pp, eps, corrected, q, Q)
        v_pre = _value(code, pp, offset, q)
        p -= 0.5 * dt * f
        P -= 0.5 * dt * (h @ Q)
        q += dt * p
        Q += dt * P
        v_post = _value(code, pp, offset, q)
        S += 0.5 * dt * float(p @ p) - 0.5 * dt * (v_pre + v_post)
        f, h = _force(code, pp, eps, corrected, q, Q)
        p -= 0.5 * dt * f
        P -= 0.5 * dt * (h @ Q)
        theta, det_prev = _advance_branch(theta, det_prev, Q)
        if (step + 1) % store_every == 0:
            _store((step + 1) // store_every, q, p, Q, P, S, theta,
                   out_q, out_p, out_Q, out_P, out_S, out_theta)
    return S, theta, det_prev


def rk4_flow(code, pp, offset, eps, corrected, q0, p0, Q0, P0, S0, theta0, det0,
             dt, n_steps, store_every,
             out_q, out_p, out_Q, out_P, out_S, out_theta):
    q = np.array(q0, dtype=float)
    p = np.array(p0, dtype=float)
    Q = np.array(Q0, dtype=complex)
    P = np.array(P0, dtype=complex)
    S, theta, det_prev = float(S0), float(theta0), complex(det0)
    _store(0, q, p, Q, P, S, theta, out_q, out_p, out_Q, out_P, out_S, out_theta)

    def rhs(qs, ps, Qs, Ps):
        f, h = _force(code, pp, eps, corrected, qs, Qs)
        dS = 0.5 * float(ps @ ps) - _value(code, pp, offset, qs)
        return ps.copy(), -f, Ps.copy(), -(h @ Qs), dS

    for step in range(n_steps):
        k1 = rhs(q, p, Q, P)
        k2 = rhs(q + 0.5 * dt * k1[0], p + 0.5 * dt * k1[1],
                 Q + 0.5 * dt * k1[2], P + 0.5 * dt * k1[3])
        k3 = rhs(q + 0.5 * dt * k2[0], p + 0.5 * dt * k2[1],
                 Q + 0.5 * dt * k2[2], P + 0.5 * dt * k2[3])
        k4 = rhs(q + dt * k3[0], p + dt * k3[1], Q + dt * k3[2], P + dt * k3[3])
        q = q + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        Q = Q + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        P = P + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        S = S + dt / 6.0 * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        theta, det_prev = _advance_branch(theta, det_prev, Q)
        if (step + 1) % store_every == 0:
            _store((step + 1) // store_every, q, p, Q, P, S, theta,
                   out_q, out_p, out_Q, out_P, out_S, out_theta)
    return S, theta, det_prev
