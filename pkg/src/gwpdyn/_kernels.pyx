# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loops for the packet parameter flows.

The stepper advances (q, p, Q, P, S) with Stormer-Verlet (kick-drift-kick on
the separable kinetic/potential split) or classical RK4, tracking a
continuous branch of arg det Q.  Potentials are dispatched by an integer
code so no Python callback enters the loop.
"""
from libc.math cimport atan2, cos, exp, fabs, sin

from .errors import StepSizeError, ValidationError

cdef enum:
    MAXD = 3
    MAXD2 = 9

cdef double PI = 3.141592653589793238462643383279502884


cdef double pot_value(int code, double[::1] pp, double offset, int d, double* q) noexcept nogil:
    cdef double v = offset
    cdef double r2, w
    cdef int i
    if code == 0:
        return v
    if code == 1:
        for i in range(d):
            v += 0.5 * pp[i] * pp[i] * q[i] * q[i]
        return v
    if code == 2:
        for i in range(d):
            v += 1.0 - cos(q[i])
        return v
    if code == 3:
        r2 = 0.0
        for i in range(d):
            r2 += q[i] * q[i]
        w = pp[1]
        return v + pp[0] * (1.0 - exp(-r2 / (2.0 * w * w)))
    for i in range(d):
        v += 0.25 * pp[i] * q[i] * q[i] * q[i] * q[i]
    return v


cdef void pot_grad(int code, double[::1] pp, int d, double* q, double* g) noexcept nogil:
    cdef double r2, w, e
    cdef int i
    if code == 0:
        for i in range(d):
            g[i] = 0.0
    elif code == 1:
        for i in range(d):
            g[i] = pp[i] * pp[i] * q[i]
    elif code == 2:
        for i in range(d):
            g[i] = sin(q[i])
    elif code == 3:
        r2 = 0.0
        for i in range(d):
            r2 += q[i] * q[i]
        w = pp[1]
        e = pp[0] * exp(-r2 / (2.0 * w * w)) / (w * w)
        for i in range(d):
            g[i] = e * q[i]
    else:
        for i in range(d):
            g[i] = pp[i] * q[i] * q[i] * q[i]


cdef void pot_hess(int code, double[::1] pp, int d, double* q, double* h) noexcept nogil:
    cdef double r2, w2, e
    cdef int i, j
    for i in range(d * d):
        h[i] = 0.0
    if code == 0:
        return
    if code == 1:
        for i in range(d):
            h[i * d + i] = pp[i] * pp[i]
    elif code == 2:
        for i in range(d):
            h[i * d + i] = cos(q[i])
    elif code == 3:
        r2 = 0.0
        for i in range(d):
            r2 += q[i] * q[i]
        w2 = pp[1] * pp[1]
        e = pp[0] * exp(-r2 / (2.0 * w2))
        for i in range(d):
            for j in range(d):
                h[i * d + j] = -e * q[i] * q[j] / (w2 * w2)
            h[i * d + i] += e / w2
    else:
        for i in range(d):
            h[i * d + i] = 3.0 * pp[i] * q[i] * q[i]


cdef void grad_v1_kernel(int code, double[::1] pp, int d, double* q, double* W,
                         double* out) noexcept nogil:
    """out_i = (1/4) W_jk D3_ijk V(q) with W = Re(Q Q*)."""
    cdef double r2, w2, e, trW, qWq, Wq_i
    cdef int i, k
    if code == 0 or code == 1:
        for i in range(d):
            out[i] = 0.0
    elif code == 2:
        for i in range(d):
            out[i] = -0.25 * W[i * d + i] * sin(q[i])
    elif code == 3:
        r2 = 0.0
        trW = 0.0
        qWq = 0.0
        for i in range(d):
            r2 += q[i] * q[i]
            trW += W[i * d + i]
            for k in range(d):
                qWq += q[i] * W[i * d + k] * q[k]
        w2 = pp[1] * pp[1]
        e = pp[0] * exp(-r2 / (2.0 * w2))
        for i in range(d):
            Wq_i = 0.0
            for k in range(d):
                Wq_i += W[i * d + k] * q[k]
            out[i] = -0.25 * e * ((2.0 * Wq_i + trW * q[i]) / (w2 * w2)
                                  - q[i] * qWq / (w2 * w2 * w2))
    else:
        for i in range(d):
            out[i] = 1.5 * pp[i] * q[i] * W[i * d + i]


cdef void real_QQstar(int d, double complex* Q, double* W) noexcept nogil:
    cdef int i, j, k
    cdef double complex acc
    for i in range(d):
        for j in range(d):
            acc = 0
            for k in range(d):
                acc += Q[i * d + k] * Q[j * d + k].conjugate()
            W[i * d + j] = acc.real


cdef void force_eval(int code, double[::1] pp, int d, int corrected, double eps,
                     double* q, double complex* Q, double* fq,
                     double* hess, double* buf_w, double* buf_g) noexcept nogil:
    """fq = DV(q) [+ eps grad_v1(q, Q)]; hess = D2V(q)."""
    cdef int i
    pot_grad(code, pp, d, q, fq)
    pot_hess(code, pp, d, q, hess)
    if corrected:
        real_QQstar(d, Q, buf_w)
        grad_v1_kernel(code, pp, d, q, buf_w, buf_g)
        for i in range(d):
            fq[i] += eps * buf_g[i]


cdef double complex det_small(int d, double complex* Q) noexcept nogil:
    if d == 1:
        return Q[0]
    if d == 2:
        return Q[0] * Q[3] - Q[1] * Q[2]
    return (Q[0] * (Q[4] * Q[8] - Q[5] * Q[7])
            - Q[1] * (Q[3] * Q[8] - Q[5] * Q[6])
            + Q[2] * (Q[3] * Q[7] - Q[4] * Q[6]))


def verlet_flow(int code, double[::1] pp, double offset, double eps, int corrected,
                double[::1] q0, double[::1] p0,
                double complex[:, ::1] Q0, double complex[:, ::1] P0,
                double S0, double theta0, double complex det0,
                double dt, long n_steps, long store_every,
                double[:, ::1] out_q, double[:, ::1] out_p,
                double complex[:, :, ::1] out_Q, double complex[:, :, ::1] out_P,
                double[::1] out_S, double[::1] out_theta):
    """Kick-drift-kick Verlet; stores every `store_every` steps (index 0 = start).

    Returns (S, theta, det) at the final step.  Raises StepSizeError if the
    branch of arg det Q rotates by >= pi/2 within a single step.
    """
    cdef int d = q0.shape[0]
    if d > MAXD:
        raise ValidationError("compiled stepper supports dimensions 1..3")
    cdef double q[MAXD]
    cdef double p[MAXD]
    cdef double fq[MAXD]
    cdef double bw[MAXD2]
    cdef double bg[MAXD]
    cdef double hess[MAXD2]
    cdef double complex Q[MAXD2]
    cdef double complex P[MAXD2]
    cdef double S = S0
    cdef double theta = theta0
    cdef double complex det_prev = det0
    cdef double complex det_new, ratio
    cdef double v_pre, v_post, kin, dtheta
    cdef long step, idx
    cdef int i, j, k
    cdef int jumped = 0

    for i in range(d):
        q[i] = q0[i]
        p[i] = p0[i]
        for j in range(d):
            Q[i * d + j] = Q0[i, j]
            P[i * d + j] = P0[i, j]

    for i in range(d):
        out_q[0, i] = q[i]
        out_p[0, i] = p[i]
        for j in range(d):
            out_Q[0, i, j] = Q[i * d + j]
            out_P[0, i, j] = P[i * d + j]
    out_S[0] = S
    out_theta[0] = theta

    with nogil:
        for step in range(n_steps):
            # half kick (q, Q frozen)
            force_eval(code, pp, d, corrected, eps, q, Q, fq, hess, bw, bg)
            v_pre = pot_value(code, pp, offset, d, q)
            for i in range(d):
                p[i] -= 0.5 * dt * fq[i]
                for j in range(d):
                    for k in range(d):
                        P[i * d + j] -= 0.5 * dt * hess[i * d + k] * Q[k * d + j]
            # drift with the half-step momenta; S by midpoint/trapezoid quadrature
            kin = 0.0
            for i in range(d):
                kin += p[i] * p[i]
                q[i] += dt * p[i]
                for j in range(d):
                    Q[i * d + j] += dt * P[i * d + j]
            v_post = pot_value(code, pp, offset, d, q)
            S += dt * 0.5 * kin - 0.5 * dt * (v_pre + v_post)
            # half kick at the new (q, Q)
            force_eval(code, pp, d, corrected, eps, q, Q, fq, hess, bw, bg)
            for i in range(d):
                p[i] -= 0.5 * dt * fq[i]
                for j in range(d):
                    for k in range(d):
                        P[i * d + j] -= 0.5 * dt * hess[i * d + k] * Q[k * d + j]
            # continuous branch of arg det Q
            det_new = det_small(d, Q)
            ratio = det_new * det_prev.conjugate()
            dtheta = atan2(ratio.imag, ratio.real)
            if fabs(dtheta) >= 0.5 * PI:
                jumped = 1
                break
            theta += dtheta
            det_prev = det_new

            if (step + 1) % store_every == 0:
                idx = (step + 1) // store_every
                for i in range(d):
                    out_q[idx, i] = q[i]
                    out_p[idx, i] = p[i]
                    for j in range(d):
                        out_Q[idx, i, j] = Q[i * d + j]
                        out_P[idx, i, j] = P[i * d + j]
                out_S[idx] = S
                out_theta[idx] = theta

    if jumped:
        raise StepSizeError(
            "arg det Q rotated by >= pi/2 within one step; halve dt and retry")
    return S, theta, complex(det_prev)


def rk4_flow(int code, double[::1] pp, double offset, double eps, int corrected,
             double[::1] q0, double[::1] p0,
             double complex[:, ::1] Q0, double complex[:, ::1] P0,
             double S0, double theta0, double complex det0,
             double dt, long n_steps, long store_every,
             double[:, ::1] out_q, double[:, ::1] out_p,
             double complex[:, :, ::1] out_Q, double complex[:, :, ::1] out_P,
             double[::1] out_S, double[::1] out_theta):
    """Classical RK4 on the full parameter vector; same storage contract."""
    cdef int d = q0.shape[0]
    if d > MAXD:
        raise ValidationError("compiled stepper supports dimensions 1..3")
    cdef double q[MAXD]
    cdef double p[MAXD]
    cdef double complex Q[MAXD2]
    cdef double complex P[MAXD2]
    cdef double S = S0
    cdef double kq[4][MAXD]
    cdef double kp[4][MAXD]
    cdef double complex kQ[4][MAXD2]
    cdef double complex kP[4][MAXD2]
    cdef double kS[4]
    cdef double qs[MAXD]
    cdef double ps[MAXD]
    cdef double complex Qs[MAXD2]
    cdef double complex Ps[MAXD2]
    cdef double fq[MAXD]
    cdef double bw[MAXD2]
    cdef double bg[MAXD]
    cdef double hess[MAXD2]
    cdef double theta = theta0
    cdef double complex det_prev = det0
    cdef double complex det_new, ratio
    cdef double dtheta, c
    cdef long step, idx
    cdef int i, j, k, stage
    cdef int jumped = 0
    cdef double stage_frac[4]
    stage_frac[0] = 0.0
    stage_frac[1] = 0.5
    stage_frac[2] = 0.5
    stage_frac[3] = 1.0

    for i in range(d):
        q[i] = q0[i]
        p[i] = p0[i]
        for j in range(d):
            Q[i * d + j] = Q0[i, j]
            P[i * d + j] = P0[i, j]
    for i in range(d):
        out_q[0, i] = q[i]
        out_p[0, i] = p[i]
        for j in range(d):
            out_Q[0, i, j] = Q[i * d + j]
            out_P[0, i, j] = P[i * d + j]
    out_S[0] = S
    out_theta[0] = theta

    with nogil:
        for step in range(n_steps):
            for stage in range(4):
                c = stage_frac[stage] * dt
                for i in range(d):
                    qs[i] = q[i] + (c * kq[stage - 1][i] if stage > 0 else 0.0)
                    ps[i] = p[i] + (c * kp[stage - 1][i] if stage > 0 else 0.0)
                    for j in range(d):
                        Qs[i * d + j] = Q[i * d + j] + (c * kQ[stage - 1][i * d + j] if stage > 0 else 0.0)
                        Ps[i * d + j] = P[i * d + j] + (c * kP[stage - 1][i * d + j] if stage > 0 else 0.0)
                force_eval(code, pp, d, corrected, eps, qs, Qs, fq, hess, bw, bg)
                kS[stage] = -pot_value(code, pp, offset, d, qs)
                for i in range(d):
                    kq[stage][i] = ps[i]
                    kp[stage][i] = -fq[i]
                    kS[stage] += 0.5 * ps[i] * ps[i]
                    for j in range(d):
                        kQ[stage][i * d + j] = Ps[i * d + j]
                        kP[stage][i * d + j] = 0
                        for k in range(d):
                            kP[stage][i * d + j] -= hess[i * d + k] * Qs[k * d + j]
            for i in range(d):
                q[i] += dt / 6.0 * (kq[0][i] + 2 * kq[1][i] + 2 * kq[2][i] + kq[3][i])
                p[i] += dt / 6.0 * (kp[0][i] + 2 * kp[1][i] + 2 * kp[2][i] + kp[3][i])
                for j in range(d):
                    Q[i * d + j] += dt / 6.0 * (kQ[0][i * d + j] + 2 * kQ[1][i * d + j]
                                                + 2 * kQ[2][i * d + j] + kQ[3][i * d + j])
                    P[i * d + j] += dt / 6.0 * (kP[0][i * d + j] + 2 * kP[1][i * d + j]
                                                + 2 * kP[2][i * d + j] + kP[3][i * d + j])
            S += dt / 6.0 * (kS[0] + 2 * kS[1] + 2 * kS[2] + kS[3])

            det_new = det_small(d, Q)
            ratio = det_new * det_prev.conjugate()
            dtheta = atan2(ratio.imag, ratio.real)
            if fabs(dtheta) >= 0.5 * PI:
                jumped = 1
                break
            theta += dtheta
            det_prev = det_new

            if (step + 1) % store_every == 0:
                idx = (step + 1) // store_every
                for i in range(d):
                    out_q[idx, i] = q[i]
                    out_p[idx, i] = p[i]
                    for j in range(d):
                        out_Q[idx, i, j] = Q[i * d + j]
                        out_P[idx, i, j] = P[i * d + j]
                out_S[idx] = S
                out_theta[idx] = theta

    if jumped:
        raise StepSizeError(
            "arg det Q rotated by >= pi/2 within one step; halve dt and retry")
    return S, theta, complex(det_prev)
