"""Compiled fixed-step RK4 for one constant-input segment of the layered circuit.

State is flattened: all layer flux matrices row-major into one vector, row
currents of all layers into another, and potentials P^0..P^L into a third.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _memductance(kind, par, x):
    if kind == 0:
        return par[0] + par[1] * np.arctan(x / par[2])
    n = par.size // 2
    return np.interp(x, par[:n], par[n:])


@njit(cache=True)
def _sigma(kind, par, x):
    return par[0] * np.tanh(x / par[1])


@njit(cache=True)
def evaluate(phi, S, u, rows, widths, phi_off, j_off, p_off, diff,
             dkind, dpar, akind, apar, dphi, J, P):
    """Fill dphi, J (row currents) and P (potentials) for state phi."""
    L = rows.size
    for c in range(widths[0]):
        P[c] = u[c]
    for l in range(L):
        nr = rows[l]
        nc = widths[l]
        fo = phi_off[l]
        pp = p_off[l]
        for r in range(nr):
            acc = 0.0
            base = fo + r * nc
            for c in range(nc):
                i = base + c
                v = P[pp + c]
                if S[i] != 0.0 and v != 0.0:
                    dphi[i] = v
                    acc += _memductance(dkind, dpar, phi[i]) * v
                else:
                    dphi[i] = 0.0
            J[j_off[l] + r] = acc
        n = widths[l + 1]
        for k in range(n):
            x = J[j_off[l] + k]
            if diff:
                x -= J[j_off[l] + k + n]
            P[p_off[l + 1] + k] = _sigma(akind, apar, x)


@njit(cache=True)
def rk4_segment(phi, S, u, h, nsteps, every, record_flux, rows, widths, phi_off, j_off, p_off,
                diff, dkind, dpar, akind, apar):
    """Advance phi in place by nsteps of size h with input u held constant.

    Returns (step_index, phis, Js, Ps, finite).  Row 0 of each record array is
    the state before the first step; later rows follow every ``every`` steps
    and always include the final step.  step_index[i] is the number of steps
    taken at record i.
    """
    nphi = phi.size
    nJ = j_off[-1]
    nP = p_off[-1]
    nrec = 1 + nsteps // every
    if nsteps % every != 0:
        nrec += 1
    idx = np.zeros(nrec, dtype=np.int64)
    phis = np.empty((nrec if record_flux else 0, nphi))
    Js = np.empty((nrec, nJ))
    Ps = np.empty((nrec, nP))
    k1 = np.empty(nphi)
    k2 = np.empty(nphi)
    k3 = np.empty(nphi)
    k4 = np.empty(nphi)
    tmp = np.empty(nphi)
    J = np.empty(nJ)
    P = np.empty(nP)
    Jt = np.empty(nJ)
    Pt = np.empty(nP)

    evaluate(phi, S, u, rows, widths, phi_off, j_off, p_off, diff, dkind, dpar, akind, apar, k1, J, P)
    if record_flux:
        phis[0, :] = phi
    Js[0, :] = J
    Ps[0, :] = P
    rec = 1
    half = 0.5 * h
    sixth = h / 6.0
    for s in range(nsteps):
        for i in range(nphi):
            tmp[i] = phi[i] + half * k1[i]
        evaluate(tmp, S, u, rows, widths, phi_off, j_off, p_off, diff, dkind, dpar, akind, apar, k2, Jt, Pt)
        for i in range(nphi):
            tmp[i] = phi[i] + half * k2[i]
        evaluate(tmp, S, u, rows, widths, phi_off, j_off, p_off, diff, dkind, dpar, akind, apar, k3, Jt, Pt)
        for i in range(nphi):
            tmp[i] = phi[i] + h * k3[i]
        evaluate(tmp, S, u, rows, widths, phi_off, j_off, p_off, diff, dkind, dpar, akind, apar, k4, Jt, Pt)
        for i in range(nphi):
            phi[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        evaluate(phi, S, u, rows, widths, phi_off, j_off, p_off, diff, dkind, dpar, akind, apar, k1, J, P)
        if (s + 1) % every == 0 or s == nsteps - 1:
            idx[rec] = s + 1
            if record_flux:
                phis[rec, :] = phi
            Js[rec, :] = J
            Ps[rec, :] = P
            rec += 1
    finite = True
    for i in range(nphi):
        if not np.isfinite(phi[i]):
            finite = False
    return idx, phis, Js, Ps, finite
