"""Compiled inner loops of the relaxed-spin dynamics.

Ray layout is CSR: members of ray r are ``nodes[ptr[r]:ptr[r + 1]]``.  Each
ray also owns ``n + 1`` slots in ``order`` starting at ``ptr[r] + r``; slot
values ``0..n-1`` refer to members and ``n`` to the auxiliary spin, which sits
at ``aux_x`` (0 inside the machine).  ``order`` is kept sorted by x between
calls, so the insertion sort is close to linear once the motion settles.

Charges inside the kernels are unit charges (sigma, or N - 2P for the
auxiliary spin); the ray weight ``lam[r]`` multiplies the products.

Slot lookups are written out inline: numba does not inline small helper
functions reliably and the call overhead dominates these loops.
"""
import numpy as np
from numba import njit

OK = 0
STEP_OVERFLOW = 1


@njit(cache=True, nogil=True)
def sort_rays(x, ptr, nodes, order, aux_x):
    n_rays = ptr.size - 1
    for r in range(n_rays):
        start = ptr[r]
        n = ptr[r + 1] - start
        o = start + r
        for i in range(1, n + 1):
            slot = order[o + i]
            k = aux_x if slot == n else x[nodes[start + slot]]
            j = i - 1
            while j >= 0:
                prev = order[o + j]
                kp = aux_x if prev == n else x[nodes[start + prev]]
                if kp <= k:
                    break
                order[o + j + 1] = prev
                j -= 1
            order[o + j + 1] = slot


@njit(cache=True, nogil=True)
def drift(x, sigma, ptr, nodes, q0, lam, order, xdot, aux_x, aux_sigma):
    """xdot[a] = sum over rays r of a: lam[r] sigma[a] eps_r(x[a]).

    eps_r(X) is the signed charge below X minus the charge above X within the
    ray (auxiliary spin included); exact ties contribute nothing.
    """
    sort_rays(x, ptr, nodes, order, aux_x)
    xdot[:] = 0.0
    n_rays = ptr.size - 1
    for r in range(n_rays):
        start = ptr[r]
        n = ptr[r + 1] - start
        o = start + r
        aux_q = q0[r] * aux_sigma
        total = aux_q
        for i in range(n):
            total += sigma[nodes[start + i]]
        below = 0.0
        i = 0
        while i <= n:
            slot = order[o + i]
            xi = aux_x if slot == n else x[nodes[start + slot]]
            j = i
            group = 0.0
            while j <= n:
                slot = order[o + j]
                if slot == n:
                    if aux_x != xi:
                        break
                    group += aux_q
                else:
                    a = nodes[start + slot]
                    if x[a] != xi:
                        break
                    group += sigma[a]
                j += 1
            eps = lam[r] * (2.0 * below + group - total)
            for k in range(i, j):
                slot = order[o + k]
                if slot < n:
                    a = nodes[start + slot]
                    xdot[a] += sigma[a] * eps
            below += group
            i = j


@njit(cache=True, nogil=True)
def relaxed_cut(x, sigma, ptr, nodes, q0, lam, order, aux_x, aux_sigma):
    """sum_r lam[r] [(N - P)^2 - Q_r^2 / 4 + 1/2 sum_{i<j} u_i u_j |x_i - x_j|]."""
    sort_rays(x, ptr, nodes, order, aux_x)
    n_rays = ptr.size - 1
    value = 0.0
    for r in range(n_rays):
        start = ptr[r]
        n = ptr[r + 1] - start
        o = start + r
        aux_q = q0[r] * aux_sigma
        q = aux_q
        for i in range(n):
            q += sigma[nodes[start + i]]
        # (N - P)^2 with N - 2P = q0
        best = 0.25 * (n + q0[r]) * (n + q0[r])
        below_charge = 0.0
        below_moment = 0.0
        pair = 0.0
        for i in range(n + 1):
            slot = order[o + i]
            if slot == n:
                u = aux_q
                xv = aux_x
            else:
                a = nodes[start + slot]
                u = float(sigma[a])
                xv = x[a]
            pair += u * (xv * below_charge - below_moment)
            below_charge += u
            below_moment += u * xv
        value += lam[r] * (best - 0.25 * q * q + 0.5 * pair)
    return value


@njit(cache=True, nogil=True)
def euler_step(x, sigma, ptr, nodes, q0, lam, order, xdot, dt):
    """One Euler step with the phase-wrap rule (auxiliary spin pinned).

    Returns the number of sigma flips, or -1 if some |xdot| * dt >= 2.
    """
    drift(x, sigma, ptr, nodes, q0, lam, order, xdot, 0.0, 1)
    for a in range(x.size):
        if abs(xdot[a]) * dt >= 2.0:
            return -1
    flips = 0
    for a in range(x.size):
        v = x[a] + dt * xdot[a]
        if v >= 1.0:
            v -= 2.0
            sigma[a] = -sigma[a]
            flips += 1
        elif v < -1.0:
            v += 2.0
            sigma[a] = -sigma[a]
            flips += 1
        x[a] = v
    return flips


@njit(cache=True, nogil=True)
def evolve(x, sigma, ptr, nodes, q0, lam, order, xdot, dt, steps, stride, trace):
    """Run ``steps`` Euler steps in place.

    Every ``stride`` steps (and after the last one) the relaxed cut is written
    to ``trace``; ``stride == 0`` disables sampling.  Returns
    ``(status, steps_done, flips, samples)``.
    """
    flips = 0
    samples = 0
    if stride > 0:
        trace[0] = relaxed_cut(x, sigma, ptr, nodes, q0, lam, order, 0.0, 1)
        samples = 1
    for k in range(steps):
        f = euler_step(x, sigma, ptr, nodes, q0, lam, order, xdot, dt)
        if f < 0:
            return STEP_OVERFLOW, k, flips, samples
        flips += f
        if stride > 0 and ((k + 1) % stride == 0 or k + 1 == steps):
            trace[samples] = relaxed_cut(x, sigma, ptr, nodes, q0, lam, order, 0.0, 1)
            samples += 1
    return OK, steps, flips, samples


def new_order(ptr):
    """Identity slot order for every ray (members then the auxiliary slot)."""
    lengths = np.diff(ptr)
    return np.concatenate([np.arange(n + 1) for n in lengths]).astype(np.int64)
