"""Brute-force reference implementations used only by tests.

Everything here is written with explicit loops and plain numpy/mpmath,
sharing no numerical kernels with the package, so agreement between the
two paths certifies the fast implementations. Slow on purpose; keep the
instances small.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np


def oracle_conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """3x3 cross-correlation, zero padding 1, via nested sums."""
    c_in, h, w = x.shape
    c_out = kernel.shape[0]
    out = np.zeros((c_out, h, w), dtype=np.float64)
    for co in range(c_out):
        for r in range(h):
            for cc in range(w):
                acc = 0.0
                for ci in range(c_in):
                    for dr in (-1, 0, 1):
                        for dc in (-1, 0, 1):
                            rr, ccc = r + dr, cc + dc
                            if 0 <= rr < h and 0 <= ccc < w:
                                acc += x[ci, rr, ccc] * kernel[co, ci, dr + 1, dc + 1]
                out[co, r, cc] = acc + (bias[co] if bias is not None else 0.0)
    return out


def oracle_modulated_conv(
    x: np.ndarray,
    phi_prev: np.ndarray,
    phi_next: np.ndarray,
    kernel: np.ndarray,
    bias: np.ndarray | None = None,
    alpha: float = 1.0,
) -> np.ndarray:
    """Direct evaluation of the phase-weighted convolution.

    Every tap is weighted by 1 + alpha*cos(phi_next(out position) -
    phi_prev(tap position)); phases are shared across channels.
    """
    c_in, h, w = x.shape
    c_out = kernel.shape[0]
    out = np.zeros((c_out, h, w), dtype=np.float64)
    for co in range(c_out):
        for r in range(h):
            for cc in range(w):
                acc = 0.0
                for ci in range(c_in):
                    for dr in (-1, 0, 1):
                        for dc in (-1, 0, 1):
                            rr, ccc = r + dr, cc + dc
                            if 0 <= rr < h and 0 <= ccc < w:
                                gain = 1.0 + alpha * math.cos(phi_next[r, cc] - phi_prev[rr, ccc])
                                acc += gain * x[ci, rr, ccc] * kernel[co, ci, dr + 1, dc + 1]
                out[co, r, cc] = acc + (bias[co] if bias is not None else 0.0)
    return out


def oracle_modulated_dense(
    x: np.ndarray,
    phi_prev: np.ndarray,
    phi_next: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    alpha: float = 1.0,
) -> np.ndarray:
    out = np.zeros(weight.shape[0], dtype=np.float64)
    for j in range(weight.shape[0]):
        acc = 0.0
        for i in range(weight.shape[1]):
            gain = 1.0 + alpha * math.cos(phi_next[j] - phi_prev[i])
            acc += gain * weight[j, i] * x[i]
        out[j] = acc + (bias[j] if bias is not None else 0.0)
    return out


def oracle_kuramoto(
    phi: np.ndarray, r: np.ndarray, lam: float, eps_theta: float, steps: int = 1
) -> np.ndarray:
    """Explicit double-loop phase updates."""
    phi = np.array(phi, dtype=np.float64)
    n = len(phi)
    for _ in range(steps):
        new = np.empty_like(phi)
        for i in range(n):
            num = 0.0
            den = eps_theta
            for j in range(n):
                num += r[i, j] * math.sin(phi[j] - phi[i])
                den += abs(r[i, j])
            new[i] = phi[i] + lam * num / den
        phi = new
    return phi


def oracle_coupling(
    q: np.ndarray,
    k: np.ndarray,
    neighbor_pairs: set[tuple[int, int]],
    dense_sites: set[int],
    epsilon: float,
    tau: float,
    kappa_dense: float,
) -> np.ndarray:
    """Entry-by-entry coupling matrix with the neighborhood/dense cases."""
    n = q.shape[0]
    r = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            dot = float(np.dot(q[i], k[j]))
            nij = tau if (i, j) in neighbor_pairs else 1.0
            kij = kappa_dense if (i in dense_sites and j in dense_sites) else 1.0
            r[i, j] = (dot * nij - epsilon) / kij
    return r


def oracle_synchrony_loss(phi: np.ndarray, groups: np.ndarray) -> float:
    """Direct per-group complex evaluation of the synchrony objective."""
    ids = sorted(set(int(g) for g in groups))
    g_count = len(ids)
    variances = []
    centroid_sum = 0.0 + 0.0j
    for gid in ids:
        members = phi[groups == gid]
        phasor = np.exp(1j * members).sum()
        variances.append(1.0 - abs(phasor) / len(members))
        if abs(phasor) > 1e-12:
            centroid_sum += phasor / abs(phasor)
    return 0.5 * (sum(variances) / g_count + abs(centroid_sum) ** 2 / (2.0 * g_count))


def oracle_welch(a, b) -> tuple[float, float]:
    """Welch t statistic and two-sided p via numeric integration of the t density."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    va = a.var(ddof=1) / na
    vb = b.var(ddof=1) / nb
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (na - 1) + vb**2 / (nb - 1))

    def density(x):
        x = mpmath.mpf(x)
        return (
            mpmath.gamma((df + 1) / 2)
            / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2))
            * (1 + x**2 / df) ** (-(df + 1) / 2)
        )

    tail = mpmath.quad(density, [abs(t), mpmath.inf])
    return float(t), float(2 * tail)


def oracle_by_adjust(p_values) -> list[float]:
    """Benjamini-Yekutieli step-up adjustment with the harmonic factor."""
    m = len(p_values)
    c_m = sum(1.0 / k for k in range(1, m + 1))
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted_sorted = [0.0] * m
    running_min = 1.0
    for rank in range(m, 0, -1):
        idx = order[rank - 1]
        candidate = min(1.0, m * c_m * p_values[idx] / rank)
        running_min = min(running_min, candidate)
        adjusted_sorted[rank - 1] = running_min
    out = [0.0] * m
    for rank, idx in enumerate(order):
        out[idx] = adjusted_sorted[rank]
    return out
