"""Compactly supported orthonormal wavelet sieve on an interval.

The mother wavelet is a Daubechies wavelet of a given genus N (2N filter
taps, support length S = 2N-1), evaluated on a dyadic table by cascade
refinement of the two-scale equation.  First and second derivative tables
come from differentiating the refinement relation (eigenvector problems at
the integers, then the same dyadic refinement with factors 2 and 4).

Basis enumeration over the interval [-s_X, s_X]: level-major, translate-
minor.  Level j holds S*2^j translates r = 0..S*2^j-1 and the flat index is

    k = (2^j - 1)*S + r.

Translate r at level j is the mother wavelet mapped affinely onto the cell
[-s_X + r*c_j, -s_X + (r+1)*c_j] with c_j = 2*s_X/(S*2^j), normalized to
unit L2 norm.  Under the global affine map of [-s_X, s_X] onto [0, S] this
family is exactly the subfamily {2^{j/2} psi(2^j u - S r)} of the standard
orthonormal wavelet system (translate steps of S in the wavelet's own
argument), hence orthonormal across all levels and translates, and every
member is supported inside the interval.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

__all__ = [
    "daubechies_filter",
    "WaveletTables",
    "wavelet_tables",
    "WaveletBasis",
    "level_of_index",
]


def daubechies_filter(genus: int) -> np.ndarray:
    """Orthonormal Daubechies low-pass filter with `genus` vanishing moments.

    Returns the 2*genus tap filter h with sum(h) = sqrt(2), computed by
    spectral factorization (minimal-phase root selection).
    """
    N = int(genus)
    if N < 1:
        raise ValueError("genus must be >= 1")
    if N == 1:
        return np.array([1.0, 1.0]) / np.sqrt(2.0)
    # P(y) = sum_k C(N-1+k, k) y^k, the Bezout factor of the halfband filter.
    from math import comb

    P = np.array([comb(N - 1 + k, k) for k in range(N)], dtype=float)
    yroots = np.roots(P[::-1])
    zroots = []
    for y in yroots:
        # y = (2 - z - 1/z)/4  =>  z^2 - (2 - 4y) z + 1 = 0
        b = 2.0 - 4.0 * y
        disc = np.sqrt(b * b - 4.0 + 0j)
        z1 = (b + disc) / 2.0
        z2 = (b - disc) / 2.0
        zroots.append(z1 if abs(z1) < 1.0 else z2)
    poly = np.array([1.0 + 0j])
    for z in zroots:
        poly = np.convolve(poly, np.array([1.0, -z]))
    for _ in range(N):
        poly = np.convolve(poly, np.array([0.5, 0.5]))
    h = np.real(poly)
    h *= np.sqrt(2.0) / h.sum()
    return h


def _integer_values(h, deriv_order):
    """Values of the scaling function's derivative of given order at integers.

    Solves the eigenproblem T v = 2^{-deriv_order} v with T[i, j] =
    sqrt(2) h[2i - j], then applies the moment normalization
    sum_i i^q phi^{(q)}(i) = (-1)^q q!.
    """
    n = h.size  # support [0, n-1]
    T = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            k = 2 * i - j
            if 0 <= k < n:
                T[i, j] = np.sqrt(2.0) * h[k]
    w, V = np.linalg.eig(T)
    target = 0.5**deriv_order
    idx = int(np.argmin(np.abs(w - target)))
    v = np.real(V[:, idx])
    i = np.arange(n, dtype=float)
    q = deriv_order
    if q == 0:
        v = v / v.sum()
    else:
        from math import factorial

        mom = np.sum((i**q) * v)
        v = v * ((-1.0) ** q * factorial(q) / mom)
    # endpoints of the support vanish for genus >= 2
    v[0] = 0.0
    v[-1] = 0.0
    return v


def _refine(values, h, deriv_order, levels):
    """Dyadic refinement phi^{(q)}(k/2^{j+1}) = 2^q sqrt(2) sum_m h_m phi^{(q)}(k/2^j - m)."""
    n = h.size
    S = n - 1
    v = values.copy()
    factor = (2.0**deriv_order) * np.sqrt(2.0)
    for j in range(levels):
        step = 2**j
        out = np.zeros(S * 2 ** (j + 1) + 1)
        for m in range(n):
            out[m * step : m * step + v.size] += factor * h[m] * v
        v = out
    return v


@dataclass(frozen=True)
class WaveletTables:
    """Dyadic tables of the mother wavelet psi and its two derivatives on [0, S]."""

    genus: int
    j_table: int
    psi: np.ndarray
    dpsi: np.ndarray
    d2psi: np.ndarray

    @property
    def support_len(self):
        return 2 * self.genus - 1

    @property
    def grid(self):
        S = self.support_len
        return np.linspace(0.0, S, S * 2**self.j_table + 1)


_TABLE_CACHE: dict = {}
_TABLE_LOCK = threading.Lock()


def wavelet_tables(genus=7, j_table=12) -> WaveletTables:
    key = (int(genus), int(j_table))
    with _TABLE_LOCK:
        if key in _TABLE_CACHE:
            return _TABLE_CACHE[key]
    N, J = key
    h = daubechies_filter(N)
    n = h.size
    S = n - 1
    g = np.array([(-1.0) ** m * h[n - 1 - m] for m in range(n)])

    def build(order):
        phi = _refine(_integer_values(h, order), h, order, J)
        psi = np.zeros(S * 2**J + 1)
        fac = (2.0**order) * np.sqrt(2.0)
        for m in range(n):
            lo = m * 2**J
            # psi^{(q)}(i/2^J) = 2^q sqrt2 sum_m g_m phi^{(q)}(2i/2^J - m):
            # source index 2i - m*2^J into the level-J phi table.
            idx_out = np.arange(psi.size)
            src = 2 * idx_out - lo
            ok = (src >= 0) & (src < phi.size)
            psi[ok] += fac * g[m] * phi[src[ok]]
        return psi

    tables = WaveletTables(
        genus=N, j_table=J, psi=build(0), dpsi=build(1), d2psi=build(2)
    )
    with _TABLE_LOCK:
        _TABLE_CACHE.setdefault(key, tables)
        return _TABLE_CACHE[key]


def level_of_index(k, support_len):
    """Decompose flat index k = (2^j - 1)*S + r into (j, r)."""
    if k < 0:
        raise ValueError("index must be >= 0")
    j = int(np.floor(np.log2(k / support_len + 1.0 + 1e-15)))
    # guard against float edge cases at level boundaries
    while (2 ** (j + 1) - 1) * support_len <= k:
        j += 1
    while (2**j - 1) * support_len > k:
        j -= 1
    r = k - (2**j - 1) * support_len
    return j, r


def _hermite_eval(y, d, u, j_table, want):
    """Cubic Hermite interpolation of a dyadic (value, derivative) table.

    want: 0 -> value, 1 -> first derivative, 2 -> second derivative.
    u is an array already inside [0, S].
    """
    scale = 2.0**j_table
    x = u * scale
    idx = np.minimum(x.astype(int), y.size - 2)
    s = x - idx
    h = 1.0 / scale
    y0 = y[idx]
    y1 = y[idx + 1]
    d0 = d[idx]
    d1 = d[idx + 1]
    if want == 0:
        s2 = s * s
        s3 = s2 * s
        return (
            y0 * (2 * s3 - 3 * s2 + 1)
            + d0 * h * (s3 - 2 * s2 + s)
            + y1 * (-2 * s3 + 3 * s2)
            + d1 * h * (s3 - s2)
        )
    if want == 1:
        s2 = s * s
        return (
            6 * (s2 - s) * (y0 - y1) / h
            + d0 * (3 * s2 - 4 * s + 1)
            + d1 * (3 * s2 - 2 * s)
        )
    return ((12 * s - 6) * (y0 - y1) / h + d0 * (6 * s - 4) + d1 * (6 * s - 2)) / h


class WaveletBasis:
    """m-function wavelet sieve on [-s_X, s_X].

    Evaluation of the model surface uses a C^1 cubic Hermite interpolant
    built from the (psi, psi') refinement tables, so analytic gradients and
    finite differences of the same surface agree; `eval_linear` exposes the
    plain linear table lookup.
    """

    def __init__(self, m, s_X, genus=7, j_table=12):
        if m < 1:
            raise ValueError("m >= 1 required")
        if s_X <= 0:
            raise ValueError("s_X > 0 required")
        self.m = int(m)
        self.s_X = float(s_X)
        self.tables = wavelet_tables(genus, j_table)
        self.genus = self.tables.genus
        self.j_table = self.tables.j_table
        S = self.tables.support_len
        self.support_len = S
        self.levels = np.empty(self.m, dtype=int)
        self.translates = np.empty(self.m, dtype=int)
        for k in range(self.m):
            j, r = level_of_index(k, S)
            self.levels[k] = j
            self.translates[k] = r
        self.n_levels = int(self.levels.max()) + 1

    def cell_width(self, j):
        return 2.0 * self.s_X / (self.support_len * 2**j)

    def cell_bounds(self, k):
        j, r = int(self.levels[k]), int(self.translates[k])
        c = self.cell_width(j)
        lo = -self.s_X + r * c
        return lo, lo + c

    def _norm_scale(self, j):
        # gamma_j with ||e_k||_2 = 1: e_k = gamma_j * psi(S (t - t0)/c_j)
        return np.sqrt(self.support_len / self.cell_width(j))

    def eval_linear(self, k, t):
        """Single basis function by linear table lookup; 0 outside its support."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        j = int(self.levels[k])
        lo, hi = self.cell_bounds(k)
        c = self.cell_width(j)
        u = self.support_len * (t - lo) / c
        out = np.zeros_like(t)
        inside = (u >= 0.0) & (u <= self.support_len)
        grid = self.tables.grid
        out[inside] = self._norm_scale(j) * np.interp(u[inside], grid, self.tables.psi)
        return float(out[0]) if scalar else out

    def _design_general(self, t, want):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = t.size
        out = np.zeros((n, self.m))
        S = self.support_len
        tab = self.tables
        for j in range(self.n_levels):
            c = self.cell_width(j)
            rr = np.floor((t + self.s_X) / c).astype(int)
            np.clip(rr, 0, S * 2**j - 1, out=rr)
            u = S * ((t + self.s_X) / c - rr)
            np.clip(u, 0.0, float(S), out=u)
            cols = (2**j - 1) * S + rr
            keep = cols < self.m
            if not np.any(keep):
                continue
            chain = (S / c) ** want
            vals = self._norm_scale(j) * chain * _hermite_eval(
                tab.psi, tab.dpsi, u[keep], self.j_table, want
            )
            out[np.nonzero(keep)[0], cols[keep]] = vals
        return out

    def design(self, t):
        """n x m matrix of basis values e_k(t_i) (C^1 surface)."""
        return self._design_general(t, 0)

    def ddesign(self, t):
        """n x m matrix of first derivatives e_k'(t_i)."""
        return self._design_general(t, 1)

    def d2design(self, t):
        """n x m matrix of second derivatives e_k''(t_i) (piecewise linear)."""
        return self._design_general(t, 2)

    def synth(self, t, eta):
        """f(t) = sum_k eta_k e_k(t)."""
        return self.design(t) @ np.asarray(eta, dtype=float)

    def dump(self, index_path, table_path):
        """Write the index map and the mother tables as CSV for inspection."""
        with open(index_path, "w") as f:
            f.write("k,level,translate,support_lo,support_hi\n")
            for k in range(self.m):
                lo, hi = self.cell_bounds(k)
                f.write(
                    f"{k},{int(self.levels[k])},{int(self.translates[k])},{lo!r},{hi!r}\n"
                )
        grid = self.tables.grid
        with open(table_path, "w") as f:
            f.write("u,psi,dpsi,d2psi\n")
            for i in range(grid.size):
                f.write(
                    f"{grid[i]!r},{self.tables.psi[i]!r},"
                    f"{self.tables.dpsi[i]!r},{self.tables.d2psi[i]!r}\n"
                )
