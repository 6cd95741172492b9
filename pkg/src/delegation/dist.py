"""One-dimensional type laws on [0, 1] and the transforms built on them.

Every application consumes the same handful of objects: the CDF, the density,
the virtual value ``x - (1 - F(x)) / f(x)`` and its inverse, and the partial
CDF integral ``I_F(x) = int_0^x F``. Expectations use fixed-node
Gauss-Legendre quadrature so results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_legendre

from .report import FeasibilityReport

DENSITY_FLOOR = 1e-12
SHAPE_SLACK = 1e-9
BISECTION_STEPS = 64


@functools.lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point rule mapped to [0, 1]."""
    x, w = roots_legendre(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_nodes(
    lo: float, hi: float, n: int, breakpoints: Sequence[float] = ()
) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on [lo, hi], split at breakpoints.

    Roughly ``n`` nodes in total, at least 8 per panel.
    """
    cuts = sorted({lo, hi, *(b for b in breakpoints if lo < b < hi)})
    panels = len(cuts) - 1
    if panels <= 0:
        return np.empty(0), np.empty(0)
    per = max(8, n // panels)
    x0, w0 = gauss_legendre(per)
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        xs.append(a + (b - a) * x0)
        ws.append((b - a) * w0)
    return np.concatenate(xs), np.concatenate(ws)


def _as_float(x, out):
    return float(out) if np.ndim(x) == 0 else out


def _check_domain(x: np.ndarray, what: str = "x") -> None:
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{what} must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class TypeDistribution:
    """A type law on [0, 1].

    Construct through :func:`uniform`, :func:`power`,
    :func:`truncated_exponential`, :func:`tabulated` or :func:`from_csv`.
    """

    family: str
    params: dict = field(default_factory=dict)
    grid_resolution: int = 2001
    knots: np.ndarray | None = None
    knot_density: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be at least 2")
        if self.family == "tabulated":
            x, f = self.knots, self.knot_density
            h = np.diff(x)
            cdf_k = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[:-1] + f[1:]))])
            # integral of the piecewise-quadratic CDF over each segment
            seg = h * cdf_k[:-1] + h**2 * (2.0 * f[:-1] + f[1:]) / 6.0
            icdf_k = np.concatenate([[0.0], np.cumsum(seg)])
            for arr in (cdf_k, icdf_k):
                arr.setflags(write=False)
            object.__setattr__(self, "_cdf_knots", cdf_k)
            object.__setattr__(self, "_icdf_knots", icdf_k)

    def __repr__(self) -> str:
        if self.family == "tabulated":
            return f"TypeDistribution(tabulated, {len(self.knots)} knots)"
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"TypeDistribution({self.family}({args}))"

    @property
    def breakpoints(self) -> tuple[float, ...]:
        if self.family == "tabulated":
            return tuple(float(v) for v in self.knots[1:-1])
        return ()

    # --- primitives -----------------------------------------------------

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        _check_domain(xa)
        fam, p = self.family, self.params
        if fam == "uniform":
            out = np.ones_like(xa)
        elif fam == "power":
            k = p["k"]
            with np.errstate(divide="ignore", invalid="ignore"):
                out = k * np.power(xa, k - 1.0)
            out = np.where(np.isnan(out), 0.0, out)
        elif fam == "truncated_exponential":
            lam = p["lam"]
            out = lam * np.exp(-lam * xa) / -np.expm1(-lam)
        else:
            out = np.interp(xa, self.knots, self.knot_density)
        return _as_float(x, out)

    def cdf(self, x):
        """F(x); raises ValueError outside [0, 1]."""
        xa = np.asarray(x, dtype=float)
        _check_domain(xa)
        fam, p = self.family, self.params
        if fam == "uniform":
            out = xa.copy()
        elif fam == "power":
            out = np.power(xa, p["k"])
        elif fam == "truncated_exponential":
            lam = p["lam"]
            out = np.expm1(-lam * xa) / np.expm1(-lam)
        else:
            i, dx, h = self._segment(xa)
            f0 = self.knot_density[i]
            slope = (self.knot_density[i + 1] - f0) / h
            out = self._cdf_knots[i] + f0 * dx + 0.5 * slope * dx**2
        out = np.clip(out, 0.0, 1.0)
        return _as_float(x, out)

    def partial_cdf_integral(self, x):
        """I_F(x) = int_0^x F(t) dt, in closed form for every family."""
        xa = np.asarray(x, dtype=float)
        _check_domain(xa)
        fam, p = self.family, self.params
        if fam == "uniform":
            out = 0.5 * xa**2
        elif fam == "power":
            k = p["k"]
            out = np.power(xa, k + 1.0) / (k + 1.0)
        elif fam == "truncated_exponential":
            lam = p["lam"]
            # int_0^x (1 - e^{-lam t}) dt / (1 - e^{-lam})
            out = (xa + np.expm1(-lam * xa) / lam) / -np.expm1(-lam)
        else:
            i, dx, h = self._segment(xa)
            f0 = self.knot_density[i]
            slope = (self.knot_density[i + 1] - f0) / h
            out = (
                self._icdf_knots[i]
                + self._cdf_knots[i] * dx
                + f0 * dx**2 / 2.0
                + slope * dx**3 / 6.0
            )
        return _as_float(x, out)

    def _segment(self, xa):
        i = np.clip(np.searchsorted(self.knots, xa, side="right") - 1, 0, len(self.knots) - 2)
        h = self.knots[i + 1] - self.knots[i]
        return i, xa - self.knots[i], h

    # --- quadrature -----------------------------------------------------

    def expect(
        self,
        integrand: Callable[[np.ndarray], np.ndarray],
        lo: float = 0.0,
        hi: float = 1.0,
        breakpoints: Sequence[float] = (),
    ) -> float:
        """E[integrand(X); lo <= X <= hi] by composite Gauss-Legendre."""
        if self.family == "power" and self.params["k"] < 1.0:
            # density is singular at 0; integrate in u = F(x) instead
            k = self.params["k"]
            u_breaks = [b**k for b in breakpoints]
            u, w = panel_nodes(lo**k, hi**k, self.grid_resolution, u_breaks)
            if u.size == 0:
                return 0.0
            x = np.power(u, 1.0 / k)
            return float(np.sum(w * np.broadcast_to(np.asarray(integrand(x), dtype=float), x.shape)))
        x, w = panel_nodes(lo, hi, self.grid_resolution, (*self.breakpoints, *breakpoints))
        if x.size == 0:
            return 0.0
        vals = np.broadcast_to(np.asarray(integrand(x), dtype=float), x.shape)
        return float(np.sum(w * self.pdf(x) * vals))

    @functools.cached_property
    def mean(self) -> float:
        return self.expect(lambda x: x)

    # --- hazard transforms ----------------------------------------------

    def hazard_ratio(self, x):
        """(1 - F(x)) / f(x); +inf where the density vanishes."""
        xa = np.asarray(x, dtype=float)
        f = np.asarray(self.pdf(xa))
        tail = 1.0 - np.asarray(self.cdf(xa))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(f >= DENSITY_FLOOR, tail / np.where(f > 0, f, 1.0), np.inf)
        out = np.where(tail <= 0.0, 0.0, out)
        return _as_float(x, out)

    def virtual_value(self, x):
        xa = np.asarray(x, dtype=float)
        out = xa - np.asarray(self.hazard_ratio(xa))
        return _as_float(x, out)

    def inverse_virtual_value(self, y, slack: float = 1e-12):
        """Monotone bisection for psi^{-1}(y) on [0, 1].

        Raises ValueError if y is outside [psi(0), psi(1)]; never clamps.
        Assumes psi is increasing (check with :func:`check_mhr`).
        """
        ya = np.asarray(y, dtype=float)
        lo_img = self.virtual_value(0.0)
        hi_img = self.virtual_value(1.0)
        if np.any(np.isnan(ya)) or np.any(ya < lo_img - slack) or np.any(ya > hi_img + slack):
            raise ValueError(
                f"value outside the virtual-value image [{lo_img}, {hi_img}]"
            )
        lo = np.zeros_like(ya)
        hi = np.ones_like(ya)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            below = np.asarray(self.virtual_value(mid)) < ya
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return _as_float(y, 0.5 * (lo + hi))

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_resolution)


# --- constructors -----------------------------------------------------------


def uniform(a: float = 0.0, b: float = 1.0, grid_resolution: int = 2001) -> TypeDistribution:
    # only the full-support case has a positive density on all of [0, 1]
    if a != 0.0 or b != 1.0:
        raise ValueError("uniform(a, b) must have a=0, b=1 to keep full support on [0, 1]")
    return TypeDistribution("uniform", {"a": a, "b": b}, grid_resolution)


def power(k: float, grid_resolution: int = 2001) -> TypeDistribution:
    """F(x) = x**k. The density vanishes at 0 when k > 1."""
    if not k > 0:
        raise ValueError("power exponent must be positive")
    return TypeDistribution("power", {"k": float(k)}, grid_resolution)


def truncated_exponential(lam: float, grid_resolution: int = 2001) -> TypeDistribution:
    """Density proportional to exp(-lam * x) on [0, 1]; lam may be negative."""
    if lam == 0 or not np.isfinite(lam):
        raise ValueError("lam must be finite and non-zero (use uniform for lam=0)")
    return TypeDistribution("truncated_exponential", {"lam": float(lam)}, grid_resolution)


def tabulated(
    x: Sequence[float], density: Sequence[float], grid_resolution: int = 2001
) -> TypeDistribution:
    """Piecewise-linear density through (x, density), renormalised to mass one."""
    xs = np.array(x, dtype=float)
    fs = np.array(density, dtype=float)
    if xs.ndim != 1 or xs.shape != fs.shape or xs.size < 2:
        raise ValueError("x and density must be 1-D arrays of equal length >= 2")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("x must be strictly increasing")
    if xs[0] != 0.0 or xs[-1] != 1.0:
        raise ValueError("tabulated knots must span [0, 1] exactly")
    if np.any(fs < 0) or np.any(fs[1:-1] <= 0):
        raise ValueError("density must be positive at interior knots and non-negative at the ends")
    mass = float(np.sum(0.5 * np.diff(xs) * (fs[:-1] + fs[1:])))
    fs = fs / mass
    xs.setflags(write=False)
    fs.setflags(write=False)
    return TypeDistribution("tabulated", {}, grid_resolution, xs, fs)


def from_csv(path: str | Path, grid_resolution: int = 2001) -> TypeDistribution:
    """Load a tabulated law from a two-column CSV with a header row."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ValueError(f"{path}: need a header row and at least two data rows")
    try:
        data = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    xs, fs = zip(*data)
    return tabulated(xs, fs, grid_resolution)


def discretize(d: TypeDistribution, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Equally spaced nodes on [0, 1] with the exact mass of each Voronoi cell."""
    nodes = np.linspace(0.0, 1.0, n)
    edges = np.concatenate([[0.0], 0.5 * (nodes[:-1] + nodes[1:]), [1.0]])
    pmf = np.diff(np.asarray(d.cdf(edges)))
    return nodes, pmf / pmf.sum()


# --- shape checks -------------------------------------------------------------


def check_mhr(d: TypeDistribution, slack: float = SHAPE_SLACK) -> FeasibilityReport:
    """Is (1 - F) / f non-increasing across adjacent grid nodes?

    Nodes where the density is below 1e-12 are skipped and listed.
    """
    x = d.nodes()
    f = np.asarray(d.pdf(x))
    valid = f >= DENSITY_FLOOR
    xv = x[valid]
    h = np.asarray(d.hazard_ratio(xv))
    rises = np.diff(h)
    rep = FeasibilityReport.from_violations(
        "mhr",
        rises,
        slack,
        witness=lambda i: {"x": float(xv[i[0] + 1]), "previous_node": float(xv[i[0]])},
        invalid_nodes=x[~valid].tolist(),
    )
    return rep


def check_hazard_dominance(
    F: TypeDistribution, G: TypeDistribution, slack: float = SHAPE_SLACK
) -> FeasibilityReport:
    """F(v | v >= p) <= G(v | v >= p) for all grid pairs p <= v.

    Checked twice: directly on the conditional CDFs, and through the
    monotonicity of R = (1 - F) / (1 - G). Both must agree.
    """
    n = max(F.grid_resolution, G.grid_resolution)
    x = np.linspace(0.0, 1.0, n)
    Fx = np.asarray(F.cdf(x))
    Gx = np.asarray(G.cdf(x))
    tailF = 1.0 - Fx
    tailG = 1.0 - Gx
    inner = slice(0, n - 1)  # conditioning on v >= 1 is degenerate

    worst, witness = -np.inf, None
    chunk = 256
    for start in range(0, n - 1, chunk):
        p = np.arange(start, min(start + chunk, n - 1))
        condF = (Fx[None, :] - Fx[p, None]) / tailF[p, None]
        condG = (Gx[None, :] - Gx[p, None]) / tailG[p, None]
        gap = np.where(np.arange(n)[None, :] >= p[:, None], condF - condG, -np.inf)
        k = int(np.argmax(gap))
        r, c = divmod(k, n)
        if gap[r, c] > worst:
            worst = float(gap[r, c])
            witness = {"p": float(x[p[r]]), "v": float(x[c])}
    conditional = FeasibilityReport(
        "conditional_cdf", max(worst, 0.0), slack, witness if worst > 0 else None
    )

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = tailF[inner] / tailG[inner]
    drops = -np.diff(ratio)
    ratio_rep = FeasibilityReport.from_violations(
        "tail_ratio_monotone",
        drops,
        slack,
        witness=lambda i: {"x": float(x[i[0] + 1])},
    )
    rep = FeasibilityReport.combine(
        "hazard_dominance", {"conditional_cdf": conditional, "tail_ratio": ratio_rep}, slack
    )
    rep.details["formulations_agree"] = conditional.passed == ratio_rep.passed
    return rep
