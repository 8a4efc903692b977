"""Lattice geometry and sampled coefficient fields.

A :class:`Grid` is a uniform box ``[-R, R]^d`` with ``N`` points per axis.
Under Dirichlet walls the two outermost points of every axis carry the
boundary value zero, so every lattice operator acts on the ``(N - 2)^d``
interior points; the periodic test variant keeps all ``N^d`` points.

Coefficient fields are small callable objects evaluated on arrays of points
of shape ``(n, d)``. Scalar fields return ``(n,)``; matrix fields ``(n, d, d)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class SpecError(ValueError):
    """Raised when a coefficient field violates one of its standing assumptions."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message if node is None else f"{message} (node {node})")
        self.node = node


@dataclass(frozen=True)
class Grid:
    d: int
    R: float
    N: int
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 2:
            raise ValueError("need at least two points per axis")
        if not self.R > 0:
            raise ValueError("half-width R must be positive")
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown boundary condition {self.boundary!r}")
        if self.boundary == "dirichlet" and self.N < 3:
            raise ValueError("Dirichlet grid needs N >= 3 to have an interior")

    @property
    def dx(self) -> float:
        return 2.0 * self.R / (self.N - 1)

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.N)

    @property
    def n_nodes(self) -> int:
        return self.N**self.d

    @property
    def nodes(self) -> np.ndarray:
        """All ``N^d`` node coordinates in lexicographic (C) order."""
        return _mesh(self.axis, self.d)

    @property
    def m(self) -> int:
        """Unknowns per axis."""
        return self.N - 2 if self.boundary == "dirichlet" else self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.d

    @property
    def n_points(self) -> int:
        return self.m**self.d

    @property
    def point_axis(self) -> np.ndarray:
        return self.axis[1:-1] if self.boundary == "dirichlet" else self.axis

    @property
    def points(self) -> np.ndarray:
        """Coordinates of the unknowns (interior points), ``(n_points, d)``."""
        return _mesh(self.point_axis, self.d)

    def flat_index(self, multi) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.shape)

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1)

    def reflect_index(self) -> np.ndarray:
        """Permutation mapping each point to its mirror image ``x -> -x``."""
        mi = self.multi_index(np.arange(self.n_points))
        return self.flat_index(self.m - 1 - mi)

    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def describe(self) -> dict:
        return {"d": self.d, "R": float(self.R), "N": self.N, "boundary": self.boundary}


def _mesh(axis: np.ndarray, d: int) -> np.ndarray:
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def japanese(x: np.ndarray) -> np.ndarray:
    """``<x> = (1 + |x|^2)^{1/2}`` row-wise."""
    x = np.atleast_2d(x)
    return np.sqrt(1.0 + np.sum(x * x, axis=1))


# ---------------------------------------------------------------------------
# field building blocks


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def __call__(self, x):
        return np.full(np.atleast_2d(x).shape[0], float(self.value))


@dataclass(frozen=True)
class Bump:
    """``base + amp * exp(-|x - center|^2 / (2 width^2))``."""

    base: float = 1.0
    amp: float = 0.0
    width: float = 1.0
    center: tuple = ()

    def __call__(self, x):
        x = np.atleast_2d(x)
        c = np.zeros(x.shape[1]) if not self.center else np.asarray(self.center, float)
        r2 = np.sum((x - c) ** 2, axis=1)
        return self.base + self.amp * np.exp(-r2 / (2.0 * self.width**2))


@dataclass(frozen=True)
class Plateau:
    """Exactly ``lo`` for ``x_axis <= -width`` and ``hi`` for ``x_axis >= width``.

    The transition is the C^2 smootherstep ``6u^5 - 15u^4 + 10u^3``.
    """

    lo: float = 0.8
    hi: float = 1.25
    width: float = 1.0
    axis: int = 0

    def __call__(self, x):
        x = np.atleast_2d(x)
        u = np.clip((x[:, self.axis] + self.width) / (2 * self.width), 0.0, 1.0)
        s = u**3 * (10 - 15 * u + 6 * u * u)
        return self.lo + (self.hi - self.lo) * s


@dataclass(frozen=True)
class PowerMass:
    """``m0 <x>^{-mu}``."""

    m0: float = 1.0
    mu: float = 2.0

    def __call__(self, x):
        return self.m0 * japanese(x) ** (-self.mu)


@dataclass(frozen=True)
class Confining:
    """``b0 * max(<x>, <r0>)^{2 delta} - shift``; ``r0 = 0`` gives the plain power."""

    b0: float = 1.0
    delta: float = 1.0
    r0: float = 0.0
    shift: float = 0.0

    def __call__(self, x):
        jx = japanese(x)
        floor = np.sqrt(1.0 + self.r0**2)
        return self.b0 * np.maximum(jx, floor) ** (2 * self.delta) - self.shift


@dataclass(frozen=True)
class Gaussian:
    """Normalized isotropic Gaussian density with per-axis standard deviation ``width``."""

    width: float = 1.0

    def __call__(self, x):
        x = np.atleast_2d(x)
        d = x.shape[1]
        s2 = self.width**2
        return (2 * np.pi * s2) ** (-d / 2) * np.exp(-np.sum(x * x, axis=1) / (2 * s2))

    def fourier_sq(self, k):
        """``|rho_hat(k)|^2`` with ``rho_hat(k) = (2 pi)^{-3/2} int rho e^{-ikx} dx`` (d = 3)."""
        k = np.asarray(k, float)
        return (2 * np.pi) ** (-3) * np.exp(-(self.width**2) * k * k)


@dataclass(frozen=True)
class ScalarIdentity:
    """Matrix field ``s(x) * Id``."""

    scalar: Any = Constant(1.0)

    def __call__(self, x):
        x = np.atleast_2d(x)
        s = self.scalar(x)
        return s[:, None, None] * np.eye(x.shape[1])[None]


@dataclass(frozen=True)
class Tabulated:
    """Field given by its values on the full node set of a grid.

    Evaluation off the nodes is multilinear. ``values`` has shape
    ``(N^d,)`` or ``(N^d, d, d)``.
    """

    grid: Grid
    values: Any

    def __post_init__(self):
        vals = np.asarray(self.values, float)
        if vals.shape[0] != self.grid.n_nodes:
            raise ValueError("tabulated field must have one entry per grid node")
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        x = np.atleast_2d(x)
        g = self.grid
        axes = (g.axis,) * g.d
        tail = self.values.shape[1:]
        table = self.values.reshape((g.N,) * g.d + tail)
        interp = RegularGridInterpolator(axes, table, bounds_error=False, fill_value=None)
        return interp(np.clip(x, -g.R, g.R))

    def __hash__(self):
        return hash((self.grid, self.values.tobytes()))

    def __eq__(self, other):
        return (
            isinstance(other, Tabulated)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )


IDENTITY = ScalarIdentity(Constant(1.0))


def random_metric(grid: Grid, lo: float, hi: float, seed: int = 0) -> Tabulated:
    """Tabulated symmetric matrix field with eigenvalues drawn uniformly in ``[lo, hi]``."""
    rng = np.random.default_rng(seed)
    d = grid.d
    vals = np.empty((grid.n_nodes, d, d))
    for i in range(grid.n_nodes):
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        vals[i] = (q * rng.uniform(lo, hi, d)) @ q.T
    vals = 0.5 * (vals + np.swapaxes(vals, 1, 2))
    return Tabulated(grid, vals)


# ---------------------------------------------------------------------------


def _field_repr(f) -> Any:
    if isinstance(f, Tabulated):
        return {"Tabulated": hashlib.sha256(f.values.tobytes()).hexdigest()[:16]}
    if hasattr(f, "__dataclass_fields__"):
        out = {"type": type(f).__name__}
        for name in f.__dataclass_fields__:
            v = getattr(f, name)
            out[name] = _field_repr(v) if hasattr(v, "__dataclass_fields__") else v
        return out
    return repr(f)


@dataclass(frozen=True)
class CoefficientSpec:
    """Coefficient fields of the particle operator ``K`` and the boson operator ``h``.

    ``A`` is the particle metric, ``a`` and ``c`` enter ``h_0``, ``m`` is the
    boson mass, ``V`` the external potential and ``rho`` the charge profile.
    ``delta``/``b0``/``V_shift`` certify the confinement ``V + V_shift >=
    b0 <x>^{2 delta}``; ``mu`` is the mass decay exponent.
    """

    name: str = "custom"
    A: Any = IDENTITY
    a: Any = IDENTITY
    c: Any = Constant(1.0)
    m: Any = Constant(0.0)
    V: Any = Constant(0.0)
    rho: Any = Gaussian(1.0)
    q: float = 1.0
    C0: float = 1.0
    C1: float = 1.0
    mu: float | None = None
    delta: float | None = None
    b0: float = 0.0
    V_shift: float = 0.0
    notes: dict = field(default_factory=dict, compare=False, hash=False)

    # -- sampling -----------------------------------------------------------
    def sample(self, grid: Grid, name: str, where: str = "points") -> np.ndarray:
        pts = grid.points if where == "points" else grid.nodes
        return np.asarray(getattr(self, name)(pts), float)

    @property
    def rho_width(self) -> float | None:
        return getattr(self.rho, "width", None)

    # -- checks -------------------------------------------------------------
    def check_matrix(self, grid: Grid, name: str = "A", tol: float = 1e-12) -> None:
        vals = self.sample(grid, name, where="nodes")
        asym = np.max(np.abs(vals - np.swapaxes(vals, 1, 2)), axis=(1, 2))
        bad = np.flatnonzero(asym > tol * max(1.0, np.max(np.abs(vals))))
        if bad.size:
            raise SpecError(f"{name} is not symmetric", int(bad[0]))
        ev = np.linalg.eigvalsh(vals)
        slack = 1e-12 * max(1.0, self.C1)
        low = np.flatnonzero(ev[:, 0] < self.C0 - slack)
        if low.size:
            raise SpecError(
                f"ellipticity violated: min eigenvalue of {name} "
                f"{ev[low[0], 0]:.6g} < C0={self.C0}",
                int(low[0]),
            )
        high = np.flatnonzero(ev[:, -1] > self.C1 + slack)
        if high.size:
            raise SpecError(
                f"max eigenvalue of {name} {ev[high[0], -1]:.6g} > C1={self.C1}", int(high[0])
            )

    def check_potential(self, grid: Grid) -> None:
        V = self.sample(grid, "V", where="nodes")
        bad = np.flatnonzero(V < 0)
        if bad.size:
            raise SpecError(f"potential V is negative ({V[bad[0]]:.6g})", int(bad[0]))

    def check_confining(self, grid: Grid) -> None:
        """Confinement gate: ``V + V_shift >= b0 <x>^{2 delta}`` with ``b0, delta > 0``."""
        if self.delta is None or not self.delta > 0:
            raise SpecError(f"confinement needs delta > 0, got {self.delta}")
        if not self.b0 > 0:
            raise SpecError(f"confinement needs b0 > 0, got {self.b0}")
        if self.V_shift < 0:
            raise SpecError("V_shift must be nonnegative")
        nodes = grid.nodes
        V = self.V(nodes) + self.V_shift
        lower = self.b0 * japanese(nodes) ** (2 * self.delta)
        bad = np.flatnonzero(V < lower * (1 - 1e-12))
        if bad.size:
            raise SpecError("V is below b0 <x>^{2 delta}", int(bad[0]))

    def check_boson(self, grid: Grid) -> None:
        self.check_matrix(grid, "a")
        c = self.sample(grid, "c", where="nodes")
        bad = np.flatnonzero(c <= 0)
        if bad.size:
            raise SpecError("c must be positive", int(bad[0]))
        bad = np.flatnonzero((c < self.C0 * (1 - 1e-12)) | (c > self.C1 * (1 + 1e-12)))
        if bad.size:
            raise SpecError(f"c outside [C0, C1] ({c[bad[0]]:.6g})", int(bad[0]))
        m = self.sample(grid, "m", where="nodes")
        bad = np.flatnonzero(m < 0)
        if bad.size:
            raise SpecError("mass m must be nonnegative", int(bad[0]))

    def check_charge(self, grid: Grid) -> None:
        r = self.rho(grid.nodes - 0.0)
        if np.any(r < 0):
            raise SpecError("charge density must be nonnegative", int(np.argmin(r)))

    def validate(self, grid: Grid, confining: bool = False) -> None:
        self.check_matrix(grid, "A")
        self.check_potential(grid)
        self.check_boson(grid)
        self.check_charge(grid)
        if confining:
            self.check_confining(grid)

    def replace(self, **changes) -> "CoefficientSpec":
        from dataclasses import replace

        return replace(self, **changes)

    def describe(self) -> dict:
        out = {"name": self.name}
        for key in ("A", "a", "c", "m", "V", "rho"):
            out[key] = _field_repr(getattr(self, key))
        for key in ("q", "C0", "C1", "mu", "delta", "b0", "V_shift"):
            out[key] = getattr(self, key)
        return out

    def spec_hash(self, grid: Grid | None = None) -> str:
        payload = {"spec": self.describe()}
        if grid is not None:
            payload["grid"] = grid.describe()
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
