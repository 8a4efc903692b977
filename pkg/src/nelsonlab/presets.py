"""Named coefficient presets with their run settings.

Every preset carries the grid, the coefficient fields and the sampler and
truncation knobs its checks use, so a name is a complete reproducible setup.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    CoefficientSpec,
    Confining,
    Constant,
    Gaussian,
    Grid,
    Plateau,
    PowerMass,
    ScalarIdentity,
)

DEFAULT_SEED = 20240611


def xi_gaussian(width: float) -> float:
    """Infrared constant ``1/2 ||rho_hat/|k| ||^2`` of a normalized 3-d Gaussian of width ``s``.

    ``|rho_hat|^2 = (2 pi)^{-3} exp(-s^2 k^2)`` so the radial integral gives
    ``1 / (8 pi^{3/2} s)``.
    """
    return 1.0 / (8.0 * np.pi**1.5 * width)


@dataclass(frozen=True)
class Preset:
    name: str
    grid: Grid
    spec: CoefficientSpec
    confining: bool = True
    settings: dict = field(default_factory=dict, compare=False, hash=False)
    bound_fit: bool = False
    # a/c^2 or A eigenvalue ranges the fitted Gaussian rates must bracket
    rate_targets: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def seed(self) -> int:
        return int(self.settings.get("seed", DEFAULT_SEED))

    @property
    def exploratory(self) -> bool:
        return self.grid.d != 3

    def with_spec(self, **changes) -> "Preset":
        return Preset(self.name, self.grid, self.spec.replace(**changes), self.confining,
                      dict(self.settings), self.bound_fit, dict(self.rate_targets))


def _harmonic_1d() -> Preset:
    spec = CoefficientSpec(
        name="harmonic-1d", V=Confining(1.0, 1.0, shift=1.0), V_shift=1.0, delta=1.0, b0=1.0,
        rho=Gaussian(1.0), q=1.0,
    )
    return Preset(
        "harmonic-1d", Grid(1, 6.0, 128), spec,
        settings={"fk_dt": 1e-3, "fk_t": 1.0, "fk_M": 20000, "fk_radius": 3.0,
                  "dt": 0.05, "T": 2.0, "M": 10000, "T_grid": [0.5, 1.0, 2.0], "lam": 0.75},
        bound_fit=True, rate_targets={"K0": (0.5, 0.5), "h": (1.0, 1.0)},
    )


def _quartic_1d() -> Preset:
    spec = CoefficientSpec(name="quartic-1d", V=Confining(1.0, 2.0), delta=2.0, b0=1.0, rho=Gaussian(1.0))
    return Preset("quartic-1d", Grid(1, 4.0, 96), spec,
                  settings={"dt": 0.05, "T": 2.0, "M": 10000, "lam": 2.0 / 3.0},
                  bound_fit=True, rate_targets={"K0": (0.5, 0.5), "h": (1.0, 1.0)})


def _flat_inside_1d() -> Preset:
    spec = CoefficientSpec(name="flat-inside-1d", V=Confining(1.0, 1.0, r0=2.0), delta=1.0, b0=1.0,
                           rho=Gaussian(1.0))
    return Preset("flat-inside-1d", Grid(1, 6.0, 128), spec,
                  settings={"dt": 0.05, "T": 2.0, "M": 10000, "lam": 0.75, "flat_radius": 2.0},
                  bound_fit=True, rate_targets={"K0": (0.5, 0.5), "h": (1.0, 1.0)})


def _plateau(d: int, massive: bool) -> Preset:
    A = ScalarIdentity(Plateau(0.8, 1.25))
    c = Plateau(1.1, 0.95)
    m = PowerMass(1.0, 2.0) if massive else Constant(0.0)
    name = f"plateau-{d}d" + ("-massive" if massive else "")
    spec = CoefficientSpec(
        name=name, A=A, a=A, c=c, m=m, V=Confining(1.0, 1.0), C0=0.8, C1=1.25,
        mu=2.0 if massive else None, delta=1.0, b0=1.0, rho=Gaussian(1.0),
    )
    grid = Grid(d, 4.0, 41 if d == 1 else 25)
    # h rates follow a/c^2, K0 rates follow A/2; both evaluated on the plateaus
    return Preset(name, grid, spec, settings={"dt": 0.05, "T": 1.0, "M": 4000, "lam": 0.75},
                  bound_fit=True,
                  rate_targets={"K0": (0.4, 0.625), "h": (0.8 / 1.1**2, 1.25 / 0.95**2)})


def _tiny_chain() -> Preset:
    spec = CoefficientSpec(name="tiny-chain", m=Constant(1.0), V=Confining(1.0, 1.0), delta=1.0, b0=1.0,
                           rho=Gaussian(1.0), q=2.0)
    return Preset("tiny-chain", Grid(1, 2.5, 6), spec,
                  settings={"dt": 0.01, "T_grid": [0.5, 1.0, 2.0], "M": 20000, "lam": 0.75,
                            "n_modes": 3, "n_max": 4, "n_part": 6})


def _box_3d(massive: bool) -> Preset:
    s = 6.0
    m = Constant(1.0) if massive else PowerMass(1.0, 2.0)
    name = "massive-3d" if massive else "decay-3d"
    q = float(1.0 / np.sqrt(xi_gaussian(s)))
    spec = CoefficientSpec(name=name, m=m, V=Confining(1.0, 1.0), rho=Gaussian(s), q=q,
                           mu=None if massive else 2.0, delta=1.0, b0=1.0)
    return Preset(name, Grid(3, 27.0, 10), spec,
                  settings={"dt": 0.25, "T_grid": [1.0, 2.0, 4.0, 8.0, 16.0], "M": 4000, "lam": 0.75,
                            "n_modes": 7, "n_max": 4, "n_part": 8})


_BUILDERS = {
    "harmonic-1d": _harmonic_1d,
    "quartic-1d": _quartic_1d,
    "flat-inside-1d": _flat_inside_1d,
    "plateau-1d": lambda: _plateau(1, False),
    "plateau-1d-massive": lambda: _plateau(1, True),
    "plateau-2d": lambda: _plateau(2, False),
    "plateau-2d-massive": lambda: _plateau(2, True),
    "tiny-chain": _tiny_chain,
    "massive-3d": lambda: _box_3d(True),
    "decay-3d": lambda: _box_3d(False),
}

NAMES = tuple(_BUILDERS)


def get(name: str) -> Preset:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(NAMES)}") from None


def bound_fit_presets():
    return [get(n) for n in NAMES if get(n).bound_fit]
