"""Command-line front end: ``nelsonlab [flags] SUBCOMMAND``.

Every subcommand writes deterministic data files into ``--out`` (CSV, JSON or
an NLAB1 container) whose headers carry the config hash, seed and library
versions. Timestamps and wall-clock timings go to ``.meta.json`` sidecars.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import container as io
from . import experiments as ex
from . import presets
from .grid import SpecError
from .operators import DenseCapError, check_cap
from .spectral import GroundStateError, OracleError

log = logging.getLogger("nelsonlab")

SUBCOMMANDS = ("spectrum", "kernel-check", "fk-check", "paths", "pairpot", "gamma", "fock-check", "full-dichotomy")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


_SKIP = object()


def _public(obj):
    """JSON-safe view of a report: drops timings and live objects."""
    if isinstance(obj, dict):
        kept = {k: _public(v) for k, v in obj.items() if k != "seconds"}
        return {k: v for k, v in kept.items() if v is not _SKIP}
    if isinstance(obj, (list, tuple)):
        return [v for v in map(_public, obj) if v is not _SKIP]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if obj is None or isinstance(obj, (bool, int, float, str, np.generic)):
        return obj
    return _SKIP


def _timings(report, prefix="") -> dict:
    out = {}
    for k, v in report.items():
        if k == "seconds":
            out[prefix.rstrip(".") or "total"] = v
        elif isinstance(v, dict):
            out.update(_timings(v, f"{prefix}{k}."))
    return out


class Writer:
    def __init__(self, out: Path, cfg: cfgmod.RunConfig, command: str):
        self.out, self.cfg, self.command = out, cfg, command
        out.mkdir(parents=True, exist_ok=True)
        self.files = []

    @property
    def provenance(self) -> dict:
        return {"config_hash": self.cfg.hash, "seed": self.cfg.seed, "command": self.command,
                "preset": self.cfg.preset_name}

    def csv(self, name: str, rows, columns=None) -> None:
        path = self.out / name
        extra = {k: v for k, v in self.provenance.items() if k != "config_hash"}
        io.write_csv(path, rows, self.cfg.hash, columns, extra)
        self._done(path)

    def json(self, name: str, report: dict) -> None:
        path = self.out / name
        body = {**self.provenance, "versions": io.versions(), "config": self.cfg.canonical(),
                "report": _public(report)}
        path.write_text(io.dumps(body))
        self._done(path, {"timings": _timings(report)})

    def container(self, name: str, arrays: dict, meta: dict | None = None) -> None:
        path = self.out / name
        io.write_container(path, arrays, {**self.provenance, "versions": io.versions(), **(meta or {})})
        self._done(path)

    def _done(self, path: Path, extra: dict | None = None) -> None:
        io.write_sidecar(path, self.cfg.hash, extra)
        self.files.append(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(p, cfg, w: Writer) -> dict:
    r = ex.run_spectrum(p)
    w.csv("spectrum.csv", r["rows"])
    w.csv("ground_state.csv", r["psi_rows"])
    part = ex.particle(p)
    w.container("operators.nlab", {"K": part.K.matrix, "L": np.array(part.L.matrix), "mu": np.array(part.L.mu),
                                   "points": p.grid.points})
    w.json("spectrum.json", r)
    return r


def cmd_kernel_check(p, cfg, w: Writer) -> dict:
    r = ex.run_kernel_check(p)
    rows = [{"operator": k, "bound": side, "C": v[side]["C"], "c": v[side]["c"],
             "verified": v[side]["verified"], "target": v["target"][0 if side == "lower" else 1]}
            for k, v in r["fits"].items() for side in ("lower", "upper")]
    w.csv("gaussian_bounds.csv", rows)
    w.json("kernel_check.json", r)
    return r


def cmd_fk_check(p, cfg, w: Writer) -> dict:
    r = ex.run_fk_check(p, workers=cfg.workers)
    w.csv("feynman_kac.csv", r["rows"])
    w.json("fk_check.json", r)
    return r


def cmd_paths(p, cfg, w: Writer) -> dict:
    r = ex.run_paths(p, workers=cfg.workers)
    ens = r["ensemble"]
    w.container("ensemble.nlab", {"times": ens.times, "states": ens.states}, {"kind": ens.kind, "dt": ens.dt})
    ineq = ex.run_inequalities(p, workers=cfg.workers)
    r["checks"].update({f"inequality_{k}": v for k, v in ineq["checks"].items()})
    r = ex._finish(r)
    w.json("paths.json", r)
    return r


def cmd_pairpot(p, cfg, w: Writer) -> dict:
    r = ex.run_pairpot(p, p.settings.get("t_grid"))
    tab = r["table"]
    w.container("pairpot.nlab", {"t": tab.t_grid, "W": tab.W}, {"method": tab.method})
    w.json("pairpot.json", r)
    return r


def cmd_gamma(p, cfg, w: Writer) -> dict:
    q = p.settings.get("q")
    r = ex.run_gamma(p, workers=cfg.workers, q=q, full_modes=bool(p.settings.get("full_modes", True)))
    w.csv("gamma.csv", r["rows"])
    w.json("gamma.json", r)
    return r


def cmd_fock_check(p, cfg, w: Writer) -> dict:
    r = ex.run_fock_crosscheck(p, workers=cfg.workers)
    w.csv("fock.csv", r["rows"])
    w.json("fock_check.json", r)
    return r


def cmd_full_dichotomy(p, cfg, w: Writer) -> dict:
    massive = _override_preset(cfg, "massive-3d")
    decay = _override_preset(cfg, "decay-3d")
    r = ex.run_dichotomy(massive, decay, workers=cfg.workers)
    w.csv("dichotomy.csv", r["rows"])
    w.json("dichotomy.json", r)
    return r


def _override_preset(cfg: cfgmod.RunConfig, name: str):
    values = {s: dict(kv) for s, kv in cfg.values.items()}
    values.setdefault("run", {})["preset"] = name
    return cfgmod.RunConfig(values, cfg.lines).preset()


COMMANDS = {
    "spectrum": cmd_spectrum,
    "kernel-check": cmd_kernel_check,
    "fk-check": cmd_fk_check,
    "paths": cmd_paths,
    "pairpot": cmd_pairpot,
    "gamma": cmd_gamma,
    "fock-check": cmd_fock_check,
    "full-dichotomy": cmd_full_dichotomy,
}


def _flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommand copies use SUPPRESS so they never clobber flags given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="sectioned key=value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=d([]), metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    parser.add_argument("--seed", type=int, default=d(None), help="master seed (unsigned 64-bit)")
    parser.add_argument("--workers", type=int, default=d(None), help="worker threads; results do not depend on it")
    parser.add_argument("--out", type=Path, default=d(None), help="output directory (default results/<command>)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nelsonlab", description=__doc__.splitlines()[0])
    _flags(parser, False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        _flags(sub.add_parser(name, help=COMMANDS[name].__name__[4:].replace("_", " ")), True)
    sub.add_parser("presets", help="list preset names")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if ns.command == "presets":
        print("\n".join(presets.NAMES))
        return EXIT_OK
    if ns.seed is not None and not 0 <= ns.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if ns.workers is not None and ns.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = cfgmod.load(ns.config, ns.overrides, ns.seed, ns.workers, str(ns.out) if ns.out else None)
        p = cfg.preset()
        p.spec.validate(p.grid, confining=p.confining)
    except (cfgmod.ConfigError, SpecError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.get("run", "out") or Path("results") / ns.command)
    try:
        check_cap(p.grid.n_points, p.settings.get("dense_cap"))
        w = Writer(out, cfg, ns.command)
        report = COMMANDS[ns.command](p, cfg, w)
    except DenseCapError as e:
        print(f"resource cap: {e}", file=sys.stderr)
        return EXIT_CAP
    except (OracleError, GroundStateError) as e:
        print(f"check failure: {e}", file=sys.stderr)
        return EXIT_CHECK
    failed = [k for k, v in report["checks"].items() if not v["passed"]]
    for k, v in report["checks"].items():
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {k}")
    print(f"wrote {len(w.files)} file(s) to {out} (config {cfg.hash})")
    return EXIT_CHECK if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
