"""Experiment orchestration: TOML configs, suite runs and refinement sweeps.

A run expands the config into independent experiments, one per spacing
``h``; each solves once and then runs every selected suite at every pole
and height.  Experiments
share only the immutable config, so they can go to a process pool.  Each
suite writes its own CSV; ``summary.json`` records pass/fail per row and
never contains wall-clock data, so a rerun with the same config is
byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigurationError, MagreenError, SolverFailureError
from .expr import Expression
from .fits import observed_orders

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "MAGREEN_OUTPUT_ROOT"
SUITES = ("solve", "sections", "green", "capacity", "identities", "decay")

DEFAULT_TOLERANCES = {
    "residual": 1e-8,
    "volume_slope": 0.1,
    "green_r2": 0.98,
    "green_slope3": 0.05,
    "mass": 0.03,
    "rho": 0.05,
    "flux": 0.04,
    "sandwich": 0.05,
    "decay_slope": 0.1,
}


@dataclass
class ExperimentConfig:
    """Everything one run needs; validated on construction."""

    domain: str
    density: str
    h_list: list
    heights: list
    lam: float | None = None
    Lam: float | None = None
    poles: list = field(default_factory=lambda: [(0.0, 0.0)])
    suites: list = field(default_factory=lambda: ["solve"])
    output_dir: str = "out"
    seed: int = 0
    V: str | None = None
    exact_u: str | None = None
    exact_green: str | None = None
    green_annulus: list = field(default_factory=lambda: [0.1, 0.9])
    workers: int = 1
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        from .grid import parse_domain

        try:
            dom = parse_domain(self.domain)
        except ConfigurationError as exc:
            raise ConfigurationError(f"domain: {exc}") from None
        for name in ("density", "exact_u", "exact_green"):
            text = getattr(self, name)
            if text is None:
                continue
            try:
                Expression(text)
            except ConfigurationError as exc:
                raise ConfigurationError(f"{name}: {exc}") from None
        if not self.h_list:
            raise ConfigurationError("h_list: empty")
        hs = [float(h) for h in self.h_list]
        if any(h <= 0 for h in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigurationError(f"h_list: must be positive and strictly decreasing, got {hs}")
        self.h_list = hs
        if not self.heights:
            raise ConfigurationError("heights: empty height list")
        if any(float(t) <= 0 for t in self.heights):
            raise ConfigurationError("heights: must be positive")
        self.heights = sorted(float(t) for t in self.heights)
        if not self.poles:
            raise ConfigurationError("poles: empty pole list")
        self.poles = [tuple(float(c) for c in p) for p in self.poles]
        if any(len(p) != dom.dim for p in self.poles):
            raise ConfigurationError(f"poles: every pole needs {dom.dim} coordinates")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown or not self.suites:
            raise ConfigurationError(f"suites: unknown suite(s) {unknown}; choose from {list(SUITES)}")
        bad_tol = [k for k in self.tolerances if k not in DEFAULT_TOLERANCES]
        if bad_tol:
            raise ConfigurationError(f"tolerances: unknown key(s) {bad_tol}")
        if int(self.workers) < 1:
            raise ConfigurationError("workers: must be at least 1")
        if (self.lam is None) != (self.Lam is None):
            raise ConfigurationError("lam/Lam: give both bounds or neither")
        if self.V is not None:
            try:
                parse_domain(self.V)
            except ConfigurationError as exc:
                raise ConfigurationError(f"V: {exc}") from None

    @property
    def dim(self):
        from .grid import parse_domain

        return parse_domain(self.domain).dim

    def tol(self, key):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    def output_path(self) -> Path:
        p = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not p.is_absolute():
            p = Path(root) / p
        return p

    @classmethod
    def from_toml(cls, path, overrides: dict | None = None):
        """Read a config file; ``overrides`` (e.g. from the CLI) win over file values."""
        try:
            data = tomli.loads(Path(path).read_text())
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigurationError(f"unknown config field(s): {extra}")
        missing = [k for k in ("domain", "density", "h_list", "heights") if k not in data]
        if missing:
            raise ConfigurationError(f"missing config field(s): {missing}")
        return cls(**data)


def _density(cfg: ExperimentConfig):
    from .solver import DensitySpec

    return DensitySpec.from_expression(cfg.density, cfg.lam, cfg.Lam)


def _region(cfg, state):
    from dataclasses import replace

    from .grid import Region, parse_domain

    if cfg.V is not None:
        return Region.from_domain(state.grid, parse_domain(cfg.V))
    # default V: the domain shrunk by a third about its center
    dom = state.grid.domain
    return Region.from_domain(state.grid, replace(dom, axes=tuple(a * 2 / 3 for a in dom.axes),
                                                  spec=f"{dom.spec} x2/3"))


def _solve(cfg, h):
    from .grid import parse_domain
    from .solver import solve_monge_ampere

    return solve_monge_ampere(parse_domain(cfg.domain), _density(cfg), h, tol=cfg.tol("residual"))


def _rows_solve(cfg, h, pole, state):
    row = {"h": h, "residual": state.residual, "newton_iters": state.newton_iters,
           "min_hessian_eig": state.min_hessian_eig}
    if cfg.exact_u:
        exact = Expression(cfg.exact_u).on_points(state.grid.points, h)
        row["max_error"] = float(np.nanmax(np.abs(state.u - exact)[state.grid.inside]))
    row["pass"] = bool(state.residual <= cfg.tol("residual") and state.min_hessian_eig > 0)
    return [row]


def _rows_sections(cfg, h, pole, state):
    from .sections import build_section, volume_growth_report

    rows = []
    for t in cfg.heights:
        s = build_section(state, pole, t)
        row = {"h": h, "pole": list(pole), "t": t, "volume": s.volume, "mu": s.mu}
        row.update({f"com_{c}": float(v) for c, v in zip("xyz", s.com)})
        rows.append(row)
    if len(cfg.heights) >= 4:
        rep = volume_growth_report(state, pole, cfg.heights)
        ok = abs(rep.slope - state.dim / 2) <= cfg.tol("volume_slope")
        rows.append({"h": h, "pole": list(pole), "t": "fit", "volume_slope": rep.slope, "pass": bool(ok)})
    return rows


def _rows_green(cfg, h, pole, state):
    from .green import green_for_state, verify_bounds_fixed_density

    V = _region(cfg, state)
    gf = green_for_state(state, V, pole)
    rep = verify_bounds_fixed_density(state, V, pole, cfg.heights, gf)
    if state.dim >= 3:
        ok = abs(rep.slope + 0.5) <= cfg.tol("green_slope3")
    else:
        ok = rep.r2 >= cfg.tol("green_r2") and rep.slope > 0
    row = {"h": h, "pole": list(pole), "model": rep.model, "slope": rep.slope, "intercept": rep.intercept,
           "r2": rep.r2, "pass": bool(ok)}
    if cfg.exact_green:
        row.update(_green_error(cfg, gf, pole))
    return [row]


def _green_error(cfg, gf, pole):
    exact = Expression(cfg.exact_green).on_points(gf.grid.points - np.asarray(pole), gf.grid.h)
    r = np.linalg.norm(gf.grid.points - np.asarray(pole), axis=-1)
    a, b = cfg.green_annulus
    sel = (r >= a) & (r <= b) & gf.V.mask
    return {"green_max_rel_err": float(np.max(np.abs(gf.g[sel] - exact[sel]) / np.abs(exact[sel])))}


def _rows_capacity(cfg, h, pole, state):
    from .capacity import reciprocity_check

    V = _region(cfg, state)
    rows = reciprocity_check(state, V, pole, cfg.heights, slack=cfg.tol("sandwich"))
    return [dict(h=h, pole=list(pole), t=r["t"], cap=r["cap"], sandwich_lo=r["lo"], sandwich_hi=r["hi"],
                 **{"pass": r["ok"]}) for r in rows]


def _rows_identities(cfg, h, pole, state):
    from .identities import boundary_flux_identity, green_mass_identity, rho_unit_mass
    from .green import green_for_state
    from .sections import build_section

    rows = []
    for t in cfg.heights:
        sec = build_section(state, pole, t)
        gf = green_for_state(state, sec.region(), pole)
        reps = [green_mass_identity(state, pole, t, gf, cfg.tol("mass")), rho_unit_mass(state, gf, cfg.tol("rho"))]
        reps += boundary_flux_identity(state, pole, [t], cfg.tol("flux"))
        for rep in reps:
            rows.append(dict(rep.row(), pole=list(pole), t=t))
    return rows


def _rows_decay(cfg, h, pole, state):
    from .green import distribution_decay, green_for_state

    gf = green_for_state(state, _region(cfg, state), pole)
    rep = distribution_decay(gf, cfg.heights)
    return [{"h": h, "pole": list(pole), "slope": rep.slope, "r2": rep.r2,
             "pass": bool(abs(rep.slope + 3) <= cfg.tol("decay_slope"))}]


_RUNNERS = {
    "solve": _rows_solve,
    "sections": _rows_sections,
    "green": _rows_green,
    "capacity": _rows_capacity,
    "identities": _rows_identities,
    "decay": _rows_decay,
}


def _experiment(args):
    """One spacing: solve once, then run each suite at every pole; failures are recorded, not raised."""
    cfg, h = args
    out = {s: [] for s in cfg.suites}
    try:
        state = _solve(cfg, h)
    except MagreenError as exc:
        kind = "solver" if isinstance(exc, SolverFailureError) else "error"
        for s in cfg.suites:
            out[s].append({"h": h, "error": f"{type(exc).__name__}: {exc}", "kind": kind, "pass": False})
        return out
    for s in cfg.suites:
        poles = cfg.poles[:1] if s == "solve" else cfg.poles
        for pole in poles:
            try:
                out[s].extend(_RUNNERS[s](cfg, h, pole, state))
            except MagreenError as exc:
                out[s].append({"h": h, "pole": list(pole), "error": f"{type(exc).__name__}: {exc}",
                               "kind": "error", "pass": False})
            except Exception as exc:  # crash isolation: keep the sweep going
                log.error("experiment %s h=%g pole=%s crashed:\n%s", s, h, pole, traceback.format_exc())
                out[s].append({"h": h, "pole": list(pole), "error": f"crash: {type(exc).__name__}: {exc}",
                               "kind": "crash", "pass": False})
    return out


def _clean(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return _clean(v.item())
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    return v


def _write_csv(path, rows):
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def run_suite(config: ExperimentConfig):
    """Run every selected suite over ``h_list x poles``.

    Returns ``(exit_code, summary)``; exit code 0 when all rows pass, 3 when
    a solver failed, 1 for any other failure.
    """
    tasks = [(config, h) for h in config.h_list]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=int(config.workers)) as pool:
            results = list(pool.map(_experiment, tasks))
    else:
        results = [_experiment(t) for t in tasks]
    out_dir = config.output_path()
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"config": _clean(asdict(config)) | {"output_dir": None}, "suites": {}}
    solver_failed = False
    all_pass = True
    for s in config.suites:
        rows = [_clean(r) for res in results for r in res[s]]
        _write_csv(out_dir / f"{s}.csv", rows)
        graded = [r for r in rows if "pass" in r]
        failed = [r for r in graded if not r["pass"]]
        solver_failed |= any(r.get("kind") == "solver" for r in rows)
        all_pass &= not failed
        summary["suites"][s] = {"rows": rows, "passed": not failed, "failures": len(failed)}
    if len(config.h_list) >= 3:
        summary["convergence"] = convergence_table(config, results)
    summary["passed"] = all_pass
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    code = 0 if all_pass else (3 if solver_failed else 1)
    return code, summary


def _metric_rows(config, results):
    """Per-h metrics that have an expected rate: solve error, Green error, identity discrepancies."""
    table = {}
    for res in results:
        for s, rows in res.items():
            for r in rows:
                if "error" in r and isinstance(r.get("error"), str):
                    continue
                key_base = f"pole={tuple(r['pole'])}" if "pole" in r else ""
                if s == "solve" and "max_error" in r:
                    table.setdefault("ma_max_error", {})[r["h"]] = r["max_error"]
                if s == "green" and "green_max_rel_err" in r:
                    table.setdefault(f"green_max_rel_err {key_base}", {})[r["h"]] = r["green_max_rel_err"]
                if s == "identities":
                    name = f"{r['name']} t={r['t']:g} {key_base}"
                    table.setdefault(name, {})[r["h"]] = r["rel_err"]
    return table


def convergence_table(config: ExperimentConfig, results):
    """Observed orders between successive spacings for every metric that was measured on all of them."""
    if len(config.h_list) < 3:
        raise ConfigurationError("h_list: convergence needs at least 3 spacings")
    out = {}
    for name, by_h in sorted(_metric_rows(config, results).items()):
        hs = [h for h in config.h_list if h in by_h]
        if len(hs) < 3:
            continue
        vals = [by_h[h] for h in hs]
        with np.errstate(divide="ignore", invalid="ignore"):
            orders = observed_orders(hs, vals) if all(v > 0 for v in vals) else []
        out[name] = {"h": hs, "values": vals, "orders": [_clean(o) for o in orders],
                     "nonincreasing": all(b <= a for a, b in zip(vals, vals[1:]))}
    return out


def convergence_sweep(config: ExperimentConfig):
    """Run the suites and return the convergence table (also attached to the summary)."""
    if len(config.h_list) < 3:
        raise ConfigurationError("h_list: convergence needs at least 3 spacings")
    code, summary = run_suite(config)
    return summary.get("convergence", {}), code
