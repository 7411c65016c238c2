"""Acceptance suite: one function per criterion, driven by ``data/acceptance.toml``.

Every criterion returns a :class:`CriterionResult`; nothing here asserts, so
the caller (CLI or pytest) decides how to report.  Potentials, operators and
Green's functions shared between criteria are cached on a :class:`Context`.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from .capacity import capacity, cutoff_energy_2d, cutoff_energy_3d, level_set_capacity, reciprocity_check
from .errors import MagreenError
from .fits import observed_orders
from .green import (
    distribution_decay,
    gradient_lp_norm,
    green_for_state,
    removable_singularity_demo,
    verify_bounds_doubling,
    verify_bounds_fixed_density,
)
from .grid import Region, parse_domain
from .identities import boundary_flux_identity, green_mass_identity, rho_unit_mass
from .operator import assemble_operator
from .sections import build_section
from .solver import DensitySpec, potential_from_function, solve_monge_ampere


def load_config(path=None) -> dict:
    """Acceptance settings; the shipped file unless ``path`` is given."""
    if path is None:
        text = resources.files("magreen").joinpath("data/acceptance.toml").read_text()
    else:
        text = Path(path).read_text()
    return tomli.loads(text)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0
    # wall-clock facts; printed but kept out of the summary JSON
    timings: dict = field(default_factory=dict)

    def line(self):
        extra = "".join(f"; {k} {v:.1f}s" for k, v in self.timings.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:2d} {self.name}: {self.detail}{extra}"

    def to_dict(self, timings=False):
        d = {"number": self.number, "name": self.name, "passed": self.passed,
             "detail": self.detail, "metrics": _plain(self.metrics)}
        if timings:
            d["seconds"] = self.seconds
            d["timings"] = dict(self.timings)
        return d


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def _quadratic(points):
    return 0.5 * np.sum(points**2, axis=-1)


def _exp_potential(points):
    return np.exp(0.5 * np.sum(points**2, axis=-1)) - math.exp(0.5)


def exp_density(dim):
    """Density of the radial oracle ``u = exp(|x|^2/2) - exp(1/2)`` on the unit ball."""
    coords = "x*x + y*y" if dim == 2 else "x*x + y*y + z*z"
    return DensitySpec.from_expression(f"(1 + {coords})*exp({dim}*({coords})/2)", 1.0, 2 * math.exp(dim / 2))


class Context:
    """Cache of potentials, operators and Green's functions keyed by their inputs."""

    def __init__(self, config: dict):
        self.config = config
        self._cache = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def density(self, name):
        d = self.config["densities"][name]
        return DensitySpec.from_expression(d["expr"], d["lam"], d["Lam"])

    def ma(self, domain, density, h):
        """Monge-Ampere state for a named stock density."""
        return self._get(("ma", domain, density, h),
                         lambda: solve_monge_ampere(parse_domain(domain), self.density(density), h))

    def quad(self, domain, h):
        """Closed-form state ``u = |x|^2/2`` (cofactor = identity)."""
        return self._get(("quad", domain, h),
                         lambda: potential_from_function(parse_domain(domain), h, _quadratic, "|x|^2/2"))

    def green(self, state_key, state, radius, x0=None):
        """Green's function of the ball ``V`` of given radius about the origin."""
        x0 = tuple(np.zeros(state.dim)) if x0 is None else tuple(x0)

        def make():
            V = Region.ball(state.grid, radius, tuple(np.zeros(state.dim)))
            return green_for_state(state, V, x0)

        return self._get(("green", state_key, radius, x0), make)

    def quad_green(self, dim, h, radius=1.0):
        dom = "disk:1.2" if dim == 2 else "ball:1.2"
        st = self.quad(dom, h)
        return st, self.green(("quad", dom, h), st, radius)

    def ma_green(self, density, h, radius=1.0):
        st = self.ma("disk:1.4142135623730951", density, h)
        return st, self.green(("ma", density, h), st, radius)


STOCK = ("one", "osc", "step")
DISK2 = "disk:1.4142135623730951"


def _fmt(v):
    return f"{v:.4g}"


def c01_solver(ctx: Context) -> CriterionResult:
    cfg = ctx.config["solver"]
    m, ok, parts, tm = {}, True, [], {}
    for dim, hs, dom in ((2, cfg["h2"], "disk:1.0"), (3, cfg["h3"], "ball:1.0")):
        errs, secs = [], []
        for h in hs:
            st = solve_monge_ampere(parse_domain(dom), exp_density(dim), h)
            exact = _exp_potential(st.grid.points)
            inside = st.grid.inside
            errs.append(float(np.max(np.abs(st.u - exact)[inside])))
            secs.append(st.stats["seconds"])
        orders = observed_orders(hs, errs)
        bound_ok = all(e <= cfg["error_factor"] * h * h for e, h in zip(errs, hs))
        order_ok = min(orders) >= cfg["min_order"]
        time_ok = max(secs) <= cfg["max_seconds"]
        ok &= bound_ok and order_ok and time_ok
        m[f"{dim}d"] = {"h": hs, "errors": errs, "error_over_h2": [e / h**2 for e, h in zip(errs, hs)],
                        "orders": orders, "within_time": time_ok}
        tm[f"slowest {dim}D solve"] = max(secs)
        parts.append(f"{dim}D err/h^2<={_fmt(max(e / h**2 for e, h in zip(errs, hs)))} "
                     f"order>={_fmt(min(orders))} at h={_fmt(hs[-1])} (solve <= {cfg['max_seconds']:.0f}s: "
                     f"{'yes' if time_ok else 'no'})")
    return CriterionResult(1, "Monge-Ampere radial oracle", ok, "; ".join(parts), m, timings=tm)


def c02_green(ctx: Context) -> CriterionResult:
    cfg = ctx.config["green"]
    m, ok, parts = {}, True, []
    for dim, h, tol, (a, b) in ((2, cfg["h2"], cfg["tol2"], cfg["annulus2"]), (3, cfg["h3"], cfg["tol3"], cfg["annulus3"])):
        st, gf = ctx.quad_green(dim, h)
        r = np.linalg.norm(st.grid.points, axis=-1)
        with np.errstate(divide="ignore"):
            exact = np.log(1 / r) / (2 * np.pi) if dim == 2 else (1 / r - 1) / (4 * np.pi)
        sel = (r >= a) & (r <= b) & gf.V.mask
        err = float(np.max(np.abs(gf.g[sel] - exact[sel]) / exact[sel]))
        ok &= err <= tol
        m[f"{dim}d"] = {"h": h, "max_rel_err": err, "tol": tol}
        parts.append(f"{dim}D max rel err {_fmt(err)} (tol {tol}, h={_fmt(h)})")
    return CriterionResult(2, "Green's function oracle", ok, "; ".join(parts), m)


def c03_exponents(ctx: Context) -> CriterionResult:
    cfg = ctx.config["exponents"]
    st, gf = ctx.quad_green(3, cfg["h3"])
    rep = verify_bounds_fixed_density(st, gf.V, np.zeros(3), cfg["heights3"], gf)
    ok3 = abs(rep.slope - cfg["slope3"]) <= cfg["slope_tol"]
    m = {"3d": {"slope": rep.slope, "slope_min": rep.extras["slope_min"], "slope_max": rep.extras["slope_max"],
                "increment_slope": rep.extras.get("increment_slope"), "heights": cfg["heights3"]}}
    r2s = {}
    for name in STOCK:
        st2, gf2 = ctx.ma_green(name, cfg["h2"])
        rep2 = verify_bounds_fixed_density(st2, gf2.V, np.zeros(2), cfg["heights2"], gf2)
        r2s[name] = {"r2": rep2.r2, "slope": rep2.slope}
    ok2 = all(v["r2"] >= cfg["min_r2"] and v["slope"] > 0 for v in r2s.values())
    m["2d"] = r2s
    detail = (f"3D slope {_fmt(rep.slope)} (target {cfg['slope3']} +- {cfg['slope_tol']}, increment slope "
              f"{_fmt(rep.extras.get('increment_slope', float('nan')))}); 2D R^2 "
              + ", ".join(f"{k}={v['r2']:.4f}" for k, v in r2s.items()))
    return CriterionResult(3, "fixed-density Green bounds", bool(ok3 and ok2), detail, m)


def c04_doubling(ctx: Context) -> CriterionResult:
    cfg = ctx.config["doubling"]
    hs = cfg["heights"]
    st3, gf3 = ctx.quad_green(3, ctx.config["exponents"]["h3"])
    r3 = verify_bounds_doubling(st3, gf3.V, np.zeros(3), hs, gf3)
    st2, gf2 = ctx.quad_green(2, ctx.config["exponents"]["h2"])
    r2 = verify_bounds_doubling(st2, gf2.V, np.zeros(2), hs, gf2)
    sto, gfo = ctx.ma_green("osc", ctx.config["exponents"]["h2"])
    ro = verify_bounds_doubling(sto, gfo.V, np.zeros(2), hs, gfo)
    s3, s2, so = r3.extras["spread"], r2.extras["spread"], ro.extras["spread"]
    ok = s3 <= cfg["radial_spread"] and s2 <= cfg["radial_spread"] and so <= cfg["oscillating_spread"]
    m = {"radial_3d_spread": s3, "radial_2d_spread": s2, "oscillating_spread": so, "heights": hs,
         "radial_3d_ratios": [p[1] for p in r3.points], "oscillating_ratios": [p[1] for p in ro.points]}
    detail = (f"radial spread 3D {_fmt(s3)}, 2D {_fmt(s2)} (<= {cfg['radial_spread']}); "
              f"oscillating spread {_fmt(so)} (<= {cfg['oscillating_spread']})")
    return CriterionResult(4, "doubling-measure Green bound", ok, detail, m)


def c05_gradient(ctx: Context) -> CriterionResult:
    cfg = ctx.config["gradient"]
    hs, t, tol = cfg["hs"], cfg["t"], cfg["tol"]
    vals = {1.5: [], 2.0: [], 2.5: []}
    for h in hs:
        st, gf = ctx.quad_green(2, h)
        s = build_section(st, (0.0, 0.0), t)
        for p in vals:
            vals[p].append(gradient_lp_norm(gf, s, p))
    r15 = vals[1.5][-1] / vals[1.5][-2]
    r25 = vals[2.5][-1] / vals[2.5][-2]
    d2 = np.diff(vals[2.0])
    expected_inc = math.log(2) / (2 * math.pi)
    ok15 = abs(r15 - 1) <= tol
    ok25 = abs(r25 / 2 ** (2.5 - 2) - 1) <= tol
    ok2 = bool(np.all(np.abs(d2 / expected_inc - 1) <= tol))
    m = {"h": hs, "integrals": {str(k): v for k, v in vals.items()}, "ratio_p1.5": r15, "ratio_p2.5": r25,
         "differences_p2": d2.tolist(), "expected_difference_p2": expected_inc}
    detail = (f"p=1.5 ratio {_fmt(r15)} (->1); p=2.5 ratio {_fmt(r25)} (-> {_fmt(2 ** 0.5)}); "
              f"p=2 increments {', '.join(_fmt(v) for v in d2)} (-> {_fmt(expected_inc)})")
    return CriterionResult(5, "gradient integrability", bool(ok15 and ok25 and ok2), detail, m)


def _monotone(values, floor):
    return all(b <= max(a, floor) for a, b in zip(values, values[1:]))


def c06_identities(ctx: Context) -> CriterionResult:
    cfg = ctx.config["identities"]
    hs, t, floor = cfg["hs"], cfg["t"], cfg["noise_floor"]
    m, ok = {}, True
    worst = {"mass": 0.0, "rho": 0.0, "flux": 0.0}
    for name in STOCK:
        errs = {"mass": [], "rho": []}
        flux = {s: [] for s in cfg["flux_heights"]}
        for h in hs:
            st = ctx.ma(DISK2, name, h)
            sec = build_section(st, (0.0, 0.0), t)
            gf = green_for_state(st, sec.region(), (0.0, 0.0))
            errs["mass"].append(green_mass_identity(st, (0.0, 0.0), t, gf).rel_err)
            errs["rho"].append(rho_unit_mass(st, gf).rel_err)
            for rep in boundary_flux_identity(st, (0.0, 0.0), cfg["flux_heights"]):
                flux[rep.extras["s"]].append(rep.rel_err)
        fin = {"mass": errs["mass"][-1], "rho": errs["rho"][-1], "flux": max(v[-1] for v in flux.values())}
        tol_ok = fin["mass"] <= cfg["mass_tol"] and fin["rho"] <= cfg["rho_tol"] and fin["flux"] <= cfg["flux_tol"]
        seqs = [errs["mass"], errs["rho"], *flux.values()]
        mono = all(_monotone(v, floor) for v in seqs)
        strict = all(_monotone(v, 0.0) for v in seqs)
        ok &= tol_ok and mono
        for k in worst:
            worst[k] = max(worst[k], fin[k])
        m[name] = {"h": hs, "mass": errs["mass"], "rho": errs["rho"],
                   "flux": {str(k): v for k, v in flux.items()}, "monotone": mono, "strictly_monotone": strict}
    detail = (f"finest-grid worst rel err: mass {_fmt(worst['mass'])}, rho {_fmt(worst['rho'])}, "
              f"flux {_fmt(worst['flux'])}; nonincreasing in h above {floor:g}: "
              + ", ".join(f"{k}={'yes' if m[k]['monotone'] else 'no'}" for k in STOCK)
              + "; strictly: " + ", ".join(f"{k}={'yes' if m[k]['strictly_monotone'] else 'no'}" for k in STOCK))
    return CriterionResult(6, "integral identities", bool(ok), detail, m)


def c07_capacity(ctx: Context) -> CriterionResult:
    cfg = ctx.config["capacity"]
    m, ok, parts = {}, True, []
    for dim, h, tol in ((2, cfg["h2"], cfg["tol2"]), (3, cfg["h3"], cfg["tol3"])):
        st = ctx.quad("disk:1.0" if dim == 2 else "ball:1.0", h)
        c0 = tuple(np.zeros(dim))
        V = Region.ball(st.grid, 0.8, c0)
        K = Region.ball(st.grid, 0.2, c0)
        cap = capacity(assemble_operator(st, V), K, V, perturbations=0).value
        exact = 2 * math.pi / math.log(4) if dim == 2 else 4 * math.pi / (1 / 0.2 - 1 / 0.8)
        err = abs(cap - exact) / exact
        ok &= err <= tol
        m[f"annulus_{dim}d"] = {"h": h, "cap": cap, "exact": exact, "rel_err": err}
        parts.append(f"annulus {dim}D rel err {_fmt(err)}")
    st2 = ctx.quad("disk:1.0", cfg["h2"])
    rows2 = []
    for t in cfg["cutoff_heights2"]:
        rep = cutoff_energy_2d(st2, (0.0, 0.0), t, with_capacity=True)
        target = 8 * math.pi / abs(math.log(t))
        rows2.append({"t": t, "bound": rep.bound, "target": target, "capacity": rep.capacity, "energy": rep.energy,
                      "bound_err": abs(rep.bound - target) / target,
                      "capacity_err": abs(rep.capacity - rep.bound) / rep.bound})
    ok &= all(r["bound_err"] <= cfg["cutoff_tol"] and r["capacity_err"] <= cfg["cutoff_capacity_tol"] for r in rows2)
    st3 = ctx.quad("ball:1.0", cfg["h3"])
    rows3 = []
    lo, hi = cfg["ratio_range"]
    for t in cfg["cutoff_heights3"]:
        rep = cutoff_energy_3d(st3, (0.0, 0.0, 0.0), t, with_capacity=True)
        rows3.append({"t": t, "energy": rep.energy, "capacity": rep.capacity, "ratio": rep.ratio_to_capacity,
                      "mu_over_t": rep.bound})
    ok &= all(lo <= r["ratio"] <= hi for r in rows3)
    m["cutoff_2d"] = rows2
    m["cutoff_3d"] = rows3
    parts.append(f"2D cutoff bound err <= {_fmt(max(r['bound_err'] for r in rows2))}, "
                 f"capacity vs bound <= {_fmt(max(r['capacity_err'] for r in rows2))}")
    parts.append("3D cutoff/capacity " + ", ".join(_fmt(r["ratio"]) for r in rows3))
    return CriterionResult(7, "capacity", bool(ok), "; ".join(parts), m)


def c08_reciprocity(ctx: Context) -> CriterionResult:
    cfg = ctx.config["reciprocity"]
    m, ok = {}, True
    cases = [("radial_2d", *ctx.quad_green(2, ctx.config["exponents"]["h2"]), cfg["heights2"]),
             ("osc_2d", *ctx.ma_green("osc", ctx.config["exponents"]["h2"]), cfg["heights2"]),
             ("radial_3d", *ctx.quad_green(3, ctx.config["exponents"]["h3"]), cfg["heights3"])]
    worst = 0.0
    for name, st, gf, hs in cases:
        rows = reciprocity_check(st, gf.V, np.zeros(st.dim), hs, gf, slack=cfg["slack"])
        ok &= all(r["ok"] for r in rows)
        m[name] = rows
    st, gf = ctx.quad_green(2, ctx.config["exponents"]["h2"])
    base = math.log(2) / (2 * math.pi)
    levels = []
    for k in cfg["level_multiples"]:
        a = base * k
        cap, resolved = level_set_capacity(gf, a)
        err = abs(cap * a - 1)
        if resolved:
            ok &= err <= cfg["level_tol"]
            worst = max(worst, err)
        levels.append({"a": a, "cap": cap, "product": cap * a, "resolved": resolved})
    m["level_sets"] = levels
    detail = ("sandwich holds for all t: " + ", ".join(f"{k}={'yes' if all(r['ok'] for r in m[k]) else 'no'}"
                                                     for k, *_ in cases)
              + f"; level-set law worst |cap*a - 1| {_fmt(worst)}")
    return CriterionResult(8, "reciprocity", bool(ok), detail, m)


def c09_decay(ctx: Context) -> CriterionResult:
    cfg = ctx.config["decay"]
    st, gf = ctx.quad_green(3, ctx.config["exponents"]["h3"])
    rep = distribution_decay(gf, cfg["levels"])
    ok = abs(rep.slope - cfg["slope"]) <= cfg["tol"]
    return CriterionResult(9, "distribution decay", bool(ok),
                           f"3D slope {_fmt(rep.slope)} (target {cfg['slope']} +- {cfg['tol']})",
                           {"slope": rep.slope, "table": rep.extras["table"]})


def c10_removable(ctx: Context) -> CriterionResult:
    cfg = ctx.config["removable"]
    st2 = ctx.quad("disk:1.2", cfg["h2"])
    rep = removable_singularity_demo(st2, cfg["R"], 1.0, cfg["r_list"], inner="compliant")
    st3 = ctx.quad("ball:1.2", cfg["h3"])
    ctl = removable_singularity_demo(st3, cfg["R"], 1.0, cfg["r_list"], inner="critical")
    kept = ctl.final / ctl.discrepancy[0]
    ok = rep.decreasing and rep.final <= cfg["final_max"] and kept >= cfg["control_min_fraction"]
    detail = (f"compliant 2D discrepancies {', '.join(_fmt(d) for d in rep.discrepancy)} "
              f"(decreasing {'yes' if rep.decreasing else 'no'}, final <= {cfg['final_max']}: {'yes' if rep.final <= cfg['final_max'] else 'no'}); "
              f"critical 3D control {', '.join(_fmt(d) for d in ctl.discrepancy)}")
    m = {"r_list": rep.r_list, "compliant": rep.discrepancy, "critical_control": ctl.discrepancy,
         "control_fraction_kept": kept}
    return CriterionResult(10, "removable singularity", bool(ok), detail, m)


CRITERIA = (c01_solver, c02_green, c03_exponents, c04_doubling, c05_gradient, c06_identities,
            c07_capacity, c08_reciprocity, c09_decay, c10_removable)


def _guarded(fn, ctx):
    t0 = time.perf_counter()
    try:
        res = fn(ctx)
    except MagreenError as exc:
        num = CRITERIA.index(fn) + 1
        res = CriterionResult(num, fn.__name__[4:], False, f"error: {type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


def determinism_check(config: dict) -> tuple:
    """Run a small harness suite twice with the same seed; returns ``(identical, digest)``."""
    import hashlib
    import tempfile

    from .harness import ExperimentConfig, run_suite

    blobs = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            cfg = ExperimentConfig(domain="disk:1.0", density="1 + 0.5*sin(4*x)*sin(4*y)", lam=0.5, Lam=1.5,
                                   h_list=[0.03125, 0.015625], poles=[(0.0, 0.0)], heights=[0.1, 0.2],
                                   suites=["solve", "sections", "identities"], output_dir=tmp,
                                   seed=config.get("seed", 0))
            run_suite(cfg)
            blobs.append((Path(tmp) / "summary.json").read_bytes())
    return blobs[0] == blobs[1], hashlib.sha256(blobs[0]).hexdigest()[:16]


def c11_budget(config: dict, results, elapsed: float) -> CriterionResult:
    t0 = time.perf_counter()
    same, digest = determinism_check(config)
    elapsed += time.perf_counter() - t0
    budget = config["time_budget_seconds"]
    ok = same and elapsed <= budget
    detail = (f"suite within {budget:.0f}s: {'yes' if elapsed <= budget else 'no'}; "
              f"rerun summary identical: {'yes' if same else 'no'}")
    return CriterionResult(11, "runtime and determinism", ok, detail,
                           {"identical": same, "digest": digest}, time.perf_counter() - t0,
                           {"suite time": elapsed})


def run_acceptance(config: dict | None = None, only=None, log=print):
    """Run every criterion (or the numbers in ``only``); returns the list of results."""
    config = load_config() if config is None else config
    ctx = Context(config)
    results = []
    t0 = time.perf_counter()
    for i, fn in enumerate(CRITERIA, start=1):
        if only and i not in only:
            continue
        res = _guarded(fn, ctx)
        results.append(res)
        if log:
            log(res.line())
    if not only or 11 in only:
        res = c11_budget(config, results, time.perf_counter() - t0)
        results.append(res)
        if log:
            log(res.line())
    return results


def write_summary(results, path):
    """Deterministic JSON summary (no timings)."""
    data = {"criteria": [r.to_dict() for r in results], "all_passed": all(r.passed for r in results)}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
