"""Command line interface: ``magreen <subcommand> ...``.

Exit codes: 0 pass, 1 assertion failure, 2 configuration error, 3 solver
failure.  Relative output paths are resolved against ``$MAGREEN_OUTPUT_ROOT``
when it is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path


from .errors import ConfigurationError, MagreenError, SolverFailureError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
# descriptive names for the short verification modes
MODE_ALIASES = {"fixed-density": "thm1i", "doubling": "thm1ii", "gradient": "thm1iii"}


def _out(path) -> Path:
    p = Path(path)
    root = os.environ.get("MAGREEN_OUTPUT_ROOT")
    if root and not p.is_absolute():
        p = Path(root) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma separated numbers, got {text!r}") from None


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def cmd_solve(a):
    from .fieldio import save_state
    from .grid import parse_domain
    from .solver import DensitySpec, solve_monge_ampere

    dens = DensitySpec.from_expression(a.f, a.lam, a.Lam)
    st = solve_monge_ampere(parse_domain(a.domain), dens, a.h, tol=a.tol)
    out = _out(a.out)
    save_state(out, st)
    side = {k: st.sidecar()[k] for k in ("residual", "newton_iters", "min_hessian_eig")}
    out.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    _emit(side)
    return EXIT_OK


def cmd_sections(a):
    from .fieldio import load_state
    from .sections import build_section, dilate_section

    st = load_state(a.state)
    x0 = _floats(a.x0)
    axes = "xyz"[: st.dim]
    with open(_out(a.csv), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "volume", "mu"] + [f"com_{c}" for c in axes] + (["alpha_volume", "alpha_mu"] if a.alpha else []))
        for t in _floats(a.heights):
            s = build_section(st, x0, t)
            row = [t, s.volume, s.mu] + list(map(float, s.com))
            if a.alpha:
                d = dilate_section(s, a.alpha)
                row += [d.volume, d.mu]
            w.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def _region_arg(grid, text, state=None):
    """``disk:0.8``-style domains, or ``section:x0=0,0:t=0.05`` (needs ``state``)."""
    from .operator import as_region
    from .sections import build_section

    if text.startswith("section:"):
        parts = dict(p.split("=", 1) for p in text[len("section:"):].split(":"))
        try:
            return build_section(state, _floats(parts["x0"]), float(parts["t"])).region()
        except KeyError as exc:
            raise ConfigurationError(f"section spec {text!r} lacks {exc}") from None
    return as_region(grid, text)


def cmd_green(a):
    from .fieldio import load_state, write_csv, write_fields
    from .green import green_for_state

    st = load_state(a.state)
    V = _region_arg(st.grid, a.V, st)
    gf = green_for_state(st, V, _floats(a.x0))
    out = _out(a.out)
    if out.suffix == ".csv":
        write_csv(out, st.grid, gf.g, mask=gf.V.mask)
    else:
        write_fields(out, st.grid, {"g": gf.g}, {"pole": list(map(int, gf.pole)), "V": a.V,
                                                 "iterations": gf.stats.get("iterations")})
    return EXIT_OK


def cmd_capacity(a):
    from .capacity import capacity, reciprocity_check
    from .fieldio import load_state
    from .operator import assemble_operator

    st = load_state(a.state)
    V = _region_arg(st.grid, a.V, st)
    K = _region_arg(st.grid, a.K, st)
    res = capacity(assemble_operator(st, V), K, V)
    out = {"cap": res.value, "q_form": res.breakdown, "flux": res.flux, "minimal": res.minimal}
    code = EXIT_OK
    if a.check == "reciprocity":
        x0 = _floats(a.x0)
        rows = reciprocity_check(st, V, x0, _floats(a.heights))
        out["sandwich_lo"] = [r["lo"] for r in rows]
        out["sandwich_hi"] = [r["hi"] for r in rows]
        out["rows"] = rows
        code = EXIT_OK if all(r["ok"] for r in rows) else EXIT_FAIL
    _emit(out)
    return code


def _write_rows(path, rows):
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(_out(path), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(rows)


def cmd_verify(a):
    from .fieldio import load_state

    st = load_state(a.state)
    if a.suite == "identities":
        from .green import green_for_state
        from .identities import boundary_flux_identity, green_mass_identity, rho_unit_mass

        x0 = _floats(a.x0)
        t = _floats(a.heights)[0] if a.heights else 0.2
        from .sections import build_section

        gf = green_for_state(st, build_section(st, x0, t).region(), x0)
        reps = [green_mass_identity(st, x0, t, gf), rho_unit_mass(st, gf)] + boundary_flux_identity(st, x0, [t])
        rows = [r.row() for r in reps]
        if a.csv:
            _write_rows(a.csv, rows)
        _emit(rows)
        return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAIL
    from .green import distribution_decay, green_for_state, verify_bounds_doubling, verify_bounds_fixed_density

    if not a.mode:
        raise ConfigurationError("verify needs --mode or --suite")
    a.mode = MODE_ALIASES.get(a.mode, a.mode)
    x0 = _floats(a.x0)
    V = _region_arg(st.grid, a.V, st)
    heights = _floats(a.heights)
    if a.mode == "thm1i":
        rep = verify_bounds_fixed_density(st, V, x0, heights)
        ok = abs(rep.slope + 0.5) <= 0.05 if st.dim == 3 else (rep.r2 >= 0.98 and rep.slope > 0)
    elif a.mode == "thm1ii":
        rep = verify_bounds_doubling(st, V, x0, heights)
        ok = rep.extras["spread"] <= 10
    elif a.mode == "thm1iii":
        from .green import gradient_lp_norm
        from .sections import build_section

        gf = green_for_state(st, V, x0)
        rows = [{"t": t, "p": a.p, "integral": gradient_lp_norm(gf, build_section(st, x0, t), a.p)} for t in heights]
        if a.csv:
            _write_rows(a.csv, rows)
        _emit(rows)
        return EXIT_OK
    else:
        rep = distribution_decay(green_for_state(st, V, x0), heights)
        ok = abs(rep.slope + 3) <= 0.1
    if a.csv:
        _write_rows(a.csv, [{"x": x, "y": y} for x, y in rep.points])
    print(rep.to_json())
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(a):
    from .harness import ExperimentConfig, run_suite

    over = {"output_dir": a.output, "workers": a.workers, "seed": a.seed}
    if a.h:
        over["h_list"] = _floats(a.h)
    cfg = ExperimentConfig.from_toml(a.config, over)
    code, summary = run_suite(cfg)
    print(f"summary written to {cfg.output_path() / 'summary.json'}")
    for s, v in summary["suites"].items():
        print(f"{s}: {'PASS' if v['passed'] else 'FAIL'} ({v['failures']} failing rows)")
    for name, row in summary.get("convergence", {}).items():
        print(f"order {name}: " + ", ".join("nan" if o is None else f"{o:.2f}" for o in row["orders"]))
    return code


def cmd_acceptance(a):
    from .acceptance import load_config, run_acceptance, write_summary

    cfg = load_config(a.config)
    only = {int(v) for v in a.only.split(",")} if a.only else None
    results = run_acceptance(cfg, only)
    if a.summary:
        write_summary(results, _out(a.summary))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="magreen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve det D^2u = f with zero boundary values")
    s.add_argument("--domain", required=True)
    s.add_argument("--f", required=True, help="density expression in x, y, z, h")
    s.add_argument("--lam", type=float)
    s.add_argument("--Lam", type=float)
    s.add_argument("--h", type=float, required=True)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("sections", help="tabulate sections S(x0, t)")
    s.add_argument("--state", required=True)
    s.add_argument("--x0", required=True)
    s.add_argument("--heights", required=True)
    s.add_argument("--alpha", type=float)
    s.add_argument("--csv", required=True)
    s.set_defaults(fn=cmd_sections)

    s = sub.add_parser("green", help="Green's function of the linearized operator")
    s.add_argument("--state", required=True)
    s.add_argument("--V", required=True)
    s.add_argument("--x0", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_green)

    s = sub.add_parser("capacity", help="capacity of K relative to V")
    s.add_argument("--state", required=True)
    s.add_argument("--K", required=True)
    s.add_argument("--V", required=True)
    s.add_argument("--check", choices=["reciprocity"])
    s.add_argument("--x0", default="0,0")
    s.add_argument("--heights", default="")
    s.set_defaults(fn=cmd_capacity)

    s = sub.add_parser("verify", help="bound fits and identity checks")
    s.add_argument("--state", required=True)
    s.add_argument("--mode", choices=["thm1i", "thm1ii", "thm1iii", "decay", *MODE_ALIASES],
                   help="thm1i = fixed-density, thm1ii = doubling, thm1iii = gradient")
    s.add_argument("--suite", choices=["identities"])
    s.add_argument("--V", default="disk:1.0")
    s.add_argument("--x0", default="0,0")
    s.add_argument("--heights", default="")
    s.add_argument("--p", type=float, default=1.5)
    s.add_argument("--csv")
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("sweep", help="run a TOML experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--output")
    s.add_argument("--workers", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--h", help="override the h list")
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("acceptance", help="run the acceptance suite")
    s.add_argument("--config", help="acceptance TOML (default: shipped)")
    s.add_argument("--only", help="comma separated criterion numbers")
    s.add_argument("--summary", help="write the JSON summary here")
    s.set_defaults(fn=cmd_acceptance)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except SolverFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MagreenError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
