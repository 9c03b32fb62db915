"""Command-line front end: ``rfh <command> --config run.toml``.

Every command validates the configuration first, then prints one JSON
document (sorted keys, ``schema_version`` included) to stdout or ``--out``.
Exit codes: 0 success, 2 validation error, 3 numerical nonconvergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .config import SCHEMA_VERSION, ConfigError, RunConfig, load_config
from .critical import (
    NonconvergenceError, UnsupportedBranchError, analytic_index_oracle, h0_critical_manifolds,
    newton_solve, relative_index, rescale_to_dirac_solution, single_mode_guess,
)
from .flow import (
    HomotopySchedule, StiffnessError, energy_identity_check, integrate_flow, integrate_homotopy,
    monotonicity_violation,
)
from .functional import FunctionalContext, action, finite_difference_check, random_point
from .homology import (
    WindowCoverageError, assemble_complex, assemble_h0_complex, grade_h0_components, homology,
)
from .nonlinearity import InfeasibleExponentsError, check_hypotheses, select_s
from .perturbation import PerturbationConfigError, PerturbationMap
from .spectral import ExtendedPoint, PairField, l_spectrum

log = logging.getLogger("rfh")

COMMANDS = ("spectrum", "check-h", "select-s", "action", "grad-check", "flow", "homotopy",
            "critical", "index", "complex", "homology", "solve-dirac", "report")


class ValidationError(ValueError):
    """Bad flags or flag/config combinations."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(_jsonable({"schema_version": SCHEMA_VERSION, **payload}),
                      sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# helpers


def _context(cfg: RunConfig) -> FunctionalContext:
    return FunctionalContext(cfg.spectrum, cfg.s, cfg.nonlinearity, cfg.num_points)


def _h0_component(ctx, k):
    comps = {c.k: c for c in h0_critical_manifolds(ctx)}
    if k not in comps:
        raise ValidationError(f"k={k} outside the L-spectrum window "
                              f"[{min(comps)}, {max(comps)}]")
    return comps[k]


def _start_point(cfg: RunConfig, ctx: FunctionalContext, rng) -> ExtendedPoint:
    pt = cfg.point
    kind = pt["kind"]
    if kind == "h0":
        comp = _h0_component(ctx, pt["k"])
        return comp.p_plus if pt["which"] == "+" else comp.p_minus
    if kind == "single":
        if pt["mode"] is not None and not 0 <= pt["mode"] < ctx.n:
            raise ValidationError(f"point mode {pt['mode']} outside [0, {ctx.n})")
        return single_mode_guess(ctx, pt["mode"], pt["amplitude"], pt["lambda"])
    if kind == "origin":
        return ExtendedPoint(PairField.zeros(ctx.spectrum, ctx.s), pt["lambda"])
    return ctx.point(random_point(ctx, rng, pt["scale"]))


def _perturbation(cfg: RunConfig, ctx, rng) -> PerturbationMap | None:
    pr = cfg.perturbation
    if pr is None:
        return None
    return PerturbationMap.random(ctx.dim, rng, pr["n_terms"], pr["rank"], pr["bound"],
                                  spread=pr["spread"], gaussian=pr["gaussian"])


def _complex(cfg: RunConfig, ctx, window):
    lsp = l_spectrum(cfg.spectrum)
    if cfg.complex["grading"] == "analytic":
        return assemble_h0_complex(lsp, window, cfg.complex["convention"]), None
    lo, hi = window
    ks = []
    for k in lsp.indices():
        i_p, nu_p = analytic_index_oracle(lsp, k, "+", "inertia")
        nu_m = i_p
        if nu_p >= lo - 1 and nu_m <= hi + 1:
            ks.append(k)
    comps = grade_h0_components(ctx, ks, cfg.truncation, cfg.solver["tol"], cfg.threads)
    return assemble_complex(comps, window), comps


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(cfg, args, ctx, rng):
    lsp = l_spectrum(cfg.spectrum)
    return {"spectrum": cfg.spectrum.to_dict(), "num_modes": cfg.spectrum.num_modes,
            "l_spectrum": [{"k": k, "eigenvalue": lsp[k][0], "multiplicity": lsp[k][1]}
                           for k in lsp.indices()]}


def cmd_check_h(cfg, args, ctx, rng):
    hy = cfg.hypotheses
    rep = check_hypotheses(cfg.nonlinearity, hy["sample_count"], hy["box"], rng,
                           context=ctx if hy["field_samples"] else None,
                           field_samples=hy["field_samples"])
    return {"nonlinearity": cfg.nonlinearity.to_dict(), **rep.to_dict()}


def cmd_select_s(cfg, args, ctx, rng):
    h = cfg.nonlinearity
    p, q = (h.p, h.q) if h.kind == "power" else (2.0, 2.0)
    wit = select_s(cfg.dimension, p, q)
    return {"n": wit.n, "p": wit.p, "q": wit.q, "interval": list(wit.interval), "s": wit.s}


def cmd_action(cfg, args, ctx, rng):
    w = _start_point(cfg, ctx, rng)
    g = ctx.grad_vec(ctx.coords(w))
    return {"action": action(ctx, w), "lambda": w.lam, "grad_norm": float(np.linalg.norm(g)),
            "integral_H": ctx.integral_h(ctx.coords(w)), "s": cfg.s}


def cmd_grad_check(cfg, args, ctx, rng):
    return finite_difference_check(ctx, rng, cfg.flow["samples"])


def cmd_flow(cfg, args, ctx, rng):
    pert = _perturbation(cfg, ctx, rng)
    w = _start_point(cfg, ctx, rng)
    traj = integrate_flow(ctx, pert, w, cfg.flow["horizon"], cfg.tolerances())
    csv_path = args.csv or cfg.flow["csv"]
    if csv_path:
        traj.to_csv(csv_path)
    return {"trajectory": traj.to_dict(), "energy": energy_identity_check(traj).to_dict(),
            "monotonicity_violation": monotonicity_violation(traj),
            "perturbation_norm_bound": 0.0 if pert is None else pert.norm_bound()}


def cmd_homotopy(cfg, args, ctx, rng):
    if cfg.homotopy is None:
        raise ValidationError("the homotopy command needs a [homotopy] section")
    hm = cfg.homotopy
    sched = HomotopySchedule(cfg.nonlinearity, hm["target"], budget=hm["budget"])
    w = _start_point(cfg, ctx, rng)
    rep = integrate_homotopy(ctx, sched, w, hm["horizon"], cfg.tolerances())
    csv_path = args.csv or cfg.flow["csv"]
    if csv_path:
        rep.trajectory.to_csv(csv_path)
    return {"homotopy": rep.to_dict()}


def cmd_critical(cfg, args, ctx, rng):
    w = _start_point(cfg, ctx, rng)
    cp = newton_solve(ctx, w, cfg.solver["tol"], cfg.solver["max_iter"])
    return {"critical_point": cp.to_dict()}


def cmd_index(cfg, args, ctx, rng):
    if cfg.nonlinearity.kind == "quadratic" and cfg.point["kind"] == "h0":
        comp = _h0_component(ctx, cfg.point["k"])
        w, sphere = (comp.p_plus if cfg.point["which"] == "+" else comp.p_minus), comp.sphere_dim
    else:
        w = newton_solve(ctx, _start_point(cfg, ctx, rng), cfg.solver["tol"],
                         cfg.solver["max_iter"]).w
        sphere = None
    rep = relative_index(ctx, w, cfg.truncation, sphere_dim=sphere, threads=cfg.threads)
    out = {"k": cfg.point["k"], **rep.to_dict()}
    if sphere is not None:
        lsp = l_spectrum(cfg.spectrum)
        k = cfg.point["k"]
        out["analytic"] = {conv: {"i_rel": analytic_index_oracle(lsp, k, "-", conv)[0],
                                  "nu_plus": analytic_index_oracle(lsp, k, "+", conv)[1],
                                  "nu_minus": analytic_index_oracle(lsp, k, "-", conv)[1]}
                           for conv in ("closed-form", "inertia")}
    return out


def cmd_complex(cfg, args, ctx, rng):
    cx, comps = _complex(cfg, ctx, cfg.complex["window"])
    out = {"window": list(cfg.complex["window"]), "grading": cfg.complex["grading"],
           "complex": cx.to_dict()}
    if comps is not None:
        out["components"] = [c.to_dict() for c in comps]
    return out


def cmd_homology(cfg, args, ctx, rng):
    cx, _ = _complex(cfg, ctx, cfg.complex["window"])
    lo, hi = cfg.complex["window"]
    res = homology(cx, range(lo, hi + 1))
    return {"window": [lo, hi], "grading": cfg.complex["grading"],
            "generators": cx.to_dict()["generators"], **res.to_dict()}


def cmd_solve_dirac(cfg, args, ctx, rng):
    if cfg.nonlinearity.kind != "power":
        raise ValidationError("solve-dirac needs a power nonlinearity")
    cp = newton_solve(ctx, _start_point(cfg, ctx, rng), cfg.solver["tol"],
                      cfg.solver["max_iter"])
    sol = rescale_to_dirac_solution(ctx, cp)
    return {"critical_point": cp.to_dict(), "dirac_solution": sol.to_dict()}


def cmd_report(cfg, args, ctx, rng):
    out = {"config": cfg.to_dict(), "spectrum": cmd_spectrum(cfg, args, ctx, rng)}
    hy = cfg.hypotheses
    out["hypotheses"] = check_hypotheses(cfg.nonlinearity, hy["sample_count"], hy["box"],
                                         rng).to_dict()
    if cfg.nonlinearity.kind == "quadratic":
        lsp = l_spectrum(cfg.spectrum)
        rows = []
        for k in [k for k in lsp.indices() if abs(k) <= 3]:
            comp = _h0_component(ctx, k)
            rep = relative_index(ctx, comp.p_minus, cfg.truncation, sphere_dim=comp.sphere_dim,
                                 threads=cfg.threads)
            rows.append({"k": k, "i_rel": rep.value, "stabilized": rep.stabilized,
                         "kernel_dim": rep.kernel_dim,
                         "closed_form_i_rel": analytic_index_oracle(lsp, k)[0]})
        out["index_table"] = rows
        out["homology"] = cmd_homology(cfg, args, ctx, rng)
    else:
        out["dirac"] = cmd_solve_dirac(cfg, args, ctx, rng)["dirac_solution"]
    return out


_HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rfh", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="write JSON here instead of stdout")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--threads", type=int, help="worker threads for independent sub-tasks")
    ap.add_argument("--k", type=int, help="L-spectrum index of the H0 component")
    ap.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"),
                    help="degree window for complex/homology")
    ap.add_argument("--truncation", help='comma-separated truncation sizes, e.g. "8,12,16"')
    ap.add_argument("--csv", help="trajectory CSV path (flow, homotopy)")
    return ap


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    upd = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed must be >= 0")
        upd["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        upd["threads"] = args.threads
    if args.k is not None:
        if args.k == 0:
            raise ValidationError("--k must be nonzero")
        upd["point"] = {**cfg.point, "k": args.k, "kind": "h0"
                        if cfg.nonlinearity.kind == "quadratic" else cfg.point["kind"]}
    if args.window is not None:
        upd["complex"] = {**cfg.complex, "window": tuple(args.window)}
    if args.truncation is not None:
        try:
            tr = tuple(sorted(int(t) for t in args.truncation.split(",") if t.strip()))
        except ValueError:
            raise ValidationError(f"--truncation: cannot parse {args.truncation!r}") from None
        if not tr or min(tr) < 1 or max(tr) > cfg.spectrum.num_modes:
            raise ValidationError(f"--truncation sizes must lie in [1, {cfg.spectrum.num_modes}]")
        upd["truncation"] = tr
    return replace(cfg, **upd) if upd else cfg


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RFH_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_flags(load_config(args.config), args)
        ctx = _context(cfg)
        rng = np.random.default_rng(cfg.seed)
        payload = _HANDLERS[args.command](cfg, args, ctx, rng)
    except (ConfigError, ValidationError, InfeasibleExponentsError, PerturbationConfigError,
            WindowCoverageError, UnsupportedBranchError) as exc:
        print(f"rfh {args.command}: validation error: {exc}", file=sys.stderr)
        return 2
    except (NonconvergenceError, StiffnessError) as exc:
        print(f"rfh {args.command}: nonconvergence: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(json.dumps(_jsonable(diag), sort_keys=True), file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"rfh {args.command}: validation error: {exc}", file=sys.stderr)
        return 2
    text = dump_json({"command": args.command, **payload})
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
