"""TOML run configuration with field-precise validation."""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .flow import Tolerances
from .nonlinearity import NonlinearitySpec, select_s
from .spectral import Spectrum, SpectrumError, build_circle_spectrum

SCHEMA_VERSION = 1

_SECTIONS = {
    "": {"schema_version", "s", "dimension", "seed", "threads", "truncation", "num_points"},
    "spectrum": {"model", "num_modes", "eigenvalues"},
    "nonlinearity": {"kind", "p", "q", "f", "g", "c0", "c1", "c2", "delta", "scale"},
    "point": {"kind", "k", "which", "mode", "amplitude", "lambda", "scale"},
    "solver": {"tol", "max_iter"},
    "flow": {"horizon", "rtol", "atol", "max_step", "stationary_tol", "csv", "samples"},
    "perturbation": {"bound", "n_terms", "rank", "spread", "gaussian"},
    "homotopy": {"target", "horizon", "budget"},
    "complex": {"window", "grading", "convention"},
    "hypotheses": {"sample_count", "box", "field_samples"},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names file, line and field."""


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.  Sections other than spectrum and
    nonlinearity are kept as plain dicts with defaults filled in."""

    spectrum: Spectrum
    nonlinearity: NonlinearitySpec
    s: float
    s_auto: bool
    dimension: int = 1
    seed: int = 0
    threads: int = 1
    truncation: tuple[int, ...] = (8, 12, 16)
    num_points: int | None = None
    point: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    perturbation: dict | None = None
    homotopy: dict | None = None
    complex: dict = field(default_factory=dict)
    hypotheses: dict = field(default_factory=dict)
    source: str = "<config>"

    def tolerances(self) -> Tolerances:
        f = self.flow
        return Tolerances(rtol=f["rtol"], atol=f["atol"], max_step=f["max_step"],
                          stationary_tol=f["stationary_tol"])

    def to_dict(self) -> dict:
        return {"spectrum": self.spectrum.to_dict(), "nonlinearity": self.nonlinearity.to_dict(),
                "s": self.s, "s_auto": self.s_auto, "dimension": self.dimension,
                "seed": self.seed, "truncation": list(self.truncation)}


class _Locator:
    def __init__(self, path: str, text: str):
        self.path, self.lines = path, text.splitlines()

    def line(self, section: str, key: str | None) -> int | None:
        cur = ""
        for i, raw in enumerate(self.lines, 1):
            s = raw.strip()
            m = re.match(r"^\[([^\]]+)\]", s)
            if m:
                cur = m.group(1).strip()
                if key is None and cur == section:
                    return i
                continue
            if key is not None and cur == section and re.match(rf"^{re.escape(key)}\s*=", s):
                return i
        return None

    def error(self, section: str, key: str | None, msg: str) -> ConfigError:
        ln = self.line(section, key)
        where = f"{self.path}:{ln}" if ln else self.path
        name = f"[{section}].{key}" if section and key else (key or f"[{section}]")
        return ConfigError(f"{where}: {name}: {msg}")


def _num(loc, sec, d, key, default, kind=float, lo=None, hi=None, open_lo=False):
    if key not in d:
        return default
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise loc.error(sec, key, f"expected a number, got {val!r}")
    if kind is int and not float(val).is_integer():
        raise loc.error(sec, key, f"expected an integer, got {val!r}")
    val = kind(val)
    if lo is not None and (val <= lo if open_lo else val < lo):
        raise loc.error(sec, key, f"must be {'>' if open_lo else '>='} {lo}")
    if hi is not None and val > hi:
        raise loc.error(sec, key, f"must be <= {hi}")
    return val


def _nonlinearity(loc, sec, d) -> NonlinearitySpec:
    unknown = set(d) - _SECTIONS["nonlinearity"]
    if unknown:
        raise loc.error(sec, sorted(unknown)[0], "unknown field")
    kind = d.get("kind", "quadratic")
    if kind not in ("quadratic", "power"):
        raise loc.error(sec, "kind", "must be 'quadratic' or 'power'")
    try:
        return NonlinearitySpec.from_dict({"kind": kind, **{k: v for k, v in d.items()
                                                           if k != "kind"}})
    except (TypeError, ValueError) as exc:
        bad = next((k for k in ("p", "q", "f", "g", "c0", "c1", "c2", "delta")
                    if k in str(exc)), None)
        raise loc.error(sec, bad, str(exc)) from None


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    """Parse and validate a TOML document.  Raises :class:`ConfigError`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    loc = _Locator(path, text)
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in _SECTIONS:
                raise loc.error(key, None, "unknown section")
            extra = set(val) - _SECTIONS[key]
            if extra:
                raise loc.error(key, sorted(extra)[0], "unknown field")
        elif key not in _SECTIONS[""]:
            raise loc.error("", key, "unknown field")

    version = _num(loc, "", raw, "schema_version", SCHEMA_VERSION, int)
    if version != SCHEMA_VERSION:
        raise loc.error("", "schema_version", f"unsupported version {version}")

    sp = raw.get("spectrum", {"model": "circle", "num_modes": 8})
    model = sp.get("model", "circle")
    try:
        if model == "circle":
            spectrum = build_circle_spectrum(_num(loc, "spectrum", sp, "num_modes", 8, int, 1))
        elif model == "synthetic":
            if "eigenvalues" not in sp:
                raise loc.error("spectrum", "eigenvalues", "required for the synthetic model")
            pairs = [(float(lam), int(m)) for lam, m in sp["eigenvalues"]]
            spectrum = Spectrum.synthetic(pairs)
        else:
            raise loc.error("spectrum", "model", "must be 'circle' or 'synthetic'")
    except (SpectrumError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise loc.error("spectrum", "eigenvalues", str(exc)) from None

    h = _nonlinearity(loc, "nonlinearity", raw.get("nonlinearity", {}))
    dimension = _num(loc, "", raw, "dimension", 1, int, 1)
    s_raw = raw.get("s", "auto")
    if s_raw == "auto":
        p, q = (h.p, h.q) if h.kind == "power" else (2.0, 2.0)
        try:
            s = select_s(dimension, p, q).s
        except ValueError as exc:
            raise loc.error("", "s", str(exc)) from None
        s_auto = True
    else:
        s = _num(loc, "", raw, "s", None, float, 0.0, 1.0, open_lo=True)
        if s >= 1.0:
            raise loc.error("", "s", "must lie in (0, 1)")
        s_auto = False

    n_modes = spectrum.num_modes
    default = [t for t in (8, 12, 16) if t <= n_modes]
    if len(default) < 2:
        default = sorted({max(1, n_modes // 2), n_modes})
    trunc = raw.get("truncation", default)
    if isinstance(trunc, str):
        trunc = [t for t in trunc.split(",") if t.strip()]
    try:
        trunc = tuple(sorted(int(t) for t in trunc))
    except (TypeError, ValueError):
        raise loc.error("", "truncation", "expected a list of integers") from None
    if not trunc or min(trunc) < 1 or max(trunc) > spectrum.num_modes:
        raise loc.error("", "truncation",
                        f"sizes must lie in [1, {spectrum.num_modes}] (modes in the spectrum)")

    pt = dict(raw.get("point", {}))
    pt.setdefault("kind", "h0" if h.kind == "quadratic" else "single")
    if pt["kind"] not in ("h0", "single", "origin", "random"):
        raise loc.error("point", "kind", "must be one of h0, single, origin, random")
    pt["k"] = _num(loc, "point", pt, "k", 1, int)
    if pt["k"] == 0:
        raise loc.error("point", "k", "must be nonzero")
    pt.setdefault("which", "-")
    if pt["which"] not in ("+", "-"):
        raise loc.error("point", "which", "must be '+' or '-'")
    pt["mode"] = _num(loc, "point", pt, "mode", None, int, 0) if "mode" in pt else None
    pt["amplitude"] = _num(loc, "point", pt, "amplitude", 1.0)
    pt["lambda"] = _num(loc, "point", pt, "lambda", 1.0)
    pt["scale"] = _num(loc, "point", pt, "scale", 0.1, float, 0.0)

    so = raw.get("solver", {})
    solver = {"tol": _num(loc, "solver", so, "tol", 1e-10, float, 0.0, open_lo=True),
              "max_iter": _num(loc, "solver", so, "max_iter", 50, int, 1)}

    fl = raw.get("flow", {})
    flow = {"horizon": _num(loc, "flow", fl, "horizon", 1.0, float, 0.0, open_lo=True),
            "rtol": _num(loc, "flow", fl, "rtol", 1e-10, float, 0.0, open_lo=True),
            "atol": _num(loc, "flow", fl, "atol", 1e-12, float, 0.0, open_lo=True),
            "max_step": _num(loc, "flow", fl, "max_step", 0.05, float, 0.0, open_lo=True),
            "stationary_tol": _num(loc, "flow", fl, "stationary_tol", 1e-9, float, 0.0),
            "samples": _num(loc, "flow", fl, "samples", 100, int, 1),
            "csv": fl.get("csv")}

    pert = None
    if "perturbation" in raw:
        pr = raw["perturbation"]
        pert = {"bound": _num(loc, "perturbation", pr, "bound", 0.4, float, 0.0),
                "n_terms": _num(loc, "perturbation", pr, "n_terms", 2, int, 1),
                "rank": _num(loc, "perturbation", pr, "rank", 2, int, 1),
                "spread": _num(loc, "perturbation", pr, "spread", 0.3, float, 0.0),
                "gaussian": bool(pr.get("gaussian", False))}
        if not pert["bound"] < 0.5:
            raise loc.error("perturbation", "bound", "sup ||K(w)|| < 1/2 required")

    homo = None
    if "homotopy" in raw:
        hm = raw["homotopy"]
        if "target" not in hm or not isinstance(hm["target"], dict):
            raise loc.error("homotopy", "target", "expected a nonlinearity table")
        homo = {"target": _nonlinearity(loc, "homotopy.target", hm["target"]),
                "horizon": _num(loc, "homotopy", hm, "horizon", 1.5, float, 0.0, open_lo=True),
                "budget": _num(loc, "homotopy", hm, "budget", float("inf"), float, 0.0)}

    cx = raw.get("complex", {})
    window = cx.get("window", [-13, 13])
    if not (isinstance(window, list) and len(window) == 2
            and all(isinstance(t, int) for t in window)):
        raise loc.error("complex", "window", "expected [lo, hi] integers")
    cplx = {"window": tuple(window), "grading": cx.get("grading", "analytic"),
            "convention": cx.get("convention", "closed-form")}
    if cplx["grading"] not in ("analytic", "numeric"):
        raise loc.error("complex", "grading", "must be 'analytic' or 'numeric'")
    if cplx["convention"] not in ("closed-form", "inertia"):
        raise loc.error("complex", "convention", "must be 'closed-form' or 'inertia'")

    hy = raw.get("hypotheses", {})
    hyp = {"sample_count": _num(loc, "hypotheses", hy, "sample_count", 10_000, int, 1),
           "box": _num(loc, "hypotheses", hy, "box", 10.0, float, 0.0, open_lo=True),
           "field_samples": _num(loc, "hypotheses", hy, "field_samples", 64, int, 0)}

    num_points = raw.get("num_points")
    if num_points is not None:
        num_points = _num(loc, "", raw, "num_points", None, int, spectrum.band)

    return RunConfig(spectrum, h, float(s), s_auto, dimension,
                     _num(loc, "", raw, "seed", 0, int, 0),
                     _num(loc, "", raw, "threads", 1, int, 1), trunc, num_points,
                     pt, solver, flow, pert, homo, cplx, hyp, path)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, path)
