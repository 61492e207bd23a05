"""Command-line front end: scenario parsing, subcommands and file output.

Scenario files are JSON.  Complex numbers are ``[re, im]`` pairs (plain
numbers are accepted as real), components and coordinates are 1-based, and a
map is a primitive object or a list of primitives applied in order::

    {
      "dimension": 2,
      "maps": [[{"type": "triangular", "diagonal": [0.5, 0.2],
                 "terms": [{"component": 2, "exponents": [2, 0], "coeff": [1, 0]}]}]],
      "sequence": {"kind": "single"},
      "attraction": {"r": 0.6, "s": 0.15, "delta": 0.1}
    }
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .basin import (DEFAULT_JMAX, DiagonalPrim, GridSpec, LinearPrim, Perturbation, SequenceSpec,
                    ShearPrim, SwapPrim, TriangularPrim, grid_classify, injectivity_check,
                    psi_convergence_report, verify_hypotheses, word_map)
from .bounds import AttractionParams, QBoundReport, minimal_p, q_bounds
from .errors import FBError, ScenarioError
from .normalform import NormalFormResult, normal_form
from .polyalg import PolyJetMap
from .resonance import special_basis
from .spectral import schur_lower

__all__ = ["Scenario", "PsiSampling", "parse_scenario", "scenario_from_dict", "scenario_to_dict",
           "pipeline_bounds", "run", "emit_outputs", "format_json", "main"]

SUBCOMMANDS = ("normal-form", "q-bound", "verify", "psi", "basin")


# scenario -----------------------------------------------------------------

@dataclass(frozen=True)
class PsiSampling:
    """Explicit points, or ``count`` seeded points in the ball of radius ``radius * delta``."""

    points: tuple[tuple[complex, ...], ...] | None = None
    count: int = 20
    radius: float = 0.9
    seed: int = 0
    jmax: int = 30
    pairs: int = 500


@dataclass(frozen=True)
class Scenario:
    n: int
    seq: SequenceSpec
    p: int | None = None
    q: int | None = None
    grid: GridSpec | None = None
    psi: PsiSampling = field(default_factory=PsiSampling)
    jmax: int | None = None
    out: str = "."
    auto_q_min: bool = field(default=False, compare=False)  # provenance only; serialized as the resolved value


def _complex(v, where: str) -> complex:
    if isinstance(v, bool):
        raise ScenarioError(where, f"{where} must be a number or an [re, im] pair")
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        return complex(v[0], v[1])
    raise ScenarioError(where, f"{where} must be a number or an [re, im] pair")


def _cvec(v, where: str, n: int | None = None) -> tuple[complex, ...]:
    if not isinstance(v, list):
        raise ScenarioError(where, f"{where} must be a list")
    if n is not None and len(v) != n:
        raise ScenarioError(where, f"{where} must have {n} entries")
    return tuple(_complex(x, f"{where}[{i}]") for i, x in enumerate(v))


def _get(d: dict, key: str, where: str, default: Any = ...):
    if not isinstance(d, dict):
        raise ScenarioError(where, f"{where} must be an object")
    if key not in d:
        if default is ...:
            raise ScenarioError(f"{where}.{key}" if where else key,
                                f"{where + '.' if where else ''}{key} is required")
        return default
    return d[key]


def _int(v, where: str, lo: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(where, f"{where} must be an integer")
    if lo is not None and v < lo:
        raise ScenarioError(where, f"{where} must be >= {lo}")
    return v


def _float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(where, f"{where} must be a number")
    return float(v)


def _exponents(v, where: str, n: int) -> tuple[int, ...]:
    if not isinstance(v, list) or len(v) != n:
        raise ScenarioError(where, f"{where} must list {n} exponents")
    a = tuple(_int(x, f"{where}[{i}]", 0) for i, x in enumerate(v))
    if sum(a) == 0:
        raise ScenarioError(where, f"{where} is a constant term; maps must fix 0")
    return a


def _index(v, where: str, n: int) -> int:
    i = _int(v, where, 1)
    if i > n:
        raise ScenarioError(where, f"{where} must be <= {n}")
    return i - 1


def _primitive(d: dict, where: str, n: int):
    kind = _get(d, "type", where)
    if kind == "linear":
        M = _get(d, "matrix", where)
        if not isinstance(M, list) or len(M) != n:
            raise ScenarioError(f"{where}.matrix", f"{where}.matrix must be {n}x{n}")
        prim = LinearPrim(tuple(_cvec(row, f"{where}.matrix[{i}]", n) for i, row in enumerate(M)))
    elif kind == "diagonal":
        vals = _cvec(_get(d, "values", where), f"{where}.values", n)
        if any(v == 0 for v in vals):
            raise ScenarioError(f"{where}.values", f"{where}.values has a zero diagonal entry")
        prim = DiagonalPrim(vals)
    elif kind == "shear":
        target = _index(_get(d, "target", where), f"{where}.target", n)
        terms = []
        for i, t in enumerate(_get(d, "terms", where)):
            w = f"{where}.terms[{i}]"
            a = _exponents(_get(t, "exponents", w), f"{w}.exponents", n)
            if a[target]:
                raise ScenarioError(f"{w}.exponents", f"{w}.exponents involves the shear target")
            terms.append((a, _complex(_get(t, "coeff", w), f"{w}.coeff")))
        prim = ShearPrim(target, tuple(terms))
    elif kind == "swap":
        prim = SwapPrim(_index(_get(d, "i", where), f"{where}.i", n),
                        _index(_get(d, "j", where), f"{where}.j", n))
    elif kind == "triangular":
        diag = _cvec(_get(d, "diagonal", where), f"{where}.diagonal", n)
        if any(v == 0 for v in diag):
            raise ScenarioError(f"{where}.diagonal", f"{where}.diagonal has a zero entry")
        terms = []
        for i, t in enumerate(_get(d, "terms", where, [])):
            w = f"{where}.terms[{i}]"
            comp = _index(_get(t, "component", w), f"{w}.component", n)
            terms.append((comp, _exponents(_get(t, "exponents", w), f"{w}.exponents", n),
                          _complex(_get(t, "coeff", w), f"{w}.coeff")))
        prim = TriangularPrim(diag, tuple(terms))
    else:
        raise ScenarioError(f"{where}.type", f"{where}.type must be one of "
                            "linear, diagonal, shear, swap, triangular")
    try:
        prim.poly(n)
    except (ValueError, FBError) as exc:
        raise ScenarioError(where, f"{where}: {exc}") from exc
    return prim


def _grid(d: dict, n: int) -> GridSpec:
    w = "grid"
    width = _int(_get(d, "width", w, 64), "grid.width")
    height = _int(_get(d, "height", w, 64), "grid.height")
    if width < 2 or height < 2:
        raise ScenarioError("grid", f"grid resolution must be at least 2x2, got {width}x{height}")
    if "origin" not in d:
        return GridSpec.centered(n, _float(_get(d, "radius", w, 1.0), "grid.radius"), width, height)
    rng = []
    for key in ("t1", "t2"):
        v = _get(d, key, w)
        if not isinstance(v, list) or len(v) != 2:
            raise ScenarioError(f"grid.{key}", f"grid.{key} must be [min, max]")
        rng.append((_float(v[0], f"grid.{key}[0]"), _float(v[1], f"grid.{key}[1]")))
    return GridSpec(_cvec(d["origin"], "grid.origin", n), _cvec(_get(d, "dir1", w), "grid.dir1", n),
                    _cvec(_get(d, "dir2", w), "grid.dir2", n), rng[0], rng[1], width, height)


def pipeline_bounds(seq: SequenceSpec, p: int | None = None,
                    q: int | None = None) -> tuple[QBoundReport, int]:
    """Bound report for ``f_1`` and the order ``q`` the pipeline will use.

    The no-special shortcut is taken when the spectrum of ``d_0 f_1`` has no
    special elements in degrees ``2..p-1``.
    """
    params = seq.params
    p = minimal_p(params.r, params.s) if p is None else p
    schur = schur_lower(seq.base(1).linear_part)
    no_special = all(special_basis(schur.spectrum, m).empty for m in range(2, p))
    report = q_bounds(params, p, normal=schur.normal, no_special=no_special)
    if q is not None:
        return report, q
    if not (schur.normal or no_special):
        raise ScenarioError("q", "q must be supplied: linear part not normal, no closed form for q")
    return report, report.q


def scenario_from_dict(doc: dict, overrides: dict | None = None) -> Scenario:
    """Validate a scenario document; every failure names its field."""
    ov = overrides or {}
    if not isinstance(doc, dict):
        raise ScenarioError("", "scenario must be a JSON object")
    n = _int(_get(doc, "dimension", ""), "dimension", 1)
    maps = _get(doc, "maps", "")
    if not isinstance(maps, list) or not maps:
        raise ScenarioError("maps", "maps must be a non-empty list")
    words = []
    for i, m in enumerate(maps):
        prims = m if isinstance(m, list) else [m]
        if not prims:
            raise ScenarioError(f"maps[{i}]", f"maps[{i}] is empty")
        words.append(tuple(_primitive(pr, f"maps[{i}][{k}]", n) for k, pr in enumerate(prims)))

    att = _get(doc, "attraction", "")
    r = _float(_get(att, "r", "attraction"), "attraction.r")
    s = _float(_get(att, "s", "attraction"), "attraction.s")
    delta = _float(_get(att, "delta", "attraction"), "attraction.delta")
    if not 0 < r < 1:
        raise ScenarioError("attraction.r", "attraction.r must be in (0, 1)")
    if not 0 < s:
        raise ScenarioError("attraction.s", "attraction.s must be > 0")
    if s >= r:
        raise ScenarioError("attraction.s", "attraction.s must be < attraction.r")
    if delta <= 0:
        raise ScenarioError("attraction.delta", "attraction.delta must be > 0")
    params = AttractionParams(r, s, delta, n)

    p = ov.get("p", doc.get("p"))
    q = ov.get("q", doc.get("q"))
    p = None if p is None else _int(p, "p", 2)
    q = None if q is None else _int(q, "q", 2)

    sq = _get(doc, "sequence", "", {"kind": "single"})
    kind = _get(sq, "kind", "sequence", "single")
    if kind not in ("single", "cyclic", "perturbed"):
        raise ScenarioError("sequence.kind", "sequence.kind must be single, cyclic or perturbed")
    K = _int(_get(sq, "K", "sequence", 1), "sequence.K", 1)
    pert, auto = None, False
    if kind == "perturbed":
        pb = _get(sq, "perturbation", "sequence")
        w = "sequence.perturbation"
        seed = ov.get("seed", _get(pb, "seed", w))
        seed = _int(seed, f"{w}.seed", 0)
        eps = _float(_get(pb, "eps", w), f"{w}.eps")
        if eps < 0:
            raise ScenarioError(f"{w}.eps", f"{w}.eps must be >= 0")
        qmin = _get(pb, "q_min", w)
        qmax = _get(pb, "q_max", w, None)
        if qmin == "auto":
            auto = True
            probe = SequenceSpec(n, "single", tuple(words), params, K=K)
            _, qmin = pipeline_bounds(probe, p, q)
        qmin = _int(qmin, f"{w}.q_min", 2)
        if qmax is not None and _int(qmax, f"{w}.q_max", qmin) < qmin:
            raise ScenarioError(f"{w}.q_max", f"{w}.q_max must be >= q_min")
        pert = Perturbation(qmin, eps, seed, qmax)
    seq = SequenceSpec(n, kind, tuple(words), params, pert, K)

    grid = None
    if "grid" in doc or "grid" in ov:
        gd = dict(doc.get("grid") or {})
        if "grid" in ov:
            gd["width"], gd["height"] = ov["grid"]
        grid = _grid(gd, n)

    pd = _get(doc, "psi", "", {})
    pts = pd.get("points") if isinstance(pd, dict) else None
    if pts is not None:
        if not isinstance(pts, list) or not pts:
            raise ScenarioError("psi.points", "psi.points must be a non-empty list")
        pts = tuple(_cvec(v, f"psi.points[{i}]", n) for i, v in enumerate(pts))
    psi = PsiSampling(
        points=pts,
        count=_int(_get(pd, "count", "psi", 20), "psi.count", 1),
        radius=_float(_get(pd, "radius", "psi", 0.9), "psi.radius"),
        seed=_int(ov.get("seed", _get(pd, "seed", "psi", 0)), "psi.seed", 0),
        jmax=_int(ov.get("jmax", _get(pd, "jmax", "psi", 30)), "psi.jmax", 1),
        pairs=_int(_get(pd, "pairs", "psi", 500), "psi.pairs", 0),
    )
    if not 0 < psi.radius <= 1:
        raise ScenarioError("psi.radius", "psi.radius must be in (0, 1] (fraction of delta)")

    jmax = ov.get("jmax", doc.get("jmax"))
    jmax = None if jmax is None else _int(jmax, "jmax", 1)
    out = ov.get("out") or _get(_get(doc, "outputs", "", {}), "dir", "outputs", ".")
    return Scenario(n, seq, p, q, grid, psi, jmax, str(out), auto)


def parse_scenario(path, overrides: dict | None = None) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    except OSError as exc:
        raise ScenarioError("", f"{path}: {exc.strerror or exc}") from exc
    return scenario_from_dict(doc, overrides)


def _cjson(c: complex) -> list[float]:
    return [float(c.real), float(c.imag)]


def _prim_dict(p) -> dict:
    if isinstance(p, LinearPrim):
        return {"type": "linear", "matrix": [[_cjson(c) for c in row] for row in p.matrix]}
    if isinstance(p, DiagonalPrim):
        return {"type": "diagonal", "values": [_cjson(c) for c in p.values]}
    if isinstance(p, ShearPrim):
        return {"type": "shear", "target": p.target + 1,
                "terms": [{"exponents": list(a), "coeff": _cjson(c)} for a, c in p.terms]}
    if isinstance(p, SwapPrim):
        return {"type": "swap", "i": p.i + 1, "j": p.j + 1}
    return {"type": "triangular", "diagonal": [_cjson(c) for c in p.diagonal],
            "terms": [{"component": j + 1, "exponents": list(a), "coeff": _cjson(c)}
                      for j, a, c in p.terms]}


def scenario_to_dict(sc: Scenario) -> dict:
    """Canonical document; ``scenario_from_dict(scenario_to_dict(sc)) == sc``."""
    seq = sc.seq
    doc: dict[str, Any] = {
        "dimension": sc.n,
        "maps": [[_prim_dict(p) for p in w] for w in seq.words],
        "attraction": {"r": seq.params.r, "s": seq.params.s, "delta": seq.params.delta},
        "sequence": {"kind": seq.kind, "K": seq.K},
        "outputs": {"dir": sc.out},
    }
    if seq.perturbation is not None:
        pt = seq.perturbation
        doc["sequence"]["perturbation"] = {"q_min": pt.q_min, "eps": pt.eps, "seed": pt.seed,
                                           "q_max": pt.q_max}
    for key in ("p", "q", "jmax"):
        if getattr(sc, key) is not None:
            doc[key] = getattr(sc, key)
    if sc.grid is not None:
        g = sc.grid
        doc["grid"] = {"origin": [_cjson(c) for c in g.origin], "dir1": [_cjson(c) for c in g.dir1],
                       "dir2": [_cjson(c) for c in g.dir2], "t1": list(g.t1_range),
                       "t2": list(g.t2_range), "width": g.width, "height": g.height}
    ps = sc.psi
    doc["psi"] = {"count": ps.count, "radius": ps.radius, "seed": ps.seed, "jmax": ps.jmax,
                  "pairs": ps.pairs}
    if ps.points is not None:
        doc["psi"]["points"] = [[_cjson(c) for c in v] for v in ps.points]
    return doc


# formatting ---------------------------------------------------------------

def _fmt(x: float) -> str:
    if x == 0:
        return "0"
    return f"{x:.12g}"


def _clean(obj):
    """Round floats to 12 significant digits and make values JSON-safe."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return 0.0 if x == 0 else float(f"{x:.12g}")
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def format_json(report: dict) -> bytes:
    return (json.dumps(_clean(report), sort_keys=True, indent=2) + "\n").encode()


def _csv(header: list[str], rows) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("n/a" if header is _PSI_HEADER else "")
            elif isinstance(v, float):
                cells.append(_fmt(v))
            else:
                cells.append(str(v))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue().encode()


_PSI_HEADER = ["point_id", "j", "diff_norm", "fitted_ratio", "reference_ratio"]
_BASIN_HEADER = ["i", "j", "t1", "t2", "status", "first_entry_step"]


def _pgm(img: np.ndarray) -> bytes:
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def emit_outputs(files: dict[str, bytes], out_dir) -> list[str]:
    """Write ``{name: bytes}`` under ``out_dir``; I/O errors name the path."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: {exc.strerror or exc}") from exc
    for name in sorted(files):
        path = out / name
        try:
            path.write_bytes(files[name])
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
        written.append(str(path))
    return written


# reports ------------------------------------------------------------------

def _terms(f: PolyJetMap) -> list[dict]:
    return [{"component": j + 1, "exponents": list(a), "coeff": c} for j, a, c in f.terms()]


def normal_form_report(nf: NormalFormResult) -> dict:
    return {
        "q": nf.q,
        "S": nf.S,
        "L": nf.L,
        "spectrum": list(nf.spectrum.eigenvalues),
        "normal": nf.normal,
        "fast_path": nf.fast_path,
        "Gtilde": _terms(nf.Gtilde.map),
        "Gtilde_degree": nf.Gtilde.degree,
        "T": _terms(nf.T),
        "T_degree": nf.T.degree,
        "residual_norms": list(nf.residual_norms),
        "residual_scale": nf.scale,
        "specials": [s.to_dict() for s in nf.specials],
    }


def _psi_points(sc: Scenario) -> np.ndarray:
    ps = sc.psi
    if ps.points is not None:
        return np.array(ps.points, dtype=complex)
    rng = np.random.default_rng(ps.seed)
    Z = rng.standard_normal((ps.count, sc.n)) + 1j * rng.standard_normal((ps.count, sc.n))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    radii = ps.radius * sc.seq.params.delta * rng.uniform(0.05, 1.0, ps.count)
    return Z * radii[:, None]


def run(subcommand: str, sc: Scenario, *, threads: int = 1, pgm: bool = False) -> tuple[dict, dict]:
    """Execute a subcommand; returns ``(summary, {file name: bytes})``."""
    seq = sc.seq
    if subcommand == "q-bound":
        report, q = pipeline_bounds(seq, sc.p, sc.q)
        doc = dict(report.to_dict(), q_used=q)
        return doc, {"q_bound.json": format_json(doc)}
    if subcommand == "normal-form":
        _, q = pipeline_bounds(seq, sc.p, sc.q)
        nf = normal_form(seq.base(1), q)
        doc = normal_form_report(nf)
        return doc, {"normal_form.json": format_json(doc)}
    if subcommand == "verify":
        _, q = pipeline_bounds(seq, sc.p, sc.q)
        rep = verify_hypotheses(seq, q, sc.jmax or 20, seed=sc.psi.seed)
        doc = rep.to_dict()
        return doc, {"verify.json": format_json(doc)}
    if subcommand == "psi":
        report, q = pipeline_bounds(seq, sc.p, sc.q)
        nf = normal_form(seq.base(1), q)
        ref = seq.params.r ** q * report.gamma
        pts = _psi_points(sc)
        jmax = sc.jmax or sc.psi.jmax
        table = psi_convergence_report(seq, nf, pts, jmax, ref)
        collisions, min_gap = injectivity_check(seq, nf, pts, jmax, sc.psi.pairs, sc.psi.seed) \
            if len(pts) > 1 and sc.psi.pairs else (0, math.inf)
        doc = {"q": q, "reference_ratio": ref, "fitted_ratios": list(table.fitted),
               "det_at_zero": table.det_at_zero, "injectivity_collisions": collisions,
               "min_image_gap": min_gap}
        return doc, {"psi.csv": _csv(_PSI_HEADER, table.rows())}
    if subcommand == "basin":
        if sc.grid is None:
            raise ScenarioError("grid", "grid is required for the basin subcommand")
        grid = grid_classify(seq, sc.grid, sc.jmax or DEFAULT_JMAX, threads=threads)
        files = {"basin.csv": _csv(_BASIN_HEADER, grid.rows())}
        if pgm:
            files["basin.pgm"] = _pgm(grid.image())
        return {"counts": grid.counts(), "width": sc.grid.width, "height": sc.grid.height}, files
    raise ValueError(f"unknown subcommand {subcommand!r}")


def _grid_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbbasin", description=(
        "Lower-triangular normal forms, q bounds and basins of attracting sequences."))
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--scenario", required=True, help="scenario JSON file")
    ap.add_argument("--out", help="output directory (overrides outputs.dir)")
    ap.add_argument("--q", type=int, help="override the order q")
    ap.add_argument("--p", type=int, help="override the exponent p")
    ap.add_argument("--jmax", type=int, help="maximal sequence index")
    ap.add_argument("--grid", type=_grid_size, help="grid resolution WxH")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for grids")
    ap.add_argument("--seed", type=int, help="override perturbation and sampling seeds")
    ap.add_argument("--pgm", action="store_true", help="also write basin.pgm")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in (("q", args.q), ("p", args.p), ("jmax", args.jmax),
                                   ("grid", args.grid), ("seed", args.seed), ("out", args.out))
                 if v is not None}
    try:
        sc = parse_scenario(args.scenario, overrides)
        summary, files = run(args.subcommand, sc, threads=max(1, args.threads), pgm=args.pgm)
        written = emit_outputs(files, sc.out)
    except FBError as exc:
        sys.stdout.write(format_json(exc.to_dict()).decode())
        return 2 if isinstance(exc, ScenarioError) else 1
    except (ValueError, OSError, ArithmeticError) as exc:
        sys.stdout.write(format_json({"error": type(exc).__name__, "message": str(exc)}).decode())
        return 1
    sys.stdout.write(format_json({"subcommand": args.subcommand, "files": written,
                                  "summary": summary}).decode())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
