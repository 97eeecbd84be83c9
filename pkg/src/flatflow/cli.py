"""Command-line front end: JSON config in, CSV + summary JSON out.

One JSON document configures a run; every report embeds that document plus
the precision actually used, and contains no timestamps or absolute paths,
so identical configs produce byte-identical outputs.

Exit codes: 0 success, 1 config error (machine-parsable JSON on stderr),
2 numeric stall (precision ladder exhausted or mode-locking plateau),
3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import gmpy2

from . import bounds as boundsmod
from . import cf as cfmod
from . import flatmap, suspension
from ._precision import (PrecisionExhausted, context, mpfr_from, run_ladder,
                         sci, sig_digits, to_fraction)

DEFAULT_MAX_BITS = 4096
_MPFR = type(gmpy2.mpfr())


class ConfigError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field
        self.message = message


# -- config access ------------------------------------------------------------


def _get(cfg: dict, path: str, default=None, required: bool = False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError(path, "required field is missing")
            return default
        node = node[part]
    return node


def _fraction(cfg, path, default=None, required=False) -> Fraction:
    raw = _get(cfg, path, required=required)
    if raw is None:
        return default
    try:
        return to_fraction(raw)
    except (ValueError, ZeroDivisionError, TypeError) as e:
        raise ConfigError(path, f"not a rational number: {e}") from None


def _int(cfg, path, default=None, required=False, minimum=None) -> int:
    raw = _get(cfg, path, required=required)
    if raw is None:
        return default
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ConfigError(path, "must be an integer")
    if minimum is not None and raw < minimum:
        raise ConfigError(path, f"must be >= {minimum}")
    return raw


def _quotients(cfg, path, required=False):
    raw = _get(cfg, path, required=required)
    if raw is None:
        return None
    if (not isinstance(raw, list) or not raw
            or any(isinstance(a, bool) or not isinstance(a, int) or a < 1
                   for a in raw)):
        raise ConfigError(path, "must be a nonempty list of integers >= 1")
    return [int(a) for a in raw]


def _resolve_bits(cfg, override) -> int:
    if override is not None:
        if override < 64:
            raise ConfigError("--precision-override", "must be >= 64")
        return override
    return _int(cfg, "map.precision_bits", required=True, minimum=64)


def _resolve_target(cfg) -> cfmod.RotationTarget:
    quots = _quotients(cfg, "target.quotients")
    value = _get(cfg, "target.value")
    if quots is not None:
        bb = _int(cfg, "target.bounded_bound", default=None, minimum=1)
        return cfmod.target_from_quotients(quots, bounded_bound=bb)
    if value is not None:
        depth = _int(cfg, "target.depth", required=True, minimum=1)
        try:
            return cfmod.target_from_real(to_fraction(value), depth)
        except (ValueError, TypeError) as e:
            raise ConfigError("target.value", str(e)) from None
    raise ConfigError("target", "needs either quotients or value")


def _resolve_params(cfg, bits: int) -> flatmap.FlatMapParams:
    """Map params from an explicit offset c; tuning is its own command."""
    ell = _fraction(cfg, "map.ell", required=True)
    c = _fraction(cfg, "map.c")
    if c is None:
        raise ConfigError(
            "map.c", "missing offset; run the tune command first and paste "
            "its exact c here"
        )
    lam1 = _fraction(cfg, "map.lambda1")
    lam2 = _fraction(cfg, "map.lambda2")
    a = _fraction(cfg, "map.a")
    b = _fraction(cfg, "map.b")
    try:
        if a is not None or b is not None:
            if a is None or b is None:
                raise ConfigError("map.a", "a and b must be given together")
            if lam1 is None:
                lam1, lam2 = ell, Fraction(-1)
            return flatmap.FlatMapParams(ell=ell, lambda1=lam1, lambda2=lam2,
                                         a=a, b=b, c=c, precision_bits=bits)
        flat_length = _fraction(cfg, "map.flat_length", required=True)
        return flatmap._make_params(ell, flat_length, c, bits,
                                    lambda1=lam1, lambda2=lam2)
    except ValueError as e:
        raise ConfigError("map", str(e)) from None


def _resolve_model(cfg, params) -> suspension.ReturnTimeModel:
    tau0 = _fraction(cfg, "model.tau0", default=Fraction(1))
    eps = _fraction(cfg, "model.epsilon_cut", default=Fraction(1, 8))
    kappa = _fraction(cfg, "model.kappa")
    try:
        if kappa is None:
            return suspension.ReturnTimeModel.from_map(params, tau0=tau0,
                                                       epsilon_cut=eps)
        return suspension.ReturnTimeModel(tau0=tau0, kappa=kappa,
                                          epsilon_cut=eps)
    except ValueError as e:
        raise ConfigError("model", str(e)) from None


# -- serialization -------------------------------------------------------------


def _jsonable(obj, bits: int):
    digs = sig_digits(bits)
    if isinstance(obj, dict):
        return {k: _jsonable(v, bits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v, bits) for v in obj]
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, int):
        return obj
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (float, _MPFR)):
        with context(bits):
            return sci(mpfr_from(obj), digs)
    return str(obj)


def _write_text(out_dir: Path, name: str, text: str) -> str:
    (out_dir / name).write_text(text, encoding="ascii")
    return name


def _write_csv(out_dir: Path, name: str, rows) -> str:
    return _write_text(out_dir, name, "\n".join(rows) + "\n")


def _write_summary(out_dir: Path, command: str, cfg: dict, bits_used: int,
                   body: dict) -> str:
    summary = {
        "command": command,
        "config": cfg,
        "precision_bits_used": bits_used,
        **body,
    }
    text = json.dumps(_jsonable(summary, bits_used), sort_keys=True,
                      indent=2) + "\n"
    return _write_text(out_dir, f"{command}_summary.json", text)


# -- commands ------------------------------------------------------------------


def cmd_tune(cfg: dict, out_dir: Path, override) -> None:
    bits = _resolve_bits(cfg, override)
    ell = _fraction(cfg, "map.ell", required=True)
    flat_length = _fraction(cfg, "map.flat_length", required=True)
    target = _resolve_target(cfg)
    tol = _fraction(cfg, "tune.tol", required=True)
    if tol <= 0:
        raise ConfigError("tune.tol", "must be positive")
    max_bits = _int(cfg, "tune.max_bits", default=DEFAULT_MAX_BITS, minimum=bits)
    max_steps = _int(cfg, "tune.max_orbit_steps", default=1_000_000, minimum=100)
    try:
        params = flatmap.tune(ell, flat_length, target, tol,
                              precision_bits=bits, max_bits=max_bits,
                              max_orbit_steps=max_steps)
    except flatmap.InvalidTargetError as e:
        raise ConfigError("target", str(e)) from None
    except ValueError as e:
        raise ConfigError("tune", str(e)) from None
    pd = flatmap.params_to_json_dict(params)
    _write_text(out_dir, "params.json",
                json.dumps(pd, sort_keys=True, indent=2) + "\n")
    _write_summary(out_dir, "tune", cfg, params.precision_bits, {
        "params": pd,
        "target_value": target.value,
        "tol": tol,
        "files": ["params.json"],
    })


def _ladder_bits(cfg, override):
    bits = _resolve_bits(cfg, override)
    max_bits = _int(cfg, "max_bits", default=max(DEFAULT_MAX_BITS, bits),
                    minimum=bits)
    return bits, max_bits


def _geometry(cfg, override):
    """Shared alpha/bounds plumbing: params + geometry at laddered precision."""
    bits, max_bits = _ladder_bits(cfg, override)
    target = _resolve_target(cfg)
    qtable = cfmod.convergents(target.cf)
    n_max = _int(cfg, "geometry.n_max", required=True, minimum=2)
    if n_max > qtable.depth - 1:
        raise ConfigError("geometry.n_max",
                          f"needs target depth >= {n_max + 1}")

    def attempt(b):
        params = _resolve_params(cfg, b)
        lift = flatmap.Lift(params)
        return flatmap.preimage_geometry(lift, qtable, n_max)

    geom = run_ladder(attempt, bits, max_bits)
    return target, qtable, geom


def cmd_alpha(cfg: dict, out_dir: Path, override) -> None:
    target, qtable, geom = _geometry(cfg, override)
    bits = geom.precision_bits
    quots = list(target.cf.partial_quotients)
    ell = _fraction(cfg, "map.ell", required=True)
    try:
        k1_min, senk = boundsmod.verify_senk_empirical(geom, ell, quots)
    except boundsmod.InsufficientDataError as e:
        raise ConfigError("geometry.n_max", str(e)) from None
    except ValueError as e:
        raise ConfigError("map.ell", str(e)) from None
    margins = {row[0]: row for row in senk.rows}
    digs = sig_digits(bits)
    rows = ["n,qn,alpha_n,theta_n,margin_log_K1,K1_n"]
    with context(bits):
        for n, qn, _gap, _bracket, alpha, theta in geom.gaps:
            if n in margins:
                _, margin, k1, _ = margins[n]
                tail = f"{sci(margin, digs)},{sci(k1, digs)}"
            else:
                tail = ","
            rows.append(f"{n},{qn},{sci(alpha, digs)},{sci(theta, digs)},{tail}")
    files = [
        _write_csv(out_dir, "alpha.csv", rows),
        _write_csv(out_dir, "geometry.csv", flatmap.geometry_csv_rows(geom)),
    ]
    _write_summary(out_dir, "alpha", cfg, bits, {
        "K1_min": k1_min,
        "n_max": geom.n_max,
        "files": files,
    })


def cmd_bounds(cfg: dict, out_dir: Path, override) -> None:
    ell = _fraction(cfg, "map.ell", required=True)
    if ell <= 1:
        raise ConfigError("map.ell", "bound verification needs ell > 1")
    target, qtable, geom = _geometry(cfg, override)
    bits = geom.precision_bits
    quots = list(target.cf.partial_quotients)
    n0 = _int(cfg, "bounds.n0", default=2, minimum=2)
    seeds_raw = _get(cfg, "bounds.seeds", default=["1", "1"])
    if not isinstance(seeds_raw, list) or len(seeds_raw) != 2:
        raise ConfigError("bounds.seeds", "must be a two-element list")
    try:
        seeds = tuple(to_fraction(s) for s in seeds_raw)
    except (ValueError, TypeError) as e:
        raise ConfigError("bounds.seeds", str(e)) from None

    synthetic = boundsmod.synthetic_theta(ell, quots, seeds=seeds,
                                          precision_bits=bits)
    try:
        params_b = boundsmod.BoundParams.from_theta(synthetic, ell, quots,
                                                    n0=n0, precision_bits=bits)
    except (ValueError, boundsmod.InsufficientDataError) as e:
        raise ConfigError("bounds.n0", str(e)) from None
    prop = boundsmod.verify_proposition(synthetic, qtable, params_b,
                                        precision_bits=bits)
    corr = boundsmod.verify_corollary(geom, qtable, params_b,
                                      precision_bits=bits)
    ratios = boundsmod.ratio_sequence(geom)
    digs = sig_digits(bits)
    with context(bits):
        ratio_rows = ["n,r_n,running_inf"]
        for n, r, inf in ratios.rows:
            ratio_rows.append(f"{n},{sci(r, digs)},{sci(inf, digs)}")
    files = [
        _write_csv(out_dir, "bounds_synthetic.csv", prop.csv_rows()),
        _write_csv(out_dir, "bounds_corollary.csv", corr.csv_rows()),
        _write_csv(out_dir, "ratios.csv", ratio_rows),
    ]
    _write_summary(out_dir, "bounds", cfg, bits, {
        "proposition": {"overall": prop.overall, "K": params_b.K,
                        "C": params_b.C, "n0": n0},
        "corollary": {"overall": corr.overall, "fitted_K": corr.fitted_K},
        "ratios": {"inf": ratios.inf, "alpha": ratios.alpha,
                   "C_fit": ratios.C_fit,
                   "positive": bool(ratios.inf > 0)},
        "files": files,
    })


def cmd_gamma(cfg: dict, out_dir: Path, override) -> None:
    bits, max_bits = _ladder_bits(cfg, override)
    target = _resolve_target(cfg)
    qtable = cfmod.convergents(target.cf)
    pows = _get(cfg, "gamma.t_grid_pows", required=True)
    if (not isinstance(pows, list) or not pows
            or any(isinstance(p, bool) or not isinstance(p, int) or p < 0
                   for p in pows)):
        raise ConfigError("gamma.t_grid_pows",
                          "must be a nonempty list of integers >= 0")
    pows = sorted(set(pows))
    n0 = _int(cfg, "gamma.n0", required=True, minimum=1)
    n = _int(cfg, "gamma.n", required=True, minimum=n0 + 1)
    if n + 1 > qtable.depth:
        raise ConfigError("gamma.n", f"needs target depth >= {n + 1}")

    def attempt(b):
        params = _resolve_params(cfg, b)
        lift = flatmap.Lift(params)
        model = _resolve_model(cfg, params)
        z = _fraction(cfg, "segment.z")
        if z is None:
            z = (params.a + params.b) / 2
        elif not params.a < z < params.b:
            raise ConfigError("segment.z", "must lie strictly inside (a, b)")
        # tau >= tau0 makes ceil(t_max / tau0) points always sufficient
        t_max = (1 << pows[-1]) * model.tau0
        N = int(-(-t_max // model.tau0)) + 1
        segment = suspension.iterate_segment(lift, model, z, N)
        decomps = []
        with context(b):
            for k in pows:
                mark = mpfr_from((1 << k) * model.tau0)
                prefix = suspension.prefix_at_time(segment, mark)
                decomps.append(
                    suspension.occupation_times(prefix, lift, qtable, n0, n)
                )
        return segment, decomps

    segment, decomps = run_ladder(attempt, bits, max_bits)
    bits_used = segment.precision_bits
    digs = sig_digits(bits_used)
    with context(bits_used):
        grid_rows = ["t,gamma_hat,tA_over_t"]
        for d in decomps:
            grid_rows.append(f"{sci(d.t, digs)},{sci(d.gamma_hat, digs)},"
                             f"{sci(d.tA / d.t, digs)}")
    files = [
        _write_csv(out_dir, "gamma.csv", grid_rows),
        _write_csv(out_dir, "occupation.csv",
                   suspension.gamma_csv_rows(decomps)),
    ]
    with context(bits_used):
        last = decomps[-1]
        body = {
            "first_gamma_hat": decomps[0].gamma_hat,
            "last_gamma_hat": last.gamma_hat,
            "last_tA_over_t": last.tA / last.t,
            "majorant": last.majorant,
            "n0": n0,
            "n": n,
            "files": files,
        }
    _write_summary(out_dir, "gamma", cfg, bits_used, body)


def cmd_orbit(cfg: dict, out_dir: Path, override) -> None:
    bits, max_bits = _ladder_bits(cfg, override)
    N = _int(cfg, "segment.N", required=True, minimum=1)

    def attempt(b):
        params = _resolve_params(cfg, b)
        lift = flatmap.Lift(params)
        model = _resolve_model(cfg, params)
        z = _fraction(cfg, "segment.z")
        if z is None:
            z = (params.a + params.b) / 2
        elif not params.a < z < params.b:
            raise ConfigError("segment.z", "must lie strictly inside (a, b)")
        return suspension.iterate_segment(lift, model, z, N)

    segment = run_ladder(attempt, bits, max_bits)
    decomp = suspension.gamma_estimate(segment)
    files = [_write_csv(out_dir, "orbit.csv",
                        suspension.segment_csv_rows(segment))]
    _write_summary(out_dir, "orbit", cfg, segment.precision_bits, {
        "N": N,
        "t_total": segment.t_total,
        "t_tilde": segment.t_tilde,
        "gamma_hat": decomp.gamma_hat,
        "files": files,
    })


def cmd_report(cfg: dict, out_dir: Path, override) -> None:
    """Composite run: geometry + senk margins + bound verdicts + ratios."""
    ell = _fraction(cfg, "map.ell", required=True)
    cmd_alpha(cfg, out_dir, override)
    if ell > 1:
        cmd_bounds(cfg, out_dir, override)
        sub = ["alpha", "bounds"]
    else:
        sub = ["alpha"]
    merged = {}
    for name in sub:
        merged[name] = json.loads((out_dir / f"{name}_summary.json")
                                  .read_text(encoding="ascii"))
    bits_used = max(m["precision_bits_used"] for m in merged.values())
    _write_summary(out_dir, "report", cfg, bits_used, {"runs": merged})


DISPATCH = {
    "tune": cmd_tune,
    "alpha": cmd_alpha,
    "bounds": cmd_bounds,
    "gamma": cmd_gamma,
    "orbit": cmd_orbit,
    "report": cmd_report,
}


class _Parser(argparse.ArgumentParser):
    # usage problems are config errors (exit 1), not numeric stalls (exit 2)
    def error(self, message):
        print(json.dumps({"error": "usage", "message": message}),
              file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flatflow",
                     description="flat-interval circle map experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DISPATCH:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--precision-override", type=int, default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg_path = Path(args.config)
        try:
            cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("--config", f"no such file: {cfg_path}")
        except json.JSONDecodeError as e:
            raise ConfigError("--config", f"invalid JSON: {e}")
        if not isinstance(cfg, dict):
            raise ConfigError("--config", "top level must be a JSON object")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        DISPATCH[args.command](cfg, out_dir, args.precision_override)
        return 0
    except ConfigError as e:
        print(json.dumps({"error": "config", "field": e.field,
                          "message": e.message}), file=sys.stderr)
        return 1
    except suspension.MissingGeometryError as e:
        print(json.dumps({"error": "config", "field": "gamma.n",
                          "message": str(e)}), file=sys.stderr)
        return 1
    except PrecisionExhausted as e:
        print(json.dumps({"error": "numeric_stall", "message": str(e)}),
              file=sys.stderr)
        return 2
    except Exception as e:
        print(json.dumps({"error": "internal",
                          "type": type(e).__name__,
                          "message": str(e)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
