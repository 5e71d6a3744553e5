"""Command-line front end.

    msvou price     --model P --pair EURUSD --strike 1.30 --maturity 0.5
    msvou calibrate --quotes Q.csv [--config C.cfg] [--model P] --out FIT.cfg [--report R.csv]
    msvou simulate  --model P --maturity T --paths N --out paths.csv
    msvou covswap   --model P --maturities 0.1:5:50 --out curve.csv
    msvou smile     --model P --pair EURUSD --strikes ... --maturities ... --out smile.csv
    msvou mgfcheck  --model P --t 1.0

Exit status is 2 for usage errors and 1 for computation errors.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from . import __version__
from .config import OptionQuote, fmt, load_params, read_calib_config, read_quotes, save_params
from .errors import MSVOUError

__all__ = ["main", "run", "load_params", "save_params", "parse_grid", "read_smile_csv"]


def parse_grid(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:count`` (inclusive, evenly spaced)."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return [float(v) for v in np.linspace(float(start), float(stop), int(count))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use a,b,c or start:stop:count") from None


def _spot(params, pair: str) -> tuple[float, float, float]:
    """(spot, r_dom, r_for) of a pair under the parameter record."""
    pair = pair.upper()
    if pair == "EURUSD":
        return params.spot1, params.r_dom, params.r_for1
    if pair == "GBPUSD":
        return params.spot2, params.r_dom, params.r_for2
    if pair == "EURGBP":
        return params.spot1 / params.spot2, params.r_for2, params.r_for1
    raise ValueError(f"unknown pair {pair!r}")


def _quote(params, pair, K, T, spot=None):
    s, rd, rf = _spot(params, pair)
    return OptionQuote(pair.upper(), T, K, 0.0, 0.0, s if spot is None else spot, rd, rf)


def cmd_price(args) -> int:
    from .calibration import price_quote
    params = load_params(args.model)
    res = price_quote(params, _quote(params, args.pair, args.strike, args.maturity, args.spot), args.tol)
    print(f"price {fmt(res.price)} quad_error {res.quad_error:.3e}")
    return 0


def cmd_calibrate(args) -> int:
    from .calibration import CalibConfig, calibrate, write_report
    from .config import params_from_mapping, params_to_mapping
    from .ou_wishart import initial_params

    quotes = read_quotes(args.quotes)
    init = load_params(args.model) if args.model else initial_params()
    cfg = CalibConfig(variant=args.variant or "A", initial=init)
    if args.config:
        cf = read_calib_config(args.config)
        values = params_to_mapping(init)
        values.update(cf.init)
        bounds = {k: (cf.lb.get(k, -math.inf), cf.ub.get(k, math.inf)) for k in set(cf.lb) | set(cf.ub)}
        from .calibration import SCALAR_BOUNDS
        for k, (lo, hi) in bounds.items():
            key = "a1" if k == "a" else k
            if key not in SCALAR_BOUNDS:
                raise ValueError(f"bounds are supported for scalar parameters only, not {k!r}")
            dlo, dhi = SCALAR_BOUNDS[key]
            bounds[k] = (max(lo, dlo), min(hi, dhi))
        cfg = CalibConfig(
            variant=args.variant or cf.variant, initial=params_from_mapping(values), bounds=bounds,
            fixed=frozenset(k for k, v in cf.fix.items() if v),
            max_evals=cf.max_evals or cfg.max_evals, tol_obj=cf.tol_obj or cfg.tol_obj, seed=cf.seed,
        )
    if args.max_evals:
        cfg.max_evals = args.max_evals
    result = calibrate(cfg, quotes)
    save_params(result.params, args.out)
    if args.report:
        write_report(result, quotes, args.report)
    print(result.summary())
    return 0


def cmd_simulate(args) -> int:
    from .montecarlo import MCConfig, dump_paths
    params = load_params(args.model)
    grid = np.linspace(0.0, args.maturity, args.steps + 1)
    cfg = MCConfig(n_paths=args.paths, seed=args.seed, t_grid=tuple(grid), threads=args.threads)
    dump_paths(params, args.maturity, cfg, args.out)
    print(f"wrote {args.paths} paths x {grid.size} times to {args.out}")
    return 0


def cmd_covswap(args) -> int:
    from .covswap import normalized_rate_curve, write_curve_csv
    params = load_params(args.model)
    curve = normalized_rate_curve(params, args.i, args.j, args.maturities)
    write_curve_csv(curve, args.out)
    print(f"wrote {len(curve)} points to {args.out}")
    return 0


SMILE_HEADER = ("K", "T", "model_iv")


def cmd_smile(args) -> int:
    from .calibration import fast_prices
    from .implied_vol import implied_vol
    params = load_params(args.model)
    quotes = [_quote(params, args.pair, K, T) for T in args.maturities for K in args.strikes]
    prices = fast_prices(params, quotes)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SMILE_HEADER)
        for q, v in zip(quotes, prices):
            iv = implied_vol(v, q.spot, q.K, q.T, q.r_dom, q.r_for)
            w.writerow([fmt(q.K), fmt(q.T), repr(float(iv))])
    print(f"wrote {len(quotes)} points to {args.out}")
    return 0


def read_smile_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [tuple(float(r[k]) for k in SMILE_HEADER) for r in csv.DictReader(fh)]


def cmd_mgfcheck(args) -> int:
    from .ou_wishart import closed_form_check
    params = load_params(args.model)
    err, _ = closed_form_check(params, args.t, args.points, args.seed)
    print(f"max relative error closed vs quadrature over {args.points} points: {err:.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="msvou", description="OU-type multivariate stochastic volatility tools")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=1, help="worker threads for simulation")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("price", help="price one call option")
    p.add_argument("--model", required=True)
    p.add_argument("--pair", required=True, choices=["EURUSD", "GBPUSD", "EURGBP"])
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--spot", type=float, help="override the spot from the model file")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("calibrate", help="fit the model to a quote file")
    p.add_argument("--quotes", required=True)
    p.add_argument("--config")
    p.add_argument("--model", help="initial parameters (default: built-in initial row)")
    p.add_argument("--variant", choices=["A", "B", "C", "D"])
    p.add_argument("--max-evals", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="dump simulated paths")
    p.add_argument("--model", required=True)
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--paths", type=int, default=10)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("covswap", help="normalized covariance swap rate curve")
    p.add_argument("--model", required=True)
    p.add_argument("--maturities", type=parse_grid, default=parse_grid("0.1:5:50"))
    p.add_argument("--i", type=int, default=1)
    p.add_argument("--j", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_covswap)

    p = sub.add_parser("smile", help="model implied volatilities on a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--pair", required=True, choices=["EURUSD", "GBPUSD", "EURGBP"])
    p.add_argument("--strikes", type=parse_grid, required=True)
    p.add_argument("--maturities", type=parse_grid, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_smile)

    p = sub.add_parser("mgfcheck", help="closed-form vs quadrature MGF")
    p.add_argument("--model", required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mgfcheck)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (MSVOUError, ValueError, ArithmeticError, OSError) as exc:
        print(f"msvou {args.verb}: error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
