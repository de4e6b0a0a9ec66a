"""Command-line front end: ``watersic {bench-rd,quantize,dequantize,waterfill,selftest}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import selftest
from .bench import BenchConfig, records_to_csv, run_bench
from .container import decode_container, encode_container
from .covariance import CovarianceSet
from .errors import WaterSICError
from .matcore import read_wsmx, reduce, write_wsmx
from .pipeline import PipelineConfig, quantize_layer, quantize_layer_at_rate
from .theory import Spectrum, waterfill_rate

log = logging.getLogger("watersic")


def _on_off(value: str) -> bool:
    v = value.lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _seeds(value: str):
    """``10`` means seeds 0..9; ``3,7,11`` lists them explicitly."""
    if "," in value:
        return tuple(int(s) for s in value.split(","))
    count = int(value)
    if count < 1:
        raise argparse.ArgumentTypeError("need at least one seed")
    return tuple(range(count))


def _floats(value: str):
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from None


def _positive_int(value: str) -> int:
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="watersic", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench-rd", help="synthetic Gaussian rate-distortion benchmark (CSV)")
    b.add_argument("-a", "--rows", type=_positive_int, default=8192)
    b.add_argument("-n", "--cols", type=_positive_int, default=128)
    b.add_argument("--rate", type=float, action="append", help="target bits/weight (repeatable)")
    b.add_argument("--cond", type=float, default=1e3, help="condition number of Σ_X")
    b.add_argument("--seeds", type=_seeds, default=tuple(range(10)))
    b.add_argument("--spacing", choices=("watersic", "uniform", "both"), default="both")
    b.add_argument("--lmmse", type=_on_off, default=False)
    b.add_argument("--rescaler", type=_on_off, default=False)
    b.add_argument("--sigma-w", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=0.0)
    b.add_argument("--jobs", type=_positive_int, default=1)
    b.add_argument("--csv", type=Path, help="write CSV here instead of stdout")

    q = sub.add_parser("quantize", help="quantize one layer into a WSQZ container")
    q.add_argument("--weights", type=Path, required=True, help="W as a WSMX matrix (a × n)")
    q.add_argument("--sigma-x", type=Path, required=True)
    q.add_argument("--sigma-xhat", type=Path)
    q.add_argument("--sigma-x-xhat", type=Path)
    q.add_argument("--sigma-delta-xhat", type=Path)
    target = q.add_mutually_exclusive_group(required=True)
    target.add_argument("--rate", type=float, help="target entropy in bits per live weight")
    target.add_argument("--scale-c", type=float, help="fixed lattice scale c")
    q.add_argument("--spacing", choices=("watersic", "uniform"), default="watersic")
    q.add_argument("--lmmse", type=_on_off, default=True)
    q.add_argument("--rescaler", type=_on_off, default=True)
    q.add_argument("--delta", type=float, default=1e-4)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", type=Path, required=True)

    d = sub.add_parser("dequantize", help="expand a WSQZ container into a WSMX matrix")
    d.add_argument("container", type=Path)
    d.add_argument("--out", type=Path, required=True)

    w = sub.add_parser("waterfill", help="reverse-waterfilling (R, D, τ) for given eigenvalues")
    w.add_argument("--lambdas", type=_floats, required=True)
    w.add_argument("--distortion", type=float, required=True)
    w.add_argument("--sigma-w", type=float, default=1.0)

    s = sub.add_parser("selftest", help="run the built-in invariant checks")
    s.add_argument("--seed", type=int, default=0)
    return parser


def cmd_bench_rd(args) -> int:
    config = BenchConfig(
        n=args.cols,
        a=args.rows,
        rates=tuple(args.rate or [6.0]),
        cond=args.cond,
        seeds=args.seeds,
        spacing=args.spacing,
        lmmse=args.lmmse,
        rescaler=args.rescaler,
        sigma_w=args.sigma_w,
        delta=args.delta,
    )
    text = records_to_csv(run_bench(config, jobs=args.jobs))
    if args.csv:
        args.csv.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _load(path, what):
    try:
        return read_wsmx(path)
    except FileNotFoundError:
        raise SystemExit(f"error: {what} file {path} does not exist") from None
    except ValueError as exc:
        raise SystemExit(f"error: cannot read {what}: {exc}") from None


def layer_stats(layer, w, sigma_x) -> dict:
    """JSON-ready summary; the gap is measured against a Gaussian model of W."""
    live = layer.mask.live
    w_live = reduce(w, layer.mask, "cols")
    gap = None
    try:
        spec = Spectrum.from_covariance(reduce(sigma_x, layer.mask, "both"), float(np.mean(w_live**2)))
        gap = layer.entropy - waterfill_rate(spec, layer.achieved_distortion).rate
    except (ValueError, WaterSICError) as exc:
        log.warning("gap unavailable: %s", exc)
    return {
        "rate": layer.effective_rate,
        "entropy": layer.entropy,
        "distortion": layer.achieved_distortion,
        "gap_bits": gap,
        "dead_features": int((~live).sum()),
    }


def cmd_quantize(args) -> int:
    w = _load(args.weights, "weights")
    extra = {
        k: _load(getattr(args, k), k.replace("_", "-"))
        for k in ("sigma_xhat", "sigma_x_xhat", "sigma_delta_xhat")
        if getattr(args, k) is not None
    }
    covs = CovarianceSet.create(_load(args.sigma_x, "sigma-x"), **extra)
    if args.rate is not None:
        cfg = PipelineConfig(
            delta=args.delta, rescaler=args.rescaler, lmmse=args.lmmse, spacing_mode=args.spacing, seed=args.seed
        )
        layer = quantize_layer_at_rate(w, covs, args.rate, cfg)
    else:
        layer = quantize_layer(
            w, covs, args.scale_c, delta=args.delta, rescaler=args.rescaler, lmmse=args.lmmse, spacing_mode=args.spacing
        )
    args.out.write_bytes(encode_container(layer))
    print(json.dumps(layer_stats(layer, w, covs.sigma_x), sort_keys=True))
    return 0


def cmd_dequantize(args) -> int:
    try:
        blob = args.container.read_bytes()
    except FileNotFoundError:
        raise SystemExit(f"error: container {args.container} does not exist") from None
    write_wsmx(args.out, decode_container(blob).dequantize())
    return 0


def cmd_waterfill(args) -> int:
    spec = Spectrum(args.lambdas, args.sigma_w**2)
    wl = waterfill_rate(spec, args.distortion)
    print(json.dumps({"rate": wl.rate, "distortion": wl.distortion, "tau": wl.tau}, sort_keys=True))
    return 0


def cmd_selftest(args) -> int:
    failed = 0
    for name, ok, detail in selftest.run(args.seed):
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        failed += not ok
    return 1 if failed else 0


COMMANDS = {
    "bench-rd": cmd_bench_rd,
    "quantize": cmd_quantize,
    "dequantize": cmd_dequantize,
    "waterfill": cmd_waterfill,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except WaterSICError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
