"""Command-line driver: ``mrfisi {sweep,bsc,generate,detect}``.

Options may also come from a ``key = value`` file given with ``--config``;
keys are option names without the leading dashes. Command-line flags
override the file.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .pbm import PbmError, load_pbm, save_pbm

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in str(text).replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _bool(text: str) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def read_config(path: str) -> dict[str, str]:
    """Parse a line-oriented ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for num, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{num}: expected key = value")
            key, value = (p.strip() for p in line.split("=", 1))
            if not key:
                raise ValueError(f"{path}:{num}: empty key")
            out[key.replace("-", "_")] = value
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file with default options")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")


def _model(p: argparse.ArgumentParser):
    p.add_argument("--beta", type=float, default=-3.0, help="true MRF beta")
    p.add_argument("--beta-assumed", type=float, default=None,
                   help="beta used by the receiver (default: true beta)")
    p.add_argument("--p0", type=float, default=0.5, help="probability of a 0 pixel")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--outer", type=int, default=5, help="outer iterations")
    p.add_argument("--inner", type=int, default=1, help="inner ISI iterations")
    p.add_argument("--weight", type=float, default=0.5, help="row/column LLR weight")
    p.add_argument("--C", dest="C", type=float, default=3.0, help="annealing constant")
    p.add_argument("--t-max", type=int, default=300, help="relaxation sweeps")
    p.add_argument("--gen-sweeps", type=int, default=200, help="MRF generation sweeps")


def _experiment(p: argparse.ArgumentParser):
    p.add_argument("--snr", type=_floats, default=(6.0, 8.0, 10.0),
                   help="SNR grid in dB, comma or space separated")
    p.add_argument("--trials", type=int, default=100, help="max trials per point")
    p.add_argument("--min-errors", type=int, default=100,
                   help="stop a point after this many errors (0: never)")
    p.add_argument("--source", choices=("mrf", "iid", "pbm"), default="mrf")
    p.add_argument("--pbm", default=None, help="source image for --source pbm")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", default=None, help="append results here (default stdout)")
    p.add_argument("--timing", type=_bool, default=True,
                   help="fill the seconds column (false leaves it empty)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mrfisi", description="MRF/ISI concatenated detection experiments")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sw = sub.add_parser("sweep", help="Monte-Carlo BER sweep")
    _common(sw)
    _model(sw)
    _experiment(sw)
    sw.add_argument("--mode", choices=("concatenated", "isi-only", "gg-alone"),
                    default="concatenated")
    sw.add_argument("--snr-reference", choices=("auto", "bipolar", "binary"), default="auto")
    sw.add_argument("--gg-blur-aware", type=_bool, default=True)

    bs = sub.add_parser("bsc", help="MRF restoration through BSC then AWGN")
    _common(bs)
    _model(bs)
    _experiment(bs)
    bs.add_argument("--p", type=float, default=0.05, help="BSC crossover probability")
    bs.add_argument("--likelihood", choices=("exact", "gaussian"), default="exact")

    gen = sub.add_parser("generate", help="write a sample MRF image as PBM")
    _common(gen)
    gen.add_argument("--beta", type=float, default=-3.0)
    gen.add_argument("--p0", type=float, default=0.5)
    gen.add_argument("--rows", type=int, default=64)
    gen.add_argument("--cols", type=int, default=64)
    gen.add_argument("--gen-sweeps", type=int, default=200)
    gen.add_argument("--plain", type=_bool, default=False, help="write P1 instead of P4")
    gen.add_argument("-o", "--output", required=True)

    det = sub.add_parser("detect", help="send one PBM image through the channel and detect")
    _common(det)
    _model(det)
    det.add_argument("-i", "--input", required=True, help="source PBM")
    det.add_argument("-o", "--output", default=None, help="write the estimate as PBM")
    det.add_argument("--snr", type=float, default=8.0)
    det.add_argument("--mode", choices=("concatenated", "isi-only", "gg-alone"),
                     default="concatenated")
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        values = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            raise ValueError(f"{args.config}: unknown option(s) {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _scenario(args, mode: str):
    from .harness import Scenario
    return Scenario(
        snr_db=args.snr, mode=mode, source=args.source, beta_true=args.beta,
        beta_assumed=args.beta_assumed, p0=args.p0, shape=(args.rows, args.cols),
        trials=args.trials, min_errors=args.min_errors, outer_iterations=args.outer,
        inner_iterations=args.inner, weight=args.weight, C=args.C, t_max=args.t_max,
        gen_sweeps=args.gen_sweeps, pbm_path=args.pbm, seed=args.seed)


def _emit(records, args):
    from .harness import format_csv, write_csv
    if args.csv:
        write_csv(records, args.csv, timing=args.timing)
    else:
        sys.stdout.write(format_csv(records, timing=args.timing))


def cmd_sweep(args) -> int:
    from .harness import run_ber_sweep
    s = replace(_scenario(args, args.mode), snr_reference=args.snr_reference,
                gg_blur_aware=args.gg_blur_aware)
    _emit(run_ber_sweep(s, workers=args.workers), args)
    return EXIT_OK


def cmd_bsc(args) -> int:
    from .harness import run_bsc_awgn
    s = replace(_scenario(args, "mrf-bsc-awgn"), bsc_p=args.p,
                bsc_likelihood=args.likelihood)
    _emit(run_bsc_awgn(s, workers=args.workers), args)
    return EXIT_OK


def cmd_generate(args) -> int:
    from .mrf import IsingParams, generate_mrf
    from .turbo import stream
    img = generate_mrf(args.rows, args.cols, IsingParams.from_priors(args.beta, args.p0),
                       args.gen_sweeps, stream(args.seed, "source"))
    save_pbm(img, args.output, raw=not args.plain)
    return EXIT_OK


def cmd_detect(args) -> int:
    from .channel import convolve2d, interleave, level_shift, make_interleaver, sigma_for_snr
    from .harness import count_bit_errors, system_config
    from .turbo import detect, detect_isi_only, gg_alone, stream

    F = load_pbm(args.input)
    s = _scenario_for_detect(args)
    noise = stream(args.seed, "noise").standard_normal(F.shape)
    if args.mode == "gg-alone":
        y = convolve2d(level_shift(F))
        sigma = sigma_for_snr(args.snr, convolve2d(F.astype(np.float64)))
        est = gg_alone(y + sigma * noise, system_config(s, sigma, args.seed))
        bers = [count_bit_errors(est, F) / F.size]
    else:
        perm = make_interleaver(*F.shape, system_config(s, 1.0, args.seed).interleaver_seed)
        y = convolve2d(level_shift(interleave(F, perm)))
        sigma = sigma_for_snr(args.snr, y)
        run = detect if args.mode == "concatenated" else detect_isi_only
        trace = run(y + sigma * noise, system_config(s, sigma, args.seed), F)
        est, bers = trace.estimate, trace.bers
    for k, b in enumerate(bers, start=1):
        print(f"iter {k}: ber {b:.6g}")
    if args.output:
        save_pbm(est, args.output)
    return EXIT_OK


def _scenario_for_detect(args):
    from .harness import Scenario
    return Scenario(snr_db=(args.snr,), beta_true=args.beta, beta_assumed=args.beta_assumed,
                    p0=args.p0, outer_iterations=args.outer, inner_iterations=args.inner,
                    weight=args.weight, C=args.C, t_max=args.t_max, seed=args.seed)


COMMANDS = {"sweep": cmd_sweep, "bsc": cmd_bsc, "generate": cmd_generate,
            "detect": cmd_detect}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"mrfisi: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        return COMMANDS[args.command](args)
    except (PbmError, OSError, ValueError) as exc:
        print(f"mrfisi: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
