"""Command-line interface.

Every subcommand prints one JSON document on stdout.  Failures print
``{"error": ..., "message": ...}`` on stderr and exit with 2 (bad input) or
3 (numerical failure).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .errors import NumericalError, ValidationError
from .gaussian import (
    cholesky_factor,
    isserlis_moment,
    load_covariance,
    mc_moment,
    read_covariance,
    read_factor,
    _read_json,
    vector_moment,
)
from .isotropic import IsotropicSampler, covariance_isotropy_check, estimate_ck
from .pairings import enumerate_pair_partitions, pair_partition_count, render_wick_expansion
from .tensor import (
    expectation_via_pairings,
    expectation_via_sigma_contraction,
    mc_tensor_expectation,
    read_tensor,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
MAX_LISTED_N = 20


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive, default=1,
                        help="worker threads; results do not depend on this")

    parser = _Parser(prog="isserlis", description="Exact and Monte Carlo Gaussian moments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pairings", parents=[common], help="enumerate or count PP(n)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--count-only", action="store_true")
    p.add_argument("--limit", type=int)

    p = sub.add_parser("moment", parents=[common], help="E(Y_i1 ... Y_in) by Isserlis' formula")
    p.add_argument("--sigma", required=True)
    p.add_argument("--indices", type=_int_list, required=True)

    p = sub.add_parser("vecmoment", parents=[common], help="E(a_1.Y ... a_n.Y)")
    p.add_argument("--sigma", required=True)
    p.add_argument("--vectors", required=True)

    p = sub.add_parser("tensor-expect", parents=[common], help="E(T(Y, ..., Y))")
    p.add_argument("--tensor", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sigma")
    src.add_argument("--factor")
    p.add_argument("--method", choices=("pairings", "contraction", "mc"), default="pairings")
    p.add_argument("--seed", type=_seed)
    p.add_argument("--samples", type=_positive)
    p.add_argument("--save-factor", metavar="FILE",
                   help="write the factor A used by the pairings/mc methods as JSON")

    p = sub.add_parser("ck", parents=[common], help="estimate c_k along a direction")
    p.add_argument("--dist", required=True)
    p.add_argument("--dim", type=_positive, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--samples", type=_positive, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--direction", type=_float_list)

    p = sub.add_parser("isotropy", parents=[common], help="check E(X X^T) = lambda I")
    p.add_argument("--dist", required=True)
    p.add_argument("--dim", type=_positive, required=True)
    p.add_argument("--samples", type=_positive, required=True)
    p.add_argument("--seed", type=_seed, required=True)

    p = sub.add_parser("verify", parents=[common], help="analytic vs Monte Carlo moment")
    p.add_argument("--sigma", required=True)
    p.add_argument("--indices", type=_int_list, required=True)
    p.add_argument("--samples", type=_positive, required=True)
    p.add_argument("--seed", type=_seed, required=True)

    p = sub.add_parser("expand", parents=[common], help="render the Wick expansion")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--names")
    p.add_argument("--format", choices=("text", "latex"), default="text")
    return parser


def _cmd_pairings(args) -> dict:
    if args.n < 0:
        raise ValidationError("--n must be non-negative")
    if args.count_only:
        return {"count": pair_partition_count(args.n)}
    if args.n > MAX_LISTED_N and args.limit is None:
        raise ValidationError(f"--n above {MAX_LISTED_N} needs --count-only or --limit")
    if args.limit is not None and args.limit < 0:
        raise ValidationError("--limit must be non-negative")
    listed = []
    for p in enumerate_pair_partitions(args.n):
        if args.limit is not None and len(listed) >= args.limit:
            break
        listed.append(p.to_json())
    return {"n": args.n, "count": pair_partition_count(args.n), "pairings": listed}


def _cmd_moment(args) -> dict:
    cov = read_covariance(args.sigma)
    return isserlis_moment(cov, args.indices, threads=args.threads).to_json()


def _cmd_vecmoment(args) -> dict:
    cov = read_covariance(args.sigma)
    data = _read_json(args.vectors)
    vectors = data.get("vectors") if isinstance(data, dict) else None
    if vectors is None:
        raise ValidationError('vectors JSON needs a "vectors" list')
    return vector_moment(cov, vectors, threads=args.threads).to_json()


def _cmd_tensor_expect(args) -> dict:
    t = read_tensor(args.tensor)
    if args.sigma:
        cov = read_covariance(args.sigma)
        factor = None
    else:
        factor = read_factor(args.factor)
        cov = None
    if args.method == "contraction":
        if cov is None:
            cov = load_covariance(factor.covariance())
        result = expectation_via_sigma_contraction(t, cov)
    else:
        if factor is None:
            factor = cholesky_factor(cov)
        if args.save_factor:
            _write_json(args.save_factor, factor.to_json())
        if args.method == "pairings":
            result = expectation_via_pairings(t, factor)
        else:
            if args.seed is None or args.samples is None:
                raise ValidationError("--method mc needs --seed and --samples")
            result = mc_tensor_expectation(t, factor, args.seed, args.samples, threads=args.threads)
    out = result.to_json()
    out["method"] = args.method
    return out


def _write_json(path: str, data) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(data, fh)
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None


def _sampler(args) -> IsotropicSampler:
    return IsotropicSampler.from_spec(args.dist, args.dim, args.seed)


def _cmd_ck(args) -> dict:
    sampler = _sampler(args)
    direction = args.direction
    if direction is None:
        direction = [1.0] + [0.0] * (args.dim - 1)
    return estimate_ck(sampler, args.k, direction, args.samples, threads=args.threads).to_json()


def _cmd_isotropy(args) -> dict:
    return covariance_isotropy_check(_sampler(args), args.samples, threads=args.threads).to_json()


def _cmd_verify(args) -> dict:
    cov = read_covariance(args.sigma)
    exact = isserlis_moment(cov, args.indices, threads=args.threads)
    mc = mc_moment(cholesky_factor(cov), args.indices, args.seed, args.samples, threads=args.threads)
    diff = exact.value - mc.value
    if mc.stderr > 0:
        z = diff / mc.stderr
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return {
        "analytic": exact.to_json(),
        "monte_carlo": mc.to_json(),
        "z": z if math.isfinite(z) else None,
    }


def _cmd_expand(args) -> dict:
    names = args.names.split(",") if args.names else None
    return {"expansion": render_wick_expansion(args.n, names, args.format)}


COMMANDS = {
    "pairings": _cmd_pairings,
    "moment": _cmd_moment,
    "vecmoment": _cmd_vecmoment,
    "tensor-expect": _cmd_tensor_expect,
    "ck": _cmd_ck,
    "isotropy": _cmd_isotropy,
    "verify": _cmd_verify,
    "expand": _cmd_expand,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def run(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        out = COMMANDS[args.command](args)
    except ValidationError as exc:
        return _fail("validation", str(exc), EXIT_INVALID)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        return _fail("numerical", str(exc), EXIT_NUMERICAL)
    sys.stdout.write(json.dumps(out) + "\n")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
