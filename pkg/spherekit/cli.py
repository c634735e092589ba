# spherekit/cli.py

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from spherekit import __version__
from spherekit.config import SPHEREKIT_HOST, SPHEREKIT_PORT, configure_logging
from spherekit.decoder import decoder_forward
from spherekit.errors import SphereKitError
from spherekit.losses_metrics import alignment_error, evaluate, gradient_check, ssi_align, total_loss
from spherekit.pfm import PfmImage, read_pfm, to_depth, to_tensor, write_pfm
from spherekit.priors import WindowSpec, cle_window_distances, gcpe_forward, gspe_matrix
from spherekit.remap import brp, brp_inverse, circular_rotate, circular_rotate_inverse
from spherekit.reports import array_digest, build_report, canonical_json, fnv1a64
from spherekit.seeding import DemoSeed, SplitMix64, demo_decoder_params, demo_gcpe_params, demo_pyramid
from spherekit.sphere_core import GridShape

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class _Parser(argparse.ArgumentParser):
    """Usage errors print the full help text before exiting with status 2."""

    def error(self, message: str):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- Output helpers ---
def _emit(report: Dict[str, Any], target: str) -> None:
    text = canonical_json(report) + "\n"
    if target == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(target).write_bytes(text.encode("ascii"))
        logger.info("Wrote report to %s", target)


def _digests(**images: PfmImage) -> Dict[str, str]:
    return {name: fnv1a64(image.payload) for name, image in images.items()}


# --- Subcommands ---
def _run_brp(args: argparse.Namespace) -> int:
    image = read_pfm(args.input)
    remap = brp_inverse if args.inverse else brp
    write_pfm(remap(to_tensor(image)), args.output, scale=image.scale)
    return EXIT_OK


def _run_rotate(args: argparse.Namespace) -> int:
    image = read_pfm(args.input)
    rotate = circular_rotate_inverse if args.inverse else circular_rotate
    write_pfm(rotate(to_tensor(image), args.cols), args.output, scale=image.scale)
    return EXIT_OK


def _run_cle(args: argparse.Namespace) -> int:
    spec = WindowSpec.for_shape(GridShape(height=args.height, width=args.width), args.window)
    table = cle_window_distances(spec, args.row)
    parameters = {"height": args.height, "width": args.width, "window": args.window, "row": args.row}
    results = {"window_row": table.window_row, "n": table.n, "tokens": spec.tokens, "distances": table.dist}
    _emit(build_report("cle", parameters, results), args.json)
    return EXIT_OK


def _run_gspe(args: argparse.Namespace) -> int:
    gspe = gspe_matrix(GridShape(height=args.height, width=args.width))
    parameters = {"height": args.height, "width": args.width}
    results = {"tokens": gspe.shape_f3.size, "distances": gspe.dist}
    _emit(build_report("gspe", parameters, results), args.json)
    return EXIT_OK


def _run_align(args: argparse.Namespace) -> int:
    pred_image, gt_image = read_pfm(args.pred), read_pfm(args.gt)
    pred, gt = to_depth(pred_image), to_depth(gt_image)
    params = ssi_align(pred, gt)
    if args.out:
        write_pfm(params.apply(pred), args.out, scale=pred_image.scale)
    results = {
        "s": params.s,
        "t": params.t,
        "sse": alignment_error(pred, gt, params),
        "valid_count": int(gt.valid_mask().sum()),
    }
    _emit(build_report("align", {}, results, _digests(pred=pred_image, gt=gt_image)), args.json)
    return EXIT_OK


def _run_eval(args: argparse.Namespace) -> int:
    pred_image, gt_image = read_pfm(args.pred), read_pfm(args.gt)
    metrics = evaluate(to_depth(pred_image), to_depth(gt_image), align_first=args.align)
    report = build_report("eval", {"align": args.align}, metrics, _digests(pred=pred_image, gt=gt_image))
    _emit(report, args.json)
    return EXIT_OK


def _run_loss(args: argparse.Namespace) -> int:
    pred_image, gt_image = read_pfm(args.pred), read_pfm(args.gt)
    pred, gt = to_depth(pred_image), to_depth(gt_image)
    loss, params = total_loss(pred, gt)
    results: Dict[str, Any] = {**loss.model_dump(), "s": params.s, "t": params.t}
    if args.grad_check:
        results["grad_check"] = gradient_check(pred, gt)
    report = build_report("loss", {"grad_check": args.grad_check}, results, _digests(pred=pred_image, gt=gt_image))
    _emit(report, args.json)
    return EXIT_OK


def _run_attn_demo(args: argparse.Namespace) -> int:
    seed = DemoSeed(seed=args.seed)
    shape = GridShape(height=args.height, width=2 * args.height)
    toggles = {
        "enable_gcpe": not args.no_gcpe,
        "enable_cle": not args.no_cle,
        "enable_cr": not args.no_cr,
        "enable_brp": not args.no_brp,
    }

    rng = SplitMix64(seed.seed)
    pyramid = demo_pyramid(rng, shape)
    gcpe_params = demo_gcpe_params(rng)
    decoder_params = demo_decoder_params(rng)
    logger.info("Running attn-demo seed=%d at %dx%d, window %d", seed.seed, shape.height, shape.width, args.window)

    gcpe = gcpe_forward(pyramid, gcpe_params, gspe_matrix(pyramid.f3.shape))
    depth = decoder_forward(pyramid, gcpe.gcpes, decoder_params, window=args.window, **toggles)

    attention_maps = (gcpe.global_attention,) + gcpe.scale_attention
    stochastic_error = max(float(np.max(np.abs(a.sum(axis=-1) - 1.0))) for a in attention_maps)
    f1 = pyramid.levels[0]
    k = min(args.window, f1.shape.height) // 2
    cr_roundtrip = bool(np.array_equal(circular_rotate_inverse(circular_rotate(f1, k), k).data, f1.data))

    checks = {
        "depth_positive": bool(np.all(depth.values > 0)),
        "depth_shape_matches_input": depth.shape == shape,
        "gcpe_shapes_match_pyramid": all(
            g.shape == f.shape and g.channels == gcpe_params.model_dim for g, f in zip(gcpe.gcpes, pyramid.levels)
        ),
        "attention_rows_stochastic": stochastic_error <= 1e-6,
        "circular_rotation_exact": cr_roundtrip,
    }
    results = {
        "checks": checks,
        "checksums": {
            "depth": array_digest(depth.values),
            "gcpes": [array_digest(g.data) for g in gcpe.gcpes],
            "global_key": array_digest(gcpe.global_key),
        },
        "depth": {
            "height": depth.shape.height,
            "width": depth.shape.width,
            "min": float(depth.values.min()),
            "max": float(depth.values.max()),
            "mean": float(depth.values.mean()),
        },
        "max_row_sum_error": stochastic_error,
    }
    parameters = {"seed": seed.seed, "height": shape.height, "width": shape.width, "window": args.window, **toggles}
    _emit(build_report("attn-demo", parameters, results), args.json)
    return EXIT_OK


def _run_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from spherekit.service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# --- Parser ---
def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spherekit", description="Spherical-geometry kernels for 360-degree depth maps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("brp", help="bipolar re-projection of a PFM (W = 2H)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--inverse", action="store_true", help="map re-projected poles back")
    p.set_defaults(handler=_run_brp)

    p = sub.add_parser("rotate", help="circular column rotation of a PFM")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--inverse", action="store_true")
    p.set_defaults(handler=_run_rotate)

    p = sub.add_parser("cle", help="dump the window distance table of one window row")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--json", default="-", help="output path, '-' for stdout")
    p.set_defaults(handler=_run_cle)

    p = sub.add_parser("gspe", help="dump the all-pairs distance matrix of a grid")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--json", default="-")
    p.set_defaults(handler=_run_gspe)

    p = sub.add_parser("align", help="scale-and-shift alignment of pred to gt")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="write the aligned prediction here")
    p.add_argument("--json", default="-")
    p.set_defaults(handler=_run_align)

    p = sub.add_parser("eval", help="depth metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--align", action="store_true", help="align pred to gt before scoring")
    p.add_argument("--json", default="-")
    p.set_defaults(handler=_run_eval)

    p = sub.add_parser("loss", help="scale-and-shift-invariant loss")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--grad-check", action="store_true", help="compare the analytic gradient to finite differences")
    p.add_argument("--json", default="-")
    p.set_defaults(handler=_run_loss)

    p = sub.add_parser("attn-demo", help="seeded end-to-end run of the position embeddings and decoder")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--window", type=int, default=8)
    p.add_argument("--no-cle", action="store_true")
    p.add_argument("--no-cr", action="store_true")
    p.add_argument("--no-brp", action="store_true")
    p.add_argument("--no-gcpe", action="store_true")
    p.add_argument("--json", default="-")
    p.set_defaults(handler=_run_attn_demo)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default=SPHEREKIT_HOST)
    p.add_argument("--port", type=int, default=SPHEREKIT_PORT)
    p.set_defaults(handler=_run_serve)

    return parser


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    configure_logging()
    try:
        return args.handler(args)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or exc.title
        print(f"spherekit {args.command}: error: {location}: {first['msg']}", file=sys.stderr)
    except (SphereKitError, OSError, ValueError) as exc:
        print(f"spherekit {args.command}: error: {exc}", file=sys.stderr)
    return EXIT_DATA


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(cli_main(argv))
