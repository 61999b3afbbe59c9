"""The ``paramball`` command line.

Exit codes: 0 ok, 1 gradient check failed, 2 attack not fooled within budget,
3 usage error, 4 bad input file or validation error, 5 runtime failure
(classifier provider, attack).
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, imageio, lighting, toyworld
from .adversary import AttackConfig, run_attack
from .classifier import ToyClassifier, augment_images
from .errors import AttackError, MissingFitError, ProtocolError
from .gradcheck import SPACES as CHECK_SPACES
from .gradcheck import gradcheck
from .mesh import save_obj
from .protocol import connect
from .scene import SceneError, load_scene

log = logging.getLogger("paramball")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_NOT_FOOLED = 2
EXIT_USAGE = 3
EXIT_INPUT = 4
EXIT_RUNTIME = 5

IMAGE_FORMATS = ("png", "ppm", "pfm", "raw")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as "not fooled"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolution(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return w, h


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _out_dir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map_views(fn, n, threads):
    if threads <= 1 or n <= 1:
        return [fn(v) for v in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


# ---------------------------------------------------------------------------
# Verbs


def cmd_render(args):
    scene = load_scene(args.scene, args.resolution)
    out = _out_dir(args, "render")
    ext = "raw" if args.format == "raw" else args.format

    def one(v):
        img = scene.render(v)
        return imageio.save_image(img, out / f"view{v:02d}.{ext}")

    for path in _map_views(one, len(scene.cameras), args.threads):
        print(path)
    return EXIT_OK


def cmd_project_env(args):
    env = imageio.load_environment(args.env)
    coeffs = lighting.project_environment(env, args.bands)
    out = Path(args.out or Path(args.env).with_suffix(".shc"))
    lighting.save_shc(coeffs, out)
    print(f"{out}: {len(coeffs)} coefficients, {args.bands} bands")
    return EXIT_OK


def cmd_skylight(args):
    fit = lighting.load_fit(args.fit) if args.fit else lighting.load_fit()
    params = lighting.SkylightParams(args.theta_s, args.phi_s, args.turbidity)
    coeffs = lighting.skylight_sh(params, fit)
    out = Path(args.out or "skylight.shc")
    lighting.save_shc(coeffs, out)
    print(f"{out}: theta_s={params.theta_s} phi_s={params.phi_s} turbidity={params.turbidity}")
    return EXIT_OK


def cmd_gradcheck(args):
    scene = load_scene(args.scene, args.resolution)
    rng = np.random.default_rng(args.seed)
    spaces = CHECK_SPACES if args.space == "all" else (args.space,)
    if args.space == "all" and scene.skylight is None:
        spaces = tuple(s for s in spaces if s != "skylight")
    status = EXIT_OK
    for space in spaces:
        report = gradcheck(scene, space, args.samples, rng)
        print(report)
        if not report.passed:
            status = EXIT_CHECK_FAILED
    return status


def _classifier(args):
    if args.provider:
        if not args.classes:
            raise UsageError("--provider needs --classes")
        return connect(args.provider, args.classes, args.timeout)
    path = args.classifier or toyworld.CLASSIFIER_FILE
    return ToyClassifier.load(path)


def _save_params(trace, scene, space, out):
    if space == "lighting":
        path = out / "final_lighting.shc"
        lighting.save_shc(trace.final_params, path)
    elif space == "geometry":
        path = out / "final_mesh.obj"
        save_obj(scene.mesh.with_vertices(trace.final_params), path)
    else:
        path = out / "final_skylight.json"
        theta, phi, tau = (float(v) for v in trace.final_params)
        path.write_text(json.dumps({"theta_s": theta, "phi_s": phi, "turbidity": tau}) + "\n")
    return path


def _final_scene(scene, trace, space):
    if space == "lighting":
        return scene.with_lighting(trace.final_params)
    if space == "geometry":
        return scene.with_mesh(scene.mesh.with_vertices(trace.final_params))
    return scene.with_lighting(lighting.skylight_sh(trace.final_params, scene.fit))


def cmd_attack(args):
    scene = load_scene(args.scene, args.resolution)
    label = args.label if args.label is not None else scene.label
    if label is None:
        raise UsageError("the scene has no label; pass --label")
    if args.illusion is not None and args.target is not None:
        raise UsageError("--illusion and --target are exclusive")
    target = args.illusion if args.illusion is not None else args.target
    eps = args.eps if args.eps is not None else (0.002 if args.space == "geometry" else 0.1)
    config = AttackConfig(label, target, args.gamma, args.max_iter, eps, args.space, args.views)
    out = _out_dir(args, "attack")
    clf = _classifier(args)
    try:
        trace = run_attack(scene, clf, config)
    finally:
        if hasattr(clf, "close"):
            clf.close()
    trace.to_jsonl(out / "trace.jsonl")
    final = _final_scene(scene, trace, args.space)
    for v in config.view_indices(len(scene.cameras)):
        imageio.save_image(scene.render(v), out / f"before_view{v:02d}.png")
        imageio.save_image(final.render(v), out / f"after_view{v:02d}.png")
    params = _save_params(trace, scene, args.space, out)
    last = trace.records[-1] if trace.records else trace.initial
    print(f"{'fooled' if trace.fooled else 'not fooled'} after {len(trace)} iterations; predicted {last['predicted']}")
    print(f"wrote {out / 'trace.jsonl'} and {params}")
    return EXIT_OK if trace.fooled else EXIT_NOT_FOOLED


def cmd_augment(args):
    if args.scenes:
        bank = [load_scene(p, args.resolution) for p in args.scenes]
        if any(s.label is None for s in bank):
            raise UsageError("every scene in the bank needs a label")
        bank = [s.single(s.mesh, cam, s.lighting, bg, label=s.label) for s in bank for cam, bg in zip(s.cameras, s.backgrounds)]
    else:
        bank = toyworld.scene_bank()
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    rng = np.random.default_rng(args.seed)
    clf = None if args.mode == "random" else _classifier(args)
    out = _out_dir(args, "augment")
    source = None if clf is None else str(args.provider or args.classifier or toyworld.CLASSIFIER_FILE)
    try:
        images, labels, lights = augment_images(clf, bank, args.mode, args.count, rng)
    finally:
        if hasattr(clf, "close"):
            clf.close()
    with open(out / "manifest.jsonl", "w") as fh:
        for i, (img, label, U) in enumerate(zip(images, labels, lights)):
            path = imageio.save_image(img, out / f"{i:05d}.png")
            row = {
                "path": path.name,
                "label": int(label),
                "lighting": np.asarray(U).tolist(),
                "provenance": {"mode": args.mode, "seed": args.seed, "index": i, "classifier": source},
            }
            fh.write(json.dumps(row) + "\n")
    print(f"wrote {len(images)} images and {out / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_info(args):
    print(f"paramball {__version__}")
    print(f"default lighting: {lighting.DEFAULT_LIGHTING_FILE} ({lighting.DEFAULT_BANDS} bands)")
    fit = lighting.load_fit()
    print(f"skylight fit: {lighting.SKY_FIT_FILE} sha256 {lighting.file_sha256(lighting.SKY_FIT_FILE)} turbidity {fit.turbidity_range}")
    clf = toyworld.bundled_classifier()
    print(f"toy classifier: {toyworld.CLASSIFIER_FILE} input {clf.image_shape} hidden {clf.hidden} classes {toyworld.CLASSES}")
    if args.scene:
        s = load_scene(args.scene, args.resolution)
        print(f"scene: {s.mesh.n_vertices} vertices, {s.mesh.n_faces} faces, {len(s.cameras)} cameras, label {s.label}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _global_flags(p, suppress=False):
    # the root copies are suppressed so they never overwrite values given after the verb
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads across views")
    p.add_argument("--out", default=d(None), help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common)

    parser = _Parser(prog="paramball", description="Parametric adversarial rendering toolkit")
    _global_flags(parser, suppress=True)
    parser.add_argument("--version", action="version", version=f"paramball {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def verb(name, fn, help_):
        p = sub.add_parser(name, help=help_, parents=[common])
        p.set_defaults(fn=fn)
        return p

    p = verb("render", cmd_render, "render every camera of a scene")
    p.add_argument("scene")
    p.add_argument("--resolution", type=_resolution)
    p.add_argument("--format", choices=IMAGE_FORMATS, default="png")

    p = verb("project-env", cmd_project_env, "project an equirectangular map onto SH")
    p.add_argument("env")
    p.add_argument("--bands", type=int, default=lighting.DEFAULT_BANDS)

    p = verb("skylight", cmd_skylight, "SH coefficients of a fitted skylight")
    p.add_argument("--theta-s", type=float, required=True)
    p.add_argument("--phi-s", type=float, default=0.0)
    p.add_argument("--turbidity", type=float, default=3.0)
    p.add_argument("--fit", help="alternative .psky fit")

    p = verb("gradcheck", cmd_gradcheck, "compare analytic Jacobians with finite differences")
    p.add_argument("scene")
    p.add_argument("--space", choices=CHECK_SPACES + ("all",), default="all")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--resolution", type=_resolution)

    def classifier_flags(p):
        p.add_argument("--classifier", help="saved toy classifier (.npz); default is the bundled one")
        p.add_argument("--provider", help="external gradient provider: host:port or a command line")
        p.add_argument("--classes", type=int, help="class count for --provider")
        p.add_argument("--timeout", type=float, default=30.0)

    p = verb("attack", cmd_attack, "run a parametric adversarial attack")
    p.add_argument("scene")
    p.add_argument("--space", choices=("lighting", "geometry", "skylight"), default="lighting")
    p.add_argument("--eps", type=float, help="norm-ball radius (default 0.1, geometry 0.002)")
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--max-iter", type=int, default=30)
    p.add_argument("--label", type=int, help="true label (default: the scene's)")
    p.add_argument("--target", type=int, help="targeted label")
    p.add_argument("--views", type=_int_list, help="attack these camera indices jointly")
    p.add_argument("--illusion", type=_int_list, help="one target label per attacked view")
    p.add_argument("--resolution", type=_resolution)
    classifier_flags(p)

    p = verb("augment", cmd_augment, "render a labeled dataset under random or adversarial lighting")
    p.add_argument("--mode", choices=("random", "adversarial"), default="random")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--scenes", nargs="*", help="labeled scene files; default is the toy bank")
    p.add_argument("--resolution", type=_resolution)
    classifier_flags(p)

    p = verb("info", cmd_info, "describe bundled data and optionally a scene")
    p.add_argument("scene", nargs="?")
    p.add_argument("--resolution", type=_resolution)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"paramball: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SceneError, MissingFitError, FileNotFoundError, ValueError) as exc:
        print(f"paramball: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ProtocolError, AttackError, OSError, RuntimeError) as exc:
        print(f"paramball: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
