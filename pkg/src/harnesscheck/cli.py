"""Command-line entry point.

Subcommands: train (build a profile from sample frames), inspect (score
frames against a profile), gen (render synthetic corpora with ground-truth
manifests), serve (host the REST service).

Exit codes: 0 Pass/success, 1 Fail, 2 Unclear, 3 usage or config error,
4 I/O or profile error.
"""
from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import (
    CorruptProfile,
    FormatVersionUnsupported,
    HarnessCheckError,
    IndexOutOfRange,
    ProfileVersionMismatch,
    SampleCountTooLow,
    SpecInvalid,
    TrainingSampleUnclear,
    WireCountInconsistent,
)
from .imaging import read_png, write_png
from .profile import (
    Verdict,
    inspect as run_inspect,
    load_profile,
    result_to_dict,
    save_profile,
    train as run_train,
    view_from_config,
)
from .synth import HarnessSpec, generate, permute_defect

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_UNCLEAR = 2
EXIT_USAGE = 3
EXIT_IO = 4

_VERDICT_CODES = {Verdict.PASS: EXIT_PASS, Verdict.FAIL: EXIT_FAIL, Verdict.UNCLEAR: EXIT_UNCLEAR}


def _load_views_config(path: str) -> tuple[str, list]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    views = [view_from_config(v) for v in doc["views"]]
    return doc.get("harness_type", "default"), views


def cmd_train(args: argparse.Namespace) -> int:
    try:
        harness_type, views = _load_views_config(args.views)
    except OSError as exc:
        print(f"error: cannot read views config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"error: malformed views config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.harness_type:
        harness_type = args.harness_type
    if len(args.samples) != len(views):
        print(
            f"error: {len(args.samples)} sample dir(s) for {len(views)} view(s)",
            file=sys.stderr,
        )
        return EXIT_USAGE

    names_per_view: list[list[str]] = []
    for d in args.samples:
        names = sorted(p.name for p in Path(d).glob("*.png"))
        names_per_view.append(names)
    if len({tuple(n) for n in names_per_view}) > 1:
        print("error: sample basenames differ across view directories", file=sys.stderr)
        return EXIT_USAGE

    try:
        samples = [
            [read_png(Path(d) / name) for name in names]
            for d, names in zip(args.samples, names_per_view)
        ]
    except OSError as exc:
        print(f"error: cannot read sample frame: {exc}", file=sys.stderr)
        return EXIT_IO

    def progress(view_id: str, index: int, note: str) -> None:
        vi = next(i for i, v in enumerate(views) if v.view_id == view_id)
        print(f"  [{view_id}] {names_per_view[vi][index]}: {note}")

    try:
        profile = run_train(
            samples,
            views,
            harness_type=harness_type,
            profile_id=args.profile_id,
            provenance=[f"{v.view_id}/{n}" for v, ns in zip(views, names_per_view) for n in ns],
            progress=progress,
        )
    except TrainingSampleUnclear as exc:
        vi = next(i for i, v in enumerate(views) if v.view_id == exc.view_id)
        name = names_per_view[vi][exc.sample_index]
        print(f"error: sample {name!r} ({exc})", file=sys.stderr)
        return EXIT_IO
    except (SampleCountTooLow, WireCountInconsistent) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        save_profile(profile, args.out)
    except OSError as exc:
        print(f"error: cannot write profile: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"profile {profile.profile_id} ({harness_type}) written to {args.out}")
    return EXIT_PASS


def cmd_inspect(args: argparse.Namespace) -> int:
    try:
        profile = load_profile(args.profile)
    except (CorruptProfile, FormatVersionUnsupported, OSError) as exc:
        print(f"error: cannot load profile: {exc}", file=sys.stderr)
        return EXIT_IO
    if len(args.frames) != len(profile.views):
        print(
            f"error: profile has {len(profile.views)} view(s), got {len(args.frames)} frame(s)",
            file=sys.stderr,
        )
        return EXIT_USAGE
    try:
        frames = [read_png(p) for p in args.frames]
    except OSError as exc:
        print(f"error: cannot read frame: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        result = run_inspect(frames, profile)
    except ProfileVersionMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    doc = result_to_dict(result)
    if args.report:
        try:
            Path(args.report).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        except OSError as exc:
            print(f"error: cannot write report: {exc}", file=sys.stderr)
            return EXIT_IO
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        for vr in result.views:
            if not vr.segmented:
                print(f"view {vr.view_id}: segmentation failed ({vr.segmentation_reason})")
            else:
                orient = f", orientation {vr.orientation.value}" if vr.orientation else ""
                print(f"view {vr.view_id}: {len(vr.wires)} wires{orient}")
                for w in vr.wires:
                    print(
                        f"  wire {w.index}: {w.verdict.value:9s}"
                        f" mse_rgb={w.score.mse_rgb:10.3f} mse_hsv={w.score.mse_hsv:.6f}"
                    )
        print(f"overall: {result.overall.value}")
        print(result.message)
    return _VERDICT_CODES[result.overall]


def _parse_defect(text: str) -> tuple[str, tuple[int, ...]]:
    kind, _, argstr = text.partition(":")
    arities = {"swap": 2, "reverse_connector": 0, "shift_wire": 2, "drop_wire": 1}
    if kind not in arities:
        raise ValueError(
            f"unknown defect kind {kind!r} (choose from {', '.join(arities)})"
        )
    params = tuple(int(a) for a in argstr.split(",")) if argstr else ()
    if len(params) != arities[kind]:
        raise ValueError(
            f"defect {kind!r} takes {arities[kind]} parameter(s), got {len(params)}"
        )
    return kind, params


def _expected_overall(spec: HarnessSpec, defect: Optional[tuple[str, tuple[int, ...]]]) -> str:
    if defect is None:
        return "Pass"
    kind, params = defect
    if kind == "swap":
        return "Pass" if params[0] == params[1] else "Fail"
    if kind == "reverse_connector":
        return "Fail" if spec.connector is not None else "Pass"
    if kind == "shift_wire":
        return "Pass"
    return "FailOrUnclear"  # drop_wire: count mismatch surfaces as Fail or Unclear


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            base = HarnessSpec.from_dict(json.load(fh))
    except OSError as exc:
        print(f"error: cannot read spec: {exc}", file=sys.stderr)
        return EXIT_IO
    except (json.JSONDecodeError, KeyError, TypeError, SpecInvalid) as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
        return EXIT_USAGE

    defect = None
    if args.defect:
        try:
            defect = _parse_defect(args.defect)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output dir: {exc}", file=sys.stderr)
        return EXIT_IO

    seed0 = args.seed if args.seed is not None else base.seed
    items = []
    import dataclasses

    for i in range(args.count):
        spec = dataclasses.replace(base, seed=seed0 + i)
        try:
            if defect is not None:
                spec = permute_defect(spec, defect[0], *defect[1])
        except (IndexOutOfRange, SpecInvalid) as exc:
            print(f"error: invalid spec: {exc}", file=sys.stderr)
            return EXIT_USAGE
        frame, _ = generate(spec)
        name = f"{i:06d}.png"
        try:
            write_png(frame, out / name)
        except OSError as exc:
            print(f"error: cannot write image: {exc}", file=sys.stderr)
            return EXIT_IO
        items.append(
            {"file": name, "seed": spec.seed, "expected_overall": _expected_overall(spec, defect)}
        )

    manifest = {"spec": args.spec, "defect": args.defect, "items": items}
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.count} image(s) + manifest to {out}")
    return EXIT_PASS


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app
    from .sessions import SessionStore

    try:
        token = Path(args.auth_token_file).read_text(encoding="utf-8").strip()
    except OSError as exc:
        print(f"error: cannot read token file: {exc}", file=sys.stderr)
        return EXIT_IO
    if not token:
        print("error: token file is empty", file=sys.stderr)
        return EXIT_USAGE

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((args.host, args.port))
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        sock.close()
        return EXIT_IO
    sock.listen(128)

    store = SessionStore(args.sessions_db)
    console = Path(args.console_dir) if args.console_dir else None
    app = create_app(Path(args.profiles_dir), store, token, console_dir=console)
    config = uvicorn.Config(app, host=args.host, port=args.port, log_level="info")
    server = uvicorn.Server(config)
    server.run(sockets=[sock])
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harnesscheck", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="build a profile from ≥5 sample frames per view")
    p.add_argument("--samples", nargs="+", required=True, metavar="DIR",
                   help="one directory of PNG frames per view, in view order")
    p.add_argument("--views", required=True, help="view configuration JSON file")
    p.add_argument("--out", required=True, help="output profile path")
    p.add_argument("--harness-type", default=None)
    p.add_argument("--profile-id", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("inspect", help="score frames against a trained profile")
    p.add_argument("--profile", required=True)
    p.add_argument("--frames", nargs="+", required=True, metavar="PNG",
                   help="one frame per view, in profile view order")
    p.add_argument("--report", default=None, help="write the JSON result here")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen", help="render a synthetic corpus with a manifest")
    p.add_argument("--spec", required=True, help="harness spec JSON file")
    p.add_argument("--defect", default=None,
                   help="defect to apply: swap:I,J | reverse_connector | shift_wire:I,DX | drop_wire:I")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="base seed (default: spec seed)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("serve", help="run the inspection REST service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--profiles-dir", default="profiles")
    p.add_argument("--auth-token-file", required=True)
    p.add_argument("--sessions-db", default="sessions")
    p.add_argument("--console-dir", default=None, help="static console assets to mount at /console")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; remap the latter.
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except HarnessCheckError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
