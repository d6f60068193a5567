"""Command-line front end.

Exit status: 0 on success, 1 on a domain error (its name is printed to
stderr), 2 on usage or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import VitalsError
from .identity import EmbeddingGallery, enroll, identify, load_gallery, save_gallery
from .pos import PosConfig, pos_pipeline, serialize_pulse
from .service import ServiceConfig, analyze_document, report_body, serve_batch
from .synth import synth_trace
from .trace import parse_trace, prepare_series, serialize_trace
from .vitals import canonical_json

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <lo>:<hi> in Hz, got {text!r}") from None
    return lo, hi


def _bind(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <host>:<port>, got {text!r}") from None


def _add_signal_opts(p: argparse.ArgumentParser):
    p.add_argument("--fs", type=float, help="resampling rate in Hz (default: estimated frame rate)")
    p.add_argument("--window", type=float, help="POS window length in seconds (default 1.6)")
    p.add_argument("--band", type=_band, help="pulse band as lo:hi in Hz (default 0.7:4.0)")
    p.add_argument("--config", help="JSON file with flag-equivalent keys (fs, window, band, weights, gallery)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rppg-vitals", description="rPPG pulse extraction, vitals and identification")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="full vitals report from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default="-")
    _add_signal_opts(p)

    p = sub.add_parser("pos", help="pulse signal only")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default="-")
    _add_signal_opts(p)

    p = sub.add_parser("synth", help="generate a synthetic trace with ground truth")
    p.add_argument("--hr", type=float, required=True)
    p.add_argument("--duration", type=float, required=True)
    p.add_argument("--fs", type=float, required=True)
    p.add_argument("--amplitude", type=float, default=0.01)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.add_argument("--truth", help="ground-truth JSON path (default: <out>.truth.json)")

    p = sub.add_parser("enroll", help="add a subject embedding to a gallery file")
    p.add_argument("--gallery", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--vector", required=True, help="JSON array, or path to a file holding one")
    p.add_argument("--k", type=int, help="neighbor count for a new gallery")
    p.add_argument("--tau", type=float, help="rejection distance for a new gallery")

    p = sub.add_parser("identify", help="match a probe embedding against a gallery")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probe", required=True, help="JSON array, or path to a file holding one")
    p.add_argument("--out", default="-")

    p = sub.add_parser("serve", help="run the batch HTTP service")
    p.add_argument("--bind", type=_bind, default=("127.0.0.1", 8080))
    p.add_argument("--gallery", help="gallery file (default: $VITALS_GALLERY)")
    _add_signal_opts(p)
    return ap


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except (OSError, UnicodeDecodeError) as e:
        raise UsageError(f"cannot read {path}: {e}") from None


def _write_text(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e}") from None


def _json_vector(arg: str) -> list[float]:
    text = arg.strip()
    if not text.startswith("["):
        text = _read_text(arg)
    try:
        v = json.loads(text)
    except json.JSONDecodeError:
        raise UsageError(f"not a JSON array: {arg[:40]!r}") from None
    if isinstance(v, dict) and "probe" in v:
        v = v["probe"]
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise UsageError("vector must be a JSON array of numbers")
    return v


def _signal_config(args) -> ServiceConfig:
    conf = {}
    if args.config:
        try:
            conf = json.loads(_read_text(args.config))
        except json.JSONDecodeError as e:
            raise UsageError(f"bad config file {args.config}: {e}") from None
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
    window = args.window if args.window is not None else conf.get("window", 1.6)
    band = args.band or conf.get("band", (0.7, 4.0))
    if isinstance(band, str):
        band = _band(band)
    fs = args.fs if args.fs is not None else conf.get("fs")
    try:
        pos = PosConfig(window_seconds=float(window), stride_frames=int(conf.get("stride", 1)),
                        band_lo_hz=float(band[0]), band_hi_hz=float(band[1]))
    except (TypeError, ValueError, IndexError) as e:
        raise UsageError(f"bad signal configuration: {e}") from None
    gallery = getattr(args, "gallery", None) or conf.get("gallery")
    return ServiceConfig(pos=pos, fs=fs, weights=conf.get("weights"), gallery_path=gallery)


def _cmd_compute(args):
    cfg = _signal_config(args)
    report = analyze_document(_read_text(args.trace), cfg.pos, cfg.fs, cfg.weights)
    _write_text(args.out, report_body(report).decode())


def _cmd_pos(args):
    cfg = _signal_config(args)
    series = prepare_series(parse_trace(_read_text(args.trace)), cfg.fs, cfg.weights)
    _write_text(args.out, serialize_pulse(pos_pipeline(series, cfg.pos)))


def _cmd_synth(args):
    trace, truth = synth_trace(args.hr, args.duration, args.fs, args.amplitude, args.noise, args.seed)
    _write_text(args.out, serialize_trace(trace))
    truth_path = args.truth
    if truth_path is None and args.out != "-":
        truth_path = str(Path(args.out).with_suffix("")) + ".truth.json"
    if truth_path:
        _write_text(truth_path, json.dumps(truth.to_dict(), indent=2) + "\n")


def _cmd_enroll(args):
    vec = _json_vector(args.vector)
    if os.path.exists(args.gallery):
        gallery = _load_gallery(args.gallery)
    else:
        kw = {k: v for k, v in (("k", args.k), ("tau", args.tau)) if v is not None}
        try:
            gallery = EmbeddingGallery(dim=len(vec), **kw)
        except ValueError as e:
            raise UsageError(str(e)) from None
    enroll(gallery, args.subject, vec)
    try:
        save_gallery(gallery, args.gallery)
    except OSError as e:
        raise UsageError(f"cannot write {args.gallery}: {e}") from None
    print(f"enrolled {args.subject!r}: gallery now holds {len(gallery)} record(s)", file=sys.stderr)


def _load_gallery(path: str) -> EmbeddingGallery:
    try:
        return load_gallery(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None


def _cmd_identify(args):
    gallery = _load_gallery(args.gallery)
    match = identify(gallery, _json_vector(args.probe))
    _write_text(args.out, canonical_json(match.to_dict()) + "\n")


def _cmd_serve(args):
    cfg = _signal_config(args)
    try:
        serve_batch(args.bind, cfg)
    except OSError as e:
        raise UsageError(f"cannot serve on {args.bind[0]}:{args.bind[1]}: {e}") from None


COMMANDS = {
    "compute": _cmd_compute,
    "pos": _cmd_pos,
    "synth": _cmd_synth,
    "enroll": _cmd_enroll,
    "identify": _cmd_identify,
    "serve": _cmd_serve,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except VitalsError as e:
        print(f"error: {e.name}: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, argparse.ArgumentTypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
