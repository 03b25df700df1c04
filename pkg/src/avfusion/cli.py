"""Command-line entry point: ``avfusion <command> [options]``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 missing dependency,
5 data, 6 training divergence, 7 I/O. Set ``AVFUSION_LOG_LEVEL`` (e.g. INFO)
for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .config import default_document, load_config
from .errors import AvfusionError
from .workflow import (Workspace, evaluate_phase, pretrain, synth, train_fusion_phase,
                       train_stream_phase)

IO_ERROR = 7


def _snr_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from e


def _stream_list(text: str) -> list[str]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in items if s not in ("audio", "video", "fusion")]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"streams must be audio, video or fusion, got {text!r}")
    return items


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="64-bit unsigned seed (overrides config)")
    common.add_argument("--out", type=Path, default=Path("avfusion-run"), help="workspace directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--preset", choices=("desk", "full"), help="configuration preset")
    common.add_argument("--max-epochs", type=int, dest="max_epochs",
                        help="override train.max_epochs")

    p = argparse.ArgumentParser(prog="avfusion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic dataset")
    pre = sub.add_parser("pretrain", parents=[common], help="RBM-pretrain the stream encoders")
    pre.add_argument("--modality", choices=("audio", "video", "both"), default="both")
    ts = sub.add_parser("train-stream", parents=[common], help="train one single-modality stream")
    ts.add_argument("--modality", choices=("audio", "video"), required=True)
    sub.add_parser("train-fusion", parents=[common], help="fine-tune the audiovisual model")
    ev = sub.add_parser("eval", parents=[common], help="evaluate on clean and noisy test audio")
    ev.add_argument("--snr", type=_snr_list, help="comma-separated SNR levels in dB")
    ev.add_argument("--streams", type=_stream_list, help="subset of audio,video,fusion")
    ev.add_argument("--runs", type=int, help="independent noise draws to aggregate")
    pl = sub.add_parser("pipeline", parents=[common],
                        help="synth, pretrain, both streams, fusion and eval over --runs seeds")
    pl.add_argument("--runs", type=int, help="training runs to aggregate (default: config)")
    pl.add_argument("--snr", type=_snr_list)
    pl.add_argument("--streams", type=_stream_list)
    cfg = sub.add_parser("config", help="print a preset's full configuration")
    cfg.add_argument("--preset", choices=("desk", "full"), default="desk")
    return p


def _overrides(args) -> dict:
    out = {"seed": args.seed, "preset": args.preset, "train.max_epochs": args.max_epochs}
    if getattr(args, "runs", None) is not None:
        out["runs"] = args.runs
    return out


def run(args) -> int:
    if args.command == "config":
        print(default_document(args.preset), end="")
        return 0
    cfg = load_config(args.config, _overrides(args))
    ws = Workspace(args.out, cfg)
    if args.command == "synth":
        s = synth(ws, args.force)
        print(f"synthesised {s['utterances']} utterances: {s['classes']} classes, "
              f"{s['subjects']} subjects; train/validation/test = "
              f"{s['train']}/{s['validation']}/{s['test']}")
    elif args.command == "pretrain":
        mods = ("audio", "video") if args.modality == "both" else (args.modality,)
        for m in mods:
            print(f"wrote {pretrain(ws, m, args.force)}")
    elif args.command == "train-stream":
        print(f"wrote {train_stream_phase(ws, args.modality, args.force)}")
    elif args.command == "train-fusion":
        print(f"wrote {train_fusion_phase(ws, args.force)}")
    elif args.command == "eval":
        path, table = evaluate_phase([ws], args.streams, args.snr, noise_runs=args.runs or 1)
        print(table)
        print(f"wrote {path}")
    elif args.command == "pipeline":
        pipeline(ws, args)
    return 0


def pipeline(ws: Workspace, args) -> None:
    cfg = ws.cfg
    start = time.monotonic()
    if not (ws.data / "manifest.csv").exists() or args.force:
        synth(ws, args.force)
    runs = []
    for r in range(cfg.runs):
        if cfg.runs == 1:
            rws = ws
        else:
            rcfg = load_config(args.config, {**_overrides(args), "seed": cfg.seed + r,
                                             "data": str(ws.data)})
            rws = Workspace(ws.root / "runs" / f"run{r:02d}", rcfg)
        for m in ("audio", "video"):
            if not cfg.skip_pretrain:
                pretrain(rws, m, args.force)
            train_stream_phase(rws, m, args.force)
        train_fusion_phase(rws, args.force)
        runs.append(rws)
        logging.getLogger(__name__).info("run %d done after %.1f s", r, time.monotonic() - start)
    ws.prepare()
    path, table = evaluate_phase(runs, args.streams, args.snr, out=ws.root / "reports" / "eval.csv")
    print(table)
    print(f"wrote {path} ({time.monotonic() - start:.1f} s)")


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("AVFUSION_LOG_LEVEL", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except AvfusionError as e:
        print(f"avfusion: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"avfusion: I/O error: {e}", file=sys.stderr)
        return IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
