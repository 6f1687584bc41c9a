"""Command line for exporting embedding stores.

Usage:
    embexport export --model NAME --pooling {mean,last_token} [--normalize]
                     --batch 32 --in texts.jsonl --out store.emb

The input is JSONL with one {"id": ..., "text": ...} object per line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ExportError
from .export import ExportSpec, build_encoder, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embexport")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed a JSONL of texts into a store file")
    p.add_argument("--model", required=True, help="registry model name or alias")
    p.add_argument("--pooling", required=True, choices=["mean", "last_token"])
    p.add_argument("--normalize", action="store_true", help="l2-normalize rows")
    p.add_argument("--batch", type=int, default=32, help="encoder batch size")
    p.add_argument("--in", dest="input_path", required=True, metavar="TEXTS",
                   help='JSONL input, one {"id","text"} per line')
    p.add_argument("--out", required=True, help="output store path")
    p.add_argument("--backend", choices=["hf", "deterministic"], default="hf",
                   help="encoder backend (deterministic is offline, for smoke tests)")
    p.add_argument("--device", default="cpu", help="device for the hf backend")
    return parser


def read_texts(path: str) -> list[tuple[str, str]]:
    texts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if "id" not in obj or "text" not in obj:
                raise ExportError(f"{path}:{lineno}: needs id and text fields")
            texts.append((str(obj["id"]), str(obj["text"])))
    return texts


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not Path(args.input_path).exists():
            raise ExportError(f"input file not found: {args.input_path}")
        spec = ExportSpec(
            model_name=args.model,
            pooling=args.pooling,
            normalize=args.normalize,
            batch_size=args.batch,
            input=read_texts(args.input_path),
        )
        encoder = build_encoder(spec, backend=args.backend, device=args.device)
        summary = export(spec, args.out, encoder=encoder)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
