"""Command-line entry point.

The CLI is a thin client over the HTTP service: each subcommand posts a JSON
config to the matching endpoint.  By default the service runs in-process (no
server needed, fully offline); --server targets a remote instance instead.

Exit codes: 1 = config error, 2 = data error, 3 = service error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from pathlib import Path

import httpx

ROUTES = {
    "repair": "/corpus/repair",
    "tfidf": "/corpus/tfidf",
    "embed-fetch": "/embeddings/fetch",
    "knn": "/embeddings/knn",
    "prompt-a": "/prompts/task-a",
    "prompt-b": "/prompts/task-b",
    "zeroshot": "/zeroshot/cosine",
    "ensemble": "/zeroshot/ensemble",
    "distmult": "/zeroshot/distmult",
    "taxo-train": "/taxonomy/train",
    "taxo-grid": "/taxonomy/grid",
    "taxo-predict": "/taxonomy/predict",
    "eval": "/evaluate",
}

LLM_TASKS = {"prompt-a", "prompt-b", "embed-fetch"}
EXIT_CODES = {"config": 1, "data": 2, "service": 3}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ontolearn",
        description="Ontology-learning pipeline runner (config-file driven).",
    )
    sub = parser.add_subparsers(dest="task", required=True)
    for task in ROUTES:
        p = sub.add_parser(task, help=f"run the {task} task")
        p.add_argument("--config", required=True, help="JSON config file for this run")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--endpoint", default=None,
                       help="embeddings/chat service URL (or env ONTOLEARN_ENDPOINT)")
        p.add_argument("--mock-llm", action="store_true",
                       help="use the built-in deterministic completion mock")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--server", default=None,
                       help="remote ontolearn service URL (default: in-process)")
    return parser


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise SystemExit(_fail("config", f"config file not found: {path}"))
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SystemExit(_fail("config", f"config file {path} is not valid JSON: {exc}"))
    if not isinstance(cfg, dict):
        raise SystemExit(_fail("config", f"config file {path} must hold a JSON object"))
    return cfg


def _fail(kind: str, message: str) -> int:
    print(f"error ({kind}): {message}", file=sys.stderr)
    return EXIT_CODES[kind]


def _apply_overrides(task: str, cfg: dict, args: argparse.Namespace) -> dict:
    if args.out:
        cfg["out"] = args.out
    if task in LLM_TASKS:
        endpoint = args.endpoint or os.environ.get("ONTOLEARN_ENDPOINT")
        if args.mock_llm:
            cfg["endpoint"] = None
        elif endpoint:
            cfg["endpoint"] = endpoint
        api_key = os.environ.get("ONTOLEARN_API_KEY")
        if api_key and "api_key" not in cfg:
            cfg["api_key"] = api_key
    if args.seed is not None:
        if task == "taxo-train":
            cfg["split_seed"] = args.seed
            cfg.setdefault("config", {}).setdefault("seed", args.seed)
        elif task == "taxo-grid":
            cfg["split_seed"] = args.seed
            for c in cfg.get("configs", []):
                c.setdefault("seed", args.seed)
        else:
            cfg.setdefault("seed", args.seed)
    return cfg


def _post(task: str, cfg: dict, server: str | None) -> tuple[int, dict]:
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            resp = client.post(ROUTES[task], json=cfg)
    else:
        from .service import app  # imported lazily to keep plain runs light

        async def call() -> httpx.Response:
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://ontolearn.local",
                                         timeout=600.0) as client:
                return await client.post(ROUTES[task], json=cfg)

        resp = asyncio.run(call())
    try:
        body = resp.json()
    except ValueError:
        body = {"kind": "service", "message": resp.text[:500]}
    return resp.status_code, body


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    task = args.task
    cfg = _apply_overrides(task, _load_config(args.config), args)
    if "seed" in cfg and task not in ("taxo-train", "taxo-grid"):
        cfg.pop("seed")  # informational only for deterministic tasks
    try:
        status, body = _post(task, cfg, args.server)
    except httpx.HTTPError as exc:
        return _fail("service", f"cannot reach service: {exc}")
    if status == 200:
        print(json.dumps(body, indent=2, ensure_ascii=False))
        return 0
    if isinstance(body, dict) and "kind" in body:
        return _fail(body["kind"], body.get("message", "unknown error"))
    # FastAPI request-validation errors arrive as {"detail": [...]}
    detail = body.get("detail") if isinstance(body, dict) else body
    return _fail("config", f"invalid request: {detail}")


if __name__ == "__main__":
    sys.exit(main())
