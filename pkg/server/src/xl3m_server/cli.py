"""Server launcher: `xl3m-server --model MODEL --port PORT`."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .app import build_app
from .engine import ServerConfig, load_engine


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xl3m-server",
        description="Serve next-token logprob distributions and generation "
                    "from a causal LM over the wire protocol.",
    )
    parser.add_argument("--model", default="tiny-random",
                        help="Hugging Face model id, or 'tiny-random' for the "
                             "built-in seeded random byte-level transformer")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8399)
    parser.add_argument("--max-parallel", type=int, default=4)
    parser.add_argument("--context-window", type=int, default=None,
                        help="override (must not exceed the model's maximum)")
    parser.add_argument("--seed", type=int, default=0,
                        help="weight-init seed for tiny-random")
    return parser


def serve(cfg: ServerConfig) -> None:
    engine = load_engine(cfg)
    app = build_app(engine, max_parallel=cfg.max_parallel)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ServerConfig(
        model=args.model,
        device=args.device,
        host=args.host,
        port=args.port,
        max_parallel=args.max_parallel,
        context_window=args.context_window,
        seed=args.seed,
    )
    try:
        serve(cfg)
    except Exception as exc:  # noqa: BLE001 - surface load failures cleanly
        print(f"failed to serve: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
