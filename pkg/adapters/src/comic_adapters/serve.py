"""Adapter process entry point: stdio or HTTP transport, echo or models profile."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .config import AdapterConfig, AdapterConfigError, load_adapter_config
from .handlers import echo_handlers
from .protocol import ADAPTER_OPS, Handler, build_manifest, handle_line

logger = logging.getLogger(__name__)


def build_profile(
    profile: str, config: AdapterConfig | None
) -> tuple[dict[str, Handler], dict]:
    """Return (handlers, manifest) for a serving profile."""
    if profile == "echo":
        concurrency = config.concurrency if config else 1
        return echo_handlers(), build_manifest("echo", ADAPTER_OPS, concurrency=concurrency)
    if profile == "models":
        if config is None:
            raise AdapterConfigError(
                "the models profile needs --config pointing at an adapter config file"
            )
        from . import identity  # deferred: torch is slow and echo mode never needs it

        handlers: dict[str, Handler] = {}
        models: dict[str, dict] = {}
        for channel, artifact in sorted(config.artifacts.items()):
            if channel != "identify":
                raise AdapterConfigError(
                    f"no model implementation for channel {channel!r}; supported: identify"
                )
            try:
                model = identity.IdentityModel.load(artifact)
            except identity.FinetuneError as exc:
                raise AdapterConfigError(str(exc)) from None
            handlers[channel] = identity.ModelIdentify(model, image_root=config.image_root)
            models[channel] = {"artifact": str(artifact), "classes": list(model.classes)}
        if not handlers:
            raise AdapterConfigError("adapter config declares no model channels")
        ops = tuple(handlers)  # declared ops must match what is actually served
        return handlers, build_manifest(config.name, ops, models=models, concurrency=config.concurrency)
    raise AdapterConfigError(f"unknown profile {profile!r}")


def serve_stdio(handlers: dict[str, Handler], manifest: dict, stdin=None, stdout=None) -> None:
    """Manifest line first, then one response line per request line until EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stdout.write(json.dumps(manifest) + "\n")
    stdout.flush()
    for line in stdin:
        resp = handle_line(line, handlers)
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()


def make_http_server(
    handlers: dict[str, Handler],
    manifest: dict,
    host: str = "127.0.0.1",
    port: int = 0,
) -> ThreadingHTTPServer:
    """GET /manifest for the handshake, POST / for requests."""
    gate = threading.Semaphore(int(manifest.get("concurrency", 1)))

    class RequestHandler(BaseHTTPRequestHandler):
        def _send(self, code: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/manifest":
                self._send(200, manifest)
            else:
                self._send(404, {"error": f"no such path {self.path}"})

        def do_POST(self):
            if self.path not in ("/", ""):
                self._send(404, {"error": f"no such path {self.path}"})
                return
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            with gate:  # single flight unless the manifest declares more
                self._send(200, handle_line(raw, handlers))

        def log_message(self, fmt, *args):  # not worth a stderr line per request
            logger.debug("http: " + fmt, *args)

    return ThreadingHTTPServer((host, port), RequestHandler)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="comic-adapter",
        description="Serve the perception/TTS adapter protocol over stdio or HTTP.",
    )
    parser.add_argument("--stdio", action="store_true", help="serve on stdin/stdout (default)")
    parser.add_argument("--http", metavar="HOST:PORT", help="serve over HTTP instead of stdio")
    parser.add_argument(
        "--profile",
        choices=("echo", "models"),
        default="echo",
        help="echo answers every op with fixed values; models serves trained artifacts",
    )
    parser.add_argument("--config", help="adapter config file (required for --profile models)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    args = parser.parse_args(argv)

    # stdout is the protocol channel in stdio mode; logs must stay on stderr.
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_adapter_config(args.config) if args.config else None
        handlers, manifest = build_profile(args.profile, config)
    except AdapterConfigError as exc:
        print(f"comic-adapter: {exc}", file=sys.stderr)
        return 2

    if args.http:
        host, _, port_text = args.http.rpartition(":")
        try:
            port = int(port_text)
        except ValueError:
            print(f"comic-adapter: --http wants HOST:PORT, got {args.http!r}", file=sys.stderr)
            return 2
        server = make_http_server(handlers, manifest, host or "127.0.0.1", port)
        host, port = server.server_address[:2]
        print(f"serving {manifest['adapter']} on http://{host}:{port}", file=sys.stderr, flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0

    serve_stdio(handlers, manifest)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
