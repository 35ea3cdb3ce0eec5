"""Minimal in-process chat-completions endpoint for transport tests and
fixture recording. Speaks just enough of the JSON wire protocol: POST with
{"model", "messages", "temperature"} returns {"choices": [...], "usage": ...}.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

Responder = Callable[[str, str], str]


class StubChatServer:
    """Runs a responder function behind a local HTTP endpoint.

    ``fail_statuses`` is a mutable list of HTTP codes to emit (and pop) before
    answering normally, for retry/backoff tests.
    """

    def __init__(self, responder: Responder, fail_statuses: list[int] | None = None):
        self.responder = responder
        self.fail_statuses = fail_statuses if fail_statuses is not None else []
        self.requests_seen = 0
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                outer.requests_seen += 1
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                if outer.fail_statuses:
                    status = outer.fail_statuses.pop(0)
                    self.send_response(status)
                    self.end_headers()
                    self.wfile.write(b"synthetic failure")
                    return
                system = ""
                user = ""
                for message in payload.get("messages", []):
                    if message["role"] == "system":
                        system = message["content"]
                    elif message["role"] == "user":
                        user = message["content"]
                content = outer.responder(system, user)
                body = json.dumps(
                    {
                        "choices": [{"message": {"role": "assistant", "content": content}}],
                        "usage": {
                            "prompt_tokens": len(user.split()),
                            "completion_tokens": len(content.split()),
                            "total_tokens": len(user.split()) + len(content.split()),
                        },
                    }
                ).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):  # silence request logging
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self) -> "StubChatServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
