import http.server
import json
import threading
from datetime import datetime, timezone

import pytest

from textcascade import Event, EventStream, NodeSpec, NodeTaxonomy

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def make_stream(taus, nodes, horizon=None, texts=None):
    events = [
        Event(float(t), int(n), texts[i] if texts else "")
        for i, (t, n) in enumerate(zip(taus, nodes))
    ]
    if horizon is None:
        horizon = (events[-1].tau + 1.0) if events else 1.0
    return EventStream(events, EPOCH, float(horizon))


@pytest.fixture
def taxonomy3():
    return NodeTaxonomy(
        nodes=[NodeSpec(1, "alpha_desk"), NodeSpec(2, "beta_desk"), NodeSpec(3, "gamma_desk")],
        domain_map={"alpha.example": 1, "beta.example": 2},
        fallback_node=3,
        instructions={
            1: "Write a brisk wire-style update.",
            2: "Write a consumer-facing explainer line.",
            3: "Write a neutral summary sentence.",
        },
    )


@pytest.fixture
def taxonomy5():
    labels = ["local_tv", "mass_market", "specialist_science_tech",
              "business_finance", "general_news"]
    return NodeTaxonomy(
        nodes=[NodeSpec(i + 1, label) for i, label in enumerate(labels)],
        domain_map={
            "tv.example": 1,
            "tabloid.example": 2,
            "sci.example": 3,
            "biz.example": 4,
        },
        fallback_node=5,
        instructions={
            1: "Write like a local TV news web update: clear, public-facing, practical, and locally relatable.",
            2: "Write a punchy mass-market headline.",
            3: "Write a technical mission-status update.",
            4: "Write a markets-angle one-liner.",
            5: "Write a straight general-news sentence.",
        },
    )


@pytest.fixture
def http_stub():
    """Start throwaway HTTP servers; handler(path, payload) -> (status, body_bytes)."""
    servers = []

    def start(handler_fn):
        class Handler(http.server.BaseHTTPRequestHandler):
            def do_GET(self):
                self._respond()

            def do_POST(self):
                self._respond()

            def _respond(self):
                length = int(self.headers.get("Content-Length", 0) or 0)
                payload = json.loads(self.rfile.read(length)) if length else None
                status, body = handler_fn(self.path, payload)
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        return f"http://127.0.0.1:{server.server_port}"

    yield start
    for server in servers:
        server.shutdown()
