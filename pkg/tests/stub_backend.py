"""In-process HTTP stub implementing the four-verb backend protocol.

Deterministic: embeddings are hashed from the input text/uri, generation
echoes predictable sample ids and image URIs the stub itself serves as
tiny PNG payloads. Failure injection knobs support the retry and rollback
tests.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from gal_engine.backends import derive_seed, text_fingerprint

# 1x1 transparent PNG
PNG_BYTES = bytes.fromhex(
    "89504e470d0a1a0a0000000d49484452000000010000000108060000001f15c489"
    "0000000a49444154789c63000100000500010d0a2db40000000049454e44ae426082")


class StubState:
    def __init__(self, dim: int = 64):
        self.dim = dim
        self.requests: list[tuple[str, dict | None]] = []
        self.idempotency_keys: list[str] = []
        self.jobs: dict[str, str] = {}
        self.fail_finetunes = 0          # next N finetune posts answer 500
        self.fail_embeds_once = False    # next embed answers 500 once
        self.finetune_job_status = "done"
        self.job_counter = 0
        self.lock = threading.Lock()

    def embedding_for(self, key: str) -> list[float]:
        rng = np.random.Generator(np.random.PCG64(
            derive_seed(777, text_fingerprint(key))))
        vec = rng.standard_normal(self.dim)
        return [float(v) for v in vec / np.linalg.norm(vec)]


class _Handler(BaseHTTPRequestHandler):
    state: StubState

    def log_message(self, *args):  # keep test output quiet
        pass

    def _send(self, code: int, payload: dict | bytes,
              content_type: str = "application/json") -> None:
        body = (json.dumps(payload).encode("utf-8")
                if isinstance(payload, dict) else payload)
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length) or b"{}")

    def do_GET(self):
        st = self.state
        if self.path.startswith("/v1/jobs/"):
            job_id = self.path.rsplit("/", 1)[-1]
            with st.lock:
                st.requests.append(("GET " + self.path, None))
                status = st.jobs.get(job_id)
            if status is None:
                self._send(404, {"detail": "unknown job"})
            else:
                self._send(200, {"status": status})
            return
        if self.path.startswith("/images/"):
            self._send(200, PNG_BYTES, content_type="image/png")
            return
        self._send(404, {"detail": "not found"})

    def do_POST(self):
        st = self.state
        body = self._read_json()
        with st.lock:
            st.requests.append(("POST " + self.path, body))
            key = self.headers.get("Idempotency-Key")
            if key:
                st.idempotency_keys.append(key)

        if self.path == "/v1/embed":
            with st.lock:
                if st.fail_embeds_once:
                    st.fail_embeds_once = False
                    self._send(500, {"detail": "transient"})
                    return
            kind = body.get("kind")
            if kind == "text":
                text = body.get("text", "")
                if not text:
                    self._send(422, {"detail": "empty text"})
                    return
                self._send(200, {"embedding": st.embedding_for("text:" + text)})
            elif kind == "image":
                uri = body.get("image_uri", "")
                if not uri:
                    self._send(422, {"detail": "missing image_uri"})
                    return
                self._send(200, {"embedding": st.embedding_for("image:" + uri)})
            else:
                self._send(422, {"detail": "bad kind"})
            return

        if self.path == "/v1/generate":
            prompt = body.get("prompt", "")
            seed = body.get("seed", 0)
            count = int(body.get("count", 0))
            if not prompt or count < 1:
                self._send(422, {"detail": "bad generate request"})
                return
            tag = text_fingerprint(f"{prompt}|{seed}") % 10 ** 8
            samples = [
                {"sample_id": f"srv-{tag}-{j}",
                 "image_uri": f"http://{self.headers.get('Host')}/images/{tag}-{j}.png"}
                for j in range(count)
            ]
            self._send(200, {"samples": samples})
            return

        if self.path == "/v1/finetune":
            with st.lock:
                if st.fail_finetunes > 0:
                    st.fail_finetunes -= 1
                    self._send(500, {"detail": "finetune worker crashed"})
                    return
                st.job_counter += 1
                job_id = f"job-{st.job_counter}"
                st.jobs[job_id] = st.finetune_job_status
            self._send(200, {"job_id": job_id})
            return

        self._send(404, {"detail": "not found"})


class StubServer:
    """Context manager running the stub on an ephemeral port."""

    def __init__(self, dim: int = 64):
        self.state = StubState(dim=dim)
        handler = type("Handler", (_Handler,), {"state": self.state})
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "StubServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.thread.join(timeout=5)
