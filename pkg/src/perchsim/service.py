"""Ground-control service: live telemetry and operator commands over HTTP.

Endpoints:
  GET  /state    latest telemetry snapshot
  GET  /stream   server-push line-delimited JSON at the stream rate
  POST /command  {"command": "start"|"stop"|"initiate_charging"|"interrupt_charging"}
  GET  /summary  running summary, recomputable from the log

One thread steps the simulation; HTTP threads talk to it only through the
engine's locked command queue and the bounded per-subscriber telemetry
queues (drop-oldest, so a slow consumer never stalls stepping).
"""

from __future__ import annotations

import collections
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .engine import Engine
from .telemetry import SummaryAccumulator


class TelemetryFanout:
    """Bounded drop-oldest queues, one per stream subscriber."""

    def __init__(self, maxlen: int = 256):
        self.maxlen = maxlen
        self._subs: dict[int, collections.deque] = {}
        self._next = 0
        self._lock = threading.Lock()
        self._wakeup = threading.Condition(self._lock)

    def subscribe(self) -> int:
        with self._lock:
            sid = self._next
            self._next += 1
            self._subs[sid] = collections.deque(maxlen=self.maxlen)
            return sid

    def unsubscribe(self, sid: int) -> None:
        with self._lock:
            self._subs.pop(sid, None)

    def publish(self, item: str) -> None:
        with self._wakeup:
            for q in self._subs.values():
                q.append(item)   # deque drops the oldest when full
            self._wakeup.notify_all()

    def pop(self, sid: int, timeout: float = 1.0) -> str | None:
        with self._wakeup:
            q = self._subs.get(sid)
            if q is None:
                return None
            if not q:
                self._wakeup.wait(timeout)
            return q.popleft() if q else None


class GcsService:
    def __init__(self, scenario, host: str = "127.0.0.1", port: int = 8642,
                 speedup: float = 1.0):
        self.engine = Engine(scenario)
        self.fanout = TelemetryFanout()
        self.summary_acc = SummaryAccumulator(scenario.clock.flight_dt)
        self.speedup = speedup
        decim = max(1, int(round(1.0 / (scenario.stream_hz
                                        * scenario.clock.flight_dt))))
        self._decim = decim
        self.engine.on_record.append(self.summary_acc.add)
        self.engine.on_record.append(self._publish)
        self._stop = threading.Event()
        self.sim_thread = threading.Thread(target=self._sim_loop, daemon=True)
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.port = self.httpd.server_address[1]

    def _publish(self, rec) -> None:
        if rec.step % self._decim == 0:
            self.fanout.publish(rec.to_json())

    def _sim_loop(self) -> None:
        eng = self.engine
        dt = eng.clock.flight_dt
        next_wall = time.monotonic()
        while not self._stop.is_set():
            if eng.fsm.complete or eng._halted is not None:
                time.sleep(0.05)
                continue
            eng.step()
            if self.speedup > 0:
                next_wall += dt / self.speedup
                delay = next_wall - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_wall = time.monotonic()

    def start(self) -> None:
        self.sim_thread.start()
        self.http_thread = threading.Thread(target=self.httpd.serve_forever,
                                            daemon=True)
        self.http_thread.start()

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_forever(self) -> None:
        self.start()
        try:
            while True:
                time.sleep(0.5)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- handler helpers -------------------------------------------------------

    def state_doc(self) -> dict:
        rec = self.engine.last_record
        doc = {"mission_complete": self.engine.fsm.complete,
               "halted": self.engine._halted}
        if rec is None:
            doc["telemetry"] = self._initial_snapshot()
        else:
            doc["telemetry"] = json.loads(rec.to_json())
        return doc

    def _initial_snapshot(self) -> dict:
        eng = self.engine
        return {
            "step": 0, "t": 0.0, "mission_state": eng.fsm.state.value,
            "pos": [float(x) for x in eng.drone.position],
            "soc": eng.battery.soc,
            "voltage": eng.battery.terminal_voltage,
            "gripper": eng.gripper_state.value,
            "events": [],
        }

    def handle_command(self, body: dict) -> tuple[int, dict]:
        if not isinstance(body, dict) or "command" not in body:
            return 400, {"accepted": False, "reason": "body must be {\"command\": ...}"}
        cmd = body["command"]
        if not isinstance(cmd, str):
            return 400, {"accepted": False, "reason": "command must be a string"}
        ok, reason = self.engine.command(cmd)
        status = 200 if ok else (400 if reason.startswith("unknown") else 409)
        return status, {"accepted": ok, "reason": reason,
                        "mission_state": self.engine.fsm.state.value}


def _make_handler(service: GcsService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status: int, doc: dict) -> None:
            payload = json.dumps(doc).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            if self.path == "/state":
                self._send_json(200, service.state_doc())
            elif self.path == "/summary":
                self._send_json(200, service.summary_acc.summary.to_dict())
            elif self.path == "/stream":
                self._stream()
            elif self.path == "/" or self.path.startswith("/ui"):
                self._send_ui()
            else:
                self._send_json(404, {"error": f"no route {self.path}"})

        def do_POST(self):
            if self.path != "/command":
                self._send_json(404, {"error": f"no route {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, json.JSONDecodeError):
                self._send_json(400, {"accepted": False,
                                      "reason": "invalid JSON body"})
                return
            status, doc = service.handle_command(body)
            self._send_json(status, doc)

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def _stream(self):
            sid = service.fanout.subscribe()
            try:
                self.send_response(200)
                self.send_header("Content-Type", "application/x-ndjson")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Transfer-Encoding", "chunked")
                self.end_headers()
                while not service._stop.is_set():
                    line = service.fanout.pop(sid, timeout=1.0)
                    if line is None:
                        continue
                    data = (line + "\n").encode()
                    self.wfile.write(f"{len(data):x}\r\n".encode())
                    self.wfile.write(data + b"\r\n")
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                service.fanout.unsubscribe(sid)

        def _send_ui(self):
            import os
            root = os.environ.get("PERCHSIM_UI_DIR")
            if root is None:
                here = os.path.dirname(os.path.dirname(os.path.dirname(
                    os.path.dirname(os.path.abspath(__file__)))))
                root = os.path.join(here, "frontend", "dist")
            rel = self.path[len("/ui"):] if self.path.startswith("/ui") else ""
            rel = rel.lstrip("/") or "index.html"
            path = os.path.normpath(os.path.join(root, rel))
            if not path.startswith(os.path.abspath(root)) or not os.path.isfile(path):
                self._send_json(404, {"error": "ui asset not found"})
                return
            ctype = {"html": "text/html", "js": "text/javascript",
                     "css": "text/css"}.get(path.rsplit(".", 1)[-1],
                                            "application/octet-stream")
            with open(path, "rb") as fh:
                payload = fh.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

    return Handler
