"""HTTP surface for interactive sessions.

JSON request/response over a threaded stdlib server, observations as PNG
(raw or base64), and a chunked newline-delimited JSON event stream per
session as the push channel. One command at a time per session: a second
concurrent command is rejected with 409 busy, never queued. Idle sessions
expire and persist their partial episode as aborted.

The wire contract lives in api_description(); GET /api serves it and the
repository ships it as gateway_api.json.
"""

from __future__ import annotations

import base64
import json
import logging
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .actions import action_to_primitive, canonical_vocabulary, primitive_to_action
from .control import PrimitiveCache, score_primitives, select_action
from .encoders import init_params
from .teleop import (
    Transition,
    finish_session,
    save_episode,
    start_session,
    step_session,
    translate_supervision,
)
from .world import apply_action, check_success, get_task, observation_png, render

logger = logging.getLogger(__name__)

FRAME_VERSION = 1
MODES = ("teleop", "policy", "policy+intervention")


class GatewayError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class GatewaySession:
    session_id: str
    mode: str
    session: object                     # teleop.Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    frames: list[dict] = field(default_factory=list)
    frame_ready: threading.Condition = field(default_factory=threading.Condition)
    budget_left: int = 0
    pending_correction: str | None = None
    last_active: float = field(default_factory=time.monotonic)
    episode_path: str | None = None
    closed: bool = False


class Gateway:
    """Session registry plus the request handlers, transport-agnostic."""

    def __init__(self, params=None, episode_dir=".", task_ids=None,
                 idle_timeout: float = 1800.0, default_budget: int = 4):
        self.vocab = canonical_vocabulary()
        self.params = params if params is not None else init_params(seed=0)
        self.cache = PrimitiveCache(self.vocab, self.params)
        self.episode_dir = Path(episode_dir)
        self.episode_dir.mkdir(parents=True, exist_ok=True)
        self.task_ids = tuple(task_ids or ("point", "pick", "place"))
        self.idle_timeout = idle_timeout
        self.default_budget = default_budget
        self.sessions: dict[str, GatewaySession] = {}
        self.registry_lock = threading.Lock()

    # -- session plumbing ------------------------------------------------------

    def _get(self, session_id: str) -> GatewaySession:
        self.sweep_idle()
        with self.registry_lock:
            gs = self.sessions.get(session_id)
        if gs is None:
            raise GatewayError(404, f"unknown session {session_id!r}")
        return gs

    def sweep_idle(self) -> None:
        now = time.monotonic()
        with self.registry_lock:
            stale = [gs for gs in self.sessions.values()
                     if not gs.closed and now - gs.last_active > self.idle_timeout]
        for gs in stale:
            with gs.lock:
                if not gs.closed:
                    logger.info("expiring idle session %s", gs.session_id)
                    self._finish_locked(gs, aborted=True)

    def _frame(self, gs: GatewaySession, primitive, success: bool,
               observation) -> None:
        frame = {
            "v": FRAME_VERSION,
            "step": len(gs.session.transitions),
            "primitive_id": None if primitive is None else primitive.id,
            "primitive_text": None if primitive is None else primitive.canonical_text,
            "success": success,
            "observation_png_b64": base64.b64encode(
                observation_png(observation)).decode("ascii"),
        }
        with gs.frame_ready:
            gs.frames.append(frame)
            gs.frame_ready.notify_all()

    def _finish_locked(self, gs: GatewaySession, aborted: bool) -> dict:
        episode = finish_session(gs.session, aborted=aborted)
        stamp = "aborted" if aborted else "done"
        path = self.episode_dir / f"{gs.session_id}-{stamp}.jsonl"
        save_episode(episode, path)
        gs.episode_path = str(path)
        gs.closed = True
        with gs.frame_ready:
            gs.frame_ready.notify_all()
        return {"episode_path": str(path), "transitions": len(episode.transitions),
                "success": episode.success, "status": stamp}

    # -- handlers ---------------------------------------------------------------

    def create_session(self, body: dict) -> dict:
        task_id = body.get("task_id", "point")
        seed = int(body.get("seed", 0))
        mode = body.get("mode", "teleop")
        if seed < 0:
            raise GatewayError(400, "seed must be nonnegative")
        if mode not in MODES:
            raise GatewayError(400, f"mode must be one of {MODES}")
        if task_id not in self.task_ids:
            raise GatewayError(400, f"unknown task {task_id!r}")
        task = get_task(task_id)
        session_id = uuid.uuid4().hex[:12]
        gs = GatewaySession(
            session_id=session_id, mode=mode,
            session=start_session(task, seed, session_id=session_id),
            budget_left=int(body.get("intervention_budget", self.default_budget)),
        )
        with self.registry_lock:
            self.sessions[session_id] = gs
        obs = render(gs.session.world)
        return {
            "session_id": session_id,
            "mode": mode,
            "task_id": task_id,
            "seed": seed,
            "instruction": gs.session.instruction,
            "observation_png_b64": base64.b64encode(observation_png(obs)).decode("ascii"),
            "step": 0,
        }

    def _acquire(self, gs: GatewaySession):
        if gs.closed:
            raise GatewayError(409, "session already finished")
        if not gs.lock.acquire(blocking=False):
            raise GatewayError(409, "busy: a command is already in flight")
        if gs.closed:  # closed while we were acquiring
            gs.lock.release()
            raise GatewayError(409, "session already finished")
        gs.last_active = time.monotonic()

    def session_state(self, session_id: str) -> dict:
        gs = self._get(session_id)
        world = gs.session.world
        return {
            "session_id": session_id,
            "mode": gs.mode,
            "status": ("done" if gs.closed else "active"),
            "step_count": world.step_count,
            "transitions": len(gs.session.transitions),
            "pose": {
                "x": world.pose.x, "y": world.pose.y, "z": world.pose.z,
                "roll": world.pose.roll, "pitch": world.pose.pitch,
                "yaw": world.pose.yaw, "grip_rot": world.pose.grip_rot,
                "open": world.pose.open,
            },
            "success": check_success(world, gs.session.task),
            "budget_left": gs.budget_left,
            "instruction": gs.session.instruction,
        }

    def observation(self, session_id: str) -> bytes:
        gs = self._get(session_id)
        return observation_png(render(gs.session.world))

    def supervise(self, session_id: str, body: dict) -> dict:
        gs = self._get(session_id)
        if gs.mode != "teleop":
            raise GatewayError(409, f"session mode is {gs.mode!r}, not teleop")
        text = body.get("text", "")
        if not text:
            raise GatewayError(400, "missing supervision text")
        self._acquire(gs)
        try:
            obs, transition = step_session(gs.session, text)
            success = check_success(gs.session.world, gs.session.task)
            if transition is not None:
                self._frame(gs, transition.primitive, success, obs)
            return {
                "recognized": transition is not None,
                "primitive_id": None if transition is None else transition.primitive.id,
                "primitive_text": (None if transition is None
                                   else transition.primitive.canonical_text),
                "action": (None if transition is None
                           else [float(v) for v in transition.action.vector()]),
                "observation_png_b64": base64.b64encode(
                    observation_png(obs)).decode("ascii"),
                "step": len(gs.session.transitions),
                "success": success,
            }
        finally:
            gs.lock.release()

    def policy_step(self, session_id: str, body: dict) -> dict:
        gs = self._get(session_id)
        if gs.mode == "teleop":
            raise GatewayError(409, "session mode is teleop; use supervision")
        self._acquire(gs)
        try:
            session = gs.session
            obs_before = render(session.world)
            scores = score_primitives(obs_before, session.instruction,
                                      self.vocab, self.params, self.cache)
            chosen = select_action(scores, self.vocab)
            intervened = False
            if (gs.mode == "policy+intervention" and gs.pending_correction
                    and gs.budget_left > 0):
                raw = translate_supervision(gs.pending_correction)
                gs.pending_correction = None
                if not raw.is_zero():
                    correction = action_to_primitive(raw)
                    if correction.id != chosen.id:
                        chosen = correction
                        gs.budget_left -= 1
                        intervened = True
            action = primitive_to_action(chosen)
            session.world = apply_action(session.world, action)
            session.transitions.append(Transition(
                observation=obs_before, instruction=session.instruction,
                supervision=chosen.canonical_text, primitive=chosen,
                action=action))
            obs = render(session.world)
            success = check_success(session.world, session.task)
            self._frame(gs, chosen, success, obs)
            return {
                "primitive_id": chosen.id,
                "primitive_text": chosen.canonical_text,
                "intervened": intervened,
                "budget_left": gs.budget_left,
                "scores": [float(v) for v in scores.probabilities],
                "cosines": [float(v) for v in scores.cosines],
                "observation_png_b64": base64.b64encode(
                    observation_png(obs)).decode("ascii"),
                "step": len(session.transitions),
                "success": success,
            }
        finally:
            gs.lock.release()

    def intervene(self, session_id: str, body: dict) -> dict:
        gs = self._get(session_id)
        if gs.mode != "policy+intervention":
            raise GatewayError(409, "session does not accept interventions")
        text = body.get("text", "")
        if not text:
            raise GatewayError(400, "missing correction text")
        self._acquire(gs)
        try:
            if gs.budget_left <= 0:
                raise GatewayError(409, "intervention budget exhausted")
            gs.pending_correction = text
            return {"accepted": True, "budget_left": gs.budget_left,
                    "pending": text}
        finally:
            gs.lock.release()

    def finish(self, session_id: str, aborted: bool = False) -> dict:
        gs = self._get(session_id)
        self._acquire(gs)
        try:
            return self._finish_locked(gs, aborted=aborted)
        finally:
            gs.lock.release()

    def vocabulary(self) -> dict:
        return {
            "version": 1,
            "size": len(self.vocab),
            "primitives": [
                {"id": p.id, "text": p.canonical_text,
                 "action": [float(v) for v in primitive_to_action(p).vector()]}
                for p in self.vocab.primitives
            ],
        }

    def frames_since(self, session_id: str, start: int, timeout: float = 10.0):
        """Frames from index `start`, blocking briefly for new ones; ends when
        the session closes."""
        gs = self._get(session_id)
        idx = start
        deadline = time.monotonic() + timeout
        while True:
            with gs.frame_ready:
                while idx >= len(gs.frames) and not gs.closed:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        return
                    gs.frame_ready.wait(timeout=min(remaining, 0.25))
                if idx < len(gs.frames):
                    frame = gs.frames[idx]
                else:
                    return
            idx += 1
            yield frame


def api_description() -> dict:
    """Machine-readable wire contract for UI clients."""
    return {
        "name": "langarm-gateway",
        "version": 1,
        "frame_version": FRAME_VERSION,
        "modes": list(MODES),
        "endpoints": [
            {"method": "POST", "path": "/sessions",
             "body": {"task_id": "str", "seed": "int", "mode": "str",
                      "intervention_budget": "int?"},
             "returns": {"session_id": "str", "mode": "str", "task_id": "str",
                         "seed": "int", "instruction": "str",
                         "observation_png_b64": "str", "step": "int"}},
            {"method": "GET", "path": "/sessions/{id}",
             "returns": {"session_id": "str", "mode": "str", "status": "str",
                         "step_count": "int", "transitions": "int",
                         "pose": "object", "success": "bool",
                         "budget_left": "int", "instruction": "str"}},
            {"method": "GET", "path": "/sessions/{id}/observation",
             "returns": "image/png"},
            {"method": "POST", "path": "/sessions/{id}/supervision",
             "body": {"text": "str"},
             "returns": {"recognized": "bool", "primitive_id": "int|null",
                         "primitive_text": "str|null", "action": "list|null",
                         "observation_png_b64": "str", "step": "int",
                         "success": "bool"}},
            {"method": "POST", "path": "/sessions/{id}/policy_step",
             "body": {},
             "returns": {"primitive_id": "int", "primitive_text": "str",
                         "intervened": "bool", "budget_left": "int",
                         "scores": "list", "cosines": "list",
                         "observation_png_b64": "str", "step": "int",
                         "success": "bool"}},
            {"method": "POST", "path": "/sessions/{id}/intervention",
             "body": {"text": "str"},
             "returns": {"accepted": "bool", "budget_left": "int",
                         "pending": "str"}},
            {"method": "POST", "path": "/sessions/{id}/finish",
             "returns": {"episode_path": "str", "transitions": "int",
                         "success": "bool", "status": "str"}},
            {"method": "POST", "path": "/sessions/{id}/abort",
             "returns": {"episode_path": "str", "transitions": "int",
                         "success": "bool", "status": "str"}},
            {"method": "GET", "path": "/vocabulary",
             "returns": {"version": "int", "size": "int", "primitives": "list"}},
            {"method": "GET", "path": "/sessions/{id}/events",
             "returns": ("application/x-ndjson stream of frames "
                         "{v, step, primitive_id, primitive_text, success, "
                         "observation_png_b64}")},
            {"method": "GET", "path": "/api", "returns": "this document"},
        ],
        "errors": {"404": "unknown session", "409": "busy or finished or wrong mode",
                   "400": "malformed request"},
    }


_SESSION_RE = re.compile(r"^/sessions/([0-9a-f]+)(/([a-z_]+))?$")


class _Handler(BaseHTTPRequestHandler):
    gateway: Gateway = None  # injected by serve()
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        logger.debug("gateway: " + fmt, *args)

    def _send_json(self, payload: dict, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError as err:
            raise GatewayError(400, f"malformed JSON body: {err.msg}") from err

    def _dispatch(self, method: str) -> None:
        try:
            self._route(method)
        except GatewayError as err:
            self._send_json({"error": err.message}, status=err.status)
        except Exception as err:  # noqa: BLE001
            logger.exception("gateway internal error")
            self._send_json({"error": str(err)}, status=500)

    def _route(self, method: str) -> None:
        gw = self.gateway
        path = self.path.split("?")[0]
        # always drain the request body: leftover bytes would corrupt the
        # next request on a pooled keep-alive connection
        body = self._body() if method == "POST" else {}
        if method == "GET" and path == "/api":
            self._send_json(api_description())
            return
        if method == "GET" and path == "/vocabulary":
            self._send_json(gw.vocabulary())
            return
        if method == "POST" and path == "/sessions":
            self._send_json(gw.create_session(body), status=201)
            return
        match = _SESSION_RE.match(path)
        if not match:
            raise GatewayError(404, f"no route for {method} {path}")
        session_id, action = match.group(1), match.group(3)
        if method == "GET" and action is None:
            self._send_json(gw.session_state(session_id))
            return
        if method == "GET" and action == "observation":
            png = gw.observation(session_id)
            self.send_response(200)
            self.send_header("Content-Type", "image/png")
            self.send_header("Content-Length", str(len(png)))
            self.end_headers()
            self.wfile.write(png)
            return
        if method == "GET" and action == "events":
            self._stream(session_id)
            return
        if method == "POST" and action == "supervision":
            self._send_json(gw.supervise(session_id, body))
            return
        if method == "POST" and action == "policy_step":
            self._send_json(gw.policy_step(session_id, body))
            return
        if method == "POST" and action == "intervention":
            self._send_json(gw.intervene(session_id, body))
            return
        if method == "POST" and action == "finish":
            self._send_json(gw.finish(session_id, aborted=False))
            return
        if method == "POST" and action == "abort":
            self._send_json(gw.finish(session_id, aborted=True))
            return
        raise GatewayError(404, f"no route for {method} {path}")

    def _stream(self, session_id: str) -> None:
        query = ""
        if "?" in self.path:
            query = self.path.split("?", 1)[1]
        start = 0
        timeout = 10.0
        for part in query.split("&"):
            if part.startswith("from="):
                start = int(part[5:])
            if part.startswith("timeout="):
                timeout = float(part[8:])
        self.send_response(200)
        self.send_header("Content-Type", "application/x-ndjson")
        self.send_header("Transfer-Encoding", "chunked")
        self.end_headers()

        def chunk(data: bytes) -> None:
            self.wfile.write(f"{len(data):X}\r\n".encode("ascii"))
            self.wfile.write(data + b"\r\n")
            self.wfile.flush()

        try:
            for frame in self.gateway.frames_since(session_id, start, timeout):
                chunk((json.dumps(frame) + "\n").encode("utf-8"))
        finally:
            self.wfile.write(b"0\r\n\r\n")
            self.wfile.flush()

    def do_GET(self):  # noqa: N802 - BaseHTTPRequestHandler contract
        self._dispatch("GET")

    def do_POST(self):  # noqa: N802
        self._dispatch("POST")


@dataclass
class RunningGateway:
    gateway: Gateway
    server: ThreadingHTTPServer
    thread: threading.Thread

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve(port: int = 0, params=None, episode_dir: str = ".",
          task_ids=None, idle_timeout: float = 1800.0,
          default_budget: int = 4, background: bool = True) -> RunningGateway:
    """Start the gateway; port 0 picks a free port. With background=False the
    call blocks until interrupted."""
    gateway = Gateway(params=params, episode_dir=episode_dir, task_ids=task_ids,
                      idle_timeout=idle_timeout, default_budget=default_budget)
    handler = type("BoundHandler", (_Handler,), {"gateway": gateway})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    running = RunningGateway(gateway=gateway, server=server, thread=thread)
    logger.info("gateway listening on %s", running.url)
    if not background:
        try:
            thread.join()
        except KeyboardInterrupt:
            running.shutdown()
    return running
