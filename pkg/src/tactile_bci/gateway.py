"""WebSocket gateway: one live session per connection, JSON text frames.

The console connects, sends hello (which calibrates a decoder for the
requested condition and day), then drives runs with start_run and steers
the synthetic subject's attention with set_attention. The server streams
stimulus, decision, feedback, arm_state, run_end, heartbeat, and error
events, each stamped with a strictly increasing sequence number. Stimuli
are paced on the wall clock (400 ms cadence at pace_scale 1; larger
scales compress wall time without touching the simulated clock).
"""

from __future__ import annotations

import asyncio
import json
import uuid
from dataclasses import asdict

from starlette.applications import Starlette
from starlette.routing import WebSocketRoute
from starlette.websockets import WebSocket, WebSocketDisconnect

from .config import ConfigError, ExperimentConfig, config_from_dict
from .decoder import ContinuousState, OnlineTrialState
from .layout import ChannelLayout
from .live import EVENT_STIMULUS, LiveRun
from .preprocess import extract_feature_window, preprocess_epoch
from .profiles import CONDITIONS, DAYS
from .robot import apply_command, builtin_scripts, legal_commands
from .scheduler import VIBRATOR_IDS, build_run_schedule
from .session import build_context, derive_seed, run_calibration

PROTOCOL_VERSION = 1
HEARTBEAT_INTERVAL_S = 5.0
_PHASE_LIVE = 6

MODE_TRIAL = "trial"
MODE_CONTINUOUS = "continuous"
_CONDITION_INDEX = {"single": 1, "dual": 2}


class ProtocolError(Exception):
    """Client fault that warrants an error message, not a disconnect."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _world_payload(world) -> dict:
    return {
        "arm1": asdict(world.arm1),
        "arm2": asdict(world.arm2),
        "cup": world.cup,
        "cup_has_straw": world.cup_has_straw,
        "straw": world.straw,
        "ball": world.ball,
        "delivered": world.delivered,
    }


class GatewaySession:
    """State and event plumbing for one connection."""

    def __init__(self, ws: WebSocket):
        self.ws = ws
        self.session_id = uuid.uuid4().hex[:12]
        self.seq = 0
        self._send_lock = asyncio.Lock()
        self._last_client_seq: int | None = None

        self.config: ExperimentConfig | None = None
        self.condition = "single"
        self.day = 3
        self.ctx = None
        self.model = None
        self.attention: object = "cue"   # "cue" | None | vibrator id
        self.live: LiveRun | None = None
        self.run_task: asyncio.Task | None = None
        self.run_counter = 0
        self.task_name: str | None = None
        self.world = None

    async def send(self, kind: str, payload: dict) -> None:
        async with self._send_lock:
            self.seq += 1
            frame = {"v": PROTOCOL_VERSION, "kind": kind, "seq": self.seq,
                     "session": self.session_id, "payload": payload}
            await self.ws.send_text(json.dumps(frame))

    async def send_error(self, code: str, message: str) -> None:
        await self.send("error", {"code": code, "message": message})

    # --- client message handling ---------------------------------------

    def _check_client_seq(self, frame: dict) -> None:
        seq = frame.get("seq")
        if seq is None:
            return
        if not isinstance(seq, int):
            raise ProtocolError("bad_payload", "seq must be an integer")
        if self._last_client_seq is not None and seq <= self._last_client_seq:
            raise ProtocolError(
                "bad_seq", f"client seq {seq} not greater than {self._last_client_seq}")
        self._last_client_seq = seq

    async def handle(self, frame: dict) -> None:
        kind = frame.get("kind")
        payload = frame.get("payload") or {}
        if not isinstance(kind, str):
            raise ProtocolError("bad_payload", "missing message kind")
        if not isinstance(payload, dict):
            raise ProtocolError("bad_payload", "payload must be an object")
        self._check_client_seq(frame)
        if kind == "hello":
            await self.handle_hello(payload)
        elif kind == "start_run":
            await self.handle_start_run(payload)
        elif kind == "set_attention":
            await self.handle_set_attention(payload)
        else:
            raise ProtocolError("unknown_kind", f"unknown message kind {kind!r}")

    async def handle_hello(self, payload: dict) -> None:
        if self.model is not None:
            raise ProtocolError("bad_state", "session already configured")
        condition = payload.get("condition", "single")
        day = payload.get("day", 3)
        if condition not in CONDITIONS:
            raise ProtocolError("bad_payload", f"condition must be one of {CONDITIONS}")
        if day not in DAYS:
            raise ProtocolError("bad_payload", f"day must be one of {DAYS}")
        try:
            config = config_from_dict(payload.get("config") or {})
            config.validate()
        except (ConfigError, TypeError) as exc:
            raise ProtocolError("bad_payload", f"bad config: {exc}") from None
        self.condition, self.day, self.config = condition, day, config

        self.ctx = build_context(config, condition, day)
        calibration = await asyncio.to_thread(
            run_calibration, condition, day, config, self.ctx)
        self.model = calibration.model
        profile = self.ctx.profile
        await self.send("hello", {
            "protocol": PROTOCOL_VERSION,
            "condition": condition,
            "day": day,
            "seed": config.seed,
            "n_rounds": config.n_rounds,
            "heartbeat_s": HEARTBEAT_INTERVAL_S,
            "scripts": sorted(builtin_scripts()),
            "profile": {
                "p300_amp_uV": profile.p300_amp_uV,
                "p300_latency_ms": profile.p300_latency_ms,
                "lapse_prob": profile.lapse_prob,
            },
            "model": {
                "threshold": self.model.threshold,
                "threshold_mode": self.model.threshold_mode,
                "n_calibration_epochs": calibration.n_epochs,
                "n_training_instances": calibration.n_instances,
                "duality_gap": self.model.svm.duality_gap,
                "config_hash": self.model.config_hash,
            },
        })

    async def handle_set_attention(self, payload: dict) -> None:
        if "vibrator" not in payload:
            raise ProtocolError("bad_payload", "set_attention needs a vibrator field")
        vibrator = payload["vibrator"]
        if vibrator is not None and vibrator not in VIBRATOR_IDS:
            raise ProtocolError("bad_payload", f"vibrator must be null or in {VIBRATOR_IDS}")
        self.attention = vibrator
        if self.live is not None:
            self.live.set_attention(vibrator)

    async def handle_start_run(self, payload: dict) -> None:
        if self.model is None:
            raise ProtocolError("bad_state", "send hello before start_run")
        if self.run_task is not None and not self.run_task.done():
            raise ProtocolError("bad_state", "a run is already in progress")
        target = payload.get("target")
        if target not in VIBRATOR_IDS:
            raise ProtocolError("bad_payload", f"target must be one of {VIBRATOR_IDS}")
        mode = payload.get("mode", MODE_TRIAL)
        if mode not in (MODE_TRIAL, MODE_CONTINUOUS):
            raise ProtocolError("bad_payload", "mode must be 'trial' or 'continuous'")
        pace_scale = payload.get("pace_scale", 1.0)
        if not isinstance(pace_scale, (int, float)) or not 0.1 <= pace_scale <= 1e9:
            raise ProtocolError("bad_payload", "pace_scale must lie in [0.1, 1e9]")
        n_rounds = payload.get("n_rounds", self.config.n_rounds)
        if not isinstance(n_rounds, int) or not 4 <= n_rounds <= 100:
            raise ProtocolError("bad_payload", "n_rounds must be an integer in [4, 100]")
        task = payload.get("task")
        if task is not None:
            scripts = builtin_scripts()
            if task not in scripts:
                raise ProtocolError("bad_payload", f"unknown task {task!r}")
            if task != self.task_name:
                self.task_name = task
                self.world = scripts[task].initial_world
        self.run_task = asyncio.create_task(
            self._run(target=target, mode=mode, n_rounds=n_rounds,
                      pace_scale=float(pace_scale)))

    # --- the run loop ----------------------------------------------------

    async def _run(self, target: int, mode: str, n_rounds: int,
                   pace_scale: float) -> None:
        config, ctx = self.config, self.ctx
        cond_idx = _CONDITION_INDEX[self.condition]
        run_idx = self.run_counter
        self.run_counter += 1
        seed = derive_seed(config.seed, self.day, cond_idx, _PHASE_LIVE, run_idx)
        schedule = build_run_schedule(target, n_rounds, seed, config.forbid_repeat)
        attention = target if self.attention == "cue" else self.attention
        live = LiveRun(schedule, ctx.profile, seed, ctx.layout, attention=attention)
        self.live = live
        if mode == MODE_TRIAL:
            state = OnlineTrialState(self.model, target, n_rounds)
        else:
            state = ContinuousState(self.model, target, n_rounds)

        loop = asyncio.get_running_loop()
        wall_start = loop.time()
        terminated = False
        try:
            while not live.finished and not terminated:
                next_ms = live.next_event_time_ms()
                delay = wall_start + next_ms / 1000.0 / pace_scale - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                for event in live.advance(next_ms):
                    if event.kind == EVENT_STIMULUS:
                        await self.send("stimulus", {
                            "run": run_idx,
                            "round": event.stimulus.round_index + 1,
                            "vibrator": event.stimulus.vibrator,
                            "onset_ms": event.stimulus.onset_ms,
                            "sim_time_ms": event.time_ms,
                        })
                        continue
                    processed = preprocess_epoch(event.epoch, ctx.layout,
                                                 ctx.bandpass, ctx.notch)
                    window = extract_feature_window(processed, ctx.layout)
                    decision = state.push(event.stimulus, window)
                    if decision is None:
                        continue
                    await self._emit_decision(state, decision, run_idx, live, target, mode)
                    if mode == MODE_TRIAL and state.result is not None:
                        terminated = True
                        break
            outcome = state.finish()
            payload = {"run": run_idx, "mode": mode, "target": target,
                       "sim_time_ms": live.clock_ms}
            if mode == MODE_TRIAL:
                payload.update(result=outcome.result, attempts=outcome.attempts,
                               n_decisions=len(outcome.decisions))
            else:
                payload.update(acc_pct=outcome.acc_pct, fpr_pct=outcome.fpr_pct,
                               n_windows=outcome.n_windows,
                               sustained=list(outcome.sustained_runs()))
            await self.send("run_end", payload)
        except asyncio.CancelledError:
            raise
        except Exception as exc:  # report, keep the connection alive
            await self.send_error("internal", f"run failed: {exc}")
            await self.send("run_end", {"run": run_idx, "mode": mode, "target": target,
                                        "result": "aborted"})
        finally:
            self.live = None

    async def _emit_decision(self, state, decision, run_idx: int, live: LiveRun,
                             target: int, mode: str) -> None:
        averages = state.buffer.averages()
        cz = {}
        for v, avg in averages.items():
            cz[str(v)] = None if avg is None else [
                round(float(x), 3) for x in avg[self._cz_row(live.layout)]]
        await self.send("decision", {
            "run": run_idx,
            "round": decision.round_index,
            "scores": [round(float(s), 6) for s in decision.scores],
            "detected": decision.detected,
            "is_decision_round": decision.is_decision_round,
            "threshold": self.model.threshold,
            "cz_avg": cz,
        })
        if decision.detected is None or not decision.is_decision_round:
            return
        await self.send("feedback", {
            "run": run_idx,
            "round": decision.round_index,
            "detected": decision.detected,
            "target": target,
            "correct": decision.detected == target,
        })
        if self.task_name is not None:
            await self._apply_robot_command(decision.detected, run_idx)

    def _cz_row(self, layout: ChannelLayout) -> int:
        # feature window rows follow layout.feature_channels() order
        return layout.feature_channels().index("Cz")

    async def _apply_robot_command(self, command: int, run_idx: int) -> None:
        script = builtin_scripts()[self.task_name]
        result = apply_command(self.world, script, command)
        self.world = result.world
        await self.send("arm_state", {
            "run": run_idx,
            "task": self.task_name,
            "command": command,
            "accepted": result.accepted,
            "action": result.action.name if result.action else None,
            "reason": result.reason,
            "goal_reached": bool(script.goal(self.world)),
            "legal_commands": list(legal_commands(script, self.world)),
            "world": _world_payload(self.world),
        })

    # --- background tasks -------------------------------------------------

    async def heartbeat_loop(self) -> None:
        while True:
            await asyncio.sleep(HEARTBEAT_INTERVAL_S)
            clock = self.live.clock_ms if self.live is not None else None
            await self.send("heartbeat", {"sim_time_ms": clock})

    async def reader_loop(self) -> None:
        while True:
            text = await self.ws.receive_text()
            try:
                frame = json.loads(text)
            except json.JSONDecodeError:
                await self.send_error("bad_json", "frame is not valid JSON")
                continue
            if not isinstance(frame, dict):
                await self.send_error("bad_payload", "frame must be a JSON object")
                continue
            try:
                await self.handle(frame)
            except ProtocolError as exc:
                await self.send_error(exc.code, str(exc))


async def session_endpoint(ws: WebSocket) -> None:
    await ws.accept()
    session = GatewaySession(ws)
    heartbeat = asyncio.create_task(session.heartbeat_loop())
    try:
        await session.reader_loop()
    except WebSocketDisconnect:
        pass
    finally:
        heartbeat.cancel()
        if session.run_task is not None:
            session.run_task.cancel()


def build_app() -> Starlette:
    return Starlette(routes=[WebSocketRoute("/session", session_endpoint)])


def serve(host: str = "127.0.0.1", port: int = 8765) -> None:
    """Blocking entry point used by the command line."""
    import uvicorn

    uvicorn.run(build_app(), host=host, port=port, log_level="warning")
