"""Live telemetry/control endpoint: the paced loop behind a WebSocket.

A dedicated thread advances the closed loop in paced mode while an asyncio
server relays newline-delimited JSON in both directions.  Inbound control
messages become callables on the loop's control queue, so component state
is only ever touched from the loop thread; outbound telemetry frames fan
out to per-client queues and are dropped for readers that fall behind,
never buffered without bound and never allowed to stall the loop.

Wire format, one JSON object per line:

  inbound   {"type": "setpoint", "rpm": 40}
            {"type": "rocker", "on": false}
            {"type": "gains", "ki": 0.45, "kp": 0.0}
  outbound  {"t": .., "theta_deg": .., "rpm_set": .., "rpm_meas": ..,
             "error": .., "power_pct": .., "status": "..",
             "channels": [{"id": "LQ", "active": true, "current_mA": 23}, ..],
             "pedal_N": [l, r], "mmg_env": [q, h, q, h]}
"""

from __future__ import annotations

import asyncio
import json
import math
import queue
import threading
from dataclasses import replace
from typing import Optional, Sequence

from websockets.asyncio.server import serve
from websockets.exceptions import ConnectionClosed

from .controller import ControllerGains
from .loop import (
    ClosedLoop,
    LoopConfig,
    LoopMetrics,
    Mode,
    TelemetryFrame,
    TelemetrySink,
    run_paced,
)
from .plant import PlantParams
from .stim import ChannelConfig

TELEMETRY_QUEUE_FRAMES = 64


def frame_to_json(frame: TelemetryFrame) -> str:
    """Serialize one telemetry frame to its wire line (no trailing newline)."""
    rpm_meas = None if frame.rpm_meas is None else round(frame.rpm_meas, 4)
    return json.dumps({
        "t": round(frame.t_s, 4),
        "theta_deg": round(frame.theta_deg, 3),
        "rpm_set": frame.rpm_set,
        "rpm_meas": rpm_meas,
        "error": round(frame.error_rpm, 4),
        "power_pct": round(frame.power_pct, 3),
        "status": frame.status,
        "channels": [{"id": name, "active": active, "current_mA": current}
                     for name, active, current in frame.channels],
        "pedal_N": [round(f, 3) for f in frame.pedal_n],
        "mmg_env": [round(e, 5) for e in frame.mmg_env],
    }, separators=(",", ":"))


class TelemetryServer:
    """Owns the loop thread, the broadcast thread and the asyncio server."""

    def __init__(self, config: Optional[LoopConfig] = None,
                 params: Optional[PlantParams] = None,
                 gains: Optional[ControllerGains] = None,
                 stim_configs: Optional[Sequence[ChannelConfig]] = None,
                 host: str = "127.0.0.1", port: int = 8765):
        if config is None:
            config = LoopConfig(fs_hz=100.0, duration_s=math.inf,
                                mode=Mode.PACED)
        self.cfg = config
        self.host = host
        self.port = port
        self.sim = ClosedLoop(config, params=params, gains=gains,
                              stim_configs=stim_configs)
        self.controls: queue.Queue = queue.Queue()
        self.sink = TelemetrySink(maxsize=256)
        self.metrics: Optional[LoopMetrics] = None
        self._clients: set[asyncio.Queue] = set()
        self._aloop: Optional[asyncio.AbstractEventLoop] = None
        self._shutdown: Optional[asyncio.Event] = None
        self._stop = threading.Event()
        self._ready = threading.Event()
        self._error: Optional[BaseException] = None
        self._threads: list[threading.Thread] = []

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> int:
        """Bind, launch the loop and broadcast threads, return the port."""
        self._threads = [
            threading.Thread(target=self._serve_async, daemon=True),
            threading.Thread(target=self._run_loop, daemon=True),
            threading.Thread(target=self._broadcast, daemon=True),
        ]
        for t in self._threads:
            t.start()
        self._ready.wait(timeout=10.0)
        if self._error is not None:
            self._stop.set()
            raise self._error
        if not self._ready.is_set():
            self._stop.set()
            raise RuntimeError("server did not come up within 10 s")
        return self.port

    def stop(self) -> None:
        self._stop.set()
        if self._aloop is not None and self._shutdown is not None:
            try:
                self._aloop.call_soon_threadsafe(self._shutdown.set)
            except RuntimeError:
                pass  # asyncio loop already closed
        for t in self._threads:
            t.join(timeout=5.0)

    def run_forever(self) -> None:
        """Blocking convenience for the CLI; returns after KeyboardInterrupt."""
        if not self._threads:
            self.start()
        try:
            while not self._stop.wait(timeout=0.5):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    # -- threads -----------------------------------------------------------

    def _run_loop(self) -> None:
        try:
            self.metrics = run_paced(self.sim, sinks=(self.sink,),
                                     stop=self._stop.is_set,
                                     control_queue=self.controls)
        except BaseException as exc:
            self._error = exc
            self._stop.set()

    def _broadcast(self) -> None:
        while not self._stop.is_set():
            frame = self.sink.get(timeout=0.2)
            if frame is None:
                continue
            line = frame_to_json(frame) + "\n"
            if self._aloop is not None and self._clients:
                try:
                    self._aloop.call_soon_threadsafe(self._fanout, line)
                except RuntimeError:
                    break  # asyncio loop closed under us; shutting down

    def _serve_async(self) -> None:
        try:
            asyncio.run(self._amain())
        except BaseException as exc:
            self._error = exc
            self._ready.set()
            self._stop.set()

    async def _amain(self) -> None:
        self._aloop = asyncio.get_running_loop()
        self._shutdown = asyncio.Event()
        async with serve(self._handler, self.host, self.port) as server:
            sock = next(iter(server.sockets))
            self.port = sock.getsockname()[1]
            self._ready.set()
            await self._shutdown.wait()

    # -- per-connection ----------------------------------------------------

    def _fanout(self, line: str) -> None:
        for q in list(self._clients):
            try:
                q.put_nowait(line)
            except asyncio.QueueFull:
                pass  # slow reader: frames are snapshots, drop is safe

    async def _handler(self, ws) -> None:
        q: asyncio.Queue = asyncio.Queue(maxsize=TELEMETRY_QUEUE_FRAMES)
        self._clients.add(q)
        writer = asyncio.ensure_future(self._writer(ws, q))
        try:
            async for message in ws:
                self._dispatch(message)
        except ConnectionClosed:
            pass
        finally:
            self._clients.discard(q)
            writer.cancel()

    async def _writer(self, ws, q: asyncio.Queue) -> None:
        try:
            while True:
                await ws.send(await q.get())
        except (ConnectionClosed, asyncio.CancelledError):
            pass

    # -- inbound control ---------------------------------------------------

    def _dispatch(self, message) -> None:
        if isinstance(message, bytes):
            message = message.decode("utf-8", errors="replace")
        for line in message.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError:
                continue  # garbage on the wire never reaches the loop
            if isinstance(msg, dict):
                self._apply(msg)

    def _apply(self, msg: dict) -> None:
        kind = msg.get("type")
        if kind == "setpoint":
            try:
                rpm = float(msg.get("rpm"))
            except (TypeError, ValueError):
                return
            if not (0.0 <= rpm <= 120.0 and math.isfinite(rpm)):
                return

            def set_rpm(sim: ClosedLoop, rpm=rpm) -> None:
                sim.setpoint_rpm = rpm

            self.controls.put(set_rpm)
        elif kind == "rocker":
            on = bool(msg.get("on"))

            def set_rocker(sim: ClosedLoop, on=on) -> None:
                sim.enabled = on

            self.controls.put(set_rocker)
        elif kind == "gains":
            fields = {k: float(msg[k]) for k in ("ki", "kp", "kd")
                      if k in msg and isinstance(msg[k], (int, float))}
            if not fields:
                return

            def set_gains(sim: ClosedLoop, fields=fields) -> None:
                try:
                    sim.gains = replace(sim.gains, **fields)
                except ValueError:
                    pass  # out-of-range gains are refused, not clamped

            self.controls.put(set_gains)
