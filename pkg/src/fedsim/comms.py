"""Live mode: coordinator and workers over a local length-prefixed protocol.

Each frame is a 4-byte big-endian length prefix followed by a UTF-8 JSON
body with a `type` field. Workers register, receive task assignments,
sleep for the dilated solo-at-budget duration, optionally run local
training, and upload their delta. The coordinator drives the same
scheduler and slot bookkeeping as the simulation engine; contention
timing is NOT physically enforced here, so the engine stays authoritative
for timing while live mode validates the distributed state machine.
"""

from __future__ import annotations

import json
import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import fl_core
from .cost_model import CostCoefficients, solo_time, work_units
from .engine import DataParams, ExperimentReport, TrainParams
from .errors import ConfigError, ProtocolError
from .executor_manager import (
    ClientRequest,
    ExecutorManager,
    Lifecycle,
    RequestKind,
)
from .profiles import ClientProfile, FleetConfig
from .scheduler import Participant

log = logging.getLogger(__name__)

MESSAGE_TYPES = {
    "register",
    "task_assign",
    "training_complete",
    "model_upload",
    "terminate",
    "ack",
}


def send_message(sock: socket.socket, body: dict) -> None:
    if body.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {body.get('type')!r}")
    payload = json.dumps(body, sort_keys=True).encode()
    sock.sendall(struct.pack(">I", len(payload)) + payload)


def recv_message(sock: socket.socket) -> dict | None:
    """Read one frame; None on clean EOF; ProtocolError on malformed input."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    payload = _recv_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    try:
        body = json.loads(payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"bad frame body: {e}") from e
    if not isinstance(body, dict) or body.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type in frame: {body!r}")
    return body


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


@dataclass
class _WorkerConn:
    executor_id: int
    sock: socket.socket
    current_client: str | None = None
    alive: bool = True
    message_log: list[str] = field(default_factory=list)


class Coordinator:
    """Long-lasting server process driving live rounds over real sockets.

    All scheduler/manager mutations happen under one lock, giving the
    serialized command stream the state machine requires; per-connection
    handler threads only read sockets and submit events.
    """

    def __init__(
        self,
        cfg: FleetConfig,
        fleet: list[ClientProfile],
        bind_address: tuple[str, int],
        workers_expected: int,
        time_dilation: float = 0.001,
        data: DataParams | None = None,
        train: TrainParams | None = None,
    ):
        if time_dilation <= 0:
            raise ConfigError("time_dilation must be > 0")
        cfg.validate(fleet_size=len(fleet))
        self.cfg = cfg
        self.fleet = {p.client_id: p for p in fleet}
        self.bind_address = bind_address
        self.workers_expected = workers_expected
        self.time_dilation = time_dilation
        self.data = data or DataParams()
        self.train = train or TrainParams(enabled=False)
        self.coeffs = CostCoefficients(cfg.alpha, cfg.beta)
        self.lock = threading.Lock()
        self.events: queue.Queue = queue.Queue()
        self.workers: dict[int, _WorkerConn] = {}
        self.launch_order: list[str] = []
        self.wall_trace: list[dict] = []
        self.retried: set[str] = set()
        self.round_failed = False
        self._params: np.ndarray | None = None
        self._deltas: dict[str, np.ndarray] = {}
        self._uploads_pending: set[str] = set()
        self._completion_wall: dict[str, float] = {}
        self._shards = None
        self._test = None
        self.bound_port: int | None = None
        self._t0 = None
        self._round_index = 0

    # -- wiring ----------------------------------------------------------

    def serve(self) -> ExperimentReport:
        server = socket.create_server(self.bind_address)
        self.bound_port = server.getsockname()[1]
        server.settimeout(30.0)
        try:
            self._accept_workers(server)
            return self._run_rounds()
        finally:
            for w in self.workers.values():
                try:
                    w.sock.close()
                except OSError:
                    pass
            server.close()

    def _accept_workers(self, server: socket.socket) -> None:
        while len(self.workers) < self.workers_expected:
            sock, _addr = server.accept()
            msg = recv_message(sock)
            if msg is None or msg["type"] != "register":
                sock.close()
                continue
            executor_id = len(self.workers)
            conn = _WorkerConn(executor_id, sock)
            conn.message_log.append("register")
            self.workers[executor_id] = conn
            send_message(sock, {"type": "ack", "executor_id": executor_id})
            threading.Thread(
                target=self._reader, args=(conn,), daemon=True
            ).start()

    def _reader(self, conn: _WorkerConn) -> None:
        try:
            while True:
                msg = recv_message(conn.sock)
                if msg is None:
                    break
                conn.message_log.append(msg["type"])
                self.events.put(("msg", conn.executor_id, msg))
        except (ProtocolError, OSError) as e:
            log.warning("worker %d connection error: %s", conn.executor_id, e)
        self.events.put(("gone", conn.executor_id, None))

    # -- experiment loop -------------------------------------------------

    def _run_rounds(self) -> ExperimentReport:
        import random as _random

        if self.train.enabled:
            n_total = sum(p.workload.num_samples for p in self.fleet.values())
            import math as _math

            train_ds, self._test = fl_core.make_synthetic_dataset(
                self.data.features,
                self.data.classes,
                max(_math.ceil(n_total / 0.8), 10),
                fl_core.stable_seed("data", self.cfg.seed),
            )
            self._shards = fl_core.partition_noniid(
                train_ds,
                [(p.client_id, p.workload.num_samples) for p in self.fleet.values()],
                self.data.alpha,
                fl_core.stable_seed("partition", self.cfg.seed),
            )
            self._params = fl_core.init_params(self.data.features, self.data.classes)

        select_rng = _random.Random(f"{self.cfg.seed}:selection")
        ids = sorted(self.fleet)
        report = ExperimentReport()
        self._t0 = time.monotonic()
        for r in range(self.cfg.rounds):
            participants = select_rng.sample(ids, self.cfg.participants_per_round)
            self._run_one_round(r, participants)
            report.participants.append(list(participants))
            if self.train.enabled and not self.round_failed:
                deltas = [self._deltas[cid] for cid in participants]
                weights = [float(self.fleet[cid].workload.num_samples) for cid in participants]
                self._params = fl_core.fedavg(deltas, weights, self._params)
                acc = fl_core.evaluate_accuracy(self._params, self._test)
                report.accuracy_series.append((time.monotonic() - self._t0, acc))
        for w in self.workers.values():
            if w.alive:
                try:
                    send_message(w.sock, {"type": "terminate"})
                    w.message_log.append("terminate")
                except OSError:
                    pass
        report.total_time = time.monotonic() - self._t0
        report.final_params = self._params
        return report

    def _run_one_round(self, round_index: int, participants: list[str]) -> None:
        self._round_index = round_index
        mgr = ExecutorManager(
            max_executors=max(self.workers) + 1 if self.workers else 0,
            scheduler_kind=self.cfg.scheduler_kind,
            theta=self.cfg.theta,
            dynamic_parallelism=self.cfg.dynamic_parallelism,
        )
        # only live, registered workers count as executors
        mgr.state.available_executors.clear()
        for executor_id, conn in sorted(self.workers.items()):
            if conn.alive:
                mgr.state.available_executors.append(executor_id)
        mgr.begin_round(
            [
                Participant(cid, float(self.fleet[cid].resource_budget))
                for cid in participants
            ]
        )
        self._uploads_pending = set(participants)
        self._deltas = {}
        with self.lock:
            self._dispatch(mgr, mgr.kickoff(self._wall()))
        while self._uploads_pending:
            try:
                event, executor_id, msg = self.events.get(timeout=30.0)
            except queue.Empty:
                raise ProtocolError("timed out waiting for worker messages")
            with self.lock:
                if event == "gone":
                    self._handle_worker_loss(mgr, executor_id)
                    if self.round_failed:
                        return
                    continue
                self._handle_message(mgr, executor_id, msg)

    def _wall(self) -> float:
        return time.monotonic() - self._t0

    def _dispatch(self, mgr: ExecutorManager, launches) -> None:
        for entry, _instr in launches:
            conn = self.workers[entry.executor_id]
            conn.current_client = entry.client_id
            profile = self.fleet[entry.client_id]
            work = work_units(profile.workload, self.coeffs)
            duration = solo_time(
                profile.resource_budget, profile.demand_profile, work
            )
            body = {
                "type": "task_assign",
                "client_id": entry.client_id,
                "budget": entry.resource_budget,
                "wall_sleep": duration * self.time_dilation,
                "train": False,
            }
            if self.train.enabled:
                shard = self._shards[entry.client_id]
                body.update(
                    train=True,
                    params=self._params.tolist(),
                    features=shard.features.tolist(),
                    labels=shard.labels.tolist(),
                    n_classes=self.data.classes,
                    num_samples=profile.workload.num_samples,
                    batch_size=profile.workload.batch_size,
                    lr=self.train.lr,
                    train_seed=fl_core.stable_seed(
                        "train", self.cfg.seed, self._round_index, entry.client_id
                    ),
                )
            self.launch_order.append(entry.client_id)
            self.wall_trace.append(
                {
                    "t": self._wall(),
                    "kind": "ClientLaunched",
                    "client": entry.client_id,
                    "executor": entry.executor_id,
                    "budget": entry.resource_budget,
                }
            )
            conn.message_log.append("task_assign")
            send_message(conn.sock, body)

    def _handle_message(self, mgr: ExecutorManager, executor_id: int, msg: dict) -> None:
        conn = self.workers[executor_id]
        cid = msg.get("client_id")
        now = self._wall()
        if msg["type"] == "training_complete":
            self.wall_trace.append(
                {"t": now, "kind": "ClientTrainingComplete", "client": cid, "executor": executor_id}
            )
            mgr.on_request(ClientRequest(cid, RequestKind.TRAINING_COMPLETE), now)
        elif msg["type"] == "model_upload":
            budget = float(self.fleet[cid].resource_budget)
            self.wall_trace.append(
                {"t": now, "kind": "ModelUploaded", "client": cid,
                 "executor": executor_id, "budget": budget}
            )
            if msg.get("delta") is not None:
                self._deltas[cid] = np.asarray(msg["delta"], dtype=float)
            self._completion_wall[cid] = now
            self._uploads_pending.discard(cid)
            conn.current_client = None
            mgr.on_request(ClientRequest(cid, RequestKind.MODEL_UPLOADED), now)
            self.wall_trace.append(
                {"t": now, "kind": "SlotFreed", "client": cid, "executor": executor_id}
            )
            self._dispatch(mgr, mgr.on_slot_freed(executor_id, now))
        else:
            raise ProtocolError(f"unexpected {msg['type']} from worker {executor_id}")

    def _handle_worker_loss(self, mgr: ExecutorManager, executor_id: int) -> None:
        conn = self.workers.get(executor_id)
        if conn is None or not conn.alive:
            return
        conn.alive = False
        lost = conn.current_client
        # the dead worker's executor must never be offered again
        try:
            mgr.state.available_executors.remove(executor_id)
        except ValueError:
            pass
        if lost is None:
            return
        slot = mgr.slots[executor_id]
        mgr.state.running_budgets.remove(slot.budget)
        slot.lifecycle = Lifecycle.IDLE
        slot.client_id = None
        slot.budget = None
        mgr._launched.discard(lost)
        if lost in self.retried:
            log.error("client %s failed twice; marking round failed", lost)
            self.round_failed = True
            self._uploads_pending.clear()
            return
        self.retried.add(lost)
        log.warning("re-queueing client %s after worker %d loss", lost, executor_id)
        mgr.pending.append(
            Participant(lost, float(self.fleet[lost].resource_budget))
        )
        mgr.state.planned_count -= 1
        # a surviving idle worker may pick the client up immediately
        if mgr.state.available_executors:
            if self.cfg.dynamic_parallelism:
                self._dispatch(mgr, mgr._schedule(self._wall()))
            else:
                for free_id in list(mgr.state.available_executors):
                    self._dispatch(
                        mgr, mgr._schedule(self._wall(), only_executor=free_id)
                    )


def coordinator_serve(
    cfg: FleetConfig,
    fleet: list[ClientProfile],
    bind_address: tuple[str, int],
    workers_expected: int,
    time_dilation: float = 0.001,
    data: DataParams | None = None,
    train: TrainParams | None = None,
) -> tuple[ExperimentReport, Coordinator]:
    coordinator = Coordinator(
        cfg, fleet, bind_address, workers_expected, time_dilation, data, train
    )
    report = coordinator.serve()
    return report, coordinator


def worker_run(
    coordinator_address: tuple[str, int],
    retries: int = 20,
    retry_delay: float = 0.1,
) -> int:
    """Connect, register, execute tasks until terminated. Returns exit status."""
    sock = None
    for attempt in range(retries):
        try:
            sock = socket.create_connection(coordinator_address, timeout=30.0)
            break
        except OSError:
            if attempt == retries - 1:
                return 1
            time.sleep(retry_delay)
    try:
        send_message(sock, {"type": "register"})
        ack = recv_message(sock)
        if ack is None or ack["type"] != "ack":
            return 1
        while True:
            msg = recv_message(sock)
            if msg is None:
                return 1  # coordinator vanished
            if msg["type"] == "terminate":
                return 0
            if msg["type"] != "task_assign":
                return 1
            time.sleep(msg["wall_sleep"])
            send_message(
                sock, {"type": "training_complete", "client_id": msg["client_id"]}
            )
            delta = None
            if msg.get("train"):
                shard = fl_core.DatasetShard(
                    owner=msg["client_id"],
                    features=np.asarray(msg["features"], dtype=float),
                    labels=np.asarray(msg["labels"], dtype=int),
                )
                workload_stub = _TrainWorkload(msg["num_samples"], msg["batch_size"])
                delta = fl_core.local_train(
                    np.asarray(msg["params"], dtype=float),
                    shard,
                    workload_stub,
                    msg["lr"],
                    msg["n_classes"],
                    seed=msg["train_seed"],
                ).tolist()
            send_message(
                sock,
                {"type": "model_upload", "client_id": msg["client_id"], "delta": delta},
            )
    except (ProtocolError, OSError):
        return 1
    finally:
        if sock is not None:
            sock.close()


@dataclass
class _TrainWorkload:
    # local_train only reads these two workload fields
    num_samples: int
    batch_size: int
