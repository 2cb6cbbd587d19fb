"""Deterministic discrete-event transport.

Actors register under a name and receive messages and self-scheduled
timers.  Delivery order is (tick, insertion order), delays are drawn from a
seeded generator, and links touching flagged actors may drop messages with
a configured probability.  Identical seeds therefore produce identical
event sequences, traces, and final states.

Every sent message is delivered, dropped by policy, or still queued at
termination; :meth:`Simulator.conserved` checks that accounting.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

from .hashing import dsha


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    delay_min: int = 1
    delay_max: int = 1
    drop_rate: float = 0.0
    byzantine: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.delay_min < 0 or self.delay_max < self.delay_min:
            raise ValueError("need 0 <= delay_min <= delay_max")
        if not 0.0 <= self.drop_rate <= 1.0:
            raise ValueError("drop_rate must be a probability")


@dataclass(order=True)
class _Event:
    tick: int
    seq: int
    kind: str = field(compare=False)  # "msg" | "timer"
    src: str = field(compare=False)
    dst: str = field(compare=False)
    payload: object = field(compare=False)


def _label(payload: object) -> str:
    info = getattr(payload, "trace_info", None)
    name = type(payload).__name__
    return f"{name}({info})" if info is not None else name


class Simulator:
    """Single-threaded authoritative event loop.

    Registered actors expose ``on_message(sim, src, payload)`` and
    ``on_timer(sim, payload)``; handlers send follow-ups via
    :meth:`send` / :meth:`schedule`.
    """

    def __init__(self, config: SimConfig) -> None:
        self.config = config
        self.rng = random.Random(config.seed)
        self.now = 0
        self.actors: dict[str, object] = {}
        self._queue: list[_Event] = []
        self._seq = 0
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.timers_fired = 0
        self.trace: list[str] = []

    def register(self, name: str, actor: object) -> None:
        if name in self.actors:
            raise ValueError(f"actor {name!r} already registered")
        self.actors[name] = actor

    def send(self, src: str, dst: str, payload: object) -> None:
        if dst not in self.actors:
            raise KeyError(f"unknown destination {dst!r}")
        self.sent += 1
        byz_link = src in self.config.byzantine or dst in self.config.byzantine
        if byz_link and self.config.drop_rate > 0.0:
            if self.rng.random() < self.config.drop_rate:
                self.dropped += 1
                self.trace.append(f"{self.now}|drop|{src}|{dst}|{_label(payload)}")
                return
        delay = self.rng.randint(self.config.delay_min, self.config.delay_max)
        self._push(_Event(self.now + delay, self._next_seq(), "msg", src, dst, payload))

    def schedule(self, actor: str, delay: int, payload: object) -> None:
        """Self-addressed timer; immune to drops and jitter."""
        if delay < 0:
            raise ValueError("timers cannot fire in the past")
        self._push(_Event(self.now + delay, self._next_seq(), "timer", actor, actor, payload))

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _push(self, event: _Event) -> None:
        heapq.heappush(self._queue, event)

    def step(self) -> bool:
        """Deliver the next event; False when the queue is empty."""
        if not self._queue:
            return False
        event = heapq.heappop(self._queue)
        self.now = event.tick
        actor = self.actors.get(event.dst)
        if actor is None:
            return True
        if event.kind == "timer":
            self.timers_fired += 1
            self.trace.append(f"{event.tick}|timer|{event.dst}|{_label(event.payload)}")
            actor.on_timer(self, event.payload)
        else:
            self.delivered += 1
            self.trace.append(
                f"{event.tick}|msg|{event.src}|{event.dst}|{_label(event.payload)}"
            )
            actor.on_message(self, event.src, event.payload)
        return True

    def run(self, max_ticks: int = 100_000, until=None) -> None:
        """Deliver events until the queue drains, ``until()`` holds, or the
        clock passes ``max_ticks``."""
        while self._queue:
            if self._queue[0].tick > max_ticks:
                break
            self.step()
            if until is not None and until():
                break

    def pending(self) -> int:
        return len(self._queue)

    def conserved(self) -> bool:
        return self.sent == self.delivered + self.dropped + sum(
            1 for e in self._queue if e.kind == "msg"
        )

    def trace_digest(self) -> str:
        return dsha(b"TRACE", "\n".join(self.trace).encode()).hex()
