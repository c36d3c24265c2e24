"""Deterministic discrete-event engine: event queue, microsecond clock, seeded RNG streams."""

import hashlib
import heapq

import numpy as np

US_PER_SEC = 1_000_000


def to_us(seconds):
    """Convert a duration in seconds to integer microseconds."""
    return int(round(seconds * US_PER_SEC))


def us_to_str(t_us):
    """Render integer microseconds as a fixed 6-decimal seconds string, exactly."""
    sec, frac = divmod(t_us, US_PER_SEC)
    return f"{sec}.{frac:06d}"


class SchedulingInPast(Exception):
    """An event was scheduled before the current simulation clock."""


class InvalidRange(Exception):
    """A uniform draw was requested with lower bound above upper bound."""


class Event:
    """One scheduled simulator action, totally ordered by (fire_at, seq)."""

    __slots__ = ("fire_at", "seq", "target", "kind", "fn")

    def __init__(self, fire_at, seq, target, kind, fn):
        self.fire_at = fire_at  # integer microseconds
        self.seq = seq
        self.target = target  # node id or None for global
        self.kind = kind  # short tag: "deliver", "timer", "traffic", ...
        self.fn = fn

    def __lt__(self, other):
        return (self.fire_at, self.seq) < (other.fire_at, other.seq)

    def __repr__(self):
        return f"Event(t={us_to_str(self.fire_at)}, seq={self.seq}, {self.kind}@{self.target})"


class RngStreams:
    """Named, independent random streams derived from one root seed.

    Each stream is a Philox4x64 counter-based generator keyed by
    SHA-256(root_seed || stream_key), so any (root_seed, stream_key) pair
    yields the same draw sequence in every run and implementation that
    follows the same derivation.
    """

    def __init__(self, root_seed):
        self.root_seed = int(root_seed)
        self._streams = {}

    def stream(self, stream_key):
        gen = self._streams.get(stream_key)
        if gen is None:
            digest = hashlib.sha256(
                self.root_seed.to_bytes(8, "little", signed=False)
                + stream_key.encode("utf-8")
            ).digest()
            key = np.frombuffer(digest[:16], dtype=np.uint64)  # Philox 2x64 key
            gen = np.random.Generator(np.random.Philox(key=key))
            self._streams[stream_key] = gen
        return gen

    def uniform(self, stream_key, a, b):
        """Uniform real in [a, b]."""
        if a > b:
            raise InvalidRange(f"uniform({a}, {b})")
        if a == b:
            return a
        return a + (b - a) * self.stream(stream_key).random()

    def uniform_int(self, stream_key, a, b):
        """Uniform integer in [a, b] inclusive."""
        if a > b:
            raise InvalidRange(f"uniform_int({a}, {b})")
        if a == b:
            return a
        return int(self.stream(stream_key).integers(a, b + 1))

    def uniform_us(self, stream_key, a_sec, b_sec):
        """Uniform duration in [a_sec, b_sec] drawn directly in integer microseconds."""
        return self.uniform_int(stream_key, to_us(a_sec), to_us(b_sec))


class Simulator:
    """Single-run event loop over an integer-microsecond clock."""

    def __init__(self, root_seed=1):
        self.now = 0  # microseconds
        self.rng = RngStreams(root_seed)
        self._heap = []
        self._seq = 0
        self.dispatched = 0

    def schedule(self, fire_at_us, fn, target=None, kind="timer"):
        """Queue fn to run at fire_at_us; ties dispatch in insertion order."""
        if fire_at_us < self.now:
            raise SchedulingInPast(
                f"fire_at {us_to_str(fire_at_us)} < clock {us_to_str(self.now)}"
            )
        self._seq += 1
        ev = Event(fire_at_us, self._seq, target, kind, fn)
        heapq.heappush(self._heap, ev)
        return ev

    def schedule_in(self, delay_us, fn, target=None, kind="timer"):
        return self.schedule(self.now + delay_us, fn, target=target, kind=kind)

    def run_until(self, end_us):
        """Dispatch every event with fire_at <= end_us; leave clock at end_us."""
        if end_us < self.now:
            raise SchedulingInPast(
                f"run_until {us_to_str(end_us)} < clock {us_to_str(self.now)}"
            )
        heap = self._heap
        count = 0
        while heap and heap[0].fire_at <= end_us:
            ev = heapq.heappop(heap)
            self.now = ev.fire_at
            ev.fn()
            count += 1
        self.now = end_us
        self.dispatched += count
        return count

    def pending(self):
        return len(self._heap)
