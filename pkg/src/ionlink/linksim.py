"""Monte-Carlo on-off-keying link over the drift tube.

Slot ``i`` releases one ion at ``i * slot`` when its bit is 1.  The receiver
listens during ``[i*slot + offset, i*slot + offset + slot)``, where
``offset`` is the window start relative to release (normally the start of
the detection window of the arrival distribution).  Late ions are removed
and never credited to a later slot, so 0-bits cannot produce detections.

Slots are processed in fixed-size batches.  Every batch draws from its own
random substreams keyed by the batch index, so results do not depend on how
batches are scheduled across worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .arrival import SpreadModel, sample_initial_states, sample_speeds
from .csvio import write_csv
from .errors import ConfigError
from .physics import flight_time
from .rng import StreamSet

MODES = ("unfiltered", "wien-filtered")
TRANSCRIPT_COLUMNS = ("slot_index", "bit", "release_time_s", "arrival_time_s", "detected")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimConfig:
    n_bits: int
    slot: float
    offset: float
    prior: float = 0.5
    seed: int = 42
    mode: str = "unfiltered"
    batch_size: int = 1 << 16
    workers: int = 1

    def __post_init__(self):
        if int(self.n_bits) != self.n_bits or self.n_bits <= 0:
            raise ConfigError(f"n_bits must be a positive integer, got {self.n_bits}")
        if not self.slot > 0:
            raise ConfigError("slot length must be positive")
        if not 0 <= self.prior <= 1:
            raise ConfigError("prior must lie in [0, 1]")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size <= 0 or self.workers <= 0:
            raise ConfigError("batch_size and workers must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimResult:
    n_bits: int
    sent_ones: int
    detected_ones: int
    filtered_out: int
    late: int
    false_alarms: int
    slot: float

    @property
    def empirical_missed(self) -> float:
        return 1.0 - self.detected_ones / self.sent_ones if self.sent_ones else math.nan

    @property
    def empirical_rate(self) -> float:
        # n_bits slots of length ``slot`` carry n_bits channel uses
        return self.n_bits / (self.n_bits * self.slot)

    @property
    def confidence_halfwidth(self) -> float:
        """Normal-approximation 95% half-width of ``empirical_missed``."""
        if not self.sent_ones:
            return math.nan
        p = self.empirical_missed
        return Z95 * math.sqrt(p * (1.0 - p) / self.sent_ones)

    @property
    def filter_loss(self) -> float:
        """Fraction of sent ions stopped by the selector."""
        return self.filtered_out / self.sent_ones if self.sent_ones else math.nan

    @property
    def timing_missed(self) -> float:
        """Late fraction among ions that passed the selector."""
        passed = self.sent_ones - self.filtered_out
        return self.late / passed if passed else math.nan


@dataclass
class _Batch:
    index: int
    first_slot: int
    bits: np.ndarray
    arrival: np.ndarray  # per 1-bit, absolute; inf when absorbed or never arriving
    detected: np.ndarray
    filtered: np.ndarray


def _run_batch(species, config, spread, band, sim: SimConfig, index: int, keep: bool) -> _Batch:
    first = index * sim.batch_size
    n = min(sim.batch_size, sim.n_bits - first)
    streams = StreamSet(sim.seed, index)
    bits = streams["bits"].random(n) < sim.prior
    slots = first + np.flatnonzero(bits)
    x0, v0, t0 = sample_initial_states(config, spread, streams, len(slots))
    T = flight_time(species, config, x0, v0)
    if band is not None:
        speed = sample_speeds(species, config, x0, v0)
        filtered = (speed < band[0]) | (speed > band[1])
    else:
        filtered = np.zeros(len(slots), dtype=bool)
    release = slots * sim.slot
    arrival = np.where(filtered, np.inf, release + t0 + T)
    opens = release + sim.offset
    detected = (arrival >= opens) & (arrival < opens + sim.slot)
    if not keep:
        bits = np.empty(0, bool)
    return _Batch(index, first, bits, arrival, detected, filtered)


def _batches(species, config, spread, band, sim, keep):
    count = -(-sim.n_bits // sim.batch_size)
    job = lambda i: _run_batch(species, config, spread, band, sim, i, keep)  # noqa: E731
    if sim.workers == 1 or count == 1:
        return [job(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=sim.workers) as pool:
        return list(pool.map(job, range(count)))


def run_link(species, config, spread: SpreadModel, sim: SimConfig, band=None, transcript=None) -> SimResult:
    """Simulate ``sim.n_bits`` slots and count detections.

    ``band`` is a ``(v_low, v_high)`` drift-entry speed interval, required in
    the ``"wien-filtered"`` mode; ions outside it are absorbed by the filter.
    ``transcript`` optionally names a CSV file that receives one row per slot.
    """
    if sim.mode == "wien-filtered" and band is None:
        raise ConfigError("wien-filtered mode needs a pass band")
    if sim.mode == "unfiltered":
        band = None
    batches = _batches(species, config, spread, band, sim, transcript is not None)
    sent = sum(len(b.arrival) for b in batches)
    detected = sum(int(b.detected.sum()) for b in batches)
    filtered = sum(int(b.filtered.sum()) for b in batches)
    result = SimResult(
        n_bits=sim.n_bits,
        sent_ones=sent,
        detected_ones=detected,
        filtered_out=filtered,
        late=sent - detected - filtered,
        false_alarms=0,  # 0-bits release nothing, and late ions are removed
        slot=sim.slot,
    )
    if transcript is not None:
        write_transcript(transcript, batches, sim)
    return result


def _transcript_rows(batches, sim):
    for b in batches:
        k = 0
        for j, bit in enumerate(b.bits):
            slot = b.first_slot + j
            if bit:
                arr = b.arrival[k]
                yield (slot, 1, slot * sim.slot, "NONE" if math.isinf(arr) else float(arr), bool(b.detected[k]))
                k += 1
            else:
                yield (slot, 0, "", "NONE", False)


def write_transcript(path, batches, sim, meta=None):
    info = {"seed": sim.seed, "slot_s": sim.slot, "offset_s": sim.offset, "mode": sim.mode, "n_bits": sim.n_bits}
    info.update(meta or {})
    return write_csv(path, TRANSCRIPT_COLUMNS, _transcript_rows(batches, sim), info)


def binomial_agreement(result: SimResult, predicted: float, n_se: float = 3.0) -> bool:
    """True when the empirical miss rate is within ``n_se`` standard errors of ``predicted``."""
    n = result.sent_ones
    se = math.sqrt(max(predicted * (1.0 - predicted), 0.0) / n) if n else math.inf
    return abs(result.empirical_missed - predicted) <= n_se * se
