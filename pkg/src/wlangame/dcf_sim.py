"""Slot-level simulator of the selfish-backoff chain with TFT behaviors.

State advances once per virtual slot: every node whose counter is zero
transmits; a lone transmitter succeeds unless hit by a channel error, two or
more collide.  Counters tick every slot regardless of channel state (the
modeled chain has no freeze state, unlike standard DCF).  Elapsed wall time
is rebuilt from slot types, so empirical throughputs are directly comparable
with the analytic slot-duration accounting.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels as _k
from .throughput import TimingParams

TFT_OFF = "off"
TFT_MAC = "mac"
TFT_MAC_RATE = "mac+rate"


@dataclass
class NodeState:
    """One station: backoff configuration, link quality, live chain state."""

    cw: int
    rate: float             # bits/s
    per: float              # packet error probability at that rate
    max_stage: int = 5
    airtime: float = 1e-3   # packet transmission time, seconds
    stage: int = 0
    counter: int = -1       # -1 draws a fresh uniform counter on first use

    def __post_init__(self):
        if self.cw < 1:
            raise ValueError(f"cw must be >= 1, got {self.cw}")
        if not 0.0 <= self.per <= 1.0:
            raise ValueError(f"per must lie in [0, 1], got {self.per}")
        if self.max_stage < 1:
            raise ValueError(f"max_stage must be >= 1, got {self.max_stage}")


@dataclass
class SimConfig:
    nodes: list
    virtual_slots: int
    rng_seed: int = 1
    timing: TimingParams = None
    tft: str = TFT_OFF
    observation_window: int = 10000

    def __post_init__(self):
        if self.virtual_slots < 1:
            raise ValueError("virtual_slots must be >= 1")
        if self.tft not in (TFT_OFF, TFT_MAC, TFT_MAC_RATE):
            raise ValueError(f"unknown tft mode {self.tft!r}")
        if self.timing is None:
            self.timing = TimingParams(airtime=self.nodes[0].airtime)
        if self.observation_window < 1:
            raise ValueError("observation_window must be >= 1")


@dataclass
class SimStats:
    """Empirical per-node rates and the slot/type bookkeeping behind them."""

    slots: int
    elapsed_s: float
    attempts: np.ndarray
    successes: np.ndarray
    collisions: np.ndarray
    channel_errors: np.ndarray
    bits: np.ndarray
    idle_slots: int
    success_slots: int
    error_slots: int
    collision_slots: int
    tau_hat: np.ndarray = field(init=False)
    p_hat: np.ndarray = field(init=False)
    q_hat: np.ndarray = field(init=False)
    s_hat: np.ndarray = field(init=False)

    def __post_init__(self):
        att = np.maximum(self.attempts, 1)
        self.tau_hat = self.attempts / self.slots
        self.p_hat = self.collisions / att
        self.q_hat = (self.collisions + self.channel_errors) / att
        if self.elapsed_s > 0.0:
            self.s_hat = self.bits / self.elapsed_s
        else:
            self.s_hat = np.zeros(len(self.attempts))


class _Engine:
    """Chains kernel windows while keeping node and RNG state."""

    def __init__(self, config):
        n = len(config.nodes)
        self.config = config
        self.stage = np.asarray([nd.stage for nd in config.nodes], dtype=np.int64)
        self.counter = np.asarray([nd.counter for nd in config.nodes], dtype=np.int64)
        self.rng = _k.rng_seed(config.rng_seed)
        self.attempts = np.zeros(n, dtype=np.int64)
        self.successes = np.zeros(n, dtype=np.int64)
        self.collisions = np.zeros(n, dtype=np.int64)
        self.channel_errors = np.zeros(n, dtype=np.int64)
        self.bits = np.zeros(n)
        self.elapsed = 0.0
        self.idle = 0
        self.succ = 0
        self.err = 0
        self.coll = 0

    def run(self, slots):
        cfg = self.config
        w = np.asarray([nd.cw for nd in cfg.nodes], dtype=np.int64)
        m = np.asarray([nd.max_stage for nd in cfg.nodes], dtype=np.int64)
        e = np.asarray([nd.per for nd in cfg.nodes])
        air = np.asarray([nd.airtime for nd in cfg.nodes])
        rate = np.asarray([nd.rate for nd in cfg.nodes])
        succ_over = cfg.timing.sifs + cfg.timing.ack + cfg.timing.difs
        fail_over = cfg.timing.sifs
        before = self.successes.copy()
        # clamp counters that a shrunken window has left out of range
        limit = (1 << self.stage) * w - 1
        np.minimum(self.counter, limit, out=self.counter,
                   where=self.counter >= 0)
        out = _k.sim_slots(self.stage, self.counter, w, m, e, air,
                           cfg.timing.sigma, succ_over, fail_over, slots,
                           self.rng, self.attempts, self.successes,
                           self.collisions, self.channel_errors)
        elapsed, idle, succ, err, coll = out
        self.bits += (self.successes - before) * rate * air
        self.elapsed += elapsed
        self.idle += idle
        self.succ += succ
        self.err += err
        self.coll += coll
        return elapsed

    def stats(self, slots):
        return SimStats(slots=slots, elapsed_s=self.elapsed,
                        attempts=self.attempts.copy(),
                        successes=self.successes.copy(),
                        collisions=self.collisions.copy(),
                        channel_errors=self.channel_errors.copy(),
                        bits=self.bits.copy(), idle_slots=self.idle,
                        success_slots=self.succ, error_slots=self.err,
                        collision_slots=self.coll)


def simulate(config):
    """Run the chain for config.virtual_slots and return empirical stats."""
    engine = _Engine(config)
    engine.run(config.virtual_slots)
    return engine.stats(config.virtual_slots)


@dataclass
class TftWindowRecord:
    window: int
    node: int
    cw: int
    airtime: float
    throughput: float  # within-window bits/s

    def row(self):
        return [self.window, self.node, self.cw,
                f"{self.airtime:.9g}", f"{self.throughput:.9g}"]


@dataclass
class TftTrace:
    records: list
    final_cws: list
    final_airtimes: list
    stats: SimStats

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window", "node", "cw", "airtime", "throughput"])
            for rec in self.records:
                writer.writerow(rec.row())


def simulate_tft(config):
    """Windowed run in which nodes react to observed windows and airtimes.

    At every observation-window boundary each node reads the others' current
    window and packet airtime directly and applies both reactions: match the
    smallest window, match the longest airtime.  Returns the trajectory.
    """
    if config.tft == TFT_OFF:
        raise ValueError("tft mode is off; use simulate()")
    engine = _Engine(config)
    nodes = config.nodes
    records = []
    done = 0
    window = 0
    while done < config.virtual_slots:
        chunk = min(config.observation_window, config.virtual_slots - done)
        succ_before = engine.successes.copy()
        elapsed = engine.run(chunk)
        done += chunk
        for i, nd in enumerate(nodes):
            got = (engine.successes[i] - succ_before[i]) * nd.rate * nd.airtime
            thr = got / elapsed if elapsed > 0.0 else 0.0
            records.append(TftWindowRecord(window=window, node=i, cw=nd.cw,
                                           airtime=nd.airtime, throughput=thr))
        # simultaneous reactions on directly observed values
        min_cw = min(nd.cw for nd in nodes)
        max_air = max(nd.airtime for nd in nodes)
        for nd in nodes:
            nd.cw = min_cw
            if config.tft == TFT_MAC_RATE:
                nd.airtime = max_air
        window += 1
    return TftTrace(records=records,
                    final_cws=[nd.cw for nd in nodes],
                    final_airtimes=[nd.airtime for nd in nodes],
                    stats=engine.stats(done))
