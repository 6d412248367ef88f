"""Scenario configs: JSON parsing/validation and programmatic builders."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (DEFAULT_AIRTIME_S, DEFAULT_BANDWIDTH_HZ, DEFAULT_R_MAX,
                      DEFAULT_R_MIN, LinkParams, Modulation, RateWindow,
                      goodput_max)
from .dcf_sim import NodeState, SimConfig
from .markov import DEFAULT_MAX_STAGE, MacProfile
from .rate_game import GameContext, UserProfile, context_pers
from .throughput import TimingParams

DEFAULT_CW = 32


class ConfigError(ValueError):
    """Invalid scenario config; the message carries the offending field path."""


def _get(cfg, key, path, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    value = cfg[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{path}.{key}: must be finite, got {value!r}")
        return value
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected a boolean, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key}: expected a string, got {value!r}")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}.{key}: expected an object, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}.{key}: expected a list, got {value!r}")
        return value
    raise AssertionError(kind)


def _parse_modulation(cfg, path):
    kind = _get(cfg, "kind", path, str, default="mqam").lower()
    if kind in ("mqam", "qam"):
        order = _get(cfg, "order", path, int, default=64)
        alpha = _get(cfg, "alpha", path, float, default=1.0)
        try:
            return Modulation.mqam(order, alpha)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if kind == "dpsk":
        return Modulation.dpsk()
    raise ConfigError(f"{path}.kind: expected 'mqam' or 'dpsk', got {kind!r}")


@dataclass
class Scenario:
    """A parsed experiment setup: users, timing, game options, seed."""

    users: list
    timing: TimingParams
    max_stage: int = DEFAULT_MAX_STAGE
    step: int = 1
    epsilon: float = 0.0
    scan_cap: int = 4096
    non_atomic: bool = True
    slot_mode: str = "approx"
    seed: int = 1
    rates: list = field(default_factory=list)  # optional explicit per-user rates

    @property
    def n(self):
        return len(self.users)

    def context(self):
        return GameContext(self.users, self.timing, self.non_atomic, self.slot_mode)

    def resolved_rates(self):
        """Explicit rates where given, else each user's best-goodput rate."""
        out = []
        for i, u in enumerate(self.users):
            r = self.rates[i] if i < len(self.rates) else None
            if r is None:
                r = goodput_max(u.link, u.window)[0]
            out.append(float(r))
        return np.asarray(out)

    def sim_config(self, slots, seed=None, tft="off", window=10000, rates=None):
        rates = self.resolved_rates() if rates is None else np.asarray(rates)
        ctx = self.context()
        pers = context_pers(ctx, rates)
        nodes = [
            NodeState(cw=u.mac.cw, rate=float(rates[i]), per=float(pers[i]),
                      max_stage=u.mac.max_stage, airtime=u.window.airtime)
            for i, u in enumerate(self.users)
        ]
        return SimConfig(nodes=nodes, virtual_slots=slots,
                         rng_seed=self.seed if seed is None else seed,
                         timing=self.timing, tft=tft, observation_window=window)

    @classmethod
    def from_dict(cls, cfg, path="config"):
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        users_cfg = _get(cfg, "users", path, list, required=True)
        if not users_cfg:
            raise ConfigError(f"{path}.users: need at least one user")
        timing_cfg = _get(cfg, "timing", path, dict, default={})
        tpath = f"{path}.timing"
        timing_kwargs = {
            "airtime": _get(timing_cfg, "airtime", tpath, float, default=DEFAULT_AIRTIME_S),
            "sigma": _get(timing_cfg, "sigma", tpath, float, default=20e-6),
            "sifs": _get(timing_cfg, "sifs", tpath, float, default=10e-6),
            "difs": _get(timing_cfg, "difs", tpath, float, default=50e-6),
            "ack": _get(timing_cfg, "ack", tpath, float, default=0.0),
        }
        try:
            timing = TimingParams(**timing_kwargs)
        except ValueError as exc:
            raise ConfigError(f"{tpath}: {exc}") from exc
        max_stage = _get(cfg, "max_stage", path, int, default=DEFAULT_MAX_STAGE)
        users = []
        rates = []
        for i, ucfg in enumerate(users_cfg):
            upath = f"{path}.users[{i}]"
            if not isinstance(ucfg, dict):
                raise ConfigError(f"{upath}: expected an object")
            snr = _get(ucfg, "snr_db", upath, float, required=True)
            cw = _get(ucfg, "cw", upath, int, default=DEFAULT_CW)
            bw = _get(ucfg, "bandwidth_hz", upath, float, default=DEFAULT_BANDWIDTH_HZ)
            r_min = _get(ucfg, "r_min", upath, float, default=DEFAULT_R_MIN)
            r_max = _get(ucfg, "r_max", upath, float, default=DEFAULT_R_MAX)
            label = _get(ucfg, "label", upath, str, default="")
            mod = _parse_modulation(_get(ucfg, "modulation", upath, dict, default={}),
                                    f"{upath}.modulation")
            try:
                user = UserProfile(
                    mac=MacProfile(cw, max_stage),
                    link=LinkParams(snr, bw, mod),
                    window=RateWindow(r_min, r_max, timing.airtime),
                    label=label,
                )
            except ValueError as exc:
                raise ConfigError(f"{upath}: {exc}") from exc
            users.append(user)
            rates.append(_get(ucfg, "rate", upath, float, default=None))
        game = _get(cfg, "game", path, dict, default={})
        gpath = f"{path}.game"
        scenario = cls(
            users=users,
            timing=timing,
            max_stage=max_stage,
            step=_get(game, "step", gpath, int, default=1),
            epsilon=_get(game, "epsilon", gpath, float, default=0.0),
            scan_cap=_get(game, "scan_cap", gpath, int, default=4096),
            non_atomic=_get(game, "non_atomic", gpath, bool, default=True),
            slot_mode=_get(game, "slot_mode", gpath, str, default="approx"),
            seed=_get(cfg, "seed", path, int, default=1),
            rates=rates,
        )
        if scenario.step < 1:
            raise ConfigError(f"{gpath}.step: must be >= 1, got {scenario.step}")
        if scenario.slot_mode not in ("approx", "exact"):
            raise ConfigError(f"{gpath}.slot_mode: expected 'approx' or 'exact'")
        return scenario

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config: not valid JSON ({exc})") from exc
        return cls.from_dict(cfg)


def _user(snr_db, cw, order, alpha, timing, max_stage, r_min, r_max,
          bandwidth_hz, label=""):
    return UserProfile(
        mac=MacProfile(cw, max_stage),
        link=LinkParams(snr_db, bandwidth_hz, Modulation.mqam(order, alpha)),
        window=RateWindow(r_min, r_max, timing.airtime),
        label=label,
    )


def symmetric(n, snr_db=15.0, cw=DEFAULT_CW, order=64, alpha=1.0,
              timing=None, max_stage=DEFAULT_MAX_STAGE, r_min=DEFAULT_R_MIN,
              r_max=DEFAULT_R_MAX, bandwidth_hz=DEFAULT_BANDWIDTH_HZ, seed=1,
              **options):
    """Homogeneous scenario with the standard defaults."""
    timing = timing or TimingParams(airtime=DEFAULT_AIRTIME_S)
    users = [_user(snr_db, cw, order, alpha, timing, max_stage, r_min, r_max,
                   bandwidth_hz) for _ in range(n)]
    return Scenario(users=users, timing=timing, max_stage=max_stage, seed=seed,
                    **options)


def two_class(n, snr_low=10.0, snr_high=20.0, cw=DEFAULT_CW, order=64,
              alpha=1.0, timing=None, max_stage=DEFAULT_MAX_STAGE,
              r_min=DEFAULT_R_MIN, r_max=DEFAULT_R_MAX,
              bandwidth_hz=DEFAULT_BANDWIDTH_HZ, seed=1, **options):
    """Half the users on a low-SNR link, half on a high-SNR one."""
    timing = timing or TimingParams(airtime=DEFAULT_AIRTIME_S)
    users = []
    for i in range(n):
        snr, label = (snr_low, "L") if i < n // 2 else (snr_high, "H")
        users.append(_user(snr, cw, order, alpha, timing, max_stage, r_min,
                           r_max, bandwidth_hz, label))
    return Scenario(users=users, timing=timing, max_stage=max_stage, seed=seed,
                    **options)


def asymmetric(snrs, cw=DEFAULT_CW, order=64, alpha=1.0, timing=None,
               max_stage=DEFAULT_MAX_STAGE, r_min=DEFAULT_R_MIN,
               r_max=DEFAULT_R_MAX, bandwidth_hz=DEFAULT_BANDWIDTH_HZ, seed=1,
               **options):
    """One user per SNR value."""
    timing = timing or TimingParams(airtime=DEFAULT_AIRTIME_S)
    users = [_user(float(s), cw, order, alpha, timing, max_stage, r_min, r_max,
                   bandwidth_hz) for s in snrs]
    return Scenario(users=users, timing=timing, max_stage=max_stage, seed=seed,
                    **options)
