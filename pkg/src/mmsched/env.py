"""Episodic rate-scheduling MDP over a fixed set of paths.

The observation is the vector of current path rates.  An action nudges every
rate; moves that would violate the node time budgets (or make a rate
negative) are rejected and the agent stays put.  By default action entries
below the clip threshold are zeroed including negative ones, so rates only
grow within an episode; ``clip_mode="magnitude"`` keeps negative entries.  Reaching the desired sum
rate ends the episode with reward 1, otherwise the reward is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .flowlp import ENV_TOL, ScheduleConstraints, restricted_capacity
from .topology import Network, Path, resample_blockage, step_capacities, validate_path_set

STATIC = "static"
TIME_VARYING = "time_varying"


@dataclass
class BlockageConfig:
    lam: float = 1.0 / 500.0
    epoch: int = 10


@dataclass
class EnvConfig:
    horizon: int = 500
    rate_fraction: float = 0.6
    action_scale: float = 1.0
    clip_threshold: float = 1e-3
    clip_mode: str = "signed"
    dynamics_mode: str = STATIC
    blockage: BlockageConfig | None = None
    delta_range: tuple[float, float] = (-1.0, 1.0)
    capacity_clamp: tuple[float, float] = (0.0, 10.0)
    feasibility_tol: float = ENV_TOL

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 < self.rate_fraction <= 1.0:
            raise ValueError("rate_fraction must lie in (0, 1]")
        if self.action_scale <= 0:
            raise ValueError("action_scale must be positive")
        if self.clip_threshold < 0:
            raise ValueError("clip_threshold must be nonnegative")
        if self.clip_mode not in ("magnitude", "signed"):
            raise ValueError(f"unknown clip mode {self.clip_mode!r}")
        if self.dynamics_mode not in (STATIC, TIME_VARYING):
            raise ValueError(f"unknown dynamics mode {self.dynamics_mode!r}")
        if isinstance(self.blockage, dict):
            self.blockage = BlockageConfig(**self.blockage)
        if self.blockage is not None and self.blockage.epoch < 1:
            raise ValueError("blockage epoch must be >= 1")
        self.delta_range = tuple(self.delta_range)
        self.capacity_clamp = tuple(self.capacity_clamp)


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    terminal: bool
    info: dict = field(default_factory=dict)


class TraceRow(NamedTuple):
    episode: int
    step: int
    rates: np.ndarray
    reward: float
    valid_move: bool


def clip_action(raw, threshold: float, mode: str = "magnitude") -> np.ndarray:
    """Zero out small action entries.

    ``magnitude`` zeroes entries with ``|a| < threshold``; ``signed`` zeroes
    every entry with ``a < threshold``, negative ones included.
    """
    a = np.array(raw, dtype=np.float64)
    a[(np.abs(a) if mode == "magnitude" else a) < threshold] = 0.0
    return a


class RateEnv:
    """Path-rate environment.

    ``reference_paths`` (optional) fixes the path set whose restricted
    capacity defines the desired rate; by default it is the agent's own set.
    """

    def __init__(
        self,
        net: Network,
        paths: Sequence[Sequence[int]],
        config: EnvConfig | None = None,
        rng: np.random.Generator | int | None = None,
        reference_paths: Sequence[Sequence[int]] | None = None,
    ):
        self.net = net
        self.paths: list[Path] = validate_path_set(net, paths)
        self.reference_paths = None if reference_paths is None else validate_path_set(net, reference_paths)
        self.config = config or EnvConfig()
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.k = len(self.paths)
        self.state = np.zeros(self.k)
        self.step_index = 0
        self.done = True
        self.episode_index = -1
        self._resets = 0
        self._desired: float | None = None
        self.capacity = 0.0
        self.constraints = ScheduleConstraints(net, self.paths)
        # with ``record`` set, every exposed state is appended to ``trace`` as
        # (episode, step, rates, reward, valid_move)
        self.record = False
        self.trace: list[TraceRow] = []

    def reset(self, episode_index: int | None = None, dynamics: bool = True) -> np.ndarray:
        """Start an episode from the zero state.

        With ``dynamics`` true the network evolves first: one capacity drift in
        time-varying mode (skipped on the very first reset) and a fresh
        blockage draw when ``episode_index`` is a multiple of the epoch.  With
        ``dynamics`` false the network and desired rate are left untouched.
        """
        cfg = self.config
        if episode_index is None:
            episode_index = self.episode_index + 1
        if dynamics or self._desired is None:
            if cfg.dynamics_mode == TIME_VARYING and self._resets > 0:
                step_capacities(self.net, cfg.delta_range, cfg.capacity_clamp, self.rng)
            if cfg.blockage is not None and episode_index % cfg.blockage.epoch == 0:
                resample_blockage(self.net, cfg.blockage.lam, self.rng)
            self.constraints = ScheduleConstraints(self.net, self.paths)
            ref = self.constraints if self.reference_paths is None else ScheduleConstraints(self.net, self.reference_paths)
            self.capacity = restricted_capacity(self.net, ref).value
            self._desired = cfg.rate_fraction * self.capacity
            self._resets += 1
            self.episode_index = episode_index
        self.state = np.zeros(self.k)
        self.step_index = 0
        self.done = False
        if self.record:
            self.trace.append(TraceRow(self.episode_index, 0, self.state.copy(), 0.0, True))
        return self.state.copy()

    def desired_rate(self) -> float:
        if self._desired is None:
            raise RuntimeError("desired rate is undefined before the first reset")
        return self._desired

    def is_valid(self, rates) -> bool:
        return self.constraints.is_feasible(rates, self.config.feasibility_tol)

    def step(self, raw_action) -> StepResult:
        if self.done:
            raise RuntimeError("episode is finished; call reset() first")
        raw = np.asarray(raw_action, dtype=np.float64)
        if raw.shape != (self.k,):
            raise ValueError(f"expected action of shape ({self.k},), got {raw.shape}")
        action = clip_action(raw * self.config.action_scale, self.config.clip_threshold, self.config.clip_mode)
        candidate = self.state + action
        valid = self.is_valid(candidate)
        if valid:
            self.state = candidate
        self.step_index += 1
        sum_rate = float(self.state.sum())
        terminal = sum_rate >= self._desired
        self.done = terminal or self.step_index >= self.config.horizon
        if self.record:
            self.trace.append(TraceRow(self.episode_index, self.step_index, self.state.copy(),
                                       1.0 if terminal else 0.0, valid))
        return StepResult(
            next_state=self.state.copy(),
            reward=1.0 if terminal else 0.0,
            done=self.done,
            terminal=terminal,
            info={"valid_move": valid, "sum_rate": sum_rate, "desired_rate": self._desired},
        )
