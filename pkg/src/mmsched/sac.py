"""Soft Actor-Critic with a tanh-squashed Gaussian policy and twin critics.

Everything runs on the numpy substrate in :mod:`mmsched.neural`; gradients of
the policy loss are propagated by hand through the reparameterised sample,
the tanh squashing and the critics' input.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .env import RateEnv
from .metrics import average_training_rate
from .neural import Adam, Mlp, ReplayBuffer, adam_step, polyak_kernel

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)
CHECKPOINT_VERSION = 1


@dataclass
class SacConfig:
    hidden: int = 256
    n_hidden: int = 2
    lr: float = 3e-4
    gamma: float = 1.0
    tau: float = 0.005
    alpha: float = 0.2
    batch_size: int = 32
    buffer_size: int = 1_000_000
    grad_steps_per_env_step: int = 1
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    # units of the stored action; entropy is measured in these units, and 0.5
    # keeps the per-step entropy bonus k*log(2*scale) of a uniform policy at 0
    action_scale: float = 0.5

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.tau <= 0 or not 0.0 <= self.gamma <= 1.0:
            raise ValueError("need alpha >= 0, tau > 0 and gamma in [0, 1]")
        if self.batch_size < 1 or self.grad_steps_per_env_step < 0:
            raise ValueError("batch_size must be >= 1 and grad_steps_per_env_step >= 0")


@dataclass
class PolicySample:
    pre_squash: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray | float | None

    @property
    def squashed(self) -> np.ndarray:
        return np.tanh(self.pre_squash)


def tanh_log_det(u):
    """``log(1 - tanh(u)**2)`` evaluated without cancellation."""
    return 2.0 * (LOG_2 - u - np.logaddexp(0.0, -2.0 * u))


def squashed_log_prob(u, mean, log_std, action_scale: float = 1.0):
    """Log-density of ``scale * tanh(u)`` for ``u ~ N(mean, exp(log_std)**2)``.

    Sums over the last axis.
    """
    u, mean, log_std = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (u, mean, log_std)))
    z = (u - mean) * np.exp(-log_std)
    gauss = -0.5 * z * z - log_std - 0.5 * LOG_2PI
    k = u.shape[-1]
    return (gauss - tanh_log_det(u)).sum(axis=-1) - k * math.log(action_scale)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    if target.layer_dims != online.layer_dims:
        raise ValueError("target and online networks differ in shape")
    polyak_kernel(target.flat, online.flat, float(tau))
    target.version += 1


class SacAgent:
    def __init__(self, k: int, config: SacConfig | None = None, rng: np.random.Generator | int | None = None):
        self.k = k
        self.config = cfg = config or SacConfig()
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        hidden = [cfg.hidden] * cfg.n_hidden
        self.policy = Mlp([k, *hidden, 2 * k], rng)
        self.q1 = Mlp([2 * k, *hidden, 1], rng)
        self.q2 = Mlp([2 * k, *hidden, 1], rng)
        self.target_q1 = self.q1.copy()
        self.target_q2 = self.q2.copy()
        self.policy_opt = Adam([self.policy.flat], cfg.lr)
        self.q1_opt = Adam([self.q1.flat], cfg.lr)
        self.q2_opt = Adam([self.q2.flat], cfg.lr)
        self.buffer = ReplayBuffer(k, k, cfg.buffer_size)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return self.config.alpha

    def _policy_head(self, states):
        out, cache = self.policy.forward(states)
        mean, raw = out[..., : self.k], out[..., self.k:]
        cfg = self.config
        log_std = np.clip(raw, cfg.log_std_min, cfg.log_std_max)
        return mean, log_std, raw, cache

    def sample_action(self, state, rng: np.random.Generator, deterministic: bool = False) -> PolicySample:
        mean, log_std, _, _ = self._policy_head(state)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_std))):
            raise FloatingPointError("policy network produced non-finite outputs")
        scale = self.config.action_scale
        if deterministic:
            return PolicySample(mean, np.tanh(mean) * scale, None)
        u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return PolicySample(u, np.tanh(u) * scale, squashed_log_prob(u, mean, log_std, scale))

    def q_values(self, states, actions, target: bool = False) -> tuple[np.ndarray, np.ndarray]:
        sa = np.concatenate([states, actions], axis=-1)
        n1, n2 = (self.target_q1, self.target_q2) if target else (self.q1, self.q2)
        return n1(sa)[..., 0], n2(sa)[..., 0]

    def critic_targets(self, batch: dict, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        nxt = self.sample_action(batch["next_states"], rng)
        t1, t2 = self.q_values(batch["next_states"], nxt.action, target=True)
        soft_value = np.minimum(t1, t2) - cfg.alpha * nxt.log_prob
        return batch["rewards"] + cfg.gamma * (1.0 - batch["terminals"]) * soft_value

    def critic_loss(self, q: Mlp, batch: dict, y: np.ndarray):
        """Mean squared error to ``y`` and its parameter gradients."""
        sa = np.concatenate([batch["states"], batch["actions"]], axis=-1)
        out, cache = q.forward(sa)
        diff = out[:, 0] - y
        loss = float(np.mean(diff * diff))
        grads, _ = q.backward(cache, (2.0 / len(y)) * diff[:, None], need_input=False)
        return loss, grads

    def policy_loss(self, states: np.ndarray, noise: np.ndarray):
        """``mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a))`` with ``a`` reparameterised by ``noise``."""
        cfg = self.config
        B, k = states.shape[0], self.k
        mean, log_std, raw, pcache = self._policy_head(states)
        std = np.exp(log_std)
        u = mean + std * noise
        t = np.tanh(u)
        a = t * cfg.action_scale
        logp = squashed_log_prob(u, mean, log_std, cfg.action_scale)
        sa = np.concatenate([states, a], axis=-1)
        o1, c1 = self.q1.forward(sa)
        o2, c2 = self.q2.forward(sa)
        use1 = o1[:, 0] <= o2[:, 0]
        qmin = np.where(use1, o1[:, 0], o2[:, 0])
        loss = float(np.mean(cfg.alpha * logp - qmin))

        w = -1.0 / B
        _, g1 = self.q1.backward(c1, (w * use1)[:, None], need_params=False)
        _, g2 = self.q2.backward(c2, (w * ~use1)[:, None], need_params=False)
        d_a = (g1 + g2)[:, k:]
        # d logp / du at fixed noise: the Gaussian part depends only on log_std
        d_u = d_a * cfg.action_scale * (1.0 - t * t) + (cfg.alpha / B) * 2.0 * t
        d_mean = d_u
        d_log_std = d_u * std * noise - cfg.alpha / B
        d_log_std = d_log_std * ((raw >= cfg.log_std_min) & (raw <= cfg.log_std_max))
        grads, _ = self.policy.backward(pcache, np.concatenate([d_mean, d_log_std], axis=1), need_input=False)
        return loss, grads

    def update(self, batch: dict, rng: np.random.Generator) -> dict[str, float]:
        cfg = self.config
        y = self.critic_targets(batch, rng)
        q1_loss, g1 = self.critic_loss(self.q1, batch, y)
        q2_loss, g2 = self.critic_loss(self.q2, batch, y)
        if not (math.isfinite(q1_loss) and math.isfinite(q2_loss)):
            raise FloatingPointError(f"non-finite critic loss (q1={q1_loss}, q2={q2_loss}, max|y|={np.abs(y).max()})")
        adam_step(self.q1_opt, self.q1, g1)
        adam_step(self.q2_opt, self.q2, g2)

        noise = rng.standard_normal((len(y), self.k))
        pi_loss, gp = self.policy_loss(batch["states"], noise)
        if not math.isfinite(pi_loss):
            raise FloatingPointError(f"non-finite policy loss {pi_loss}")
        adam_step(self.policy_opt, self.policy, gp)

        soft_update(self.target_q1, self.q1, cfg.tau)
        soft_update(self.target_q2, self.q2, cfg.tau)
        self.updates += 1
        return {"q1_loss": q1_loss, "q2_loss": q2_loss, "policy_loss": pi_loss}

    # checkpointing

    def _nets(self) -> dict[str, Mlp]:
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "target_q1": self.target_q1, "target_q2": self.target_q2}

    def _opts(self) -> dict[str, Adam]:
        return {"policy": self.policy_opt, "q1": self.q1_opt, "q2": self.q2_opt}

    def save(self, path, include_buffer: bool = True) -> None:
        arrays: dict[str, np.ndarray] = {
            "format_version": np.array(CHECKPOINT_VERSION),
            "meta": np.array(json.dumps({"k": self.k, "config": asdict(self.config), "updates": self.updates})),
        }
        for name, net in self._nets().items():
            for i, p in enumerate(net.params()):
                arrays[f"net/{name}/{i}"] = p
        for name, opt in self._opts().items():
            arrays[f"opt/{name}/t"] = np.array(opt.t)
            for i, s in enumerate(opt.state_arrays()):
                arrays[f"opt/{name}/{i}"] = s
        if include_buffer:
            buf = self.buffer
            arrays["buffer/cursor"] = np.array(buf.cursor)
            for key, arr in buf.take(slice(0, buf.size)).items():
                arrays[f"buffer/{key}"] = arr
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "SacAgent":
        with np.load(path, allow_pickle=False) as data:
            if int(data["format_version"]) != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {int(data['format_version'])}")
            meta = json.loads(str(data["meta"]))
            agent = cls(meta["k"], SacConfig(**meta["config"]), rng=0)
            agent.updates = meta["updates"]
            for name, net in agent._nets().items():
                net.set_params([data[f"net/{name}/{i}"] for i in range(len(net.params()))])
            for name, opt in agent._opts().items():
                n = len(opt.state_arrays())
                opt.load_state_arrays([data[f"opt/{name}/{i}"] for i in range(n)], int(data[f"opt/{name}/t"]))
            if "buffer/cursor" in data:
                buf = agent.buffer
                states = data["buffer/states"]
                for i in range(len(states)):
                    buf.push(states[i], data["buffer/actions"][i], data["buffer/rewards"][i],
                             data["buffer/next_states"][i], bool(data["buffer/terminals"][i]))
                buf.cursor = int(data["buffer/cursor"])
        return agent


@dataclass
class EpisodeLog:
    episode: int
    steps_taken: int
    episode_reward: float
    final_sum_rate: float
    desired_rate: float
    avg_rate_this_episode: float
    step_rates: list[float] = field(default_factory=list, repr=False)
    losses: dict = field(default_factory=dict, repr=False)


TRAINING_LOG_COLUMNS = ["episode", "steps_taken", "episode_reward", "final_sum_rate", "desired_rate",
                        "avg_rate_this_episode"]


def train_episode(agent: SacAgent, env: RateEnv, episode: int, rng: np.random.Generator) -> EpisodeLog:
    """Run one training episode, updating the agent after every environment step."""
    cfg = agent.config
    state = env.reset(episode)
    rates: list[float] = []
    reward_total = 0.0
    last_losses: dict = {}
    while True:
        sample = agent.sample_action(state, rng)
        result = env.step(sample.action / cfg.action_scale)
        agent.buffer.push(state, sample.action, result.reward, result.next_state, result.terminal)
        state = result.next_state
        rates.append(result.info["sum_rate"])
        reward_total += result.reward
        if len(agent.buffer) >= cfg.batch_size:
            for _ in range(cfg.grad_steps_per_env_step):
                last_losses = agent.update(agent.buffer.sample(cfg.batch_size, rng), rng)
        if result.done:
            break
    return EpisodeLog(
        episode=episode,
        steps_taken=len(rates),
        episode_reward=reward_total,
        final_sum_rate=rates[-1],
        desired_rate=env.desired_rate(),
        avg_rate_this_episode=average_training_rate(rates, env.config.horizon),
        step_rates=rates,
        losses=last_losses,
    )


def train(
    agent: SacAgent,
    env: RateEnv,
    episodes: int = 200,
    rng: np.random.Generator | int | None = None,
    on_episode: Callable[[EpisodeLog], None] | None = None,
) -> list[EpisodeLog]:
    if env.k != agent.k:
        raise ValueError(f"environment has {env.k} paths but the agent expects {agent.k}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    log = []
    for ep in range(episodes):
        entry = train_episode(agent, env, ep, rng)
        log.append(entry)
        if on_episode is not None:
            on_episode(entry)
    return log


def rollout(agent: SacAgent, env: RateEnv, rng: np.random.Generator, deterministic: bool = False) -> float:
    """One evaluation rollout from the zero state on the current network; returns the final sum rate."""
    state = env.reset(dynamics=False)
    result = None
    while result is None or not result.done:
        sample = agent.sample_action(state, rng, deterministic=deterministic)
        result = env.step(sample.action / agent.config.action_scale)
        state = result.next_state
    return result.info["sum_rate"]


def evaluate(
    agent: SacAgent,
    env: RateEnv,
    repeats: int = 5,
    rng: np.random.Generator | int | None = None,
    deterministic: bool = False,
) -> float:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return float(np.mean([rollout(agent, env, rng, deterministic) for _ in range(repeats)]))
