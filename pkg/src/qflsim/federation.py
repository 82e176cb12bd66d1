"""Federated training: coverage, epsilon schedules, local steps, averaging.

Every round, each client starts from the broadcast parameter vector,
runs its local epochs over seeded mini-batches (adversarially perturbing
a ``rho`` fraction of each batch when covered), and the server takes the
unweighted elementwise mean of the returned vectors in ascending
client-id order. All randomness is drawn from per-(seed, client, round)
streams, so serial and parallel executions of a round are bitwise
identical.

Two regimes are supported: ``FineTune`` first converges on clean data
and then continues under the adversarial schedule from the learned
parameters; ``Scratch`` applies the schedule from random initialization.
Client Adam state persists across rounds. At the clean-to-adversarial
boundary of a fine-tune run the optimizer state is reset by default,
but only if the adversarial phase actually perturbs anything (some
covered client with epsilon > 0) — this keeps a zero-strength or
zero-coverage schedule bitwise identical to purely clean training.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import adversary
from .adversary import AttackConfig
from .data import Shard
from .errors import ConfigError, ProtocolError
from .qnn import ModelConfig, grad_params_batch

TWO_PI = 2.0 * math.pi

# Sub-stream tags for per-client generators.
_STREAM_BATCHES = 0
_STREAM_ATTACK = 1
_STREAM_INIT = 2
_STREAM_COVERAGE = 3


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    """Every covered client trains at the same perturbation radius."""

    epsilon: float


@dataclass(frozen=True)
class Mix:
    """Radii assigned cyclically across covered clients in id order."""

    radii: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if not self.radii:
            raise ConfigError("a mixed schedule needs at least one radius")


@dataclass(frozen=True)
class FineTune:
    """Clean rounds first, then adversarial rounds from the learned weights."""

    clean_rounds: int = 50
    at_rounds: int = 30


@dataclass(frozen=True)
class Scratch:
    """Adversarial rounds from random initialization."""

    at_rounds: int = 20


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 15
    coverage: float = 0.0
    rho: float = 0.5
    schedule: Fixed | Mix = Fixed(0.1)
    regime: FineTune | Scratch = field(default_factory=FineTune)
    local_epochs: int = 1
    batch_size: int = 32
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    master_seed: int = 0
    weighted_avg: bool = False
    covered_selection: str = "lowest"
    reset_optimizer_at_defense: bool = True
    attack_steps: int = 10
    attack_step_size: float | None = None

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError("n_clients must be >= 1")
        if not 0.0 <= self.coverage <= 1.0:
            raise ConfigError("coverage must lie in [0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]")
        if self.local_epochs < 0 or self.batch_size < 1:
            raise ConfigError("local_epochs must be >= 0 and batch_size >= 1")
        if self.covered_selection not in ("lowest", "random"):
            raise ConfigError(f"unknown covered_selection {self.covered_selection!r}")
        rounds = (
            (self.regime.clean_rounds, self.regime.at_rounds)
            if isinstance(self.regime, FineTune)
            else (self.regime.at_rounds,)
        )
        if any(r < 0 for r in rounds):
            raise ConfigError("round counts must be >= 0")


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> tuple[np.ndarray, AdamState]:
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m=m, v=v, t=t)


# ---------------------------------------------------------------------------
# Coverage and schedules
# ---------------------------------------------------------------------------


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def assign_coverage(n_clients: int, coverage: float) -> list[int]:
    """Deterministic covered set: the round_half_up(coverage*K) lowest ids."""
    if not 0.0 <= coverage <= 1.0:
        raise ConfigError("coverage must lie in [0, 1]")
    return list(range(_round_half_up(coverage * n_clients)))


def _covered_ids(fed: FederationConfig) -> list[int]:
    n_cov = _round_half_up(fed.coverage * fed.n_clients)
    if fed.covered_selection == "lowest":
        return list(range(n_cov))
    rng = np.random.default_rng([fed.master_seed, _STREAM_COVERAGE])
    return sorted(rng.permutation(fed.n_clients)[:n_cov].tolist())


def assign_epsilons(covered_ids, schedule: Fixed | Mix) -> dict[int, float]:
    """Map covered clients (ascending id) to radii; Mix cycles through its list."""
    ids = sorted(covered_ids)
    if isinstance(schedule, Fixed):
        return {cid: schedule.epsilon for cid in ids}
    m = len(schedule.radii)
    return {cid: schedule.radii[j % m] for j, cid in enumerate(ids)}


# ---------------------------------------------------------------------------
# Client state and local training
# ---------------------------------------------------------------------------


@dataclass
class ClientState:
    client_id: int
    shard: Shard
    covered: bool = False
    epsilon: float = 0.0
    opt: AdamState | None = None


def _client_rng(master_seed: int, client_id: int, round_index: int, stream: int):
    return np.random.default_rng([master_seed, client_id, round_index, stream])


def local_train(
    client: ClientState,
    theta_global: np.ndarray,
    round_index: int,
    fed: FederationConfig,
    model: ModelConfig,
) -> tuple[np.ndarray, float]:
    """One client's local pass(es); returns updated parameters and mean loss.

    With zero local epochs the global parameters come back unchanged and
    the loss is NaN. A covered client with epsilon 0 never enters the
    attack path, so it is bitwise identical to an uncovered one.
    """
    if len(client.shard) == 0:
        raise ProtocolError(f"client {client.client_id} has an empty shard")
    theta = theta_global.copy()
    if client.opt is None:
        client.opt = AdamState(m=np.zeros_like(theta), v=np.zeros_like(theta))
    rng_batches = _client_rng(fed.master_seed, client.client_id, round_index, _STREAM_BATCHES)
    rng_attack = _client_rng(fed.master_seed, client.client_id, round_index, _STREAM_ATTACK)
    attacking = client.covered and client.epsilon > 0.0
    if attacking:
        atk = AttackConfig(
            epsilon=client.epsilon,
            steps=fed.attack_steps,
            step_size=fed.attack_step_size,
            random_start=True,
        )
    losses = []
    n = len(client.shard)
    for _ in range(fed.local_epochs):
        order = rng_batches.permutation(n)
        for start in range(0, n, fed.batch_size):
            sel = order[start : start + fed.batch_size]
            xb, yb = client.shard.x[sel], client.shard.y[sel]
            if attacking:
                xb = adversary.attack_batch(xb, yb, theta, model, atk, fed.rho, rng_attack)
            batch_loss, grad = grad_params_batch(xb, yb, theta, model)
            theta, client.opt = adam_step(
                theta, grad, client.opt, fed.lr, fed.beta1, fed.beta2, fed.adam_eps
            )
            losses.append(batch_loss)
    return theta, float(np.mean(losses)) if losses else float("nan")


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def fedavg(client_params: list[np.ndarray], weights=None) -> np.ndarray:
    """Elementwise mean, summed in ascending client-id order (list order).

    Identical inputs come back bitwise unchanged, so a round in which no
    client moves is an exact fixed point of the protocol.
    """
    if not client_params:
        raise ProtocolError("cannot aggregate an empty parameter list")
    shape = client_params[0].shape
    if any(p.shape != shape for p in client_params):
        raise ProtocolError("client parameter vectors differ in shape")
    if weights is None:
        if all(np.array_equal(p, client_params[0]) for p in client_params[1:]):
            return client_params[0].copy()
        acc = np.zeros(shape)
        for p in client_params:
            acc = acc + p
        return acc / len(client_params)
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    acc = np.zeros(shape)
    for w, p in zip(weights, client_params):
        acc = acc + w * p
    return acc


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class RoundRecord:
    round_index: int
    theta: np.ndarray
    per_client_loss: list[float]
    mean_train_loss: float
    elapsed_ms: float


@dataclass
class ExperimentResult:
    theta: np.ndarray
    rounds: list[RoundRecord]


def initial_params(model: ModelConfig, master_seed: int) -> np.ndarray:
    """Seeded random start: angles uniform in [0, 2*pi)."""
    rng = np.random.default_rng([master_seed, _STREAM_INIT])
    return rng.uniform(0.0, TWO_PI, size=model.n_params)


def _run_round(
    theta: np.ndarray,
    clients: list[ClientState],
    round_index: int,
    fed: FederationConfig,
    model: ModelConfig,
    n_jobs: int,
) -> tuple[list[np.ndarray], list[float]]:
    def work(client: ClientState):
        return local_train(client, theta, round_index, fed, model)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(work, clients))
    else:
        results = [work(c) for c in clients]
    return [r[0] for r in results], [r[1] for r in results]


def run_experiment(
    shards: list[Shard],
    fed: FederationConfig,
    model: ModelConfig,
    n_jobs: int = 1,
    theta_init: np.ndarray | None = None,
) -> ExperimentResult:
    """Full federated run under the configured regime and schedule."""
    if len(shards) != fed.n_clients:
        raise ConfigError(f"{len(shards)} shards for {fed.n_clients} clients")
    theta = initial_params(model, fed.master_seed) if theta_init is None else theta_init.copy()
    clients = [ClientState(client_id=s.client_id, shard=s) for s in shards]

    covered = _covered_ids(fed)
    eps_map = assign_epsilons(covered, fed.schedule)
    if isinstance(fed.regime, FineTune):
        phases = [(fed.regime.clean_rounds, False), (fed.regime.at_rounds, True)]
    else:
        phases = [(fed.regime.at_rounds, True)]

    records: list[RoundRecord] = []
    weights = [len(s) for s in shards] if fed.weighted_avg else None
    round_index = 0
    for n_rounds, defended in phases:
        any_perturbation = defended and any(eps_map.get(c, 0.0) > 0.0 for c in covered)
        if any_perturbation and fed.reset_optimizer_at_defense and round_index > 0:
            for c in clients:
                c.opt = None
        for c in clients:
            c.covered = defended and c.client_id in eps_map
            c.epsilon = eps_map.get(c.client_id, 0.0) if defended else 0.0
        for _ in range(n_rounds):
            tic = time.perf_counter()
            thetas, losses = _run_round(theta, clients, round_index, fed, model, n_jobs)
            theta = fedavg(thetas, weights)
            records.append(
                RoundRecord(
                    round_index=round_index,
                    theta=theta.copy(),
                    per_client_loss=losses,
                    mean_train_loss=float(np.mean(losses)),
                    elapsed_ms=(time.perf_counter() - tic) * 1e3,
                )
            )
            round_index += 1
    return ExperimentResult(theta=theta, rounds=records)


def centralized_train(
    x: np.ndarray,
    y: np.ndarray,
    fed: FederationConfig,
    model: ModelConfig,
    epochs: int | None = None,
) -> ExperimentResult:
    """Same training loop on the pooled dataset, as a one-client federation.

    The default budget matches the federated run: regime rounds times
    local epochs. Passing ``epochs`` overrides it with a clean scratch
    run of that many rounds.
    """
    if x.shape[0] == 0:
        raise ConfigError("centralized training needs a non-empty dataset")
    fed1 = replace(fed, n_clients=1)
    if epochs is not None:
        fed1 = replace(fed1, coverage=0.0, regime=Scratch(at_rounds=epochs))
    shard = Shard(client_id=0, x=x, y=y)
    return run_experiment([shard], fed1, model)
