"""Epoch-budget successive halving with KDE-guided configuration proposals.

The scheduler cycles Hyperband brackets over a three-level budget ladder
(min, mid, max epochs).  New configurations enter at a bracket's base rung;
the best fraction is re-evaluated from scratch at the next budget.  Once
enough observations exist at some budget, proposals come from the ratio of
two diagonal-bandwidth kernel density estimators fitted over the best and
remaining vectorized configurations at the largest such budget; a fixed
fraction of proposals stays uniformly random.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .space import Configuration, ConfigurationSpace, config_from_vector, sample, vectorize

__all__ = [
    "BudgetLadder",
    "EngineParams",
    "Rung",
    "Observation",
    "SearchResult",
    "min_budget",
    "plan_iterations",
    "propose",
    "run_search",
]

ETA = 3
MIN_BANDWIDTH = 1e-3
_MASK = 2**64 - 1


def min_budget(max_budget: int, eta: int = ETA, n_mid: int = 1) -> int:
    """Smallest rung budget: ``floor(max_budget / eta**(n_mid + 1))``."""
    divisor = eta ** (n_mid + 1)
    if max_budget < divisor:
        raise DomainError(f"max_budget must be >= {divisor}, got {max_budget}")
    return max_budget // divisor


@dataclass(frozen=True)
class BudgetLadder:
    """Epoch budgets for the three rung levels; eta fixed at 3, one mid level."""

    min_budget: int
    mid_budget: int
    max_budget: int

    def __post_init__(self):
        if not (1 <= self.min_budget <= self.mid_budget <= self.max_budget):
            raise DomainError(
                f"ladder must satisfy 1 <= min <= mid <= max, got "
                f"({self.min_budget}, {self.mid_budget}, {self.max_budget})"
            )

    @classmethod
    def from_max(cls, max_budget: int) -> "BudgetLadder":
        return cls(
            min_budget=min_budget(max_budget),
            mid_budget=max_budget // ETA,
            max_budget=max_budget,
        )

    @property
    def levels(self) -> tuple[int, int, int]:
        return (self.min_budget, self.mid_budget, self.max_budget)


@dataclass(frozen=True)
class EngineParams:
    n_iterations: int = 30
    top_n_percent: int = 30
    num_samples: int = 32
    random_fraction: float = 1.0 / 3.0
    min_points_in_model: int | None = None  # defaults to space dimension + 1
    bandwidth_factor: float = 3.0
    promotion_rate: str = "eta"  # "eta" promotes the top third, "half" the top half

    def __post_init__(self):
        if self.n_iterations < 1 or self.top_n_percent < 1 or self.num_samples < 1:
            raise DomainError("engine counts must be positive")
        if not (0.0 <= self.random_fraction <= 1.0):
            raise DomainError(f"random_fraction must lie in [0, 1], got {self.random_fraction}")
        if self.promotion_rate not in ("eta", "half"):
            raise DomainError(f"promotion_rate must be 'eta' or 'half', got {self.promotion_rate!r}")


@dataclass(frozen=True)
class Rung:
    budget: int
    n_configs: int
    n_promote: int


def _bracket(ladder: BudgetLadder, s: int, promotion_rate: str) -> list[Rung]:
    """Rungs of one successive-halving bracket with s+1 budget levels."""
    s_max = 2
    budgets = ladder.levels[s_max - s :]
    n0 = math.ceil((s_max + 1) / (s + 1)) * ETA**s
    sizes = [n0]
    for _ in range(s):
        sizes.append(sizes[-1] // ETA if promotion_rate == "eta" else sizes[-1] // 2)
    rungs = []
    for i, (budget, n) in enumerate(zip(budgets, sizes)):
        promote = sizes[i + 1] if i + 1 < len(sizes) else 0
        rungs.append(Rung(budget=budget, n_configs=n, n_promote=promote))
    return rungs


def plan_iterations(ladder: BudgetLadder, params: EngineParams) -> list[list[Rung]]:
    """One bracket per iteration, cycling aggressiveness s = 2, 1, 0, 2, ..."""
    return [
        _bracket(ladder, (2, 1, 0)[i % 3], params.promotion_rate)
        for i in range(params.n_iterations)
    ]


@dataclass(frozen=True)
class Observation:
    seq: int
    config: Configuration
    vector: np.ndarray = field(compare=False)
    budget: int = 0
    loss: float = math.inf
    status: str = "ok"  # "ok" | "failed"
    iteration: int = 0
    rung: int = 0
    base: bool = True
    model_based: bool = False
    virtual_time: int = 0  # cumulative epochs consumed once this result landed

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "config_id": self.config.id,
            "config": self.config.assignments,
            "budget": self.budget,
            "loss": self.loss,
            "status": self.status,
            "iteration": self.iteration,
            "rung": self.rung,
            "base": self.base,
            "model_based": self.model_based,
            "virtual_time": self.virtual_time,
        }


@dataclass(frozen=True)
class SearchResult:
    incumbent: Configuration | None
    incumbent_loss: float
    observations: tuple[Observation, ...]
    ladder: BudgetLadder

    @property
    def accounting(self) -> dict:
        return {
            "unique_configs": len({o.config.id for o in self.observations}),
            "total_evaluations": len(self.observations),
            "full_budget_equivalents": sum(o.budget for o in self.observations)
            / self.ladder.max_budget,
        }


def _scott_bandwidths(data: np.ndarray) -> np.ndarray:
    n, d = data.shape
    std = data.std(axis=0, ddof=1)
    return np.maximum(std * n ** (-1.0 / (d + 4)), MIN_BANDWIDTH)


def _log_kde(x: np.ndarray, data: np.ndarray, bw: np.ndarray) -> float:
    """Log density of a diagonal Gaussian KDE at one point."""
    z = (x[None, :] - data) / bw[None, :]
    per_kernel = (-0.5 * z**2 - np.log(bw)[None, :] - 0.5 * np.log(2.0 * np.pi)).sum(axis=1)
    peak = per_kernel.max()
    return float(peak + np.log(np.mean(np.exp(per_kernel - peak))))


def propose(
    space: ConfigurationSpace,
    observations,
    budget: int,
    params: EngineParams,
    rng: np.random.Generator,
) -> tuple[Configuration, bool]:
    """Next configuration to evaluate, plus whether the model produced it.

    Falls back to a uniform random sample while no budget level has enough
    observations, for the configured random fraction of calls, and when the
    good-side KDE would be degenerate.
    """
    if params.random_fraction >= 1.0:
        return sample(space, rng), False

    min_points = params.min_points_in_model or (len(space.params) + 1)
    # one entry per distinct config and budget: re-evaluations of the same
    # deterministic pair carry no information and would collapse the KDE
    by_budget: dict[int, list] = {}
    seen: set[tuple[str, int]] = set()
    for obs in observations:
        key = (obs.config.id, obs.budget)
        if key in seen:
            continue
        seen.add(key)
        by_budget.setdefault(obs.budget, []).append(obs)
    eligible = [b for b, group in by_budget.items() if len(group) >= min_points + 2]
    if not eligible:
        return sample(space, rng), False
    if rng.random() < params.random_fraction:
        return sample(space, rng), False

    group = by_budget[max(eligible)]
    order = sorted(range(len(group)), key=lambda i: (group[i].status != "ok", group[i].loss, i))
    # floor the good side at min_points so small groups still carry a usable KDE
    n_good = max(min_points, (len(group) * params.top_n_percent) // 100)
    if n_good < 2 or len(group) - n_good < 2:
        return sample(space, rng), False
    good = np.array([group[i].vector for i in order[:n_good]])
    bad = np.array([group[i].vector for i in order[n_good:]])
    if np.all(good.std(axis=0) < 1e-12):
        return sample(space, rng), False

    good_bw = _scott_bandwidths(good)
    bad_bw = _scott_bandwidths(bad) * params.bandwidth_factor

    best_vec = None
    best_score = -math.inf
    for _ in range(params.num_samples):
        center = good[int(rng.integers(len(good)))]
        cand = np.clip(center + rng.normal(0.0, good_bw), 0.0, 1.0)
        score = _log_kde(cand, good, good_bw) - _log_kde(cand, bad, bad_bw)
        if score > best_score:
            best_score = score
            best_vec = cand
    if best_vec is None:  # pragma: no cover - num_samples >= 1
        return sample(space, rng), False
    return config_from_vector(space, best_vec), True


def _eval_seed(master_seed: int, config: Configuration, budget: int) -> int:
    ss = np.random.SeedSequence([master_seed & _MASK, int(config.id, 16), budget])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_search(
    space: ConfigurationSpace,
    ladder: BudgetLadder,
    params: EngineParams,
    objective_fn,
    seed: int,
    workers: int = 1,
    observer=None,
) -> SearchResult:
    """Run the full search loop and return the incumbent plus the log.

    ``objective_fn(config, budget_epochs, seed) -> (loss, failed)`` must be
    total and return a finite loss.  Evaluation seeds are derived from
    ``(seed, config id, budget)``, so a promoted configuration retrains
    from scratch at the larger epoch count with its own stream, and the
    whole run is reproducible from ``seed`` alone.  ``observer``, when
    given, receives each Observation as it is recorded.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed & _MASK]))
    observations: list[Observation] = []
    seq = 0
    virtual_time = 0

    def evaluate(batch):
        jobs = [(cfg, budget, _eval_seed(seed, cfg, budget)) for cfg, budget in batch]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(lambda j: objective_fn(*j), jobs))
        return [objective_fn(*j) for j in jobs]

    for iteration, bracket in enumerate(plan_iterations(ladder, params)):
        prev_rung: list[Observation] = []
        for rung_idx, rung in enumerate(bracket):
            if rung_idx == 0:
                picked = [propose(space, observations, rung.budget, params, rng)
                          for _ in range(rung.n_configs)]
                base = True
            else:
                ranked = sorted(
                    prev_rung, key=lambda o: (o.status != "ok", o.loss, o.seq)
                )
                picked = [(o.config, o.model_based) for o in ranked[: rung.n_configs]]
                base = False
            outcomes = evaluate([(cfg, rung.budget) for cfg, _ in picked])
            rung_obs = []
            for (cfg, model_based), (loss, failed) in zip(picked, outcomes):
                if not math.isfinite(loss):
                    raise DomainError(
                        f"objective returned non-finite loss {loss!r} for {cfg.id}"
                    )
                virtual_time += rung.budget
                obs = Observation(
                    seq=seq,
                    config=cfg,
                    vector=vectorize(space, cfg),
                    budget=rung.budget,
                    loss=float(loss),
                    status="failed" if failed else "ok",
                    iteration=iteration,
                    rung=rung_idx,
                    base=base,
                    model_based=model_based,
                    virtual_time=virtual_time,
                )
                observations.append(obs)
                rung_obs.append(obs)
                seq += 1
                if observer is not None:
                    observer(obs)
            prev_rung = rung_obs

    at_max = [o for o in observations if o.budget == ladder.max_budget]
    candidates = at_max or observations
    if candidates:
        best = min(candidates, key=lambda o: (o.status != "ok", o.loss, o.seq))
        incumbent, incumbent_loss = best.config, best.loss
    else:
        incumbent, incumbent_loss = None, math.inf
    return SearchResult(
        incumbent=incumbent,
        incumbent_loss=incumbent_loss,
        observations=tuple(observations),
        ladder=ladder,
    )
