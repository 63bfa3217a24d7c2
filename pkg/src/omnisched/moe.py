"""Sparse-MoE token routing with per-modality routers and hybrid balancing.

Routing is top-k over bias-adjusted scores, but combination weights are the
softmax of the original router logits restricted to the selected experts:
the balancing bias steers *which* experts fire, never how their outputs are
mixed. Balancing combines two mechanisms:

* an auxiliary load-balancing loss ``alpha * E * sum_i f_i * pbar_i``
  reported as a scalar diagnostic each step, minimized (= alpha) exactly
  when load fractions and mean router probabilities are both uniform;
* a per-router bias update ``b_i += u * sign(1/E - f_i)`` that nudges
  selection away from overloaded experts. This is the active controller in
  the simulation; no gradient descent is modeled.

Each modality owns an independent router state; routing one modality's
tokens never touches another router.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import InvalidSpecError, RoutingError
from .workload import Modality


@dataclass(frozen=True)
class RouterConfig:
    num_experts: int
    top_k: int
    aux_coefficient: float = 0.01
    bias_step: float = 0.01

    def __post_init__(self):
        if self.num_experts < 2:
            raise InvalidSpecError(f"num_experts must be >= 2, got {self.num_experts}")
        if not (1 <= self.top_k < self.num_experts):
            raise InvalidSpecError(
                f"top_k must satisfy 1 <= k < num_experts, got k={self.top_k}, E={self.num_experts}"
            )
        if self.aux_coefficient < 0:
            raise InvalidSpecError("aux_coefficient must be >= 0")
        if self.bias_step < 0:
            raise InvalidSpecError("bias_step must be >= 0")


@dataclass(frozen=True)
class RouterState:
    """Per-modality balancing state: selection bias plus cumulative loads."""

    modality: Modality
    bias: np.ndarray
    load_counts: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, modality: Modality, num_experts: int) -> "RouterState":
        return cls(
            modality=modality,
            bias=np.zeros(num_experts, dtype=float),
            load_counts=np.zeros(num_experts, dtype=np.int64),
            step=0,
        )

    @property
    def num_experts(self) -> int:
        return self.bias.shape[0]


@dataclass(frozen=True)
class LoadReport:
    step: int
    load_fractions: np.ndarray  # f, sums to 1
    mean_router_prob: np.ndarray  # pbar, sums to 1
    bias: np.ndarray  # bias in effect when this step was routed
    cov: float  # coefficient of variation of f
    aux: float


def route_topk(
    logits: Sequence[float] | np.ndarray,
    bias: Sequence[float] | np.ndarray,
    k: int,
) -> tuple[list[int], list[float]]:
    """Select the k experts with the largest ``logit + bias`` (ties to the
    lowest index) and weight them by the softmax of the original logits
    restricted to the selection.

    Returns (indices in descending adjusted-score order, weights summing to 1).
    """
    logits = np.asarray(logits, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if logits.ndim != 1 or logits.shape != bias.shape:
        raise RoutingError(
            f"logits and bias must be equal-length vectors, got {logits.shape} and {bias.shape}"
        )
    if not np.all(np.isfinite(logits)):
        raise RoutingError("non-finite logit")
    if not np.all(np.isfinite(bias)):
        raise RoutingError("non-finite bias")
    E = logits.shape[0]
    if not (1 <= k < E):
        raise RoutingError(f"k must satisfy 1 <= k < E, got k={k}, E={E}")

    adjusted = logits + bias
    order = np.argsort(-adjusted, kind="stable")  # stable: ties keep lowest index first
    selected = order[:k]
    chosen = logits[selected]
    exp = np.exp(chosen - chosen.max())
    weights = exp / exp.sum()
    return [int(i) for i in selected], [float(w) for w in weights]


def _check_probability_vector(name: str, v: np.ndarray, E: int) -> None:
    if v.ndim != 1 or v.shape[0] != E:
        raise RoutingError(f"{name} must be a length-{E} vector, got shape {v.shape}")
    if np.any(v < -1e-12) or abs(float(v.sum()) - 1.0) > 1e-6:
        raise RoutingError(f"{name} is not a probability vector (sum={float(v.sum())})")


def aux_loss(f: Sequence[float] | np.ndarray, pbar: Sequence[float] | np.ndarray, alpha: float) -> float:
    """Load-balancing loss ``alpha * E * sum_i f_i * pbar_i``.

    Equals ``alpha`` exactly when both vectors are uniform; grows as load and
    router probability concentrate on the same experts.
    """
    f = np.asarray(f, dtype=float)
    pbar = np.asarray(pbar, dtype=float)
    if f.shape != pbar.shape:
        raise RoutingError(f"dimension mismatch: f {f.shape} vs pbar {pbar.shape}")
    E = f.shape[0]
    _check_probability_vector("f", f, E)
    _check_probability_vector("pbar", pbar, E)
    return float(alpha * E * np.dot(f, pbar))


def bias_update(state: RouterState, f: Sequence[float] | np.ndarray, u: float) -> RouterState:
    """Sign rule: underloaded experts gain ``u`` of bias, overloaded lose it."""
    f = np.asarray(f, dtype=float)
    if f.shape != state.bias.shape:
        raise RoutingError(f"dimension mismatch: f {f.shape} vs bias {state.bias.shape}")
    if u < 0:
        raise RoutingError(f"bias step must be >= 0, got {u}")
    target = 1.0 / state.num_experts
    new_bias = state.bias + u * np.sign(target - f)
    return replace(state, bias=new_bias, step=state.step + 1)


class GaussianLogitSource:
    """Seeded stream of per-token logit vectors: N(offset_i, std^2) per expert.

    The fixed mean-offset vector models persistent expert preference, the
    skew the balancer has to correct.
    """

    def __init__(self, mean_offsets: Sequence[float] | np.ndarray, seed: int, std: float = 1.0):
        self.mean_offsets = np.asarray(mean_offsets, dtype=float)
        if self.mean_offsets.ndim != 1:
            raise InvalidSpecError("mean_offsets must be a vector")
        if std <= 0:
            raise InvalidSpecError(f"std must be > 0, got {std}")
        self.std = std
        self.seed = seed
        self._rng = np.random.Generator(np.random.PCG64(seed))

    @property
    def num_experts(self) -> int:
        return self.mean_offsets.shape[0]

    def draw(self, tokens: int) -> np.ndarray:
        return self._rng.normal(0.0, self.std, size=(tokens, self.num_experts)) + self.mean_offsets


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def route_batch(state: RouterState, logits: np.ndarray, k: int) -> tuple[np.ndarray, RouterState]:
    """Route a (tokens, E) logit batch with the state's bias; returns the
    per-expert selection counts and the state with loads accumulated."""
    if logits.ndim != 2 or logits.shape[1] != state.num_experts:
        raise RoutingError(f"logit batch must be (tokens, {state.num_experts})")
    adjusted = logits + state.bias
    top = np.argpartition(-adjusted, k - 1, axis=1)[:, :k]
    counts = np.bincount(top.ravel(), minlength=state.num_experts).astype(np.int64)
    return counts, replace(state, load_counts=state.load_counts + counts)


def coefficient_of_variation(f: np.ndarray) -> float:
    return float(np.std(f) / np.mean(f))


def simulate_routing(
    config: RouterConfig,
    source: GaussianLogitSource,
    tokens_per_step: int,
    steps: int,
    modality: Modality = Modality.TEXT,
) -> list[LoadReport]:
    """Route ``tokens_per_step`` tokens per step, reporting loads and applying
    the bias update after each step. Deterministic for a given source seed."""
    if source.num_experts != config.num_experts:
        raise InvalidSpecError("logit source and router config disagree on num_experts")
    if tokens_per_step < 1:
        raise InvalidSpecError("tokens_per_step must be >= 1")
    if steps < 1:
        raise InvalidSpecError("steps must be >= 1")

    state = RouterState.fresh(modality, config.num_experts)
    reports: list[LoadReport] = []
    for step in range(steps):
        logits = source.draw(tokens_per_step)
        counts, state = route_batch(state, logits, config.top_k)
        f = counts / (config.top_k * tokens_per_step)
        pbar = _softmax_rows(logits).mean(axis=0)
        reports.append(
            LoadReport(
                step=step,
                load_fractions=f,
                mean_router_prob=pbar,
                bias=state.bias.copy(),
                cov=coefficient_of_variation(f),
                aux=aux_loss(f, pbar, config.aux_coefficient),
            )
        )
        state = bias_update(state, f, config.bias_step)
    return reports


class ModalityRouterBank:
    """Distinct router per modality over a shared expert pool; states are
    fully isolated."""

    def __init__(self, config: RouterConfig, modalities: Sequence[Modality] = tuple(Modality)):
        self.config = config
        self.states: dict[Modality, RouterState] = {
            m: RouterState.fresh(m, config.num_experts) for m in modalities
        }

    def route(self, modality: Modality, logits: np.ndarray) -> np.ndarray:
        counts, new_state = route_batch(self.states[modality], logits, self.config.top_k)
        self.states[modality] = new_state
        return counts

    def update_bias(self, modality: Modality, f: np.ndarray) -> None:
        self.states[modality] = bias_update(self.states[modality], f, self.config.bias_step)


@dataclass(frozen=True)
class MoEParamSpec:
    """Parameter accounting for a sparse-MoE stack."""

    shared_params: float
    per_expert_params: float
    num_experts: int
    top_k: int

    def __post_init__(self):
        if self.shared_params <= 0 or self.per_expert_params <= 0:
            raise InvalidSpecError("parameter counts must be positive")
        if self.num_experts < 1 or self.top_k < 1:
            raise InvalidSpecError("num_experts and top_k must be >= 1")
        if self.top_k > self.num_experts:
            raise InvalidSpecError("top_k cannot exceed num_experts")


def moe_param_counts(spec: MoEParamSpec) -> tuple[float, float]:
    """(total parameters, parameters activated per token)."""
    total = spec.shared_params + spec.num_experts * spec.per_expert_params
    activated = spec.shared_params + spec.top_k * spec.per_expert_params
    return total, activated


DEFAULT_SHARED_GRID = tuple(float(x) for x in np.arange(0.25e9, 8.25e9, 0.25e9))
DEFAULT_EXPERT_GRID = tuple(float(x) for x in np.arange(0.05e9, 2.05e9, 0.05e9))


def search_param_grid(
    target_total: float,
    target_activated: float,
    shared_grid: Sequence[float] = DEFAULT_SHARED_GRID,
    per_expert_grid: Sequence[float] = DEFAULT_EXPERT_GRID,
    max_experts: int = 512,
    max_k: int = 16,
) -> tuple[MoEParamSpec, float, float]:
    """Grid search for a spec hitting the target total/activated counts.

    Returns (best spec, relative total error, relative activated error),
    minimizing the worse of the two relative errors. Total depends only on
    (S, P_e, E) and activated only on (S, P_e, k), so E and k are optimized
    independently per grid point.
    """
    experts = np.arange(2, max_experts + 1)
    ks = np.arange(1, max_k + 1)
    best = None
    for shared in shared_grid:
        for per_expert in per_expert_grid:
            total_err = np.abs(shared + experts * per_expert - target_total) / target_total
            act_err = np.abs(shared + ks * per_expert - target_activated) / target_activated
            ei = int(np.argmin(total_err))
            # k must stay below E for a sparse config
            k_limit = min(max_k, int(experts[ei]) - 1)
            ki = int(np.argmin(act_err[:k_limit]))
            score = max(float(total_err[ei]), float(act_err[ki]))
            if best is None or score < best[0]:
                best = (
                    score,
                    MoEParamSpec(
                        shared_params=float(shared),
                        per_expert_params=float(per_expert),
                        num_experts=int(experts[ei]),
                        top_k=int(ks[ki]),
                    ),
                    float(total_err[ei]),
                    float(act_err[ki]),
                )
    assert best is not None
    return best[1], best[2], best[3]


ROUTE_CSV_FIELDS = ["step", "expert", "f", "pbar", "bias", "cov", "aux_loss"]


def load_report_rows(reports: Sequence[LoadReport]) -> list[dict]:
    """Flatten a report series to per-(step, expert) CSV rows."""
    rows = []
    for rep in reports:
        for e in range(rep.load_fractions.shape[0]):
            rows.append(
                {
                    "step": rep.step,
                    "expert": e,
                    "f": float(rep.load_fractions[e]),
                    "pbar": float(rep.mean_router_prob[e]),
                    "bias": float(rep.bias[e]),
                    "cov": rep.cov,
                    "aux_loss": rep.aux,
                }
            )
    return rows
