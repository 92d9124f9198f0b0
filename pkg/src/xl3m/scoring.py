"""Next-token distribution entropy and bounded-parallel sub-context scoring.

The relevance signal is the Shannon entropy (nats) of the model's next-token
distribution after each sub-context: a confident (low-entropy) prediction
marks the segment as relevant to the trailing question. Entropy is computed
in log space so one-hot and near-underflow distributions are exact, and
backends returning raw logits get a max-shifted path that never overflows.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BackendError, ConfigInvalid, MalformedDistribution, NonFiniteInput
from .pipeline import SubContext

# exp() underflows to zero below this in float64; such terms contribute
# nothing to -sum(p * log p).
_LOG_UNDERFLOW = -745.0

# Tolerance on total probability mass, in log space. Loose enough for
# reduced-precision backends, tight enough to catch protocol bugs
# (e.g. probabilities sent instead of log-probabilities).
NORMALIZATION_TOL = 1e-4


@dataclass(frozen=True)
class Distribution:
    """Full next-token distribution as natural-log probabilities."""

    logprobs: np.ndarray

    @property
    def vocab_size(self) -> int:
        return int(self.logprobs.size)

    def validate(self) -> None:
        """Raise MalformedDistribution unless this is a normalized log-space vector."""
        lp = self.logprobs
        if lp.ndim != 1 or lp.size < 1:
            raise MalformedDistribution("logprobs must be a non-empty 1-D vector")
        if np.isnan(lp).any() or np.isposinf(lp).any():
            raise MalformedDistribution("logprobs contain NaN or +inf")
        if lp.max() > NORMALIZATION_TOL:
            raise MalformedDistribution(
                f"log-probability {lp.max():.6g} > {NORMALIZATION_TOL}; "
                "entries must be <= 0 (were probabilities sent instead?)"
            )
        m = lp.max()
        if np.isneginf(m):
            raise MalformedDistribution("all probabilities are zero")
        lse = m + np.log(np.exp(lp - m).sum())
        if abs(lse) > NORMALIZATION_TOL:
            raise MalformedDistribution(
                f"probability mass exp({lse:.6g}) deviates from 1 beyond tolerance"
            )


@dataclass(frozen=True)
class SegmentScore:
    segment_index: int
    entropy: float


@dataclass(frozen=True)
class SchedulerConfig:
    """Fan-out limits for parallel scoring.

    max_parallel bounds simultaneous backend calls; token_budget, when set,
    additionally bounds the total token count in flight across those calls.
    """

    max_parallel: int = 4
    token_budget: int | None = None

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ConfigInvalid(f"max_parallel must be >= 1, got {self.max_parallel}")
        if self.token_budget is not None and self.token_budget < 1:
            raise ConfigInvalid(f"token_budget must be positive, got {self.token_budget}")


def entropy(d: Distribution) -> float:
    """Shannon entropy in nats: -sum_j p_j ln p_j over the full vocabulary.

    Computed as -sum exp(lp_j) * lp_j; terms too small for exp() to represent
    contribute zero. Result is clamped to [0, inf) against rounding.
    """
    d.validate()
    lp = d.logprobs
    mask = lp >= _LOG_UNDERFLOW
    h = -float(np.exp(lp[mask]) @ lp[mask])
    return max(h, 0.0)


def entropy_from_logits(logits: np.ndarray) -> float:
    """Entropy of softmax(logits), max-shifted so any finite logits are safe.

    With M = max logit and Z = sum exp(l_j - M):
        H = ln Z - sum_j (exp(l_j - M) / Z) * (l_j - M)
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise NonFiniteInput("logits must be a non-empty 1-D vector")
    if not np.isfinite(x).all():
        raise NonFiniteInput("logits contain NaN or infinity")
    shifted = x - x.max()
    weights = np.exp(shifted)
    z = weights.sum()
    h = float(np.log(z) - (weights @ shifted) / z)
    return max(h, 0.0)


def score_subcontexts(
    backend,
    subs: list[SubContext],
    sched: SchedulerConfig | None = None,
) -> list[SegmentScore]:
    """Entropy-score every sub-context, fanning out to the backend.

    At most ``sched.max_parallel`` calls are in flight at once; when
    ``sched.token_budget`` is set, the summed lengths of in-flight requests
    stay within it. Output is ordered by segment index regardless of
    completion order. Any failure aborts the whole batch: the error for the
    lowest failing segment index is raised as BackendError (cause chained),
    never a partial result.
    """
    sched = sched or SchedulerConfig()
    if not subs:
        return []
    if sched.token_budget is not None:
        longest = max(int(np.asarray(s.tokens).size) for s in subs)
        if sched.token_budget < longest:
            raise ConfigInvalid(
                f"token_budget {sched.token_budget} cannot fit a "
                f"{longest}-token sub-context"
            )

    def score_one(sub: SubContext) -> SegmentScore:
        dist = backend.score(sub.tokens)
        return SegmentScore(segment_index=sub.segment.index, entropy=entropy(dist))

    failures: dict[int, Exception] = {}
    results: list[SegmentScore] = []

    if sched.max_parallel == 1:
        for sub in subs:
            try:
                results.append(score_one(sub))
            except Exception as exc:  # noqa: BLE001 - uniform annotation contract
                failures[sub.segment.index] = exc
    else:
        gate = threading.Condition()
        in_flight_tokens = 0

        def task(sub: SubContext) -> SegmentScore:
            nonlocal in_flight_tokens
            n = int(np.asarray(sub.tokens).size)
            if sched.token_budget is not None:
                with gate:
                    while in_flight_tokens + n > sched.token_budget:
                        gate.wait()
                    in_flight_tokens += n
            try:
                return score_one(sub)
            finally:
                if sched.token_budget is not None:
                    with gate:
                        in_flight_tokens -= n
                        gate.notify_all()

        with ThreadPoolExecutor(max_workers=sched.max_parallel) as pool:
            futures = [(sub.segment.index, pool.submit(task, sub)) for sub in subs]
            for index, fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    failures[index] = exc

    if failures:
        index = min(failures)
        raise BackendError(
            f"scoring failed for segment {index}: {failures[index]}",
            segment_index=index,
        ) from failures[index]
    results.sort(key=lambda s: s.segment_index)
    return results
