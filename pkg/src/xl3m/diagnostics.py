"""Entropy/loss correlation diagnostic.

Walks a token stream position by position, collecting the predictive entropy
at each prefix alongside the realized next-token negative log-likelihood.
A strong positive correlation between the two is the premise behind using
low entropy as a relevance signal: confident predictions are accurate ones.
For a stream sampled from the scoring model itself, the expected loss at a
position equals that position's entropy, so the correlation is a built-in
calibration check.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .backends import ModelBackend
from .scoring import entropy
from .tokens import TokenSeq


@dataclass(frozen=True)
class CorrelationBin:
    lo: float
    hi: float
    mean_loss: float
    count: int
    stderr: float


@dataclass(frozen=True)
class CorrelationReport:
    pearson: float
    spearman: float
    n_positions: int
    degenerate: bool  # true when entropy or loss has (near-)zero variance
    bins: tuple[CorrelationBin, ...]

    def summary(self) -> str:
        return (
            f"pearson={self.pearson:.6f} spearman={self.spearman:.6f} "
            f"n={self.n_positions} degenerate={self.degenerate}"
        )

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("entropy_bin_lo,entropy_bin_hi,mean_loss,count,stderr\n")
        for b in self.bins:
            out.write(f"{b.lo},{b.hi},{b.mean_loss},{b.count},{b.stderr}\n")
        out.write(f"# {self.summary()}\n")
        return out.getvalue()


def entropy_loss_correlation(
    backend: ModelBackend,
    eval_tokens: TokenSeq,
    stride: int = 1,
    n_bins: int = 10,
) -> CorrelationReport:
    """Pearson/Spearman between predictive entropy and realized loss.

    Positions t = 0, stride, 2*stride, ... pair the entropy of the
    distribution after prefix tokens[:t+1] (clipped to the model window) with
    -ln p(tokens[t+1]). Bin rows give equal-width entropy bins with the mean
    loss per bin for plotting.
    """
    tokens = np.asarray(eval_tokens)
    if tokens.size < 2:
        raise ValueError("need at least 2 tokens to form one (entropy, loss) pair")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    window = backend.info().context_window

    entropies, losses = [], []
    for t in range(0, tokens.size - 1, stride):
        prefix = tokens[max(0, t + 1 - window) : t + 1]
        dist = backend.score(prefix)
        entropies.append(entropy(dist))
        losses.append(-float(dist.logprobs[tokens[t + 1]]))
    h = np.asarray(entropies)
    loss = np.asarray(losses)

    degenerate = bool(np.ptp(h) < 1e-12 or np.ptp(loss) < 1e-12)
    if degenerate:
        pearson = spearman = float("nan")
    else:
        pearson = float(stats.pearsonr(h, loss).statistic)
        spearman = float(stats.spearmanr(h, loss).statistic)

    bins: list[CorrelationBin] = []
    lo, hi = float(h.min()), float(h.max())
    edges = np.linspace(lo, hi, n_bins + 1) if hi > lo else np.array([lo, lo])
    for i in range(len(edges) - 1):
        mask = (
            (h >= edges[i]) & (h <= edges[i + 1])
            if i == len(edges) - 2
            else (h >= edges[i]) & (h < edges[i + 1])
        )
        count = int(mask.sum())
        if count == 0:
            continue
        vals = loss[mask]
        stderr = float(vals.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
        bins.append(
            CorrelationBin(
                lo=float(edges[i]),
                hi=float(edges[i + 1]),
                mean_loss=float(vals.mean()),
                count=count,
                stderr=stderr,
            )
        )
    return CorrelationReport(
        pearson=pearson,
        spearman=spearman,
        n_positions=int(h.size),
        degenerate=degenerate,
        bins=tuple(bins),
    )
