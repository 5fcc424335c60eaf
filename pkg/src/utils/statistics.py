"""
Trial statistics for Monte Carlo sweeps
Mean and standard error of per-trial fidelities
"""

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.stats import sem


@dataclass(frozen=True)
class TrialSummary:
    """Mean and standard error of the successful trials of one sweep point"""
    count: int
    mean: Optional[float]
    stderr: float

    @property
    def empty(self) -> bool:
        return self.count == 0


def summarize_trials(values: Iterable[float]) -> TrialSummary:
    """
    Summarize trial outcomes

    Args:
        values: Per-trial fidelities

    Returns:
        TrialSummary; the mean is None without samples and the standard
        error (ddof=1) is 0 below two samples
    """
    samples = np.asarray(list(values), dtype=float)
    if samples.size == 0:
        return TrialSummary(count=0, mean=None, stderr=0.0)
    if samples.size == 1:
        return TrialSummary(count=1, mean=float(samples[0]), stderr=0.0)
    return TrialSummary(count=int(samples.size), mean=float(np.mean(samples)),
                        stderr=float(sem(samples, ddof=1)))
