"""Monte Carlo scalar with uncertainty, shared by solver and geometry."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate: mean, standard error, and sample count.

    ``stderr`` is the sample standard deviation divided by sqrt(n_samples).
    ``max_steps_hit`` counts truncated walks (0 for geometric estimators);
    accepted solver runs keep ``max_steps_hit / n_samples`` below 1e-6 so
    the truncation bias is negligible.
    """

    mean: float
    stderr: float
    n_samples: int
    max_steps_hit: int = 0

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        """True when ``target`` lies inside mean +/- sigmas * stderr."""
        return abs(self.mean - target) <= sigmas * self.stderr
