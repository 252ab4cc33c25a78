"""Evidence aggregation across agents by wealth splitting.

Several agents test the same hypotheses, each reporting its own e-value.
The pool keeps one aggregated e-value per hypothesis: when an agent arrives
it is handed the aggregate achieved so far as starting capital (the
"snapshot"), and the aggregate at any later round is the average of
snapshot-scaled per-agent e-values over the agents active for that
hypothesis.  Between-round independence lets each agent multiply; the
cross-agent average guards against arbitrary dependence between agents
(including all agents watching the same reward stream).

Aggregates are held in linear domain so the averaging arithmetic is exact;
an overflow to inf can only happen long after the hypothesis crossed its
rejection threshold and froze, so it never affects a decision.

The pool is a single-owner state machine: reports for a round are collected
and applied in one deterministic batch sorted by (hypothesis, agent).
Aggregates freeze once a hypothesis enters the rejection set.  There is no
notion of agent departure; an idle agent keeps reporting its last e-value.
"""

from __future__ import annotations

from typing import Dict, Iterable, Tuple

import numpy as np

from . import mt

__all__ = ["AgentPool"]


class AgentPool:
    def __init__(self, n_hypotheses: int, delta: float):
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        self.k = n_hypotheses
        self.delta = delta
        self.aggregate_e = np.ones(n_hypotheses)
        # (hypothesis, agent) -> [arrival round, snapshot, last reported e]
        self.agents: Dict[Tuple[int, int], list] = {}
        self.rejected: set = set()
        self.rejection_round: Dict[int, int] = {}
        self.round = 0

    def register_arrival(self, hypothesis: int, agent, t: int) -> None:
        """Record that ``agent`` starts contributing to ``hypothesis`` at round t.

        Must be called before the round-t aggregation step; the snapshot is
        the aggregate at round t-1 and is immutable afterwards.
        """
        key = (hypothesis, agent)
        if key in self.agents:
            raise ValueError(f"agent {agent} already registered for hypothesis {hypothesis}")
        if t <= self.round:
            raise ValueError("arrivals must be registered before their first round is applied")
        self.agents[key] = [t, float(self.aggregate_e[hypothesis]), 1.0]

    def aggregate_step(self, t: int, reports: Dict[Tuple[int, int], float]) -> mt.RejectionSet:
        """Apply one round of per-agent e-values and rerun the step-up rule.

        ``reports`` maps (hypothesis, agent) to the agent's current e-value.
        Reporting without a registered arrival is an error.  Agents that do
        not report carry their previous value forward.
        """
        if t <= self.round:
            raise ValueError("rounds must be applied in increasing order")
        for (h, agent), e in sorted(reports.items(), key=lambda kv: kv[0]):
            key = (h, agent)
            if key not in self.agents:
                raise ValueError(
                    f"agent {agent} reported for hypothesis {h} without a registered arrival"
                )
            if self.agents[key][0] > t:
                raise ValueError("agent reported before its registered arrival round")
            if e < 0.0:
                raise ValueError("e-values must be nonnegative")
            self.agents[key][2] = float(e)
        for h in range(self.k):
            if h in self.rejected:
                continue  # frozen
            terms = [
                snap * e
                for (hh, _), (arrival, snap, e) in sorted(self.agents.items())
                if hh == h and arrival <= t
            ]
            if terms:
                self.aggregate_e[h] = sum(terms) / len(terms)
        self.round = t
        rset = mt.ebh(self.aggregate_e, self.delta)
        for h in rset.ids:
            if h not in self.rejected:
                self.rejected.add(h)
                self.rejection_round[h] = t
        return rset

    def aggregate(self, hypothesis: int) -> float:
        return float(self.aggregate_e[hypothesis])

    def active_agents(self, hypothesis: int, t: int) -> Iterable:
        return sorted(
            agent
            for (h, agent), (arrival, _, _) in self.agents.items()
            if h == hypothesis and arrival <= t
        )
