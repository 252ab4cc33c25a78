"""Experiment configuration: strict parsing, canonical hashing, builders.

Configs are plain JSON mirroring :class:`ExperimentConfig` field for field.
Unknown keys are errors.  The canonical hash (sha256 over the sorted-key JSON
serialization, output directory excluded) is embedded in every emitted CSV
row so any trial can be replayed from (config hash, seed).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

from .. import engine, mt
from ..evidence import LambdaStrategy
from ..exploration import PolicyKind, PolicySpec

__all__ = [
    "MethodSpec",
    "EnvironmentSpec",
    "StoppingSpec",
    "ExperimentConfig",
    "load_config",
]

SCHEMA_VERSION = 1

_POLICIES = {
    "uniform": PolicyKind.UNIFORM,
    "ucb": PolicyKind.UCB,
    "best-evidence": PolicyKind.BEST_EVIDENCE,
    "bai": PolicyKind.BAI,
}

_ADAPTIVITY = {
    "adaptive": mt.Adaptivity.ADAPTIVE,
    "non-adaptive": mt.Adaptivity.NON_ADAPTIVE,
}

_DEPENDENCE = {
    "independent": mt.Dependence.INDEPENDENT,
    "arbitrary": mt.Dependence.ARBITRARY,
}

_COUPLING = {
    "independent": engine.RewardCoupling.INDEPENDENT,
    "shared-noise": engine.RewardCoupling.SHARED_NOISE,
}


def _strict_kwargs(cls, data: dict, where: str) -> dict:
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return data


@dataclass(frozen=True)
class MethodSpec:
    """One method row: policy + evidence + testing procedure.

    ``evidence`` strings: "dm", "pm-decaying", "pm-half-mean",
    "pm-fixed:<lambda>", "inverse-pm", "p-conservative", "p-tight",
    "p-stitched".  BH methods must declare the adaptivity/dependence cell used
    to correct the level; ``single_sample`` keeps one uniformly chosen sample
    per superarm pull and discards the rest.
    """

    name: str
    policy: str
    evidence: str
    mt: str  # "bh" | "ebh"
    adaptivity: Optional[str] = None
    dependence: Optional[str] = None
    single_sample: bool = False

    def __post_init__(self):
        if self.policy not in _POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.mt not in ("bh", "ebh"):
            raise ValueError(f"unknown mt procedure {self.mt!r}")
        spec = self.evidence_spec()
        if self.mt == "bh" and spec.mode is not mt.Mode.P:
            raise ValueError(f"method {self.name!r}: bh needs p-process evidence")
        if self.mt == "ebh" and spec.mode is not mt.Mode.E:
            raise ValueError(f"method {self.name!r}: ebh needs e-process evidence")
        if self.mt == "bh" and (self.adaptivity is None or self.dependence is None):
            raise ValueError(
                f"method {self.name!r}: bh requires adaptivity and dependence"
            )
        if self.adaptivity is not None and self.adaptivity not in _ADAPTIVITY:
            raise ValueError(f"unknown adaptivity {self.adaptivity!r}")
        if self.dependence is not None and self.dependence not in _DEPENDENCE:
            raise ValueError(f"unknown dependence {self.dependence!r}")

    def evidence_spec(self, delta: float = 0.05) -> engine.EvidenceSpec:
        kind = self.evidence
        if kind == "dm":
            return engine.EvidenceSpec(engine.EvidenceKind.DISCRETE_MIXTURE)
        if kind == "pm-decaying":
            return engine.EvidenceSpec(
                engine.EvidenceKind.PREDICTABLE_MIX, LambdaStrategy.decaying(delta)
            )
        if kind == "pm-half-mean":
            return engine.EvidenceSpec(
                engine.EvidenceKind.PREDICTABLE_MIX, LambdaStrategy.half_mean()
            )
        if kind.startswith("pm-fixed:"):
            lam = float(kind.split(":", 1)[1])
            return engine.EvidenceSpec(
                engine.EvidenceKind.PREDICTABLE_MIX, LambdaStrategy.fixed(lam)
            )
        if kind == "inverse-pm":
            return engine.EvidenceSpec(
                engine.EvidenceKind.INVERSE_PM, LambdaStrategy.decaying(delta)
            )
        if kind == "p-conservative":
            return engine.EvidenceSpec(engine.EvidenceKind.P_CONSERVATIVE)
        if kind == "p-tight":
            return engine.EvidenceSpec(engine.EvidenceKind.P_TIGHT)
        if kind == "p-stitched":
            return engine.EvidenceSpec(engine.EvidenceKind.P_STITCHED)
        raise ValueError(f"unknown evidence kind {kind!r}")

    def policy_spec(self, delta: float) -> PolicySpec:
        return PolicySpec(_POLICIES[self.policy], delta=delta)

    def mt_config(self, delta: float) -> engine.MtConfig:
        adaptivity = _ADAPTIVITY.get(self.adaptivity or "adaptive")
        dependence = _DEPENDENCE.get(self.dependence or "arbitrary")
        setting = mt.DependenceSetting(adaptivity, dependence, mt.OutputKind.STEP_UP)
        return engine.MtConfig(delta=delta, setting=setting)


@dataclass(frozen=True)
class EnvironmentSpec:
    """Arm layout and ground truth.

    ``h1_rule``: "const:<m>", "floor-log-k" or "floor-sqrt-k"; the first
    ``m`` arms are the non-nulls, with mean ``mu1``.
    """

    kind: str  # "standard" | "clique" | "drifting"
    k: int
    h1_rule: str = "const:0"
    mu1: float = 0.5
    mu0: float = 0.0
    coupling: str = "independent"
    n_cliques: int = 10

    def __post_init__(self):
        if self.kind not in ("standard", "clique", "drifting"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.coupling not in _COUPLING:
            raise ValueError(f"unknown coupling {self.coupling!r}")
        self.h1_size()  # validate the rule string

    def h1_size(self) -> int:
        rule = self.h1_rule
        if rule.startswith("const:"):
            m = int(rule.split(":", 1)[1])
        elif rule == "floor-log-k":
            m = int(math.floor(math.log(self.k)))
        elif rule == "floor-sqrt-k":
            m = int(math.floor(math.sqrt(self.k)))
        else:
            raise ValueError(f"unknown h1 rule {rule!r}")
        if not 0 <= m <= self.k:
            raise ValueError("h1 size outside [0, k]")
        return m

    def build(self):
        m = self.h1_size()
        means = tuple(self.mu1 if i < m else self.mu0 for i in range(self.k))
        coupling = _COUPLING[self.coupling]
        if self.kind == "standard":
            env = engine.standard_gaussian(means, coupling)
        elif self.kind == "clique":
            env = engine.clique_graph(means, self.n_cliques, coupling)
        else:
            if m != 0:
                raise ValueError("the drifting environment has no non-null arms")
            env = engine.drifting_null(self.k)
        hyps = engine.HypothesisConfig.identity(self.k, self.mu0, tuple(range(m)))
        return env, hyps


@dataclass(frozen=True)
class StoppingSpec:
    kind: str  # "fixed-horizon" | "all-nonnulls-oracle" | "rejection-count"
    t_max: int
    m: int = 0

    def build(self) -> engine.StoppingRule:
        if self.kind == "fixed-horizon":
            return engine.StoppingRule.fixed_horizon(self.t_max)
        if self.kind == "all-nonnulls-oracle":
            return engine.StoppingRule.all_nonnulls_oracle(self.t_max)
        if self.kind == "rejection-count":
            return engine.StoppingRule.rejection_count(self.m, self.t_max)
        raise ValueError(f"unknown stopping kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    delta: float
    replications: int
    base_seed: int
    environment: EnvironmentSpec
    stopping: StoppingSpec
    methods: tuple
    baseline_method: str
    snapshot_stride: int = 0
    out_dir: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("method names must be unique")
        if self.baseline_method not in names:
            raise ValueError("baseline_method must name one of the methods")
        self.stopping.build()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [asdict(m) for m in self.methods]
        return d

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir", None)  # IO location never changes the experiment
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        _strict_kwargs(cls, data, "experiment config")
        env = EnvironmentSpec(
            **_strict_kwargs(EnvironmentSpec, dict(data.pop("environment")), "environment")
        )
        stopping = StoppingSpec(
            **_strict_kwargs(StoppingSpec, dict(data.pop("stopping")), "stopping")
        )
        methods = tuple(
            MethodSpec(**_strict_kwargs(MethodSpec, dict(m), f"method #{i}"))
            for i, m in enumerate(data.pop("methods"))
        )
        return cls(environment=env, stopping=stopping, methods=methods, **data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))
