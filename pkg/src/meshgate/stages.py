"""Maturity stages and the enforcement policy each one implies.

Hub/spoke shares are descriptive constants shown in reports; they weight
nothing. The gate schedule is one concrete reading of the staged operating
model and lives in ``GATE_SCHEDULE`` so it can be edited in one place.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Stage(str, Enum):
    FOUNDATION = "foundation"
    ENABLEMENT = "enablement"
    DELEGATION = "delegation"
    FEDERATED_OPTIMIZATION = "federated_optimization"


STAGE_ORDER = (Stage.FOUNDATION, Stage.ENABLEMENT, Stage.DELEGATION, Stage.FEDERATED_OPTIMIZATION)

SHARES: dict[Stage, tuple[float, float]] = {
    Stage.FOUNDATION: (0.80, 0.20),
    Stage.ENABLEMENT: (0.60, 0.40),
    Stage.DELEGATION: (0.40, 0.60),
    Stage.FEDERATED_OPTIMIZATION: (0.25, 0.75),
}


@dataclass(frozen=True)
class MaturityStage:
    stage: Stage
    hub_share: float
    spoke_share: float


def maturity(stage: Stage | str) -> MaturityStage:
    stage = Stage(stage)
    hub, spoke = SHARES[stage]
    return MaturityStage(stage, hub, spoke)


class Gate(str, Enum):
    CONTRACT_APPROVAL = "contract_approval"
    QUALITY_THRESHOLDS = "quality_thresholds"
    RELEASE_CADENCE = "release_cadence"
    SCHEMA_DIFF_BLOCKING = "schema_diff_blocking"
    PII_ROUTING = "pii_routing"


class Level(str, Enum):
    HUB_MANDATORY = "hub_mandatory"
    SPOKE_CONFIGURABLE = "spoke_configurable"
    ADVISORY = "advisory"


# Strength of hub enforcement; later stages may only weaken a gate.
LEVEL_STRENGTH = {Level.HUB_MANDATORY: 2, Level.SPOKE_CONFIGURABLE: 1, Level.ADVISORY: 0}

_H, _S, _A = Level.HUB_MANDATORY, Level.SPOKE_CONFIGURABLE, Level.ADVISORY
GATE_SCHEDULE: dict[Stage, dict[Gate, Level]] = {
    Stage.FOUNDATION: {g: _H for g in Gate},
    Stage.ENABLEMENT: {**{g: _H for g in Gate}, Gate.RELEASE_CADENCE: _S},
    Stage.DELEGATION: {
        **{g: _H for g in Gate},
        Gate.QUALITY_THRESHOLDS: _S,
        Gate.RELEASE_CADENCE: _S,
    },
    Stage.FEDERATED_OPTIMIZATION: {
        Gate.CONTRACT_APPROVAL: _H,
        Gate.QUALITY_THRESHOLDS: _S,
        Gate.RELEASE_CADENCE: _S,
        Gate.SCHEMA_DIFF_BLOCKING: _A,
        Gate.PII_ROUTING: _H,
    },
}


@dataclass(frozen=True)
class PolicyProfile:
    stage: Stage
    levels: tuple[tuple[Gate, Level], ...]

    def level(self, gate: Gate | str) -> Level:
        return dict(self.levels)[Gate(gate)]


def stage_profile(stage: Stage | str) -> PolicyProfile:
    stage = Stage(stage)
    schedule = GATE_SCHEDULE[stage]
    return PolicyProfile(stage, tuple((g, schedule[g]) for g in Gate))


class Enforcement(str, Enum):
    BLOCK_ON_FAIL = "block_on_fail"
    WARN_ON_FAIL = "warn_on_fail"


def gate_decision(stage: Stage | str, gate: Gate | str, local_override_present: bool) -> Enforcement:
    """Hub-mandatory gates always block; spoke-configurable ones yield to a local override."""
    level = stage_profile(stage).level(gate)
    if level is Level.HUB_MANDATORY:
        return Enforcement.BLOCK_ON_FAIL
    if level is Level.SPOKE_CONFIGURABLE:
        return Enforcement.WARN_ON_FAIL if local_override_present else Enforcement.BLOCK_ON_FAIL
    return Enforcement.WARN_ON_FAIL


def render_profile(stage: Stage | str) -> str:
    m = maturity(stage)
    lines = [f"stage\t{m.stage.value}", f"hub_share\t{m.hub_share:.2f}", f"spoke_share\t{m.spoke_share:.2f}"]
    lines += [f"{g.value}\t{lvl.value}" for g, lvl in stage_profile(stage).levels]
    return "\n".join(lines) + "\n"
