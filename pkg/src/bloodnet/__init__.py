"""Planning toolkit for four-echelon red-blood-cell supply networks.

Builds and solves two-stage stochastic mixed-integer programs over
donor regions, bloodmobiles, blood centers, blood banks, and hospitals,
with supply/demand/disruption scenarios, FIFO outdating, crossmatching
substitution, and a cost-versus-service Pareto driver.
"""

from .blood import (
    BLOOD_TYPE_LABELS,
    BloodType,
    CompatibilityMatrix,
    PriorityMatrix,
    compatible,
    priority_rank,
)
from .instance import Instance, InvalidInstanceError, Violation, validate_instance
from .scenarios import (
    DemandScenario,
    DisruptionScenario,
    ScenarioDistribution,
    ScenarioSet,
    ScenarioTriple,
    SupplyScenario,
    enumerate_triples,
    generate_toy,
    sample_scenarios,
)

__version__ = "0.1.0"

__all__ = [
    "BLOOD_TYPE_LABELS",
    "BloodType",
    "CompatibilityMatrix",
    "PriorityMatrix",
    "compatible",
    "priority_rank",
    "Instance",
    "InvalidInstanceError",
    "Violation",
    "validate_instance",
    "SupplyScenario",
    "DemandScenario",
    "DisruptionScenario",
    "ScenarioSet",
    "ScenarioTriple",
    "ScenarioDistribution",
    "enumerate_triples",
    "generate_toy",
    "sample_scenarios",
    "__version__",
]
