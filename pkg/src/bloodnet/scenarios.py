"""Scenario families and synthetic instance generation.

Uncertainty enters through three independent families: supply volumes
at donor regions, demand volumes at hospitals, and fractional
disruption losses at bloodmobiles, centers, and banks.  A full model
expands over scenario *triples*; by default the triple set is the
cartesian product of the families with product probabilities, while
``coupling="paired"`` runs supply and demand in lockstep (outcome i of
each occurs together), which collapses two perfectly correlated
families into one joint column per outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .blood import N_TYPES
from .instance import Instance, Violation


def _freeze_int(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _freeze_f(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SupplyScenario:
    probability: float
    supply: np.ndarray  # (8, nD, nT) units donatable per type/region/period

    def __post_init__(self):
        object.__setattr__(self, "supply", _freeze_int(self.supply))


@dataclass(frozen=True)
class DemandScenario:
    probability: float
    demand: np.ndarray  # (8, nH, nT) units demanded per type/hospital/period

    def __post_init__(self):
        object.__setattr__(self, "demand", _freeze_int(self.demand))


@dataclass(frozen=True)
class DisruptionScenario:
    """Fractional capacity loss per facility, each in [0, 1]."""

    probability: float
    mobile_loss: np.ndarray  # (nM,)
    center_loss: np.ndarray  # (nC,)
    bank_loss: np.ndarray  # (nB,)

    def __post_init__(self):
        for name in ("mobile_loss", "center_loss", "bank_loss"):
            object.__setattr__(self, name, _freeze_f(getattr(self, name)))


@dataclass(frozen=True)
class ScenarioTriple:
    supply_idx: int
    demand_idx: int
    disruption_idx: int
    probability: float


COUPLING_INDEPENDENT = "independent"
COUPLING_PAIRED = "paired"


@dataclass(frozen=True)
class ScenarioSet:
    supply: tuple[SupplyScenario, ...]
    demand: tuple[DemandScenario, ...]
    disruption: tuple[DisruptionScenario, ...]
    coupling: str = COUPLING_INDEPENDENT

    def __post_init__(self):
        object.__setattr__(self, "supply", tuple(self.supply))
        object.__setattr__(self, "demand", tuple(self.demand))
        object.__setattr__(self, "disruption", tuple(self.disruption))

    def validate(self, instance: Instance | None = None) -> list[Violation]:
        v: list[Violation] = []
        if self.coupling not in (COUPLING_INDEPENDENT, COUPLING_PAIRED):
            v.append(Violation("scenarios.coupling", f"unknown coupling {self.coupling!r}"))
        for fam, name in ((self.supply, "supply"), (self.demand, "demand"), (self.disruption, "disruption")):
            if not fam:
                v.append(Violation(f"scenarios.{name}", "scenario family must be nonempty"))
                continue
            total = sum(s.probability for s in fam)
            if abs(total - 1.0) > 1e-9:
                v.append(Violation(f"scenarios.{name}", f"probabilities sum to {total:.12g}, expected 1"))
            for i, s in enumerate(fam):
                if not 0.0 <= s.probability <= 1.0:
                    v.append(Violation(f"scenarios.{name}[{i}].probability", "must lie in [0, 1]"))
        if self.coupling == COUPLING_PAIRED:
            if len(self.supply) != len(self.demand):
                v.append(Violation(
                    "scenarios.coupling",
                    "paired coupling needs equally sized supply and demand families",
                ))
            else:
                for i, (s, d) in enumerate(zip(self.supply, self.demand)):
                    if abs(s.probability - d.probability) > 1e-9:
                        v.append(Violation(
                            f"scenarios.demand[{i}].probability",
                            "paired coupling needs matching supply/demand probabilities",
                        ))
        for i, s in enumerate(self.supply):
            if s.supply.size and s.supply.min() < 0:
                v.append(Violation(f"scenarios.supply[{i}]", "supply units must be >= 0"))
        for i, d in enumerate(self.demand):
            if d.demand.size and d.demand.min() < 0:
                v.append(Violation(f"scenarios.demand[{i}]", "demand units must be >= 0"))
        for i, r in enumerate(self.disruption):
            for name in ("mobile_loss", "center_loss", "bank_loss"):
                a = getattr(r, name)
                if a.size and (a.min() < 0 or a.max() > 1):
                    v.append(Violation(f"scenarios.disruption[{i}].{name}", "loss fractions must lie in [0, 1]"))
        if instance is not None:
            nD, nH = instance.n_donors, instance.n_hospitals
            nM, nC, nB, nT = instance.n_mobiles, instance.n_centers, instance.n_banks, instance.n_periods
            for i, s in enumerate(self.supply):
                if s.supply.shape != (N_TYPES, nD, nT):
                    v.append(Violation(f"scenarios.supply[{i}]",
                                       f"expected shape {(N_TYPES, nD, nT)}, got {s.supply.shape}"))
            for i, d in enumerate(self.demand):
                if d.demand.shape != (N_TYPES, nH, nT):
                    v.append(Violation(f"scenarios.demand[{i}]",
                                       f"expected shape {(N_TYPES, nH, nT)}, got {d.demand.shape}"))
            for i, r in enumerate(self.disruption):
                for name, n in (("mobile_loss", nM), ("center_loss", nC), ("bank_loss", nB)):
                    if getattr(r, name).shape != (n,):
                        v.append(Violation(f"scenarios.disruption[{i}].{name}",
                                           f"expected shape {(n,)}, got {getattr(r, name).shape}"))
        return v


def enumerate_triples(scenario_set: ScenarioSet) -> list[ScenarioTriple]:
    """Joint scenario outcomes in lexicographic (supply, demand, disruption) order.

    Independent coupling yields the full index cube with product
    probabilities; paired coupling yields the (i, i, r) diagonal pairs
    weighted by the shared supply/demand probability.
    """
    ss, sd, sr = scenario_set.supply, scenario_set.demand, scenario_set.disruption
    for fam, name in ((ss, "supply"), (sd, "demand"), (sr, "disruption")):
        if not fam:
            raise ValueError(f"scenario family must be nonempty: {name}")
    triples: list[ScenarioTriple] = []
    if scenario_set.coupling == COUPLING_PAIRED:
        if len(ss) != len(sd):
            raise ValueError("paired coupling needs equally sized supply and demand families")
        for i in range(len(ss)):
            for r in range(len(sr)):
                triples.append(ScenarioTriple(i, i, r, ss[i].probability * sr[r].probability))
    else:
        for i in range(len(ss)):
            for j in range(len(sd)):
                for r in range(len(sr)):
                    triples.append(ScenarioTriple(
                        i, j, r, ss[i].probability * sd[j].probability * sr[r].probability))
    return triples


# Share of each blood type in the population, order O-,O+,A-,A+,B-,B+,AB-,AB+.
TYPE_MIX = np.array([0.066, 0.374, 0.063, 0.357, 0.015, 0.085, 0.006, 0.034])


def _split_by_type(total: int, rng: np.random.Generator) -> np.ndarray:
    """Integer split of ``total`` units across the 8 types near TYPE_MIX.

    Largest-remainder rounding keeps the split deterministic and exact;
    rng only jitters the mix slightly so periods differ.
    """
    mix = TYPE_MIX * rng.uniform(0.9, 1.1, size=N_TYPES)
    mix = mix / mix.sum()
    raw = mix * total
    base = np.floor(raw).astype(np.int64)
    rem = total - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rem]] += 1
    return base


@dataclass(frozen=True)
class ScenarioDistribution:
    """Bounds and dimensions for random scenario sampling.

    Supply/demand entries are drawn uniformly over the inclusive
    integer ranges; disruption losses uniformly over the float ranges.
    """

    n_donors: int
    n_mobiles: int
    n_centers: int
    n_banks: int
    n_hospitals: int
    n_periods: int
    supply_range: tuple[int, int] = (0, 30)
    demand_range: tuple[int, int] = (0, 30)
    mobile_loss_range: tuple[float, float] = (0.0, 0.0)
    center_loss_range: tuple[float, float] = (0.0, 0.0)
    bank_loss_range: tuple[float, float] = (0.0, 0.0)

    def check(self) -> None:
        for name in ("supply_range", "demand_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name}: need 0 <= lo <= hi, got ({lo}, {hi})")
        for name in ("mobile_loss_range", "center_loss_range", "bank_loss_range"):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name}: need 0 <= lo <= hi <= 1, got ({lo}, {hi})")


def sample_scenarios(dist: ScenarioDistribution, count: int, seed: int) -> ScenarioSet:
    """``count`` equiprobable scenarios per family, reproducible by seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    dist.check()
    rng = np.random.default_rng(seed)
    p = 1.0 / count
    slo, shi = dist.supply_range
    dlo, dhi = dist.demand_range
    supply = tuple(
        SupplyScenario(p, rng.integers(slo, shi + 1, size=(N_TYPES, dist.n_donors, dist.n_periods)))
        for _ in range(count)
    )
    demand = tuple(
        DemandScenario(p, rng.integers(dlo, dhi + 1, size=(N_TYPES, dist.n_hospitals, dist.n_periods)))
        for _ in range(count)
    )
    disruption = tuple(
        DisruptionScenario(
            p,
            rng.uniform(*dist.mobile_loss_range, size=dist.n_mobiles),
            rng.uniform(*dist.center_loss_range, size=dist.n_centers),
            rng.uniform(*dist.bank_loss_range, size=dist.n_banks),
        )
        for _ in range(count)
    )
    return ScenarioSet(supply, demand, disruption)


# Toy network dimensions: 6 donor regions, 2 bloodmobiles, 1 center,
# 1 bank, 2 hospitals, 5 periods.
TOY_DIMS = dict(n_donors=6, n_mobiles=2, n_centers=1, n_banks=1, n_hospitals=2, n_periods=5)

# Documented generator ranges (all uniform draws):
#   per-hospital per-period total demand: 280..330 units
#   per-period aggregate supply: 90%..97% of that period's total demand
#   operating fees 1.5..4.0, holding fees 0.4..1.2, wastage fees 4..9,
#   transport fees 0.8..2.5, bloodmobile fixed cost 30..60,
#   substitution penalty scale 3..7
#   capacities: arc 900..1000, center/bank 950..1050, hospital 420..480
TOY_DEMAND_RANGE = (280, 330)
TOY_SUPPLY_FRACTION = (0.90, 0.97)


def generate_toy(seed: int, independent: bool = False) -> tuple[Instance, ScenarioSet]:
    """Synthetic two-outcome planning instance on the toy network.

    Default: two equiprobable joint outcomes (supply and demand move
    together, no disruption).  ``independent=True`` switches to three
    independent two-scenario families (a 2x2x2 cube) where the second
    disruption scenario degrades every facility.
    """
    rng = np.random.default_rng(seed)
    nD, nM, nC, nB, nH, nT = (TOY_DIMS[k] for k in (
        "n_donors", "n_mobiles", "n_centers", "n_banks", "n_hospitals", "n_periods"))

    inst = Instance(
        donor_regions=tuple(f"d{i + 1}" for i in range(nD)),
        mobile_sites=tuple(f"m{i + 1}" for i in range(nM)),
        centers=tuple(f"c{i + 1}" for i in range(nC)),
        banks=tuple(f"b{i + 1}" for i in range(nB)),
        hospitals=tuple(f"h{i + 1}" for i in range(nH)),
        n_periods=nT,
        op_mobile=round(rng.uniform(1.5, 3.0), 2),
        op_center=np.round(rng.uniform(1.5, 4.0, nC), 2),
        op_bank=np.round(rng.uniform(1.5, 4.0, nB), 2),
        op_hospital=np.round(rng.uniform(1.5, 4.0, nH), 2),
        hold_center=np.round(rng.uniform(0.4, 1.2, nC), 2),
        hold_bank=np.round(rng.uniform(0.4, 1.2, nB), 2),
        hold_hospital=np.round(rng.uniform(0.4, 1.2, nH), 2),
        waste_center=np.round(rng.uniform(4.0, 9.0, (N_TYPES, nC)), 2),
        waste_bank=np.round(rng.uniform(4.0, 9.0, (N_TYPES, nB)), 2),
        waste_hospital=np.round(rng.uniform(4.0, 9.0, (N_TYPES, nH)), 2),
        transport_mobile_center=np.round(rng.uniform(0.8, 2.5, (nM, nC)), 2),
        transport_center_bank=np.round(rng.uniform(0.8, 2.5, (nC, nB)), 2),
        transport_bank_hospital=np.round(rng.uniform(0.8, 2.5, (nB, nH)), 2),
        mobile_fixed_cost=float(rng.integers(30, 61)),
        substitution_penalty=Instance.rank_scaled_penalty(round(rng.uniform(3.0, 7.0), 2)),
        transport_cap=float(900 + rng.integers(0, 101)),
        center_cap=np.array([950.0 + rng.integers(0, 101)] * nC),
        bank_cap=np.array([950.0 + rng.integers(0, 101)] * nB),
        hospital_cap=np.array([420.0 + rng.integers(0, 61)] * nH),
        fleet_size=nM,
        shelf_life=42,
    )

    n_outcomes = 2
    demands = []
    supplies = []
    for _ in range(n_outcomes):
        dem = np.zeros((N_TYPES, nH, nT), dtype=np.int64)
        for h in range(nH):
            for t in range(nT):
                total = int(rng.integers(TOY_DEMAND_RANGE[0], TOY_DEMAND_RANGE[1] + 1))
                dem[:, h, t] = _split_by_type(total, rng)
        sup = np.zeros((N_TYPES, nD, nT), dtype=np.int64)
        for t in range(nT):
            period_demand = int(dem[:, :, t].sum())
            target = int(round(period_demand * rng.uniform(*TOY_SUPPLY_FRACTION)))
            weights = rng.uniform(0.6, 1.4, nD)
            weights /= weights.sum()
            per_region = np.floor(weights * target).astype(np.int64)
            rem = target - int(per_region.sum())
            order = np.argsort(-(weights * target - per_region), kind="stable")
            per_region[order[:rem]] += 1
            for d in range(nD):
                sup[:, d, t] = _split_by_type(int(per_region[d]), rng)
        demands.append(dem)
        supplies.append(sup)

    if independent:
        disruption = (
            DisruptionScenario(0.6, np.zeros(nM), np.zeros(nC), np.zeros(nB)),
            DisruptionScenario(0.4, np.full(nM, 0.2), np.full(nC, 0.15), np.full(nB, 0.1)),
        )
        coupling = COUPLING_INDEPENDENT
    else:
        disruption = (DisruptionScenario(1.0, np.zeros(nM), np.zeros(nC), np.zeros(nB)),)
        coupling = COUPLING_PAIRED

    scen = ScenarioSet(
        supply=tuple(SupplyScenario(0.5, s) for s in supplies),
        demand=tuple(DemandScenario(0.5, d) for d in demands),
        disruption=disruption,
        coupling=coupling,
    )
    return inst, scen
