"""Deterministic description of a four-echelon blood supply network.

An :class:`Instance` holds the sets (donor regions, bloodmobile sites,
blood centers, blood banks, hospitals, periods), every cost and
capacity parameter, the fleet size and shelf life, and the
crossmatching/priority tables.  Scenario data lives separately in
:mod:`bloodnet.scenarios`.

Periods are reported 1-based at the file/report boundary; internally
all arrays are 0-based.  Blood-type axes always come first and follow
the fixed order of :data:`bloodnet.blood.BLOOD_TYPE_LABELS`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blood import (
    N_TYPES,
    BloodType,
    CompatibilityMatrix,
    PriorityMatrix,
    check_compatibility_tables,
    standard_compatibility,
    standard_priority,
)


@dataclass(frozen=True)
class Violation:
    """A single structural problem found in an instance."""

    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


class InvalidInstanceError(ValueError):
    """Raised when an operation requires a well-formed instance."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations) or "invalid instance")


def _freeze(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    """All deterministic data of one planning problem.

    Per-unit operating fees apply at the facility that handles a unit,
    holding fees to end-of-period inventory, wastage fees to outdated
    units, and transport fees to each unit moved on an arc.  The fixed
    bloodmobile cost is charged once per (donor region, bloodmobile,
    period) deployment.  ``transport_cap`` limits every arc's per-period
    total; facility caps limit both inventories and the corresponding
    assignment-linked arc totals.
    """

    donor_regions: tuple[str, ...]
    mobile_sites: tuple[str, ...]
    centers: tuple[str, ...]
    banks: tuple[str, ...]
    hospitals: tuple[str, ...]
    n_periods: int

    op_mobile: float
    op_center: np.ndarray  # (nC,)
    op_bank: np.ndarray  # (nB,)
    op_hospital: np.ndarray  # (nH,)
    hold_center: np.ndarray
    hold_bank: np.ndarray
    hold_hospital: np.ndarray
    waste_center: np.ndarray  # (8, nC)
    waste_bank: np.ndarray  # (8, nB)
    waste_hospital: np.ndarray  # (8, nH)
    transport_mobile_center: np.ndarray  # (nM, nC)
    transport_center_bank: np.ndarray  # (nC, nB)
    transport_bank_hospital: np.ndarray  # (nB, nH)
    mobile_fixed_cost: float
    substitution_penalty: np.ndarray  # (8, 8), nonzero only off-diagonal compatible pairs

    transport_cap: float
    center_cap: np.ndarray  # (nC,)
    bank_cap: np.ndarray  # (nB,)
    hospital_cap: np.ndarray  # (nH,)

    fleet_size: int
    shelf_life: int

    compatibility: CompatibilityMatrix = field(default_factory=standard_compatibility)
    priority: PriorityMatrix = field(default_factory=standard_priority)

    # Stock on hand before the first period; zero unless overridden.
    initial_center_inventory: np.ndarray | None = None  # (8, nC)
    initial_bank_inventory: np.ndarray | None = None  # (8, nB)
    initial_hospital_inventory: np.ndarray | None = None  # (8, nH)

    def __post_init__(self):
        for name in (
            "op_center", "op_bank", "op_hospital",
            "hold_center", "hold_bank", "hold_hospital",
            "waste_center", "waste_bank", "waste_hospital",
            "transport_mobile_center", "transport_center_bank", "transport_bank_hospital",
            "substitution_penalty", "center_cap", "bank_cap", "hospital_cap",
        ):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        for name, n in (
            ("initial_center_inventory", self.n_centers),
            ("initial_bank_inventory", self.n_banks),
            ("initial_hospital_inventory", self.n_hospitals),
        ):
            v = getattr(self, name)
            object.__setattr__(self, name, _freeze(np.zeros((N_TYPES, n)) if v is None else v))
        for name in ("donor_regions", "mobile_sites", "centers", "banks", "hospitals"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def n_donors(self) -> int:
        return len(self.donor_regions)

    @property
    def n_mobiles(self) -> int:
        return len(self.mobile_sites)

    @property
    def n_centers(self) -> int:
        return len(self.centers)

    @property
    def n_banks(self) -> int:
        return len(self.banks)

    @property
    def n_hospitals(self) -> int:
        return len(self.hospitals)

    def substitution_cost(self, recipient: BloodType, donor: BloodType) -> float:
        """Objective weight of one substituted unit: penalty fee times rank."""
        rank = self.priority.rank(recipient, donor)
        if rank is None or recipient == donor:
            return 0.0
        return float(self.substitution_penalty[recipient, donor]) * rank

    @staticmethod
    def rank_scaled_penalty(scale: float, priority: PriorityMatrix | None = None) -> np.ndarray:
        """Default penalty fee matrix: ``scale * (rank - 1)`` per compatible pair.

        Own-type use carries no penalty; remoter substitutes cost more.
        """
        pm = priority if priority is not None else standard_priority()
        ranks = pm.rank_array()
        pf = np.where(ranks > 1, scale * (ranks - 1), 0.0)
        return pf


def validate_instance(instance: Instance) -> list[Violation]:
    """Structural validation; empty list means the instance is well-formed.

    Violations are data, not exceptions: each names the offending field
    and the rule it breaks.
    """
    v: list[Violation] = []
    inst = instance

    def _shape(name: str, arr: np.ndarray, want: tuple[int, ...]):
        if arr.shape != want:
            v.append(Violation(name, f"expected shape {want}, got {arr.shape}"))
            return False
        return True

    def _nonneg(name: str, arr_or_val):
        a = np.asarray(arr_or_val)
        if a.size and a.min() < 0:
            v.append(Violation(name, "costs must be >= 0"))

    if inst.n_periods < 1:
        v.append(Violation("n_periods", "at least one period required"))
    if inst.shelf_life < 1:
        v.append(Violation("shelf_life", "shelf life must be >= 1"))
    if not 0 <= inst.fleet_size <= inst.n_mobiles:
        v.append(Violation("fleet_size", f"must be within [0, {inst.n_mobiles}] (bloodmobile sites)"))
    for name in ("donor_regions", "centers", "banks", "hospitals"):
        if not getattr(inst, name):
            v.append(Violation(name, "set must be nonempty"))
    for name, ids in (
        ("donor_regions", inst.donor_regions), ("mobile_sites", inst.mobile_sites),
        ("centers", inst.centers), ("banks", inst.banks), ("hospitals", inst.hospitals),
    ):
        if len(set(ids)) != len(ids):
            v.append(Violation(name, "ids must be unique"))

    nC, nB, nH, nM = inst.n_centers, inst.n_banks, inst.n_hospitals, inst.n_mobiles
    shapes = [
        ("op_center", inst.op_center, (nC,)), ("op_bank", inst.op_bank, (nB,)),
        ("op_hospital", inst.op_hospital, (nH,)),
        ("hold_center", inst.hold_center, (nC,)), ("hold_bank", inst.hold_bank, (nB,)),
        ("hold_hospital", inst.hold_hospital, (nH,)),
        ("waste_center", inst.waste_center, (N_TYPES, nC)),
        ("waste_bank", inst.waste_bank, (N_TYPES, nB)),
        ("waste_hospital", inst.waste_hospital, (N_TYPES, nH)),
        ("transport_mobile_center", inst.transport_mobile_center, (nM, nC)),
        ("transport_center_bank", inst.transport_center_bank, (nC, nB)),
        ("transport_bank_hospital", inst.transport_bank_hospital, (nB, nH)),
        ("substitution_penalty", inst.substitution_penalty, (N_TYPES, N_TYPES)),
        ("center_cap", inst.center_cap, (nC,)), ("bank_cap", inst.bank_cap, (nB,)),
        ("hospital_cap", inst.hospital_cap, (nH,)),
        ("initial_center_inventory", inst.initial_center_inventory, (N_TYPES, nC)),
        ("initial_bank_inventory", inst.initial_bank_inventory, (N_TYPES, nB)),
        ("initial_hospital_inventory", inst.initial_hospital_inventory, (N_TYPES, nH)),
    ]
    ok = {name: _shape(name, arr, want) for name, arr, want in shapes}

    for name in (
        "op_mobile", "op_center", "op_bank", "op_hospital",
        "hold_center", "hold_bank", "hold_hospital",
        "waste_center", "waste_bank", "waste_hospital",
        "transport_mobile_center", "transport_center_bank", "transport_bank_hospital",
        "mobile_fixed_cost",
    ):
        _nonneg(name, getattr(inst, name))

    for name in ("center_cap", "bank_cap", "hospital_cap"):
        arr = getattr(inst, name)
        if arr.size and arr.min() < 1:
            v.append(Violation(name, "capacities must be >= 1"))
    if inst.transport_cap < 1:
        v.append(Violation("transport_cap", "capacities must be >= 1"))

    for name in ("initial_center_inventory", "initial_bank_inventory", "initial_hospital_inventory"):
        arr = getattr(inst, name)
        if ok.get(name) and arr.size and arr.min() < 0:
            v.append(Violation(name, "initial inventory must be >= 0"))

    for msg in check_compatibility_tables(inst.compatibility, inst.priority):
        v.append(Violation("compatibility", msg))

    if ok["substitution_penalty"]:
        cm = inst.compatibility.cm
        pf = inst.substitution_penalty
        if pf.min() < 0:
            v.append(Violation("substitution_penalty", "penalty fees must be >= 0"))
        bad = (pf != 0) & (~cm | np.eye(N_TYPES, dtype=bool))
        for r, d in zip(*np.nonzero(bad)):
            v.append(Violation(
                "substitution_penalty",
                f"fee defined for {BloodType(r).label}<-{BloodType(d).label}, "
                "which is not an off-diagonal compatible pair",
            ))
    return v
