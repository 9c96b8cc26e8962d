"""Red-blood-cell typing, crossmatching, and substitution priority.

The eight ABO/Rh types are a closed enumeration in the fixed order
O-, O+, A-, A+, B-, B+, AB-, AB+.  Crossmatching (which donor type may
be transfused to which recipient type) and the substitution priority
ranking (own type first, then progressively less preferred compatible
types) are fixed medical facts; instances may override them for
what-if studies but the defaults are the canonical tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

N_TYPES = 8


class BloodType(IntEnum):
    """ABO/Rh types, index order fixed (position = value)."""

    O_NEG = 0
    O_POS = 1
    A_NEG = 2
    A_POS = 3
    B_NEG = 4
    B_POS = 5
    AB_NEG = 6
    AB_POS = 7

    @property
    def label(self) -> str:
        return _LABELS[self.value]

    @classmethod
    def from_label(cls, label: str) -> "BloodType":
        try:
            return cls(_LABELS.index(label))
        except ValueError:
            raise ValueError(f"unknown blood type {label!r}; expected one of {_LABELS}") from None


_LABELS = ("O-", "O+", "A-", "A+", "B-", "B+", "AB-", "AB+")

BLOOD_TYPE_LABELS = _LABELS

# Donor sets per recipient: a recipient may receive its own type, plus
# whatever the ABO/Rh rules admit (O- is the universal donor, AB+ the
# universal recipient).  27 compatible ordered pairs in total.
_DONORS_BY_RECIPIENT = {
    BloodType.O_NEG: (BloodType.O_NEG,),
    BloodType.O_POS: (BloodType.O_NEG, BloodType.O_POS),
    BloodType.A_NEG: (BloodType.O_NEG, BloodType.A_NEG),
    BloodType.A_POS: (BloodType.O_NEG, BloodType.O_POS, BloodType.A_NEG, BloodType.A_POS),
    BloodType.B_NEG: (BloodType.O_NEG, BloodType.B_NEG),
    BloodType.B_POS: (BloodType.O_NEG, BloodType.O_POS, BloodType.B_NEG, BloodType.B_POS),
    BloodType.AB_NEG: (BloodType.O_NEG, BloodType.A_NEG, BloodType.B_NEG, BloodType.AB_NEG),
    BloodType.AB_POS: tuple(BloodType),
}

# Preference order per recipient, rank 1 = own type.  Less-preferred
# substitutes come later; O- (always compatible) is always last unless
# it is the recipient's own type.
_PRIORITY_BY_RECIPIENT = {
    BloodType.O_NEG: (BloodType.O_NEG,),
    BloodType.O_POS: (BloodType.O_POS, BloodType.O_NEG),
    BloodType.A_NEG: (BloodType.A_NEG, BloodType.O_NEG),
    BloodType.A_POS: (BloodType.A_POS, BloodType.A_NEG, BloodType.O_POS, BloodType.O_NEG),
    BloodType.B_NEG: (BloodType.B_NEG, BloodType.O_NEG),
    BloodType.B_POS: (BloodType.B_POS, BloodType.B_NEG, BloodType.O_POS, BloodType.O_NEG),
    BloodType.AB_NEG: (BloodType.AB_NEG, BloodType.B_NEG, BloodType.A_NEG, BloodType.O_NEG),
    BloodType.AB_POS: (
        BloodType.AB_POS,
        BloodType.AB_NEG,
        BloodType.B_POS,
        BloodType.B_NEG,
        BloodType.A_POS,
        BloodType.A_NEG,
        BloodType.O_POS,
        BloodType.O_NEG,
    ),
}


@dataclass(frozen=True)
class CompatibilityMatrix:
    """8x8 boolean matrix, ``cm[recipient, donor]`` true iff transfusable."""

    cm: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.cm, dtype=bool)
        if m.shape != (N_TYPES, N_TYPES):
            raise ValueError(f"compatibility matrix must be 8x8, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "cm", m)

    def compatible(self, recipient: BloodType, donor: BloodType) -> bool:
        return bool(self.cm[recipient, donor])

    def donors_for(self, recipient: BloodType) -> tuple[BloodType, ...]:
        return tuple(BloodType(d) for d in np.flatnonzero(self.cm[recipient]))

    def n_compatible_pairs(self) -> int:
        return int(self.cm.sum())

    @staticmethod
    def standard() -> "CompatibilityMatrix":
        m = np.zeros((N_TYPES, N_TYPES), dtype=bool)
        for r, donors in _DONORS_BY_RECIPIENT.items():
            for d in donors:
                m[r, d] = True
        return CompatibilityMatrix(m)


@dataclass(frozen=True)
class PriorityMatrix:
    """Ordered substitute preference per recipient type.

    ``order[r]`` lists compatible donor types best-first (rank 1 is the
    recipient's own type); ``rank(r, d)`` is the 1-based position of
    donor ``d`` in that list, or None when the pair is incompatible.
    """

    order: tuple[tuple[BloodType, ...], ...]

    def __post_init__(self):
        if len(self.order) != N_TYPES:
            raise ValueError("priority matrix must list all 8 recipient types")
        object.__setattr__(self, "order", tuple(tuple(row) for row in self.order))

    def rank(self, recipient: BloodType, donor: BloodType) -> int | None:
        row = self.order[recipient]
        try:
            return row.index(donor) + 1
        except ValueError:
            return None

    def rank_array(self) -> np.ndarray:
        """8x8 int array of ranks, 0 where incompatible."""
        out = np.zeros((N_TYPES, N_TYPES), dtype=np.int64)
        for r in BloodType:
            for pos, d in enumerate(self.order[r]):
                out[r, d] = pos + 1
        out.setflags(write=False)
        return out

    @staticmethod
    def standard() -> "PriorityMatrix":
        return PriorityMatrix(tuple(_PRIORITY_BY_RECIPIENT[r] for r in BloodType))


_STANDARD_CM = CompatibilityMatrix.standard()
_STANDARD_PM = PriorityMatrix.standard()


def standard_compatibility() -> CompatibilityMatrix:
    return _STANDARD_CM


def standard_priority() -> PriorityMatrix:
    return _STANDARD_PM


def compatible(recipient: BloodType, donor: BloodType) -> bool:
    """True iff a unit of ``donor`` type may serve ``recipient`` demand."""
    return _STANDARD_CM.compatible(recipient, donor)


def priority_rank(recipient: BloodType, donor: BloodType) -> int | None:
    """1-based substitute preference, None when incompatible."""
    return _STANDARD_PM.rank(recipient, donor)


def check_compatibility_tables(cm: CompatibilityMatrix, pm: PriorityMatrix) -> list[str]:
    """Structural violations of the crossmatching/priority pair.

    Returns human-readable messages; empty list means the tables are
    internally consistent (diagonal compatible, O- universal donor,
    AB+ universal recipient, O- recipient accepts only O-, and the
    priority rows enumerate exactly the compatible donors with own
    type ranked first).
    """
    issues: list[str] = []
    m = cm.cm
    if not m.diagonal().all():
        issues.append("compatibility: every type must accept its own type")
    if m[BloodType.O_NEG].sum() != 1 or not m[BloodType.O_NEG, BloodType.O_NEG]:
        issues.append("compatibility: row O- must accept only O-")
    if not m[BloodType.AB_POS].all():
        issues.append("compatibility: row AB+ must accept every donor type")
    if not m[:, BloodType.O_NEG].all():
        issues.append("compatibility: column O- (universal donor) must be all true")
    for r in BloodType:
        listed = set(pm.order[r])
        compat = {BloodType(d) for d in np.flatnonzero(m[r])}
        if listed != compat:
            issues.append(
                f"priority: row {r.label} lists {sorted(t.label for t in listed)} "
                f"but compatible donors are {sorted(t.label for t in compat)}"
            )
        if pm.order[r] and pm.order[r][0] != r:
            issues.append(f"priority: rank 1 for {r.label} must be {r.label} itself")
        if len(set(pm.order[r])) != len(pm.order[r]):
            issues.append(f"priority: row {r.label} contains duplicates")
    return issues
