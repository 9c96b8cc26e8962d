"""Deterministic-equivalent MILP assembly.

Expands the two-stage program over all scenario triples into one
solver-agnostic sparse model: first-stage assignment binaries, per-triple
recourse quantities, the expected-cost and min-service objectives, and
every structural constraint including exact big-M encodings of the two
nonlinear pieces (FIFO outdating ``O = max(0, E)`` and the
stock/shortage and stock/substitution exclusivity products).

Every row carries a family tag plus its index tuple, so audits and
reports can address constraints by what they enforce.  Construction is
fully deterministic: identical inputs produce identical column and row
orderings.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .blood import N_TYPES
from .instance import Instance, InvalidInstanceError, validate_instance
from .scenarios import ScenarioSet, ScenarioTriple, enumerate_triples

INF = float("inf")

# Objective modes.
MODE_COST = "cost"
MODE_SERVICE = "service"
MODE_SERVICE_FLOOR = "service_floor"

BINARY_KINDS = ("z", "z1", "z2", "z3", "z4", "w_out", "w_short", "w_sub")
INT_KINDS = ("x", "x1", "x2", "x3", "x4", "I", "I1", "I2", "O", "O1", "O2", "Q", "Sub")
CONTINUOUS_KINDS = ("y", "y1", "y2", "eta")

# Echelon codes for the outdating auxiliaries.
ECH_CENTER, ECH_BANK, ECH_HOSPITAL = 0, 1, 2


class VarRef(NamedTuple):
    kind: str
    index: tuple


class ModelError(ValueError):
    pass


@dataclass
class ModelCensus:
    """Row/column bookkeeping for audits and size reports."""

    columns_by_kind: dict[str, int]
    rows_by_family: dict[str, int]
    n_cols: int
    n_int_cols: int
    n_binary_cols: int
    n_eq_rows: int
    n_ineq_rows: int
    advisories: list[str]

    def summary(self) -> str:
        return (
            f"{self.n_cols} columns ({self.n_binary_cols} binary, "
            f"{self.n_int_cols} general integer), "
            f"{self.n_ineq_rows} inequality rows, {self.n_eq_rows} equality rows"
        )


@dataclass(frozen=True)
class BigMPolicy:
    """Per-linearization big-M values, provably valid for the instance.

    ``outdate_*`` pairs are (slack M, cap M) for the four-row max
    encoding: the slack M bounds how negative the max argument can get
    (prior outdates plus one period of outflow), the cap M bounds how
    large it can get (at most the facility's inventory capacity).
    """

    outdate_center: tuple[np.ndarray, np.ndarray]  # each (nC,)
    outdate_bank: tuple[np.ndarray, np.ndarray]
    outdate_hospital: tuple[np.ndarray, np.ndarray]
    hospital_stock: np.ndarray  # (nH,) bound on any single-type hospital inventory
    substitution_in: np.ndarray  # (nH,) bound on one type's substitute intake

    @staticmethod
    def from_instance(instance: Instance) -> "BigMPolicy":
        uc, ub, uh = instance.center_cap, instance.bank_cap, instance.hospital_cap
        umax = instance.transport_cap
        nH = instance.n_hospitals
        return BigMPolicy(
            outdate_center=(uc + umax, uc.copy()),
            outdate_bank=(ub + nH * umax, ub.copy()),
            outdate_hospital=(2.0 * uh, uh.copy()),
            hospital_stock=uh.copy(),
            substitution_in=uh.copy(),
        )


class MilpModel:
    """Sparse mixed-integer linear model with tagged rows.

    Columns are registered through :meth:`add_col` and addressed by
    ``(kind, index)``; rows through :meth:`add_row` with a family tag,
    an index tuple, a sense in {"<=", ">=", "="} and a right-hand side.
    """

    def __init__(self, sense: str = "min"):
        self.sense = sense
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_int: list[bool] = []
        self.obj: list[float] = []
        self.col_kind: list[str] = []
        self.col_index: list[tuple] = []
        self._col_of: dict[tuple[str, tuple], int] = {}
        self.row_cols: list[np.ndarray] = []
        self.row_vals: list[np.ndarray] = []
        self.row_sense: list[str] = []
        self.row_rhs: list[float] = []
        self.row_family: list[str] = []
        self.row_index: list[tuple] = []
        self.advisories: list[str] = []
        # filled by build_model
        self.mode: str | None = None
        self.epsilon: float | None = None
        self.triples: list[ScenarioTriple] = []
        self._matrix_cache = None

    # -- columns ------------------------------------------------------

    def add_col(self, kind: str, index: tuple, lb: float, ub: float,
                is_int: bool, obj: float = 0.0) -> int:
        key = (kind, index)
        if key in self._col_of:
            raise ModelError(f"duplicate column {key}")
        j = len(self.lb)
        self._col_of[key] = j
        self.col_kind.append(kind)
        self.col_index.append(index)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.is_int.append(bool(is_int))
        self.obj.append(float(obj))
        self._matrix_cache = None
        return j

    def col(self, kind: str, index: tuple = ()) -> int:
        return self._col_of[(kind, index)]

    def has_col(self, kind: str, index: tuple = ()) -> bool:
        return (kind, index) in self._col_of

    def var(self, ref: VarRef) -> int:
        return self._col_of[(ref.kind, ref.index)]

    @property
    def n_cols(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.row_rhs)

    # -- rows ---------------------------------------------------------

    def add_row(self, family: str, index: tuple,
                coeffs: Iterable[tuple[int, float]], sense: str, rhs: float) -> int:
        if sense not in ("<=", ">=", "="):
            raise ModelError(f"bad row sense {sense!r}")
        acc: dict[int, float] = {}
        for j, v in coeffs:
            if v == 0.0:
                continue
            if not np.isfinite(v):
                raise ModelError(f"non-finite coefficient in row {family}{index}")
            acc[j] = acc.get(j, 0.0) + float(v)
        cols = np.fromiter(sorted(acc), dtype=np.int64, count=len(acc))
        vals = np.array([acc[j] for j in cols], dtype=np.float64)
        if len(cols) and (cols[-1] >= self.n_cols or cols[0] < 0):
            raise ModelError(f"row {family}{index} references unknown column")
        i = self.n_rows
        self.row_cols.append(cols)
        self.row_vals.append(vals)
        self.row_sense.append(sense)
        self.row_rhs.append(float(rhs))
        self.row_family.append(family)
        self.row_index.append(index)
        self._matrix_cache = None
        return i

    # -- export -------------------------------------------------------

    def to_matrix(self):
        """(A csr, senses, rhs, lb, ub, is_int, obj) with cached reuse."""
        if self._matrix_cache is None:
            indptr = np.zeros(self.n_rows + 1, dtype=np.int64)
            for i, cols in enumerate(self.row_cols):
                indptr[i + 1] = indptr[i] + len(cols)
            indices = (np.concatenate(self.row_cols) if self.row_cols
                       else np.zeros(0, dtype=np.int64))
            data = (np.concatenate(self.row_vals) if self.row_vals
                    else np.zeros(0, dtype=np.float64))
            A = sp.csr_matrix((data, indices, indptr), shape=(self.n_rows, self.n_cols))
            self._matrix_cache = (
                A,
                np.array(self.row_sense),
                np.array(self.row_rhs, dtype=np.float64),
                np.array(self.lb, dtype=np.float64),
                np.array(self.ub, dtype=np.float64),
                np.array(self.is_int, dtype=bool),
                np.array(self.obj, dtype=np.float64),
            )
        return self._matrix_cache

    def census(self) -> ModelCensus:
        cols: dict[str, int] = {}
        for k in self.col_kind:
            cols[k] = cols.get(k, 0) + 1
        fams: dict[str, int] = {}
        for f in self.row_family:
            fams[f] = fams.get(f, 0) + 1
        n_eq = sum(1 for s in self.row_sense if s == "=")
        return ModelCensus(
            columns_by_kind=cols,
            rows_by_family=fams,
            n_cols=self.n_cols,
            n_int_cols=sum(1 for k, i in zip(self.col_kind, self.is_int) if i and k not in BINARY_KINDS),
            n_binary_cols=sum(1 for k in self.col_kind if k in BINARY_KINDS),
            n_eq_rows=n_eq,
            n_ineq_rows=self.n_rows - n_eq,
            advisories=list(self.advisories),
        )

    def fingerprint(self) -> str:
        """Content hash over structure and numerics (names excluded)."""
        h = hashlib.sha256()
        h.update(self.sense.encode())
        h.update(repr([(lb, ub, i, o) for lb, ub, i, o in
                       zip(self.lb, self.ub, self.is_int, self.obj)]).encode())
        for cols, vals, s, r in zip(self.row_cols, self.row_vals, self.row_sense, self.row_rhs):
            h.update(s.encode())
            h.update(repr(float(r)).encode())
            h.update(cols.tobytes())
            h.update(vals.tobytes())
        return h.hexdigest()


# ----------------------------------------------------------------------
# Variable registration


def _sub_pairs(instance: Instance) -> list[tuple[int, int]]:
    """Ordered (demand type, stock type) pairs eligible for substitution."""
    cm = instance.compatibility.cm
    return [(r, d) for r in range(N_TYPES) for d in range(N_TYPES) if cm[r, d] and r != d]


def register_variables(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> None:
    """All first- and second-stage decision columns, in fixed kind order.

    Quantity bounds are tightened with provable data-driven caps
    (supply on donor arcs, demand on shortages, capacities on
    inventories); none of these excludes a feasible point.
    """
    inst = instance
    nD, nM, nC, nB, nH, nT = (inst.n_donors, inst.n_mobiles, inst.n_centers,
                              inst.n_banks, inst.n_hospitals, inst.n_periods)
    triples = model.triples
    sl = inst.shelf_life

    for d in range(nD):
        for c in range(nC):
            for t in range(nT):
                model.add_col("z", (d, c, t), 0, 1, True)
    for d in range(nD):
        for m in range(nM):
            for t in range(nT):
                model.add_col("z1", (d, m, t), 0, 1, True)
    for m in range(nM):
        for c in range(nC):
            for t in range(nT):
                model.add_col("z2", (m, c, t), 0, 1, True)
    for c in range(nC):
        for b in range(nB):
            for t in range(nT):
                model.add_col("z3", (c, b, t), 0, 1, True)
    for b in range(nB):
        for h in range(nH):
            for t in range(nT):
                for k in range(len(triples)):
                    model.add_col("z4", (b, h, t, k), 0, 1, True)

    for g in range(N_TYPES):
        for d in range(nD):
            for m in range(nM):
                for t in range(nT):
                    for k, tr in enumerate(triples):
                        s_cap = float(scenario_set.supply[tr.supply_idx].supply[g, d, t])
                        model.add_col("x", (g, d, m, t, k), 0, s_cap, True)
    for g in range(N_TYPES):
        for m in range(nM):
            for c in range(nC):
                for t in range(nT):
                    for k in range(len(triples)):
                        model.add_col("x1", (g, m, c, t, k), 0, inst.transport_cap, True)
    for g in range(N_TYPES):
        for d in range(nD):
            for c in range(nC):
                for t in range(nT):
                    for k, tr in enumerate(triples):
                        s_cap = float(scenario_set.supply[tr.supply_idx].supply[g, d, t])
                        model.add_col("x2", (g, d, c, t, k), 0, s_cap, True)
    for g in range(N_TYPES):
        for c in range(nC):
            for b in range(nB):
                for t in range(nT):
                    for k in range(len(triples)):
                        model.add_col("x3", (g, c, b, t, k), 0, inst.transport_cap, True)
    for g in range(N_TYPES):
        for b in range(nB):
            for h in range(nH):
                for t in range(nT):
                    for k in range(len(triples)):
                        model.add_col("x4", (g, b, h, t, k), 0, inst.transport_cap, True)

    for g in range(N_TYPES):
        for c in range(nC):
            for t in range(nT):
                for k in range(len(triples)):
                    model.add_col("I", (g, c, t, k), 0, float(inst.center_cap[c]), True)
    for g in range(N_TYPES):
        for b in range(nB):
            for t in range(nT):
                for k in range(len(triples)):
                    model.add_col("I1", (g, b, t, k), 0, float(inst.bank_cap[b]), True)
    for g in range(N_TYPES):
        for h in range(nH):
            for t in range(nT):
                for k in range(len(triples)):
                    model.add_col("I2", (g, h, t, k), 0, float(inst.hospital_cap[h]), True)

    # Nothing can outdate before one full shelf life has elapsed
    # (initial stock predates the horizon and is never aged by the
    # outdating rule), so early-period outdate columns are pinned to 0.
    for g in range(N_TYPES):
        for c in range(nC):
            for t in range(nT):
                for k in range(len(triples)):
                    cap = float(inst.center_cap[c]) if t >= sl else 0.0
                    model.add_col("O", (g, c, t, k), 0, cap, True)
    for g in range(N_TYPES):
        for b in range(nB):
            for t in range(nT):
                for k in range(len(triples)):
                    cap = float(inst.bank_cap[b]) if t >= sl else 0.0
                    model.add_col("O1", (g, b, t, k), 0, cap, True)
    for g in range(N_TYPES):
        for h in range(nH):
            for t in range(nT):
                for k in range(len(triples)):
                    cap = float(inst.hospital_cap[h]) if t >= sl else 0.0
                    model.add_col("O2", (g, h, t, k), 0, cap, True)

    # Shortage can never exceed demand: it measures unmet demand.
    for g in range(N_TYPES):
        for h in range(nH):
            for t in range(nT):
                for k, tr in enumerate(triples):
                    dem = float(scenario_set.demand[tr.demand_idx].demand[g, h, t])
                    model.add_col("Q", (g, h, t, k), 0, dem, True)

    for g in range(N_TYPES):
        for m in range(nM):
            for t in range(nT):
                for k in range(len(triples)):
                    model.add_col("y", (g, m, t, k), 0, INF, False)
    for g in range(N_TYPES):
        for c in range(nC):
            for t in range(nT):
                for k in range(len(triples)):
                    model.add_col("y1", (g, c, t, k), 0, INF, False)
    for g in range(N_TYPES):
        for b in range(nB):
            for t in range(nT):
                for k in range(len(triples)):
                    model.add_col("y2", (g, b, t, k), 0, INF, False)

    for (g, gs) in _sub_pairs(inst):
        for h in range(nH):
            for t in range(nT):
                for k in range(len(triples)):
                    cap = (float(inst.hospital_cap[h]) if t >= 1
                           else float(inst.initial_hospital_inventory[gs, h]))
                    model.add_col("Sub", (g, gs, h, t, k), 0, cap, True)


# ----------------------------------------------------------------------
# Objectives


def cost_entries(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> dict[int, float]:
    """Expected-total-cost coefficients per column.

    First-stage bloodmobile deployments carry the fixed fee outright;
    every second-stage term is weighted by its triple's joint
    probability.  Components: operating fees on flows, holding fees on
    end inventories, wastage fees on outdates, transport fees on arcs,
    and rank-weighted penalty fees on substitutions.
    """
    inst = instance
    ranks = inst.priority.rank_array()
    out: dict[int, float] = {}

    def add(kind: str, index: tuple, coef: float):
        if coef != 0.0:
            j = model.col(kind, index)
            out[j] = out.get(j, 0.0) + coef

    for (kind, index), j in model._col_of.items():
        if kind == "z1":
            out[j] = out.get(j, 0.0) + inst.mobile_fixed_cost
    for k, tr in enumerate(model.triples):
        p = tr.probability
        for g in range(N_TYPES):
            for t in range(inst.n_periods):
                for d in range(inst.n_donors):
                    for m in range(inst.n_mobiles):
                        add("x", (g, d, m, t, k), p * inst.op_mobile)
                    for c in range(inst.n_centers):
                        add("x2", (g, d, c, t, k), p * inst.op_center[c])
                for m in range(inst.n_mobiles):
                    for c in range(inst.n_centers):
                        add("x1", (g, m, c, t, k),
                            p * (inst.op_center[c] + inst.transport_mobile_center[m, c]))
                for c in range(inst.n_centers):
                    for b in range(inst.n_banks):
                        add("x3", (g, c, b, t, k),
                            p * (inst.op_bank[b] + inst.transport_center_bank[c, b]))
                for b in range(inst.n_banks):
                    for h in range(inst.n_hospitals):
                        add("x4", (g, b, h, t, k),
                            p * (inst.op_hospital[h] + inst.transport_bank_hospital[b, h]))
                for c in range(inst.n_centers):
                    add("I", (g, c, t, k), p * inst.hold_center[c])
                    add("O", (g, c, t, k), p * inst.waste_center[g, c])
                for b in range(inst.n_banks):
                    add("I1", (g, b, t, k), p * inst.hold_bank[b])
                    add("O1", (g, b, t, k), p * inst.waste_bank[g, b])
                for h in range(inst.n_hospitals):
                    add("I2", (g, h, t, k), p * inst.hold_hospital[h])
                    add("O2", (g, h, t, k), p * inst.waste_hospital[g, h])
        for (g, gs) in _sub_pairs(inst):
            coef = inst.substitution_penalty[g, gs] * ranks[g, gs]
            for h in range(inst.n_hospitals):
                for t in range(inst.n_periods):
                    add("Sub", (g, gs, h, t, k), p * coef)
    return out


def build_cost_objective(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> None:
    for j, coef in cost_entries(instance, scenario_set, model).items():
        model.obj[j] += coef


def build_service_objective(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> VarRef:
    """Min-service variable and its per-hospital linking rows.

    The service level of a hospital is the horizon average of
    ``1 - sum over types of expected shortage/demand``; zero-demand
    cells contribute nothing (they cannot be shorted).  The auxiliary
    is bounded above by every hospital's level, turning the max-min
    objective into a plain maximization.
    """
    inst = instance
    nT = inst.n_periods
    eta = model.add_col("eta", (), -INF, 1.0, False)
    for h in range(inst.n_hospitals):
        coeffs: list[tuple[int, float]] = [(eta, 1.0)]
        for t in range(nT):
            for k, tr in enumerate(model.triples):
                dem = scenario_set.demand[tr.demand_idx].demand
                for g in range(N_TYPES):
                    d_val = float(dem[g, h, t])
                    if d_val > 0:
                        coeffs.append((model.col("Q", (g, h, t, k)),
                                       tr.probability / (nT * d_val)))
        model.add_row("service_level", (h,), coeffs, "<=", 1.0)
    return VarRef("eta", ())


# ----------------------------------------------------------------------
# Constraint builders


def build_first_stage_assignment(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> None:
    """Assignment structure of the network.

    Per period: each donor region feeds at most one center or one
    bloodmobile; at most ``fleet_size`` bloodmobiles deploy; each
    bloodmobile serves one donor region and delivers to one center;
    each center ships to one bank; per scenario triple, each hospital
    is served by at most one bank.  Link rows tie arc totals to the
    corresponding assignment with the receiving facility's capacity.
    """
    inst = instance
    nD, nM, nC, nB, nH, nT = (inst.n_donors, inst.n_mobiles, inst.n_centers,
                              inst.n_banks, inst.n_hospitals, inst.n_periods)
    nK = len(model.triples)

    for d in range(nD):
        for t in range(nT):
            coeffs = [(model.col("z", (d, c, t)), 1.0) for c in range(nC)]
            coeffs += [(model.col("z1", (d, m, t)), 1.0) for m in range(nM)]
            model.add_row("donor_single_channel", (d, t), coeffs, "<=", 1.0)
    for t in range(nT):
        coeffs = [(model.col("z1", (d, m, t)), 1.0) for d in range(nD) for m in range(nM)]
        model.add_row("fleet_limit", (t,), coeffs, "<=", float(inst.fleet_size))
    for m in range(nM):
        for t in range(nT):
            coeffs = [(model.col("z1", (d, m, t)), 1.0) for d in range(nD)]
            model.add_row("mobile_single_donor", (m, t), coeffs, "<=", 1.0)
    for m in range(nM):
        for c in range(nC):
            for t in range(nT):
                for k in range(nK):
                    coeffs = [(model.col("x1", (g, m, c, t, k)), 1.0) for g in range(N_TYPES)]
                    coeffs.append((model.col("z2", (m, c, t)), -float(inst.center_cap[c])))
                    model.add_row("mobile_center_link", (m, c, t, k), coeffs, "<=", 0.0)
    for c in range(nC):
        for b in range(nB):
            for t in range(nT):
                for k in range(nK):
                    coeffs = [(model.col("x3", (g, c, b, t, k)), 1.0) for g in range(N_TYPES)]
                    coeffs.append((model.col("z3", (c, b, t)), -float(inst.bank_cap[b])))
                    model.add_row("center_bank_link", (c, b, t, k), coeffs, "<=", 0.0)
    for m in range(nM):
        for t in range(nT):
            coeffs = [(model.col("z2", (m, c, t)), 1.0) for c in range(nC)]
            model.add_row("mobile_single_center", (m, t), coeffs, "<=", 1.0)
    for c in range(nC):
        for t in range(nT):
            coeffs = [(model.col("z3", (c, b, t)), 1.0) for b in range(nB)]
            model.add_row("center_single_bank", (c, t), coeffs, "<=", 1.0)
    for h in range(nH):
        for t in range(nT):
            for k in range(nK):
                coeffs = [(model.col("z4", (b, h, t, k)), 1.0) for b in range(nB)]
                model.add_row("hospital_single_bank", (h, t, k), coeffs, "<=", 1.0)
    for b in range(nB):
        for h in range(nH):
            for t in range(nT):
                for k in range(nK):
                    coeffs = [(model.col("x4", (g, b, h, t, k)), 1.0) for g in range(N_TYPES)]
                    coeffs.append((model.col("z4", (b, h, t, k)), -float(inst.hospital_cap[h])))
                    model.add_row("bank_hospital_link", (b, h, t, k), coeffs, "<=", 0.0)


def build_flow_processing(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> None:
    """Collection, processing-with-loss, and supply-linking rows.

    Processed volume equals inflow scaled by the surviving fraction
    (1 - disruption loss); shipments out of a facility cannot exceed
    what it processed; donor arcs open only under the matching
    assignment and carry at most the scenario's supply.  The
    mobile-ship-within-collection row is implied by the processing pair
    whenever losses are nonnegative but is kept for structural fidelity.
    """
    inst = instance
    nD, nM, nC, nB, nH, nT = (inst.n_donors, inst.n_mobiles, inst.n_centers,
                              inst.n_banks, inst.n_hospitals, inst.n_periods)

    for g in range(N_TYPES):
        for m in range(nM):
            for t in range(nT):
                for k in range(len(model.triples)):
                    coeffs = [(model.col("x1", (g, m, c, t, k)), 1.0) for c in range(nC)]
                    coeffs += [(model.col("x", (g, d, m, t, k)), -1.0) for d in range(nD)]
                    model.add_row("mobile_ship_le_collect", (g, m, t, k), coeffs, "<=", 0.0)

    for g in range(N_TYPES):
        for m in range(nM):
            for t in range(nT):
                for k, tr in enumerate(model.triples):
                    surv = 1.0 - float(scenario_set.disruption[tr.disruption_idx].mobile_loss[m])
                    coeffs = [(model.col("y", (g, m, t, k)), 1.0)]
                    coeffs += [(model.col("x", (g, d, m, t, k)), -surv) for d in range(nD)]
                    model.add_row("mobile_processing", (g, m, t, k), coeffs, "=", 0.0)
    for g in range(N_TYPES):
        for m in range(nM):
            for t in range(nT):
                for k in range(len(model.triples)):
                    coeffs = [(model.col("x1", (g, m, c, t, k)), 1.0) for c in range(nC)]
                    coeffs.append((model.col("y", (g, m, t, k)), -1.0))
                    model.add_row("mobile_ship_le_processed", (g, m, t, k), coeffs, "<=", 0.0)

    for g in range(N_TYPES):
        for c in range(nC):
            for t in range(nT):
                for k, tr in enumerate(model.triples):
                    surv = 1.0 - float(scenario_set.disruption[tr.disruption_idx].center_loss[c])
                    coeffs = [(model.col("y1", (g, c, t, k)), 1.0)]
                    coeffs += [(model.col("x1", (g, m, c, t, k)), -1.0) for m in range(nM)]
                    coeffs += [(model.col("x2", (g, d, c, t, k)), -surv) for d in range(nD)]
                    model.add_row("center_processing", (g, c, t, k), coeffs, "=", 0.0)
    for g in range(N_TYPES):
        for c in range(nC):
            for t in range(nT):
                for k in range(len(model.triples)):
                    coeffs = [(model.col("x3", (g, c, b, t, k)), 1.0) for b in range(nB)]
                    coeffs.append((model.col("y1", (g, c, t, k)), -1.0))
                    model.add_row("center_ship_le_processed", (g, c, t, k), coeffs, "<=", 0.0)

    for g in range(N_TYPES):
        for b in range(nB):
            for t in range(nT):
                for k, tr in enumerate(model.triples):
                    surv = 1.0 - float(scenario_set.disruption[tr.disruption_idx].bank_loss[b])
                    coeffs = [(model.col("y2", (g, b, t, k)), 1.0)]
                    coeffs += [(model.col("x3", (g, c, b, t, k)), -surv) for c in range(nC)]
                    model.add_row("bank_processing", (g, b, t, k), coeffs, "=", 0.0)
    for g in range(N_TYPES):
        for b in range(nB):
            for t in range(nT):
                for k in range(len(model.triples)):
                    coeffs = [(model.col("x4", (g, b, h, t, k)), 1.0) for h in range(nH)]
                    coeffs.append((model.col("y2", (g, b, t, k)), -1.0))
                    model.add_row("bank_ship_le_processed", (g, b, t, k), coeffs, "<=", 0.0)

    for g in range(N_TYPES):
        for d in range(nD):
            for m in range(nM):
                for t in range(nT):
                    for k, tr in enumerate(model.triples):
                        s_val = float(scenario_set.supply[tr.supply_idx].supply[g, d, t])
                        coeffs = [(model.col("x", (g, d, m, t, k)), 1.0),
                                  (model.col("z1", (d, m, t)), -s_val)]
                        model.add_row("supply_mobile_link", (g, d, m, t, k), coeffs, "<=", 0.0)
    for g in range(N_TYPES):
        for d in range(nD):
            for c in range(nC):
                for t in range(nT):
                    for k, tr in enumerate(model.triples):
                        s_val = float(scenario_set.supply[tr.supply_idx].supply[g, d, t])
                        coeffs = [(model.col("x2", (g, d, c, t, k)), 1.0),
                                  (model.col("z", (d, c, t)), -s_val)]
                        model.add_row("supply_center_link", (g, d, c, t, k), coeffs, "<=", 0.0)


def _outdate_rows(model: MilpModel, family: str, index: tuple, o_col: int,
                  arg_terms: list[tuple[int, float]], m_slack: float, m_cap: float) -> None:
    """Exact encoding of ``O = max(0, E)`` with one switch binary.

    E is ``sum(arg_terms)``.  Rows: O >= E; O <= E + m_slack*(1-w);
    O <= m_cap*w.  With w = 0 the outdate is pinned to zero and E must
    be nonpositive; with w = 1 the outdate equals E exactly.
    """
    w = model.add_col("w_out", index, 0, 1, True)
    model.add_row(f"{family}_floor", index[1:], [(o_col, 1.0)] + [(j, -v) for j, v in arg_terms],
                  ">=", 0.0)
    model.add_row(f"{family}_match", index[1:],
                  [(o_col, 1.0)] + [(j, -v) for j, v in arg_terms] + [(w, m_slack)],
                  "<=", m_slack)
    model.add_row(f"{family}_switch", index[1:], [(o_col, 1.0), (w, -m_cap)], "<=", 0.0)


def build_outdating(instance: Instance, scenario_set: ScenarioSet, model: MilpModel,
                    policy: BigMPolicy) -> None:
    """FIFO outdating at centers, banks, and hospitals.

    A unit that entered stock one shelf life ago and has not left since
    expires: the outdate at period t equals
    ``max(0, stock(t - SL) - outflow(t) - outdate(t - SL))``, where
    outflow is onward shipment for centers and banks and
    substitution-out for hospitals.  No rows exist for t <= SL; if the
    shelf life covers the whole horizon an advisory records that
    outdating is inactive.
    """
    inst = instance
    sl = inst.shelf_life
    nT = inst.n_periods
    if sl >= nT:
        model.advisories.append(
            f"shelf life {sl} >= horizon {nT}: no outdating rows emitted")
        return
    for g in range(N_TYPES):
        for c in range(inst.n_centers):
            for t in range(sl, nT):
                for k in range(len(model.triples)):
                    terms = [(model.col("I", (g, c, t - sl, k)), 1.0),
                             (model.col("O", (g, c, t - sl, k)), -1.0)]
                    terms += [(model.col("x3", (g, c, b, t, k)), -1.0) for b in range(inst.n_banks)]
                    _outdate_rows(model, "outdate_center", (ECH_CENTER, g, c, t, k),
                                  model.col("O", (g, c, t, k)), terms,
                                  float(policy.outdate_center[0][c]),
                                  float(policy.outdate_center[1][c]))
    for g in range(N_TYPES):
        for b in range(inst.n_banks):
            for t in range(sl, nT):
                for k in range(len(model.triples)):
                    terms = [(model.col("I1", (g, b, t - sl, k)), 1.0),
                             (model.col("O1", (g, b, t - sl, k)), -1.0)]
                    terms += [(model.col("x4", (g, b, h, t, k)), -1.0)
                              for h in range(inst.n_hospitals)]
                    _outdate_rows(model, "outdate_bank", (ECH_BANK, g, b, t, k),
                                  model.col("O1", (g, b, t, k)), terms,
                                  float(policy.outdate_bank[0][b]),
                                  float(policy.outdate_bank[1][b]))
    pairs = _sub_pairs(inst)
    for g in range(N_TYPES):
        for h in range(inst.n_hospitals):
            for t in range(sl, nT):
                for k in range(len(model.triples)):
                    terms = [(model.col("I2", (g, h, t - sl, k)), 1.0),
                             (model.col("O2", (g, h, t - sl, k)), -1.0)]
                    # substitution-out: stock of this type serving other types
                    terms += [(model.col("Sub", (gd, g, h, t, k)), -1.0)
                              for (gd, gs) in pairs if gs == g]
                    _outdate_rows(model, "outdate_hospital", (ECH_HOSPITAL, g, h, t, k),
                                  model.col("O2", (g, h, t, k)), terms,
                                  float(policy.outdate_hospital[0][h]),
                                  float(policy.outdate_hospital[1][h]))


def build_inventory_balance(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> None:
    """Per-period stock equations at every echelon.

    Center: previous stock + arrivals - outdates - shipments = stock.
    Bank: likewise with bank arrivals/shipments.  Hospital: deliveries
    + previous stock + substitutes received - substitutes given -
    outdates = demand + stock - shortage.  The first period uses the
    instance's initial inventories (zero unless overridden).
    """
    inst = instance
    nT = inst.n_periods
    pairs = _sub_pairs(inst)
    for g in range(N_TYPES):
        for c in range(inst.n_centers):
            for t in range(nT):
                for k in range(len(model.triples)):
                    coeffs = [(model.col("I", (g, c, t, k)), 1.0),
                              (model.col("O", (g, c, t, k)), 1.0)]
                    coeffs += [(model.col("x1", (g, m, c, t, k)), -1.0)
                               for m in range(inst.n_mobiles)]
                    coeffs += [(model.col("x2", (g, d, c, t, k)), -1.0)
                               for d in range(inst.n_donors)]
                    coeffs += [(model.col("x3", (g, c, b, t, k)), 1.0)
                               for b in range(inst.n_banks)]
                    if t == 0:
                        rhs = float(inst.initial_center_inventory[g, c])
                    else:
                        coeffs.append((model.col("I", (g, c, t - 1, k)), -1.0))
                        rhs = 0.0
                    model.add_row("balance_center", (g, c, t, k), coeffs, "=", rhs)
    for g in range(N_TYPES):
        for b in range(inst.n_banks):
            for t in range(nT):
                for k in range(len(model.triples)):
                    coeffs = [(model.col("I1", (g, b, t, k)), 1.0),
                              (model.col("O1", (g, b, t, k)), 1.0)]
                    coeffs += [(model.col("x3", (g, c, b, t, k)), -1.0)
                               for c in range(inst.n_centers)]
                    coeffs += [(model.col("x4", (g, b, h, t, k)), 1.0)
                               for h in range(inst.n_hospitals)]
                    if t == 0:
                        rhs = float(inst.initial_bank_inventory[g, b])
                    else:
                        coeffs.append((model.col("I1", (g, b, t - 1, k)), -1.0))
                        rhs = 0.0
                    model.add_row("balance_bank", (g, b, t, k), coeffs, "=", rhs)
    for g in range(N_TYPES):
        for h in range(inst.n_hospitals):
            for t in range(nT):
                for k, tr in enumerate(model.triples):
                    dem = float(scenario_set.demand[tr.demand_idx].demand[g, h, t])
                    coeffs = [(model.col("x4", (g, b, h, t, k)), 1.0)
                              for b in range(inst.n_banks)]
                    coeffs += [(model.col("Sub", (g, gs, h, t, k)), 1.0)
                               for (gd, gs) in pairs if gd == g]
                    coeffs += [(model.col("Sub", (gd, g, h, t, k)), -1.0)
                               for (gd, gs) in pairs if gs == g]
                    coeffs.append((model.col("O2", (g, h, t, k)), -1.0))
                    coeffs.append((model.col("I2", (g, h, t, k)), -1.0))
                    coeffs.append((model.col("Q", (g, h, t, k)), 1.0))
                    rhs = dem
                    if t == 0:
                        rhs -= float(inst.initial_hospital_inventory[g, h])
                    else:
                        coeffs.append((model.col("I2", (g, h, t - 1, k)), 1.0))
                    model.add_row("balance_hospital", (g, h, t, k), coeffs, "=", rhs)


def build_complementarity(instance: Instance, scenario_set: ScenarioSet, model: MilpModel,
                          policy: BigMPolicy) -> None:
    """Mutual-exclusion switches for stock versus shortage/substitution.

    A hospital cannot simultaneously hold end-of-period stock of a type
    and report a shortage of it, nor hold stock of a type while
    receiving substitutes for it.  Each exclusion gets one binary whose
    two sides are capped by data-driven constants (demand for the
    shortage side, hospital capacity for the stock and intake sides).
    Cells with zero demand need no shortage switch; types with no
    off-type compatible donors need no substitution switch.
    """
    inst = instance
    pairs = _sub_pairs(inst)
    donors_of = {g: [gs for (gd, gs) in pairs if gd == g] for g in range(N_TYPES)}
    for g in range(N_TYPES):
        for h in range(inst.n_hospitals):
            for t in range(inst.n_periods):
                for k, tr in enumerate(model.triples):
                    dem = float(scenario_set.demand[tr.demand_idx].demand[g, h, t])
                    i2 = model.col("I2", (g, h, t, k))
                    m_stock = float(policy.hospital_stock[h])
                    if dem > 0:
                        w = model.add_col("w_short", (g, h, t, k), 0, 1, True)
                        model.add_row("shortage_flag_on", (g, h, t, k),
                                      [(model.col("Q", (g, h, t, k)), 1.0), (w, -dem)],
                                      "<=", 0.0)
                        model.add_row("shortage_flag_off", (g, h, t, k),
                                      [(i2, 1.0), (w, m_stock)], "<=", m_stock)
                    if donors_of[g]:
                        m_sub = float(policy.substitution_in[h])
                        w = model.add_col("w_sub", (g, h, t, k), 0, 1, True)
                        coeffs = [(model.col("Sub", (g, gs, h, t, k)), 1.0)
                                  for gs in donors_of[g]]
                        coeffs.append((w, -m_sub))
                        model.add_row("subst_flag_on", (g, h, t, k), coeffs, "<=", 0.0)
                        model.add_row("subst_flag_off", (g, h, t, k),
                                      [(i2, 1.0), (w, m_stock)], "<=", m_stock)


def build_substitution_limit(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> None:
    """Substitutes drawn from a stock type cannot exceed its prior stock."""
    inst = instance
    pairs = _sub_pairs(inst)
    takers_of = {gs: [gd for (gd, g2) in pairs if g2 == gs] for gs in range(N_TYPES)}
    for gs in range(N_TYPES):
        if not takers_of[gs]:
            continue
        for h in range(inst.n_hospitals):
            for t in range(inst.n_periods):
                for k in range(len(model.triples)):
                    coeffs = [(model.col("Sub", (gd, gs, h, t, k)), 1.0)
                              for gd in takers_of[gs]]
                    if t == 0:
                        rhs = float(inst.initial_hospital_inventory[gs, h])
                    else:
                        coeffs.append((model.col("I2", (gs, h, t - 1, k)), -1.0))
                        rhs = 0.0
                    model.add_row("subst_prior_stock", (gs, h, t, k), coeffs, "<=", rhs)


def build_capacities(instance: Instance, scenario_set: ScenarioSet, model: MilpModel) -> None:
    """Facility inventory capacities and assignment-gated arc capacities."""
    inst = instance
    nT = inst.n_periods
    nK = len(model.triples)
    for c in range(inst.n_centers):
        for t in range(nT):
            for k in range(nK):
                coeffs = [(model.col("I", (g, c, t, k)), 1.0) for g in range(N_TYPES)]
                model.add_row("inv_cap_center", (c, t, k), coeffs, "<=", float(inst.center_cap[c]))
    for b in range(inst.n_banks):
        for t in range(nT):
            for k in range(nK):
                coeffs = [(model.col("I1", (g, b, t, k)), 1.0) for g in range(N_TYPES)]
                model.add_row("inv_cap_bank", (b, t, k), coeffs, "<=", float(inst.bank_cap[b]))
    for h in range(inst.n_hospitals):
        for t in range(nT):
            for k in range(nK):
                coeffs = [(model.col("I2", (g, h, t, k)), 1.0) for g in range(N_TYPES)]
                model.add_row("inv_cap_hospital", (h, t, k), coeffs, "<=", float(inst.hospital_cap[h]))
    for m in range(inst.n_mobiles):
        for c in range(inst.n_centers):
            for t in range(nT):
                for k in range(nK):
                    coeffs = [(model.col("x1", (g, m, c, t, k)), 1.0) for g in range(N_TYPES)]
                    coeffs.append((model.col("z2", (m, c, t)), -inst.transport_cap))
                    model.add_row("arc_cap_mobile_center", (m, c, t, k), coeffs, "<=", 0.0)
    for c in range(inst.n_centers):
        for b in range(inst.n_banks):
            for t in range(nT):
                for k in range(nK):
                    coeffs = [(model.col("x3", (g, c, b, t, k)), 1.0) for g in range(N_TYPES)]
                    coeffs.append((model.col("z3", (c, b, t)), -inst.transport_cap))
                    model.add_row("arc_cap_center_bank", (c, b, t, k), coeffs, "<=", 0.0)
    for b in range(inst.n_banks):
        for h in range(inst.n_hospitals):
            for t in range(nT):
                for k in range(nK):
                    coeffs = [(model.col("x4", (g, b, h, t, k)), 1.0) for g in range(N_TYPES)]
                    coeffs.append((model.col("z4", (b, h, t, k)), -inst.transport_cap))
                    model.add_row("arc_cap_bank_hospital", (b, h, t, k), coeffs, "<=", 0.0)


# ----------------------------------------------------------------------
# Orchestration


def build_model(instance: Instance, scenario_set: ScenarioSet, objective_mode: str = MODE_COST,
                epsilon: float | None = None, cost_cap: float | None = None,
                policy: BigMPolicy | None = None) -> MilpModel:
    """Assemble the full deterministic equivalent.

    Modes: ``cost`` minimizes expected total cost; ``service``
    maximizes the minimum hospital service level; ``service_floor``
    minimizes cost subject to the service level being at least
    ``epsilon``.  ``cost_cap`` optionally caps expected cost with an
    extra row (used for lexicographic solves).
    """
    violations = validate_instance(instance)
    violations += scenario_set.validate(instance)
    if violations:
        raise InvalidInstanceError(violations)
    if objective_mode not in (MODE_COST, MODE_SERVICE, MODE_SERVICE_FLOOR):
        raise ModelError(f"unknown objective mode {objective_mode!r}")
    if objective_mode == MODE_SERVICE_FLOOR and epsilon is None:
        raise ModelError("service_floor mode needs epsilon")

    policy = policy or BigMPolicy.from_instance(instance)
    model = MilpModel(sense="max" if objective_mode == MODE_SERVICE else "min")
    model.mode = objective_mode
    model.epsilon = epsilon
    model.triples = enumerate_triples(scenario_set)

    register_variables(instance, scenario_set, model)
    build_first_stage_assignment(instance, scenario_set, model)
    build_flow_processing(instance, scenario_set, model)
    build_outdating(instance, scenario_set, model, policy)
    build_inventory_balance(instance, scenario_set, model)
    build_complementarity(instance, scenario_set, model, policy)
    build_substitution_limit(instance, scenario_set, model)
    build_capacities(instance, scenario_set, model)

    if objective_mode == MODE_COST:
        build_cost_objective(instance, scenario_set, model)
    elif objective_mode == MODE_SERVICE:
        eta = build_service_objective(instance, scenario_set, model)
        model.obj[model.var(eta)] = 1.0
    else:
        eta = build_service_objective(instance, scenario_set, model)
        model.add_row("service_floor", (), [(model.var(eta), 1.0)], ">=", float(epsilon))
        build_cost_objective(instance, scenario_set, model)

    if cost_cap is not None:
        entries = cost_entries(instance, scenario_set, model)
        model.add_row("cost_cap", (), list(entries.items()), "<=", float(cost_cap))
    return model
