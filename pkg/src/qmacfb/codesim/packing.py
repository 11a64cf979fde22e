"""Receiver packing conditions of the rate-splitting scheme and their reductions."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ensemble import CqJointState
from ..errors import InvalidRates, MissingLabel
from ..qinfo import mutual_information
from ..regions import general_bounds

MARGIN_TOL = 1e-9
BZ = ("Bbar", "Z1", "Z2")
ALL_INPUTS = ("U", "V1", "X1", "V2", "X2")
RATE_NAMES = ("R1'", "R1''", "R2'", "R2''")

# conditions dominated by another with the same bound and a larger rate sum
DOMINATED = frozenset({1, 2, 5, 6, 7, 8, 9, 11, 12, 13, 14})

__all__ = ["Condition", "PackingReport", "packing_rate_check", "DOMINATED", "MARGIN_TOL"]


@dataclass(frozen=True)
class Condition:
    """One rate constraint ``sum(rates over parts) <= bound``."""

    id: str
    parts: tuple
    rate: float
    bound: float
    dominated: bool = False

    @property
    def margin(self) -> float:
        return self.bound - self.rate

    @property
    def satisfied(self) -> bool:
        return self.margin >= -MARGIN_TOL

    def as_tuple(self) -> tuple:
        return (self.id, self.bound, self.satisfied, self.margin)

    def to_dict(self) -> dict:
        return {"id": self.id, "parts": list(self.parts), "rate": self.rate, "bound": self.bound,
                "satisfied": self.satisfied, "margin": self.margin, "dominated": self.dominated}


@dataclass
class PackingReport:
    """All receiver conditions, the transmitters' decoding conditions and two reduced systems.

    Iterating yields the fifteen receiver conditions in order.
    """

    conditions: list
    encoder: list
    reduced: list
    region: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.conditions)

    def __len__(self):
        return len(self.conditions)

    def __getitem__(self, i):
        return self.conditions[i]

    @staticmethod
    def _holds(conds) -> bool:
        return all(c.satisfied for c in conds)

    @property
    def packing_holds(self) -> bool:
        return self._holds(self.conditions)

    @property
    def encoder_holds(self) -> bool:
        return self._holds(self.encoder)

    @property
    def reduced_holds(self) -> bool:
        return self._holds(self.reduced)

    @property
    def region_holds(self) -> bool:
        return self._holds(self.region)

    @property
    def survivors(self) -> list:
        return [c for c in self.conditions if not c.dominated]

    def to_dict(self) -> dict:
        return {k: [c.to_dict() for c in getattr(self, k)] for k in ("conditions", "encoder", "reduced", "region")}


def _receiver_subsets():
    """Nonempty subsets of the four rate parts in the fixed B1..B15 order."""
    singles = [(0,), (2,), (1,), (3,)]
    pairs = [(0, 2), (0, 1), (0, 3), (2, 1), (2, 3), (1, 3)]
    triples = [(0, 2, 1), (0, 2, 3), (0, 1, 3), (2, 1, 3)]
    return singles + pairs + triples + [(0, 1, 2, 3)]


def packing_rate_check(joint: CqJointState, rates) -> PackingReport:
    """Evaluate every packing condition at ``rates = (R1', R1'', R2', R2'')``.

    Receiver condition for a part set L is ``sum_L R <= I(inputs carried by L;
    Bbar Z | everything else)``: if a cooperative part R' is wrong the cloud
    center is wrong and every codeword is fresh, so the bound is the full
    I(U V1 X1 V2 X2; Bbar Z); otherwise only the wrongly indexed satellites
    are fresh.  Satisfied means ``margin >= -1e-9``.
    """
    rates = tuple(float(r) for r in rates)
    if len(rates) != 4:
        raise InvalidRates(f"need (R1', R1'', R2', R2''), got {rates}")
    missing = [l for l in ALL_INPUTS + BZ if l not in joint.labels]
    if missing:
        raise MissingLabel(f"joint state lacks labels {missing}")
    mi = lambda a, b, c=(): mutual_information(joint, a, b, c)
    full = mi(ALL_INPUTS, BZ)
    direct = {
        (1,): mi("X1", BZ, ("U", "V1", "V2", "X2")),
        (3,): mi("X2", BZ, ("U", "V2", "V1", "X1")),
        (1, 3): mi(("X1", "X2"), BZ, ("U", "V1", "V2")),
    }
    conds = []
    for k, parts in enumerate(_receiver_subsets(), start=1):
        bound = full if (0 in parts or 2 in parts) else direct[parts]
        conds.append(Condition(f"B{k}", tuple(RATE_NAMES[i] for i in parts),
                               sum(rates[i] for i in parts), bound, k in DOMINATED))
    f1 = mi("V1", "Z2", ("U", "X2"))
    f2 = mi("V2", "Z1", ("U", "X1"))
    encoder = [Condition("E1", ("R1'",), rates[0], f1), Condition("E2", ("R2'",), rates[2], f2)]
    # V2 - (U, X2) - rest makes these conditionals exact simplifications
    reduced = [
        Condition("S1", ("R1''",), rates[1], mi("X1", BZ, ("U", "V1", "X2"))),
        Condition("S2", ("R2''",), rates[3], mi("X2", BZ, ("U", "V2", "X1"))),
        Condition("S3", ("R1''", "R2''"), rates[1] + rates[3], direct[(1, 3)]),
        Condition("S4", RATE_NAMES, sum(rates), mi(("X1", "X2"), BZ)),
    ]
    g = general_bounds(joint)
    r1, r2 = rates[0] + rates[1], rates[2] + rates[3]
    region = [
        Condition("T1", ("R1",), r1, g.b1),
        Condition("T2", ("R2",), r2, g.b2),
        Condition("T3", ("R1", "R2"), r1 + r2, g.bsum_layered),
        Condition("T4", ("R1", "R2"), r1 + r2, g.bsum),
    ]
    return PackingReport(conds, encoder, reduced, region)
