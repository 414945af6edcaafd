"""Exact symmetry operators for the 36 cubic space groups (195-230).

Operators are affine maps x -> W.x + t/4 on the unit cell [0,1)^3, with W a
signed permutation matrix and t an integer translation in quarter-cell units
(mod 4).  Each group is stored as a short generator list transcribed from the
standard generator-string encoding of De Graef & McHenry ("Structure of
Materials"; the same table used by EMsoft), and expanded to the full coset
list by closure at load time.  Groups with two origin choices use origin
choice 2 (origin at the inversion center).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MIN_GROUP = 195
MAX_GROUP = 230

# Largest cubic group order (Fm-3m family, F-centred, point group m-3m).
MAX_GROUP_ORDER = 192

POINT_GROUP_ORDER = {"23": 12, "m-3": 24, "432": 24, "-43m": 24, "m-3m": 48}
CENTERING_MULTIPLICITY = {"P": 1, "I": 2, "F": 4}


class SpaceGroupError(ValueError):
    """Raised for space group numbers outside the cubic range."""


class GroupClosureError(RuntimeError):
    """Raised when generator closure exceeds the largest cubic group order."""


@dataclass(frozen=True)
class SymOp:
    """One affine symmetry operator: x -> W.x + t/4 (t integer mod 4)."""

    w: tuple  # 9 ints, row-major 3x3 signed permutation
    t: tuple  # 3 ints in {0,1,2,3}, quarter-cell translation

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.w, dtype=np.int64).reshape(3, 3)

    @property
    def translation(self) -> np.ndarray:
        return np.array(self.t, dtype=np.int64)

    def compose(self, other: "SymOp") -> "SymOp":
        """Return self o other (apply ``other`` first)."""
        # plain integer arithmetic: this is the closure hot path
        w1, w2, t2, t1 = self.w, other.w, other.t, self.t
        w = []
        t = []
        for i in range(3):
            a, b, c = w1[3 * i], w1[3 * i + 1], w1[3 * i + 2]
            w += [
                a * w2[0] + b * w2[3] + c * w2[6],
                a * w2[1] + b * w2[4] + c * w2[7],
                a * w2[2] + b * w2[5] + c * w2[8],
            ]
            t.append((a * t2[0] + b * t2[1] + c * t2[2] + t1[i]) % 4)
        return SymOp(tuple(w), tuple(t))

    def inverse(self) -> "SymOp":
        wi = self.matrix.T  # signed permutations are orthogonal
        t = (-wi @ self.translation) % 4
        return SymOp(tuple(wi.ravel()), tuple(int(x) for x in t))

    def is_identity(self) -> bool:
        return self == identity()

    def validate(self) -> None:
        w = self.matrix
        if sorted(np.abs(w).sum(axis=0)) != [1, 1, 1]:
            raise ValueError(f"W columns are not a signed permutation: {self.w}")
        if sorted(np.abs(w).sum(axis=1)) != [1, 1, 1]:
            raise ValueError(f"W rows are not a signed permutation: {self.w}")
        if int(round(np.linalg.det(w))) not in (1, -1):
            raise ValueError(f"det(W) not +-1: {self.w}")
        if any(c not in (0, 1, 2, 3) for c in self.t):
            raise ValueError(f"translation not in quarter units mod 4: {self.t}")


def identity() -> SymOp:
    return SymOp((1, 0, 0, 0, 1, 0, 0, 0, 1), (0, 0, 0))


def closure(generators) -> frozenset:
    """Smallest composition-closed set of SymOps containing the generators.

    Aborts with GroupClosureError past 192 elements (corrupt generator data
    would otherwise loop through the 4^3 translation lattice).
    """
    for g in generators:
        g.validate()
    gens = list(generators)
    ops = {identity()}
    frontier = list(gens)
    ops.update(frontier)
    # breadth-first walk of the Cayley graph: every element is some word in
    # the generators, so composing the frontier with them suffices
    while frontier:
        new = []
        for a in frontier:
            for b in gens:
                c = a.compose(b)
                if c not in ops:
                    ops.add(c)
                    new.append(c)
            if len(ops) > MAX_GROUP_ORDER:
                raise GroupClosureError(
                    f"closure exceeded {MAX_GROUP_ORDER} elements; generator data corrupt"
                )
        frontier = new
    return frozenset(ops)


@dataclass(frozen=True)
class SpaceGroup:
    number: int
    hm_symbol: str
    bravais: str  # P | I | F
    point_group: str  # 23 | m-3 | 432 | -43m | m-3m
    ops: tuple  # full coset expansion, deterministic order

    @property
    def order(self) -> int:
        return len(self.ops)


# --------------------------------------------------------------------------
# Generator data.
#
# Encoding per group: "<inv><gen blocks>[:shift]"
#   inv         '1' if an inversion generator through the encoded center is
#               present in the blocks or implied; here inversion is always an
#               explicit 'h' block, so inv is not used and omitted.
#   gen block   4 chars: rotation letter + three translation letters.
#   :shift      origin-choice-2 shift (eighth-cell units, applied as
#               t -> t + W.s - s), present only for two-origin groups.
#
# Rotation letters (axis conventions of the standard table):
#   a identity   b 2[001]   c 2[010]   d 3[111] (x,y,z)->(z,x,y)
#   e 2[110] (y,x,-z)       h inversion            l m(110) (y,x,z)
# Translation letters (fractions of the cell edge):
#   O 0   B 1/4   D 1/2   F 3/4
# --------------------------------------------------------------------------

_ROT = {
    "a": (1, 0, 0, 0, 1, 0, 0, 0, 1),
    "b": (-1, 0, 0, 0, -1, 0, 0, 0, 1),
    "c": (-1, 0, 0, 0, 1, 0, 0, 0, -1),
    "d": (0, 0, 1, 1, 0, 0, 0, 1, 0),
    "e": (0, 1, 0, 1, 0, 0, 0, 0, -1),
    "h": (-1, 0, 0, 0, -1, 0, 0, 0, -1),
    "l": (0, 1, 0, 1, 0, 0, 0, 0, 1),
}

# Translation fractions in eighth-cell units.
_TRA = {"O": 0, "B": 2, "D": 4, "F": 6, "X": -3, "Y": -2, "Z": -1}

_GENERATOR_TABLE = {
    195: "bOOOcOOOdOOO",
    196: "aODDaDODbOOOcOOOdOOO",
    197: "aDDDbOOOcOOOdOOO",
    198: "bDODcODDdOOO",
    199: "aDDDbDODcODDdOOO",
    200: "bOOOcOOOdOOOhOOO",
    201: "bOOOcOOOdOOOhDDD:YYY",
    202: "aODDaDODbOOOcOOOdOOOhOOO",
    203: "aODDaDODbOOOcOOOdOOOhBBB:ZZZ",
    204: "aDDDbOOOcOOOdOOOhOOO",
    205: "bDODcODDdOOOhOOO",
    206: "aDDDbDODcODDdOOOhOOO",
    207: "bOOOcOOOdOOOeOOO",
    208: "bOOOcOOOdOOOeDDD",
    209: "aODDaDODbOOOcOOOdOOOeOOO",
    210: "aODDaDODbODDcDDOdOOOeFBF",
    211: "aDDDbOOOcOOOdOOOeOOO",
    212: "bDODcODDdOOOeBFF",
    213: "bDODcODDdOOOeFBB",
    214: "aDDDbDODcODDdOOOeFBB",
    215: "bOOOcOOOdOOOlOOO",
    216: "aODDaDODbOOOcOOOdOOOlOOO",
    217: "aDDDbOOOcOOOdOOOlOOO",
    218: "bOOOcOOOdOOOlDDD",
    219: "aODDaDODbOOOcOOOdOOOlDDD",
    220: "aDDDbDODcODDdOOOlBBB",
    221: "bOOOcOOOdOOOeOOOhOOO",
    222: "bOOOcOOOdOOOeOOOhDDD:YYY",
    223: "bOOOcOOOdOOOeDDDhOOO",
    224: "bOOOcOOOdOOOeDDDhDDD:YYY",
    225: "aODDaDODbOOOcOOOdOOOeOOOhOOO",
    226: "aODDaDODbOOOcOOOdOOOeDDDhOOO",
    227: "aODDaDODbODDcDDOdOOOeFBFhBBB:ZZZ",
    228: "aODDaDODbODDcDDOdOOOeFBFhFFF:XXX",
    229: "aDDDbOOOcOOOdOOOeOOOhOOO",
    230: "aDDDbDODcODDdOOOeFBBhOOO",
}

_HM_SYMBOL = {
    195: "P23", 196: "F23", 197: "I23", 198: "P213", 199: "I213",
    200: "Pm-3", 201: "Pn-3", 202: "Fm-3", 203: "Fd-3", 204: "Im-3",
    205: "Pa-3", 206: "Ia-3",
    207: "P432", 208: "P4232", 209: "F432", 210: "F4132", 211: "I432",
    212: "P4332", 213: "P4132", 214: "I4132",
    215: "P-43m", 216: "F-43m", 217: "I-43m", 218: "P-43n", 219: "F-43c",
    220: "I-43d",
    221: "Pm-3m", 222: "Pn-3n", 223: "Pm-3n", 224: "Pn-3m", 225: "Fm-3m",
    226: "Fm-3c", 227: "Fd-3m", 228: "Fd-3c", 229: "Im-3m", 230: "Ia-3d",
}

# Groups with two origin choices; stored generators encode choice 1 and the
# :shift suffix moves them onto choice 2 (origin at the inversion center).
TWO_ORIGIN_GROUPS = (201, 203, 222, 224, 227, 228)


def _check_range(number: int) -> None:
    if not (MIN_GROUP <= int(number) <= MAX_GROUP):
        raise SpaceGroupError(f"space group {number} is not cubic (expected 195..230)")


def point_group_of(number: int) -> str:
    _check_range(number)
    n = int(number)
    if n <= 199:
        return "23"
    if n <= 206:
        return "m-3"
    if n <= 214:
        return "432"
    if n <= 220:
        return "-43m"
    return "m-3m"


def bravais_of(number: int) -> str:
    _check_range(number)
    return _HM_SYMBOL[int(number)][0]


def generators_of(number: int) -> list:
    """Decode the embedded generator blocks for one group (origin choice 2)."""
    _check_range(number)
    enc = _GENERATOR_TABLE[int(number)]
    if ":" in enc:
        enc, shift_enc = enc.split(":")
        shift = np.array([-_TRA[c] for c in shift_enc], dtype=np.int64)  # eighths
    else:
        shift = np.zeros(3, dtype=np.int64)

    gens = []
    for i in range(0, len(enc), 4):
        w = np.array(_ROT[enc[i]], dtype=np.int64).reshape(3, 3)
        t8 = np.array([_TRA[c] for c in enc[i + 1 : i + 4]], dtype=np.int64)
        t8 = t8 + w @ shift - shift  # move origin onto the inversion center
        if np.any(t8 % 2):
            raise GroupClosureError(
                f"group {number}: translation not a quarter multiple after origin shift"
            )
        t = (t8 // 2) % 4
        gens.append(SymOp(tuple(w.ravel()), tuple(int(x) for x in t)))
    return gens


@lru_cache(maxsize=None)
def group(number: int) -> SpaceGroup:
    """Fully expanded cubic space group; cached and immutable."""
    _check_range(number)
    n = int(number)
    ops = sorted(closure(generators_of(n)), key=lambda op: (op.w, op.t))
    sg = SpaceGroup(
        number=n,
        hm_symbol=_HM_SYMBOL[n],
        bravais=bravais_of(n),
        point_group=point_group_of(n),
        ops=tuple(ops),
    )
    expected = POINT_GROUP_ORDER[sg.point_group] * CENTERING_MULTIPLICITY[sg.bravais]
    if sg.order != expected:
        raise GroupClosureError(
            f"group {n}: closure gave {sg.order} ops, expected {expected}"
        )
    return sg


def all_groups():
    """All 36 cubic space groups in number order."""
    return [group(n) for n in range(MIN_GROUP, MAX_GROUP + 1)]
