"""Scalar elastic descriptors, Hashin-Shtrikman bounds, and classification.

All formulas are the standard closed forms for cubic media in Voigt
notation (engineering shear).  Directional Young's modulus:
1/E(n) = S11 - 2(S11 - S12 - S44/2)(n1^2 n2^2 + n2^2 n3^2 + n3^2 n1^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .homog import Material

#: hydrostatic unit vector in Voigt space
_HYDRO = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]) / np.sqrt(3.0)


class DegenerateTensorError(ValueError):
    pass


@dataclass(frozen=True)
class CubicElastic:
    C11: float
    C12: float
    C44: float

    def stability_margins(self) -> tuple:
        """The three Voigt eigenvalue families (positive iff stable)."""
        return (self.C11 + 2 * self.C12, self.C11 - self.C12, self.C44)

    def is_stable(self, floor_frac: float = 1e-9) -> bool:
        floor = floor_frac * abs(self.C11)
        return all(m > floor for m in self.stability_margins())

    @property
    def voigt_matrix(self) -> np.ndarray:
        C = np.zeros((6, 6))
        C[:3, :3] = self.C12
        C[np.arange(3), np.arange(3)] = self.C11
        C[np.arange(3, 6), np.arange(3, 6)] = self.C44
        return C


@dataclass
class PropertyRecord:
    rho: float
    E100: float
    E111: float
    Emax: float
    Emin: float
    Emean: float
    dE: float
    Omega: float
    K: float
    G_c44: float
    G_prime: float
    G_hill: float
    nu100: float
    Z: float
    eigs: tuple  # 6 Voigt eigenvalues, ascending
    E_norm: float
    G_norm: float
    K_norm: float
    K_HSU: float
    G_HSU: float
    E_HSU: float
    C: CubicElastic = field(repr=False, default=None)
    flags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Thresholds:
    omega_isotropic: float = 0.05
    optimal_ratio: float = 0.9
    nu_auxetic: float = 0.0
    z_high: float = 20.0
    z_low: float = 0.05
    pentamode_eig_ratio: float = 100.0
    pentamode_cos: float = 0.999


def solid_moduli(material: Material) -> tuple:
    """(E_s, G_s, K_s) of the fully dense isotropic parent."""
    E, nu = material.E_s, material.nu_s
    return E, E / (2 * (1 + nu)), E / (3 * (1 - 2 * nu))


def compliance(C: CubicElastic) -> tuple:
    """(S11, S12, S44) of the cubic compliance tensor."""
    det = (C.C11 - C.C12) * (C.C11 + 2 * C.C12)
    if det == 0 or C.C44 == 0:
        raise DegenerateTensorError(
            f"singular cubic tensor C11={C.C11}, C12={C.C12}, C44={C.C44}"
        )
    S11 = (C.C11 + C.C12) / det
    S12 = -C.C12 / det
    S44 = 1.0 / C.C44
    return S11, S12, S44


def directional_E(C: CubicElastic, n) -> float:
    """Young's modulus along the unit direction n (MPa)."""
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise ValueError("direction must be a nonzero vector")
    n = n / norm
    S11, S12, S44 = compliance(C)
    quart = n[0] ** 2 * n[1] ** 2 + n[1] ** 2 * n[2] ** 2 + n[2] ** 2 * n[0] ** 2
    inv = S11 - 2 * (S11 - S12 - S44 / 2) * quart
    return 1.0 / inv


def hs_upper(material: Material, rho: float) -> tuple:
    """(K_HSU, G_HSU, E_HSU): Hashin-Shtrikman upper bounds for a porous solid."""
    if not (0 < rho <= 1):
        raise ValueError(f"rho must be in (0,1], got {rho}")
    _, G_s, K_s = solid_moduli(material)
    K_HSU = 4 * rho * K_s * G_s / (4 * G_s + 3 * (1 - rho) * K_s)
    G_HSU = G_s + (1 - rho) / (
        -1 / G_s + 6 * rho * (K_s + 2 * G_s) / (5 * G_s * (3 * K_s + 4 * G_s))
    )
    E_HSU = 9 * K_HSU * G_HSU / (3 * K_HSU + G_HSU)
    return K_HSU, G_HSU, E_HSU


def summarize(
    C: CubicElastic,
    rho: float,
    material: Material = Material(),
    thresholds: Thresholds = Thresholds(),
) -> PropertyRecord:
    """Full scalar descriptor record for one cubic stiffness tensor."""
    if rho <= 0:
        raise ValueError(f"rho must be positive for normalization, got {rho}")
    E100 = directional_E(C, (1, 0, 0))
    E111 = directional_E(C, (1, 1, 1))
    Emax, Emin = max(E100, E111), min(E100, E111)
    Emean = (Emax + Emin) / 2
    dE = (Emax - Emin) / 2
    K = (C.C11 + 2 * C.C12) / 3
    nu100 = C.C12 / (C.C11 + C.C12)
    Z = 2 * C.C44 / (C.C11 - C.C12)
    G_prime = (C.C11 - C.C12) / 2
    G_V = (C.C11 - C.C12 + 3 * C.C44) / 5
    G_R = 5 * (C.C11 - C.C12) * C.C44 / (4 * C.C44 + 3 * (C.C11 - C.C12))
    G_hill = (G_V + G_R) / 2
    eigs = tuple(sorted([C.C11 + 2 * C.C12, C.C11 - C.C12, C.C11 - C.C12] + [C.C44] * 3))
    E_s, G_s, K_s = solid_moduli(material)
    K_HSU, G_HSU, E_HSU = hs_upper(material, rho)
    rec = PropertyRecord(
        rho=rho,
        E100=E100,
        E111=E111,
        Emax=Emax,
        Emin=Emin,
        Emean=Emean,
        dE=dE,
        Omega=dE / Emean,
        K=K,
        G_c44=C.C44,
        G_prime=G_prime,
        G_hill=G_hill,
        nu100=nu100,
        Z=Z,
        eigs=eigs,
        E_norm=E100 / (E_s * rho),
        G_norm=G_hill / (G_s * rho),
        K_norm=K / (K_s * rho),
        K_HSU=K_HSU,
        G_HSU=G_HSU,
        E_HSU=E_HSU,
        C=C,
    )
    rec.flags = classify(rec, thresholds)
    return rec


def classify(record: PropertyRecord, thresholds: Thresholds = Thresholds()) -> dict:
    """Family flags for one property record (thresholds all configurable)."""
    t = thresholds
    C = record.C
    flags = {
        "degenerate": C is not None and not C.is_stable(),
        "isotropic": record.Omega <= t.omega_isotropic,
        "auxetic": record.nu100 <= t.nu_auxetic,
        "optimal": record.Emean / record.E_HSU >= t.optimal_ratio,
        "highly_anisotropic": record.Z >= t.z_high or record.Z <= t.z_low,
    }
    # pentamode: one dominant Voigt eigenvalue whose mode is hydrostatic
    if C is not None:
        w, v = np.linalg.eigh(C.voigt_matrix)
        top, second = w[-1], w[-2]
        cos = abs(float(v[:, -1] @ _HYDRO))
        flags["pentamode"] = bool(
            second > 0 and top >= t.pentamode_eig_ratio * second and cos >= t.pentamode_cos
        )
    else:
        flags["pentamode"] = False
    return flags
