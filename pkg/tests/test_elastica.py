"""Unit tests for elastic descriptors, bounds, and classification."""

import numpy as np
import pytest

from cubatlas import elastica as el
from cubatlas.homog import Material

MAT = Material()
E_S, G_S, K_S = el.solid_moduli(MAT)

# closed-form isotropic constants of the parent material
C_SOLID = el.CubicElastic(
    C11=E_S * (1 - MAT.nu_s) / ((1 + MAT.nu_s) * (1 - 2 * MAT.nu_s)),
    C12=E_S * MAT.nu_s / ((1 + MAT.nu_s) * (1 - 2 * MAT.nu_s)),
    C44=E_S / (2 * (1 + MAT.nu_s)),
)

# near-degenerate tensor whose Voigt eigenvalues are
# {27.28, 0.22, 0.22, 0.09, 0.09, 0.09}
C_PENTA = el.CubicElastic(C11=27.72 / 3, C12=27.72 / 3 - 0.22, C44=0.09)

# frozen golden values: high-precision evaluation of the bound formulas
# at rho = 0.5 for the default material (40-digit arithmetic)
K_HSU_HALF = 46015.71268237935
G_HSU_HALF = 27221.50445018662
E_HSU_HALF = 68213.49880839966


def test_compliance_isotropic():
    S11, S12, S44 = el.compliance(C_SOLID)
    assert abs(1 / S11 - 205000) < 0.001 * 205000
    assert abs(-S12 / S11 - MAT.nu_s) < 1e-12
    # isotropy: S44 = 2(S11 - S12)
    assert abs(S44 - 2 * (S11 - S12)) < 1e-12 * S44


def test_compliance_round_trip():
    S11, S12, S44 = el.compliance(C_PENTA)
    det = (S11 - S12) * (S11 + 2 * S12)
    C11 = (S11 + S12) / det
    C12 = -S12 / det
    C44 = 1 / S44
    assert abs(C11 - C_PENTA.C11) < 1e-12 * abs(C_PENTA.C11)
    assert abs(C12 - C_PENTA.C12) < 1e-12 * abs(C_PENTA.C12)
    assert abs(C44 - C_PENTA.C44) < 1e-12 * abs(C_PENTA.C44)


def test_compliance_singular():
    with pytest.raises(el.DegenerateTensorError):
        el.compliance(el.CubicElastic(10.0, 10.0, 1.0))
    with pytest.raises(el.DegenerateTensorError):
        el.compliance(el.CubicElastic(10.0, -5.0, 1.0))


def test_directional_E_special_directions():
    S11, S12, S44 = el.compliance(C_PENTA)
    assert abs(el.directional_E(C_PENTA, (1, 0, 0)) - 1 / S11) < 1e-12 / S11
    e111 = el.directional_E(C_PENTA, (1, 1, 1))
    assert abs(e111 - 3 / (S11 + 2 * S12 + S44)) < 1e-12 * e111


def test_directional_E_zero_vector():
    with pytest.raises(ValueError):
        el.directional_E(C_SOLID, (0, 0, 0))


def test_isotropic_direction_independence():
    rng = np.random.Generator(np.random.Philox(key=np.uint64([11, 0])))
    e100 = el.directional_E(C_SOLID, (1, 0, 0))
    for _ in range(100):
        n = rng.standard_normal(3)
        e = el.directional_E(C_SOLID, n)
        assert abs(e - e100) <= 1e-10 * e100


def test_summarize_solid_normalizations():
    rec = el.summarize(C_SOLID, rho=1.0, material=MAT)
    assert abs(rec.E_norm - 1) < 1e-9
    assert abs(rec.G_norm - 1) < 1e-9
    assert abs(rec.K_norm - 1) < 1e-9
    assert rec.Omega < 1e-12
    assert abs(rec.Z - 1) < 1e-12
    assert abs(rec.nu100 - 0.29) < 1e-12
    assert rec.flags["isotropic"]
    assert rec.flags["optimal"]
    assert not rec.flags["auxetic"]
    assert not rec.flags["pentamode"]


def test_pentamode_eigenvalues_and_eigenvector():
    rec = el.summarize(C_PENTA, rho=0.1, material=MAT)
    assert np.allclose(rec.eigs, (0.09, 0.09, 0.09, 0.22, 0.22, 27.28), atol=1e-12)
    # eigenvalues match a generic symmetric eigensolver
    w = np.linalg.eigvalsh(C_PENTA.voigt_matrix)
    assert np.allclose(sorted(rec.eigs), w, atol=1e-10)
    # dominant mode is hydrostatic, approx (0.58, 0.58, 0.58, 0, 0, 0)
    _, v = np.linalg.eigh(C_PENTA.voigt_matrix)
    assert np.allclose(np.abs(v[:, -1]), [1 / np.sqrt(3)] * 3 + [0, 0, 0], atol=1e-9)
    assert rec.flags["pentamode"]  # 27.28 / 0.22 = 124 >= 100


def test_classify_thresholds():
    rec = el.summarize(C_PENTA, rho=0.1, material=MAT)
    rec.Omega = 0.03
    rec.nu100 = -0.2
    flags = el.classify(rec)
    assert flags["isotropic"] and flags["auxetic"]
    rec.Z = 25.0
    assert el.classify(rec)["highly_anisotropic"]
    rec.Z = 0.04
    assert el.classify(rec)["highly_anisotropic"]
    rec.Z = 1.0
    assert not el.classify(rec)["highly_anisotropic"]


def test_hs_upper_solid_limit():
    K, G, E = el.hs_upper(MAT, 1.0)
    assert abs(K - K_S) < 1e-9 * K_S
    assert abs(G - G_S) < 1e-9 * G_S
    assert abs(E - E_S) < 1e-9 * E_S


def test_hs_upper_vanishing_limit():
    K, G, E = el.hs_upper(MAT, 1e-9)
    assert K < 1e-3 * K_S and G < 1e-3 * G_S and E < 1e-3 * E_S


def test_hs_upper_golden_half():
    K, G, E = el.hs_upper(MAT, 0.5)
    assert abs(K - K_HSU_HALF) < 1e-9 * K_HSU_HALF
    assert abs(G - G_HSU_HALF) < 1e-9 * G_HSU_HALF
    assert abs(E - E_HSU_HALF) < 1e-9 * E_HSU_HALF


def test_hs_upper_domain():
    with pytest.raises(ValueError):
        el.hs_upper(MAT, 0.0)
    with pytest.raises(ValueError):
        el.hs_upper(MAT, 1.5)


def test_scaling_covariance():
    lam = 3.7
    scaled = el.CubicElastic(lam * C_PENTA.C11, lam * C_PENTA.C12, lam * C_PENTA.C44)
    a = el.summarize(C_PENTA, rho=0.2, material=MAT)
    b = el.summarize(scaled, rho=0.2, material=MAT)
    for name in ("E100", "E111", "K", "G_hill", "G_c44", "G_prime"):
        assert abs(getattr(b, name) - lam * getattr(a, name)) < 1e-9 * abs(
            lam * getattr(a, name)
        )
    for name in ("nu100", "Z", "Omega"):
        assert abs(getattr(b, name) - getattr(a, name)) < 1e-12
    for key in ("isotropic", "auxetic", "highly_anisotropic", "pentamode"):
        assert a.flags[key] == b.flags[key]


def test_omega_in_unit_interval():
    rng = np.random.Generator(np.random.Philox(key=np.uint64([13, 0])))
    for _ in range(50):
        c44 = float(rng.uniform(0.1, 100))
        c11 = float(rng.uniform(1, 200))
        c12 = float(rng.uniform(-c11 / 2 * 0.99, c11 * 0.99))
        C = el.CubicElastic(c11, c12, c44)
        if not C.is_stable():
            continue
        rec = el.summarize(C, rho=0.3, material=MAT)
        assert 0 <= rec.Omega < 1
        assert rec.Emin <= rec.Emean <= rec.Emax


def test_degenerate_flagging():
    C = el.CubicElastic(10.0, 10.0 - 1e-12, 1.0)
    assert not C.is_stable()
    rec = el.summarize(C, rho=0.2, material=MAT)
    assert rec.flags["degenerate"]


def test_summarize_rejects_zero_rho():
    with pytest.raises(ValueError):
        el.summarize(C_SOLID, rho=0.0, material=MAT)
