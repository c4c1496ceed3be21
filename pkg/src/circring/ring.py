"""Charge-basis model of a three-junction superconducting ring coupled to waveguides.

Two islands carry independent charge degrees of freedom after the total-charge
mode is eliminated; the third island's charge is fixed by charge conservation.
Everything here works in units of a reference Josephson energy (hbar = 1), so
eigenvalues double as transition frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.constants import e as ELEMENTARY_CHARGE, h as PLANCK_H, k as BOLTZMANN_K
from scipy.linalg import eigh
from scipy.sparse import lil_matrix, csr_matrix
from scipy.sparse.linalg import eigsh

#: Resistance quantum h/e^2 in ohms.
KLITZING_OHM = PLANCK_H / ELEMENTARY_CHARGE**2

#: (2e)^2 / h expressed in fF * GHz, so that (2e)^2/C for C in fF comes out in GHz.
_COOPER_CHARGING_FF_GHZ = (2.0 * ELEMENTARY_CHARGE) ** 2 / PLANCK_H / 1e-15 / 1e9


class TruncationError(RuntimeError):
    """Charge basis too small for the requested model."""


@dataclass(frozen=True)
class CircuitParams:
    """Fabrication-level constants of the ring.

    ej        : per-junction Josephson energies, units of the reference energy.
    cj, cx, cc: junction, gate and waveguide-coupling capacitances in fF.
    zwg       : waveguide characteristic impedance in ohm.
    gap       : superconducting gap, in the unit declared by gap_unit
                ("ej" for reference-energy units, "kelvin" for k_B * kelvin).
    t_base    : base (fridge) temperature in kelvin.
    t_qp      : effective quasiparticle temperature in kelvin.
    ej_ref_ghz: absolute scale of the reference energy, as a frequency in GHz.
    ecs_ratio : optional override of the charging-to-Josephson ratio; when None
                the ratio is derived from the capacitances and ej_ref_ghz.
    """

    ej: tuple[float, float, float] = (1.0, 1.0, 1.0)
    cj: float = 5.76
    cx: float = 5.95
    cc: float = 10.60
    zwg: float = 50.0
    gap: float = 0.0
    gap_unit: str = "ej"
    t_base: float = 0.020
    t_qp: float = 0.200
    ej_ref_ghz: float = 12.92
    ecs_ratio: Optional[float] = None

    def __post_init__(self):
        if min(self.cj, self.cx, self.cc) <= 0:
            raise ValueError("capacitances must be positive")
        if self.zwg <= 0:
            raise ValueError("zwg must be positive")
        if min(self.ej) <= 0:
            raise ValueError("Josephson energies must be positive")
        if self.gap_unit not in ("ej", "kelvin"):
            raise ValueError(f"unknown gap_unit {self.gap_unit!r}")

    @property
    def kelvin_to_ej(self) -> float:
        """Conversion factor: k_B * (1 kelvin) in units of the reference energy."""
        return BOLTZMANN_K / (PLANCK_H * self.ej_ref_ghz * 1e9)

    @property
    def gap_ej(self) -> float:
        """Superconducting gap in reference-energy units."""
        if self.gap_unit == "kelvin":
            return self.gap * self.kelvin_to_ej
        return self.gap

    @property
    def c_sigma(self) -> float:
        """Total island capacitance 3*cj + cx + cc in fF."""
        return 3.0 * self.cj + self.cx + self.cc

    @property
    def e_csigma_ghz(self) -> float:
        """Charging energy (2e)^2/C_sigma as a frequency in GHz."""
        return _COOPER_CHARGING_FF_GHZ / self.c_sigma

    @property
    def ecs(self) -> float:
        """Charging-to-Josephson energy ratio used in the Hamiltonian."""
        if self.ecs_ratio is not None:
            return self.ecs_ratio
        return self.e_csigma_ghz / self.ej_ref_ghz

    @property
    def bias_mix(self) -> tuple[float, float]:
        """Capacitance mixing coefficients (c1, c2) entering the rescaled biases."""
        c1 = self.cj / (self.cx + self.cc)
        return c1, 1.0 + c1

    def with_ej(self, ej: tuple[float, float, float]) -> "CircuitParams":
        from dataclasses import replace as _replace
        return _replace(self, ej=tuple(float(x) for x in ej))


@dataclass(frozen=True)
class BiasPoint:
    """The external control knobs: flux, three charge biases, total charge, drive."""

    phi_x: float = 0.0
    nx: tuple[float, float, float] = (0.0, 0.0, 0.0)
    n0: int = 0
    omega_d: Optional[float] = None

    def __post_init__(self):
        if int(self.n0) != self.n0:
            raise ValueError("n0 must be an integer number of Cooper pairs")

    def replace(self, **kw) -> "BiasPoint":
        data = {"phi_x": self.phi_x, "nx": self.nx, "n0": self.n0,
                "omega_d": self.omega_d}
        data.update(kw)
        data["nx"] = tuple(float(x) for x in data["nx"])
        return BiasPoint(**data)


@dataclass(frozen=True)
class TruncationSpec:
    """Charge-basis cutoff and how much eigen-data to keep.

    n_max counts Cooper pairs; the single-electron basis doubles the window so
    its even-even sublattice reproduces the Cooper-pair lattice exactly.
    """

    n_max: int = 12
    k_levels: int = 4
    basis_kind: str = "cooper-pair"

    def __post_init__(self):
        if self.k_levels < 2:
            raise ValueError("k_levels must be at least 2")
        if self.n_max < 2:
            raise ValueError("n_max too small")
        if self.basis_kind not in ("cooper-pair", "single-electron"):
            raise ValueError(f"unknown basis_kind {self.basis_kind!r}")


@dataclass(frozen=True)
class RingModel:
    """Built and diagonalized ring model.

    eigenvalues are shifted so the ground state sits exactly at zero; the raw
    ground energy is kept in ground_energy for cross-model energy differences.
    """

    params: CircuitParams
    bias: BiasPoint
    trunc: TruncationSpec
    hamiltonian: object            # dense ndarray (cooper-pair) or CSR (single-electron)
    q_diagonals: np.ndarray        # (3, dim) real diagonals of the coupling operators
    rescaled_bias: tuple[float, float, float]
    eigenvalues: np.ndarray        # ascending, eigenvalues[0] == 0.0
    eigenvectors: np.ndarray       # dim x (k_levels+1), gauge fixed
    ground_energy: float
    boundary_population: float

    @property
    def q_ops(self) -> list[np.ndarray]:
        """Coupling charge operators as explicit (diagonal) matrices."""
        return [np.diag(d) for d in self.q_diagonals]

    @property
    def transition_energies(self) -> np.ndarray:
        """omega_k for k = 1..k_levels."""
        return self.eigenvalues[1:]


def rescaled_charge_biases(params: CircuitParams, bias: BiasPoint) -> tuple[float, float, float]:
    """Effective charge offsets seen by the coupling operators.

    These mix the applied biases and the conserved total charge through the
    capacitance network. They shift the q operators only by constants, so they
    never affect off-diagonal matrix elements; they are kept because the
    operator sum identity q1 + q2 + q3 = (sum of offsets) * identity is exact.
    """
    c1, c2 = params.bias_mix
    n0 = float(bias.n0)
    nx1, nx2, nx3 = bias.nx
    off1 = c1 * (n0 - nx2 - nx3) - c2 * nx1
    off2 = c1 * (n0 - nx1 - nx3) - c2 * nx2
    off3 = c2 * (n0 - nx3) - c1 * (nx1 + nx2)
    return off1, off2, off3


def _charge_lattice(n_max: int):
    """1-d charge coordinates and the flattened 2-d lattice (row-major in n1)."""
    n = np.arange(-n_max, n_max + 1)
    n1 = np.repeat(n, n.size)
    n2 = np.tile(n, n.size)
    return n, n1, n2


def _gauge_fix(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude component is real positive.

    Ties in magnitude resolve to the lowest basis index (argmax behaviour).
    """
    out = vectors.copy()
    for k in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, k])))
        phase = out[idx, k]
        if phase != 0:
            out[:, k] *= np.abs(phase) / phase
    return out


def _build_cooper(params: CircuitParams, bias: BiasPoint, trunc: TruncationSpec):
    n_max = trunc.n_max
    dim1 = 2 * n_max + 1
    dim = dim1 * dim1
    _, n1, n2 = _charge_lattice(n_max)

    ecs = params.ecs
    half_a = 0.5 * (bias.n0 + bias.nx[0] - bias.nx[2])
    half_b = 0.5 * (bias.n0 + bias.nx[1] - bias.nx[2])

    h = np.zeros((dim, dim), dtype=complex)
    diag = ecs * ((n1 - half_a) ** 2 + (n2 + half_b) ** 2 - n1 * n2)
    h[np.arange(dim), np.arange(dim)] = diag

    ej1, ej2, ej3 = params.ej
    phase = np.exp(-1j * bias.phi_x / 3.0)

    # Josephson tunneling: each cosine moves one Cooper pair.  Row-major layout
    # means +dim1 raises n1 by one and +1 raises n2 by one.
    idx = np.arange(dim)
    ok1 = n1 < n_max
    ok2 = n2 < n_max
    src = idx[ok1]
    h[src + dim1, src] += -0.5 * ej1 * phase
    src = idx[ok2]
    h[src + 1, src] += -0.5 * ej2 * phase
    both = ok1 & ok2
    src = idx[both]
    h[src + dim1 + 1, src] += -0.5 * ej3 * np.conj(phase)

    h += np.conj(h.T) - np.diag(diag)
    return h, n1.astype(float), n2.astype(float), (np.abs(n1) == n_max) | (np.abs(n2) == n_max)


def _build_single_electron(params: CircuitParams, bias: BiasPoint, trunc: TruncationSpec):
    # Electron-number lattice: twice the Cooper window per axis; pair tunneling
    # moves charges in steps of two electrons.
    ne_max = 2 * trunc.n_max
    dim1 = 2 * ne_max + 1
    dim = dim1 * dim1
    _, m1, m2 = _charge_lattice(ne_max)
    n1 = m1 / 2.0
    n2 = m2 / 2.0

    ecs = params.ecs
    half_a = 0.5 * (bias.n0 + bias.nx[0] - bias.nx[2])
    half_b = 0.5 * (bias.n0 + bias.nx[1] - bias.nx[2])

    h = lil_matrix((dim, dim), dtype=complex)
    diag = ecs * ((n1 - half_a) ** 2 + (n2 + half_b) ** 2 - n1 * n2)
    h.setdiag(diag)

    ej1, ej2, ej3 = params.ej
    phase = np.exp(-1j * bias.phi_x / 3.0)
    idx = np.arange(dim)
    ok1 = m1 <= ne_max - 2
    ok2 = m2 <= ne_max - 2

    src = idx[ok1]
    h[src + 2 * dim1, src] = -0.5 * ej1 * phase
    src = idx[ok2]
    h[src + 2, src] = -0.5 * ej2 * phase
    src = idx[ok1 & ok2]
    h[src + 2 * dim1 + 2, src] = -0.5 * ej3 * np.conj(phase)

    h = csr_matrix(h)
    h = h + h.conj().T - csr_matrix((diag, (idx, idx)), shape=(dim, dim))
    boundary = (np.abs(m1) >= ne_max - 1) | (np.abs(m2) >= ne_max - 1)
    return h, n1, n2, boundary


def build_ring_model(params: CircuitParams, bias: BiasPoint,
                     trunc: TruncationSpec = TruncationSpec()) -> RingModel:
    """Build and diagonalize the ring Hamiltonian and coupling operators.

    The kinetic (charging) part is E_C * ((n1 - A)^2 + (n2 + B)^2 - n1*n2) with
    A and B fixed by the total charge and the bias differences; the three
    Josephson terms carry flux phases phi_x/3 each, arranged so the total
    phase around the ring is phi_x. Per-junction energies params.ej allow the
    asymmetric (disordered) generalization.

    Raises TruncationError when the retained eigenstates put more than 1e-10
    population on the boundary rows of the charge window.
    """
    if trunc.basis_kind == "cooper-pair":
        h, n1, n2, boundary = _build_cooper(params, bias, trunc)
        n_eig = min(max(trunc.k_levels, 4) + 1, h.shape[0])
        w, v = eigh(h, subset_by_index=[0, n_eig - 1])
    else:
        h, n1, n2, boundary = _build_single_electron(params, bias, trunc)
        n_eig = max(trunc.k_levels, 4) + 1
        w, v = eigsh(h, k=n_eig, which="SA")
        order = np.argsort(w)
        w, v = w[order], v[:, order]

    v = _gauge_fix(v)
    ground = float(w[0])
    shifted = w - ground
    shifted[0] = 0.0

    off1, off2, off3 = rescaled_charge_biases(params, bias)
    # q3 is defined through the charge-conservation identity
    # q3 = -q1 - q2 + (sum of offsets), making that identity hold bitwise.
    q1_diag = n1 + off1
    q2_diag = -n2 + off2
    q3_diag = (off1 + off2 + off3) - q1_diag - q2_diag
    q_diag = np.vstack([q1_diag, q2_diag, q3_diag])

    pop = float(np.max(np.sum(np.abs(v[boundary, :]) ** 2, axis=0)))
    if pop >= 1e-10:
        raise TruncationError(
            f"boundary population {pop:.2e} at n_max={trunc.n_max}; increase n_max")

    return RingModel(
        params=params, bias=bias, trunc=trunc, hamiltonian=h,
        q_diagonals=q_diag, rescaled_bias=(off1, off2, off3),
        eigenvalues=shifted, eigenvectors=v, ground_energy=ground,
        boundary_population=pop,
    )


def coupling_matrix_elements(model: RingModel, k_levels: Optional[int] = None) -> np.ndarray:
    """Ground-to-excited matrix elements <0| q_j |k>.

    Returns a complex (3, k_levels) array; magnitudes are gauge independent,
    phases follow the deterministic eigenvector gauge.
    """
    k = model.trunc.k_levels if k_levels is None else k_levels
    if k + 1 > model.eigenvectors.shape[1]:
        raise ValueError(f"k_levels={k} exceeds retained spectrum")
    ground = model.eigenvectors[:, 0]
    excited = model.eigenvectors[:, 1:k + 1]
    out = np.empty((3, k), dtype=complex)
    for j in range(3):
        bra = ground.conj() * model.q_diagonals[j]
        out[j] = bra @ excited
    return out


def waveguide_coupling(params: CircuitParams, omega_d: float) -> float:
    """Waveguide-ring coupling rate at the drive frequency, units of E_J.

    Gamma = 16 (zwg / R_K) (cc / c_sigma)^2 omega_d.
    """
    if omega_d <= 0:
        raise ValueError("omega_d must be positive")
    return 16.0 * (params.zwg / KLITZING_OHM) * (params.cc / params.c_sigma) ** 2 * omega_d


def decay_rates(model: RingModel, k_levels: Optional[int] = None):
    """Dimensionless decay rates gamma_k and the overlap matrix Q_kl.

    Q_kl = sum_j <0|q_j|k> <l|q_j|0>; its diagonal equals gamma_k identically.
    """
    m = coupling_matrix_elements(model, k_levels)
    q = m.conj().T @ m           # Q_kl = sum_j conj(m_jk) m_jl ... transposed below
    q = q.T
    gamma = np.real(np.diag(q)).copy()
    return gamma, q
