"""Charge-parity sectors, quasiparticle tunneling operators, rates and jumps.

A tunneling quasiparticle changes one island's electron-number parity, which
is equivalent to shifting that island's charge bias by half a Cooper pair.
The ring therefore splits into four sectors labeled by the parities of the
two independent islands (the third island's parity is fixed by the total).
Each sector block is the ordinary ring Hamiltonian at shifted biases; the
tunneling operators that connect sectors live on the single-electron charge
lattice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.sparse import csr_matrix, lil_matrix

from .ring import (BiasPoint, CircuitParams, RingModel, TruncationSpec,
                   build_ring_model, waveguide_coupling)
from .scattering import S_IDEAL_CW, fidelity, scattering_matrix

SECTOR_PAIRS = ("EE", "EO", "OE", "OO")

#: Non-equilibrium quasiparticle density typical of aluminum devices at
#: millikelvin base temperatures. Parity-switching experiments consistently
#: report densities near 1e-8 even though the equilibrium value at the
#: measured effective temperature would be orders of magnitude larger; the
#: effective temperature describes the energy distribution of the trapped
#: population, not its size.
X_QP_NONEQ = 2e-8

#: Half-unit bias shifts realizing each parity sector, keyed by total parity.
#: The reference (all biases as given) is the even-total EE sector; an odd
#: total parity flips the redundant third island, which shows up as a half
#: shift on the third bias line.
SECTOR_SHIFTS = {
    "even": {"EE": (0.0, 0.0, 0.0),
             "EO": (0.0, 0.5, -0.5),
             "OE": (0.5, 0.0, -0.5),
             "OO": (0.5, -0.5, 0.0)},
    "odd":  {"EE": (0.0, 0.0, -0.5),
             "EO": (0.0, 0.5, 0.0),
             "OE": (0.5, 0.0, 0.0),
             "OO": (0.5, -0.5, -0.5)},
}

#: Which sector pairs each tunneling operator connects (both directions).
T_OP_LINKS = {
    "12": (("EE", "OO"), ("EO", "OE")),
    "23": (("EE", "EO"), ("OE", "OO")),
    "31": (("EE", "OE"), ("EO", "OO")),
}

#: Junction Josephson energy entering the rate prefactor for each t_op,
#: as an index into CircuitParams.ej.
T_OP_EJ_INDEX = {"12": 2, "23": 1, "31": 0}


@dataclass(frozen=True)
class SectorLabel:
    pair: str
    total_parity: str = "even"

    def __post_init__(self):
        if self.pair not in SECTOR_PAIRS:
            raise ValueError(f"unknown sector pair {self.pair!r}")
        if self.total_parity not in ("even", "odd"):
            raise ValueError(f"unknown total parity {self.total_parity!r}")

    @property
    def island_parities(self) -> tuple[int, int, int]:
        """(p1, p2, p3) with 0 even / 1 odd; p3 fixed by the total parity."""
        p1 = 0 if self.pair[0] == "E" else 1
        p2 = 0 if self.pair[1] == "E" else 1
        total = 0 if self.total_parity == "even" else 1
        return p1, p2, (total - p1 - p2) % 2


@dataclass(frozen=True)
class SectorModel:
    """Four sector blocks plus the tunneling operators that connect them."""

    params: CircuitParams
    bias: BiasPoint
    trunc: TruncationSpec
    total_parity: str
    labels: tuple[SectorLabel, ...]
    sector_bias: tuple[BiasPoint, ...]
    models: tuple[RingModel, ...]
    t_ops: dict                      # {"12": csr, "23": csr, "31": csr}

    @property
    def blocks(self):
        return [m.hamiltonian for m in self.models]

    @property
    def sector_spectra(self):
        """Shifted eigenvalues per sector (each block's own ground at zero)."""
        return [m.eigenvalues for m in self.models]

    def raw_energies(self, index: int) -> np.ndarray:
        """Absolute eigenvalues of one block, comparable across sectors."""
        m = self.models[index]
        return m.ground_energy + m.eigenvalues

    def sector_index(self, pair: str) -> int:
        return SECTOR_PAIRS.index(pair)


def _electron_lattice(n_max: int):
    """Electron-number coordinates for the doubled charge window."""
    ne = 2 * n_max
    n = np.arange(-ne, ne + 1)
    m1 = np.repeat(n, n.size)
    m2 = np.tile(n, n.size)
    return ne, m1, m2


def _shift_matrix(n_max: int, d1: int, d2: int) -> csr_matrix:
    """Operator moving (n1, n2) -> (n1+d1, n2+d2) on the electron lattice."""
    ne, m1, m2 = _electron_lattice(n_max)
    width = 2 * ne + 1
    dim = width * width
    keep = ((np.abs(m1 + d1) <= ne) & (np.abs(m2 + d2) <= ne))
    src = np.flatnonzero(keep)
    dst = src + d1 * width + d2
    data = np.ones(src.size)
    return csr_matrix((data, (dst, src)), shape=(dim, dim))


def tunneling_operator(n_max: int, which: str) -> csr_matrix:
    """Single-electron tunneling operator T_12, T_23 or T_31.

    Sine of half the junction phase: the +1 electron shift carries amplitude
    1/(2i) and the -1 shift its negative, so the operator is Hermitian.
    """
    shifts = {"12": (1, 1), "23": (0, 1), "31": (1, 0)}
    if which not in shifts:
        raise ValueError(f"unknown tunneling operator {which!r}")
    d1, d2 = shifts[which]
    plus = _shift_matrix(n_max, d1, d2)
    amp = 1.0 / 2.0j
    op = amp * plus + np.conj(amp) * plus.conj().T
    return csr_matrix(op)


def build_sector_model(params: CircuitParams, bias: BiasPoint,
                       trunc: TruncationSpec = TruncationSpec(),
                       total_parity: str = "even") -> SectorModel:
    """Build all four parity-sector blocks and the tunneling operators.

    Blocks reuse the ordinary ring builder at half-shifted biases (the same
    code path as the reference model), keeping the charge bias configuration
    fixed at the reference values for every sector.
    """
    if total_parity not in SECTOR_SHIFTS:
        raise ValueError(f"unknown total parity {total_parity!r}")
    labels = tuple(SectorLabel(p, total_parity) for p in SECTOR_PAIRS)
    biases = []
    models = []
    for label in labels:
        shift = SECTOR_SHIFTS[total_parity][label.pair]
        shifted = bias.replace(nx=tuple(b + s for b, s in zip(bias.nx, shift)))
        biases.append(shifted)
        models.append(build_ring_model(params, shifted, trunc))
    t_ops = {which: tunneling_operator(trunc.n_max, which) for which in ("12", "23", "31")}
    return SectorModel(params=params, bias=bias, trunc=trunc,
                       total_parity=total_parity, labels=labels,
                       sector_bias=tuple(biases), models=tuple(models),
                       t_ops=t_ops)


def embed_sector_state(vec: np.ndarray, pair: str, n_max: int,
                       total_parity: str = "even") -> np.ndarray:
    """Lift a sector-block eigenvector onto the single-electron lattice.

    A Cooper-pair coordinate m with island parity p sits at electron number
    2m + p. Odd-parity coordinates at the very edge of the Cooper window fall
    outside the doubled electron window and are dropped; the truncation check
    already guarantees their amplitude is negligible.
    """
    label = SectorLabel(pair, total_parity)
    p1, p2, _ = label.island_parities
    width_c = 2 * n_max + 1
    ne = 2 * n_max
    width_e = 2 * ne + 1
    out = np.zeros(width_e * width_e, dtype=complex)
    m = np.arange(-n_max, n_max + 1)
    e1 = 2 * m + p1
    e2 = 2 * m + p2
    keep1 = np.abs(e1) <= ne
    keep2 = np.abs(e2) <= ne
    src = vec.reshape(width_c, width_c)[np.ix_(keep1, keep2)]
    rows = (e1[keep1] + ne)[:, None] * width_e + (e2[keep2] + ne)[None, :]
    out[rows.ravel()] = src.ravel()
    return out


# ---------------------------------------------------------------------------
# Quasiparticle environment and spectral density.
# ---------------------------------------------------------------------------

class QuadratureError(RuntimeError):
    """The spectral-density integral failed to converge."""


@dataclass(frozen=True)
class QpEnvironment:
    """Quasiparticle bath parameters, all energies in reference-E_J units.

    x_qp = None means the thermal density at t_qp_ej; an explicit x_qp scales
    the occupation f[E] by x_qp / x_qp_thermal, modeling the measured
    non-equilibrium quasiparticle density at the effective temperature.
    """

    gap: float
    t_qp_ej: float
    ej_junction: tuple[float, float, float] = (1.0, 1.0, 1.0)
    x_qp: Optional[float] = None

    def __post_init__(self):
        if self.gap <= 0:
            raise ValueError("gap must be positive")
        if self.t_qp_ej < 0:
            raise ValueError("temperature must be non-negative")

    @classmethod
    def from_params(cls, params: CircuitParams,
                    x_qp: Optional[float] = X_QP_NONEQ) -> "QpEnvironment":
        """Environment at the device's effective quasiparticle temperature.

        Defaults to the measured non-equilibrium density X_QP_NONEQ; pass
        x_qp=None for the equilibrium density at t_qp instead.
        """
        return cls(gap=params.gap_ej,
                   t_qp_ej=params.t_qp * params.kelvin_to_ej,
                   ej_junction=params.ej, x_qp=x_qp)

    @property
    def x_qp_thermal(self) -> float:
        """Equilibrium density sqrt(2 pi kT / gap) * exp(-gap / kT)."""
        if self.t_qp_ej == 0:
            return 0.0
        return float(np.sqrt(2.0 * np.pi * self.t_qp_ej / self.gap)
                     * np.exp(-self.gap / self.t_qp_ej))

    @property
    def density_scale(self) -> float:
        """Occupation rescaling x_qp / x_qp_thermal (1 for thermal density)."""
        if self.x_qp is None:
            return 1.0
        thermal = self.x_qp_thermal
        if thermal == 0:
            raise ValueError("cannot rescale occupation at zero temperature")
        return self.x_qp / thermal

    def occupation(self, energy: float) -> float:
        """Effective quasiparticle occupation f[E] (may be density-rescaled)."""
        if self.t_qp_ej == 0:
            return 0.0
        z = np.exp(-energy / self.t_qp_ej)
        return self.density_scale * z / (1.0 + z)


def qp_spectral_density(omega: float, env: QpEnvironment, ej: float = 1.0) -> float:
    """Quasiparticle current spectral density S_qp(omega), units of E_J.

    omega > 0 is the relaxation branch (energy omega released into the bath),
    omega < 0 the excitation branch; the two obey detailed balance. The
    integrable inverse-square-root edge singularity is removed by the
    substitution x = u^2; the upper limit is set where the occupation drops
    below 1e-18 of its edge value.
    """
    if env.t_qp_ej == 0:
        return 0.0
    w = float(omega)
    aw = abs(w) / env.gap

    def integrand(u: float) -> float:
        x = u * u
        e_low = (1.0 + x) * env.gap
        e_high = e_low + abs(w)
        if w >= 0:
            occ = env.occupation(e_low) * (1.0 - env.occupation(e_high))
        else:
            occ = env.occupation(e_high) * (1.0 - env.occupation(e_low))
        return 2.0 * occ / np.sqrt(x + aw)

    # Beyond (1 + u^2) gap = gap + 42 kT the occupation is below 1e-18 of its
    # edge value; pad the window slightly.
    u_max = np.sqrt(45.0 * env.t_qp_ej / env.gap)
    value, abserr = quad(integrand, 0.0, u_max, epsabs=0.0, epsrel=1e-9, limit=400)
    if value != 0.0 and abserr > 1e-6 * abs(value):
        raise QuadratureError(
            f"spectral density integral did not converge: omega={omega}, "
            f"gap={env.gap}, t={env.t_qp_ej}, estimate={value}, error={abserr}")
    return 16.0 * ej / np.pi * value


def qp_density_closed_form(omega: float, env: QpEnvironment, ej: float = 1.0) -> float:
    """High-frequency approximation (8 ej / pi) sqrt(2 gap / omega) x_qp."""
    x = env.x_qp if env.x_qp is not None else env.x_qp_thermal
    return 8.0 * ej / np.pi * np.sqrt(2.0 * env.gap / omega) * x


# ---------------------------------------------------------------------------
# Transition rates.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectorTransition:
    from_pair: str
    to_pair: str
    junction: str                 # "12" | "23" | "31"
    k_from: int
    k_to: int
    omega: float                  # energy released to the bath, E_J units
    element_sq: float             # |<k',s'| T |k,s>|^2
    rate: float                   # E_J units


@dataclass(frozen=True)
class SectorRates:
    transitions: tuple[SectorTransition, ...]
    ground_rate_matrix: np.ndarray     # (4, 4) directed, from ground states, E_J units
    ej_ref_ghz: float

    @property
    def ground_rate_hz(self) -> np.ndarray:
        return self.ground_rate_matrix * rate_to_hz(1.0, self.ej_ref_ghz)

    @property
    def ground_rate_khz(self) -> np.ndarray:
        return self.ground_rate_hz / 1e3


def rate_to_hz(rate_ej: float, ej_ref_ghz: float) -> float:
    """Convert a rate in reference-energy units to inverse seconds."""
    return rate_ej * 2.0 * np.pi * ej_ref_ghz * 1e9


def sector_rates(model: SectorModel, env: QpEnvironment,
                 state_cutoff: Optional[int] = None,
                 element_floor: float = 1e-24,
                 omega_floor: float = 1e-9) -> SectorRates:
    """Quasiparticle transition-rate table between parity sectors.

    Each matrix element pairs one initial and one final eigenstate embedded
    in the single-electron lattice. The spectral density is evaluated at the
    released energy; each (ordered) junction direction contributes its own
    term, so a junction shows up twice between a given sector pair. Elements
    below element_floor are dropped without evaluating the integral, and
    released energies are floored in magnitude at omega_floor to keep the
    logarithmic degeneracy point finite.

    The aggregated matrix collects total rates out of each sector's ground
    state, summed over final states and junctions.
    """
    cutoff = state_cutoff if state_cutoff is not None else model.trunc.k_levels
    n_max = model.trunc.n_max

    embedded: dict[int, np.ndarray] = {}
    for idx, pair in enumerate(SECTOR_PAIRS):
        vecs = model.models[idx].eigenvectors[:, :cutoff + 1]
        cols = [embed_sector_state(vecs[:, k], pair, n_max, model.total_parity)
                for k in range(vecs.shape[1])]
        embedded[idx] = np.column_stack(cols)

    transitions = []
    ground = np.zeros((4, 4))
    for junction, links in T_OP_LINKS.items():
        t_op = model.t_ops[junction]
        ej = model.params.ej[T_OP_EJ_INDEX[junction]]
        for pair_a, pair_b in links:
            ia, ib = SECTOR_PAIRS.index(pair_a), SECTOR_PAIRS.index(pair_b)
            # element matrix between the two connected sectors
            block = embedded[ib].conj().T @ (t_op @ embedded[ia])
            e_a = model.raw_energies(ia)[:cutoff + 1]
            e_b = model.raw_energies(ib)[:cutoff + 1]
            for direction, (i_from, i_to, elems, e_from, e_to) in enumerate(
                    ((ia, ib, block, e_a, e_b),
                     (ib, ia, block.conj().T, e_b, e_a))):
                for k in range(cutoff + 1):
                    for kp in range(cutoff + 1):
                        el2 = float(np.abs(elems[kp, k]) ** 2)
                        if el2 < element_floor:
                            continue
                        w = float(e_from[k] - e_to[kp])
                        w_eval = w if abs(w) >= omega_floor else omega_floor
                        rate = el2 * qp_spectral_density(w_eval, env, ej)
                        transitions.append(SectorTransition(
                            from_pair=SECTOR_PAIRS[i_from], to_pair=SECTOR_PAIRS[i_to],
                            junction=junction, k_from=k, k_to=kp,
                            omega=w, element_sq=el2, rate=rate))
                        if k == 0:
                            ground[i_from, i_to] += rate

    return SectorRates(transitions=tuple(transitions),
                       ground_rate_matrix=ground,
                       ej_ref_ghz=model.params.ej_ref_ghz)


# ---------------------------------------------------------------------------
# Per-sector circulation performance and composed spectra.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectorMapPoint:
    phi_x: float
    omega_d: float
    sector: str
    fidelity: float               # power fidelity F(|S|^2, ideal)
    s21_abs: float
    s31_abs: float
    status: str                   # ok | failed


def sector_scattering(model: SectorModel, sector: str, omega_d: float) -> np.ndarray:
    """Scattering matrix of one parity sector at the model's bias point."""
    idx = model.sector_index(sector)
    return scattering_matrix(model.models[idx], omega_d)


def sector_fidelity_map(params: CircuitParams, bias: BiasPoint,
                        phi_values, omega_values,
                        trunc: TruncationSpec = TruncationSpec(),
                        total_parity: str = "even") -> list[SectorMapPoint]:
    """Power-fidelity landscapes over (flux, drive) for all four sectors.

    Charge biases stay fixed at the reference values; every sector is
    evaluated at the same external settings. Fidelity here compares power
    transmission |S|^2 to the ideal pattern, the quantity a power measurement
    sees; far off resonance it limits to about 0.18, and a sector pushed off
    its own resonance can fall below that.
    """
    out = []
    for phi in phi_values:
        try:
            sectors = build_sector_model(params, bias.replace(phi_x=float(phi)),
                                         trunc, total_parity)
        except Exception:
            for pair in SECTOR_PAIRS:
                for omega_d in omega_values:
                    out.append(SectorMapPoint(float(phi), float(omega_d), pair,
                                              np.nan, np.nan, np.nan, "failed"))
            continue
        for pair in SECTOR_PAIRS:
            idx = sectors.sector_index(pair)
            for omega_d in omega_values:
                try:
                    s = scattering_matrix(sectors.models[idx], float(omega_d))
                    f = fidelity(np.abs(s) ** 2, S_IDEAL_CW)
                    out.append(SectorMapPoint(float(phi), float(omega_d), pair,
                                              float(f), float(np.abs(s[1, 0])),
                                              float(np.abs(s[2, 0])), "ok"))
                except Exception:
                    out.append(SectorMapPoint(float(phi), float(omega_d), pair,
                                              np.nan, np.nan, np.nan, "failed"))
    return out


def composed_spectra(params: CircuitParams, bias: BiasPoint, phi_values,
                     trunc: TruncationSpec = TruncationSpec(),
                     total_parity: str = "even",
                     k_levels: int = 4) -> list[tuple[float, str, int, float]]:
    """Transition energies of all four sectors superimposed along a flux sweep.

    Closed-system eigenvalues only; emits (phi_x, sector, k, omega_k) for
    k = 1..k_levels.
    """
    records = []
    for phi in phi_values:
        sectors = build_sector_model(params, bias.replace(phi_x=float(phi)),
                                     trunc, total_parity)
        for idx, pair in enumerate(SECTOR_PAIRS):
            omegas = sectors.models[idx].eigenvalues[1:k_levels + 1]
            for k, w in enumerate(omegas, start=1):
                records.append((float(phi), pair, k, float(w)))
    return records


# ---------------------------------------------------------------------------
# Quasi-static sector jump process.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpTrajectory:
    jump_times: np.ndarray          # seconds, strictly increasing
    sectors: np.ndarray             # sector index per segment (one longer)
    duration: float
    occupancy: np.ndarray           # (4,) time fractions
    mean_dwell: float
    segment_fidelity: Optional[np.ndarray]   # fidelity per segment, if provided

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


def sector_jump_process(rate_matrix: np.ndarray, duration: float, seed: int,
                        start: int = 0,
                        sector_fidelity=None,
                        waveguide_rate: Optional[float] = None) -> JumpTrajectory:
    """Continuous-time Markov jumps between parity sectors.

    rate_matrix[i, j] is the directed rate i -> j in inverse seconds (ground
    state aggregated rates). The process is quasi-static: the ring is assumed
    to re-equilibrate within each sector between jumps, which requires the
    total jump rate to stay far below the waveguide coupling rate; when
    waveguide_rate is given, a ratio above 1e-3 is rejected.
    """
    rates = np.asarray(rate_matrix, dtype=float)
    if rates.shape != (4, 4):
        raise ValueError("rate matrix must be 4x4")
    off_diag = rates[~np.eye(4, dtype=bool)]
    if np.any(off_diag < 0):
        raise ValueError("rate matrix entries must be non-negative")
    if waveguide_rate is not None:
        total = float(np.max(np.sum(np.where(np.eye(4, dtype=bool), 0.0, rates), axis=1)))
        if total / waveguide_rate >= 1e-3:
            raise ValueError(
                f"jump rates too fast for the quasi-static assumption: "
                f"ratio {total / waveguide_rate:.2e} >= 1e-3")

    rng = np.random.default_rng(seed)
    t = 0.0
    state = int(start)
    times = []
    sequence = [state]
    occupancy = np.zeros(4)
    while True:
        out_rates = rates[state].copy()
        out_rates[state] = 0.0
        total = out_rates.sum()
        if total == 0.0:
            occupancy[state] += duration - t
            break
        dwell = rng.exponential(1.0 / total)
        if t + dwell >= duration:
            occupancy[state] += duration - t
            break
        occupancy[state] += dwell
        t += dwell
        state = int(rng.choice(4, p=out_rates / total))
        times.append(t)
        sequence.append(state)

    seq = np.array(sequence, dtype=int)
    fid = None
    if sector_fidelity is not None:
        fid = np.asarray(sector_fidelity, dtype=float)[seq]
    return JumpTrajectory(
        jump_times=np.array(times), sectors=seq, duration=float(duration),
        occupancy=occupancy / duration,
        mean_dwell=float(duration / max(len(times), 1)) if times else float(duration),
        segment_fidelity=fid)
