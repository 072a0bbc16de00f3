"""Dense exact diagonalization and piecewise-constant propagation.

Basis convention: index ``k`` of a state vector encodes one sigma^z product
state, site 0 being the most significant bit, and bit value 0 meaning spin up
(+1). With this ordering the all-up state is index 0 and all-down is the last
index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, ContractViolation, InconclusiveScanError
from .spin_model import LatticeSpec, build_ring

MAX_SPINS = 14


@lru_cache(maxsize=32)
def _basis_spins(n):
    idx = np.arange(2 ** n)
    shifts = np.arange(n - 1, -1, -1)
    bits = (idx[:, None] >> shifts[None, :]) & 1
    spins = (1 - 2 * bits).astype(np.int8)
    spins.setflags(write=False)
    return spins


def basis_spins(n: int) -> np.ndarray:
    """``(2**n, n)`` array of +-1 spin values for every basis state."""
    return _basis_spins(int(n))


def basis_index(spins) -> int:
    """Basis index of a +-1 spin configuration."""
    k = 0
    for s in spins:
        k = (k << 1) | (1 if s < 0 else 0)
    return k


def readout_spins(lattice: LatticeSpec) -> np.ndarray:
    """Basis spins as reported after the gauge readout flip."""
    spins = basis_spins(lattice.n_spins)
    signs = np.asarray(lattice.readout_signs, dtype=np.int8)
    if np.all(signs == 1):
        return spins
    return spins * signs[None, :]


def kink_indicators(lattice: LatticeSpec):
    """Per-basis-state kink indicators ``(plus, minus)``, each ``(2**n, n_bonds)``.

    A ``+`` kink on bond ``(a, b)`` means spin ``a`` up and spin ``b`` down in
    the readout frame; ``-`` is the reverse.
    """
    spins = readout_spins(lattice).astype(np.int16)
    pairs = lattice.bond_array
    sa = spins[:, pairs[:, 0]]
    sb = spins[:, pairs[:, 1]]
    plus = ((1 + sa) * (1 - sb) // 4).astype(np.int8)
    minus = ((1 - sa) * (1 + sb) // 4).astype(np.int8)
    return plus, minus


def _check_capacity(lattice, max_spins):
    if lattice.n_spins > max_spins:
        raise CapacityError(
            f"{lattice.n_spins} spins needs a {2 ** lattice.n_spins}-dim dense matrix; "
            f"limit is {max_spins} spins"
        )


def diagonal_energies(lattice: LatticeSpec, h: float) -> np.ndarray:
    """Classical (Gamma = 0) energy of every basis state."""
    spins = basis_spins(lattice.n_spins).astype(float)
    pairs = lattice.bond_array
    ising = -(spins[:, pairs[:, 0]] * spins[:, pairs[:, 1]]) @ lattice.couplings
    zeeman = -h * (spins @ np.asarray(lattice.local_fields))
    return ising + zeeman


def build_hamiltonian(lattice: LatticeSpec, gamma: float, h: float, max_spins: int = MAX_SPINS) -> np.ndarray:
    """Dense ``H = -sum J s^z s^z - gamma sum s^x - h sum h_i s^z``.

    The matrix is real symmetric; it is returned as ``complex128`` so it can be
    fed to any routine expecting a general Hermitian operator.
    """
    _check_capacity(lattice, max_spins)
    n = lattice.n_spins
    dim = 2 ** n
    H = np.zeros((dim, dim), dtype=np.complex128)
    H[np.diag_indices(dim)] = diagonal_energies(lattice, h)
    if gamma != 0.0:
        idx = np.arange(dim)
        for site in range(n):
            H[idx, idx ^ (1 << (n - 1 - site))] = -gamma
    return H


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    vectors: np.ndarray

    @property
    def ground_energy(self):
        return float(self.energies[0])


def eigendecompose(H: np.ndarray, atol: float = 1e-12) -> Spectrum:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ContractViolation("Hamiltonian must be a square matrix")
    if np.max(np.abs(H - H.conj().T), initial=0.0) > atol:
        raise ContractViolation("Hamiltonian is not Hermitian")
    energies, vectors = np.linalg.eigh(H)
    return Spectrum(energies, vectors)


def propagate_step(state: np.ndarray, spectrum: Spectrum, dt: float, hbar: float = 1.0) -> np.ndarray:
    """One slice of ``exp(-i H dt / hbar)`` using the frozen spectrum."""
    V = spectrum.vectors
    coeffs = V.conj().T @ state
    coeffs *= np.exp(-1j * spectrum.energies * (dt / hbar))
    return V @ coeffs


def all_up_state(n: int) -> np.ndarray:
    psi = np.zeros(2 ** n, dtype=np.complex128)
    psi[0] = 1.0
    return psi


def normalize(state: np.ndarray) -> np.ndarray:
    return state / np.linalg.norm(state)


@dataclass(frozen=True)
class Observables:
    m_x: float
    m_y: float
    m_z: float
    energy: float
    kinks_plus: np.ndarray
    kinks_minus: np.ndarray

    @property
    def kink_density(self):
        """Per-bond total kink density ``n_plus + n_minus``."""
        return self.kinks_plus + self.kinks_minus

    @property
    def kink_total(self):
        """Mean kink density per bond."""
        if self.kinks_plus.size == 0:
            return 0.0
        return float(np.mean(self.kink_density))


def _site_transverse(state, n):
    dim = state.shape[0]
    idx = np.arange(dim)
    spins = basis_spins(n)
    mx = np.empty(n)
    my = np.empty(n)
    for site in range(n):
        flipped = state[idx ^ (1 << (n - 1 - site))]
        mx[site] = np.real(np.vdot(flipped, state))
        # sigma^y |up> = i |down>, sigma^y |down> = -i |up>
        my[site] = np.real(np.vdot(flipped, 1j * spins[:, site] * state))
    return mx, my


def observe(state: np.ndarray, lattice: LatticeSpec, hamiltonian: np.ndarray | None = None,
            transverse: bool = True) -> Observables:
    """Magnetisation, kink densities and (optionally) energy of a normalized state."""
    probs = np.abs(state) ** 2
    spins = readout_spins(lattice)
    n = lattice.n_spins
    mz = float(probs @ spins.sum(axis=1)) / n
    if transverse:
        mx_sites, my_sites = _site_transverse(state, n)
        signs = np.asarray(lattice.readout_signs)
        # The readout flip is sigma^x on the flipped sites: it keeps sigma^x and
        # negates sigma^y, sigma^z.
        mx = float(np.mean(mx_sites))
        my = float(np.mean(my_sites * signs))
    else:
        mx = my = float("nan")
    plus, minus = kink_indicators(lattice)
    energy = float(np.real(np.vdot(state, hamiltonian @ state))) if hamiltonian is not None else float("nan")
    return Observables(mx, my, mz, energy, probs @ plus, probs @ minus)


def adiabatic_populations(state: np.ndarray, spectrum: Spectrum):
    """Populations on the instantaneous eigenbasis and the mean energy."""
    amps = spectrum.vectors.conj().T @ state
    pops = np.abs(amps) ** 2
    return pops, float(pops @ spectrum.energies)


def single_flip_state(n: int) -> np.ndarray:
    """Uniform superposition of the ``n`` one-spin-flip basis states."""
    psi = np.zeros(2 ** n, dtype=np.complex128)
    for site in range(n):
        psi[1 << (n - 1 - site)] = 1.0
    return psi / np.sqrt(n)


@lru_cache(maxsize=16)
def symmetric_sector(n: int) -> np.ndarray:
    """Orthonormal basis of ring states invariant under rotations and reflection.

    Columns are normalized sums over dihedral orbits of basis states. Both the
    aligned state and the symmetric single-flip state live in this sector, and
    a uniform ring Hamiltonian never leaves it.
    """
    spins = basis_spins(n)
    seen = np.zeros(2 ** n, dtype=bool)
    columns = []
    for k in range(2 ** n):
        if seen[k]:
            continue
        orbit = set()
        config = spins[k]
        for shift in range(n):
            rolled = np.roll(config, shift)
            orbit.add(basis_index(rolled))
            orbit.add(basis_index(rolled[::-1]))
        members = sorted(orbit)
        seen[members] = True
        col = np.zeros(2 ** n)
        col[members] = 1.0 / np.sqrt(len(members))
        columns.append(col)
    P = np.array(columns).T
    P.setflags(write=False)
    return P


def _label_levels(vectors, aligned, flip):
    """Indices of the eigenvectors with the most weight on each reference state."""
    ia = int(np.argmax(np.abs(aligned @ vectors)))
    scores = np.abs(flip @ vectors)
    scores[ia] = -1.0
    return ia, int(np.argmax(scores))


def branch_energies(n: int, gamma: float, h_grid, coupling: float = 1.0):
    """Energies of the aligned and single-flip branches along ``h_grid``.

    At every grid point the aligned branch is the eigenvector overlapping most
    with ``|up...up>`` and the single-flip branch is the one (of the rest)
    overlapping most with the symmetric single-flip state. Labelling pointwise
    rather than by adiabatic continuity keeps the branches attached to their
    diabatic states when further levels crowd in at large ``gamma``.
    Diagonalization runs inside the dihedral-symmetric sector.
    """
    lattice = build_ring(n, coupling)
    P = symmetric_sector(n)
    aligned = P.T @ all_up_state(n).real
    flip = P.T @ single_flip_state(n).real
    e_aligned, e_flip = [], []
    for h in h_grid:
        energies, vectors = np.linalg.eigh(P.T @ build_hamiltonian(lattice, gamma, h).real @ P)
        ia, ib = _label_levels(vectors, aligned, flip)
        e_aligned.append(energies[ia])
        e_flip.append(energies[ib])
    return np.array(e_aligned), np.array(e_flip)


def min_gap_scan(n: int, gamma: float, h_grid, coupling: float = 1.0):
    """Locate the aligned/single-flip avoided crossing on a ring.

    The grid is walked in backward-sweep order (decreasing ``h``). Returns
    ``(h_crossing, gap)`` at the grid point of smallest branch separation.
    Raises :class:`InconclusiveScanError` when the minimum sits on the edge of
    the grid, i.e. the grid does not bracket it.
    """
    h_grid = np.sort(np.asarray(h_grid, dtype=float))[::-1]
    if h_grid.size < 3:
        raise InconclusiveScanError("need at least three grid points")
    e_a, e_b = branch_energies(n, gamma, h_grid, coupling)
    gaps = np.abs(e_a - e_b)
    k = int(np.argmin(gaps))
    if k == 0 or k == len(h_grid) - 1:
        raise InconclusiveScanError(
            f"gap minimum at grid edge h={h_grid[k]}; widen or refine the grid"
        )
    return float(h_grid[k]), float(gaps[k])
