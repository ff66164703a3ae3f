"""Model builders for two driven three-level ions with monitored cavities.

Each ion couples one leg of a Raman transition (level 1 <-> 3) to its cavity
mode with strength ``g`` while a classical field drives the other leg
(level 2 <-> 3) with strength ``omega``; both legs are detuned by ``delta``
from the excited level.  Photons leaving the cavities interfere on a beam
splitter before photodetection, which erases which-cavity information: the
detected channels are the symmetric and antisymmetric mode combinations.
Cavity fields decay at rate ``2*kappa`` and the excited level decays to
levels 1 and 2 at rates ``2*gamma31`` and ``2*gamma32``.

Everything is expressed in units of ``g`` (rates) and ``1/g`` (times), with
hbar = 1.  Three variants are supported: the full three-level model, a
two-level effective model valid for large detuning, and a single shared
cavity monitored by one detector.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, RegimeError
from .hilbert import (
    SparseOperator,
    TensorBasis,
    annihilation,
    ion_projector,
    ion_transition,
    number_operator,
)

__all__ = [
    "PhysicalParams",
    "ModelVariant",
    "ChannelKind",
    "JumpChannel",
    "BuiltModel",
    "basis_for",
    "build_hamiltonian",
    "build_effective_hamiltonian",
    "build_jump_channels",
    "build_adiabatic_model",
    "build_model",
    "channel_rate_operator",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Physical rates and sizes of one simulation run (units of g, 1/g).

    Defaults are the reference operating point used throughout the test
    suite: weak effective driving (g*omega/delta well below kappa), equal
    branching of the excited level, ideal detection, no dark counts.
    """

    g: float = 1.0
    omega: float = 1.0
    delta: float = 20.0
    kappa: float = 10.0
    gamma31: float = 0.1
    gamma32: float = 0.1
    eta: float = 1.0
    dark_rate: float = 0.0
    window: float = 100.0
    n_max: int = 2

    def __post_init__(self):
        for name in ("g", "omega", "kappa", "gamma31", "gamma32", "dark_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}", key=name)
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}", key="eta")
        if self.window <= 0:
            raise ConfigError(f"window must be > 0, got {self.window}", key="window")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}", key="n_max")

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)


class ModelVariant(Enum):
    TWO_CAVITY_FULL = "two_cavity_full"
    TWO_CAVITY_ADIABATIC = "two_cavity_adiabatic"
    SINGLE_CAVITY = "single_cavity"


class ChannelKind(Enum):
    """Label of one decay channel or click source.

    Only detector and dark-count kinds count as clicks; undetected cavity
    losses and spontaneous emission are silent.
    """

    DETECTOR_D1 = "detector_d1"
    DETECTOR_D2 = "detector_d2"
    LOSS_A = "loss_a"
    LOSS_B = "loss_b"
    SPONT_A_TO_1 = "spont_a_to_1"
    SPONT_A_TO_2 = "spont_a_to_2"
    SPONT_B_TO_1 = "spont_b_to_1"
    SPONT_B_TO_2 = "spont_b_to_2"
    DARK_D1 = "dark_d1"
    DARK_D2 = "dark_d2"

    @property
    def is_click(self) -> bool:
        return self in _CLICK_KINDS

    @property
    def detector(self) -> str | None:
        """Which detector registers this kind ('d1', 'd2', or None)."""
        if self in (ChannelKind.DETECTOR_D1, ChannelKind.DARK_D1):
            return "d1"
        if self in (ChannelKind.DETECTOR_D2, ChannelKind.DARK_D2):
            return "d2"
        return None


_CLICK_KINDS = frozenset(
    {
        ChannelKind.DETECTOR_D1,
        ChannelKind.DETECTOR_D2,
        ChannelKind.DARK_D1,
        ChannelKind.DARK_D2,
    }
)


@dataclass(frozen=True)
class JumpChannel:
    """One collapse channel: a kind label and its rate-weighted operator."""

    kind: ChannelKind
    operator: SparseOperator


@dataclass(frozen=True)
class BuiltModel:
    """Everything a trajectory run needs, built once and reused."""

    variant: ModelVariant
    params: PhysicalParams
    basis: TensorBasis
    hamiltonian: SparseOperator
    h_eff: SparseOperator
    channels: tuple[JumpChannel, ...]

    def initial_protocol_state(self) -> np.ndarray:
        """Both ions prepared in level 2, all cavity modes empty."""
        return self.basis.vector(2, 2)


def basis_for(variant: ModelVariant, n_max: int) -> TensorBasis:
    if variant is ModelVariant.TWO_CAVITY_FULL:
        return TensorBasis(ion_levels=3, n_modes=2, n_max=n_max)
    if variant is ModelVariant.TWO_CAVITY_ADIABATIC:
        return TensorBasis(ion_levels=2, n_modes=2, n_max=n_max)
    return TensorBasis(ion_levels=3, n_modes=1, n_max=n_max)


def _mode_of_ion(basis: TensorBasis, ion: str) -> str:
    # With a single shared cavity both ions talk to mode "a".
    return ion if basis.n_modes == 2 else "a"


def _three_level_hamiltonian(params: PhysicalParams, basis: TensorBasis) -> SparseOperator:
    dim = basis.dim
    h = SparseOperator.from_entries(dim, [])
    for ion in ("a", "b"):
        mode = _mode_of_ion(basis, ion)
        c = annihilation(basis, mode)
        raise_31 = ion_transition(basis, ion, 3, 1)
        h = h + params.delta * ion_projector(basis, ion, 3)
        h = h + params.g * (raise_31 @ c) + params.g * (raise_31 @ c).dagger()
        drive = ion_transition(basis, ion, 3, 2)
        h = h + params.omega * drive + params.omega * drive.dagger()
    return h


def build_hamiltonian(params: PhysicalParams) -> SparseOperator:
    """Hermitian Hamiltonian of the full three-level, two-cavity model."""
    basis = basis_for(ModelVariant.TWO_CAVITY_FULL, params.n_max)
    return _three_level_hamiltonian(params, basis)


def _decay_part(params: PhysicalParams, basis: TensorBasis) -> SparseOperator:
    """-i times half the total loss rate operator (photons plus level 3)."""
    dim = basis.dim
    part = SparseOperator.from_entries(dim, [])
    for mode in ("a", "b")[: basis.n_modes]:
        part = part + (-1j * params.kappa) * number_operator(basis, mode)
    gamma = params.gamma31 + params.gamma32
    if basis.ion_levels == 3 and gamma > 0:
        for ion in ("a", "b"):
            part = part + (-1j * gamma) * ion_projector(basis, ion, 3)
    return part


def build_effective_hamiltonian(params: PhysicalParams) -> SparseOperator:
    """Non-Hermitian generator of between-jump evolution (full model)."""
    basis = basis_for(ModelVariant.TWO_CAVITY_FULL, params.n_max)
    return _three_level_hamiltonian(params, basis) + _decay_part(params, basis)


def _cavity_channels(params: PhysicalParams, basis: TensorBasis) -> list[JumpChannel]:
    """Detected and undetected photon-loss channels, in canonical order."""
    channels: list[JumpChannel] = []
    kappa, eta = params.kappa, params.eta
    if kappa == 0:
        return channels
    if basis.n_modes == 2:
        c_a = annihilation(basis, "a")
        c_b = annihilation(basis, "b")
        if eta > 0:
            root = np.sqrt(kappa * eta)
            channels.append(JumpChannel(ChannelKind.DETECTOR_D1, root * (c_a + c_b)))
            channels.append(JumpChannel(ChannelKind.DETECTOR_D2, root * (c_a - c_b)))
        if eta < 1:
            root = np.sqrt(2.0 * kappa * (1.0 - eta))
            channels.append(JumpChannel(ChannelKind.LOSS_A, root * c_a))
            channels.append(JumpChannel(ChannelKind.LOSS_B, root * c_b))
    else:
        c = annihilation(basis, "a")
        if eta > 0:
            channels.append(JumpChannel(ChannelKind.DETECTOR_D1, np.sqrt(2.0 * kappa * eta) * c))
        if eta < 1:
            channels.append(JumpChannel(ChannelKind.LOSS_A, np.sqrt(2.0 * kappa * (1.0 - eta)) * c))
    return channels


def _spont_channels(params: PhysicalParams, basis: TensorBasis) -> list[JumpChannel]:
    channels: list[JumpChannel] = []
    if basis.ion_levels != 3:
        return channels
    kinds = {
        ("a", 1): ChannelKind.SPONT_A_TO_1,
        ("a", 2): ChannelKind.SPONT_A_TO_2,
        ("b", 1): ChannelKind.SPONT_B_TO_1,
        ("b", 2): ChannelKind.SPONT_B_TO_2,
    }
    for ion in ("a", "b"):
        for target, rate in ((1, params.gamma31), (2, params.gamma32)):
            if rate > 0:
                op = np.sqrt(2.0 * rate) * ion_transition(basis, ion, target, 3)
                channels.append(JumpChannel(kinds[(ion, target)], op))
    return channels


def build_jump_channels(
    params: PhysicalParams, variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL
) -> tuple[JumpChannel, ...]:
    """All collapse channels of a variant, zero-rate channels omitted.

    Detector channels carry the beam-splitter combinations of the two
    cavity outputs scaled by sqrt(kappa * eta); the undetected remainder
    appears as per-cavity loss channels scaled by sqrt(2 kappa (1 - eta)).
    Together they account for the full cavity decay rate 2*kappa per mode,
    so the channel sum always matches the anti-Hermitian part of the
    effective Hamiltonian.
    """
    basis = basis_for(variant, params.n_max)
    channels = _cavity_channels(params, basis)
    channels.extend(_spont_channels(params, basis))
    return tuple(channels)


def build_adiabatic_model(
    params: PhysicalParams, include_level_shifts: bool = True
) -> tuple[SparseOperator, tuple[JumpChannel, ...]]:
    """Two-level effective model for delta much larger than g, omega.

    The excited level is eliminated: each ion becomes a qubit whose
    levels 1 and 2 are coupled by an effective photon-exchange term of
    strength g*omega/delta (level 2 with an empty mode goes to level 1
    with one photon), plus light-shift terms g^2/delta on level 1 and
    omega^2/delta on level 2.  Cavity decay stays in the generator as
    -i*kappa per photon; spontaneous emission has no counterpart here.

    Returns the non-Hermitian generator and the cavity channels.
    """
    if params.delta <= 0:
        raise RegimeError(f"adiabatic elimination needs delta > 0, got {params.delta}")
    basis = basis_for(ModelVariant.TWO_CAVITY_ADIABATIC, params.n_max)
    dim = basis.dim
    h = SparseOperator.from_entries(dim, [])
    raman = params.g * params.omega / params.delta
    for ion in ("a", "b"):
        c = annihilation(basis, ion)
        absorb = ion_transition(basis, ion, 2, 1) @ c  # level 1, one photon -> level 2
        h = h + raman * absorb + raman * absorb.dagger()
        if include_level_shifts:
            h = h + (params.g**2 / params.delta) * ion_projector(basis, ion, 1)
            h = h + (params.omega**2 / params.delta) * ion_projector(basis, ion, 2)
        h = h + (-1j * params.kappa) * number_operator(basis, ion)
    return h, build_jump_channels(params, ModelVariant.TWO_CAVITY_ADIABATIC)


def build_model(
    params: PhysicalParams,
    variant: ModelVariant = ModelVariant.TWO_CAVITY_FULL,
    include_level_shifts: bool = True,
) -> BuiltModel:
    """Assemble basis, generators, and channels for one variant."""
    basis = basis_for(variant, params.n_max)
    if variant is ModelVariant.TWO_CAVITY_ADIABATIC:
        h_eff, channels = build_adiabatic_model(params, include_level_shifts)
        hermitian = 0.5 * (h_eff + h_eff.dagger())
    else:
        hermitian = _three_level_hamiltonian(params, basis)
        h_eff = hermitian + _decay_part(params, basis)
        channels = build_jump_channels(params, variant)
    return BuiltModel(
        variant=variant,
        params=params,
        basis=basis,
        hamiltonian=hermitian,
        h_eff=h_eff,
        channels=tuple(channels),
    )


def channel_rate_operator(
    channels: Sequence[JumpChannel], clicks_only: bool = False
) -> SparseOperator:
    """Sum of L^dagger L over channels (optionally detector kinds only)."""
    selected = [ch for ch in channels if ch.kind.is_click or not clicks_only]
    if not selected:
        raise ConfigError("no channels to sum")
    total = None
    for ch in selected:
        term = ch.operator.dagger() @ ch.operator
        total = term if total is None else total + term
    return total
