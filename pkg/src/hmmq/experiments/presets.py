"""Named models used by the experiments and the CLI."""

from __future__ import annotations

import math

import numpy as np

from ..model import HmmModel
from ..numkit import I2, SIGMA_MINUS, RngStream, X, Y, Z, ginibre, haar_state

S_Z = np.diag([1.0, 0.0, -1.0]).astype(complex)
S_X = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / math.sqrt(2)


def heisenberg(gamma: float = 1.0, h_e: bool = False, omega: float = 0.0) -> HmmModel:
    """Qubit environment with exchange coupling γ(XX + YY + ZZ) and probe dephasing L = 1⊗Z."""
    h = gamma * (np.kron(X, X) + np.kron(Y, Y) + np.kron(Z, Z))
    return HmmModel(d_E=2, d_P=2, H_EP=h, G=Z, H_E=Z if h_e else None,
                    jumps=(np.kron(I2, Z),), omega=omega, name="heisenberg")


def dephasing_2q(omega: float = 0.0) -> HmmModel:
    """G = Z, H_EP = Z⊗Z, L = 1⊗Z: the signal lies in the full-system noise span."""
    return HmmModel(d_E=2, d_P=2, H_EP=np.kron(Z, Z), G=Z, jumps=(np.kron(I2, Z),),
                    omega=omega, name="dephasing-2q")


def example_3e() -> HmmModel:
    """L1 = |0⟩⟨0|⊗1, L2 = |1⟩⟨1|⊗Z with no Hamiltonian: scaling depends on the environment state."""
    p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    return HmmModel(d_E=2, d_P=2, H_EP=np.zeros((4, 4)), G=Z,
                    jumps=(np.kron(p0, I2), np.kron(p1, Z)), name="example-3e")


def spin1_example(tau: float = 0.5, delta: float = 1.0) -> HmmModel:
    """Qubit probe coupled to a spin-1 by τ(S_z⊗Z + S_x⊗X) with environment splitting Δ S_z².

    The splitting carries no signal, so it sits in H_EP as Δ S_z²⊗1.
    """
    h = delta * np.kron(S_Z @ S_Z, I2) + tau * (np.kron(S_Z, Z) + np.kron(S_X, X))
    return HmmModel(d_E=3, d_P=2, H_EP=h, G=Z, name="spin1-example")


def bit_flip(rate: float = 1.0) -> HmmModel:
    """G = Z with L = √rate·1⊗X on a qubit environment: the signal escapes the noise span."""
    return HmmModel(d_E=2, d_P=2, H_EP=np.zeros((4, 4)), G=Z,
                    jumps=(math.sqrt(rate) * np.kron(I2, X),), name="bit-flip")


def amplitude_damping(rate: float = 1.0) -> HmmModel:
    """Markovian amplitude damping L = √rate·σ₋ with a trivial environment."""
    return HmmModel(d_E=1, d_P=2, H_EP=np.zeros((2, 2)), G=Z,
                    jumps=(math.sqrt(rate) * SIGMA_MINUS,), name="amplitude-damping")


def zz_coupling(g: float = 1.0) -> HmmModel:
    """Jump-free g Z⊗Z coupling with an auxiliary qubit for the logical envelope."""
    return HmmModel(d_E=2, d_P=2, H_EP=g * np.kron(Z, Z), G=Z, d_A=2, name="zz-coupling")


def random_model(rng: RngStream, h_e: bool = False, n_jumps: int = 3) -> tuple[HmmModel, np.ndarray]:
    """Ginibre jumps and H_EP = (A + A†)/2 on two qubits, plus a Haar environment state.

    The draws do not depend on ``h_e`` so both variants share one model.
    """
    a = ginibre(4, 4, rng)
    jumps = tuple(ginibre(4, 4, rng) for _ in range(n_jumps))
    env = haar_state(2, rng)
    model = HmmModel(d_E=2, d_P=2, H_EP=0.5 * (a + a.conj().T), G=Z, H_E=Z if h_e else None,
                     jumps=jumps, name="random")
    return model, env


PRESETS = {
    "heisenberg": heisenberg,
    "dephasing-2q": dephasing_2q,
    "example-3e": example_3e,
    "spin1-example": spin1_example,
    "bit-flip": bit_flip,
    "amplitude-damping": amplitude_damping,
    "zz-coupling": zz_coupling,
}


def preset(name: str, **params) -> HmmModel:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](**params)
