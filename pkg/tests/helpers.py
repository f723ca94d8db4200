import numpy as np


def rand_matrix(seed: int, n: int, m: int | None = None) -> np.ndarray:
    g = np.random.default_rng(seed)
    m = n if m is None else m
    return g.standard_normal((n, m)) + 1j * g.standard_normal((n, m))


def rand_density(seed: int, n: int, rank: int | None = None) -> np.ndarray:
    a = rand_matrix(seed, n, rank or n)
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_diagonal_model(seed: int, d_E: int = 2, n_jumps: int = 2, h_e: bool = True, omega: float = 0.37):
    """Model whose couplings are block diagonal in a Haar-random environment basis.

    Returns (model, basis vectors).
    """
    from hmmq.model import HmmModel
    from hmmq.numkit import RngStream, dag, ginibre, haar_unitary, random_hermitian

    rng = RngStream(seed, 99)
    v = haar_unitary(d_E, rng)
    phis = [v[:, i] for i in range(d_E)]

    def blockdiag(blocks):
        return sum(np.kron(np.outer(p, p.conj()), b) for p, b in zip(phis, blocks))

    h = blockdiag([random_hermitian(2, rng) for _ in phis])
    jumps = tuple(blockdiag([0.5 * ginibre(2, 2, rng) for _ in phis]) for _ in range(n_jumps))
    he = v @ np.diag(np.linspace(0.3, -0.8, d_E)) @ dag(v) if h_e else None
    g = random_hermitian(2, rng)
    return HmmModel(d_E, 2, h, g, H_E=he, jumps=jumps, omega=omega), phis
