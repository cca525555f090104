"""Single-locus genotype states, Hardy-Weinberg founder priors and Mendelian
transmission.

Latent states are indexed ``0 = aa``, ``1 = Aa``, ``2 = AA``. The hazard model
only sees the dominant carrier collapse ``G = carrier(state)``.
"""
from __future__ import annotations

import numpy as np

STATES = ("aa", "Aa", "AA")
CARRIER = np.array([0, 1, 1])
DEFAULT_ALLELE_FREQUENCY = 0.0006

# probability that a parent in each state transmits the mutated allele
_TRANSMIT_A = np.array([0.0, 0.5, 1.0])


def _check_phi(phi):
    if not 0.0 < phi < 1.0:
        raise ValueError(f"allele frequency must lie in (0, 1), got {phi}")


def founder_prior(phi: float) -> np.ndarray:
    """Hardy-Weinberg genotype frequencies ``((1-phi)^2, 2 phi (1-phi), phi^2)``."""
    _check_phi(phi)
    q = 1.0 - phi
    return np.array([q * q, 2.0 * phi * q, phi * phi])


def carrier_prevalence(phi: float) -> float:
    """``Pr(G = 1) = 1 - (1 - phi)^2``, computed without cancellation."""
    _check_phi(phi)
    return phi * (2.0 - phi)


def allele_frequency_for_prevalence(prevalence: float) -> float:
    """Inverse of :func:`carrier_prevalence`."""
    if not 0.0 < prevalence < 1.0:
        raise ValueError(f"prevalence must lie in (0, 1), got {prevalence}")
    return prevalence / (1.0 + np.sqrt(1.0 - prevalence))


def transmission_tensor() -> np.ndarray:
    """``T[f, m, c] = Pr(child = c | father = f, mother = m)``."""
    pf = _TRANSMIT_A[:, None]
    pm = _TRANSMIT_A[None, :]
    T = np.empty((3, 3, 3))
    T[:, :, 0] = (1 - pf) * (1 - pm)
    T[:, :, 1] = pf * (1 - pm) + (1 - pf) * pm
    T[:, :, 2] = pf * pm
    return T


TRANSMISSION = transmission_tensor()


def transmission(child: int, mother: int, father: int) -> float:
    """Mendelian segregation probability with no de-novo mutation."""
    return float(TRANSMISSION[father, mother, child])


def genotype_mask(observed: int | None) -> np.ndarray:
    """Indicator over latent states consistent with an observed carrier status."""
    if observed is None:
        return np.ones(3)
    if observed == 0:
        return np.array([1.0, 0.0, 0.0])
    if observed == 1:
        return np.array([0.0, 1.0, 1.0])
    raise ValueError(f"observed genotype must be 0, 1 or None, got {observed!r}")


def collapse(state_probs) -> np.ndarray:
    """Carrier-status probabilities ``(Pr(G=0), Pr(G=1))`` from latent-state ones."""
    p = np.asarray(state_probs, dtype=float)
    return np.stack([p[..., 0], p[..., 1] + p[..., 2]], axis=-1)
