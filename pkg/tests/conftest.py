"""Shared helpers for the test suite (imported, not fixtures)."""

import numpy as np


def random_density(rng, d):
    """Full-rank random density matrix via a Ginibre draw."""
    dim = 2**d
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_pauli_letters(rng, d):
    """Random nontrivial Pauli string (never the all-identity)."""
    while True:
        letters = "".join(rng.choice(list("IXYZ")) for _ in range(d))
        if set(letters) != {"I"}:
            return letters
