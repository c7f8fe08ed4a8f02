import numpy as np
import pytest

from faultkem.ring import Seed
from faultkem.schemes import get_params, kem_keygen, keypair_from_parts


@pytest.fixture(scope="session")
def kyber768():
    return get_params("kyber768")


@pytest.fixture(scope="session")
def saber():
    return get_params("saber")


@pytest.fixture(scope="session")
def keypairs():
    """One seeded keypair per scheme, shared across the session."""
    cache = {}

    def get(scheme_id, seed=1):
        key = (scheme_id, seed)
        if key not in cache:
            cache[key] = kem_keygen(get_params(scheme_id), Seed.from_int(seed))
        return cache[key]

    return get


def planted_key(params, coeffs: dict, seed=9):
    """Keypair whose secret holds the given {(poly, idx): value} entries and
    zeros elsewhere; decryption-side tests only need s to be exact."""
    rng = np.random.default_rng(seed)
    a = rng.integers(0, params.q, (params.l, params.l, params.n), dtype=np.int64)
    s = np.zeros((params.l, params.n), dtype=np.int64)
    for (i, j), val in coeffs.items():
        s[i, j] = val % params.q
    return keypair_from_parts(params, a, s)
