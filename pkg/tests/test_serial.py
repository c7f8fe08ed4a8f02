import numpy as np
import pytest

from faultkem.errors import ParameterError
from faultkem.ring import Seed
from faultkem.schemes import get_params, kem_encaps, kem_keygen
from faultkem.serial import (
    ciphertext_from_text,
    ciphertext_to_text,
    keypair_from_text,
    keypair_to_text,
    public_key_from_text,
    public_key_to_text,
)


@pytest.mark.parametrize("scheme_id", ["kyber768", "saber", "lpr-generic"])
def test_roundtrips(scheme_id):
    kp = kem_keygen(get_params(scheme_id), Seed.from_int(21))
    ct, _ = kem_encaps(kp.pk, seed=Seed.from_int(22))

    pk2 = public_key_from_text(public_key_to_text(kp.pk))
    assert pk2.a_seed == kp.pk.a_seed
    assert np.array_equal(pk2.b, kp.pk.b)

    kp2 = keypair_from_text(keypair_to_text(kp))
    assert np.array_equal(kp2.s, kp.s)
    assert kp2.z == kp.z and kp2.h_pk == kp.h_pk
    assert kp2.pk.to_bytes == kp.pk.to_bytes

    ct2 = ciphertext_from_text(ciphertext_to_text(ct))
    assert ct2 == ct


def test_header_and_field_layout_is_stable():
    kp = kem_keygen(get_params("kyber768"), Seed.from_int(21))
    ct, _ = kem_encaps(kp.pk, seed=Seed.from_int(22))
    text = ciphertext_to_text(ct)
    lines = text.splitlines()
    assert lines[0] == '{"scheme_id": "kyber768", "role": "ciphertext"}'
    assert lines[1].startswith("u=") and lines[2].startswith("v=")
    assert len(lines[1]) == 2 + 4 * 3 * 256  # 4 hex digits per coefficient


def test_malformed_inputs():
    with pytest.raises(ParameterError):
        ciphertext_from_text("")
    with pytest.raises(ParameterError):
        ciphertext_from_text("not json\nu=00\nv=00\n")
    kp = kem_keygen(get_params("saber"), Seed.from_int(5))
    with pytest.raises(ParameterError):
        public_key_from_text(keypair_to_text(kp))  # wrong role
    text = public_key_to_text(kp.pk).replace("b=", "b=ff")  # length corrupted
    with pytest.raises(ParameterError):
        public_key_from_text(text)
