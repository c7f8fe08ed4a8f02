"""Stable text serialization for keys and ciphertexts.

Format: a one-line JSON header ``{"scheme_id": ..., "role": ...}``
followed by one ``name=hex`` line per component. Coefficient arrays are
hex-encoded 4 digits per coefficient (big-endian uint16), poly-major.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ParameterError
from .schemes import Ciphertext, KeyPair, PublicKey, get_params

ROLE_PUBLIC = "public-key"
ROLE_SECRET = "secret-key"
ROLE_CIPHERTEXT = "ciphertext"


def _coeffs_to_hex(arr: np.ndarray) -> str:
    return "".join(f"{int(c):04x}" for c in arr.reshape(-1))


def _hex_to_coeffs(text: str, shape: tuple[int, ...]) -> np.ndarray:
    size = int(np.prod(shape))
    if len(text) != 4 * size:
        raise ParameterError(f"expected {4 * size} hex digits, got {len(text)}")
    vals = [int(text[4 * i : 4 * i + 4], 16) for i in range(size)]
    return np.array(vals, dtype=np.int64).reshape(shape)


def _emit(scheme_id: str, role: str, fields: dict[str, str]) -> str:
    header = json.dumps({"scheme_id": scheme_id, "role": role})
    lines = [header] + [f"{k}={v}" for k, v in fields.items()]
    return "\n".join(lines) + "\n"


def _parse(text: str, expect_role: str) -> tuple[str, dict[str, str]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParameterError("empty serialization")
    try:
        header = json.loads(lines[0])
        scheme_id, role = header["scheme_id"], header["role"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParameterError(f"bad serialization header: {exc}") from exc
    if role != expect_role:
        raise ParameterError(f"expected role {expect_role!r}, got {role!r}")
    fields = {}
    for ln in lines[1:]:
        name, _, value = ln.partition("=")
        if not value:
            raise ParameterError(f"malformed field line {ln!r}")
        fields[name] = value
    return scheme_id, fields


def public_key_to_text(pk: PublicKey) -> str:
    return _emit(
        pk.params.scheme_id,
        ROLE_PUBLIC,
        {"a_seed": pk.a_seed.hex(), "b": _coeffs_to_hex(pk.b)},
    )


def public_key_from_text(text: str) -> PublicKey:
    scheme_id, fields = _parse(text, ROLE_PUBLIC)
    params = get_params(scheme_id)
    return PublicKey(
        params,
        bytes.fromhex(fields["a_seed"]),
        _hex_to_coeffs(fields["b"], (params.l, params.n)),
    )


def keypair_to_text(kp: KeyPair) -> str:
    # sk' carries the public key, H(pk) and z alongside s.
    return _emit(
        kp.params.scheme_id,
        ROLE_SECRET,
        {
            "s": _coeffs_to_hex(kp.s),
            "a_seed": kp.pk.a_seed.hex(),
            "b": _coeffs_to_hex(kp.pk.b),
            "hpk": kp.h_pk.hex(),
            "z": kp.z.hex(),
        },
    )


def keypair_from_text(text: str) -> KeyPair:
    scheme_id, fields = _parse(text, ROLE_SECRET)
    params = get_params(scheme_id)
    pk = PublicKey(
        params,
        bytes.fromhex(fields["a_seed"]),
        _hex_to_coeffs(fields["b"], (params.l, params.n)),
    )
    return KeyPair(
        pk=pk,
        s=_hex_to_coeffs(fields["s"], (params.l, params.n)),
        z=bytes.fromhex(fields["z"]),
        h_pk=bytes.fromhex(fields["hpk"]),
    )


def ciphertext_to_text(ct: Ciphertext) -> str:
    return _emit(
        ct.params.scheme_id,
        ROLE_CIPHERTEXT,
        {"u": _coeffs_to_hex(ct.u), "v": _coeffs_to_hex(ct.v)},
    )


def ciphertext_from_text(text: str) -> Ciphertext:
    scheme_id, fields = _parse(text, ROLE_CIPHERTEXT)
    params = get_params(scheme_id)
    return Ciphertext(
        params,
        _hex_to_coeffs(fields["u"], (params.l, params.n)),
        _hex_to_coeffs(fields["v"], (params.n,)),
    )
