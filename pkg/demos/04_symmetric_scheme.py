"""The symmetric variant: the client learns nothing beyond its message.

Queries are evaluations of masking polynomials of degree < T plus an
indicator monomial for the desired message; every database answers with a
single symbol and adds a shared masking polynomial the client never sees.
Interpolating the answers yields the desired message in the top
coefficients while the shared mask keeps the low ones uniform.
"""

import numpy as np

from sidepir import SchemeParams, random_store
from sidepir import linalg
from sidepir.stpir_psi import (
    derive_common_randomness,
    make_sym_params,
    sym_answer,
    sym_decode,
    sym_query,
    sym_sum_shortcut,
)

SECRET = bytes.fromhex("00112233445566778899aabbccddeeff" * 2)


def main():
    params = SchemeParams(K=3, M=0, N=4, T=2)
    sp = make_sym_params(params)
    print(f"{params.label()}: messages are N-T = {sp.message_length} symbols; "
          f"evaluation points {sp.lambdas.tolist()}")

    rng = np.random.default_rng(11)
    store = random_store(sp.field, params.K, sp.message_length, rng)
    theta = 2

    queries = sym_query(sp, theta, rng)
    print(f"each database receives K*(N-T) = {queries.shape[1] * queries.shape[2]} "
          "masked coordinates; any 2 databases' coordinates are jointly uniform")

    session_id = rng.bytes(16)
    cr = derive_common_randomness(SECRET, session_id, params.T, sp.field)
    print(f"session {session_id.hex()[:16]}...: servers derive sigma = "
          f"{cr.sigma.tolist()} from their shared secret ({params.T} symbols, "
          f"rho = {params.T}/{params.N - params.T})")

    answers = np.array([sym_answer(queries[n], store, cr, int(sp.lambdas[n]))
                        for n in range(params.N)], dtype=sp.field.dtype)
    print(f"answers (one symbol each): {answers.tolist()}")

    vander = np.stack([sp.field.pow(sp.lambdas, j) for j in range(params.N)], axis=1)
    coeffs = linalg.solve(sp.field, vander, answers)
    print(f"interpolated coefficients: low {params.T} masked -> "
          f"{coeffs[:params.T].tolist()}, top {params.N - params.T} carry the "
          f"message -> {coeffs[params.T:].tolist()}")

    got = sym_decode(answers, sp)
    assert np.array_equal(got, store.message(theta))
    print(f"decoded message {theta} exactly; rate "
          f"{sp.message_length}/{params.N} = 1 - T/N")
    print()

    cached = store.side_information({1, 3})
    direct = sym_sum_shortcut(store, cached, 2)
    assert np.array_equal(direct, store.message(2))
    print("caching all but one message: download the plain sum from a single")
    print("database and strip the cache; rate 1, no shared randomness at all.")


if __name__ == "__main__":
    main()
