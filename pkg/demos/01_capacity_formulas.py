"""Capacity formulas at a glance.

Prints the exact retrieval capacity for a sweep of parameters, in both the
plain and the symmetric (database-private) settings, plus the shared
randomness each symmetric retrieval needs.
"""

from fractions import Fraction

from sidepir import SchemeParams, capacity_stpir_psi, capacity_tpir_psi, psi


def main():
    print("How expensive is privacy? rate = desired symbols per downloaded symbol")
    print()
    print("K messages, M cached, N databases, any T of them colluding:")
    print(f"{'K':>3} {'M':>3} {'N':>3} {'T':>3}   {'capacity':>10}")
    for k, m, n, t in [(3, 0, 2, 1), (3, 1, 2, 1), (3, 2, 2, 1),
                       (3, 0, 3, 2), (3, 1, 3, 2), (3, 2, 3, 2),
                       (5, 2, 4, 2), (8, 3, 4, 3)]:
        cap = capacity_tpir_psi(SchemeParams(k, m, n, t))
        print(f"{k:>3} {m:>3} {n:>3} {t:>3}   {str(cap):>10}")
    print()
    print("Caching M messages is worth exactly M fewer messages in the sum:")
    for d in (1, 2, 3, 5):
        print(f"  K-M = {d}: capacity = 1/(1 + 1/2 + ... + (1/2)^{d-1}) "
              f"= {psi(Fraction(1, 2), d)}   (N=2, T=1)")
    print()
    print("Symmetric variant (the databases reveal nothing beyond the request):")
    print("capacity collapses to 1 - T/N, independent of K and M, and needs")
    print("shared server-side randomness of at least T/(N-T) per desired symbol:")
    for n, t in [(2, 1), (3, 1), (3, 2), (4, 2)]:
        p = SchemeParams(4, 0, n, t)
        enough = Fraction(t, n - t)
        print(f"  N={n} T={t}: capacity {capacity_stpir_psi(p, enough)} with "
              f"rho >= {enough}; with less: {capacity_stpir_psi(p, enough - Fraction(1, 100))}")
    print()
    print("Caching all but one message makes even the symmetric problem free:")
    print(f"  K=4, M=3: capacity {capacity_stpir_psi(SchemeParams(4, 3, 3, 2), 0)} "
          "with zero shared randomness")


if __name__ == "__main__":
    main()
