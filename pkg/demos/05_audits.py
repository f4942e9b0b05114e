"""Running the auditor, including what failure looks like.

Desk-scale session counts keep this quick; the statistical gates are set
accordingly (the full-scale gates live in the acceptance suite).
"""

from sidepir import SchemeParams
from sidepir.audit import (
    DirectDownloadScheme,
    LayeredScheme,
    SymmetricScheme,
    audit_correctness,
    audit_db_privacy,
    audit_user_privacy,
    measure_rate,
)


def main():
    layered = LayeredScheme(SchemeParams(3, 1, 2, 1))
    symmetric = SymmetricScheme(SchemeParams(3, 0, 3, 1))

    print("positive audits:")
    print(audit_correctness(layered, sessions=100, seed=1).summary())
    print(measure_rate(layered, sessions=10, seed=1).summary())
    print(measure_rate(SymmetricScheme(SchemeParams(3, 0, 4, 2)),
                       sessions=10, seed=1).summary())
    print(audit_user_privacy(layered, sessions=5000, seed=1,
                             tv_threshold=0.06).summary())
    print(audit_db_privacy(symmetric, sessions=5000, seed=1,
                           tv_threshold=0.06).summary())
    print()

    print("negative controls (these must fail):")
    naive = DirectDownloadScheme(SchemeParams(3, 1, 2, 1))
    print(audit_user_privacy(naive, sessions=500, seed=1).summary())
    unmasked = SymmetricScheme(SchemeParams(3, 0, 3, 1), masked=False)
    print(audit_db_privacy(unmasked, sessions=2000, seed=1).summary())
    leaky = LayeredScheme(SchemeParams(3, 1, 2, 1))
    print(audit_db_privacy(leaky, sessions=1000, seed=1).summary())
    print()
    print("the last one documents why the symmetric variant exists: the")
    print("layered scheme is private for the client but reconstructs other")
    print("messages' streams on the client side.")


if __name__ == "__main__":
    main()
