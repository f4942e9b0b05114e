"""Command-line interface.

Subcommands:
  capacity   closed-form capacity for a parameter point
  gen-store  write a random replicated store (and optional side files)
  serve      run one database server
  retrieve   fetch a message from N running servers
  audit      run correctness / user-privacy / db-privacy / rate audits
  bench      rate-vs-capacity table over a parameter grid, as CSV

Exit codes: 0 success, 1 failed audit or retrieval, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction

import numpy as np

from . import audit as audit_mod
from . import client as client_mod
from . import wire
from .capacity import (
    SchemeParams,
    capacity_stpir_psi,
    capacity_tpir_psi,
    desk_grid,
)
from .errors import PirError
from .field import standard_field
from .server import DatabaseServer
from .store import random_store
from .stpir_psi import sym_field_width
from .tpir_psi import minimum_field_width

SECRET_ENV = "SIDEPIR_SECRET"


def _add_params(parser: argparse.ArgumentParser, need_m: bool = True) -> None:
    parser.add_argument("--K", type=int, required=True, help="number of messages")
    parser.add_argument("--M", type=int, required=need_m, default=0,
                        help="number of cached messages")
    parser.add_argument("--N", type=int, required=True, help="number of databases")
    parser.add_argument("--T", type=int, required=True, help="collusion threshold")
    parser.add_argument("--w", type=int, choices=(4, 8, 16), default=None,
                        help="symbol width in bits (default: smallest adequate)")


def _params(args) -> SchemeParams:
    return SchemeParams(K=args.K, M=args.M, N=args.N, T=args.T, w=args.w)


def _parse_fraction(text: str) -> Fraction:
    return Fraction(text)


def _load_secret(args) -> bytes | None:
    if getattr(args, "secret_file", None):
        blob = open(args.secret_file, "rb").read().strip()
        try:
            return bytes.fromhex(blob.decode())
        except (UnicodeDecodeError, ValueError):
            return blob
    env = os.environ.get(SECRET_ENV)
    if env:
        return bytes.fromhex(env)
    return None


def _scheme_store_shape(params: SchemeParams, scheme: str) -> tuple[int, int]:
    """(width, message length) for a store serving the given scheme."""
    if scheme == "tpir":
        w = params.w or minimum_field_width(params)
        length = params.N ** params.K
    else:
        w = params.w or sym_field_width(params)
        length = params.N - params.T
        if length < 1:
            raise PirError("symmetric store needs T < N")
    return w, length


def cmd_capacity(args) -> int:
    params = _params(args)
    if args.symmetric:
        if args.rho is None:
            print("--symmetric requires --rho", file=sys.stderr)
            return 2
        print(capacity_stpir_psi(params, _parse_fraction(args.rho)))
    else:
        print(capacity_tpir_psi(params))
    return 0


def cmd_gen_store(args) -> int:
    params = _params(args)
    w, length = _scheme_store_shape(params, args.scheme)
    field = standard_field(w)
    rng = np.random.default_rng(args.seed)
    store = random_store(field, params.K, length, rng)
    wire.write_store(args.out, store)
    print(f"wrote {args.out}: K={params.K} L={length} w={w}")
    if args.extract_side:
        indices = sorted(int(i) for i in args.extract_side.split(","))
        side = store.side_information(indices)
        side_store = type(store)(field=field,
                                 messages=np.stack([side[i] for i in indices]))
        wire.write_store(args.side_out, side_store)
        print(f"wrote {args.side_out}: cached messages {indices}")
    return 0


def cmd_serve(args) -> int:
    store = wire.read_store(args.store)
    secret = _load_secret(args)
    server = DatabaseServer(store, role=args.role, secret=secret,
                            host=args.host, port=args.port)
    print(f"serving {args.store} as {args.role} on {server.address[0]}:{server.port}",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def _load_side(args, params: SchemeParams):
    if not args.S:
        return {}
    indices = sorted(int(i) for i in args.S.split(","))
    if not args.side_file:
        print("--S requires --side-file", file=sys.stderr)
        raise SystemExit(2)
    side_store = wire.read_store(args.side_file)
    if side_store.num_messages != len(indices):
        raise PirError(
            f"side file holds {side_store.num_messages} messages, --S names {len(indices)}"
        )
    return {i: side_store.messages[pos] for pos, i in enumerate(indices)}


def cmd_retrieve(args) -> int:
    params = _params(args)
    side = _load_side(args, params)
    endpoints = client_mod.tcp_endpoints(args.endpoints)
    transports = [client_mod.TcpTransport(h, p) for h, p in endpoints]
    try:
        result = client_mod.retrieve(transports, params, args.theta, side,
                                     seed=args.seed, scheme=args.scheme,
                                     raw=args.raw)
    finally:
        for t in transports:
            t.close()
    field = standard_field(_scheme_store_shape(params, args.scheme)[0])
    with open(args.out, "wb") as fh:
        fh.write(field.pack(result.message))
    match = "matches" if result.rate == result.capacity else "below"
    print(f"retrieved message {args.theta} -> {args.out}")
    print(f"downloaded {result.downloaded_symbols} symbols "
          f"({result.downloaded_bits} bits), form={result.form}")
    print(f"rate {result.rate} {match} capacity {result.capacity}")
    return 0


def _audit_scheme(args, params: SchemeParams):
    if args.scheme == "tpir":
        return audit_mod.LayeredScheme(params)
    secret = _load_secret(args) or audit_mod.AUDIT_SECRET
    return audit_mod.SymmetricScheme(params, secret=secret)


def cmd_audit(args) -> int:
    reports = []
    if args.test == "rate" and args.grid:
        for params in desk_grid():
            reports.append(audit_mod.measure_rate(
                audit_mod.LayeredScheme(params), sessions=min(args.sessions, 5),
                seed=args.seed))
            if params.K >= 2 and params.M < params.K - 1 and params.T < params.N:
                reports.append(audit_mod.measure_rate(
                    audit_mod.SymmetricScheme(params), sessions=min(args.sessions, 5),
                    seed=args.seed))
    else:
        params = _params(args)
        scheme = _audit_scheme(args, params)
        if args.test == "correctness":
            reports.append(audit_mod.audit_correctness(scheme, args.sessions, args.seed))
        elif args.test == "user-privacy":
            reports.append(audit_mod.audit_user_privacy(scheme, args.sessions, args.seed))
        elif args.test == "db-privacy":
            reports.append(audit_mod.audit_db_privacy(scheme, args.sessions, args.seed))
        elif args.test == "rate":
            reports.append(audit_mod.measure_rate(scheme, args.sessions, args.seed))
    for rep in reports:
        print(rep.summary())
    if args.json:
        import json as _json
        with open(args.json, "w") as fh:
            _json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
        print(f"wrote {args.json}")
    return 0 if all(r.passed for r in reports) else 1


def _parse_grid(spec: str) -> list[SchemeParams]:
    k_max, n_max = 4, 3
    for part in spec.split(","):
        part = part.strip().replace(" ", "")
        if part.upper().startswith("K<="):
            k_max = int(part[3:])
        elif part.upper().startswith("N<="):
            n_max = int(part[3:])
        else:
            raise PirError(f"bad grid component {part!r}; want e.g. 'K<=4,N<=3'")
    return desk_grid(k_max, n_max)


def cmd_bench(args) -> int:
    import csv

    rows = []
    for params in _parse_grid(args.grid):
        schemes = [audit_mod.LayeredScheme(params)]
        if params.K >= 2 and params.M < params.K - 1 and params.T < params.N:
            schemes.append(audit_mod.SymmetricScheme(params))
        for scheme in schemes:
            rep = audit_mod.measure_rate(scheme, sessions=args.sessions, seed=args.seed)
            rows.append({
                "K": params.K, "M": params.M, "N": params.N, "T": params.T,
                "scheme": scheme.name,
                "rate_num": rep.measured_rate.numerator,
                "rate_den": rep.measured_rate.denominator,
                "capacity_num": rep.capacity.numerator,
                "capacity_den": rep.capacity.denominator,
                "match": rep.measured_rate == rep.capacity,
            })
    with open(args.csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    matched = sum(r["match"] for r in rows)
    print(f"wrote {args.csv}: {matched}/{len(rows)} points at capacity")
    return 0 if matched == len(rows) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sidepir",
        description="Private retrieval from replicated databases with cached "
                    "side information: capacity-achieving schemes and audits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capacity", help="print the closed-form capacity")
    _add_params(p)
    p.add_argument("--symmetric", action="store_true",
                   help="symmetric variant (database privacy)")
    p.add_argument("--rho", type=str, default=None,
                   help="shared randomness per desired symbol, e.g. 1/2")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("gen-store", help="generate a random replicated store")
    _add_params(p)
    p.add_argument("--scheme", choices=("tpir", "stpir"), default="tpir")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extract-side", default=None, metavar="I,J",
                   help="also write these cached messages to --side-out")
    p.add_argument("--side-out", default=None)
    p.set_defaults(func=cmd_gen_store)

    p = sub.add_parser("serve", help="run one database server")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", required=True)
    p.add_argument("--role", choices=("tpir", "stpir"), default="tpir")
    p.add_argument("--secret-file", default=None,
                   help=f"shared secret (or set {SECRET_ENV} as hex)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("retrieve", help="retrieve one message from N servers")
    _add_params(p)
    p.add_argument("--endpoints", required=True, help="host:port,host:port,...")
    p.add_argument("--theta", type=int, required=True, help="desired message index")
    p.add_argument("--S", default=None, help="cached message indices, e.g. 2,3")
    p.add_argument("--side-file", default=None,
                   help="store file holding the cached messages (sorted by index)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scheme", choices=("tpir", "stpir"), default="tpir")
    p.add_argument("--raw", action="store_true",
                   help="ship raw answers (no redundancy removal); also arms "
                        "the cached-value consistency check")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("audit", help="run an audit and report pass/fail")
    p.add_argument("test", choices=("correctness", "user-privacy", "db-privacy", "rate"))
    p.add_argument("--K", type=int)
    p.add_argument("--M", type=int, default=0)
    p.add_argument("--N", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--w", type=int, choices=(4, 8, 16), default=None)
    p.add_argument("--scheme", choices=("tpir", "stpir"), default="tpir")
    p.add_argument("--sessions", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", default=None, help="also write reports as JSON")
    p.add_argument("--grid", action="store_true",
                   help="rate only: sweep the standard desk grid")
    p.add_argument("--secret-file", default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", help="rate-vs-capacity table as CSV")
    p.add_argument("--grid", default="K<=4,N<=3")
    p.add_argument("--csv", required=True)
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "audit" and not args.grid:
        missing = [f"--{f}" for f in ("K", "N", "T") if getattr(args, f) is None]
        if missing:
            parser.error(f"audit needs {' '.join(missing)} (or rate --grid)")
    try:
        return args.func(args)
    except PirError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
