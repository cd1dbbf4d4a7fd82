"""Command-line front end: encode files to shards, repair, reconstruct, verify, bench."""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .balanced import (PRESETS, BalancedCode, BibdDesign, balanced_encode, balanced_reconstruct,
                       balanced_repair, load_preset, balanced_beta, validate_bibd)
from .bandwidth_meter import (COMPARISON_COLUMNS, analytic_bandwidth, assert_measured, compare_table,
                              comparison_cells, legacy_average_parity_bandwidth, rows_to_csv, rows_to_markdown)
from .base_msr import BaseParams, verify_mds
from .config import CodeConfig, ConfigError
from .gf_matrix import field
from .piggyback import (INJECTIONS, InvalidTableError, PiggybackedCode, build_piggybacked_code, pb_encode,
                        pb_reconstruct, pb_repair, table_parity_bandwidth, validate_injection)
from .shardfile import (FLAG_SUBOPTIMAL, ROLE_MIXED, ROLE_PARITY, ROLE_SYSTEMATIC, ShardFile, ShardFormatError,
                        atomic_write, shard_name)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2

# codes with more base symbols per node than this skip data-path checks in `verify`
VERIFY_SCALE_LIMIT = 4096


class UsageError(Exception):
    pass


class Codec:
    """Uniform view of piggybacked and balanced codes for file I/O."""

    def __init__(self, code: PiggybackedCode | BalancedCode):
        self.code = code
        self.balanced = isinstance(code, BalancedCode)
        self.n, self.k = code.n, code.k
        if self.balanced:
            self.source_shape = (code.b, code.k, code.r, code.alpha_base)
            self.node_shape = (code.b, code.r, code.alpha_base)
        else:
            self.source_shape = (code.k, code.s, code.alpha_prime)
            self.node_shape = (code.s, code.alpha_prime)
        self.data_symbols = math.prod(self.source_shape)
        self.alpha = math.prod(self.node_shape)
        gf = code.gf
        self.wire_dtype = np.dtype("<u2") if gf.w == 16 else np.dtype(np.uint8)
        self.dtype = gf.dtype

    def role(self, node: int) -> int:
        if self.balanced:
            return ROLE_MIXED
        return ROLE_SYSTEMATIC if node <= self.k else ROLE_PARITY

    def encode(self, symbols: np.ndarray) -> np.ndarray:
        src = symbols.reshape((-1,) + self.source_shape)
        if self.balanced:
            return balanced_encode(self.code, src)
        return pb_encode(self.code, src)

    def reconstruct(self, payloads: dict) -> np.ndarray:
        if self.balanced:
            out = balanced_reconstruct(self.code, payloads)
        else:
            out = pb_reconstruct(self.code, payloads)
        return out.reshape(out.shape[0], -1)

    def repair(self, node: int, cluster: dict):
        if self.balanced:
            return balanced_repair(self.code, node, cluster)
        return pb_repair(self.code, node, cluster)

    def expected_total(self, node: int) -> Fraction:
        """Analytic repair download for one stripe, in multiples of alpha."""
        code = self.code
        if self.balanced:
            t = balanced_beta(code.n, code.r, code.design.lam)
            return (code.n - 1) * t.beta
        if node <= code.k:
            return analytic_bandwidth(code.k, code.r, code.s).gamma_system
        if code.optimal:
            return analytic_bandwidth(code.k, code.r, code.s).gamma_parity
        return Fraction(table_parity_bandwidth(code.table, code.k, node - code.k), code.s)

    def expected_per_helper(self) -> Fraction | None:
        if self.balanced:
            return balanced_beta(self.code.n, self.code.r, self.code.design.lam).beta
        return None

    def to_bytes(self, payload: np.ndarray) -> bytes:
        return payload.astype(self.wire_dtype).tobytes()

    def from_bytes(self, blob: bytes, stripes: int) -> np.ndarray:
        arr = np.frombuffer(blob, dtype=self.wire_dtype).astype(self.dtype)
        return arr.reshape((stripes,) + self.node_shape)


def _load_config(path) -> CodeConfig:
    try:
        return CodeConfig.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except (ConfigError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _build(config: CodeConfig, allow_suboptimal: bool) -> Codec:
    try:
        return Codec(config.build(allow_suboptimal=allow_suboptimal))
    except InvalidTableError as exc:
        raise UsageError(str(exc)) from None


def cmd_encode(args) -> int:
    config = _load_config(args.config)
    codec = _build(config, args.allow_suboptimal)
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from None
    width = codec.wire_dtype.itemsize
    stripe_bytes = codec.data_symbols * width
    stripes = max(1, -(-len(data) // stripe_bytes))
    padded = data + bytes(stripes * stripe_bytes - len(data))
    symbols = np.frombuffer(padded, dtype=codec.wire_dtype).astype(codec.dtype)
    payloads = codec.encode(symbols)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = config.digest()
    flags = 0 if codec.balanced or codec.code.optimal else FLAG_SUBOPTIMAL
    nodes = {}
    for node in range(1, codec.n + 1):
        shard = ShardFile(digest, node, codec.role(node), stripes, len(data),
                          codec.to_bytes(payloads[:, node - 1]), flags)
        blob = shard.to_bytes()
        atomic_write(out / shard_name(node), blob)
        nodes[str(node)] = {"file": shard_name(node), "sha256": hashlib.sha256(blob).hexdigest()}
    manifest = {"config": config.to_dict(), "config_digest": digest.hex(), "original_length": len(data),
                "stripes": stripes, "symbol_bytes": width, "suboptimal": bool(flags & FLAG_SUBOPTIMAL),
                "nodes": nodes}
    atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    print(f"encoded {len(data)} bytes into {codec.n} shards x {stripes} stripe(s) in {out}")
    return EXIT_OK


def _read_shards(codec: Codec, config: CodeConfig, directory: Path, nodes) -> tuple:
    digest = config.digest()
    shards = {}
    for node in nodes:
        path = directory / shard_name(node)
        if not path.exists():
            continue
        try:
            shard = ShardFile.read(path)
        except ShardFormatError as exc:
            raise UsageError(f"{path}: {exc}") from None
        if shard.digest != digest:
            raise UsageError(f"{path}: shard was written with a different config")
        if shard.node != node:
            raise UsageError(f"{path}: header says node {shard.node}")
        if len(shard.payload) != shard.stripes * codec.alpha * codec.wire_dtype.itemsize:
            raise UsageError(f"{path}: payload length does not match the config")
        shards[node] = shard
    return shards


def _parse_nodes(text: str) -> list:
    try:
        return sorted({int(x) for x in text.replace(" ", "").split(",") if x})
    except ValueError:
        raise UsageError(f"bad node list {text!r}") from None


def cmd_reconstruct(args) -> int:
    config = _load_config(args.config)
    codec = _build(config, allow_suboptimal=True)
    nodes = _parse_nodes(args.nodes)
    if len(nodes) != codec.k or not all(1 <= x <= codec.n for x in nodes):
        raise UsageError(f"need exactly k={codec.k} distinct node ids in 1..{codec.n}")
    shards = _read_shards(codec, config, Path(args.shards), nodes)
    missing = [x for x in nodes if x not in shards]
    if missing:
        raise UsageError(f"missing shards for nodes {missing}")
    first = next(iter(shards.values()))
    payloads = {x: codec.from_bytes(s.payload, s.stripes) for x, s in shards.items()}
    flat = codec.reconstruct(payloads)
    data = codec.to_bytes(flat.reshape(-1))[: first.original_length]
    atomic_write(args.out, data)
    print(f"reconstructed {len(data)} bytes from nodes {nodes}")
    return EXIT_OK


def cmd_repair(args) -> int:
    config = _load_config(args.config)
    codec = _build(config, args.allow_suboptimal)
    directory = Path(args.shards)
    node = args.node
    if not 1 <= node <= codec.n:
        raise UsageError(f"node must be in 1..{codec.n}")
    helpers = [x for x in range(1, codec.n + 1) if x != node]
    shards = _read_shards(codec, config, directory, helpers)
    missing = [x for x in helpers if x not in shards]
    if missing:
        raise UsageError(f"single failure only: shards for nodes {missing} are missing as well as node {node}")
    stripes = {s.stripes for s in shards.values()}
    if len(stripes) != 1:
        raise UsageError("shards disagree on stripe count")
    stripe_count = stripes.pop()
    sample = next(iter(shards.values()))
    if sample.flags & FLAG_SUBOPTIMAL and not args.allow_suboptimal:
        raise UsageError("shards were encoded with a suboptimal table; pass --allow-suboptimal")
    cluster = {x: codec.from_bytes(s.payload, s.stripes) for x, s in shards.items()}
    payload, ledger = codec.repair(node, cluster)
    shard = ShardFile(sample.digest, node, codec.role(node), stripe_count, sample.original_length,
                      codec.to_bytes(payload), sample.flags)
    blob = shard.to_bytes()
    atomic_write(directory / shard_name(node), blob)
    if args.ledger:
        atomic_write(args.ledger, ledger.to_csv().encode())
    expected = codec.expected_total(node) * stripe_count
    report = assert_measured(ledger, expected, codec.alpha)
    status = EXIT_OK
    print(f"repaired node {node}: downloaded {report.total} symbols, expected {report.expected_symbols} "
          f"-> {'match' if report.match else 'MISMATCH'}")
    if not report.match:
        status = EXIT_MISMATCH
    per = codec.expected_per_helper()
    if per is not None:
        want = per * codec.alpha * stripe_count
        uneven = {h: c for h, c in report.per_helper.items() if c != want}
        if uneven:
            print(f"per-helper download differs from {want}: {uneven}")
            status = EXIT_MISMATCH
    manifest_path = directory / "manifest.json"
    if manifest_path.exists():
        recorded = json.loads(manifest_path.read_text())["nodes"].get(str(node), {}).get("sha256")
        if recorded and recorded != hashlib.sha256(blob).hexdigest():
            print("regenerated shard differs from the manifest checksum")
            status = EXIT_MISMATCH
    return status


def _check(lines: list, name: str, ok: bool, detail: str = "") -> bool:
    lines.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f": {detail}" if detail else ""))
    return ok


def cmd_verify(args) -> int:
    config = _load_config(args.config)
    lines: list = []
    ok = True
    table = config.table() if config.table() is not None else INJECTIONS[config.injection](config.r, config.s)
    report = validate_injection(table)
    ok &= _check(lines, "injection table optimal", report.optimal, "; ".join(report.violations))
    small = config.r**config.k <= VERIFY_SCALE_LIMIT
    if config.mode == "balanced":
        design = config.design()
        br = validate_bibd(design)
        ok &= _check(lines, "bibd", br.ok, f"n={design.n} r={design.block_size} lambda={design.lam} e={br.e} b={br.b}"
                     + ("" if br.ok else f" ({br.problems[0]})"))
        t = balanced_beta(design.n, design.block_size, design.lam)
        ok &= _check(lines, "balanced beta closed forms agree", t.beta == t.block_form,
                     f"beta={t.beta} alpha, {t.overhead} x optimal")
        inc = design.incidence()
        ok &= _check(lines, "role counts", bool(np.all(inc.sum(axis=1) == br.e)), f"each node parity in {br.e} instances")
    if not report.valid:
        lines.append("SKIP  code construction: table unusable")
    elif not small:
        lines.append(f"SKIP  MDS and data-path checks: {config.r}^{config.k} symbols per base node exceeds desk scale")
    else:
        try:
            codec = Codec(config.build(allow_suboptimal=True))
        except Exception as exc:  # construction failure is a verification failure
            ok &= _check(lines, "construction", False, str(exc))
            codec = None
        if codec is not None:
            code = codec.code
            bases = [inst.base for inst in code.instances] if codec.balanced else [code.base]
            for idx, base in enumerate(bases, start=1):
                mds = verify_mds(base)
                label = f"MDS (instance {idx})" if codec.balanced else "MDS"
                ok &= _check(lines, label, mds.all_invertible, f"{mds.subsets_checked} subsets with parity nodes")
            rng = np.random.default_rng(config.seed)
            gf = field(config.w)
            src = gf.random(rng, (args.codewords, codec.data_symbols))
            payloads = codec.encode(src)
            bad = [sub for sub in itertools.combinations(range(1, codec.n + 1), codec.k)
                   if not np.array_equal(codec.reconstruct({x: payloads[:, x - 1] for x in sub}), src)]
            ok &= _check(lines, "reconstruction from every k-subset", not bad,
                         f"{math.comb(codec.n, codec.k)} subsets x {args.codewords} codewords"
                         + (f", failing {bad[:3]}" if bad else ""))
            cluster = {x: payloads[:, x - 1] for x in range(1, codec.n + 1)}
            for node in range(1, codec.n + 1):
                out, ledger = codec.repair(node, cluster)
                exact = np.array_equal(out, payloads[:, node - 1])
                rep = assert_measured(ledger, codec.expected_total(node) * args.codewords, codec.alpha)
                ok &= _check(lines, f"repair node {node}", exact and rep.match,
                             f"{rep.total} symbols, expected {rep.expected_symbols}")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_MISMATCH


def _parse_grid(text: str) -> dict:
    grid = {}
    for part in text.replace(" ", ";").split(";"):
        if not part:
            continue
        try:
            key, values = part.split("=")
            grid[key.strip()] = [int(v) for v in values.split(",") if v]
        except ValueError:
            raise UsageError(f"bad grid term {part!r}; expected e.g. 'k=4,8;r=2;s=2'") from None
    if not set(grid) <= {"k", "r", "s"} or "k" not in grid or "r" not in grid:
        raise UsageError("grid needs k= and r= terms (s= optional, defaults to r)")
    return grid


def frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


BENCH_COLUMNS = ["k", "r", "s", "alpha_prime", "alpha", "msr_bound", "gamma_system", "measured_system",
                 "system_match", "gamma_parity", "measured_parity", "parity_match", "legacy", "legacy_modified"]


def bench_rows(grid: dict, seed: int = 0) -> list:
    rows = []
    for k, r in itertools.product(grid["k"], grid["r"]):
        for s in grid.get("s", [r]):
            if not 2 <= s <= r <= k:
                continue
            code = build_piggybacked_code(BaseParams(k, r, 16, seed), s, verify=False)
            rng = np.random.default_rng(seed)
            payloads = pb_encode(code, code.gf.random(rng, (code.k, code.s, code.alpha_prime)))
            cluster = {x: payloads[x - 1] for x in range(1, code.n + 1)}
            _, sys_ledger = pb_repair(code, 1, cluster)
            _, par_ledger = pb_repair(code, k + 1, cluster)
            analytic = analytic_bandwidth(k, r, s)
            legacy = legacy_average_parity_bandwidth(k, r)
            sys_rep = assert_measured(sys_ledger, analytic.gamma_system, code.alpha)
            par_rep = assert_measured(par_ledger, analytic.gamma_parity, code.alpha)

            rows.append([str(k), str(r), str(s), str(code.alpha_prime), str(code.alpha),
                         frac(analytic.gamma_msr_bound), frac(analytic.gamma_system),
                         frac(Fraction(sys_rep.total, code.alpha)), str(sys_rep.match),
                         frac(analytic.gamma_parity), frac(Fraction(par_rep.total, code.alpha)), str(par_rep.match),
                         frac(legacy.single_piggyback), frac(legacy.modified)])
    return rows


def cmd_bench(args) -> int:
    grid = _parse_grid(args.grid)
    rows = bench_rows(grid, args.seed)
    text = rows_to_markdown(BENCH_COLUMNS, rows) if str(args.out).endswith(".md") else rows_to_csv(BENCH_COLUMNS, rows)
    atomic_write(args.out, text.encode())
    print(rows_to_markdown(BENCH_COLUMNS, rows), end="")
    all_match = all(row[8] == "True" and row[11] == "True" for row in rows)
    return EXIT_OK if all_match else EXIT_MISMATCH


def cmd_bibd(args) -> int:
    if args.validate:
        try:
            design = BibdDesign.from_json(json.loads(Path(args.validate).read_text()))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read design: {exc}") from None
        report = validate_bibd(design)
        print(f"n={design.n} r={design.block_size} lambda={design.lam} e={report.e} b={report.b} "
              f"blocks={design.b} -> {'ok' if report.ok else 'INVALID'}")
        for problem in report.problems:
            print(f"  {problem}")
        return EXIT_OK if report.ok else EXIT_MISMATCH
    if not args.preset or not args.emit:
        raise UsageError("use --validate FILE or --preset NAME --emit FILE")
    try:
        design = load_preset(args.preset)
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    atomic_write(args.emit, (json.dumps(design.to_json()) + "\n").encode())
    print(f"wrote {args.preset} design with {design.b} blocks to {args.emit}")
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    try:
        analytic = analytic_bandwidth(args.k, args.r, args.s)
        legacy = legacy_average_parity_bandwidth(args.k, args.r)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"k={args.k} r={args.r} s={args.s}  (multiples of alpha = {args.s} alpha')")
    print(f"  MSR bound           {analytic.gamma_msr_bound}")
    print(f"  gamma_system        {analytic.gamma_system}")
    print(f"  gamma_parity        {analytic.gamma_parity}")
    print(f"  single piggyback    {legacy.single_piggyback}  (alpha = 2 alpha')")
    print(f"  modified piggyback  {legacy.modified}  (alpha = 2 alpha')")
    rows = [comparison_cells(row) for row in compare_table([args.k], args.r, args.s)]
    print(rows_to_markdown(COMPARISON_COLUMNS, rows), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="piggymsr", description="Piggybacked MSR erasure codes.")
    parser.add_argument("-V", "--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="split a file into k+r shards")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output shard directory")
    p.add_argument("--allow-suboptimal", action="store_true")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("reconstruct", help="rebuild the file from any k shards")
    p.add_argument("--config", required=True)
    p.add_argument("--shards", required=True)
    p.add_argument("--nodes", required=True, help="comma-separated node ids")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("repair", help="regenerate one missing shard and meter the download")
    p.add_argument("--config", required=True)
    p.add_argument("--shards", required=True)
    p.add_argument("--node", required=True, type=int)
    p.add_argument("--ledger", help="write the transfer ledger as CSV")
    p.add_argument("--allow-suboptimal", action="store_true")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("verify", help="run MDS, table, design and repair checks")
    p.add_argument("--config", required=True)
    p.add_argument("--codewords", type=int, default=2)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="analytic vs measured repair bandwidth table")
    p.add_argument("--grid", required=True, help="e.g. 'k=4,8;r=2,3;s=2'")
    p.add_argument("--out", required=True, help="CSV, or Markdown when the name ends in .md")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bibd", help="validate or emit block designs")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--validate", metavar="FILE")
    g.add_argument("--preset", choices=PRESETS)
    p.add_argument("--emit", metavar="FILE")
    p.set_defaults(func=cmd_bibd)

    p = sub.add_parser("bandwidth", help="print the closed-form bandwidths")
    p.add_argument("--k", required=True, type=int)
    p.add_argument("--r", required=True, type=int)
    p.add_argument("--s", required=True, type=int)
    p.set_defaults(func=cmd_bandwidth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
