"""Balanced-download composition of r-piggybacked codes over a BIBD.

Instance ``l`` of the composition places its r parity payloads on the nodes of
block ``A_l`` and its k systematic payloads on the complement.  A node payload
is ``(..., b, r, alpha_base)``: one r-cell piggybacked payload per instance.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Mapping, NamedTuple

import numpy as np

from .bandwidth_meter import MeteredCluster, TransferLedger
from .base_msr import BaseParams
from .piggyback import (_repair_parity, _repair_systematic,
                        build_piggybacked_code, pb_encode, pb_reconstruct)


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class BibdDesign:
    n: int
    block_size: int
    lam: int
    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(sorted(int(x) for x in b)) for b in self.blocks))

    @property
    def b(self) -> int:
        return len(self.blocks)

    def incidence(self) -> np.ndarray:
        """Rows are points (nodes), columns are blocks (instances)."""
        m = np.zeros((self.n, self.b), dtype=np.int64)
        for col, block in enumerate(self.blocks):
            for x in block:
                m[x - 1, col] = 1
        return m

    def to_json(self) -> dict:
        return {"n": self.n, "r": self.block_size, "lambda": self.lam, "blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, obj: dict) -> BibdDesign:
        return cls(int(obj["n"]), int(obj["r"]), int(obj["lambda"]), obj["blocks"])


class BibdReport(NamedTuple):
    e: Fraction
    b: Fraction
    ok: bool
    problems: tuple


def validate_bibd(design: BibdDesign) -> BibdReport:
    n, r, lam = design.n, design.block_size, design.lam
    problems = []
    if r < 2 or n <= r:
        problems.append(f"need 2 <= r < n, got n={n}, r={r}")
        return BibdReport(Fraction(0), Fraction(0), False, tuple(problems))
    e = Fraction(lam * (n - 1), r - 1)
    b = Fraction(lam * n * (n - 1), r * (r - 1))
    if e.denominator != 1 or b.denominator != 1:
        problems.append(f"parameters not integral: e={e}, b={b}")
    if design.b != b:
        problems.append(f"block count {design.b} != b={b}")
    point_count = [0] * (n + 1)
    pair_count: dict = {pair: 0 for pair in itertools.combinations(range(1, n + 1), 2)}
    for idx, block in enumerate(design.blocks, start=1):
        if len(block) != r or len(set(block)) != r:
            problems.append(f"block {idx} is not an {r}-subset: {list(block)}")
            continue
        if any(not 1 <= x <= n for x in block):
            problems.append(f"block {idx} has points outside 1..{n}")
            continue
        for x in block:
            point_count[x] += 1
        for pair in itertools.combinations(block, 2):
            pair_count[pair] += 1
    for x in range(1, n + 1):
        if point_count[x] != e:
            problems.append(f"point {x} lies in {point_count[x]} blocks, expected e={e}")
    for pair, c in pair_count.items():
        if c != lam:
            problems.append(f"pair {pair} lies in {c} blocks, expected lambda={lam}")
    return BibdReport(e, b, not problems, tuple(problems))


def cyclic_blocks(n: int, offsets) -> tuple:
    """Blocks ``{(i + o) mod n + 1 : o in offsets}`` for i = 1..n."""
    return tuple(tuple(sorted(((i + o) % n) + 1 for o in offsets)) for i in range(1, n + 1))


def cyclic_bibd(n: int, offsets) -> BibdDesign:
    offsets = tuple(offsets)
    blocks = cyclic_blocks(n, offsets)
    size = len(set(o % n for o in offsets))
    pairs = {}
    for block in blocks:
        for pair in itertools.combinations(block, 2):
            pairs[pair] = pairs.get(pair, 0) + 1
    lam = max(pairs.values(), default=0)
    design = BibdDesign(n, size, lam, blocks)
    report = validate_bibd(design)
    if not report.ok:
        raise DesignError(f"cyclic translation of {offsets} mod {n} is not a BIBD: {report.problems[0]}")
    return design


EXAMPLE_OFFSETS = (-1, 0, 2, 8)
FANO_OFFSETS = (0, 1, 3)


def load_preset(name: str) -> BibdDesign:
    """``13-4-1`` ships as a data file; ``7-3-1`` is the cyclic Fano plane."""
    if name in ("13-4-1", "bibd-13-4-1"):
        text = resources.files("piggymsr").joinpath("data/bibd_13_4_1.json").read_text()
        return BibdDesign.from_json(json.loads(text))
    if name in ("7-3-1", "fano"):
        return cyclic_bibd(7, FANO_OFFSETS)
    raise KeyError(f"unknown BIBD preset {name!r}")


PRESETS = ("13-4-1", "7-3-1")


class BalancedCode:
    def __init__(self, design: BibdDesign, instances: list, role_maps: list):
        self.design = design
        self.instances = instances
        self.role_maps = role_maps
        self.b = design.b
        self.r = design.block_size
        self.n = design.n
        self.k = self.n - self.r
        self.alpha_instance = instances[0].alpha
        self.alpha_base = instances[0].alpha_prime
        self.alpha = self.b * self.alpha_instance
        # inverse role maps: instance-local node id -> global node id
        self.local_to_global = [{loc: glob for glob, loc in m.items()} for m in role_maps]

    def __repr__(self) -> str:
        return f"BalancedCode(n={self.n}, k={self.k}, r={self.r}, b={self.b}, alpha={self.alpha})"

    @property
    def gf(self):
        return self.instances[0].gf

    def parity_instances(self, node: int) -> list:
        return [l for l in range(1, self.b + 1) if self.role_maps[l - 1][node] > self.k]


def build_balanced_code(design: BibdDesign, k: int, w: int = 16, seed: int = 0, verify: bool = True) -> BalancedCode:
    report = validate_bibd(design)
    if not report.ok:
        raise DesignError(f"invalid design: {report.problems[0]}")
    r = design.block_size
    if design.n != k + r:
        raise DesignError(f"design has n={design.n}, but k + r = {k + r}")
    instances = [build_piggybacked_code(BaseParams(k, r, w, (seed + l) % 2**64), r, "main-diag", verify=verify)
                 for l in range(design.b)]
    return BalancedCode(design, instances, assign_roles(design))


def assign_roles(design: BibdDesign) -> list:
    """Per instance, global node -> local node id.

    Block members take parity ids k+1..k+r in sorted order, the complement
    takes systematic ids 1..k in sorted order.
    """
    k = design.n - design.block_size
    role_maps = []
    for block in design.blocks:
        rest = [x for x in range(1, design.n + 1) if x not in block]
        roles = {node: idx for idx, node in enumerate(rest, start=1)}
        roles.update({node: k + idx for idx, node in enumerate(sorted(block), start=1)})
        role_maps.append(roles)
    return role_maps


def balanced_encode(code: BalancedCode, source) -> np.ndarray:
    """Payloads ``(..., n, b, r, alpha_base)`` from source ``(..., b, k, r, alpha_base)``."""
    source = code.gf.asarray(source)
    batch = source.shape[:-4]
    out = np.zeros(batch + (code.n, code.b, code.r, code.alpha_base), dtype=code.gf.dtype)
    for l, inst in enumerate(code.instances):
        local = pb_encode(inst, source[..., l, :, :, :])
        for loc, glob in code.local_to_global[l].items():
            out[..., glob - 1, l, :, :] = local[..., loc - 1, :, :]
    return out


def balanced_reconstruct(code: BalancedCode, payloads: Mapping[int, np.ndarray]) -> np.ndarray:
    if len(payloads) != code.k:
        raise ValueError(f"need payloads from exactly {code.k} nodes")
    parts = []
    for l, inst in enumerate(code.instances):
        roles = code.role_maps[l]
        parts.append(pb_reconstruct(inst, {roles[node]: np.asarray(p)[..., l, :, :] for node, p in payloads.items()}))
    return np.stack(parts, axis=-4)


class _InstanceReader:
    """Maps instance-local (node, cell) reads onto the global metered cluster."""

    def __init__(self, reader: MeteredCluster, instance: int, local_to_global: dict):
        self._reader = reader
        self._instance = instance
        self._map = local_to_global

    def fetch(self, node: int, index: tuple = (), rows=None, phase: str = "") -> np.ndarray:
        return self._reader.fetch(self._map[node], (self._instance,) + tuple(index), rows, phase)


def balanced_repair(code: BalancedCode, node: int, cluster: Mapping[int, np.ndarray]):
    if not 1 <= node <= code.n:
        raise ValueError(f"no node {node}")
    ledger = TransferLedger(node)
    reader = MeteredCluster(cluster, node, ledger)
    parts = []
    for l, inst in enumerate(code.instances):
        local = code.role_maps[l][node]
        view = _InstanceReader(reader, l, code.local_to_global[l])
        if local <= inst.k:
            parts.append(_repair_systematic(inst, local, view))
        else:
            parts.append(_repair_parity(inst, local - inst.k, view))
    return np.stack(parts, axis=-3), ledger


class BalancedBeta(NamedTuple):
    beta: Fraction
    block_form: Fraction
    overhead: Fraction
    b: int
    e: int


def balanced_beta(n: int, r: int, lam: int) -> BalancedBeta:
    """Per-helper download of the composed code as a multiple of its node size.

    Returns both closed forms, which must agree, and the ratio to the
    optimal per-helper share alpha/r.
    """
    if r < 2 or n <= r or lam < 1:
        raise ValueError(f"need 2 <= r < n and lambda >= 1, got n={n}, r={r}, lambda={lam}")
    e = Fraction(lam * (n - 1), r - 1)
    b = Fraction(lam * n * (n - 1), r * (r - 1))
    if e.denominator != 1 or b.denominator != 1:
        raise DesignError(f"no ({n}, {r}, {lam}) BIBD: e={e}, b={b} not integral")
    beta = Fraction((r - 1) ** 2, n * (n - 1)) + Fraction(1, r)
    block_form = (b + (r - 1) * lam) / (b * r)
    if beta != block_form:
        raise AssertionError(f"closed forms disagree: {beta} != {block_form}")
    overhead = 1 + Fraction(r * (r - 1) ** 2, n * (n - 1))
    if beta / Fraction(1, r) != overhead:
        raise AssertionError("overhead factor inconsistent with beta")
    return BalancedBeta(beta, block_form, overhead, int(b), int(e))


def helper_download_symbols(code: BalancedCode) -> Fraction:
    """lambda * alpha_instance + (b - lambda) * alpha_instance / r, in symbols."""
    lam = code.design.lam
    return lam * Fraction(code.alpha_instance) + (code.b - lam) * Fraction(code.alpha_instance, code.r)
