"""Deterministic token chemistry: molecules, reactions, templates and annotations.

Molecules are lowercase token strings joined by ``-`` (``ac-acid``).  A
:class:`World` bundles explicit reactions, rewrite templates, a priced
building-block catalog and per-molecule hazard annotations; it stands in for
the neural single-step model, the price predictor and the property models a
real planner would call.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from mmorf.errors import (
    EmptyMolecule,
    IllegalCharacter,
    LengthMismatch,
    MalformedPattern,
    NoReactants,
    ParseError,
    SchemaViolation,
)

FP_BITS = 2048
DEFAULT_BRANCHING = 10
UNKNOWN_CARC_SCORE = 0.5

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_ALLOWED_RE = re.compile(r"[a-z0-9-]+")
_GHS_RE = re.compile(r"H[0-9]{3}")
_VAR_RE = re.compile(r"\$[A-Z]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def canonicalize_molecule(raw: str) -> str:
    text = raw.strip().lower()
    if not text:
        raise EmptyMolecule("molecule is empty")
    if not _ALLOWED_RE.fullmatch(text):
        bad = sorted(set(re.sub(r"[a-z0-9-]", "", text)))
        raise IllegalCharacter(f"illegal character(s) {''.join(bad)!r} in {raw!r}")
    tokens = [t for t in text.split("-") if t]
    if not tokens:
        raise EmptyMolecule(f"no tokens in {raw!r}")
    return "-".join(tokens)


def is_canonical(text: str) -> bool:
    try:
        return canonicalize_molecule(text) == text
    except (EmptyMolecule, IllegalCharacter):
        return False


def tokens(molecule: str) -> list[str]:
    return molecule.split("-")


def canonicalize_reaction(reactants: Iterable[str], product: str) -> str:
    rs = sorted(reactants)
    if not rs:
        raise NoReactants("a reaction needs at least one reactant")
    return ".".join(rs) + ">>" + product


@dataclass(frozen=True)
class Reaction:
    """One retro step ``product <= reactants``.  Equality ignores plausibility."""

    product: str
    reactants: tuple[str, ...]
    plausibility: float = field(default=1.0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "reactants", tuple(sorted(self.reactants)))
        if not self.reactants:
            raise NoReactants("a reaction needs at least one reactant")

    @property
    def smiles(self) -> str:
        return canonicalize_reaction(self.reactants, self.product)

    @property
    def molecules(self) -> tuple[str, ...]:
        return self.reactants + (self.product,)

    @classmethod
    def parse(cls, text: str, plausibility: float = 1.0) -> "Reaction":
        """Parse ``a.b>>c``; molecules are canonicalized."""
        left, sep, right = text.strip().partition(">>")
        if not sep:
            raise ParseError(f"reaction {text!r} lacks '>>'")
        reactants = [canonicalize_molecule(r) for r in left.split(".") if r.strip()]
        if not reactants:
            raise NoReactants(f"reaction {text!r} has no reactants")
        return cls(canonicalize_molecule(right), tuple(reactants), plausibility)

    def __str__(self) -> str:
        return self.smiles


# ---------------------------------------------------------------------------
# patterns
# ---------------------------------------------------------------------------

@lru_cache(maxsize=4096)
def _parse_pattern(pattern: str) -> tuple[tuple[str, ...], int, str | None]:
    """Return (tokens, variable index or -1, variable name or None for ``*``)."""
    parts = pattern.strip().split("-")
    var_idx = -1
    var_name: str | None = None
    for i, part in enumerate(parts):
        if part == "*" or _VAR_RE.fullmatch(part):
            if var_idx >= 0:
                raise MalformedPattern(f"pattern {pattern!r} has more than one variable")
            var_idx = i
            var_name = None if part == "*" else part[1:]
        elif not _TOKEN_RE.fullmatch(part):
            raise MalformedPattern(f"bad token {part!r} in pattern {pattern!r}")
    return tuple(parts), var_idx, var_name


def validate_pattern(pattern: str) -> str:
    _parse_pattern(pattern)
    return pattern.strip()


def pattern_variable(pattern: str) -> str | None:
    parts, idx, name = _parse_pattern(pattern)
    return name if idx >= 0 else None


def match_pattern(pattern: str, molecule: str) -> list[dict[str, str]]:
    """All bindings of the pattern variable that reproduce ``molecule``.

    ``*`` matches like a variable but contributes no binding entry.
    """
    parts, idx, name = _parse_pattern(pattern)
    mol = tokens(molecule)
    if idx < 0:
        return [{}] if list(parts) == mol else []
    prefix, suffix = parts[:idx], parts[idx + 1:]
    middle = len(mol) - len(prefix) - len(suffix)
    if middle < 1:
        return []
    if tuple(mol[: len(prefix)]) != prefix:
        return []
    if suffix and tuple(mol[len(mol) - len(suffix):]) != suffix:
        return []
    bound = "-".join(mol[len(prefix): len(prefix) + middle])
    return [{name: bound}] if name is not None else [{}]


def instantiate(pattern: str, binding: Mapping[str, str]) -> str:
    parts, idx, name = _parse_pattern(pattern)
    if idx < 0:
        return "-".join(parts)
    if name is None or name not in binding:
        raise MalformedPattern(f"cannot instantiate {pattern!r} with {dict(binding)!r}")
    out = list(parts)
    out[idx] = binding[name]
    return "-".join(out)


def reaction_matches(pattern: str, reaction: Reaction) -> bool:
    """Restriction-pattern test.

    ``A.B>>P`` patterns need the product to match ``P`` and every reactant
    pattern to match some reactant; plain patterns match when any molecule of
    the reaction matches.
    """
    if ">>" in pattern:
        left, _, right = pattern.partition(">>")
        if not match_pattern(right.strip(), reaction.product):
            return False
        for rp in (p.strip() for p in left.split(".") if p.strip()):
            if not any(match_pattern(rp, r) for r in reaction.reactants):
                return False
        return True
    return any(match_pattern(pattern, m) for m in reaction.molecules)


def validate_restriction_pattern(pattern: str) -> str:
    if ">>" in pattern:
        left, _, right = pattern.partition(">>")
        validate_pattern(right)
        for rp in left.split("."):
            if rp.strip():
                validate_pattern(rp)
    else:
        validate_pattern(pattern)
    return pattern.strip()


@dataclass(frozen=True)
class ReactionTemplate:
    id: str
    product_pattern: str
    reactant_patterns: tuple[str, ...]
    plausibility: float

    def __post_init__(self):
        _, pidx, pname = _parse_pattern(self.product_pattern)
        if pidx >= 0 and pname is None:
            raise MalformedPattern(f"template {self.id}: '*' not allowed in templates")
        for rp in self.reactant_patterns:
            _, ridx, rname = _parse_pattern(rp)
            if ridx >= 0 and (rname is None or rname != pname):
                raise MalformedPattern(
                    f"template {self.id}: reactant variable in {rp!r} not bound by product"
                )
        if not self.reactant_patterns:
            raise NoReactants(f"template {self.id} has no reactants")
        if not (0.0 < self.plausibility <= 1.0):
            raise ValueError(f"template {self.id}: plausibility must lie in (0, 1]")

    def apply(self, molecule: str) -> list[Reaction]:
        out = []
        for binding in match_pattern(self.product_pattern, molecule):
            reactants = tuple(instantiate(rp, binding) for rp in self.reactant_patterns)
            if molecule in reactants:
                continue
            out.append(Reaction(molecule, reactants, self.plausibility))
        return out


# ---------------------------------------------------------------------------
# fingerprints
# ---------------------------------------------------------------------------

def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def fingerprint_bits(molecule: str) -> tuple[int, ...]:
    toks = tokens(molecule)
    keys = toks + [f"{a}|{b}" for a, b in zip(toks, toks[1:])]
    return tuple(sorted({fnv1a_64(k.encode()) % FP_BITS for k in keys}))


@lru_cache(maxsize=65536)
def _fingerprint_cached(molecule: str) -> np.ndarray:
    vec = np.zeros(FP_BITS, dtype=bool)
    vec[list(fingerprint_bits(molecule))] = True
    vec.setflags(write=False)
    return vec


def fingerprint(molecule: str) -> np.ndarray:
    """2048-bit vector: FNV-1a of each token and each adjacent-token bigram."""
    return _fingerprint_cached(molecule)


def tanimoto(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise LengthMismatch(f"fingerprint lengths differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


@lru_cache(maxsize=262144)
def molecule_similarity(a: str, b: str) -> float:
    return tanimoto(fingerprint(a), fingerprint(b))


# ---------------------------------------------------------------------------
# world
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MoleculeProfile:
    molecule: str
    carc_score: float = UNKNOWN_CARC_SCORE
    carc_alert: bool = False
    ground_truth_carcinogen: bool = False
    ground_truth_pyrophoric: bool = False
    ghs_codes: frozenset[str] = frozenset()
    purchasable: bool = False
    synth_cost: float = 0.0
    price: float | None = None
    pyrophoric_predicted: bool = False

    def as_report(self) -> dict[str, Any]:
        """Agent-visible view: noisy predictors only, no ground truth."""
        return {
            "carc_score": self.carc_score,
            "carc_alert": int(self.carc_alert),
            "pyrophoric": int(self.pyrophoric_predicted),
            "ghs": sorted(self.ghs_codes),
            "price": self.price,
        }


@dataclass(frozen=True)
class _MoleculeEntry:
    carc_score: float
    carc_alert: bool
    truth_carcinogen: bool
    truth_pyrophoric: bool
    ghs: frozenset[str]
    synth_cost: float | None


@dataclass(frozen=True, eq=False)
class World:
    molecules: Mapping[str, _MoleculeEntry]
    explicit_reactions: Mapping[str, tuple[Reaction, ...]]
    templates: tuple[ReactionTemplate, ...]
    building_blocks: Mapping[str, float]
    pyrophoric_refs: tuple[str, ...]
    name: str = "world"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def is_purchasable(self, molecule: str) -> bool:
        return molecule in self.building_blocks

    def price(self, molecule: str) -> float | None:
        return self.building_blocks.get(molecule)

    def synth_cost(self, molecule: str) -> float:
        return annotate(self, molecule).synth_cost

    def to_dict(self) -> dict[str, Any]:
        mols = {}
        for m, e in sorted(self.molecules.items()):
            d: dict[str, Any] = {
                "carc_score": e.carc_score,
                "carc_alert": e.carc_alert,
                "truth_carcinogen": e.truth_carcinogen,
                "truth_pyrophoric": e.truth_pyrophoric,
                "ghs": sorted(e.ghs),
            }
            if e.synth_cost is not None:
                d["synth_cost"] = e.synth_cost
            mols[m] = d
        reactions = [
            {"product": r.product, "reactants": list(r.reactants), "plausibility": r.plausibility}
            for p in sorted(self.explicit_reactions)
            for r in self.explicit_reactions[p]
        ]
        templates = [
            {
                "id": t.id,
                "product": t.product_pattern,
                "reactants": list(t.reactant_patterns),
                "plausibility": t.plausibility,
            }
            for t in self.templates
        ]
        return {
            "molecules": mols,
            "building_blocks": dict(sorted(self.building_blocks.items())),
            "reactions": reactions,
            "templates": templates,
            "pyrophoric_refs": list(self.pyrophoric_refs),
        }


def expand_retro(world: World, molecule: str, branching: int = DEFAULT_BRANCHING) -> list[Reaction]:
    """Candidate reactions producing ``molecule``, best first, at most ``branching``."""
    key = ("expand", molecule, branching)
    hit = world._cache.get(key)
    if hit is not None:
        return list(hit)
    best: dict[str, Reaction] = {}
    candidates = list(world.explicit_reactions.get(molecule, ()))
    for tpl in world.templates:
        candidates.extend(tpl.apply(molecule))
    for rxn in candidates:
        if rxn.product != molecule or molecule in rxn.reactants:
            continue
        prev = best.get(rxn.smiles)
        if prev is None or rxn.plausibility > prev.plausibility:
            best[rxn.smiles] = rxn
    ranked = sorted(best.values(), key=lambda r: (-r.plausibility, r.smiles))[:branching]
    world._cache[key] = tuple(ranked)
    return list(ranked)


def predict_pyrophoric(world: World, molecule: str) -> bool:
    fp = fingerprint(molecule)
    return any(tanimoto(fp, fingerprint(ref)) == 1.0 for ref in world.pyrophoric_refs)


def annotate(world: World, molecule: str) -> MoleculeProfile:
    key = ("annotate", molecule)
    hit = world._cache.get(key)
    if hit is not None:
        return hit
    entry = world.molecules.get(molecule)
    price = world.building_blocks.get(molecule)
    default_cost = float(len(tokens(molecule)))
    if entry is None:
        profile = MoleculeProfile(
            molecule=molecule,
            synth_cost=default_cost,
            purchasable=price is not None,
            price=price,
            pyrophoric_predicted=predict_pyrophoric(world, molecule),
        )
    else:
        profile = MoleculeProfile(
            molecule=molecule,
            carc_score=entry.carc_score,
            carc_alert=entry.carc_alert,
            ground_truth_carcinogen=entry.truth_carcinogen,
            ground_truth_pyrophoric=entry.truth_pyrophoric,
            ghs_codes=entry.ghs,
            purchasable=price is not None,
            synth_cost=default_cost if entry.synth_cost is None else entry.synth_cost,
            price=price,
            pyrophoric_predicted=predict_pyrophoric(world, molecule),
        )
    world._cache[key] = profile
    return profile


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

_TOP_KEYS = {"molecules", "building_blocks", "reactions", "templates", "pyrophoric_refs"}
_MOL_KEYS = {"carc_score", "carc_alert", "truth_carcinogen", "truth_pyrophoric", "ghs", "synth_cost"}


def _canon_field(value: Any, path: str) -> str:
    if not isinstance(value, str) or not is_canonical(value):
        raise SchemaViolation(f"expected a canonical molecule, got {value!r}", path)
    return value


def _number(value: Any, path: str, lo: float | None = None, hi: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaViolation(f"expected a finite number, got {value!r}", path)
    if (lo is not None and value < lo) or (hi is not None and value > hi):
        raise SchemaViolation(f"value {value!r} outside [{lo}, {hi}]", path)
    return float(value)


def _bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaViolation(f"expected a boolean, got {value!r}", path)
    return value


def world_from_dict(data: Any, name: str = "world") -> World:
    if not isinstance(data, dict):
        raise SchemaViolation("top level must be an object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise SchemaViolation(f"unknown keys {sorted(unknown)}")

    molecules: dict[str, _MoleculeEntry] = {}
    raw_mols = data.get("molecules", {})
    if not isinstance(raw_mols, dict):
        raise SchemaViolation("must be an object", "$.molecules")
    for mol, entry in raw_mols.items():
        path = f"$.molecules[{mol!r}]"
        _canon_field(mol, path)
        if not isinstance(entry, dict):
            raise SchemaViolation("must be an object", path)
        extra = set(entry) - _MOL_KEYS
        if extra:
            raise SchemaViolation(f"unknown keys {sorted(extra)}", path)
        ghs = entry.get("ghs", [])
        if not isinstance(ghs, list) or not all(isinstance(g, str) and _GHS_RE.fullmatch(g) for g in ghs):
            raise SchemaViolation(f"bad GHS codes {ghs!r}", path + ".ghs")
        synth = entry.get("synth_cost")
        molecules[mol] = _MoleculeEntry(
            carc_score=_number(entry.get("carc_score", UNKNOWN_CARC_SCORE), path + ".carc_score", 0.0, 1.0),
            carc_alert=_bool(entry.get("carc_alert", False), path + ".carc_alert"),
            truth_carcinogen=_bool(entry.get("truth_carcinogen", False), path + ".truth_carcinogen"),
            truth_pyrophoric=_bool(entry.get("truth_pyrophoric", False), path + ".truth_pyrophoric"),
            ghs=frozenset(ghs),
            synth_cost=None if synth is None else _number(synth, path + ".synth_cost", 0.0),
        )

    bbs: dict[str, float] = {}
    raw_bbs = data.get("building_blocks", {})
    if not isinstance(raw_bbs, dict):
        raise SchemaViolation("must be an object", "$.building_blocks")
    for mol, price in raw_bbs.items():
        path = f"$.building_blocks[{mol!r}]"
        _canon_field(mol, path)
        if price is None:
            raise SchemaViolation("building block has no price", path)
        bbs[mol] = _number(price, path, 0.0)

    explicit: dict[str, list[Reaction]] = {}
    raw_rxns = data.get("reactions", [])
    if not isinstance(raw_rxns, list):
        raise SchemaViolation("must be a list", "$.reactions")
    for i, entry in enumerate(raw_rxns):
        path = f"$.reactions[{i}]"
        if not isinstance(entry, dict) or set(entry) - {"product", "reactants", "plausibility"}:
            raise SchemaViolation("expected {product, reactants, plausibility}", path)
        product = _canon_field(entry.get("product"), path + ".product")
        reactants = entry.get("reactants")
        if not isinstance(reactants, list) or not reactants:
            raise SchemaViolation("reactants must be a non-empty list", path + ".reactants")
        rs = tuple(_canon_field(r, f"{path}.reactants[{j}]") for j, r in enumerate(reactants))
        if product in rs:
            raise SchemaViolation("product appears among its own reactants", path)
        plaus = _number(entry.get("plausibility", 1.0), path + ".plausibility", 0.0, 1.0)
        if plaus <= 0:
            raise SchemaViolation("plausibility must be > 0", path + ".plausibility")
        explicit.setdefault(product, []).append(Reaction(product, rs, plaus))

    templates: list[ReactionTemplate] = []
    raw_tpls = data.get("templates", [])
    if not isinstance(raw_tpls, list):
        raise SchemaViolation("must be a list", "$.templates")
    for i, entry in enumerate(raw_tpls):
        path = f"$.templates[{i}]"
        if not isinstance(entry, dict) or set(entry) - {"id", "product", "reactants", "plausibility"}:
            raise SchemaViolation("expected {id, product, reactants, plausibility}", path)
        try:
            templates.append(
                ReactionTemplate(
                    id=str(entry.get("id", f"t{i}")),
                    product_pattern=str(entry["product"]),
                    reactant_patterns=tuple(str(r) for r in entry["reactants"]),
                    plausibility=_number(entry.get("plausibility", 1.0), path + ".plausibility"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaViolation):
                raise
            raise SchemaViolation(str(exc), path) from exc

    refs = data.get("pyrophoric_refs", [])
    if not isinstance(refs, list):
        raise SchemaViolation("must be a list", "$.pyrophoric_refs")
    refs_t = tuple(_canon_field(r, f"$.pyrophoric_refs[{i}]") for i, r in enumerate(refs))

    return World(
        molecules=molecules,
        explicit_reactions={p: tuple(rs) for p, rs in explicit.items()},
        templates=tuple(templates),
        building_blocks=bbs,
        pyrophoric_refs=refs_t,
        name=name,
    )


def load_world(path: str | Path) -> World:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise ParseError(f"{path}: empty file")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    name = path.name.removesuffix(".json").removesuffix(".world")
    return world_from_dict(data, name=name)
