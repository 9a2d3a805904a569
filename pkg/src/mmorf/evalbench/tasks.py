"""Benchmark tasks and manifest loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from mmorf.chemworld import canonicalize_molecule
from mmorf.errors import MoleculeError, ParseError, SchemaViolation

CONSTRAINT_TYPES = ("carcinogen", "pyrophoric", "user")
MODES = ("hcmo", "scmo")
SCMO_INSTRUCTION = "Plan the best possible route considering all available safety and cost metrics."


@dataclass(frozen=True)
class Constraint:
    type: str
    molecules: tuple[str, ...] = ()

    def describe(self) -> str:
        if self.type == "carcinogen":
            return "avoid carcinogenic substances"
        if self.type == "pyrophoric":
            return "avoid pyrophoric substances"
        return "avoid " + ", ".join(self.molecules)

    def to_json(self) -> dict[str, Any]:
        d: dict[str, Any] = {"type": self.type}
        if self.molecules:
            d["molecules"] = list(self.molecules)
        return d


@dataclass(frozen=True)
class Task:
    id: str
    product: str
    mode: str = "hcmo"
    constraints: tuple[Constraint, ...] = ()
    instruction: str = ""

    def context_text(self) -> str:
        """Instruction text handed to agents; hard constraints get their own line."""
        lines = [self.instruction.strip()] if self.instruction.strip() else []
        if self.constraints:
            lines.append("Hard constraints: " + "; ".join(c.describe() for c in self.constraints) + ".")
        return "\n".join(lines)

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "product": self.product,
            "mode": self.mode,
            "constraints": [c.to_json() for c in self.constraints],
            "instruction": self.instruction,
        }


def task_from_dict(data: Any, path: str = "$", canonical: bool = True) -> Task:
    if not isinstance(data, dict):
        raise SchemaViolation("task must be an object", path)
    extra = set(data) - {"id", "product", "mode", "constraints", "instruction"}
    if extra:
        raise SchemaViolation(f"unknown keys {sorted(extra)}", path)
    for key in ("id", "product"):
        if not isinstance(data.get(key), str) or not data[key]:
            raise SchemaViolation(f"'{key}' must be a non-empty string", f"{path}.{key}")
    product = data["product"]
    if canonical:
        try:
            product = canonicalize_molecule(product)
        except MoleculeError as exc:
            raise SchemaViolation(str(exc), f"{path}.product") from exc
    mode = data.get("mode", "hcmo")
    if mode not in MODES:
        raise SchemaViolation(f"mode must be one of {MODES}", f"{path}.mode")
    raw = data.get("constraints", [])
    if not isinstance(raw, list):
        raise SchemaViolation("constraints must be a list", f"{path}.constraints")
    constraints = []
    for i, c in enumerate(raw):
        cpath = f"{path}.constraints[{i}]"
        if not isinstance(c, dict) or c.get("type") not in CONSTRAINT_TYPES:
            raise SchemaViolation(f"constraint type must be one of {CONSTRAINT_TYPES}", cpath)
        mols = c.get("molecules", [])
        if not isinstance(mols, list) or not all(isinstance(m, str) for m in mols):
            raise SchemaViolation("molecules must be a list of strings", f"{cpath}.molecules")
        if c["type"] == "user":
            if not mols:
                raise SchemaViolation("user constraint needs molecules", f"{cpath}.molecules")
            try:
                mols = [canonicalize_molecule(m) for m in mols]
            except MoleculeError as exc:
                raise SchemaViolation(str(exc), f"{cpath}.molecules") from exc
        elif mols:
            raise SchemaViolation("only user constraints take molecules", f"{cpath}.molecules")
        constraints.append(Constraint(c["type"], tuple(mols)))
    if len({c.type for c in constraints}) != len(constraints):
        raise SchemaViolation("duplicate constraint type", f"{path}.constraints")
    if mode == "scmo" and constraints:
        raise SchemaViolation("scmo tasks carry no hard constraints", f"{path}.constraints")
    instruction = data.get("instruction", SCMO_INSTRUCTION if mode == "scmo" else "")
    if not isinstance(instruction, str):
        raise SchemaViolation("instruction must be a string", f"{path}.instruction")
    return Task(data["id"], product, mode, tuple(constraints), instruction)


def load_task(path: str | Path) -> Task:
    return task_from_dict(_read_json(path))


def load_benchmark(path: str | Path) -> list[Task]:
    """Load a manifest: a JSON list of tasks (or ``{"tasks": [...]}``).

    SCMO products are kept verbatim (they are real SMILES, not token molecules).
    """
    data = _read_json(path)
    if isinstance(data, dict) and set(data) == {"tasks"}:
        data = data["tasks"]
    if not isinstance(data, list):
        raise SchemaViolation("manifest must be a list of tasks")
    tasks = []
    ids = set()
    for i, entry in enumerate(data):
        scmo = isinstance(entry, dict) and entry.get("mode") == "scmo"
        task = task_from_dict(entry, f"$[{i}]", canonical=not scmo)
        if task.id in ids:
            raise SchemaViolation(f"duplicate task id {task.id!r}", f"$[{i}].id")
        ids.add(task.id)
        tasks.append(task)
    return tasks


def _read_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise ParseError(f"{path}: empty file")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
