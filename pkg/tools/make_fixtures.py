"""Regenerate the bundled fixture worlds, tasks and scenarios.

    python tools/make_fixtures.py            # writes into src/mmorf/data

Output is deterministic: fixed seeds, sorted keys.  The SCMO manifest is not
produced here; it is a hand-converted table kept as a data file.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from mmorf.chemworld import expand_retro, world_from_dict  # noqa: E402

DATA = ROOT / "src" / "mmorf" / "data"
GHS_POOL = ["H225", "H301", "H314", "H315", "H319", "H335", "H351", "H400", "H410"]
UNSOLVABLE_COST = 99.0


def dump(name: str, obj) -> None:
    (DATA / name).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print("wrote", name)


def exact_costs(world_dict: dict, branching: int = 10) -> dict[str, float]:
    """Fewest reactions needed to make each molecule (a perfect value estimate)."""
    world = world_from_dict(world_dict)
    mols = list(world_dict["molecules"])
    cost = {m: UNSOLVABLE_COST for m in mols}
    for bb in world_dict["building_blocks"]:
        cost[bb] = 0.0
    changed = True
    while changed:
        changed = False
        for m in mols:
            if m in world_dict["building_blocks"]:
                continue
            for r in expand_retro(world, m, branching):
                c = 1 + sum(cost.get(x, UNSOLVABLE_COST) for x in r.reactants)
                if c < cost[m]:
                    cost[m] = c
                    changed = True
    return {m: min(c, UNSOLVABLE_COST) for m, c in cost.items()}


# ---------------------------------------------------------------------------
# procedural lattice worlds
# ---------------------------------------------------------------------------

def lattice_world(seed: int, n_targets: int, n_bbs: int = 24, cap: int = 200) -> tuple[dict, list[str]]:
    """Each non-purchasable molecule is consumed by exactly one product, so
    routes never share intermediates and the exact cost equals the shortest
    route length."""
    rng = random.Random(seed)
    bbs = [f"bb{i}" for i in range(n_bbs)]
    molecules: dict[str, dict] = {}
    reactions: list[dict] = []

    def annotate(name: str) -> None:
        score = round(rng.random(), 2)
        truth = score > 0.7
        alert = truth if rng.random() > 0.15 else not truth
        molecules[name] = {
            "carc_score": score,
            "carc_alert": alert,
            "truth_carcinogen": truth,
            "truth_pyrophoric": False,
            "ghs": sorted(rng.sample(GHS_POOL, rng.choice([0, 0, 1, 1, 2]))),
        }

    for bb in bbs:
        annotate(bb)
    pyro_refs = rng.sample(bbs, 2)
    for bb in pyro_refs:
        molecules[bb]["truth_pyrophoric"] = True
        molecules[bb]["ghs"] = sorted(set(molecules[bb]["ghs"]) | {"H250"})

    def budget_left() -> int:
        return cap - len(molecules)

    def make(name: str, level: int, top: bool = False) -> None:
        annotate(name)
        if not top and level > 1 and rng.random() < 0.08:
            return  # dead end: nothing makes it
        n_rxn = rng.choice([2, 2, 3, 3]) if level > 1 else rng.choice([1, 1, 2])
        used_p: set[float] = set()
        for j in range(1, n_rxn + 1):
            if level == 1 or budget_left() < 12:
                kinds = ["direct"]
            elif j == 1:
                kinds = ["chain", "chain", "fork"]
            else:
                kinds = ["direct", "chain", "chain", "fork"]
            kind = rng.choice(kinds)
            p = round(rng.uniform(0.3, 0.95), 2)
            while p in used_p:
                p = round(p - 0.01, 2)
            used_p.add(p)
            if kind == "direct":
                reactants = rng.sample(bbs, 2)
            elif kind == "chain":
                child = f"{name}-r{j}a"
                make(child, rng.randint(max(1, level - 2), level - 1))
                reactants = [child, rng.choice(bbs)]
            else:
                a, b = f"{name}-r{j}a", f"{name}-r{j}b"
                make(a, level - 1)
                make(b, rng.randint(1, level - 1))
                reactants = [a, b]
            reactions.append({"product": name, "reactants": reactants, "plausibility": p})

    targets = []
    for i in range(n_targets):
        if budget_left() < 20:
            break
        t = f"t{seed}x{i}"
        make(t, rng.choice([3, 4, 4]), top=True)
        targets.append(t)

    prices = {bb: round(rng.uniform(1, 120), 2) for bb in bbs}
    world = {
        "molecules": molecules,
        "building_blocks": prices,
        "reactions": reactions,
        "templates": [],
        "pyrophoric_refs": sorted(pyro_refs),
    }
    costs = exact_costs(world)
    for m, c in costs.items():
        if m not in prices:
            world["molecules"][m]["synth_cost"] = c
    return world, targets


# ---------------------------------------------------------------------------
# hand-built worlds
# ---------------------------------------------------------------------------

def mol(score=0.1, alert=False, carc=False, pyro=False, ghs=(), synth_cost=None) -> dict:
    d = {"carc_score": score, "carc_alert": alert, "truth_carcinogen": carc,
         "truth_pyrophoric": pyro, "ghs": sorted(ghs)}
    if synth_cost is not None:
        d["synth_cost"] = synth_cost
    return d


def case_world() -> dict:
    """Three ways into tx-core.

    Route A (via cl-arene) is short on the estimate but uses the carcinogen
    ph-cl and costly reagents.  The hub-a branch looks cheap yet dead-ends
    after 21 expansions.  Route B (via tx-acid) is safe and cheap but its
    estimate is poor, so a plain search reaches it last.
    """
    molecules = {
        "tx-core": mol(0.3, ghs=["H302"], synth_cost=3),
        "cl-arene": mol(0.6, ghs=["H315"], synth_cost=2),
        "cl-ring": mol(0.5, ghs=["H319"], synth_cost=1),
        "ph-cl": mol(0.8, alert=True, carc=True, ghs=["H351"]),
        "so-cl": mol(0.2, ghs=["H314"]),
        "tx-amine": mol(0.2, ghs=["H302"]),
        "ring-bb": mol(0.1),
        "tx-acid": mol(0.2, synth_cost=30),
        "tx-nitrile": mol(0.2, synth_cost=30),
        "pip-amine": mol(0.1, ghs=["H302"]),
        "water": mol(0.0),
        "na-cn": mol(0.1),
        "tx-bromide": mol(0.2),
        "hub-a": mol(0.2, synth_cost=3),
        "hub-bb": mol(0.0),
    }
    reactions = [
        {"product": "tx-core", "reactants": ["cl-arene", "tx-amine"], "plausibility": 0.9},
        {"product": "tx-core", "reactants": ["hub-a", "hub-bb"], "plausibility": 0.7},
        {"product": "tx-core", "reactants": ["pip-amine", "tx-acid"], "plausibility": 0.5},
        {"product": "cl-arene", "reactants": ["cl-ring", "ph-cl"], "plausibility": 0.8},
        {"product": "cl-ring", "reactants": ["ring-bb", "so-cl"], "plausibility": 0.8},
        {"product": "tx-acid", "reactants": ["tx-nitrile", "water"], "plausibility": 0.8},
        {"product": "tx-nitrile", "reactants": ["na-cn", "tx-bromide"], "plausibility": 0.8},
    ]
    for i in range(1, 5):
        x = f"hub-a-x{i}"
        molecules[x] = mol(0.2, synth_cost=3)
        reactions.append({"product": "hub-a", "reactants": [x, "hub-bb"], "plausibility": round(0.9 - 0.1 * i, 2)})
        for j in range(1, 5):
            y = f"{x}-y{j}"
            molecules[y] = mol(0.2, synth_cost=2)  # no reaction makes these
            reactions.append({"product": x, "reactants": [y, "hub-bb"], "plausibility": round(0.9 - 0.1 * j, 2)})
    prices = {
        "ph-cl": 120.0, "so-cl": 40.0, "tx-amine": 60.0, "ring-bb": 30.0,
        "pip-amine": 8.0, "water": 0.5, "na-cn": 6.0, "tx-bromide": 12.0, "hub-bb": 1.0,
    }
    return {"molecules": molecules, "building_blocks": prices, "reactions": reactions,
            "templates": [], "pyrophoric_refs": []}


def three_routes_world() -> dict:
    molecules = {
        "p3-target": mol(0.2, synth_cost=1),
        "p3-mid": mol(0.3, synth_cost=1),
        "p3-a": mol(0.1), "p3-b": mol(0.6, alert=True, carc=True, ghs=["H351"]),
        "p3-c": mol(0.1, ghs=["H225"]), "p3-d": mol(0.2), "p3-e": mol(0.1, ghs=["H315"]),
    }
    reactions = [
        {"product": "p3-target", "reactants": ["p3-a", "p3-b"], "plausibility": 0.9},
        {"product": "p3-target", "reactants": ["p3-c", "p3-d"], "plausibility": 0.8},
        {"product": "p3-target", "reactants": ["p3-a", "p3-mid"], "plausibility": 0.7},
        {"product": "p3-mid", "reactants": ["p3-d", "p3-e"], "plausibility": 0.9},
    ]
    prices = {"p3-a": 5.0, "p3-b": 1.0, "p3-c": 20.0, "p3-d": 3.0, "p3-e": 2.0}
    return {"molecules": molecules, "building_blocks": prices, "reactions": reactions,
            "templates": [], "pyrophoric_refs": []}


def feasibility_world() -> dict:
    """Seven ways to make fz-ester; the template-derived one ranks sixth."""
    molecules = {"fz-ester": mol(0.2)}
    prices = {"fz-acid": 4.0, "me-oh": 1.0}
    reactions = []
    for i, p in enumerate([0.95, 0.9, 0.85, 0.8, 0.75, 0.45], start=1):
        bb = f"fz-r{i}"
        prices[bb] = float(i)
        reactions.append({"product": "fz-ester", "reactants": [bb, "me-oh"], "plausibility": p})
    templates = [{"id": "esterification", "product": "$X-ester", "reactants": ["$X-acid", "me-oh"],
                  "plausibility": 0.5}]
    return {"molecules": molecules, "building_blocks": prices, "reactions": reactions,
            "templates": templates, "pyrophoric_refs": []}


# ---------------------------------------------------------------------------
# tasks, scenarios, restriction db
# ---------------------------------------------------------------------------

def reply(action: str, thought: str) -> str:
    return f"Thought: {thought}\nAction: `{action}`<PAUSE>"


def main() -> None:
    lattice_targets = {}
    for seed, n in ((1, 20), (2, 20)):
        world, targets = lattice_world(seed, n)
        dump(f"lattice{seed}.world.json", world)
        lattice_targets[f"lattice{seed}.world.json"] = targets
    dump("lattice_targets.json", lattice_targets)
    dump("case.world.json", case_world())
    dump("three_routes.world.json", three_routes_world())
    dump("feasibility.world.json", feasibility_world())

    dump("tasks.fixture.json", [
        {"id": "tiny-ester", "product": "ac-ester", "mode": "hcmo", "constraints": [],
         "instruction": "Plan a short route."},
        {"id": "tiny-phacid-cu", "product": "ph-acid", "mode": "hcmo",
         "constraints": [{"type": "carcinogen"}, {"type": "user", "molecules": ["bu-li"]}],
         "instruction": "Avoid carcinogens and butyllithium."},
        {"id": "tiny-ester-p", "product": "ac-ester", "mode": "hcmo",
         "constraints": [{"type": "pyrophoric"}], "instruction": "No pyrophoric reagents."},
    ])
    dump("case.task.json", {"id": "case-tx", "product": "tx-core", "mode": "hcmo",
                            "constraints": [{"type": "carcinogen"}],
                            "instruction": "Find a safe and inexpensive route."})

    dump("case.masil.scenario.json", [
        {"role": "verifier", "match": "ph-cl",
         "response": reply("Reject('The route uses ph-cl, a known carcinogen, and costly reagents.')",
                           "ph-cl is carcinogenic.")},
        {"role": "coordinator",
         "response": reply("Pruning('Remove the carcinogen ph-cl and the unproductive hub-a branch.')",
                           "The search is stuck in the hub-a branch.")},
        {"role": "regulator", "response": reply("RestrictMolecules('ph-cl', 'hub-a')", "Block both.")},
        {"role": "regulator", "response": reply("Finalize()", "Done.")},
        {"role": "coordinator",
         "response": reply("ValueFn('Prefer safe, cheap routes; penalize carcinogen alerts and price.')",
                           "Steer towards safer routes.")},
        {"role": "navigator",
         "response": reply('SetValueFunction("Synth() - 10*FastCarc() - 0.01*BBPrice()")', "Penalize hazards.")},
        {"role": "navigator", "response": reply("Finalize()", "Good enough.")},
        {"role": "verifier", "response": reply("AcceptProposed('Safe and inexpensive.')", "Looks good.")},
    ])
    dump("rfas.scenario.json", [
        {"role": "verifier", "match": "ph-cl",
         "response": reply("Reject('Avoid ph-cl: it is carcinogenic.')", "ph-cl present.")},
        {"role": "regulator", "response": reply("RestrictMolecules('ph-cl')", "Block it.")},
        {"role": "regulator", "response": reply("Finalize()", "Done.")},
        {"role": "verifier", "response": reply("AcceptProposed('No ph-cl.')", "Fine.")},
    ])

    dump("restrictions.db.json", [
        {"type": "restriction", "molecules": ["ph-cl"], "specific_reactions": [],
         "reaction_templates": [], "depth_limit": 3, "rationale": "Aryl chloride is a carcinogen alert.",
         "apply_when": ["$X-ester"]},
        {"type": "restriction", "molecules": [], "specific_reactions": ["bu-li.ph-cl>>ph-acid"],
         "reaction_templates": ["*-li"], "depth_limit": -1,
         "rationale": "Avoid organolithium steps.", "apply_when": ["ph-*"]},
        {"type": "restriction", "molecules": ["hub-a"], "specific_reactions": [],
         "reaction_templates": [], "depth_limit": 4, "rationale": "Dead-end hub.",
         "apply_when": ["tx-core"]},
    ])


if __name__ == "__main__":
    main()
