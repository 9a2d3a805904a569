"""Hypothesis strategies shared by unit and acceptance tests."""

from decimal import Decimal

from hypothesis import strategies as st

from mmorf.agents.actions import SIGNATURES, Action
from mmorf.vfdsl import BinOp, Call, Num

nums = st.decimals(min_value=Decimal("-1000"), max_value=Decimal("1000"), places=3,
                   allow_nan=False, allow_infinity=False).map(Num)
ghs_codes = st.integers(200, 420).map(lambda n: f"H{n}")
mol_names = st.lists(st.sampled_from(["ac", "acid", "me", "oh", "ph", "cl", "bu", "li"]),
                     min_size=1, max_size=3).map("-".join)

calls = st.one_of(
    st.sampled_from([Call(n) for n in ("Synth", "Depth", "BBPrice", "FastCarc", "Pyro")]),
    st.lists(ghs_codes, min_size=1, max_size=3).map(lambda a: Call("GHS", tuple(a))),
    st.tuples(st.sampled_from(["MaxSim", "MinSim"]), st.lists(mol_names, min_size=1, max_size=2))
    .map(lambda t: Call(t[0], tuple(t[1]))),
)

vf_asts = st.recursive(
    st.one_of(nums, calls),
    lambda kids: st.builds(BinOp, st.sampled_from("+-*/"), kids, kids),
    max_leaves=12,
)

_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=30).filter(
    lambda s: s.strip() != ""
)


def _args_for(tool):
    sig = SIGNATURES[tool]
    if sig == ("s*",):
        return st.lists(_text, min_size=1, max_size=4).map(tuple)
    parts = []
    for code in sig:
        if code == "s":
            parts.append(_text)
        elif tool == "ExpandDefault":
            parts.append(st.integers(1, 10_000))
        elif tool == "DepthLimit":
            parts.append(st.integers(-1, 50))
        else:
            parts.append(st.integers(1, 500))
    return st.tuples(*parts)


actions = st.sampled_from(sorted(SIGNATURES)).flatmap(
    lambda tool: _args_for(tool).map(lambda args: Action(tool, tuple(args)))
)
