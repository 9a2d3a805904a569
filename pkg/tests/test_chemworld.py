import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmorf.chemworld import (
    FP_BITS,
    Reaction,
    annotate,
    canonicalize_molecule,
    canonicalize_reaction,
    expand_retro,
    fingerprint,
    fingerprint_bits,
    instantiate,
    load_world,
    match_pattern,
    predict_pyrophoric,
    tanimoto,
    world_from_dict,
)
from mmorf.errors import (
    EmptyMolecule,
    IllegalCharacter,
    LengthMismatch,
    MalformedPattern,
    NoReactants,
    ParseError,
    SchemaViolation,
)

token = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789", min_size=1, max_size=4)
molecule = st.lists(token, min_size=1, max_size=5).map("-".join)


@pytest.mark.parametrize("raw, canon", [("AC-Acid", "ac-acid"), ("me--oh-", "me-oh"), ("  bu-li ", "bu-li")])
def test_canonicalize_molecule(raw, canon):
    assert canonicalize_molecule(raw) == canon


@pytest.mark.parametrize("raw, exc", [("ph_cl", IllegalCharacter), ("", EmptyMolecule), (" - ", EmptyMolecule)])
def test_canonicalize_molecule_errors(raw, exc):
    with pytest.raises(exc):
        canonicalize_molecule(raw)


def test_canonicalize_reaction():
    assert canonicalize_reaction(["me-oh", "ac-acid"], "ac-ester") == "ac-acid.me-oh>>ac-ester"
    assert canonicalize_reaction(["a"], "a") == "a>>a"
    with pytest.raises(NoReactants):
        canonicalize_reaction([], "x")


def test_reaction_parse_round_trip():
    r = Reaction.parse("me-oh.ac-acid>>ac-ester")
    assert r.smiles == "ac-acid.me-oh>>ac-ester"
    assert Reaction.parse(r.smiles) == r


def test_match_pattern_examples():
    assert match_pattern("$X-ester", "ac-ester") == [{"X": "ac"}]
    assert match_pattern("ac-acid", "ac-acid") == [{}]
    assert match_pattern("$X-ester", "ac-acid") == []
    with pytest.raises(MalformedPattern):
        match_pattern("$X-$Y", "a-b")


def _bindings_oracle(prefix, suffix, mol):
    # every split of the molecule's tokens into prefix + variable + suffix
    toks = mol.split("-")
    out = []
    for i in range(len(toks)):
        for j in range(i + 1, len(toks) + 1):
            if toks[:i] == prefix and toks[j:] == suffix:
                out.append({"X": "-".join(toks[i:j])})
    return out


@given(molecule, st.lists(token, max_size=2), st.lists(token, max_size=2))
def test_match_pattern_against_enumeration(mol, prefix, suffix):
    pattern = "-".join(prefix + ["$X"] + suffix)
    got = match_pattern(pattern, mol)
    assert sorted(b["X"] for b in got) == sorted(b["X"] for b in _bindings_oracle(prefix, suffix, mol))
    for b in got:
        assert instantiate(pattern, b) == mol


@given(molecule, molecule)
def test_match_without_variable_is_equality(a, b):
    assert bool(match_pattern(a, b)) == (a == b)


def test_expand_retro_examples(tiny):
    assert [(r.smiles, r.plausibility) for r in expand_retro(tiny, "ac-ester")] == [("ac-acid.me-oh>>ac-ester", 0.9)]
    assert expand_retro(tiny, "zz-qq") == []
    assert [r.smiles for r in expand_retro(tiny, "ph-ester")] == ["me-oh.ph-acid>>ph-ester"]


def test_expand_retro_truncates_and_orders(lattice_worlds):
    for world, targets in lattice_worlds:
        for t in targets:
            rs = expand_retro(world, t, 2)
            assert len(rs) <= 2
            assert all(r.product == t for r in rs)
            assert len({r.smiles for r in rs}) == len(rs)
            keys = [(-r.plausibility, r.smiles) for r in rs]
            assert keys == sorted(keys)


def test_fingerprint_bits_match_fnv_oracle():
    # indices from an independent FNV-1a 64 implementation: ac -> 541, acid -> 1256, ac|acid -> 1122
    assert fingerprint_bits("ac-acid") == (541, 1122, 1256)
    fp = fingerprint("ac-acid")
    assert fp.shape == (FP_BITS,) and int(fp.sum()) == 3


def test_fingerprint_single_token():
    assert len(fingerprint_bits("water")) == 1


def test_tanimoto():
    a = np.zeros(8, dtype=bool)
    b = np.zeros(8, dtype=bool)
    a[[0, 1, 2]] = True
    b[[1, 2, 3, 4]] = True
    assert tanimoto(a, b) == pytest.approx(0.4)
    assert tanimoto(a, a) == 1.0
    c = np.zeros(8, dtype=bool)
    c[7] = True
    assert tanimoto(a, c) == 0.0
    with pytest.raises(LengthMismatch):
        tanimoto(a, np.zeros(4, dtype=bool))


@given(molecule)
def test_pyrophoric_is_identical_fingerprint(mol):
    world = world_from_dict({"molecules": {}, "building_blocks": {}, "reactions": [], "templates": [],
                             "pyrophoric_refs": ["bu-li", "et-zn-et"]})
    expected = any(tanimoto(fingerprint(mol), fingerprint(r)) == 1 for r in world.pyrophoric_refs)
    assert predict_pyrophoric(world, mol) == expected


def test_annotate(tiny):
    assert annotate(tiny, "bu-li").pyrophoric_predicted
    unknown = annotate(tiny, "zz-qq")
    assert (unknown.carc_score, unknown.carc_alert, unknown.synth_cost, unknown.purchasable) == (0.5, False, 2, False)
    assert not unknown.ghs_codes
    ph = annotate(tiny, "ph-cl")
    assert ph.carc_alert and ph.ghs_codes == {"H351"}


def test_load_world_counts(tiny):
    assert len(tiny.molecules) == 6
    assert sum(len(v) for v in tiny.explicit_reactions.values()) == 2
    assert len(tiny.templates) == 1


def test_load_world_errors(tmp_path, tiny):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(ParseError):
        load_world(empty)
    data = tiny.to_dict()
    data["building_blocks"]["ac-acid"] = None
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    with pytest.raises(SchemaViolation) as err:
        load_world(bad)
    assert "ac-acid" in err.value.path


def test_world_round_trips_through_dict(tiny):
    again = world_from_dict(tiny.to_dict())
    assert again.to_dict() == tiny.to_dict()
