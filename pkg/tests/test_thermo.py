import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmqa_rna.thermo import (
    DisallowedPair,
    EnergyModel,
    HairpinTooShort,
    IllegalCharacter,
    LengthMismatch,
    SecondaryStructure,
    SequenceTooLong,
    UnbalancedBrackets,
    brute_force,
    ensemble_defect,
    enumerate_structures,
    free_energy,
    mfe_structure,
    parse_dot_bracket,
    partition_function,
    structure_distance,
)
from fmqa_rna.thermo.structure import can_pair

MODEL = EnergyModel.default()


def random_sequences(count, max_len, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, max_len + 1))
        out.append("".join(rng.choice(list("AUGC"), n)))
    return out


def random_structure(n, rng):
    """Random valid structure by greedily adding non-crossing pairs."""
    table = [-1] * n
    for _ in range(n):
        i, j = sorted(rng.integers(0, n, size=2))
        if j - i < 4 or table[i] != -1 or table[j] != -1:
            continue
        pairs = [(a, b) for a, b in enumerate(table) if b > a]
        if any(a < i < b < j or i < a < j < b for a, b in pairs):
            continue
        table[i], table[j] = j, i
    return SecondaryStructure(tuple(table))


class TestDotBracket:
    def test_unpaired(self):
        s = parse_dot_bracket("....")
        assert len(s) == 4 and s.pairs() == []

    def test_nested(self):
        s = parse_dot_bracket("((((....))))")
        # 1-based (1,12),(2,11),(3,10),(4,9)
        assert [(i + 1, j + 1) for i, j in s.pairs()] == [(1, 12), (2, 11), (3, 10), (4, 9)]

    @pytest.mark.parametrize(
        "text, exc",
        [("((.)", UnbalancedBrackets), ("())(", UnbalancedBrackets), ("((....)", UnbalancedBrackets), ("(..)", HairpinTooShort), ("(.x..)", IllegalCharacter)],
    )
    def test_errors(self, text, exc):
        with pytest.raises(exc):
            parse_dot_bracket(text)

    @given(st.integers(0, 2**31 - 1), st.integers(1, 40))
    def test_round_trip(self, seed, n):
        s = random_structure(n, np.random.default_rng(seed))
        assert parse_dot_bracket(s.to_dot_bracket()) == s

    def test_pseudoknot_rejected(self):
        with pytest.raises(Exception):
            SecondaryStructure.from_pairs(14, [(0, 6), (3, 11)])


class TestDistance:
    def test_identical(self):
        s = parse_dot_bracket("((((....))))")
        assert structure_distance(s, s) == 0
        assert structure_distance(parse_dot_bracket("...."), SecondaryStructure.open_chain(4)) == 0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            structure_distance(parse_dot_bracket("...."), parse_dot_bracket("....."))

    def test_partner_change_counts(self):
        s = parse_dot_bracket("((....))..")
        t = parse_dot_bracket("(.(....).)")
        # position 0 keeps its status but changes partner; 1,7,8,9 flip
        assert structure_distance(s, t) == sum(a != b for a, b in zip(s.table, t.table))

    @given(st.integers(0, 2**31 - 1))
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_structure(10, rng) for _ in range(3))
        # independent re-implementation of the position-wise comparison
        naive = 0
        for i in range(10):
            naive += (a.table[i] == -1) != (b.table[i] == -1) or (a.table[i] != b.table[i])
        assert structure_distance(a, b) == naive
        assert structure_distance(a, a) == 0
        assert structure_distance(a, b) == structure_distance(b, a)
        assert structure_distance(a, c) <= structure_distance(a, b) + structure_distance(b, c)


class TestEnergyModel:
    def test_allowed_pairs(self):
        assert MODEL.allowed_pairs == {("A", "U"), ("U", "A"), ("G", "C"), ("C", "G"), ("G", "U"), ("U", "G")}

    def test_gc_stacks_most_stable(self):
        gc = [MODEL.stack[o][i] for o in ("GC", "CG") for i in ("GC", "CG")]
        weak = [MODEL.stack[o][i] for o in ("AU", "UA", "GU", "UG") for i in ("AU", "UA", "GU", "UG")]
        flat = [v for row in MODEL.stack.values() for v in row.values()]
        assert min(flat) == min(gc)
        assert max(gc) < min(weak)

    def test_loop_penalties_non_decreasing(self):
        assert all(MODEL.hairpin(m) <= MODEL.hairpin(m + 1) for m in range(4, 40))
        assert all(MODEL.bulge(m) <= MODEL.bulge(m + 1) for m in range(1, 30))
        assert MODEL.internal(1, 1) <= MODEL.internal(2, 2) <= MODEL.internal(2, 5)

    def test_json_round_trip(self, tmp_path):
        path = tmp_path / "params.json"
        import json

        path.write_text(json.dumps(MODEL.to_dict()))
        assert EnergyModel.load(path) == MODEL

    def test_default_temperature(self):
        assert MODEL.temperature == pytest.approx(310.15)


class TestFreeEnergy:
    def test_open_chain_is_zero(self):
        assert free_energy("GGGGAAAACCCC", SecondaryStructure.open_chain(12)) == 0.0

    def test_hairpin_hand_sum(self):
        # three G-C on G-C stacks plus a tetraloop
        expected = 3 * MODEL.stack["GC"]["GC"] + MODEL.hairpin_a + MODEL.hairpin_b * math.log(4 / 3)
        assert free_energy("GGGGAAAACCCC", parse_dot_bracket("((((....))))")) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(3 * -3.3 + 5.6 + 1.07 * math.log(4 / 3), abs=1e-12)

    def test_disallowed_pair(self):
        with pytest.raises(DisallowedPair):
            free_energy("AAAAA", parse_dot_bracket("(...)"))

    def test_two_hairpins_and_multiloop(self):
        arm = "GGGAAACCC"
        inner = 2 * MODEL.stack["GC"]["GC"] + MODEL.hairpin3
        assert free_energy(arm + "A" + arm, parse_dot_bracket("(((...))).(((...)))")) == pytest.approx(2 * inner)
        closed = "G" + arm + "A" + arm + "C"
        ml = parse_dot_bracket("((((...))).(((...))))")
        assert free_energy(closed, ml) == pytest.approx(MODEL.ml_closing + 2 * MODEL.ml_branch + 2 * inner)

    def test_bulge_and_internal(self):
        # outer G-C, one unpaired base on the 5' side, then a three-pair stem
        seq = "GAGGGAAACCCC"
        s = parse_dot_bracket("(.(((...))))")
        inner = 2 * MODEL.stack["GC"]["GC"] + MODEL.hairpin3
        assert free_energy(seq, s) == pytest.approx(MODEL.bulge_a + inner)
        seq = "GAGGGAAACCCAC"
        s = parse_dot_bracket("(.(((...))).)")
        assert free_energy(seq, s) == pytest.approx(MODEL.internal_a + 2 * MODEL.internal_b + inner)


class TestEnumeration:
    def test_no_pairs(self):
        assert enumerate_structures("AAAA") == [SecondaryStructure.open_chain(4)]

    def test_single_pair(self):
        found = enumerate_structures("GAAAC")
        assert sorted(s.to_dot_bracket() for s in found) == ["(...)", "....."]

    def test_count_against_subset_enumeration(self):
        seq = "GGAAACC"
        candidates = [(i, j) for i in range(7) for j in range(i + 4, 7) if can_pair(seq[i], seq[j])]
        count = 0
        for r in range(len(candidates) + 1):
            for subset in itertools.combinations(candidates, r):
                used = [p for pair in subset for p in pair]
                if len(used) != len(set(used)):
                    continue
                if any(a < c < b < d for (a, b) in subset for (c, d) in subset):
                    continue
                count += 1
        found = enumerate_structures(seq)
        assert len(found) == count
        assert len({s.table for s in found}) == len(found)

    def test_too_long(self):
        with pytest.raises(SequenceTooLong):
            enumerate_structures("A" * 15)


class TestPartitionFunction:
    def test_no_pairable_bases(self):
        pf = partition_function("AAAA")
        assert pf.log_z == 0.0
        assert not pf.pair_prob.any()

    def test_hairpin_dominates(self):
        pf = partition_function("GGGGAAAACCCC")
        assert pf.pair_prob[0, 11] > 0.5

    @pytest.mark.parametrize("seq", random_sequences(40, 12, seed=7) + ["GGGAAACCCAGGGAAACCCAC"[:14], "GGCGAAAGCGCGAAAGCC"[:14]])
    def test_matches_enumeration(self, seq):
        pf = partition_function(seq)
        bf = brute_force(seq)
        assert pf.log_z == pytest.approx(bf["log_z"], rel=1e-9, abs=1e-12)
        np.testing.assert_allclose(pf.pair_prob, bf["pair_prob"], rtol=1e-9, atol=1e-12)
        assert bf["probs"].sum() == pytest.approx(1.0, abs=1e-9)

    def test_multiloop_sequences(self):
        # 14-nt sequences that can close a two-branch multiloop
        rng = np.random.default_rng(3)
        hit = 0
        for _ in range(15):
            seq = "G" + "".join(rng.choice(list("GCAU"), 12, p=[0.35, 0.35, 0.15, 0.15])) + "C"
            bf = brute_force(seq)
            if any(len([p for p in s.pairs() if p[0] > 0 and p[1] < 13]) >= 2 and s.table[0] == 13 for s in bf["structures"]):
                hit += 1
            pf = partition_function(seq)
            assert pf.log_z == pytest.approx(bf["log_z"], rel=1e-9)
            np.testing.assert_allclose(pf.pair_prob, bf["pair_prob"], rtol=1e-9, atol=1e-12)
        assert hit > 0

    def test_probability_invariants(self):
        for seq in random_sequences(30, 60, seed=11):
            pf = partition_function(seq)
            p = pf.pair_prob
            assert np.all(p >= 0) and np.all(p <= 1 + 1e-12)
            np.testing.assert_allclose(p, p.T)
            assert np.all(p.sum(axis=1) <= 1 + 1e-9)
            n = len(seq)
            for i in range(n):
                for j in range(n):
                    if abs(i - j) < 4 or not can_pair(seq[i], seq[j]):
                        assert p[i, j] == 0.0

    def test_long_sequence_no_overflow(self):
        rng = np.random.default_rng(0)
        seq = "".join(rng.choice(list("GC"), 600))
        pf = partition_function(seq)
        assert np.isfinite(pf.log_z) and pf.log_z > 700  # linear-space Z would overflow
        assert np.all(pf.pair_prob.sum(axis=1) <= 1 + 1e-9)


class TestEnsembleDefect:
    def test_all_a(self):
        assert ensemble_defect("AAAA", parse_dot_bracket("....")) == (0.0, 0.0)

    def test_designed_hairpin(self):
        _, ned = ensemble_defect("GGGGAAAACCCC", parse_dot_bracket("((((....))))"))
        assert ned < 0.2

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            ensemble_defect("GGGGAAAACCCC", parse_dot_bracket("...."))

    def test_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for seq in random_sequences(40, 12, seed=5):
            target = random_structure(len(seq), rng)
            phi, ned = ensemble_defect(seq, target)
            bf = brute_force(seq, target)
            assert phi == pytest.approx(bf["phi"], rel=1e-9, abs=1e-12)
            assert 0.0 <= ned <= 1.0


class TestMfe:
    def test_open_chain(self):
        s, e = mfe_structure("AAAA")
        assert s == SecondaryStructure.open_chain(4) and e == 0.0

    def test_hairpin(self):
        s, e = mfe_structure("GGGGAAAACCCC")
        assert s.to_dot_bracket() == "((((....))))"
        assert e == pytest.approx(free_energy("GGGGAAAACCCC", s), abs=1e-12)

    def test_matches_enumeration(self):
        for seq in random_sequences(60, 12, seed=9):
            s, e = mfe_structure(seq)
            bf = brute_force(seq)
            assert e == pytest.approx(bf["mfe"], rel=1e-9, abs=1e-12)
            assert free_energy(seq, s) == pytest.approx(e, abs=1e-9)

    def test_energy_consistent_on_long_sequences(self):
        for seq in random_sequences(20, 80, seed=13):
            s, e = mfe_structure(seq)
            assert free_energy(seq, s) == pytest.approx(e, abs=1e-9)
            assert e <= 0.0

    def test_tie_prefers_pairing(self):
        # zero-energy model: every structure ties with the open chain
        doc = MODEL.to_dict()
        doc["stack"] = {o: {i: 0.0 for i in row} for o, row in doc["stack"].items()}
        doc["hairpin"] = {"size3": 0.0, "a": 0.0, "b": 0.0}
        flat = EnergyModel.from_dict(doc)
        s, e = mfe_structure("GAAAC", flat)
        assert e == 0.0 and s.to_dot_bracket() == "(...)"

    def test_deterministic(self):
        assert mfe_structure("GGGAAACCCAGGGAAACCCAC") == mfe_structure("GGGAAACCCAGGGAAACCCAC")


def test_temperature_override_changes_ensemble():
    hot = MODEL.with_temperature(400.0)
    assert partition_function("GGGGAAAACCCC", hot).pair_prob[0, 11] < partition_function("GGGGAAAACCCC").pair_prob[0, 11]
