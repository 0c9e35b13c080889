import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csl_repair import analysis
from csl_repair.smc import (Factors, ModelFormatError, Smc, StateClass, apply_factors,
                            build_reduced, format_model, instantiate, parse_model, partition,
                            validate)

from helpers import masks, oracle_partition, random_smc

C = StateClass


def machine():
    """Six-state off/up/repair machine."""
    edges = [(0, 2, 0.5), (1, 3, 0.5), (2, 0, 1.0), (2, 3, 2.0), (3, 1, 1.0),
             (3, 4, 1.5), (3, 5, 0.5), (4, 5, 0.8), (5, 2, 0.3), (5, 5, 1.0)]
    labels = {0: {"off"}, 1: {"off"}, 2: {"up"}, 3: {"up"}, 4: {"up"}, 5: {"repair"}}
    return Smc.from_edges(6, edges, labels)


def classes(smc, phi, psi):
    untimed = analysis.untimed_until_prob(smc, phi, psi)
    return partition(smc, phi, psi, untimed)


class TestValidate:
    def test_minimal_chain_ok(self):
        assert validate(Smc.from_edges(2, [(0, 1, 1.0)])).ok

    def test_zero_rate(self):
        rep = validate(Smc.from_edges(2, [(0, 1, 0.0)]))
        assert not rep.ok
        assert "non-positive rate" in rep.errors[0]

    def test_index_out_of_range(self):
        rep = validate(Smc.from_edges(2, [(0, 3, 1.0)]))
        assert any("index out of range" in e for e in rep.errors)

    def test_duplicate_edge(self):
        rep = validate(Smc.from_edges(2, [(0, 1, 1.0), (0, 1, 2.0)]))
        assert any("duplicate" in e for e in rep.errors)

    def test_self_loops_and_absorbing_are_fine(self):
        assert validate(Smc.from_edges(3, [(0, 0, 1.0), (0, 1, 1.0)])).ok


MODEL_TEXT = """\
# machine
states 3
0 1 2.5
1 2 0.5

labels
0: up
2: repair done
"""


class TestModelFile:
    def test_parse(self):
        m = parse_model(MODEL_TEXT)
        assert m.num_states == 3
        assert sorted(m.edges()) == [(0, 1, 2.5), (1, 2, 0.5)]
        assert m.labels == (frozenset({"up"}), frozenset(), frozenset({"repair", "done"}))

    def test_crlf(self):
        m = parse_model(MODEL_TEXT.replace("\n", "\r\n"))
        assert m.num_transitions == 2

    def test_roundtrip(self):
        m = parse_model(MODEL_TEXT)
        again = parse_model(format_model(m))
        assert again.edges() == sorted(m.edges())
        assert again.labels == m.labels

    def test_roundtrip_keeps_exact_rates(self):
        m = Smc.from_edges(2, [(0, 1, 0.1 + 0.2)], {0: {"x"}})
        assert parse_model(format_model(m)).rate[0] == 0.1 + 0.2

    @pytest.mark.parametrize("text, line", [
        ("states 2\n0 1\nlabels\n", 2),
        ("states 2\n0 1 -1\nlabels\n", 2),
        ("states 2\n0 5 1\nlabels\n", 2),
        ("stat 2\nlabels\n", 1),
        ("states 2\n0 1 1\nlabels\nx: a\n", 4),
        ("states 2\n0 1 1\nlabels\n0: 9bad\n", 4),
    ])
    def test_errors_carry_line_numbers(self, text, line):
        with pytest.raises(ModelFormatError) as exc:
            parse_model(text)
        assert exc.value.line == line

    def test_duplicates_rejected_unless_merged(self):
        text = "states 2\n0 1 1\n0 1 2\nlabels\n"
        with pytest.raises(ModelFormatError, match="duplicate"):
            parse_model(text)
        assert parse_model(text, merge_duplicates=True).rate_of(0, 1) == 3.0

    def test_missing_labels_section(self):
        with pytest.raises(ModelFormatError, match="labels"):
            parse_model("states 2\n0 1 1\n")


class TestPartition:
    def test_single_path(self):
        m = Smc.from_edges(2, [(0, 1, 1.0)], {0: {"up"}, 1: {"repair"}})
        part = classes(m, [0], [1])
        assert part.class_of == (C.GO_TO_TARGET, C.TARGET)

    def test_unlabelled_is_invalid(self):
        m = Smc.from_edges(3, [(0, 1, 1.0)], {0: {"up"}, 1: {"repair"}})
        assert classes(m, [0], [1]).class_of[2] is C.INVALID

    def test_four_state_example(self):
        m = Smc.from_edges(4, [(0, 1, 1.0), (0, 2, 1.0), (3, 3, 1.0)],
                           {0: {"up"}, 1: {"repair"}, 3: {"up"}})
        part = classes(m, [0, 3], [1])
        assert part.class_of == (C.GO_BOTH_WAYS, C.TARGET, C.INVALID, C.GO_TO_INVALID)

    def test_machine_shape(self):
        m = machine()
        part = classes(m, [2, 3, 4], [5])
        assert part.class_of == (C.INVALID, C.INVALID, C.GO_BOTH_WAYS, C.GO_BOTH_WAYS,
                                 C.GO_TO_TARGET, C.TARGET)
        assert part.states(C.GO_TO_INVALID) == frozenset()

    def test_length_mismatch(self):
        m = Smc.from_edges(2, [(0, 1, 1.0)])
        other = analysis.untimed_until_prob(Smc.from_edges(3, [(0, 1, 1.0)]), [0], [1])
        with pytest.raises(ValueError, match="length"):
            partition(m, [0], [1], other)

    def test_matches_bfs_oracle_on_random_models(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            m = random_smc(rng, int(rng.integers(1, 51)), p_absorbing=0.1, self_loops=True)
            phi, psi = masks(m)
            part = classes(m, phi, psi)
            assert list(part.class_of) == oracle_partition(m, phi, psi)
            assert sum(part.counts().values()) == m.num_states


class TestReduced:
    def test_machine_placement(self):
        m = machine()
        red = build_reduced(m, classes(m, [2, 3, 4], [5]))
        assert red.t_i == {(4, 5)}
        assert red.t_k == {(3, 4), (3, 5)}
        assert red.t_j == {(2, 0), (3, 1)}
        assert red.zeroed == {(0, 2), (1, 3), (5, 2), (5, 5)}

    def test_no_gobothways(self):
        m = Smc.from_edges(2, [(0, 1, 1.0)], {0: {"up"}, 1: {"repair"}})
        red = build_reduced(m, classes(m, [0], [1]))
        assert red.t_j == red.t_k == frozenset()
        assert red.t_i == {(0, 1)}

    def test_target_self_loop_is_zeroed(self):
        m = Smc.from_edges(2, [(0, 1, 1.0), (1, 1, 3.0)], {0: {"up"}, 1: {"repair"}})
        red = build_reduced(m, classes(m, [0], [1]))
        assert (1, 1) in red.zeroed

    def test_identity_instantiation_drops_only_zeroed(self):
        m = machine()
        red = build_reduced(m, classes(m, [2, 3, 4], [5]))
        g = instantiate(red, Factors())
        expected = sorted(e for e in m.edges() if (e[0], e[1]) not in red.zeroed)
        assert sorted(g.edges()) == expected
        assert g.labels == m.labels

    def test_k_scaling(self):
        m = Smc.from_edges(3, [(0, 1, 2.0), (0, 2, 1.0)], {0: {"up"}, 1: {"repair"}})
        red = build_reduced(m, classes(m, [0], [1]))
        g = instantiate(red, Factors(k=0.5))
        assert g.rate_of(0, 1) == 1.0
        assert g.rate_of(0, 2) == 1.0

    def test_factor_placement_only_touches_its_edges(self):
        m = machine()
        red = build_reduced(m, classes(m, [2, 3, 4], [5]))
        g = instantiate(red, Factors(i=0.089, k=0.122))
        for s, d, r in m.edges():
            if (s, d) in red.zeroed:
                continue
            scale = 0.089 if (s, d) in red.t_i else 0.122 if (s, d) in red.t_k else 1.0
            assert g.rate_of(s, d) == r * scale

    def test_apply_factors_keeps_structure(self):
        m = machine()
        red = build_reduced(m, classes(m, [2, 3, 4], [5]))
        p = apply_factors(red, Factors(j=0.5))
        assert p.num_transitions == m.num_transitions
        assert p.rate_of(2, 0) == 0.5 and p.rate_of(5, 2) == 0.3

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
    def test_factor_range(self, bad):
        with pytest.raises(ValueError):
            Factors(i=bad)

    def test_disjoint_sets_on_random_models(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            m = random_smc(rng, int(rng.integers(2, 30)), self_loops=True)
            phi, psi = masks(m)
            red = build_reduced(m, classes(m, phi, psi))
            sets = [red.t_i, red.t_j, red.t_k, red.zeroed]
            for a in range(4):
                for b in range(a + 1, 4):
                    assert not sets[a] & sets[b]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       f1=st.floats(0.01, 1.0), f2=st.floats(0.01, 1.0), which=st.sampled_from("ijk"))
def test_instantiation_monotone_in_each_factor(seed, f1, f2, which):
    rng = np.random.default_rng(seed)
    m = random_smc(rng, 12)
    phi, psi = masks(m)
    red = build_reduced(m, classes(m, phi, psi))
    lo, hi = sorted((f1, f2))
    r_lo = red.scaled_rates(Factors(**{which: lo}))
    r_hi = red.scaled_rates(Factors(**{which: hi}))
    assert np.all(r_lo <= r_hi)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_partition_ignores_time_and_probability_bound(seed):
    from csl_repair import csl
    from csl_repair.repair import classify

    rng = np.random.default_rng(seed)
    m = random_smc(rng, 15)
    reqs = [csl.parse(f"P{op}{b} [ a U<={t} b ]")
            for op, b, t in (("<=", 0.1, 0.5), (">=", 0.9, 50.0), ("<", 0.5, 3.0))]
    parts = [classify(m, r).partition for r in reqs]
    assert parts[0] == parts[1] == parts[2]
