import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import clockclosure as cc
from clockclosure.spectra import SPEED_OF_LIGHT_CM_S, SPEED_OF_LIGHT_NM_S

from helpers import triangle_table, two_level_table

# frozen oracle values: table wavenumbers times the defined c (exact products)
F_1S0_3P0 = 518294362279306.1
F_1S0_1D2 = 829755522205057.0
F_3P0_J2 = 176879918580418.25


class TestUnitConversions:
    def test_clock_state_wavenumber(self):
        assert cc.wavenumber_to_frequency(17288.439) == 17288.439 * SPEED_OF_LIGHT_CM_S
        assert cc.wavenumber_to_frequency(17288.439) == pytest.approx(F_1S0_3P0, rel=1e-15)

    def test_zero(self):
        assert cc.wavenumber_to_frequency(0.0) == 0.0

    def test_upper_state_wavenumber(self):
        assert cc.wavenumber_to_frequency(27677.665) == pytest.approx(F_1S0_1D2, rel=1e-15)

    @pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
    def test_nonfinite_rejected(self, bad):
        with pytest.raises(ValueError):
            cc.wavenumber_to_frequency(bad)

    def test_wavelengths(self):
        assert cc.vacuum_wavelength(F_1S0_1D2) == pytest.approx(361.302155, abs=1e-5)
        assert cc.vacuum_wavelength(F_1S0_3P0) == pytest.approx(578.421221, abs=1e-5)

    def test_wavelength_identity(self):
        # a frequency numerically equal to c in nm/s has a 1 nm wavelength
        assert cc.vacuum_wavelength(SPEED_OF_LIGHT_NM_S) == 1.0

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.inf])
    def test_wavelength_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            cc.vacuum_wavelength(bad)
        with pytest.raises(ValueError):
            cc.wavelength_to_frequency(bad)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=1e-3, max_value=1e8))
    def test_round_trip(self, energy):
        # lambda[nm] * E[cm^-1] = 1e7 for any positive energy
        product = cc.vacuum_wavelength(cc.wavenumber_to_frequency(energy)) * energy
        assert product == pytest.approx(1e7, rel=1e-12)


class TestTransitionFrequency:
    def test_clock_line(self, yb_table):
        assert cc.transition_frequency(yb_table, "1S0", "3P0") == pytest.approx(F_1S0_3P0, rel=1e-15)

    def test_excited_interval(self, yb_table):
        assert cc.transition_frequency(yb_table, "3P0", "J2") == pytest.approx(F_3P0_J2, rel=1e-15)

    def test_degenerate_pair_rejected(self, yb_table):
        with pytest.raises(ValueError):
            cc.transition_frequency(yb_table, "1S0", "1S0")

    def test_inverted_pair_rejected(self, yb_table):
        with pytest.raises(ValueError):
            cc.transition_frequency(yb_table, "3P0", "1S0")

    def test_unknown_label(self, yb_table):
        with pytest.raises(KeyError):
            cc.transition_frequency(yb_table, "1S0", "nope")


class TestTypes:
    def test_level_validation(self):
        with pytest.raises(ValueError):
            cc.Level("x", "c", "t", Fraction(1, 3), "even", 1.0)
        with pytest.raises(ValueError):
            cc.Level("x", "c", "t", 0, "even", -1.0)
        with pytest.raises(ValueError):
            cc.Level("x", "c", "t", 0, "sideways", 1.0)
        with pytest.raises(ValueError):
            cc.Level("x", "c", "t", 0, "even", 1.0, lifetime_s=0.0)
        lv = cc.Level("x", "c", "t", "3/2", "odd", 5.0, lifetime_s=2.0)
        assert lv.j == Fraction(3, 2)

    def test_transition_validation(self):
        with pytest.raises(ValueError):
            cc.Transition("a", "a", cc.TransitionKind.E1)
        with pytest.raises(ValueError):
            cc.Transition("a", "b", cc.TransitionKind.E1, sigma_hz=1.0)
        with pytest.raises(ValueError):
            cc.Transition("a", "b", cc.TransitionKind.E1, measured_hz=1.0, sigma_hz=0.0)

    def test_table_requires_single_ground(self):
        levels = (
            cc.Level("a", "c", "t", 0, "even", 1.0),
            cc.Level("b", "c", "t", 0, "odd", 2.0),
        )
        with pytest.raises(ValueError, match="energy 0"):
            cc.LevelTable("x", levels, ())

    def test_cycle_must_close_and_be_simple(self):
        table = triangle_table()
        ab, bc, ac = table.transitions
        cc.ClosureCycle(((ab, +1), (bc, +1), (ac, -1)))
        with pytest.raises(ValueError):
            cc.ClosureCycle(((ab, +1), (bc, +1)))
        with pytest.raises(ValueError):
            cc.ClosureCycle(((ab, +1), (ab, -1), (ab, +1)))

    def test_cycle_energy_sum_is_exactly_zero(self, ra_table):
        for cycle in cc.enumerate_closures(ra_table, 4):
            assert cycle.signed_energy_sum(ra_table) == 0


class TestLoadLevelTable:
    def test_bundled_yb(self, yb_table):
        # all eight tabulated states ride along
        assert len(yb_table.levels) == 8
        assert yb_table.system == "Yb I"
        assert yb_table.level("3P1").lifetime_s == pytest.approx(866e-9)
        assert yb_table.level("1S0").lifetime_s is None
        assert yb_table.level("J2").parity == "odd"

    def test_bundled_ra(self, ra_table):
        assert len(ra_table.levels) == 4
        assert len(ra_table.transitions) == 5
        kinds = {t.name: t.kind for t in ra_table.transitions}
        assert kinds["S1/2->D5/2"] is cc.TransitionKind.E2
        assert kinds["D3/2->P3/2"] is cc.TransitionKind.E1

    def test_bundled_ca(self, ca_table):
        assert len(ca_table.levels) == 3
        assert all(t.sigma_hz == pytest.approx(100e3 / math.sqrt(3)) for t in ca_table.transitions)

    def test_dangling_endpoint_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(
            "label,configuration,term,j,parity,energy_cm1,lifetime_s\n"
            "g,c,t,0,even,0,\n"
            "e,c,t,0,odd,10,\n"
            "lower,upper,kind,measured_hz,sigma_hz\n"
            "g,missing,E1,,\n"
        )
        with pytest.raises(cc.DataError, match=r"bad\.csv:5.*missing"):
            cc.load_level_table(p)

    def test_duplicate_label_reports_line(self, tmp_path):
        p = tmp_path / "dup.csv"
        p.write_text(
            "label,configuration,term,j,parity,energy_cm1,lifetime_s\n"
            "g,c,t,0,even,0,\n"
            "g,c,t,0,odd,10,\n"
        )
        with pytest.raises(cc.DataError, match=r"dup\.csv:3.*duplicate"):
            cc.load_level_table(p)

    def test_no_ground_level(self, tmp_path):
        p = tmp_path / "noground.csv"
        p.write_text(
            "label,configuration,term,j,parity,energy_cm1,lifetime_s\n"
            "a,c,t,0,even,5,\n"
            "b,c,t,0,odd,10,\n"
        )
        with pytest.raises(cc.DataError, match="energy 0"):
            cc.load_level_table(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "hdr.csv"
        p.write_text("name,energy\nx,1\n")
        with pytest.raises(cc.DataError, match="header"):
            cc.load_level_table(p)

    def test_bad_number_reports_line(self, tmp_path):
        p = tmp_path / "num.csv"
        p.write_text(
            "label,configuration,term,j,parity,energy_cm1,lifetime_s\n"
            "g,c,t,0,even,zero,\n"
        )
        with pytest.raises(cc.DataError, match=r"num\.csv:2"):
            cc.load_level_table(p)

    def test_unknown_kind_lists_valid_ones(self, tmp_path):
        p = tmp_path / "kind.csv"
        p.write_text(
            "label,configuration,term,j,parity,energy_cm1,lifetime_s\n"
            "g,c,t,0,even,0,\n"
            "e,c,t,0,odd,10,\n"
            "lower,upper,kind,measured_hz,sigma_hz\n"
            "g,e,E7,,\n"
        )
        with pytest.raises(cc.DataError, match="E1M1"):
            cc.load_level_table(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(cc.DataError):
            cc.load_level_table(tmp_path / "absent.csv")


class TestBundledDataConsistency:
    # quoted whole-nm lines vs table energies: allow 0.5 nm rounding plus a
    # 0.1% air/vacuum allowance, since quoted values rarely say which they are
    @pytest.mark.parametrize(
        "pair,quoted_nm",
        [
            (("S1/2", "D5/2"), 728.0),
            (("S1/2", "D3/2"), 828.0),
            (("D3/2", "P3/2"), 708.0),
            (("D5/2", "P3/2"), 802.0),
            (("S1/2", "P3/2"), 382.0),
        ],
    )
    def test_ra_lines_match_quoted_wavelengths(self, ra_table, pair, quoted_nm):
        derived = cc.vacuum_wavelength(cc.transition_frequency(ra_table, *pair))
        assert abs(derived - quoted_nm) < 0.5 + 1e-3 * quoted_nm

    @pytest.mark.parametrize(
        "pair,quoted_nm",
        [(("S1/2", "D5/2"), 729.0), (("S1/2", "P3/2"), 393.0), (("D5/2", "P3/2"), 854.0)],
    )
    def test_ca_lines_match_quoted_wavelengths(self, ca_table, pair, quoted_nm):
        derived = cc.vacuum_wavelength(cc.transition_frequency(ca_table, *pair))
        assert abs(derived - quoted_nm) < 0.5 + 1e-3 * quoted_nm

    @pytest.mark.parametrize("table_name", ["ra_ii.csv", "ca_ii.csv"])
    def test_measured_frequencies_within_quoted_accuracy(self, table_name):
        table = cc.load_level_table(cc.bundled_data_dir() / table_name)
        for tr in table.transitions:
            derived = cc.transition_frequency(table, tr.lower, tr.upper)
            assert abs(tr.measured_hz - derived) < 5.0 * tr.sigma_hz


class TestEnumerateClosures:
    def test_ra_cycle_count(self, ra_table):
        cycles = cc.enumerate_closures(ra_table, max_length=4)
        assert len(cycles) == 3
        triangles = [c for c in cycles if len(c) == 3]
        squares = [c for c in cycles if len(c) == 4]
        assert len(triangles) == 2 and len(squares) == 1
        tri_sets = {frozenset(t.name for t in c.transitions) for c in triangles}
        assert tri_sets == {
            frozenset({"S1/2->D5/2", "D5/2->P3/2", "S1/2->P3/2"}),
            frozenset({"S1/2->D3/2", "D3/2->P3/2", "S1/2->P3/2"}),
        }
        assert {t.name for t in squares[0].transitions} == {
            "S1/2->D3/2", "D3/2->P3/2", "D5/2->P3/2", "S1/2->D5/2",
        }

    def test_ra_triangles_only(self, ra_table):
        assert len(cc.enumerate_closures(ra_table, max_length=3)) == 2

    def test_two_levels_no_cycle(self):
        assert cc.enumerate_closures(two_level_table(), 4) == []

    def test_yb_single_triangle(self, yb_table):
        cycles = cc.enumerate_closures(yb_table, max_length=4)
        assert len(cycles) == 1
        assert {t.name for t in cycles[0].transitions} == {"1S0->3P0", "3P0->J2", "1S0->J2"}

    def test_max_length_validated(self, ra_table):
        with pytest.raises(ValueError):
            cc.enumerate_closures(ra_table, max_length=2)

    def test_parallel_transitions_counted_separately(self):
        base = triangle_table()
        extra = cc.Transition("a", "b", cc.TransitionKind.TwoPhotonDegenerate)
        table = cc.LevelTable("multi", base.levels, base.transitions + (extra,))
        cycles = cc.enumerate_closures(table, 3)
        assert len(cycles) == 2

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(min_value=3, max_value=7).flatmap(
            lambda n: st.tuples(st.just(n), st.sets(
                st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] < e[1]),
                max_size=n * (n - 1) // 2,
            ))
        ),
        st.integers(min_value=3, max_value=5),
    )
    def test_matches_independent_graph_library(self, graph_spec, max_length):
        # cross-check the exhaustive DFS against networkx on random graphs
        import networkx as nx

        n, edges = graph_spec
        levels = tuple(
            cc.Level(f"L{i}", "c", "t", 0, "even", 100.0 * i) for i in range(n)
        )
        transitions = tuple(
            cc.Transition(f"L{a}", f"L{b}", cc.TransitionKind.E1) for a, b in sorted(edges)
        )
        table = cc.LevelTable("random", levels, transitions)
        mine = {
            frozenset(frozenset(t.pair) for t in c.transitions)
            for c in cc.enumerate_closures(table, max_length)
        }
        g = nx.Graph()
        g.add_nodes_from(f"L{i}" for i in range(n))
        g.add_edges_from((t.lower, t.upper) for t in transitions)
        theirs = set()
        for cycle in nx.simple_cycles(g, length_bound=max_length):
            pairs = list(zip(cycle, cycle[1:] + cycle[:1]))
            theirs.add(frozenset(frozenset(p) for p in pairs))
        assert mine == theirs

    @settings(max_examples=30, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_row_order_invariance(self, ra_table, rnd):
        levels = list(ra_table.levels)
        transitions = list(ra_table.transitions)
        rnd.shuffle(levels)
        rnd.shuffle(transitions)
        shuffled = cc.LevelTable(ra_table.system, tuple(levels), tuple(transitions))
        reference = [
            (c.level_sequence, tuple(t.name for t in c.transitions))
            for c in cc.enumerate_closures(ra_table, 4)
        ]
        permuted = [
            (c.level_sequence, tuple(t.name for t in c.transitions))
            for c in cc.enumerate_closures(shuffled, 4)
        ]
        assert permuted == reference


class TestClosureResidual:
    def test_exact_closure(self):
        # signs (+, +, -) with frequencies (2, 3, 5) sum to exactly zero
        table = triangle_table()
        cycle = cc.enumerate_closures(table, 3)[0]
        pos = [tr.pair for tr, sign in cycle.steps if sign > 0]
        neg = [tr.pair for tr, sign in cycle.steps if sign < 0]
        assert len(pos) == 2 and len(neg) == 1
        freqs = {pos[0]: 2.0, pos[1]: 3.0, neg[0]: 5.0}
        assert cc.closure_residual(cycle, freqs) == 0.0

    def test_whole_nm_radium_triangle(self, ra_table):
        # rounding the wavelengths to whole nm leaves a ~1e12 Hz residual
        cycle = next(
            c for c in cc.enumerate_closures(ra_table, 3)
            if {t.name for t in c.transitions} == {"S1/2->D5/2", "D5/2->P3/2", "S1/2->P3/2"}
        )
        freqs = {
            ("S1/2", "D5/2"): cc.wavelength_to_frequency(728.0),
            ("D5/2", "P3/2"): cc.wavelength_to_frequency(802.0),
            ("S1/2", "P3/2"): cc.wavelength_to_frequency(382.0),
        }
        residual = cc.closure_residual(cycle, freqs)
        assert residual == pytest.approx(811873808481.25, rel=1e-12)

    def test_anomaly_offsets_add_linearly(self, yb_table):
        cycle = cc.enumerate_closures(yb_table, 3)[0]
        exact = {
            tr.pair: cc.transition_frequency(yb_table, tr.lower, tr.upper) for tr in cycle.transitions
        }
        eps = {("1S0", "3P0"): 1.0, ("3P0", "J2"): 1.0, ("1S0", "J2"): 0.0}
        perturbed = {pair: f + eps[pair] for pair, f in exact.items()}
        base = cc.closure_residual(cycle, exact)
        assert cc.closure_residual(cycle, perturbed) - base == pytest.approx(2.0, abs=1e-9)

    def test_missing_frequency(self, yb_table):
        cycle = cc.enumerate_closures(yb_table, 3)[0]
        with pytest.raises(KeyError):
            cc.closure_residual(cycle, {})

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=3, max_size=3),
        st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=3, max_size=3),
    )
    def test_linearity(self, ra_table, f_values, g_values):
        cycle = cc.enumerate_closures(ra_table, 3)[0]
        pairs = [tr.pair for tr in cycle.transitions]
        f = dict(zip(pairs, f_values))
        g = dict(zip(pairs, g_values))
        fg = {p: f[p] + g[p] for p in pairs}
        lhs = cc.closure_residual(cycle, fg)
        rhs = cc.closure_residual(cycle, f) + cc.closure_residual(cycle, g)
        assert lhs == pytest.approx(rhs, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(min_value=-1e9, max_value=1e9), min_size=4, max_size=4))
    def test_gradient_blindness(self, ra_table, potentials):
        # frequencies that are differences of any per-level potential close exactly
        labels = sorted(lv.label for lv in ra_table.levels)
        phi = dict(zip(labels, potentials))
        freqs = {t.pair: phi[t.upper] - phi[t.lower] for t in ra_table.transitions}
        scale = max(1.0, max(abs(v) for v in potentials))
        for cycle in cc.enumerate_closures(ra_table, 4):
            assert abs(cc.closure_residual(cycle, freqs)) <= 1e-9 * scale
