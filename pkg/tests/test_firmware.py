import numpy as np
import pytest

from dso import (
    Firmware,
    PatternError,
    SexprSyntaxError,
    UnknownSymbolError,
    effective_mass,
    evaluate,
    evaluate_team,
    mutate_variant,
    parse_expr,
    parse_firmware,
    protected_div,
    reference_firmware,
    serialize,
    tree_size,
    validate,
)
from dso.firmware import (
    ALL_TERMINALS,
    DEPARTURE_TERMINALS,
    MVNS_STEP_TEXT,
    RAND1_TEXT,
    Node,
    iter_nodes,
)

from conftest import make_ctx


# --------------------------------------------------------------------------
# parsing

def test_parse_rand1_has_seven_nodes():
    fw = parse_firmware(RAND1_TEXT)
    assert tree_size(fw) == 7
    assert fw.departure.symbol == "PermCBC"


def test_parse_mvns_step_has_three_nodes():
    assert tree_size(parse_firmware(MVNS_STEP_TEXT)) == 3


def test_parse_rejects_constant_departure():
    with pytest.raises(PatternError, match="not a departure terminal"):
        parse_firmware("(+ C1 C2)")


def test_parse_rejects_non_sum_root():
    with pytest.raises(PatternError, match="sum"):
        parse_firmware("(* CBCd C1)")


def test_parse_unknown_symbol_reports_position():
    with pytest.raises(UnknownSymbolError) as excinfo:
        parse_expr("(+ CBCd bogus)")
    assert excinfo.value.position == 8
    assert "bogus" in str(excinfo.value)


@pytest.mark.parametrize("text", [
    "", "(", ")", "(+ CBCd", "(+ CBCd GBC) extra", "(+ CBCd GBC C1)", "(abs GBC CBCd)",
])
def test_parse_syntax_errors(text):
    with pytest.raises(SexprSyntaxError):
        parse_expr(text)


def test_parse_unknown_function():
    with pytest.raises(UnknownSymbolError):
        parse_expr("(sqrt GBC)")


# --------------------------------------------------------------------------
# serialization

def test_serialize_is_canonical():
    assert serialize(parse_firmware(RAND1_TEXT)) == RAND1_TEXT
    assert serialize(parse_firmware("(+ CBCd GBC)")) == "(+ CBCd GBC)"


def test_serialize_round_trips_on_seeded_variants():
    base = parse_firmware(RAND1_TEXT, reference=True)
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        variant = mutate_variant(base, rng)
        again = parse_expr(serialize(variant))
        assert again == variant.root


def test_tree_size_counts_all_nodes():
    assert tree_size(parse_firmware("(+ MVNS Step)")) == 3
    assert tree_size(parse_firmware(RAND1_TEXT)) == 7
    assert tree_size(parse_firmware("(+ CBCd (abs G01))")) == 4


# --------------------------------------------------------------------------
# evaluation

def test_evaluate_global_best_pull():
    # (+ GBC (* C1 (- GBC CBCd))) at GBC=(1,2), CBC_drone=(0,0), C1=0.5
    tree = parse_expr("(+ GBC (* C1 (- GBC CBCd)))")
    ctx = make_ctx(np.zeros((3, 2)), gbc=[1.0, 2.0])
    np.testing.assert_array_equal(evaluate(tree, ctx), [1.5, 3.0])


def test_evaluate_scalar_broadcast():
    ctx = make_ctx(np.full((3, 2), 0.1))
    np.testing.assert_array_equal(evaluate(parse_expr("(+ CBCd C2)"), ctx), [0.5, 0.5])


def test_evaluate_broadcast_matches_per_component_oracle():
    ctx = make_ctx(np.random.default_rng(5).normal(size=(4, 6)))
    out = evaluate(parse_expr("(+ CBCd C1)"), ctx)
    for j in range(6):
        assert out[j] == ctx.cbc[0, j] + 0.5


def test_evaluate_rand1_replays_seeded_permutations():
    cbc = np.arange(6.0).reshape(3, 2)
    fw = parse_firmware(RAND1_TEXT)
    for drone in range(3):
        ctx = make_ctx(cbc, seed=91, drone=drone)
        got = evaluate(fw, ctx)
        # independent replay: one permutation per occurrence, depth-first order
        rng = np.random.default_rng(91)
        r1 = cbc[rng.permutation(3)[drone]]
        r2 = cbc[rng.permutation(3)[drone]]
        r3 = cbc[rng.permutation(3)[drone]]
        np.testing.assert_array_equal(got, r1 + 0.5 * (r2 - r3))


def test_evaluate_is_pure_given_stream_state():
    fw = parse_firmware(MVNS_STEP_TEXT, reference=True)
    cbc = np.random.default_rng(1).normal(size=(5, 3))
    a = evaluate(fw, make_ctx(cbc, seed=7))
    b = evaluate(fw, make_ctx(cbc, seed=7))
    np.testing.assert_array_equal(a, b)


def test_evaluate_team_matches_sequential_per_drone_evaluation():
    cbc = np.random.default_rng(3).uniform(-50, 50, size=(6, 4))
    firmwares = list(reference_firmware())
    grow_rng = np.random.default_rng(17)
    firmwares += [mutate_variant(firmwares[0], grow_rng) for _ in range(10)]
    for k, fw in enumerate(firmwares):
        team = evaluate_team(fw, make_ctx(cbc, seed=1000 + k))
        ctx = make_ctx(cbc, seed=1000 + k)
        rows = []
        for d in range(6):
            ctx.drone = d
            rows.append(evaluate(fw, ctx))
        np.testing.assert_array_equal(team, np.vstack(rows))


def test_protected_div():
    assert protected_div(6, 3) == 2.0
    assert protected_div(5, 0) == 5.0
    np.testing.assert_array_equal(protected_div(np.array([2.0, 4.0]), np.array([1.0, 0.0])),
                                  [2.0, 4.0])


def test_effective_mass_equal_weights():
    assert effective_mass([0.5, 0.5]) == 2.0


# --------------------------------------------------------------------------
# validation

def test_validate_accepts_references():
    rand1, mvns_step = reference_firmware()
    assert validate(rand1) == []
    assert validate(mvns_step) == []  # size 3 < s_min but reference


def test_validate_size_rule_applies_to_non_reference():
    small = parse_firmware(MVNS_STEP_TEXT)
    assert any("size" in issue for issue in validate(small))


def test_validate_flags_duplicate_deterministic_arguments():
    fw = parse_firmware("(+ CBCd (- Shift Shift))", reference=True)
    assert any("duplicate" in issue for issue in validate(fw))


def test_validate_allows_duplicate_stochastic_arguments():
    fw = parse_firmware("(+ CBCd (- G01 G01))", reference=True)
    assert validate(fw) == []
    assert validate(parse_firmware(RAND1_TEXT, reference=True)) == []


def test_validate_flags_identical_base():
    fw = parse_firmware(RAND1_TEXT, reference=True)
    clone = parse_firmware(RAND1_TEXT)
    assert any("identical" in issue for issue in validate(clone, base=fw))


def test_validate_flags_pattern_violation():
    fw = Firmware(parse_expr("(+ GBC C1)"), reference=True)
    assert any("departure" in issue for issue in validate(fw))


# --------------------------------------------------------------------------
# mutation

def test_mutate_variant_respects_all_rules():
    for base in reference_firmware():
        rng = np.random.default_rng(404)
        for _ in range(300):
            variant = mutate_variant(base, rng)
            assert validate(variant, base=base) == []
            assert serialize(variant) != serialize(base)
            assert 5 < tree_size(variant) < 20
            assert not variant.fixed and not variant.reference


def test_mutated_departures_stay_in_alphabet():
    base = parse_firmware(RAND1_TEXT, reference=True)
    rng = np.random.default_rng(11)
    seen_changed = 0
    for _ in range(300):
        variant = mutate_variant(base, rng)
        assert variant.departure.symbol in DEPARTURE_TERMINALS
        if variant.departure.symbol != base.departure.symbol:
            seen_changed += 1
    assert seen_changed > 0


def test_mutate_variant_output_evaluates():
    base = parse_firmware(RAND1_TEXT, reference=True)
    rng = np.random.default_rng(99)
    cbc = np.random.default_rng(0).uniform(-1, 1, size=(5, 3))
    for _ in range(50):
        variant = mutate_variant(base, rng)
        out = evaluate_team(variant, make_ctx(cbc, rng=rng))
        assert out.shape == (5, 3)


def test_grown_trees_use_known_symbols_only():
    base = parse_firmware(MVNS_STEP_TEXT, reference=True)
    rng = np.random.default_rng(8)
    for _ in range(200):
        variant = mutate_variant(base, rng)
        for node in iter_nodes(variant.root):
            if node.is_terminal:
                assert node.symbol in ALL_TERMINALS


def test_node_structural_equality():
    assert parse_expr("(+ CBCd GBC)") == parse_expr("(+ CBCd GBC)")
    assert parse_expr("(+ CBCd GBC)") != parse_expr("(+ CBCd Shift)")
    assert Node("GBC") == Node("GBC")
