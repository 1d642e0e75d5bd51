import json
import logging
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sotbayes.device import current_for_probability, default_amplitude_curve
from sotbayes.errors import (CycleError, DuplicateVariableError, MissingParentError, ProbabilityRangeError,
                             QueryError, TableSizeError, ZeroEvidenceError)
from sotbayes.network import (BayesNet, Cpt, Query, compile_to_pulse_network, default_network, estimate_conditional,
                              estimate_marginal, exact_infer, load_network, program_current, realized_network)
from sotbayes.pulse import DacSpec, PulseTrain, dac_quantize, run_network_cycles

NET = default_network()
CURVE = default_amplitude_curve()


def hand_enumeration(c_p=0.5, s=(0.5, 0.1), r=(0.2, 0.8), w=(0.0, 0.9, 0.9, 0.99)):
    """Independent 16-state table for the sprinkler network."""
    joint = {}
    for c, sv, rv, wv in product((0, 1), repeat=4):
        pc = c_p if c else 1 - c_p
        ps = s[c] if sv else 1 - s[c]
        pr = r[c] if rv else 1 - r[c]
        pw_true = w[2 * sv + rv]
        pw = pw_true if wv else 1 - pw_true
        joint[(c, sv, rv, wv)] = pc * ps * pr * pw
    return joint


def _cond(joint, idx, given=None):
    num = den = 0.0
    for k, p in joint.items():
        if given and k[given] != 1:
            continue
        den += p
        num += p * k[idx]
    return num / den


J = hand_enumeration()


def test_hand_enumeration_values():
    assert sum(J.values()) == pytest.approx(1.0, abs=1e-15)
    assert _cond(J, 3) == pytest.approx(0.6471, abs=1e-12)
    assert _cond(J, 1, 3) == pytest.approx(0.4297635605006954, abs=1e-12)
    assert _cond(J, 2, 3) == pytest.approx(0.7079276773296246, abs=1e-12)


@pytest.mark.parametrize("target,idx", [("C", 0), ("S", 1), ("R", 2), ("W", 3)])
def test_marginals_match_hand_enumeration(target, idx):
    assert exact_infer(NET, target) == pytest.approx(_cond(J, idx), abs=1e-12)


@pytest.mark.parametrize("target,idx", [("S", 1), ("R", 2), ("C", 0)])
def test_conditionals_match_hand_enumeration(target, idx):
    assert exact_infer(NET, target, {"W": 1}) == pytest.approx(_cond(J, idx, 3), abs=1e-12)


def test_cpt_entry_recovered_by_query():
    assert exact_infer(NET, Query("W", {"S": 1, "R": 1})) == pytest.approx(0.99, abs=1e-12)


def test_default_document_shape():
    assert set(NET.variables) == {"C", "S", "R", "W"}
    assert len(NET.edges) == 4
    assert NET.parents("W") == ("S", "R")
    assert NET.order[0] == "C" and NET.order[-1] == "W"


def _doc(**over):
    d = NET.to_document()
    for v in d["variables"]:
        v.update(over.get(v["name"], {}))
    return d


def test_round_trip_document(tmp_path):
    path = tmp_path / "n.json"
    path.write_text(json.dumps(NET.to_document()))
    assert load_network(path).to_document() == NET.to_document()


def test_table_size_error():
    with pytest.raises(TableSizeError):
        load_network(_doc(W={"cpt": [0.1, 0.2, 0.3]}))


def test_self_loop_is_cycle():
    with pytest.raises(CycleError):
        load_network(_doc(C={"parents": ["C"], "cpt": [0.5, 0.5]}))


def test_two_node_cycle():
    with pytest.raises(CycleError):
        load_network(_doc(C={"parents": ["W"], "cpt": [0.5, 0.5]}))


def test_missing_parent():
    with pytest.raises(MissingParentError):
        load_network(_doc(C={"parents": ["X"], "cpt": [0.5, 0.5]}))


def test_duplicate_and_range_errors():
    d = NET.to_document()
    d["variables"].append(dict(d["variables"][0]))
    with pytest.raises(DuplicateVariableError):
        load_network(d)
    with pytest.raises(ProbabilityRangeError):
        load_network(_doc(C={"cpt": [1.5]}))


def test_invalid_queries():
    with pytest.raises(QueryError):
        exact_infer(NET, "S", {"S": 1})
    with pytest.raises(QueryError):
        exact_infer(NET, "X")
    with pytest.raises(QueryError):
        exact_infer(NET, "S", {"W": 2})


def test_zero_probability_evidence():
    net = NET.with_probs({"C": (0.0,)})
    with pytest.raises(ZeroEvidenceError):
        exact_infer(net, "S", {"C": 1})


cpt_p = st.floats(0.01, 0.99)


@given(cpt_p, st.tuples(cpt_p, cpt_p), st.tuples(cpt_p, cpt_p), st.tuples(cpt_p, cpt_p, cpt_p, cpt_p))
@settings(max_examples=60, deadline=None)
def test_oracle_matches_enumeration_for_random_tables(c, s, r, w):
    net = NET.with_probs({"C": (c,), "S": s, "R": r, "W": w})
    joint = hand_enumeration(c, s, r, w)
    for name, idx in (("C", 0), ("S", 1), ("R", 2), ("W", 3)):
        assert exact_infer(net, name) == pytest.approx(_cond(joint, idx), abs=1e-12)
    # Bayes rule ties the two directions of conditioning together
    lhs = exact_infer(net, "S", {"W": 1}) * exact_infer(net, "W")
    rhs = exact_infer(net, "W", {"S": 1}) * exact_infer(net, "S")
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_compile_root_current():
    assert current_for_probability(0.5, CURVE) == pytest.approx(0.505, abs=1e-12)
    comp = compile_to_pulse_network(NET)
    c = comp.pulse_net.by_name["C"]
    assert c.current_table[()] == dac_quantize(0.505, DacSpec())
    assert len(comp.pulse_net.by_name["W"].current_table) == 4


def test_zero_entry_disables_source_by_default():
    comp = compile_to_pulse_network(NET)
    w = comp.pulse_net.by_name["W"]
    assert w.current_table[(0, 0)] is None
    assert comp.realized.cpts["W"].probs[0] == 0.0
    assert not comp.clamped
    tr = run_network_cycles(comp.pulse_net, 20_000, 1, engine="vector")
    s, r, wt = tr["S"].bits, tr["R"].bits, tr["W"].bits
    assert wt[(s == 0) & (r == 0)].sum() == 0


def test_zero_entry_floor_clamp_when_requested(caplog):
    with caplog.at_level(logging.WARNING, logger="sotbayes.network"):
        comp = compile_to_pulse_network(NET, zero_disables_source=False)
    w = comp.pulse_net.by_name["W"]
    assert w.current_table[(0, 0)] == pytest.approx(0.48)
    (entry,) = comp.clamped
    assert entry.variable == "W" and entry.parents == (0, 0)
    assert entry.p_realized == pytest.approx(0.0361859, rel=1e-5)
    assert any("not reachable" in rec.message for rec in caplog.records)
    tr = run_network_cycles(comp.pulse_net, 100_000, 2, engine="vector")
    mask = (tr["S"].bits == 0) & (tr["R"].bits == 0)
    rate = tr["W"].bits[mask].mean()
    n = mask.sum()
    assert abs(rate - 0.0361859) < 4 * np.sqrt(0.036 / n)


def test_program_current_flags():
    dac = DacSpec()
    assert program_current(0.0, CURVE, dac) == (None, False, True)
    i, clamped, disabled = program_current(0.0, CURVE, dac, zero_disables_source=False)
    assert i == pytest.approx(0.48) and clamped and not disabled
    i, clamped, _ = program_current(1.0, CURVE, dac)
    assert i == pytest.approx(0.54) and clamped
    _, clamped, _ = program_current(0.3, CURVE, dac)
    assert not clamped


def test_realized_oracle_values():
    real = realized_network(NET)
    assert exact_infer(real, "R", {"W": 1}) == pytest.approx(0.70674, abs=1e-5)
    assert exact_infer(real, "W") == pytest.approx(0.65505, abs=1e-5)
    # DAC quantization alone moves the root prior by about 0.0103
    assert exact_infer(real, "C") == pytest.approx(0.51026, abs=1e-5)


def test_estimate_marginal_examples():
    assert estimate_marginal({"S": PulseTrain([1] * 28 + [0] * 72)}, "S") == 0.28
    assert estimate_marginal({"S": PulseTrain([1] * 10)}, "S") == 1.0
    with pytest.raises(ValueError):
        estimate_marginal({"S": PulseTrain([])}, "S")


def test_conditional_edge_cases():
    t = PulseTrain([1, 0, 1, 1])
    assert estimate_conditional({"A": t, "B": t}, "A", "B") == 1.0
    with pytest.raises(ZeroEvidenceError):
        estimate_conditional({"A": t, "B": PulseTrain([0, 0, 0, 0])}, "A", "B")
    with pytest.raises(ValueError):
        estimate_conditional({"A": t, "B": t}, "A", "B", method="magic")


@pytest.fixture(scope="module")
def long_run():
    comp = compile_to_pulse_network(NET)
    return comp, run_network_cycles(comp.pulse_net, 100_000, 0, engine="vector")


def test_marginal_s_long_run(long_run):
    _, tr = long_run
    assert abs(estimate_marginal(tr, "S") - 0.30) < 0.005


def test_counter_ratio_s_given_w(long_run):
    _, tr = long_run
    assert abs(estimate_conditional(tr, "S", "W") - 0.4298) < 0.01


def test_hardware_divider_r_given_w(long_run):
    _, tr = long_run
    est = estimate_conditional(tr, "R", "W", method="hardware-divider", rng=np.random.default_rng(0))
    assert abs(est - 0.7079) < 0.05


def test_bayesnet_direct_construction():
    net = BayesNet("pair", {"A": Cpt((), (0.3,)), "B": Cpt(("A",), (0.1, 0.7))})
    assert net.order == ("A", "B")
    assert exact_infer(net, "B") == pytest.approx(0.7 * 0.1 + 0.3 * 0.7)
