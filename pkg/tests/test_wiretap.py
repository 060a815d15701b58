import math

import numpy as np
import pytest

from dmckit.core import Alphabet, Channel, bsc, identity_channel
from dmckit.errors import DimensionMismatchError
from dmckit.fano import MessageSpace, deterministic_code, ml_decoder
from dmckit.wiretap import (WiretapInstance, evaluate_wtc_code,
                            project_simplex, secrecy_bound_single_letter,
                            wtc_converse_chain, _secrecy_objective)


def h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def constant_channel(size=2):
    return Channel(Alphabet(size), Alphabet(size),
                   np.full((size, size), 1.0 / size))


def wtc_code(main, n, codewords):
    ms = MessageSpace.uniform([len(codewords)])
    cw = {m: codewords[i] for i, m in enumerate(ms.support)}
    enc = tuple((m, ((cw[m], 1.0),)) for m in ms.support)
    dec = ml_decoder(ms, enc, main, n, (0,))
    return deterministic_code(ms, n, main.input.size, cw, [dec])


def test_instance_validation():
    with pytest.raises(DimensionMismatchError):
        WiretapInstance(identity_channel(2), identity_channel(3))


def test_evaluate_perfect_secrecy_toy():
    inst = WiretapInstance(identity_channel(2), constant_channel())
    code = wtc_code(inst.main, 2, [0, 3])
    eps, leak = evaluate_wtc_code(inst, code)
    assert eps == 0.0
    assert leak == pytest.approx(0.0, abs=1e-12)


def test_evaluate_full_leakage_toy():
    inst = WiretapInstance(identity_channel(2), identity_channel(2))
    code = wtc_code(inst.main, 2, [0, 3])
    eps, leak = evaluate_wtc_code(inst, code)
    assert eps == 0.0
    assert leak == pytest.approx(1.0)  # H(M) for two equiprobable messages


def test_evaluate_bsc_pair():
    inst = WiretapInstance(bsc(0.1), bsc(0.3))
    code = wtc_code(inst.main, 2, [0, 3])
    eps, leak = evaluate_wtc_code(inst, code)
    assert eps == pytest.approx(0.1)
    assert 0.0 <= leak <= 1.0


def test_chain_perfect_secrecy():
    inst = WiretapInstance(identity_channel(2), constant_channel())
    code = wtc_code(inst.main, 2, [0, 3])
    rep = wtc_converse_chain(inst, code, single_letter_starts=8)
    assert rep.identities.passed
    assert rep.leakage == pytest.approx(0.0, abs=1e-12)
    assert rep.mi_eve_qstar == pytest.approx(0.0, abs=1e-12)
    # with zero leakage and zero error the deflation term is (0+1)/(1*n)
    assert rep.leakage_deflation_theorem == pytest.approx(4.0 / 2.0)
    assert rep.qstar_mass_ok


def test_chain_full_leakage():
    inst = WiretapInstance(identity_channel(2), identity_channel(2))
    code = wtc_code(inst.main, 2, [0, 3])
    rep = wtc_converse_chain(inst, code, single_letter_starts=8)
    assert rep.identities.passed
    # Y and Z are the same channel: per-cell main and eve informations agree
    assert rep.mi_eve_qstar / rep.n == pytest.approx(rep.mi_main_qstar, abs=1e-9)
    assert rep.single_letter == pytest.approx(0.0, abs=1e-9)


def test_chain_bsc_numeric():
    inst = WiretapInstance(bsc(0.1), bsc(0.3))
    code = wtc_code(inst.main, 2, [0, 3])
    rep = wtc_converse_chain(inst, code, single_letter_starts=8)
    assert rep.identities.passed
    assert rep.rate == pytest.approx(0.5)
    assert rep.final_bound_measured >= rep.rate - 1e-9
    assert rep.single_letter == pytest.approx(h2(0.3) - h2(0.1), abs=1e-4)


def test_chain_requires_reliability():
    inst = WiretapInstance(constant_channel(), constant_channel())
    ms = MessageSpace.uniform([2])
    enc = tuple((m, ((i, 1.0),)) for i, m in enumerate(ms.support))
    # decoder that is always wrong: decodes to the other message
    import numpy as np
    from dmckit.fano import Decoder
    table = np.zeros((2, 2))
    table[:, 1] = 1.0
    dec = Decoder(S=(0,), m_values=((0,), (1,)), table=table)
    code = deterministic_code(ms, 1, 2, {(0,): 0, (1,): 1}, [dec])
    eps, _ = evaluate_wtc_code(inst, code)
    assert eps == pytest.approx(0.5)


def test_chain_report_serializes():
    from dmckit.reports import json_text
    inst = WiretapInstance(bsc(0.1), bsc(0.3))
    code = wtc_code(inst.main, 2, [0, 3])
    rep = wtc_converse_chain(inst, code, single_letter_starts=4)
    text = json_text(rep.to_json_obj(), indent=1)
    import json as _json
    obj = _json.loads(text)
    for key in ("rate", "epsilon", "leakage_bits", "mi_main_rows",
                "leakage_deflation_theorem", "cell_count_term",
                "single_letter", "identities_passed"):
        assert key in obj
    assert obj["identities_passed"] is True


def test_project_simplex():
    v = project_simplex(np.array([0.4, 0.9, -0.2]))
    assert v.min() >= 0.0
    assert v.sum() == pytest.approx(1.0)
    p = np.array([0.2, 0.5, 0.3])
    assert np.allclose(project_simplex(p), p)


def test_single_letter_known_values():
    assert secrecy_bound_single_letter(
        WiretapInstance(bsc(0.0), bsc(0.5)), 2).value == pytest.approx(1.0, abs=1e-6)
    assert secrecy_bound_single_letter(
        WiretapInstance(bsc(0.1), bsc(0.1)), 2).value == pytest.approx(0.0, abs=1e-9)
    got = secrecy_bound_single_letter(WiretapInstance(bsc(0.1), bsc(0.2)), 2)
    assert got.value == pytest.approx(h2(0.2) - h2(0.1), abs=1e-6)
    assert len(got.p_u) == 2 and len(got.p_x_given_u) == 2


def test_single_letter_monotone_in_u():
    inst = WiretapInstance(bsc(0.05), bsc(0.25))
    vals = [secrecy_bound_single_letter(inst, u).value for u in (1, 2)]
    assert vals[0] <= vals[1] + 1e-9
    # a constant auxiliary carries no information
    assert vals[0] == pytest.approx(0.0, abs=1e-12)


def test_single_letter_stationarity():
    inst = WiretapInstance(bsc(0.1), bsc(0.2))
    res = secrecy_bound_single_letter(inst, 2)
    p_u = np.array(res.p_u)
    rows = np.array(res.p_x_given_u)
    wy, wz = inst.main.matrix, inst.eve.matrix
    base = _secrecy_objective(p_u, rows, wy, wz)
    h = 1e-6
    # feasible ascent directions: mass transfers within each simplex block
    worst = -np.inf
    for i in range(2):
        for j in range(2):
            if i == j or p_u[j] < h:
                continue
            cand = p_u.copy()
            cand[i] += h
            cand[j] -= h
            worst = max(worst, (_secrecy_objective(cand, rows, wy, wz) - base) / h)
    for r in range(2):
        for i in range(2):
            for j in range(2):
                if i == j or rows[r, j] < h:
                    continue
                cand = rows.copy()
                cand[r, i] += h
                cand[r, j] -= h
                worst = max(worst,
                            (_secrecy_objective(p_u, cand, wy, wz) - base) / h)
    assert worst <= 1e-5


def test_single_letter_threads_agree():
    inst = WiretapInstance(bsc(0.1), bsc(0.25))
    a = secrecy_bound_single_letter(inst, 2, starts=8, threads=1)
    b = secrecy_bound_single_letter(inst, 2, starts=8, threads=4)
    assert a.value == b.value
    assert a.p_u == b.p_u and a.p_x_given_u == b.p_x_given_u
