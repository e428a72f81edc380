"""Tests for round execution, sifting, reconciliation and estimation."""

import math
from dataclasses import replace

import numpy as np
import pytest

from dqsim import adversary, protocol, qcore


def make_config(**overrides):
    base = dict(variant="entanglement", direction="one_way", n=1, T=3000,
                p_c=0.5, p_e=0.5, p_d=0.0, epsilon_threshold=0.251,
                true_phi=0.3, seed=1234)
    base.update(overrides)
    return protocol.ProtocolConfig(**base)


def synthetic_transcript(pair_products, est_products=None, config=None):
    """Build an entanglement-variant transcript with prescribed products.

    ``pair_products`` maps check pairs like "XZ" to lists of +-1 products;
    the provider outcome is pinned to +1 so the sensor outcome carries the
    product.
    """
    est_products = est_products or {}
    rows = []
    for key, vals in pair_products.items():
        a_idx = protocol.AXES.index(key[0])
        b_idx = protocol.AXES.index(key[1])
        for v in vals:
            rows.append((0, a_idx, b_idx, 1, v, 1))
    for key, vals in est_products.items():
        a_idx = protocol.AXES.index(key[0])
        b_idx = protocol.AXES.index(key[1])
        for v in vals:
            rows.append((1, a_idx, b_idx, 1, v, 2))
    T = len(rows)
    config = config or make_config(T=T)
    assert config.T == T
    arr = np.array(rows, dtype=np.int8)
    return protocol.Transcript(
        config,
        arr[:, 0].copy(),
        arr[:, 1].copy(),
        np.full(T, -1, dtype=np.int8),
        arr[:, 2].copy(),
        arr[:, 3].copy(),
        arr[:, 4].copy(),
        arr[:, 5].copy(),
    )


# ---------------------------------------------------------------- config

def test_config_probability_sum_enforced():
    with pytest.raises(ValueError):
        make_config(p_c=0.5, p_e=0.5, p_d=0.5)


def test_config_literals_enforced():
    with pytest.raises(ValueError):
        make_config(variant="bell")
    with pytest.raises(ValueError):
        make_config(direction="three_way")
    with pytest.raises(ValueError):
        make_config(T=0)
    with pytest.raises(ValueError):
        make_config(seed=-1)


def test_config_hash_is_stable_and_sensitive():
    a, b = make_config(), make_config()
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != make_config(seed=999).config_hash()


# ---------------------------------------------------------------- run basics

def test_all_rounds_discarded_when_pd_one():
    cfg = make_config(p_c=0.0, p_e=0.0, p_d=1.0, T=200)
    tr = protocol.run(cfg, adversary.identity_attack())
    assert tr.N_c == 0 and tr.N_e == 0 and tr.N_d == 200
    with pytest.raises(protocol.InsufficientRoundsError):
        protocol.check_fidelity(tr)
    with pytest.raises(protocol.InsufficientRoundsError):
        protocol.estimate_phase(tr)


@pytest.mark.parametrize("variant", ["entanglement", "mub"])
def test_sift_keep_rates_match_multinomial(variant):
    # keep probability is 1/3 in both round types for both variants
    # (3 matching pairs of 9 and 2 of 6; axis match 1/3 and 2 x 1/6),
    # so N_c, N_e ~ Binomial(T, 1/6)
    cfg = make_config(variant=variant, T=30_000, seed=77)
    tr = protocol.run(cfg, adversary.identity_attack())
    expect = 30_000 / 6
    sigma = math.sqrt(30_000 * (1 / 6) * (5 / 6))
    assert abs(tr.N_c - expect) < 4 * sigma
    assert abs(tr.N_e - expect) < 4 * sigma
    assert tr.N_c + tr.N_e + tr.N_d + tr.N_sifted_away == cfg.T


def test_identity_attack_check_outcomes_are_perfect():
    tr = protocol.run(make_config(T=4000), adversary.identity_attack())
    chk = protocol.check_fidelity(tr)
    assert chk.fidelity_estimate == 1.0
    assert chk.passed
    assert chk.epsilon_implied == 0.0


def test_identity_attack_mub_check_outcomes_are_plus_one():
    cfg = make_config(variant="mub", T=6000)
    tr = protocol.run(cfg, adversary.identity_attack())
    chk = protocol.check_fidelity(tr)
    assert set(chk.fidelity_estimate) == set(qcore.SIGNED_LABELS)
    assert all(v == 1.0 for v in chk.fidelity_estimate.values())


@pytest.mark.parametrize("variant", ["entanglement", "mub"])
def test_identity_attack_phase_estimate_consistent(variant):
    cfg = make_config(variant=variant, T=40_000, true_phi=0.4, seed=31)
    tr = protocol.run(cfg, adversary.identity_attack())
    est = protocol.estimate_phase(tr)
    assert abs(est.phi_hat - 0.4) <= 3 * est.standard_error
    assert 0.0 <= est.phi_hat <= math.pi / 2


@pytest.mark.parametrize("n,phi", [(2, 0.2), (3, 0.12), (4, 0.08)])
def test_identity_attack_phase_estimate_consistent_larger_registers(n, phi):
    cfg = make_config(n=n, T=40_000, true_phi=phi, seed=33 + n)
    tr = protocol.run(cfg, adversary.identity_attack())
    chk = protocol.check_fidelity(tr)
    assert chk.fidelity_estimate == 1.0
    assert tr.N_leak == 0  # the ideal probe never leaves the logical span
    est = protocol.estimate_phase(tr)
    assert abs(est.phi_hat - phi) <= 3 * est.standard_error
    assert est.phi_hat <= math.pi / (2 * n)


def test_run_is_deterministic_per_seed():
    cfg = make_config(T=2000, seed=555)
    t1 = protocol.run(cfg, adversary.identity_attack())
    t2 = protocol.run(cfg, adversary.identity_attack())
    assert t1.serialized() == t2.serialized()


def test_two_way_identity_reproduces_one_way():
    kw = dict(T=5000, p_c=0.4, p_e=0.4, p_d=0.2, seed=5)
    t1 = protocol.run(make_config(direction="one_way", **kw), adversary.identity_attack())
    t2 = protocol.run(make_config(direction="two_way", **kw), adversary.identity_attack())
    r1, r2 = t1.rounds, t2.rounds
    assert r1 == r2
    assert t1.config.direction != t2.config.direction


def test_leak_outcomes_appear_for_n2_depolarizing():
    cfg = make_config(n=2, T=20_000, seed=9)
    tr = protocol.run(cfg, adversary.depolarizing_attack(0.4))
    assert tr.N_leak > 0
    assert 0 < tr.leak_rate < 1
    chk = protocol.check_fidelity(tr)  # still computable after exclusion
    assert chk.fidelity_estimate < 1.0


def test_leak_rate_zero_for_n1():
    tr = protocol.run(make_config(T=3000), adversary.depolarizing_attack(0.4))
    assert tr.N_leak == 0


# ---------------------------------------------------------------- check arithmetic

def test_check_fidelity_all_correlators_one():
    tr = synthetic_transcript({"XZ": [1] * 10, "ZX": [1] * 10, "YY": [1] * 10})
    assert protocol.check_fidelity(tr).fidelity_estimate == 1.0


def test_check_fidelity_all_correlators_zero():
    tr = synthetic_transcript({"XZ": [1, -1] * 5, "ZX": [1, -1] * 5, "YY": [1, -1] * 5})
    assert protocol.check_fidelity(tr).fidelity_estimate == 0.25


def test_check_fidelity_headline_operating_point():
    # per-pair mean 0.916 makes the estimate 0.937 and the implied
    # threshold sqrt(1 - 0.937) = 0.2510
    block = [1] * 958 + [-1] * 42
    tr = synthetic_transcript({"XZ": block, "ZX": block, "YY": block})
    chk = protocol.check_fidelity(tr)
    assert chk.fidelity_estimate == pytest.approx(0.937, abs=1e-12)
    assert chk.epsilon_implied == pytest.approx(0.25099800796022265, abs=5e-4)
    assert chk.passed  # threshold 0.251 -> 1 - eps^2 = 0.936999...


def test_check_fidelity_missing_correlator_raises():
    tr = synthetic_transcript({"XZ": [1] * 4, "ZX": [1] * 4})
    with pytest.raises(protocol.InsufficientRoundsError):
        protocol.check_fidelity(tr)


# ---------------------------------------------------------------- estimation arithmetic

def test_estimate_phase_mean_one_gives_zero():
    tr = synthetic_transcript(
        {"XZ": [1], "ZX": [1], "YY": [1]},
        {"XZ": [1] * 20, "ZX": [1] * 20})
    assert protocol.estimate_phase(tr).phi_hat == 0.0


def test_estimate_phase_mean_zero_gives_quarter_pi():
    tr = synthetic_transcript(
        {"XZ": [1], "ZX": [1], "YY": [1]},
        {"XZ": [1, -1] * 10, "ZX": [1, -1] * 10})
    assert protocol.estimate_phase(tr).phi_hat == pytest.approx(math.pi / 4)


def test_estimate_phase_missing_correlator_raises():
    tr = synthetic_transcript(
        {"XZ": [1], "ZX": [1], "YY": [1]},
        {"XZ": [1] * 5})
    with pytest.raises(protocol.InsufficientRoundsError):
        protocol.estimate_phase(tr)


def test_estimate_phase_pooling_weights_by_counts():
    tr = synthetic_transcript(
        {"XZ": [1], "ZX": [1], "YY": [1]},
        {"XZ": [1] * 30, "ZX": [1] * 5 + [-1] * 5})
    est = protocol.estimate_phase(tr)
    pooled = (30 + 0) / 40
    assert est.phi_hat == pytest.approx(math.acos(pooled) / 2)
    assert est.correlator_means["XZ"] == 1.0
    assert est.correlator_means["ZX"] == 0.0


def test_estimate_phase_rejects_mismatched_n():
    tr = protocol.run(make_config(T=2000), adversary.identity_attack())
    with pytest.raises(ValueError):
        protocol.estimate_phase(tr, n=3)


# ---------------------------------------------------------------- serialization

def test_serialization_disclosure_order_and_roundtrip():
    cfg = make_config(T=2000, p_c=0.4, p_e=0.4, p_d=0.2, seed=21)
    tr = protocol.run(cfg, adversary.identity_attack())
    text = tr.serialized()
    header, rows = protocol.parse_transcript(text)
    assert header["config_hash"] == tr.config_hash()
    assert int(header["seed"]) == cfg.seed
    assert len(rows) == cfg.T
    statuses = [r["status"] for r in rows]
    first_est = statuses.index("kept_estimation")
    assert "kept_check" not in statuses[first_est:]
    # indices cover every round exactly once
    assert sorted(int(r["index"]) for r in rows) == list(range(cfg.T))


def test_serialized_counts_match_transcript():
    cfg = make_config(T=1500, seed=2)
    tr = protocol.run(cfg, adversary.identity_attack())
    _, rows = protocol.parse_transcript(tr.serialized())
    kept_check = sum(r["status"] == "kept_check" for r in rows)
    kept_est = sum(r["status"] == "kept_estimation" for r in rows)
    assert kept_check == tr.N_c
    assert kept_est == tr.N_e


@pytest.mark.parametrize("variant", ["entanglement", "mub"])
def test_serialization_field_level_roundtrip(variant):
    # every RoundRecord field survives the text format, including leak
    # outcomes (n = 2 under depolarizing noise) and unmeasured rounds
    cfg = make_config(variant=variant, n=2, T=2000, p_c=0.4, p_e=0.4,
                      p_d=0.2, seed=47)
    tr = protocol.run(cfg, adversary.depolarizing_attack(0.5))
    assert tr.N_leak > 0
    _, rows = protocol.parse_transcript(tr.serialized())
    by_index = {int(r["index"]): r for r in rows}
    for rec in tr.rounds:
        row = by_index[rec.index]
        assert row["action"] == rec.bob_action
        assert row["status"] == rec.sift_status
        assert row["alice_obs"] == (rec.alice_observable or "NA")
        assert row["probe"] == (rec.alice_probe_label or "NA")
        assert row["bob_obs"] == (rec.bob_observable or "NA")
        expected_out = "NA" if rec.bob_outcome is None else str(rec.bob_outcome)
        assert row["bob_out"] == expected_out


# ---------------------------------------------------------------- equivalence

def test_equivalence_identity_attack():
    cfg = make_config(T=20_000, seed=6)
    rep = protocol.run_mub_equivalence(cfg, adversary.identity_attack())
    assert rep.entanglement_fidelity == 1.0
    assert all(v == 1.0 for v in rep.mub_fidelities.values())
    assert rep.combined_from_mub == 1.0
    assert rep.identity_holds
    assert rep.entanglement_passed and rep.mub_passed


def test_equivalence_depolarizing_within_monte_carlo_error():
    cfg = make_config(T=60_000, seed=8)
    rep = protocol.run_mub_equivalence(cfg, adversary.depolarizing_attack(0.2))
    assert rep.identity_holds
    assert abs(rep.entanglement_fidelity - rep.combined_from_mub) <= 4 * rep.identity_sigma + 1e-12


# ---------------------------------------------------------------- attack gating

def test_two_way_attack_rejected_in_one_way_mode():
    with pytest.raises(ValueError):
        protocol.run(make_config(direction="one_way"), adversary.two_way_swap_leak())


class _BackwardDepolarizing(adversary.AttackModel):
    """Return-leg-only noise, for exercising the backward instrument path."""

    name = "backward_depolarizing"

    def __init__(self, p):
        self.p = p

    def forward_branches(self, n, frame):
        return [("id", 1.0, [np.eye(2 ** n, dtype=complex)])]

    def backward_branches(self, n, frame):
        channel = qcore.depolarizing_channel(self.p, n)
        return [("depol", 1.0, list(channel.kraus_operators))]


@pytest.mark.parametrize("variant", ["entanglement", "mub"])
def test_two_way_backward_channel_statistics(variant):
    # return-leg depolarizing damps every check correlator by (1 - p):
    # the estimate lands at 1 - 3p/4 (entanglement) or 1 - p/2 per label
    p = 0.3
    cfg = make_config(variant=variant, direction="two_way", T=30_000,
                      p_c=0.5, p_e=0.4, p_d=0.1, seed=41)
    tr = protocol.run(cfg, _BackwardDepolarizing(p))
    chk = protocol.check_fidelity(tr)
    if variant == "entanglement":
        sigma = math.sqrt(sum((1 - c ** 2) / chk.sample_counts[k]
                              for k, c in chk.correlator_means.items()) / 16)
        assert abs(chk.fidelity_estimate - (1 - 3 * p / 4)) < 4 * sigma
    else:
        for label, value in chk.fidelity_estimate.items():
            count = chk.sample_counts[label]
            mean = 1 - p
            sigma = math.sqrt((1 - mean ** 2) / count) / 2
            assert abs(value - (1 - p / 2)) < 4 * sigma + 1e-9
