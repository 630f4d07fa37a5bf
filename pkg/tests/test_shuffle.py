import dataclasses
import math
from collections import Counter
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cached_plan, worked_example
from wirelessmr.channel import draw_channel
from wirelessmr.model import SystemConfig
from wirelessmr.shuffle import (
    BlockPlan,
    Kind,
    PlanError,
    Scheme,
    check_plan,
    plan_coverage,
    prepare_system,
    reassemble,
    simulate_block,
    split_ivs,
    verify_delivery,
)

GOLDEN = Path(__file__).parent / "golden" / "example_sp_plan.jsonl"


def _random_config(draw, Ks=(2, 3, 4, 5, 6)):
    K = draw(st.sampled_from(Ks))
    r = draw(st.integers(1, K))
    eta = draw(st.integers(1, 2))
    alpha = draw(st.sampled_from([Fraction(0), Fraction(1, 3), Fraction(1, 2), Fraction(1)]))
    return SystemConfig.build(K, Fraction(r, K), K, eta=eta, alpha=alpha, F=60)


# -- layouts ------------------------------------------------------------------


def test_example_sp_layout():
    layout = split_ivs(Scheme.SP, worked_example())
    assert layout.describe() == "2x0.1F + 4x0.2F"
    assert [p.bits for p in layout.parts] == [24, 24, 48, 48, 48, 48]
    assert [p.kind for p in layout.parts] == [Kind.COMMON] * 2 + [Kind.PRIVATE] * 4


def test_cm_and_zf_layouts():
    cfg = worked_example()
    assert split_ivs(Scheme.CM, cfg).describe() == "2x0.5F"
    assert split_ivs(Scheme.ZF, cfg).describe() == "4x0.25F"


@given(
    K=st.integers(2, 8),
    data=st.data(),
    F=st.integers(1, 400),
    num=st.integers(0, 30),
    scheme=st.sampled_from(list(Scheme)),
)
@settings(max_examples=100, deadline=None)
def test_parts_tile_the_iv(K, data, F, num, scheme):
    r = data.draw(st.integers(1, K))
    cfg = SystemConfig.build(K, Fraction(r, K), K, F=F, alpha=Fraction(num, 30))
    layout = split_ivs(scheme, cfg)
    assert sum(p.bits for p in layout.parts) == F
    assert sum(p.length for p in layout.parts) == F
    pos = 0
    for p in layout.parts:
        assert p.start == pos and abs(p.length - p.bits) < 1
        pos += p.length


def test_sp_layout_degenerates():
    assert split_ivs(Scheme.SP, worked_example(alpha=0)).describe() == "2x0.5F"
    assert split_ivs(Scheme.SP, worked_example(alpha=1)).describe() == "4x0.25F"


# -- plans --------------------------------------------------------------------


def test_example_sp_plan_shape(example_cfg):
    plan = prepare_system(example_cfg, "sp").plan
    assert len(plan) == 12
    first = plan.blocks[0]
    assert first.common.tx == 1 and first.common.receivers == (2, 3)
    assert {first.private.cluster_a, first.private.cluster_b} == {(1, 2), (3, 4)}
    assert len(first.private.streams) == 4
    for block in plan.blocks:
        assert len(block.common.components) == 2 and len(block.private.streams) == 4
        assert block.common.tx in block.active_nodes()


def test_example_zf_plan(example_cfg):
    plan = prepare_system(example_cfg, "zf").plan
    assert len(plan) == 12
    pairs = {frozenset((b.private.cluster_a, b.private.cluster_b)) for b in plan.blocks}
    assert frozenset(((1, 2), (3, 4))) in pairs
    assert all(len(b.private.streams) == 4 for b in plan.blocks)


def test_single_node_clusters():
    cfg = SystemConfig.build(2, Fraction(1, 2), 2, F=60)
    plan = cached_plan(cfg, "zf")
    assert len(plan) == 2
    for block in plan.blocks:
        assert len(block.private.cluster_a) == 1
        assert {rx for rx, _ in block.private.streams} == {1, 2}


@given(st.data())
@settings(max_examples=100, deadline=None)
def test_plan_coverage_exact(data):
    cfg = _random_config(data.draw, Ks=(2, 3, 4, 6))
    for scheme in Scheme:
        system = prepare_system(cfg, scheme, cached_plan(cfg, scheme.value))
        missing, dup, extra = plan_coverage(system.plan, system.required)
        assert not missing and not dup and not extra


@pytest.mark.parametrize("K", [2, 3, 4, 5, 6])
def test_sp_block_count(K):
    for r in range(1, K):
        cfg = SystemConfig.build(K, Fraction(r, K), K, alpha=Fraction(1, 2), F=60)
        plan = cached_plan(cfg, "sp")
        target = cfg.N * cfg.Q * (1 - cfg.mu)
        if plan.metadata["odd_k"]:
            # one node idles, so each block carries K - 1 private parts instead of K
            private = cfg.N * cfg.Q * (1 - cfg.mu) * K
            assert len(plan) == math.ceil(private / (K - 1))
        else:
            assert len(plan) == target


def test_alpha_zero_sp_matches_cm():
    cfg = worked_example(alpha=0)
    sp, cm = cached_plan(cfg, "sp"), cached_plan(cfg, "cm")
    assert all(b.private is None for b in sp.blocks)
    assert [b.common for b in sp.blocks] == [b.common for b in cm.blocks]


def test_alpha_one_sp_is_pure_zf():
    cfg = worked_example(alpha=1)
    sp = cached_plan(cfg, "sp")
    assert all(b.common is None for b in sp.blocks)
    assert len(sp) == len(cached_plan(cfg, "zf"))


def test_full_storage_plans_are_empty():
    cfg = SystemConfig.build(3, 1, 3)
    for scheme in Scheme:
        result = prepare_system(cfg, scheme).shuffle(oracle=True)
        assert len(result.per_block) == 0 and result.success


def test_check_plan_catches_bad_cluster():
    cfg = worked_example()
    system = prepare_system(cfg, "zf")
    block = next(b for b in system.plan.blocks if b.private.cluster_a == (1, 2))
    x = block.private
    # file 3 lives on nodes 1 and 4, so cluster (1, 2) cannot precode it for node 3
    stray = system.plan.layout.sub_iv(3, 3, 1)
    streams = tuple((rx, stray if rx == 3 else sid) for rx, sid in x.streams)
    bad_block = dataclasses.replace(block, private=dataclasses.replace(x, streams=streams))
    bad = dataclasses.replace(system.plan, blocks=(bad_block,))
    with pytest.raises(PlanError, match="cannot compute"):
        check_plan(bad, system.placement, system.assignment)


def test_check_plan_catches_uncancellable_xor():
    cfg = worked_example()
    system = prepare_system(cfg, "cm")
    block = system.plan.blocks[0]
    c = block.common
    wrong = dataclasses.replace(c, receivers=(c.receivers[0], 4))
    bad = dataclasses.replace(system.plan, blocks=(dataclasses.replace(block, common=wrong),))
    with pytest.raises(PlanError):
        check_plan(bad, system.placement, system.assignment)


def test_plan_text_round_trip_and_golden(example_cfg):
    plan = prepare_system(example_cfg, "sp").plan
    text = plan.to_text()
    assert BlockPlan.from_text(text) == plan
    assert text == GOLDEN.read_text()


# -- execution ----------------------------------------------------------------


@pytest.mark.parametrize("scheme", list(Scheme))
def test_oracle_example_load(example_cfg, scheme):
    system = prepare_system(example_cfg, scheme)
    result = system.shuffle(oracle=True)
    assert result.success
    delta = result.total_duration * math.log2(example_cfg.P) / (6 * 4 * 240)
    expected = {Scheme.CM: 0.25, Scheme.ZF: 0.1875, Scheme.SP: 0.15}[scheme]
    assert delta == pytest.approx(expected, rel=1e-12)


def test_sp_block_duration_tends_to_example_value(example_cfg):
    # median block time * log2(P) / F should approach 3/10 as P grows
    system = prepare_system(example_cfg, "sp")
    block = system.plan.blocks[0]
    rng = np.random.default_rng(11)
    scaled = {}
    for P in (1e6, 1e12):
        cfg = example_cfg.with_(P=P)
        times = []
        for _ in range(300):
            out = simulate_block(block, system.plan.layout, draw_channel(cfg, rng), system.stores, cfg)
            times.append(out.duration * math.log2(P) / 240)
        scaled[P] = np.median(times)
    assert abs(scaled[1e12] - 0.3) < abs(scaled[1e6] - 0.3)
    assert scaled[1e12] == pytest.approx(0.3, rel=0.35)


def test_block_power_budget(example_cfg):
    system = prepare_system(example_cfg, "sp")
    rng = np.random.default_rng(12)
    for block in system.plan.blocks:
        out = simulate_block(block, system.plan.layout, draw_channel(example_cfg, rng), system.stores, example_cfg)
        for node, power in out.tx_power.items():
            assert power <= example_cfg.P * (1 + 1e-9)
        # single-scalar ZF scaling: the busiest member of each cluster sits at P^alpha
        p_priv = example_cfg.P ** float(example_cfg.alpha)
        x = block.private
        for cluster in (x.cluster_a, x.cluster_b):
            private = [out.tx_power[k] - (example_cfg.P - p_priv) * (k == block.common.tx) for k in cluster]
            assert max(private) == pytest.approx(p_priv, rel=1e-9)
        assert out.tx_power[block.common.tx] >= example_cfg.P - p_priv


def test_finite_snr_delivery_is_exact(example_cfg):
    system = prepare_system(example_cfg, "sp")
    result = system.shuffle(np.random.default_rng([0, 0]))
    assert result.success and result.report.ok
    assert all(o.feasible for o in result.per_block)


def _oracle_result(cfg, scheme="sp"):
    system = prepare_system(cfg, scheme)
    return system, system.shuffle(oracle=True)


def test_verify_flags_corruption(example_cfg):
    system, result = _oracle_result(example_cfg)
    sid, payload = result.delivered[2][0]
    result.delivered[2][0] = (sid, bytes([payload[0] ^ 1]) + payload[1:])
    report = verify_delivery(result, system.required, system.plan.layout, system.reference)
    assert report.corrupted == [(2, sid)] and not report.ok
    assert any("node 2" in line and str(sid) in line for line in report.lines())


def test_verify_flags_duplicate_and_missing(example_cfg):
    system, result = _oracle_result(example_cfg)
    dropped = result.delivered[3].pop()
    result.delivered[1].append(result.delivered[1][0])
    report = verify_delivery(result, system.required, system.plan.layout, system.reference)
    assert report.missing == [(3, dropped[0])]
    assert report.duplicates == [(1, result.delivered[1][0][0])]
    assert not report.corrupted


def test_verify_clean_result(example_cfg):
    system, result = _oracle_result(example_cfg)
    report = verify_delivery(result, system.required, system.plan.layout, system.reference)
    assert report.ok and report.lines() == []


def test_reassemble_restores_ivs(example_cfg):
    system, result = _oracle_result(example_cfg)
    for node in range(1, 5):
        got = reassemble(result.delivered[node], system.plan.layout)
        assert set(got) == set(system.required[node])
        assert all(got[key] == system.reference[key] for key in got)


def test_every_part_sent_once():
    cfg = SystemConfig.build(5, Fraction(2, 5), 5, F=60)
    plan = cached_plan(cfg, "sp")
    counts = Counter(item for block in plan.blocks for item in block.deliveries())
    assert set(counts.values()) == {1}
