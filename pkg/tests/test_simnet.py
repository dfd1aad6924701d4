import csv
import itertools
import io
import json

import pytest

from sharepass.group import seeded_rng
from sharepass.protocol import shareholder_name
from sharepass.shamir import SecretPolynomial, eval_polynomial, sample_polynomial
from sharepass.simnet import cli
from sharepass.simnet.faults import STRATEGY_ROLE, FaultPlan, NodeBehavior, PlanError
from sharepass.simnet.network import ScenarioHang, SimNetwork
from sharepass.simnet.scenario import (
    Deployment,
    assert_information_leakage,
    fault_tolerance_sweep,
    replica_candidate_counts,
    replica_secrets_without_abscissae,
    run_scenario,
)
from sharepass.simnet.timing import timing_matrix, timing_profile

from scenarios import CODE_SCENARIOS, LOGIN, PW, SEVERITY, SIGNUP, byz, plan


def test_honest_run(small_params):
    res = run_scenario(None, 3, 5, small_params, [SIGNUP, LOGIN, LOGIN, LOGIN])
    assert res.succeeded and not res.errors
    assert len(res.tokens()) == 3
    assert res.virtual_time > 0


def test_runs_are_deterministic(small_params):
    p = plan("same", shareholder_2=byz("tamper-share"))
    a = run_scenario(p, 3, 5, small_params, [SIGNUP, LOGIN])
    b = run_scenario(p, 3, 5, small_params, [SIGNUP, LOGIN])
    assert a.trace_digest == b.trace_digest
    assert a.store_digests == b.store_digests
    c = run_scenario(plan("other", shareholder_2=byz("tamper-share")), 3, 5, small_params, [SIGNUP, LOGIN])
    assert c.trace_digest != a.trace_digest


@pytest.mark.parametrize("code", sorted(CODE_SCENARIOS))
def test_each_code_has_a_scenario(small_params, code):
    p, script, login_ok = CODE_SCENARIOS[code]
    res = run_scenario(p, 3, 5, small_params, script)
    assert res.outcome == "success", res.report
    assert res.codes[code] >= 1
    assert res.severity_of(code) == {SEVERITY[code]}
    if login_ok is not None:
        assert bool(res.tokens()) is login_ok


@pytest.mark.parametrize("strategy", sorted(STRATEGY_ROLE))
def test_no_token_without_the_password(small_params, strategy):
    kind = STRATEGY_ROLE[strategy]
    name = {"shareholder": shareholder_name(2), "client": "client-eve"}.get(kind, kind)
    p = FaultPlan({name: byz(strategy, "reconstruction")}, seed=strategy)
    client = "client-eve" if kind == "client" else "client"
    res = run_scenario(p, 3, 5, small_params, [dict(SIGNUP, client=client), dict(LOGIN, client=client),
                                               dict(LOGIN, client=client)])
    assert not res.unauthorized_tokens()
    for a in res.tokens():
        assert p.knows_password(a.client)


def test_byzantine_dealer_cannot_guess_abscissae(small_params):
    p = plan(dealer=byz("looping-requests", "reconstruction", probes=6))
    res = run_scenario(p, 3, 5, small_params, [SIGNUP, dict(LOGIN, expect="COD800")])
    assert res.outcome == "success"
    assert res.codes["COD700"] >= 3 * 5
    assert "suspicious" in res.report and "cooling off" in res.report
    assert not res.tokens()


def test_lockout_expires_in_virtual_time(small_params):
    p = plan(dealer=byz("looping-requests", "reconstruction", probes=3))
    res = run_scenario(p, 3, 5, small_params, [
        SIGNUP, dict(LOGIN, expect="COD800"), {"action": "advance", "seconds": 120},
    ])
    assert res.outcome == "success"


def test_replayed_login_is_refused(small_params):
    res = run_scenario(None, 3, 5, small_params, [
        SIGNUP, LOGIN, {"action": "replay_login", "user": "alice", "expect": "COD800"},
        LOGIN,
    ])
    assert res.outcome == "success"
    assert len(res.tokens()) == 2


def test_fatal_errors_do_not_touch_shareholder_stores(small_params):
    honest = run_scenario(None, 3, 5, small_params, [SIGNUP])
    for code in ("COD860", "COD1000", "COD1500", "COD2000", "COD2400", "COD2600"):
        p, script, _ = CODE_SCENARIOS[code]
        res = run_scenario(p, 3, 5, small_params, script[:1])
        after = run_scenario(p, 3, 5, small_params, script)
        for i in range(1, 6):
            name = shareholder_name(i)
            assert after.store_digests[name] == res.store_digests[name], code
    assert honest.succeeded


def test_shareholders_down_during_sharing_abort_signup(small_params):
    p = FaultPlan({shareholder_name(1): NodeBehavior("down", phase="sharing")})
    res = run_scenario(p, 3, 5, small_params, [SIGNUP])
    assert res.outcome == "failure"
    assert all("user:alice" not in s for s in res.stores.values())


def test_sweep_matches_bound(small_params):
    rows = fault_tolerance_sweep(2, 4, small_params)
    assert [(r.down, r.outcome) for r in rows] == [
        (0, "success"), (1, "success"), (2, "success"), (3, "COD800"), (4, "COD800"),
    ]


def test_hang_is_reported(small_params):
    p = FaultPlan({f"shareholder-{i}": NodeBehavior("down", phase="reconstruction") for i in (1, 2)})
    res = run_scenario(p, 3, 5, small_params, [SIGNUP, LOGIN], budget=5.0)
    assert res.outcome == "hang"
    with pytest.raises(ScenarioHang):
        net = SimNetwork(budget=1.0)
        net._advance(2.0)


@pytest.mark.parametrize("doc", [
    {"nodes": {"dealer": {"kind": "evil"}}},
    {"nodes": {"dealer": {"kind": "byzantine", "strategy": "tamper-share"}}},
    {"nodes": {"dealer": {"kind": "byzantine", "strategy": "nope"}}},
    {"nodes": {"dealer": {"kind": "down", "phase": "sometimes"}}},
    {"nodes": {"dealer": {"kind": "down", "strategy": "forge-ems"}}},
])
def test_plan_validation(doc):
    with pytest.raises(PlanError):
        FaultPlan.from_dict(doc)


def test_plan_round_trip():
    p = plan("x", dealer=byz("forge-ems"), shareholder_1=NodeBehavior("passive"))
    back = FaultPlan.from_dict(json.loads(json.dumps(p.to_dict())))
    assert back == p
    assert back.passive_nodes() == ["shareholder-1"]


def test_down_nodes_cost_the_deadline(small_params):
    dep_plan = FaultPlan({"shareholder-1": NodeBehavior("down")})
    res = run_scenario(dep_plan, 2, 3, small_params, [SIGNUP])
    assert res.virtual_time >= Deployment(2, 3, small_params).net.deadline


def test_replica_counts():
    assert replica_candidate_counts(3, 2, 17) == {s: 1 for s in range(17)}
    assert replica_candidate_counts(4, 3, 7, seed=2) == {s: 1 for s in range(7)}
    assert replica_candidate_counts(3, 1, 7) == {s: 7 for s in range(7)}


def test_no_abscissae_replica_matches_brute_force():
    m, t, n = 7, 3, 4
    counts = replica_secrets_without_abscissae(t, n, m)
    rng = seeded_rng("replica-nx:0")
    poly = sample_polynomial(rng.randrange(m), t, m, rng)
    ys = [eval_polynomial(poly, x) for x in rng.sample(range(1, m), n)]
    possible = set()
    for coeffs in itertools.product(range(m), repeat=t):
        vals = {x: eval_polynomial(SecretPolynomial(coeffs, m), x) for x in range(1, m)}
        for xs in itertools.permutations(range(1, m), n):
            if all(vals[x] == y for x, y in zip(xs, ys)):
                possible.add(coeffs[0])
                break
    assert set(counts) == possible
    assert poly.secret in possible


@pytest.mark.parametrize("observers", [["dealer"], ["service"],
                                       [shareholder_name(i) for i in range(1, 6)],
                                       [shareholder_name(1), shareholder_name(2)]])
def test_passive_observers_learn_nothing(small_params, observers):
    p = FaultPlan({o: NodeBehavior("passive") for o in observers}, seed="leak")
    res = run_scenario(p, 3, 5, small_params, [SIGNUP, LOGIN, LOGIN])
    report = assert_information_leakage(res)
    assert report.passed, report.hits


def test_leakage_scan_finds_a_planted_password(small_params):
    res = run_scenario(FaultPlan({"dealer": NodeBehavior("passive")}), 3, 5, small_params, [SIGNUP])
    res.observations["dealer"].append(PW.encode())
    assert not assert_information_leakage(res).passed


def test_timing_profile_rows(small_params):
    rows = timing_profile(2, 3, small_params.p_bits, [1, 3], params=small_params, seed=1)
    assert [(r.phase, r.concurrency) for r in rows] == [
        ("sharing", 1), ("reconstruction", 1), ("sharing", 3), ("reconstruction", 3),
    ]
    assert all(r.mean_latency > 0 and r.samples == r.concurrency for r in rows)


def test_timing_matrix_rows_follow_setups(small_params):
    rows = timing_matrix([(2, 3, small_params), (3, 4, small_params)], [2], min_samples=4, seed=1)
    assert [(r.t, r.n, r.phase) for r in rows] == [
        (2, 3, "sharing"), (2, 3, "reconstruction"), (3, 4, "sharing"), (3, 4, "reconstruction"),
    ]
    assert all(r.samples == 4 for r in rows)
    with pytest.raises(ValueError):
        timing_matrix([(2, 3, small_params)], [0])


def test_timing_matrix_per_phase_sample_counts(small_params):
    rows = timing_matrix([(2, 3, small_params)], [1, 2], min_samples={"sharing": 5, "reconstruction": 2}, seed=1)
    assert {(r.phase, r.concurrency): r.samples for r in rows} == {
        ("sharing", 1): 5, ("reconstruction", 1): 2, ("sharing", 2): 6, ("reconstruction", 2): 2,
    }
    with pytest.raises(ValueError):
        timing_matrix([(2, 3, small_params)], [1], min_samples={"sharing": 5})


def _csv(capsys):
    return list(csv.reader(io.StringIO(capsys.readouterr().out)))


def test_harness_run(tmp_path, capsys):
    doc = {"t": 2, "n": 3, "p_bits": 166, "plan": {"seed": 1, "nodes": {
        "shareholder-1": {"kind": "byzantine", "strategy": "tamper-share"}}},
        "script": [SIGNUP, LOGIN]}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", str(path), "--report", "--strict"]) == 0
    out = capsys.readouterr()
    rows = list(csv.reader(io.StringIO(out.out)))
    assert rows[0][:3] == ["step", "action", "user"] and len(rows) == 3
    assert "COD830" in out.err


def test_harness_run_strict_failure(tmp_path, capsys):
    doc = {"t": 2, "n": 3, "p_bits": 166, "script": [SIGNUP, dict(LOGIN, password="nope")]}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", str(path), "--strict"]) == 1
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2


def test_harness_sweep(capsys):
    assert cli.main(["sweep", "--t", "2", "--n", "3", "--p-bits", "166"]) == 0
    rows = _csv(capsys)
    assert rows[0] == ["t", "n", "down", "outcome", "within_bound"]
    assert [(r[3] == "success", r[4] == "1") for r in rows[1:]] == [(True, True)] * 2 + [(False, False)] * 2


def test_harness_timing(capsys):
    assert cli.main(["timing", "--p-bits", "166", "--groups", "2,3", "--concurrency", "1", "2"]) == 0
    rows = _csv(capsys)
    assert rows[0][0] == "phase" and len(rows) == 5
