import itertools
import time
from dataclasses import replace

import pytest

from sharepass.group import TOY_PARAMS, TOY_TRAPDOOR, generate_params, generate_params_with_trapdoor, seeded_rng
from sharepass.pedersen import commit_scalar, deal_committed, hiding_witness, verify_share
from sharepass.protocol import shareholder_name
from sharepass.shamir import (
    SecretPolynomial,
    SharePoint,
    lagrange_weights,
    reconstruct_at_zero,
    reconstruct_linear_system,
    split,
)
from sharepass.simnet.faults import FaultPlan, NodeBehavior
from sharepass.simnet.scenario import assert_information_leakage, fault_tolerance_sweep, run_scenario
from sharepass.simnet.timing import timing_matrix

from scenarios import CODE_SCENARIOS, LOGIN, SEVERITY, SIGNUP

GROUPS = [(2, 3), (3, 5), (5, 7), (10, 10)]


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def report(number, ok, limit, detail=""):
        elapsed = time.perf_counter() - start
        within = elapsed < limit
        status = "PASS" if ok and within else "FAIL"
        with capsys.disabled():
            print(f"\n{status} criterion {number}: {detail} ({elapsed:.2f}s, limit {limit}s)")
        assert ok, detail
        assert within, f"took {elapsed:.1f}s, limit {limit}s"

    return report


@pytest.fixture(scope="module")
def p166():
    return generate_params(166, seed=1)


def test_1_worked_example(verdict):
    poly = SecretPolynomial((13, 10, 2), 17)
    shares = [poly(x) for x in (1, 3, 5)]
    weights = lagrange_weights([1, 3, 5], 17)
    secret = reconstruct_at_zero([SharePoint(x, y) for x, y in zip((1, 3, 5), shares)], 3, 17)
    ok = shares == [8, 10, 11] and [weights[x] for x in (1, 3, 5)] == [4, 3, 11] and secret == 13
    verdict(1, ok, 1, f"shares {shares}, weights {weights}, secret {secret}")


def test_2_reconstruction_equivalence(verdict):
    rng = seeded_rng("criterion-2")
    fields = [17, 7919, 2**127 - 1]
    mismatches = 0
    for i in range(500):
        m = fields[i % 3]
        t = rng.randint(1, 6)
        n = rng.randint(t, 10)
        poly, shares = split(rng.randrange(m), t, n, m, rng)
        subset = rng.sample(shares, t)
        a = reconstruct_at_zero(subset, t, m)
        b = reconstruct_linear_system(subset, m).secret
        mismatches += a != b or a != poly.secret
    verdict(2, mismatches == 0, 30, f"500 instances over {len(fields)} fields, {mismatches} mismatches")


def test_3_privacy_by_exhaustive_count(verdict):
    m = 17
    poly = SecretPolynomial((13, 10, 2), m)
    failures = 0
    for pair in itertools.combinations(range(1, m), 2):
        seen = [(x, poly(x)) for x in pair]
        counts = [0] * m
        # a degree-2 polynomial is fixed by its value at 0 plus two other points
        for secret in range(m):
            for a1, a2 in itertools.product(range(m), repeat=2):
                if all((secret + a1 * x + a2 * x * x) % m == y for x, y in seen):
                    counts[secret] += 1
        failures += counts != [1] * m
    verdict(3, failures == 0, 5, f"{m * (m - 1) // 2 - failures} of {m * (m - 1) // 2} share pairs uniform")


def test_4_pedersen(verdict):
    params, _ = generate_params_with_trapdoor(192, 136, seed=11)
    rng = seeded_rng("criterion-4")
    honest_ok = tamper_caught = tampers = 0
    for i in range(300):
        t = rng.randint(1, 6) if i % 10 else rng.randint(2, 6)
        n = rng.randint(t, 10)
        dealing = deal_committed(rng.randrange(params.q), t, n, params, rng)
        honest_ok += all(verify_share(sh, dealing.commitments, params) for sh in dealing.shares)
        # with t = 1 every abscissa carries the same value, so x is only bound from t = 2
        if i % 10 == 0:
            for sh, field in itertools.product(dealing.shares, ("x", "s", "t_val")):
                bad = replace(sh, **{field: (getattr(sh, field) + rng.randrange(1, params.q)) % params.q or 1})
                tampers += 1
                tamper_caught += not verify_share(bad, dealing.commitments, params)
    q = TOY_PARAMS.q
    witness_ok = all(
        commit_scalar(s2, hiding_witness(s, tv, s2, TOY_TRAPDOOR, TOY_PARAMS), TOY_PARAMS)
        == commit_scalar(s, tv, TOY_PARAMS)
        for s, tv, s2 in itertools.product(range(q), repeat=3)
    )
    ok = honest_ok == 300 and tamper_caught == tampers > 0 and witness_ok
    verdict(4, ok, 60, f"{honest_ok}/300 honest verify, {tamper_caught}/{tampers} tampers caught "
                       f"(q {params.q.bit_length()} bits), witness exhaustive on q=11: {witness_ok}")


def test_5_end_to_end(verdict, p166):
    replay = {"action": "replay_login", "user": "alice", "expect": "COD800"}
    script = [SIGNUP, LOGIN, replay, LOGIN, replay, LOGIN, replay]
    results = {}
    for t, n in GROUPS:
        res = run_scenario(FaultPlan(seed=f"e2e-{t}-{n}"), t, n, p166, script)
        results[(t, n)] = (res.outcome, len(res.tokens()),
                           [a.code for a in res.actions if a.action == "replay_login"])
    ok = all(o == "success" and k == 3 and codes == ["COD800"] * 3 for o, k, codes in results.values())
    verdict(5, ok, 120, f"166-bit p, {results}")


def test_6_error_codes(verdict, p166):
    required = ["COD100", "COD150", "COD170", "COD400", "COD600", "COD700", "COD750", "COD800",
                "COD830", "COD850", "COD860", "COD2000", "COD2400", "COD2600"]
    bad = []
    for code in sorted(CODE_SCENARIOS, key=lambda c: int(c[3:])):
        plan, script, _ = CODE_SCENARIOS[code]
        res = run_scenario(plan, 3, 5, p166, script)
        if res.outcome != "success" or not res.codes[code] or res.severity_of(code) != {SEVERITY[code]}:
            bad.append((code, res.outcome, dict(res.codes)))
    ok = not bad and set(required) <= set(CODE_SCENARIOS)
    verdict(6, ok, 120, f"{len(CODE_SCENARIOS)} codes covered with their severity, problems: {bad}")


def test_7_fault_tolerance(verdict, p166):
    wrong = []
    for t, n in GROUPS:
        for row in fault_tolerance_sweep(t, n, p166, seed="criterion-7"):
            if (row.outcome == "success") != (row.down <= n - t):
                wrong.append((t, n, row.down, row.outcome))
    verdict(7, not wrong, 60, f"success iff k <= n-t over {GROUPS}, violations: {wrong}")


def test_8_leakage(verdict, p166):
    holders = [shareholder_name(i) for i in range(1, 6)]
    plans = {
        "passive dealer": ["dealer"],
        "passive service": ["service"],
        "passive shareholders": holders,
    }
    outcomes = {}
    for label, observers in plans.items():
        plan = FaultPlan({o: NodeBehavior("passive") for o in observers}, seed=label)
        res = run_scenario(plan, 3, 5, p166, [SIGNUP, LOGIN, LOGIN])
        rep = assert_information_leakage(res)
        outcomes[label] = (res.succeeded, rep.passed, len(rep.hits), rep.replica_uniform)
    # sub-threshold coalition: two shareholders holding their abscissae
    two = FaultPlan({o: NodeBehavior("passive") for o in holders[:2]}, seed="two")
    rep = assert_information_leakage(run_scenario(two, 3, 5, p166, [SIGNUP, LOGIN]))
    outcomes["two shareholders"] = (True, rep.passed, len(rep.hits), rep.replica_uniform)
    ok = all(s and p and h == 0 and u for s, p, h, u in outcomes.values())
    verdict(8, ok, 60, f"(ran, passed, hits, replica uniform): {outcomes}")


def test_9_performance_relations(verdict):
    levels = [1, 10, 25, 50]
    params = {bits: generate_params(bits, seed=1) for bits in (166, 830)}
    setups = [(t, n, params[bits]) for bits, (t, n) in itertools.product((166, 830), GROUPS)]
    mean = {}
    for row in timing_matrix(setups, levels, min_samples={"sharing": 300, "reconstruction": 60}, seed=0):
        mean[(row.p_bits, row.t, row.n, row.phase, row.concurrency)] = row.mean_latency
    broken = []
    for bits, (t, n), c in itertools.product((166, 830), GROUPS, levels):
        if not mean[(bits, t, n, "reconstruction", c)] > mean[(bits, t, n, "sharing", c)]:
            broken.append(("reconstruction<=sharing", bits, t, n, c))
    for phase, (t, n), c in itertools.product(("sharing", "reconstruction"), GROUPS, levels):
        if mean[(830, t, n, phase, c)] < mean[(166, t, n, phase, c)]:
            broken.append(("p_bits", phase, t, n, c))
    for bits, phase, c in itertools.product((166, 830), ("sharing", "reconstruction"), levels):
        seq = [mean[(bits, t, n, phase, c)] for t, n in GROUPS]
        if any(a > b for a, b in zip(seq, seq[1:])):
            broken.append(("groups", bits, phase, c, [round(v * 1000, 2) for v in seq]))
    table = "; ".join(
        f"{bits}b {t},{n} {phase[:5]}: " + " ".join(f"{mean[(bits, t, n, phase, c)] * 1000:.1f}" for c in levels)
        for bits, (t, n), phase in itertools.product((166, 830), GROUPS, ("sharing", "reconstruction")))
    verdict(9, not broken, 600, f"{len(mean)} means (ms) over levels {levels}, violations: {broken}\n  {table}")
