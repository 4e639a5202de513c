import itertools
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from langarm.actions import canonical_vocabulary
from langarm.control import (
    ControlConfig,
    GuidanceVerdict,
    PLANAR_FAMILIES,
    PrimitiveCache,
    ScoreVector,
    apply_guidance,
    llm_advisor_client,
    run_episode,
    score_primitives,
    scripted_advisor,
    select_action,
)
from langarm.encoders import init_params
from langarm.expert import make_correction_source
from langarm.world import get_task, init_world, render


@pytest.fixture(scope="module")
def scoring_setup():
    vocab = canonical_vocabulary()
    params = init_params(seed=0)
    cache = PrimitiveCache(vocab, params)
    task = get_task("point")
    state = init_world(task, 0)
    return vocab, params, cache, task, state


# --- scoring / single pass -----------------------------------------------------

def test_score_vector_covers_vocabulary(scoring_setup):
    vocab, params, cache, task, state = scoring_setup
    scores = score_primitives(render(state), task.instruction(), vocab, params, cache)
    assert len(scores) == 58
    assert np.all((scores.probabilities > 0) & (scores.probabilities < 1))


def test_cached_and_uncached_scores_identical(scoring_setup):
    vocab, params, cache, task, state = scoring_setup
    obs = render(state)
    warm = score_primitives(obs, task.instruction(), vocab, params, cache)
    cold = score_primitives(obs, task.instruction(), vocab, params, cache=None)
    assert np.allclose(warm.cosines, cold.cosines, atol=1e-9)


def test_two_encoder_invocations_per_step_with_warm_cache(scoring_setup):
    vocab, params, cache, task, state = scoring_setup
    obs = render(state)
    score_primitives(obs, task.instruction(), vocab, params, cache)
    before = cache.invocations
    for _ in range(5):
        score_primitives(obs, task.instruction(), vocab, params, cache)
    assert (cache.invocations - before) == 10


# --- selection -------------------------------------------------------------------

def fake_scores(probs):
    probs = np.asarray(probs, dtype=float)
    return ScoreVector(cosines=np.zeros_like(probs), probabilities=probs)


def test_select_takes_strict_max(vocab):
    probs = np.full(58, 0.2)
    probs[17] = 0.9
    assert select_action(fake_scores(probs), vocab).id == 17


def test_ties_break_to_lowest_id(vocab):
    probs = np.full(58, 0.2)
    probs[9] = 0.7
    probs[31] = 0.7
    assert select_action(fake_scores(probs), vocab).id == 9


def test_argmax_invariant_to_positive_rescaling(vocab):
    rng = np.random.default_rng(5)
    probs = rng.uniform(0.1, 0.9, size=58)
    a = select_action(fake_scores(probs), vocab)
    b = select_action(fake_scores(probs * 3.7), vocab)
    assert a.id == b.id


# --- guidance ---------------------------------------------------------------------

def test_alpha_zero_is_identity(vocab):
    probs = np.random.default_rng(0).uniform(0.1, 0.9, 58)
    verdict = GuidanceVerdict(appropriate=(4, 5), inappropriate=(0, 1),
                              step=3, alpha=0.0)
    adjusted = apply_guidance(fake_scores(probs), verdict)
    assert np.array_equal(adjusted.probabilities, probs)


def test_worked_arithmetic_example():
    probs = np.full(58, 0.5)
    probs[12] = 0.4
    verdict = GuidanceVerdict(appropriate=(12,), inappropriate=(), step=1, alpha=0.7)
    adjusted = apply_guidance(fake_scores(probs), verdict)
    assert adjusted.probabilities[12] == pytest.approx(0.68, abs=1e-12)


def test_late_step_influence_is_bounded():
    probs = np.full(58, 0.5)
    verdict = GuidanceVerdict(appropriate=(4,), inappropriate=(8,), step=10, alpha=0.7)
    adjusted = apply_guidance(fake_scores(probs), verdict)
    bound = 0.5 * 0.7 ** 10
    assert abs(adjusted.probabilities[4] - 0.5) <= bound + 1e-12
    assert abs(adjusted.probabilities[8] - 0.5) <= bound + 1e-12


def test_alpha_range_enforced():
    verdict = GuidanceVerdict(appropriate=(4,), inappropriate=(), step=1, alpha=1.0)
    with pytest.raises(ValueError):
        apply_guidance(fake_scores(np.full(58, 0.5)), verdict)


def test_verdict_lists_must_be_disjoint():
    with pytest.raises(ValueError):
        GuidanceVerdict(appropriate=(4,), inappropriate=(4,), step=1)


def test_verdict_ids_restricted_to_planar_families():
    with pytest.raises(ValueError):
        GuidanceVerdict(appropriate=(20,), inappropriate=(), step=1)


def test_empty_verdict_never_changes_argmax(vocab):
    rng = np.random.default_rng(1)
    for _ in range(20):
        probs = rng.uniform(0.01, 0.99, 58)
        verdict = GuidanceVerdict((), (), step=int(rng.integers(1, 9)))
        assert select_action(apply_guidance(fake_scores(probs), verdict), vocab).id \
            == select_action(fake_scores(probs), vocab).id


def test_guidance_flip_matches_exhaustive_enumeration(vocab):
    """On synthetic 3-candidate score vectors, guidance flips the argmax
    exactly when the boosted candidate overtakes the (possibly penalized)
    incumbent."""
    ids = (0, 4, 8)  # one per planar family: back, forward, right
    grid = np.linspace(0.05, 0.95, 7)
    alpha, t = 0.7, 2
    factor = alpha ** t
    for p0, p1, p2 in itertools.product(grid, repeat=3):
        probs = np.full(58, 0.001)
        probs[list(ids)] = (p0, p1, p2)
        verdict = GuidanceVerdict(appropriate=(4,), inappropriate=(8,),
                                  step=t, alpha=alpha)
        got = select_action(apply_guidance(fake_scores(probs), verdict), vocab).id
        adjusted = {0: p0, 4: p1 * (1 + factor), 8: p2 * (1 - factor)}
        want = min(adjusted, key=lambda k: (-adjusted[k], k))
        assert got == want


# --- scripted advisor ------------------------------------------------------------------

def test_advisor_points_at_target(point_task):
    state = init_world(point_task, 2)
    target = state.object(point_task.target)
    verdict = scripted_advisor(state, point_task, step=1)
    dx = target.position[0] - state.pose.x
    dy = target.position[1] - state.pose.y
    if abs(dx) >= abs(dy):
        family = "move arm forward" if dx > 0 else "move arm back"
    else:
        family = "move arm to the left" if dy > 0 else "move arm to the right"
    assert verdict.appropriate == PLANAR_FAMILIES[family]
    assert verdict.inappropriate
    assert not set(verdict.appropriate) & set(verdict.inappropriate)


def test_advisor_empty_at_target(point_task):
    from langarm.world import GripperPose, WorldState

    state = init_world(point_task, 2)
    target = state.object(point_task.target)
    atop = WorldState(pose=GripperPose(x=target.position[0], y=target.position[1],
                                       z=0.2),
                      objects=state.objects, step_count=0, rng_seed=2)
    verdict = scripted_advisor(atop, point_task, step=1)
    assert verdict.is_empty()


def test_advisor_empty_without_target(point_task):
    from dataclasses import replace

    state = init_world(point_task, 2)
    bogus = replace(point_task, target="phantom widget")
    verdict = scripted_advisor(state, bogus, step=1)
    assert verdict.is_empty()


# --- endpoint advisor ---------------------------------------------------------------------

class _StubHandler(BaseHTTPRequestHandler):
    reply = None

    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        body = json.dumps(self.reply).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_endpoint():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    yield f"http://127.0.0.1:{server.server_address[1]}", _StubHandler
    server.shutdown()
    server.server_close()


def test_endpoint_verdict_parsed(stub_endpoint, point_task):
    url, handler = stub_endpoint
    handler.reply = {"text": json.dumps({
        "Appropriate": ["move arm to the left"],
        "Inappropriate": ["move arm to the right"]})}
    obs = render(init_world(point_task, 0))
    verdict = llm_advisor_client(obs, point_task.instruction(), url, step=2)
    assert verdict.appropriate == PLANAR_FAMILIES["move arm to the left"]
    assert verdict.inappropriate == PLANAR_FAMILIES["move arm to the right"]


def test_endpoint_unknown_actions_ignored(stub_endpoint, point_task):
    url, handler = stub_endpoint
    handler.reply = {"text": str({"Appropriate": ["do a flip"],
                                  "Inappropriate": ["move arm back"]})}
    obs = render(init_world(point_task, 0))
    verdict = llm_advisor_client(obs, point_task.instruction(), url)
    assert verdict.appropriate == ()
    assert verdict.inappropriate == PLANAR_FAMILIES["move arm back"]


def test_endpoint_nonsense_means_no_guidance(stub_endpoint, point_task):
    url, handler = stub_endpoint
    handler.reply = {"text": "I would rather discuss poetry"}
    obs = render(init_world(point_task, 0))
    assert llm_advisor_client(obs, point_task.instruction(), url).is_empty()


def test_endpoint_unreachable_means_no_guidance(point_task):
    obs = render(init_world(point_task, 0))
    verdict = llm_advisor_client(obs, point_task.instruction(),
                                 "http://127.0.0.1:1/none", timeout=0.2)
    assert verdict.is_empty()


# --- closed loop ------------------------------------------------------------------------

def test_budget_zero_means_no_interventions(scoring_setup):
    vocab, params, cache, task, state = scoring_setup
    cfg = ControlConfig(max_steps=10, intervention_budget=0,
                        correction_source=make_correction_source())
    result = run_episode(params, state, task, vocab, cfg, cache=cache)
    assert result.interventions_used == 0


def test_interventions_respect_budget(scoring_setup):
    vocab, params, cache, task, state = scoring_setup
    cfg = ControlConfig(max_steps=20, intervention_budget=2,
                        correction_source=make_correction_source())
    result = run_episode(params, state, task, vocab, cfg, cache=cache)
    assert result.interventions_used <= 2


def test_same_seed_identical_traces(scoring_setup):
    vocab, params, cache, task, _ = scoring_setup
    a = run_episode(params, init_world(task, 5), task, vocab,
                    ControlConfig(max_steps=8), cache=cache)
    b = run_episode(params, init_world(task, 5), task, vocab,
                    ControlConfig(max_steps=8), cache=cache)
    assert [(s.step, s.primitive_id) for s in a.trace] == \
        [(s.step, s.primitive_id) for s in b.trace]


def test_expert_corrections_drive_success(small_trained):
    """A weak checkpoint plus generous corrections completes the pick task."""
    vocab = canonical_vocabulary()
    task = get_task("pick")
    params = small_trained.params
    cache = PrimitiveCache(vocab, params)
    cfg = ControlConfig(max_steps=30, intervention_budget=30,
                        correction_source=make_correction_source())
    result = run_episode(params, init_world(task, 123), task, vocab, cfg,
                         cache=cache)
    assert result.success


def test_trace_records_probabilities(scoring_setup):
    vocab, params, cache, task, state = scoring_setup
    result = run_episode(params, state, task, vocab,
                         ControlConfig(max_steps=4), cache=cache)
    assert len(result.trace) >= 1
    for entry in result.trace:
        assert 0.0 < entry.probability < 1.0
