import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from goalflow.errors import ConfigError, DomainError, NetworkError, ParseError, RangeError
from goalflow.mapcore import SemanticMap
from goalflow.prior import (
    LLMConfig,
    PriorMatrices,
    PriorParams,
    build_prior_field,
    build_prompt,
    candidate_set,
    confidence_to_sigma,
    load_prior_matrices,
    parse_llm_responses,
    parse_response_text,
    predicted_centroid,
    prior_from_dict,
    query_llm,
    rasterize_gaussian,
    save_prior_matrices,
)

CATS = ["table", "chair", "sink"]


def _prior(d01=0.5, c01=0.1, d02=8.0, c02=0.5, d12=3.0, c12=0.2):
    D = np.array([[0, d01, d02], [d01, 0, d12], [d02, d12, 0]], float)
    C = np.array([[1, c01, c02], [c01, 1, c12], [c02, c12, 1]], float)
    return PriorMatrices(tuple(CATS), D, C)


def _half_observed_map(h=64, w=64, seen_cols=20):
    grid = np.zeros((3, h, w))
    occ = np.stack([np.zeros((h, w)), np.ones((h, w))])
    mask = np.zeros((h, w), bool)
    mask[:, :seen_cols] = True
    return grid, occ, mask


def test_candidate_set_clauses():
    p = PriorParams()
    assert (p.tau_d, p.tau_c) == (2.5, 0.85)
    prior = _prior()
    assert candidate_set(0, prior, p) == [1]  # 0.5 m is close enough despite low confidence
    assert candidate_set(0, _prior(d01=9.0, c01=0.9), p) == [1]  # confidence clause alone
    assert candidate_set(0, _prior(d01=9.0, c01=0.5), p) == []


def test_confidence_to_sigma_values():
    p = PriorParams()
    assert confidence_to_sigma(1.0, p) == 20.0
    assert confidence_to_sigma(0.0, p) == 50.0
    assert confidence_to_sigma(0.5, p) == 35.0
    with pytest.raises(DomainError):
        confidence_to_sigma(1.1, p)


@given(st.floats(0, 1), st.floats(0, 1))
def test_confidence_to_sigma_monotone_and_bounded(a, b):
    p = PriorParams()
    sa, sb = confidence_to_sigma(a, p), confidence_to_sigma(b, p)
    assert 20.0 <= sa <= 50.0
    if a <= b:
        assert sa >= sb


def test_predicted_centroid_examples():
    assert predicted_centroid((10, 10), 1.0, np.array([0.0, 1.0]), 0.05) == pytest.approx((10, 30))
    assert predicted_centroid((10, 10), 0.5, np.array([1.0, 0.0]), 0.05) == pytest.approx((20, 10))


def test_gaussian_peak_and_mass():
    g = rasterize_gaussian((128.0, 128.0), 20.0, 256, 256)
    assert g.max() == pytest.approx(1 / (2 * math.pi * 400), rel=1e-12)
    # quadrature oracle: probability mass of the continuous Gaussian over the grid's extent
    edge = norm.cdf(255.5, 128, 20) - norm.cdf(-0.5, 128, 20)
    assert 0.95 <= g.sum() <= 1.0
    assert abs(g.sum() - edge ** 2) < 1e-3
    with pytest.raises(DomainError):
        rasterize_gaussian((0, 0), 0.0, 4, 4)


def test_field_single_gaussian_on_frontier_ray():
    grid, occ, mask = _half_observed_map()
    grid[0, 31:34, 9:12] = 1.0  # table centred at (32, 10)
    smap = SemanticMap(grid, occupancy=occ)
    field = build_prior_field(smap, mask, _prior(), PriorParams(), np.random.default_rng(0))
    # nearest frontier is (32, 19), direction (0, 1); 0.5 m = 10 cells out
    assert field[0].sum() == 0 and field[2].sum() == 0
    peak = np.unravel_index(np.argmax(field[1]), field[1].shape)
    assert abs(peak[0] - 32) <= 1 and abs(peak[1] - 20) <= 1
    sigma = confidence_to_sigma(0.1, PriorParams())
    assert np.allclose(field[1], rasterize_gaussian((32.0, 20.0), sigma, 64, 64))


def test_field_superposition_and_determinism():
    grid, occ, mask = _half_observed_map()
    grid[0, 10, 5] = 1.0
    grid[0, 50, 8] = 1.0
    smap = SemanticMap(grid, occupancy=occ)
    params = PriorParams()
    field = build_prior_field(smap, mask, _prior(), params, np.random.default_rng(1))
    sigma = confidence_to_sigma(0.1, params)
    want = rasterize_gaussian((10.0, 15.0), sigma, 64, 64) + rasterize_gaussian((50.0, 18.0), sigma, 64, 64)
    assert np.allclose(field[1], want)
    again = build_prior_field(smap, mask, _prior(), params, np.random.default_rng(1))
    assert np.array_equal(field, again)


def test_field_empty_cases():
    grid, occ, mask = _half_observed_map()
    grid[2, 10, 5] = 1.0  # sink: no candidates under the default thresholds
    smap = SemanticMap(grid, occupancy=occ)
    assert not build_prior_field(smap, mask, _prior(), PriorParams(), np.random.default_rng(0)).any()
    grid[0, 20, 5] = 1.0
    full = np.ones_like(mask)
    assert not build_prior_field(SemanticMap(grid, occupancy=occ), full, _prior(), PriorParams(),
                                 np.random.default_rng(0)).any()
    with pytest.raises(ValueError):
        build_prior_field(SemanticMap(grid), mask, _prior(), PriorParams(), np.random.default_rng(0))


def test_field_reference_size_keeps_peak_height():
    grid, occ, mask = _half_observed_map(64, 64, 20)
    grid[0, 32, 10] = 1.0
    smap = SemanticMap(grid, occupancy=occ, resolution=0.2)
    params = PriorParams(reference_size=256)
    field = build_prior_field(smap, mask, _prior(), params, np.random.default_rng(0))
    # widths shrink fourfold but the peak keeps its reference-canvas value
    sigma = confidence_to_sigma(0.1, params)
    assert field[1].max() == pytest.approx(1 / (2 * math.pi * sigma ** 2), rel=1e-2)
    peak = np.unravel_index(np.argmax(field[1]), field[1].shape)
    assert peak[0] == 32 and peak[1] in (12, 13)  # 0.5 m is 2.5 cells at 0.2 m per cell


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_field_nonnegative_and_mass_bounded(seed):
    rng = np.random.default_rng(seed)
    grid, occ, mask = _half_observed_map(48, 48, 24)
    grid[rng.integers(0, 3, 6), rng.integers(0, 48, 6), rng.integers(0, 24, 6)] = 1.0
    smap = SemanticMap(grid, occupancy=occ)
    n_objects = len({(c, r, k) for c, r, k in np.argwhere(grid > 0.5)})
    field = build_prior_field(smap, mask, _prior(c12=0.9), PriorParams(), rng)
    assert (field >= 0).all() and np.isfinite(field).all()
    assert field.sum() <= n_objects + 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_candidate_relation_is_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    D = rng.uniform(0, 6, (n, n))
    C = rng.uniform(0, 1, (n, n))
    prior = PriorMatrices(tuple(f"c{i}" for i in range(n)), D, C).symmetrized()
    p = PriorParams()
    for i in range(n):
        for j in candidate_set(i, prior, p):
            assert i in candidate_set(j, prior, p)


def test_matrices_symmetrize_by_averaging(tmp_path):
    payload = {"categories": ["a", "b"], "D": [[0, 0.5], [1.5, 0]], "C": [[1, 0.2], [0.4, 1]]}
    prior = prior_from_dict(payload)
    assert prior.D[0, 1] == prior.D[1, 0] == 1.0
    assert prior.C[0, 1] == pytest.approx(0.3)
    save_prior_matrices(tmp_path / "p.json", prior)
    back = load_prior_matrices(tmp_path / "p.json")
    assert np.array_equal(back.D, prior.D) and back.is_symmetric()


def test_matrices_unknown_distance_roundtrips_as_null(tmp_path):
    prior = prior_from_dict({"categories": ["a", "b"], "D": [[0, None], [None, 0]], "C": [[1, 0], [0, 1]]})
    assert math.isinf(prior.D[0, 1])
    save_prior_matrices(tmp_path / "p.json", prior)
    assert json.loads((tmp_path / "p.json").read_text())["D"][0][1] is None
    assert math.isinf(load_prior_matrices(tmp_path / "p.json").D[1, 0])


def test_matrices_errors(tmp_path):
    with pytest.raises(RangeError):
        prior_from_dict({"categories": ["a", "b"], "D": [[0, 1], [1, 0]], "C": [[1, 1.2], [1.2, 1]]})
    with pytest.raises(RangeError):
        PriorMatrices(("a", "b"), np.array([[0, -1.0], [-1.0, 0]]), np.eye(2))
    with pytest.raises(ParseError):
        prior_from_dict({"categories": ["a"], "D": [[0]]})
    with pytest.raises(ParseError):
        prior_from_dict({"categories": ["a", "b"], "D": [[0, "x"], [1, 0]], "C": [[1, 0], [0, 1]]})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_prior_matrices(tmp_path / "bad.json")


RESPONSE_TABLE = """Step 1 ... the chair sits at the table.

queried object: chair
distance: 0.5
confidence: 0.95
reasoning: people sit on it to eat.

**Queried Object:** sink
**Distance:** 6.0
**Confidence:** 0.3
reasoning: different room.

queried object: spaceship
distance: 1
confidence: 1
"""


def test_parse_response_text():
    found, problems = parse_response_text(RESPONSE_TABLE, CATS)
    assert found == {"chair": (0.5, 0.95), "sink": (6.0, 0.3)}
    assert len(problems) == 1 and "spaceship" in problems[0]
    found, problems = parse_response_text("queried object: chair\ndistance: 1.0\n", CATS)
    assert found == {} and problems


def test_parse_llm_responses_averages_and_reports_missing():
    raw = {
        "table": RESPONSE_TABLE,
        "chair": "queried object: table\ndistance: 1.5\nconfidence: 0.85\n",
        "sink": "",
    }
    prior, missing = parse_llm_responses(raw, CATS)
    assert prior.is_symmetric()
    assert prior.D[0, 1] == pytest.approx(1.0) and prior.C[0, 1] == pytest.approx(0.9)
    assert ("chair", "sink") in missing and ("sink", "table") in missing
    # one direction unknown: averaging with +inf keeps the pair unknown
    assert math.isinf(prior.D[1, 2])


def test_build_prompt_mentions_objects_and_schema():
    msgs = build_prompt("sofa", ["sofa", "tv", "bed"])
    assert [m["role"] for m in msgs] == ["system", "user"]
    user = msgs[1]["content"]
    assert "sofa, tv, bed" in user and "Central object: sofa" in user
    for label in ("queried object:", "distance:", "confidence:", "reasoning:"):
        assert label in user


def _reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def test_query_llm_with_mock_transport_and_cache(tmp_path):
    calls = []

    def handler(request):
        body = json.loads(request.content)
        calls.append(body)
        assert request.headers["authorization"] == "Bearer k"
        central = body["messages"][1]["content"].split("Central object: ")[1].split("\n")[0]
        return _reply(f"queried object: {'chair' if central != 'chair' else 'table'}\n"
                      "distance: 1.0\nconfidence: 0.9\n")

    cfg = LLMConfig(url="http://llm.test/v1/chat", api_key="k", cache_dir=str(tmp_path),
                    transport=httpx.MockTransport(handler), backoff=0.0)
    raw = query_llm(CATS, cfg)
    assert set(raw) == set(CATS) and len(calls) == 3
    assert calls[0]["model"] == "gpt-4" and calls[0]["temperature"] == 0.0
    again = query_llm(CATS, cfg)
    assert again == raw and len(calls) == 3  # served from the cache


def test_query_llm_retries_then_fails():
    attempts = []

    def handler(request):
        attempts.append(1)
        return httpx.Response(503)

    cfg = LLMConfig(url="http://llm.test", transport=httpx.MockTransport(handler), retries=2,
                    backoff=0.0, max_concurrency=1)
    with pytest.raises(NetworkError):
        query_llm(["a"], cfg)
    assert len(attempts) == 3


def test_query_llm_recovers_after_transient_error():
    state = {"n": 0}

    def handler(request):
        state["n"] += 1
        return httpx.Response(500) if state["n"] == 1 else _reply("ok")

    cfg = LLMConfig(url="http://llm.test", transport=httpx.MockTransport(handler), backoff=0.0)
    assert query_llm(["a"], cfg) == {"a": "ok"}


def test_llm_config_requires_endpoint(monkeypatch):
    monkeypatch.delenv("GOALFLOW_LLM_URL", raising=False)
    with pytest.raises(ConfigError):
        LLMConfig().resolved()
    monkeypatch.setenv("GOALFLOW_LLM_URL", "http://x")
    monkeypatch.setenv("GOALFLOW_LLM_KEY", "s")
    r = LLMConfig().resolved()
    assert (r.url, r.api_key) == ("http://x", "s")
