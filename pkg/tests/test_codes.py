import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from ngcodes.codes import (
    CapExceeded,
    CodeParams,
    ConstructionFailed,
    MissingGradient,
    NotDecodable,
    StorageParams,
    build_cyclic_encoding,
    build_ngc,
    code_from_json,
    code_to_json,
    cyclic_support,
    decode_row,
    encode_response,
    identity_encoding,
    load_code,
    max_tolerable_stragglers,
    save_code,
    verify_gradient_code,
    verify_nesting,
)


def ones_residual(entries, subset):
    """Oracle: least-squares distance from the all-ones row to the span of the
    chosen rows, solved through scipy independently of the decoding path."""
    rows = entries[list(subset)]
    solution, *_ = scipy.linalg.lstsq(rows.T, np.ones(entries.shape[0]))
    return float(np.abs(rows.T @ solution - 1.0).max())


def sum_recovery_error(matrix, stragglers, rng):
    """Oracle: decode a straggler pattern and compare the recovered combination
    of encoded responses against the directly summed random gradients."""
    n = matrix.n
    gradients = rng.standard_normal((n, 3))
    responses = matrix.entries @ gradients
    responsive = sorted(set(range(n)) - set(stragglers))
    coeff = decode_row(matrix, responsive).coefficients
    recovered = coeff @ responses
    direct = gradients.sum(axis=0)
    return float(np.abs(recovered - direct).max() / np.abs(direct).max())


def test_code_params_require_k_equals_n():
    with pytest.raises(ValueError):
        CodeParams(n=8, k=4, sigma=1)
    with pytest.raises(ValueError):
        CodeParams(n=8, k=8, sigma=8)


def test_cyclic_supports_wrap():
    matrix = build_cyclic_encoding(8, 3, seed=1)
    assert set(np.flatnonzero(matrix.entries[0])) == {0, 1, 2, 3}
    assert set(np.flatnonzero(matrix.entries[6])) == {6, 7, 0, 1}  # wraps past n


def test_support_exactly_sigma_plus_one():
    for seed in range(3):
        matrix = build_cyclic_encoding(8, 3, seed=seed)
        for i in range(8):
            support = set(np.flatnonzero(matrix.entries[i]))
            assert support == set(cyclic_support(i, 3, 8).tolist())
            assert len(support) == 4


def test_every_three_row_subset_recovers_ones():
    matrix = build_cyclic_encoding(4, 1, seed=0)
    for subset in itertools.combinations(range(4), 3):
        assert ones_residual(matrix.entries, subset) < 1e-9


def test_nullspace_witness_orthogonal():
    ngc = build_ngc(10, 4, seed=3)
    for comp in ngc.components[1:]:
        assert np.abs(comp.h @ comp.entries.T).max() <= 1e-9


def test_identity_base_component():
    ngc = build_ngc(8, 0, seed=5)
    assert len(ngc.components) == 1
    assert np.array_equal(ngc.components[0].entries, np.eye(8))
    row = decode_row(ngc.components[0], range(8))
    assert np.allclose(row.coefficients, 1.0)


def test_full_density_at_max_tolerance():
    ngc = build_ngc(6, 5, seed=1)
    dense = ngc.components[5]
    assert all(np.count_nonzero(dense.entries[i]) == 6 for i in range(6))


def test_nesting_holds_for_built_families():
    # component sigma depends only on (n, sigma, seed), so the family with
    # s_max = n - 1 contains every smaller family as a prefix
    for n in range(2, 13):
        for seed in range(10):
            ok, violation = verify_nesting(build_ngc(n, n - 1, seed))
            assert ok, f"n={n} seed={seed} violated at {violation}"


def test_nesting_vacuous_for_single_component():
    assert verify_nesting(build_ngc(8, 0, seed=7)) == (True, None)


def test_nesting_violation_reported():
    ngc = build_ngc(8, 2, seed=11)
    shuffled = ngc.__class__(
        n=8, s_max=2, seed=11,
        components=(ngc.components[2], ngc.components[1], ngc.components[0]),
    )
    ok, violation = verify_nesting(shuffled)
    assert not ok
    assert violation is not None and violation[0] in (0, 1)


def test_construction_is_deterministic():
    a = build_ngc(9, 4, seed=123)
    b = build_ngc(9, 4, seed=123)
    for x, y in zip(a.components, b.components):
        assert np.array_equal(x.entries, y.entries)
    c = build_ngc(9, 4, seed=124)
    assert not np.array_equal(a.components[1].entries, c.components[1].entries)


def test_decode_requires_quorum():
    matrix = build_cyclic_encoding(8, 3, seed=2)
    with pytest.raises(NotDecodable):
        decode_row(matrix, {0, 1, 2, 3})


def test_decode_subset_support_and_residual():
    matrix = build_cyclic_encoding(8, 3, seed=2)
    row = decode_row(matrix, {0, 1, 2, 3, 4})
    assert set(np.flatnonzero(row.coefficients)) <= {0, 1, 2, 3, 4}
    assert np.abs(row.coefficients @ matrix.entries - 1.0).max() <= 1e-8


def test_decode_uses_smallest_indices_when_overprovisioned():
    matrix = build_cyclic_encoding(8, 3, seed=2)
    row = decode_row(matrix, range(8))
    assert row.responsive_set == frozenset({0, 1, 2, 3, 4})


def test_verify_identity_passes_at_sigma_zero():
    report = verify_gradient_code(identity_encoding(6), sigma=0)
    assert report.passed and report.max_residual <= 1e-12


def test_verify_built_code_passes():
    matrix = build_cyclic_encoding(8, 3, seed=4)
    report = verify_gradient_code(matrix, sigma=3)
    assert report.support_ok and report.decodable_ok and report.product_ok


def test_verify_identity_fails_at_sigma_one():
    report = verify_gradient_code(identity_encoding(8), sigma=1)
    assert not report.support_ok
    assert not report.decodable_ok
    assert not report.passed


def test_verify_cap():
    with pytest.raises(CapExceeded):
        verify_gradient_code(identity_encoding(13), sigma=0)


def test_storage_bound():
    assert max_tolerable_stragglers(StorageParams(beta=1, m=4, c=4, n=4, k=4)) == 0
    assert max_tolerable_stragglers(StorageParams(beta=4, m=8, c=4, n=8, k=8)) == 7
    assert max_tolerable_stragglers(StorageParams(beta=1, m=2, c=9, n=4, k=4)) == 0
    # clamped by n - 1 even with abundant storage
    assert max_tolerable_stragglers(StorageParams(beta=100, m=100, c=1, n=4, k=4)) == 3


def test_encode_response_identity_row():
    gradients = [np.array([1.0, 2.0]), np.array([3.0, 4.0]), np.array([5.0, 6.0])]
    row = np.array([0.0, 1.0, 0.0])
    assert np.array_equal(encode_response(row, gradients), gradients[1])


def test_encode_response_combination_skips_zero_coefficients():
    row = np.array([1.0, 2.0, 0.0])
    gradients = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), None]  # unread block is absent
    assert np.array_equal(encode_response(row, gradients), np.array([1.0, 2.0]))


def test_encode_response_missing_gradient():
    with pytest.raises(MissingGradient):
        encode_response(np.array([1.0, 2.0, 0.0]), [np.array([1.0]), None, None])


def test_encode_then_decode_recovers_sum():
    matrix = build_cyclic_encoding(8, 3, seed=6)
    rng = np.random.default_rng(0)
    for stragglers in [(), (7,), (1, 4), (0, 3, 6)]:
        assert sum_recovery_error(matrix, stragglers, rng) <= 1e-8


def test_construction_failure_is_reachable(monkeypatch):
    import ngcodes.codes as codes_mod

    def always_singular(n, sigma, rng):
        raise codes_mod.SingularSystem("forced")

    monkeypatch.setattr(codes_mod, "_attempt_cyclic", always_singular)
    with pytest.raises(ConstructionFailed):
        build_cyclic_encoding(8, 3, seed=0)


def test_serialization_roundtrip_bit_identical(tmp_path):
    ngc = build_ngc(8, 3, seed=42)
    loaded = code_from_json(code_to_json(ngc))
    assert (loaded.n, loaded.s_max, loaded.seed) == (8, 3, 42)
    for a, b in zip(ngc.components, loaded.components):
        assert np.array_equal(a.entries, b.entries)
    path = tmp_path / "code.json"
    save_code(ngc, path)
    reloaded = load_code(path)
    for a, b in zip(ngc.components, reloaded.components):
        assert np.array_equal(a.entries, b.entries)


def test_deserialization_rejects_bad_documents():
    ngc = build_ngc(4, 1, seed=0)
    import json

    doc = json.loads(code_to_json(ngc))
    doc["components"] = doc["components"][:1]
    with pytest.raises(ValueError):
        code_from_json(json.dumps(doc))


@st.composite
def code_and_stragglers(draw):
    n = draw(st.integers(min_value=2, max_value=10))
    sigma = draw(st.integers(min_value=1, max_value=n - 1))
    seed = draw(st.integers(min_value=0, max_value=2**20))
    count = draw(st.integers(min_value=0, max_value=sigma))
    stragglers = draw(
        st.lists(st.integers(min_value=0, max_value=n - 1), max_size=count, unique=True)
    )
    return n, sigma, seed, tuple(stragglers)


@settings(max_examples=40, deadline=None)
@given(code_and_stragglers())
def test_any_tolerated_straggler_pattern_recovers(case):
    n, sigma, seed, stragglers = case
    matrix = build_cyclic_encoding(n, sigma, seed)
    rng = np.random.default_rng(seed + 1)
    assert sum_recovery_error(matrix, stragglers, rng) <= 1e-8
