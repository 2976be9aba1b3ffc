"""Occluded-run placement and the merge of observed/learned latents."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajanom.occlusion import (
    ALL_TASKS,
    OcclusionSpec,
    TaskKind,
    make_occlusion,
    parse_task,
    reorder_merge,
)


def test_future_run_is_the_last_l_steps():
    spec = make_occlusion(TaskKind.FUTURE, 18, 6)
    np.testing.assert_array_equal(spec.occluded, np.arange(12, 18))


def test_past_run_is_the_first_l_steps():
    spec = make_occlusion(TaskKind.PAST, 18, 6)
    np.testing.assert_array_equal(spec.occluded, np.arange(0, 6))


def test_present_run_is_centered():
    spec = make_occlusion(TaskKind.PRESENT, 18, 6)
    np.testing.assert_array_equal(spec.occluded, np.arange(6, 12))


def test_parse_task_accepts_names_case_insensitively():
    assert parse_task("Future") is TaskKind.FUTURE
    assert parse_task(" past ") is TaskKind.PAST
    with pytest.raises(ValueError, match="unknown task"):
        parse_task("sideways")


@settings(max_examples=100, deadline=None)
@given(
    st.sampled_from(ALL_TASKS),
    st.integers(3, 40),
    st.integers(1, 40),
)
def test_run_is_contiguous_and_partitions_the_window(task, T, L):
    cap = T - 2 if task is TaskKind.PRESENT else T - 1
    if L > cap:
        with pytest.raises(ValueError):
            make_occlusion(task, T, L)
        return
    spec = make_occlusion(task, T, L)
    occ = spec.occluded
    assert len(occ) == L == spec.n_occluded
    np.testing.assert_array_equal(occ, np.arange(occ[0], occ[0] + L))
    merged = np.sort(np.concatenate([occ, spec.observed]))
    np.testing.assert_array_equal(merged, np.arange(T))


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(ALL_TASKS), st.integers(4, 30), st.integers(1, 30))
def test_make_occlusion_is_deterministic(task, T, L):
    if L > (T - 2 if task is TaskKind.PRESENT else T - 1):
        return
    assert make_occlusion(task, T, L) == make_occlusion(task, T, L)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 60).flatmap(lambda T: st.tuples(st.just(T), st.integers(1, T // 3))))
def test_task_runs_are_pairwise_disjoint_when_l_fits_thrice(TL):
    T, L = TL
    runs = [set(make_occlusion(t, T, L).occluded.tolist()) for t in ALL_TASKS]
    for i in range(3):
        for j in range(i + 1, 3):
            assert not runs[i] & runs[j]


def test_spec_rejects_bad_runs():
    with pytest.raises(ValueError):
        OcclusionSpec(TaskKind.PAST, 0, 0, 0)
    with pytest.raises(ValueError):
        OcclusionSpec(TaskKind.PAST, 10, 5, 3)
    with pytest.raises(ValueError):
        OcclusionSpec(TaskKind.PAST, 10, -1, 3)
    with pytest.raises(ValueError):
        OcclusionSpec(TaskKind.PAST, 10, 3, 11)


def test_merge_places_learned_rows_at_the_tail():
    # window of 4 with the last two steps hidden
    spec = OcclusionSpec(TaskKind.FUTURE, 4, 2, 4)
    obs = np.array([[1.0, 1.0], [2.0, 2.0]])
    learned = np.array([[30.0, 30.0], [40.0, 40.0]])
    out = reorder_merge(obs, learned, spec)
    np.testing.assert_array_equal(
        out, [[1, 1], [2, 2], [30, 30], [40, 40]]
    )


def test_merge_places_learned_rows_at_the_head():
    spec = OcclusionSpec(TaskKind.PAST, 4, 0, 2)
    obs = np.array([[3.0, 3.0], [4.0, 4.0]])
    learned = np.array([[10.0, 10.0], [20.0, 20.0]])
    out = reorder_merge(obs, learned, spec)
    np.testing.assert_array_equal(
        out, [[10, 10], [20, 20], [3, 3], [4, 4]]
    )


def test_merge_with_empty_run_returns_observed_unchanged():
    spec = OcclusionSpec(TaskKind.PAST, 4, 2, 2)
    obs = np.arange(8.0).reshape(4, 2)
    out = reorder_merge(obs, np.empty((0, 2)), spec)
    np.testing.assert_array_equal(out, obs)


def test_merge_supports_batched_leading_dims():
    spec = make_occlusion(TaskKind.PRESENT, 5, 2)
    obs = np.arange(2 * 3 * 2, dtype=float).reshape(2, 3, 2)
    learned = -np.ones((2, 2, 2))
    out = reorder_merge(obs, learned, spec)
    assert out.shape == (2, 5, 2)
    np.testing.assert_array_equal(out[:, spec.observed], obs)
    np.testing.assert_array_equal(out[:, spec.occluded], learned)


def test_merge_validates_shapes():
    spec = make_occlusion(TaskKind.FUTURE, 6, 2)
    with pytest.raises(ValueError, match="observed latents"):
        reorder_merge(np.zeros((3, 4)), np.zeros((2, 4)), spec)
    with pytest.raises(ValueError, match="learned slice"):
        reorder_merge(np.zeros((4, 4)), np.zeros((3, 4)), spec)
    with pytest.raises(ValueError, match="width mismatch"):
        reorder_merge(np.zeros((4, 4)), np.zeros((2, 5)), spec)


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(ALL_TASKS),
    st.integers(3, 12),
    st.integers(1, 10),
    st.integers(0, 2**32 - 1),
)
def test_merge_output_row_depends_only_on_its_source(task, T, L, seed):
    # bumping one source row moves exactly one output row
    if L > (T - 2 if task is TaskKind.PRESENT else T - 1):
        return
    spec = make_occlusion(task, T, L)
    rng = np.random.default_rng(seed)
    obs = rng.standard_normal((T - L, 3))
    learned = rng.standard_normal((L, 3))
    base = reorder_merge(obs, learned, spec)

    k = int(rng.integers(T - L)) if T - L else None
    if k is not None:
        obs2 = obs.copy()
        obs2[k] += 1.0
        out = reorder_merge(obs2, learned, spec)
        changed = np.flatnonzero(np.abs(out - base).sum(axis=1))
        np.testing.assert_array_equal(changed, [spec.observed[k]])

    k = int(rng.integers(L))
    learned2 = learned.copy()
    learned2[k] += 1.0
    out = reorder_merge(obs, learned2, spec)
    changed = np.flatnonzero(np.abs(out - base).sum(axis=1))
    np.testing.assert_array_equal(changed, [spec.occluded[k]])
