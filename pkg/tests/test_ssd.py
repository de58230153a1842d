import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssd_pulse.bench import random_inputs, rel_err
from ssd_pulse.errors import ShapeError
from ssd_pulse.ssd import (
    PathwayInputs,
    SsdBlockParams,
    SsdConfig,
    build_mask_L,
    ca_pathway,
    compute_decay,
    project_inputs,
    sa_pathway,
    softmax_attention_reference,
    ssd_chunked,
    ssd_quadratic,
    ssm_recurrence_scan,
)


def unrolled_oracle(inp: PathwayInputs):
    """y_t = sum_{s<=t} prod(a[s+1..t]) (q_t . k_s) v_s, one scalar loop per term."""
    q, k, v, a = (np.asarray(x, np.float64) for x in (inp.q, inp.k, inp.v, inp.decay))
    h, t, _ = q.shape
    y = np.zeros((h, t, v.shape[-1]))
    for hh in range(h):
        for i in range(t):
            for s in range(i + 1):
                w = 1.0
                for j in range(s + 1, i + 1):
                    w *= a[hh, j]
                y[hh, i] += w * float(q[hh, i] @ k[hh, s]) * v[hh, s]
    return y


def small_inputs(rng, h=2, t=12, n=4, p=2, low=0.0):
    return PathwayInputs(
        rng.standard_normal((h, t, n)),
        rng.standard_normal((h, t, n)),
        rng.standard_normal((h, t, p)),
        1.0 - rng.uniform(0, 1 - low, (h, t)),
    )


def random_params(rng, cfg=SsdConfig()):
    c, n, heads = cfg.d_model, cfg.d_state, cfg.n_heads
    s = 1 / np.sqrt(c)
    return SsdBlockParams(
        w_q=rng.uniform(-s, s, (c, n)),
        w_k=rng.uniform(-s, s, (c, n)),
        w_v=rng.uniform(-s, s, (c, c)),
        w_out=rng.uniform(-s, s, (c, c)),
        w_dt=rng.uniform(-s, s, (c, heads)),
        a_log=np.log(rng.uniform(1, 16, heads)),
        dt_bias=rng.uniform(-4, -1, heads),
    )


class TestConfig:
    def test_defaults(self):
        c = SsdConfig()
        assert (c.d_model, c.d_state, c.d_head, c.n_heads, c.chunk_size) == (64, 64, 16, 4, 16)

    def test_inconsistent(self):
        with pytest.raises(ValueError):
            SsdConfig(d_model=64, d_head=16, n_heads=3)
        with pytest.raises(ValueError):
            SsdConfig(chunk_size=0)


class TestMask:
    def test_unit_decay_is_causal_ones(self):
        assert np.array_equal(build_mask_L(np.ones((1, 5)), 0), np.tril(np.ones((5, 5))))

    def test_vanishing_decay_is_identity(self):
        L = build_mask_L(np.full((1, 6), 1e-30), 0)
        assert np.allclose(L, np.eye(6), atol=1e-20)
        assert np.array_equal(build_mask_L(np.zeros((1, 6)), 0), np.eye(6))

    def test_product_entries(self):
        L = build_mask_L(np.array([[0.9, 0.5, 0.5, 0.5]]), 0)
        assert L[3, 0] == 0.125 and L[2, 1] == 0.5
        assert np.all(np.diag(L) == 1) and not np.any(np.triu(L, 1))

    def test_head_index(self):
        with pytest.raises(IndexError):
            build_mask_L(np.ones((2, 3)), 2)

    @given(st.integers(2, 10), st.integers(0, 2**31))
    def test_monotone_in_decay(self, t, seed):
        r = np.random.default_rng(seed)
        a = r.uniform(0.05, 1.0, (1, t))
        k = int(r.integers(1, t))
        b = a.copy()
        b[0, k] *= r.uniform(0, 1)
        La, Lb = build_mask_L(a, 0), build_mask_L(b, 0)
        for i in range(k, t):
            for j in range(k):
                assert abs(Lb[i, j]) <= abs(La[i, j])


class TestRecurrence:
    def test_single_step(self, rng):
        inp = small_inputs(rng, t=1)
        ref = np.einsum("htn,htn->ht", inp.q, inp.k)[..., None] * inp.v
        assert np.allclose(ssm_recurrence_scan(inp), ref, atol=1e-6)

    def test_memoryless(self, rng):
        base = small_inputs(rng, t=7)
        inp = PathwayInputs(base.q, base.k, base.v, np.zeros((2, 7)))
        ref = np.einsum("htn,htn->ht", inp.q.astype(np.float64), inp.k)[..., None] * inp.v
        assert np.allclose(ssm_recurrence_scan(inp), ref, atol=1e-6)

    def test_unrolled_sum(self, rng):
        inp = small_inputs(rng, t=12)
        assert rel_err(ssm_recurrence_scan(inp), unrolled_oracle(inp)) < 1e-5

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            PathwayInputs(np.ones((2, 3, 4)), np.ones((2, 3, 5)), np.ones((2, 3, 2)), np.ones((2, 3)))


class TestSoftmaxReference:
    def test_single_token(self, rng):
        v = rng.standard_normal((1, 3))
        assert np.allclose(softmax_attention_reference(rng.standard_normal((1, 3)), rng.standard_normal((1, 3)), v), v)

    def test_identical_queries(self, rng):
        q = np.repeat(rng.standard_normal((1, 3)), 4, axis=0)
        out = softmax_attention_reference(q, rng.standard_normal((4, 3)), rng.standard_normal((4, 3)))
        assert np.all(out == out[0])

    def test_direct_formula(self, rng):
        q, k, v = (rng.standard_normal((5, 3)).astype(np.float32) for _ in range(3))
        out = softmax_attention_reference(q, k, v)
        for i in range(5):
            s = [float(q[i] @ k[j]) / np.sqrt(3) for j in range(5)]
            e = [np.exp(x) for x in s]
            ref = sum(e[j] / sum(e) * v[j].astype(np.float64) for j in range(5))
            assert np.max(np.abs(out[i] - ref)) < 1e-6

    def test_causal(self, rng):
        q, k, v = (rng.standard_normal((6, 3)) for _ in range(3))
        out = softmax_attention_reference(q, k, v, causal=True)
        assert np.allclose(out[0], v[0], atol=1e-6)


class TestQuadratic:
    def test_hand_expansion(self, rng):
        inp = small_inputs(rng, h=1, t=2)
        inp = PathwayInputs(inp.q, inp.k, inp.v, np.ones((1, 2)))
        q, k, v = (x.astype(np.float64)[0] for x in (inp.q, inp.k, inp.v))
        y2 = (q[1] @ k[0]) * v[0] + (q[1] @ k[1]) * v[1]
        assert np.allclose(ssd_quadratic(inp)[0, 1], y2, atol=1e-6)

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_recurrence(self, seed):
        r = np.random.default_rng(seed)
        inp = small_inputs(r, h=2, t=int(r.integers(1, 65)), n=8, p=4)
        assert rel_err(ssd_quadratic(inp), ssm_recurrence_scan(inp)) < 1e-4


class TestChunked:
    def test_single_chunk_matches_quadratic(self, rng):
        inp = small_inputs(rng, t=20)
        assert np.max(np.abs(ssd_chunked(inp, 20) - ssd_quadratic(inp))) < 1e-6
        assert np.max(np.abs(ssd_chunked(inp, 64) - ssd_quadratic(inp))) < 1e-6

    def test_unit_chunks_match_recurrence(self, rng):
        inp = small_inputs(rng, t=20)
        assert rel_err(ssd_chunked(inp, 1), ssm_recurrence_scan(inp)) < 1e-5

    def test_quadratic_oracle(self, rng):
        inp = random_inputs(96, SsdConfig(), rng)
        assert rel_err(ssd_chunked(inp, 16), ssd_quadratic(inp)) < 1e-4

    @given(st.integers(1, 70), st.integers(1, 20), st.integers(0, 2**31))
    def test_uneven_tail(self, t, cs, seed):
        inp = small_inputs(np.random.default_rng(seed), t=t)
        assert rel_err(ssd_chunked(inp, cs), ssm_recurrence_scan(inp)) < 1e-5

    def test_zero_decay_is_finite(self, rng):
        base = small_inputs(rng, t=33)
        a = np.asarray(base.decay).copy()
        a[:, ::5] = 0.0
        inp = PathwayInputs(base.q, base.k, base.v, a)
        out = ssd_chunked(inp, 8)
        assert np.all(np.isfinite(out))
        assert rel_err(out, ssm_recurrence_scan(inp)) < 1e-5

    @given(st.integers(1, 90), st.integers(1, 8), st.integers(1, 5), st.booleans(), st.integers(0, 2**31))
    def test_block_grouping_matches_recurrence(self, t, cs, blocks, zeros, seed):
        base = small_inputs(np.random.default_rng(seed), t=t)
        a = np.asarray(base.decay).copy()
        if zeros:
            a[:, ::7] = 0.0
        inp = PathwayInputs(base.q, base.k, base.v, a)
        out = ssd_chunked(inp, cs, block_chunks=blocks)
        assert np.all(np.isfinite(out))
        assert rel_err(out, ssm_recurrence_scan(inp)) < 1e-5

    def test_bad_block_chunks(self, rng):
        with pytest.raises(ValueError):
            ssd_chunked(small_inputs(rng), 4, block_chunks=0)

    @given(st.integers(2, 40), st.integers(0, 2**31))
    def test_causality(self, t, seed):
        r = np.random.default_rng(seed)
        inp = small_inputs(r, t=t)
        cut = int(r.integers(0, t - 1))
        arrs = [np.array(x, copy=True) for x in (inp.q, inp.k, inp.v)]
        for x in arrs:
            x[:, cut + 1 :] = r.standard_normal(x[:, cut + 1 :].shape) * 10
        a = np.array(inp.decay, copy=True)
        a[:, cut + 1 :] = r.uniform(0, 1, a[:, cut + 1 :].shape)
        pert = PathwayInputs(*arrs, a)
        for fn in (ssm_recurrence_scan, ssd_quadratic, lambda i: ssd_chunked(i, 4)):
            assert np.max(np.abs(fn(inp)[:, : cut + 1] - fn(pert)[:, : cut + 1])) <= 1e-6

    def test_quadratic_ignores_future_scores(self, rng):
        # causality through the mask: future keys only enter via strictly-upper scores
        inp = small_inputs(rng, t=10)
        k = np.array(inp.k, copy=True)
        k[:, 9] += 100.0
        pert = PathwayInputs(inp.q, k, inp.v, inp.decay)
        assert np.array_equal(ssd_quadratic(inp)[:, :9], ssd_quadratic(pert)[:, :9])


class TestPathways:
    def test_zero_input(self, rng):
        p = random_params(rng)
        out, q = sa_pathway(np.zeros((16, 64)), p)
        assert not np.any(out) and not np.any(q)

    def test_composition_oracle(self, rng):
        p = random_params(rng)
        x = rng.standard_normal((40, 64)).astype(np.float32)
        out, q = sa_pathway(x, p)
        x64 = x.astype(np.float64)
        qk_q = x64 @ p.w_q
        qk_k = x64 @ p.w_k
        v = (x64 @ p.w_v).reshape(40, 4, 16).transpose(1, 0, 2)
        dt = x64 @ p.w_dt + p.dt_bias
        a = np.exp(-np.log1p(np.exp(dt)) * np.exp(p.a_log)).T
        inp = PathwayInputs(np.repeat(qk_q[None], 4, 0), np.repeat(qk_k[None], 4, 0), v, a)
        y = ssd_quadratic(inp).astype(np.float64).transpose(1, 0, 2).reshape(40, 64)
        ref = y @ p.w_out
        assert np.max(np.abs(out - ref)) < 1e-5
        assert np.allclose(q[0], qk_q, atol=1e-6)

    def test_v_linearity(self, rng):
        p = random_params(rng)
        x = rng.standard_normal((24, 64))
        out, _ = sa_pathway(x, p)
        p2 = p.copy()
        p2.w_v = p.w_v * 2
        out2, _ = sa_pathway(x, p2)
        assert np.array_equal(out2, out * 2)

    def test_ca_degenerates_to_sa(self, rng):
        p = random_params(rng)
        x = rng.standard_normal((48, 64))
        sa, q = sa_pathway(x, p)
        ca = ca_pathway(x, q, p.copy())
        assert np.max(np.abs(ca - sa)) <= 1e-6

    def test_ca_mixed_quadratic_oracle(self, rng):
        ps, pc = random_params(rng), random_params(rng)
        xs, xc = rng.standard_normal((32, 64)), rng.standard_normal((32, 64))
        _, q = sa_pathway(xs, ps)
        out = ca_pathway(xc, q, pc)
        mixed = project_inputs(xc, pc)
        inp = PathwayInputs(q, mixed.k, mixed.v, compute_decay(xc, pc))
        y = ssd_quadratic(inp).astype(np.float64).transpose(1, 0, 2).reshape(32, 64)
        assert np.max(np.abs(out - y @ pc.w_out)) < 1e-5

    def test_ca_v_scaling(self, rng):
        ps, pc = random_params(rng), random_params(rng)
        x = rng.standard_normal((16, 64))
        _, q = sa_pathway(x, ps)
        pc2 = pc.copy()
        pc2.w_v = pc.w_v * 0.5
        assert np.array_equal(ca_pathway(x, q, pc2), ca_pathway(x, q, pc) * np.float32(0.5))

    def test_ca_length_mismatch(self, rng):
        p = random_params(rng)
        _, q = sa_pathway(rng.standard_normal((16, 64)), p)
        with pytest.raises(ShapeError):
            ca_pathway(rng.standard_normal((20, 64)), q, p)

    def test_decay_in_unit_interval(self, rng):
        a = compute_decay(rng.standard_normal((50, 64)) * 10, random_params(rng))
        assert a.shape == (4, 50) and np.all(a >= 0) and np.all(a <= 1)
