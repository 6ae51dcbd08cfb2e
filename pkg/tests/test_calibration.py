import numpy as np
import pytest

from baca.calibration import (
    CalibratorParams,
    ScoreRecord,
    attn_forward,
    fuse,
    loss_and_grads,
    minmax_normalize,
    s_in,
    s_out,
    train,
)
from baca.dictionary import BoundaryDict, DictEntry


def random_params(rng, d, scale=0.5):
    return CalibratorParams(
        rng.normal(0, scale, size=(d, d)),
        rng.normal(0, scale, size=(d, d)),
        rng.normal(0, scale, size=(d, d)),
        rng.normal(0, scale, size=d),
    )


def random_entries(rng, n, d):
    return [DictEntry(rng.normal(size=d), float(rng.normal())) for _ in range(n)]


def flatten(p):
    return np.concatenate([p.w_q.ravel(), p.w_k.ravel(), p.w_v.ravel(), p.readout])


def write_into(p, vec):
    d = p.dim
    p.w_q[:] = vec[: d * d].reshape(d, d)
    p.w_k[:] = vec[d * d : 2 * d * d].reshape(d, d)
    p.w_v[:] = vec[2 * d * d : 3 * d * d].reshape(d, d)
    p.readout[:] = vec[3 * d * d :]


class TestAttnForward:
    def test_single_key_softmax_is_one(self, rng):
        d = 4
        p = random_params(rng, d)
        q = rng.normal(size=d)
        key = rng.normal(size=d)
        out = attn_forward(p, q, key[None, :])
        v = key @ p.w_v
        expected = 1.0 / (1.0 + np.exp(-(v @ p.readout)))
        assert out == pytest.approx(expected, abs=1e-12)

    def test_zero_readout_gives_half(self, rng):
        d = 6
        p = random_params(rng, d)
        p.readout[:] = 0.0
        assert attn_forward(p, rng.normal(size=d), rng.normal(size=(3, d))) == 0.5

    def test_duplicated_keys_match_single(self, rng):
        d = 5
        p = random_params(rng, d)
        q = rng.normal(size=d)
        key = rng.normal(size=d)
        one = attn_forward(p, q, key[None, :])
        three = attn_forward(p, q, np.tile(key, (3, 1)))
        assert three == pytest.approx(one, abs=1e-12)

    def test_output_in_open_unit_interval(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 8))
            p = random_params(rng, d)
            out = attn_forward(p, rng.normal(size=d), rng.normal(size=(4, d)))
            assert 0.0 < out < 1.0

    def test_key_permutation_invariance(self, rng):
        d = 6
        p = random_params(rng, d)
        q = rng.normal(size=d)
        keys = rng.normal(size=(5, d))
        base = attn_forward(p, q, keys)
        for _ in range(5):
            perm = rng.permutation(5)
            assert attn_forward(p, q, keys[perm]) == pytest.approx(base, abs=1e-12)

    def test_dimension_mismatch_rejected(self, rng):
        p = random_params(rng, 4)
        with pytest.raises(ValueError, match="dimension"):
            attn_forward(p, np.zeros(3), np.zeros((2, 4)))


class TestDictScores:
    def _dicts(self, rng, d=4):
        id_dict = BoundaryDict("id", capacity=8)
        ood_dict = BoundaryDict("ood", capacity=8)
        for _ in range(6):
            id_dict.try_insert(DictEntry(rng.normal(size=d), float(rng.normal())))
            ood_dict.try_insert(DictEntry(rng.normal(size=d), float(rng.normal())))
        return id_dict, ood_dict

    def test_ranges(self, rng):
        id_dict, ood_dict = self._dicts(rng)
        p = random_params(rng, 4)
        q = rng.normal(size=4)
        assert 0.0 < s_out(p, q, ood_dict, 3) < 1.0
        assert -1.0 < s_in(p, q, id_dict, 3) < 0.0

    def test_swapping_dictionaries_negates_attn(self):
        # Two configurations: the query's matching key in the OOD dictionary
        # and an orthogonal key in the ID one, then the contents swapped.
        # With a shared parameter set the swap exactly negates s_in + s_out.
        d = 4
        near = np.array([1.0, 0.0, 0.0, 0.0])
        far = np.array([0.0, 1.0, 0.0, 0.0])
        params = CalibratorParams.init(d, np.random.default_rng(3))
        params.readout[:] = np.array([0.7, -0.3, 0.2, 0.1])

        def attn(id_key, ood_key):
            id_dict = BoundaryDict("id", capacity=2)
            id_dict.try_insert(DictEntry(id_key, 0.1))
            ood_dict = BoundaryDict("ood", capacity=2)
            ood_dict.try_insert(DictEntry(ood_key, 0.9))
            return s_in(params, near, id_dict, 1) + s_out(params, near, ood_dict, 1)

        matched = attn(far, near)
        swapped = attn(near, far)
        assert matched == pytest.approx(-swapped, abs=1e-12)
        assert matched > swapped  # seeded readout scores the matching key higher

    def test_zero_query_finite(self, rng):
        id_dict, ood_dict = self._dicts(rng)
        p = random_params(rng, 4)
        assert np.isfinite(s_out(p, np.zeros(4), ood_dict, 3))


class TestFuse:
    def test_minmax_constant_batch(self):
        assert np.allclose(minmax_normalize([2.0, 2.0, 2.0]), 0.5)

    def test_beta_zero_preserves_ranking(self, rng):
        s_pre = rng.normal(size=20)
        fused = fuse(s_pre, rng.normal(size=20), beta=0.0)
        assert np.array_equal(np.argsort(fused), np.argsort(s_pre))

    def test_constant_pre_follows_attn(self, rng):
        s_attn = rng.normal(size=10)
        fused = fuse(np.ones(10), s_attn, beta=1.0)
        assert np.array_equal(np.argsort(fused), np.argsort(s_attn))

    def test_direct_arithmetic(self):
        assert fuse([0.0, 1.0], [1.0, -1.0], beta=0.5) == [0.5, 0.5]

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            fuse([1.0], [1.0, 2.0], beta=0.5)


class TestScoreRecord:
    def test_consistent_record(self):
        ScoreRecord(s_pre=1.0, s_in=-0.5, s_out=0.7, s_attn=0.2, s_baca=1.1, label=0)

    def test_inconsistent_attn_rejected(self):
        with pytest.raises(ValueError, match="s_attn"):
            ScoreRecord(s_pre=1.0, s_in=-0.5, s_out=0.7, s_attn=0.3, s_baca=1.1)


class TestLossAndGrads:
    def test_symmetric_start_is_4_log2(self, rng):
        d = 4
        p_in = CalibratorParams.init(d, rng)
        p_out = CalibratorParams.init(d, rng)
        ids = random_entries(rng, 3, d)
        oods = random_entries(rng, 3, d)
        loss, _, _ = loss_and_grads(p_in, p_out, ids, oods, k=2)
        assert loss == pytest.approx(4 * np.log(2), abs=1e-9)

    def test_empty_side_rejected(self, rng):
        p = random_params(rng, 4)
        with pytest.raises(ValueError, match="non-empty"):
            loss_and_grads(p, p, [], random_entries(rng, 2, 4), k=1)

    def test_gradcheck_against_central_differences(self, rng):
        worst = 0.0
        for _ in range(12):
            d = int(rng.choice([4, 8]))
            k = int(rng.choice([1, 2, 5]))
            ids = random_entries(rng, int(rng.integers(2, 5)), d)
            oods = random_entries(rng, int(rng.integers(2, 5)), d)
            p_in = random_params(rng, d)
            p_out = random_params(rng, d)
            _, g_in, g_out = loss_and_grads(p_in, p_out, ids, oods, k)
            for p, g in ((p_in, g_in), (p_out, g_out)):
                theta0 = flatten(p).copy()
                analytic = flatten(g)
                fd = np.zeros_like(theta0)
                h = 1e-5
                for j in range(len(theta0)):
                    theta = theta0.copy()
                    theta[j] += h
                    write_into(p, theta)
                    lp = loss_and_grads(p_in, p_out, ids, oods, k)[0]
                    theta[j] -= 2 * h
                    write_into(p, theta)
                    lm = loss_and_grads(p_in, p_out, ids, oods, k)[0]
                    fd[j] = (lp - lm) / (2 * h)
                write_into(p, theta0)
                rel = np.abs(analytic - fd) / np.maximum(np.abs(analytic) + np.abs(fd), 1e-6)
                worst = max(worst, float(rel.max()))
        assert worst < 1e-4

    def test_softmax_rows_sum_to_one(self, rng):
        from baca.calibration import _softmax

        for _ in range(50):
            z = rng.normal(scale=float(rng.uniform(0.1, 50)), size=(4, 7))
            assert np.allclose(_softmax(z).sum(axis=1), 1.0, atol=1e-12)


class TestTrain:
    def _dicts_separable(self, rng, d=6):
        id_dict = BoundaryDict("id", capacity=16)
        ood_dict = BoundaryDict("ood", capacity=16)
        for _ in range(10):
            base_id = np.zeros(d)
            base_id[0] = 1.0
            base_ood = np.zeros(d)
            base_ood[1] = 1.0
            id_dict.try_insert(DictEntry(base_id + 0.1 * rng.normal(size=d), float(rng.normal())))
            ood_dict.try_insert(DictEntry(base_ood + 0.1 * rng.normal(size=d), float(rng.normal())))
        return id_dict, ood_dict

    def test_loss_decreases_on_separable_dicts(self, rng):
        id_dict, ood_dict = self._dicts_separable(rng)
        p_in = CalibratorParams.init(6, rng)
        p_out = CalibratorParams.init(6, rng)
        traj = train(p_in, p_out, id_dict, ood_dict, iters=200, lr=0.01, k=5)
        assert len(traj) == 200
        assert traj[-1] < traj[0]

    def test_zero_lr_constant_trajectory(self, rng):
        id_dict, ood_dict = self._dicts_separable(rng)
        p_in = CalibratorParams.init(6, rng)
        p_out = CalibratorParams.init(6, rng)
        traj = train(p_in, p_out, id_dict, ood_dict, iters=5, lr=0.0, k=2)
        assert all(x == traj[0] for x in traj)

    def test_single_iteration_applies_one_update(self, rng):
        id_dict, ood_dict = self._dicts_separable(rng)
        p_in = CalibratorParams.init(6, rng)
        p_out = CalibratorParams.init(6, rng)
        before = flatten(p_in).copy()
        traj = train(p_in, p_out, id_dict, ood_dict, iters=1, lr=0.5, k=2)
        assert len(traj) == 1
        assert not np.array_equal(before, flatten(p_in))
