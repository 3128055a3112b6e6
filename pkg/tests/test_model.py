import math

import numpy as np
import pytest

from punctasr import model as m
from punctasr.checkpoint import load_checkpoint, save_checkpoint
from punctasr.ctc import logsumexp_rows


@pytest.fixture
def small_cfg():
    return m.ModelConfig(
        layers=2, hidden=8, heads=2, ff=16, input_dim=5, stride=2,
        vocab_final=7, vocab_mid=5, max_positions=64,
    )


def expected_param_count(cfg):
    h, f = cfg.hidden, cfg.ff
    per_layer = 2 * h + 4 * h * h + 4 * h + 2 * h + h * f + f + f * h + h
    heads = (2 * h + h * cfg.vocab_final + cfg.vocab_final) + (
        2 * h + h * cfg.vocab_mid + cfg.vocab_mid
    )
    return cfg.input_dim * h + h + cfg.layers * per_layer + heads


class TestInit:
    def test_deterministic(self, small_cfg):
        a = m.init_params(small_cfg, 3)
        b = m.init_params(small_cfg, 3)
        assert a.keys() == b.keys()
        for k in a:
            assert np.array_equal(a[k], b[k])

    def test_count_matches_closed_form(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        assert m.count_params(params) == expected_param_count(small_cfg)

    def test_count_for_known_config(self):
        cfg = m.ModelConfig(layers=4, hidden=64, heads=4, ff=128,
                            input_dim=16, vocab_final=40, vocab_mid=40)
        params = m.init_params(cfg, 0)
        assert m.count_params(params) == expected_param_count(cfg)

    def test_zero_layers_rejected(self):
        with pytest.raises(ValueError):
            m.ModelConfig(layers=0)

    def test_doubling_hidden_roughly_quadruples_attention(self):
        def attn_size(hidden):
            cfg = m.ModelConfig(layers=1, hidden=hidden, heads=4, ff=8,
                                input_dim=4, vocab_final=5, vocab_mid=5,
                                tap_layer=1)
            params = m.init_params(cfg, 0)
            return sum(p.size for k, p in params.items() if ".attn.W" in k)

        assert attn_size(64) == 4 * attn_size(32)


class TestForward:
    def test_single_subsampled_frame(self, small_cfg):
        x = np.random.default_rng(0).standard_normal((2, 5))
        out = m.forward(m.init_params(small_cfg, 0), small_cfg, [x])
        assert out.lengths == [1]
        assert out.final_logp.shape == (1, 1, 7)
        assert out.mid_logp.shape == (1, 1, 5)

    def test_shape_law_ceil(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        for T in range(1, 12):
            x = np.zeros((T, 5))
            out = m.forward(params, small_cfg, [x])
            assert out.lengths == [math.ceil(T / small_cfg.stride)]

    def test_rows_normalize(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        x = np.random.default_rng(1).standard_normal((10, 5))
        out = m.forward(params, small_cfg, [x])
        assert np.allclose(logsumexp_rows(out.final_lattice(0)), 0.0, atol=1e-5)
        assert np.allclose(logsumexp_rows(out.mid_lattice(0)), 0.0, atol=1e-5)

    def test_permutation_equivariance_without_positions(self):
        cfg = m.ModelConfig(layers=2, hidden=8, heads=2, ff=16, input_dim=5,
                            stride=1, vocab_final=7, vocab_mid=5,
                            use_positional=False, max_positions=64)
        params = m.init_params(cfg, 0)
        x = np.random.default_rng(2).standard_normal((6, 5))
        perm = x.copy()
        perm[[1, 4]] = perm[[4, 1]]
        a = m.forward(params, cfg, [x]).final_lattice(0)
        b = m.forward(params, cfg, [perm]).final_lattice(0)
        swapped = a.copy()
        swapped[[1, 4]] = swapped[[4, 1]]
        assert np.allclose(b, swapped, atol=1e-10)

    def test_dim_mismatch_rejected(self, small_cfg):
        with pytest.raises(ValueError):
            m.forward(m.init_params(small_cfg, 0), small_cfg, [np.zeros((4, 9))])

    def test_forward_deterministic(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        x = np.random.default_rng(3).standard_normal((9, 5))
        a = m.forward(params, small_cfg, [x]).final_logp
        b = m.forward(params, small_cfg, [x]).final_logp
        assert np.array_equal(a, b)

    def test_batch_matches_single(self, small_cfg):
        # padding must not change per-item lattices
        params = m.init_params(small_cfg, 0)
        rng = np.random.default_rng(4)
        xs = [rng.standard_normal((T, 5)) for T in (4, 9, 6)]
        batch = m.forward(params, small_cfg, xs)
        for i, x in enumerate(xs):
            solo = m.forward(params, small_cfg, [x])
            assert np.allclose(batch.final_lattice(i), solo.final_lattice(0), atol=1e-10)
            assert np.allclose(batch.mid_lattice(i), solo.mid_lattice(0), atol=1e-10)


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        x = np.random.default_rng(5).standard_normal((8, 5))
        out = m.forward(params, small_cfg, [x], train_mode=True)
        grads = m.backward(params, small_cfg, out,
                           np.zeros_like(out.final_logp),
                           np.zeros_like(out.mid_logp))
        for g in grads.values():
            assert np.all(g == 0.0)

    def test_requires_train_mode_cache(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        x = np.zeros((4, 5))
        out = m.forward(params, small_cfg, [x], train_mode=False)
        with pytest.raises(ValueError):
            m.backward(params, small_cfg, out,
                       np.zeros((1, 2, 7)), np.zeros((1, 2, 5)))

    def test_matches_finite_differences(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        rng = np.random.default_rng(6)
        x = rng.standard_normal((12, 5))
        gf = rng.standard_normal((1, 6, 7)) * 0.1
        gm = rng.standard_normal((1, 6, 5)) * 0.1

        def objective(p):
            out = m.forward(p, small_cfg, [x], train_mode=True)
            return float((out.final_logp * gf).sum() + (out.mid_logp * gm).sum()), out

        _, out = objective(params)
        grads = m.backward(params, small_cfg, out, gf, gm)
        eps = 1e-6
        check_rng = np.random.default_rng(7)
        for name, p in params.items():
            for _ in range(3):
                idx = tuple(check_rng.integers(s) for s in p.shape)
                orig = p[idx]
                p[idx] = orig + eps
                up, _ = objective(params)
                p[idx] = orig - eps
                dn, _ = objective(params)
                p[idx] = orig
                fd = (up - dn) / (2 * eps)
                g = grads[name][idx]
                if abs(fd) < 1e-7 and abs(g) < 1e-7:
                    continue  # zero-gradient directions drown in FD noise
                assert g == pytest.approx(fd, rel=1e-4, abs=1e-7), name

    def test_zero_mid_grad_leaves_mid_head_untouched(self, small_cfg):
        params = m.init_params(small_cfg, 0)
        rng = np.random.default_rng(8)
        x = rng.standard_normal((10, 5))
        out = m.forward(params, small_cfg, [x], train_mode=True)
        gf = rng.standard_normal(out.final_logp.shape)
        grads = m.backward(params, small_cfg, out, gf, np.zeros_like(out.mid_logp))
        for k, g in grads.items():
            if k.startswith("head_mid."):
                assert np.all(g == 0.0)

    def test_mid_head_does_not_touch_layers_above_tap(self, small_cfg):
        # gradient flowing only into the mid head must leave the upper
        # layers and the final head at exactly zero
        params = m.init_params(small_cfg, 0)
        rng = np.random.default_rng(9)
        x = rng.standard_normal((10, 5))
        out = m.forward(params, small_cfg, [x], train_mode=True)
        gm = rng.standard_normal(out.mid_logp.shape)
        grads = m.backward(params, small_cfg, out, np.zeros_like(out.final_logp), gm)
        tap = small_cfg.tap
        for k, g in grads.items():
            if k.startswith("head_final.") or any(
                k.startswith(f"layer{i}.") for i in range(tap, small_cfg.layers)
            ):
                assert np.all(g == 0.0), k
            if k.startswith("head_mid.W"):
                assert np.any(g != 0.0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, small_cfg):
        params = m.init_params(small_cfg, 11)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, {"cfg": small_cfg.to_dict(), "epoch": 3})
        loaded, meta = load_checkpoint(path)
        assert meta["epoch"] == 3
        assert meta["cfg"]["layers"] == 2
        assert loaded.keys() == params.keys()
        for k in params:
            assert np.array_equal(loaded[k], params[k])

    def test_identical_state_identical_bytes(self, tmp_path, small_cfg):
        params = m.init_params(small_cfg, 11)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, params, {"x": 1})
        save_checkpoint(p2, params, {"x": 1})
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"nope" + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_checkpoint(path)
