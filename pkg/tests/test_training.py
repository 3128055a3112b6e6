import numpy as np
import pytest

from punctasr import model as m
from punctasr.corpus import TranscriptPair
from punctasr.ctc import ctc_loss, random_lattice
from punctasr.training import (
    PLANS,
    AdamConfig,
    AdamState,
    LabelPlan,
    LossWeights,
    TrainConfig,
    adam_step,
    make_targets,
    model_config_for_plan,
    total_loss,
    train,
    unpnct_in_punct_ids,
)
from punctasr.vocab import build_vocab


@pytest.fixture
def vocab():
    return build_vocab(["yes", "it", "is", "go", "no"])


@pytest.fixture
def pair(vocab):
    y = vocab.encode(["yes", ",", "it", "is", "."])
    from punctasr.corpus import make_pair

    return make_pair(y, vocab)


def lattices(vocab, T=12, seed=0):
    rng = np.random.default_rng(seed)
    return (
        random_lattice(T, vocab.size, rng),
        random_lattice(T, vocab.unpunctuated().size, rng),
    )


class TestLabelPlan:
    def test_multitask_requires_no_middle(self):
        with pytest.raises(ValueError):
            LabelPlan("multitask", "unpnct")

    def test_all_six_table_rows_present(self):
        assert len(PLANS) == 6
        combos = {(p.last, p.middle) for p in PLANS.values()}
        assert ("pnct", "unpnct") in combos
        assert ("pnct", "pnct") in combos
        assert ("pnct", "none") in combos
        assert ("unpnct", "none") in combos
        assert ("unpnct", "unpnct") in combos
        assert ("multitask", "none") in combos

    def test_unknown_values_rejected(self):
        with pytest.raises(ValueError):
            LabelPlan("weird", "none")
        with pytest.raises(ValueError):
            LabelPlan("pnct", "weird")


class TestTotalLoss:
    def test_zero_inter_weight_is_final_only(self, vocab, pair):
        lat_f, lat_m = lattices(vocab)
        targets = make_targets(pair, PLANS["proposed"], vocab)
        w = LossWeights(lambda_ctc=0.7, lambda_inter=0.0)
        loss, gf, gm, ok = total_loss(lat_f, lat_m, targets, w)
        assert ok
        assert loss == pytest.approx(0.7 * ctc_loss(lat_f, pair.y_pnct))
        assert np.all(gm == 0.0)

    def test_equal_weights_equal_losses(self, vocab, pair):
        # with lambda = 0.5/0.5 and equal per-head losses v, total = v
        lat_f, lat_m = lattices(vocab)
        targets = make_targets(pair, PLANS["proposed"], vocab)
        loss, _, _, _ = total_loss(lat_f, lat_m, targets, LossWeights())
        lf = ctc_loss(lat_f, pair.y_pnct)
        lm = ctc_loss(lat_m, pair.y_unpnct)
        assert loss == pytest.approx(0.5 * lf + 0.5 * lm)

    def test_linearity_in_weights(self, vocab, pair):
        lat_f, lat_m = lattices(vocab)
        targets = make_targets(pair, PLANS["proposed"], vocab)
        l00 = total_loss(lat_f, lat_m, targets, LossWeights(0.0, 0.0))[0]
        l10 = total_loss(lat_f, lat_m, targets, LossWeights(1.0, 0.0))[0]
        l01 = total_loss(lat_f, lat_m, targets, LossWeights(0.0, 1.0))[0]
        l_mix = total_loss(lat_f, lat_m, targets, LossWeights(0.3, 0.9))[0]
        assert l00 == 0.0
        assert l_mix == pytest.approx(0.3 * l10 + 0.9 * l01)

    def test_gradient_matches_finite_differences(self, vocab, pair):
        lat_f, lat_m = lattices(vocab)
        targets = make_targets(pair, PLANS["proposed"], vocab)
        w = LossWeights(0.6, 0.4)
        _, gf, gm, _ = total_loss(lat_f, lat_m, targets, w)
        rng = np.random.default_rng(1)
        eps = 1e-6
        for lat, g in ((lat_f, gf), (lat_m, gm)):
            for _ in range(6):
                t = int(rng.integers(lat.shape[0]))
                v = int(rng.integers(lat.shape[1]))
                up, dn = lat.copy(), lat.copy()
                up[t, v] += eps
                dn[t, v] -= eps
                fd = (
                    total_loss(up if lat is lat_f else lat_f,
                               up if lat is lat_m else lat_m, targets, w)[0]
                    - total_loss(dn if lat is lat_f else lat_f,
                                 dn if lat is lat_m else lat_m, targets, w)[0]
                ) / (2 * eps)
                assert g[t, v] == pytest.approx(fd, rel=1e-6, abs=1e-8)

    def test_multitask_is_mean_of_both_targets(self, vocab, pair):
        plan = PLANS["e2e_multitask"]
        lat_f, lat_m = lattices(vocab)
        targets = make_targets(pair, plan, vocab)
        loss, _, gm, _ = total_loss(lat_f, lat_m, targets, LossWeights(1.0, 0.5))
        both = 0.5 * ctc_loss(lat_f, pair.y_pnct) + 0.5 * ctc_loss(
            lat_f, unpnct_in_punct_ids(pair, vocab)
        )
        assert loss == pytest.approx(both)
        assert np.all(gm == 0.0)  # no middle target

    def test_infeasible_target_flags_skip(self, vocab, pair):
        lat_f, lat_m = lattices(vocab, T=2)
        targets = make_targets(pair, PLANS["proposed"], vocab)
        loss, gf, gm, ok = total_loss(lat_f, lat_m, targets, LossWeights())
        assert not ok and loss == float("inf")
        assert np.all(gf == 0.0) and np.all(gm == 0.0)


class TestAdam:
    def test_zero_gradient_no_change(self):
        params = {"w": np.ones(4)}
        grads = {"w": np.zeros(4)}
        state = AdamState.for_params(params)
        adam_step(params, grads, state, AdamConfig(lr=0.1))
        assert np.array_equal(params["w"], np.ones(4))

    def test_first_step_is_signed_stepsize(self):
        params = {"w": np.zeros(3)}
        grads = {"w": np.array([2.0, -0.5, 1e-3])}
        state = AdamState.for_params(params)
        adam_step(params, grads, state, AdamConfig(lr=0.01))
        # bias-corrected first step ~ -lr * sign(g)
        assert params["w"] == pytest.approx([-0.01, 0.01, -0.01], rel=1e-3)

    def test_nonfinite_gradient_rejected(self):
        params = {"w": np.ones(2)}
        grads = {"w": np.array([np.nan, 1.0])}
        state = AdamState.for_params(params)
        with pytest.warns(UserWarning):
            applied = adam_step(params, grads, state, AdamConfig())
        assert not applied
        assert np.array_equal(params["w"], np.ones(2))
        assert state.t == 0

    def test_quadratic_bowl_converges(self):
        params = {"w": np.array([3.0, -2.0])}
        state = AdamState.for_params(params)
        cfg = AdamConfig(lr=0.05)
        for _ in range(500):
            grads = {"w": 2.0 * params["w"]}
            adam_step(params, grads, state, cfg)
        assert float((params["w"] ** 2).sum()) < 1e-6


def tiny_dataset(vocab, n=6, seed=0):
    from punctasr.corpus import make_pair
    from punctasr.features import SynthConfig, synthesize, word_prototypes

    rng = np.random.default_rng(seed)
    cfg = SynthConfig(dim=6, frames_per_word=(3, 3),
                      pause_frames={",": (2, 2), ".": (2, 2), "?": (2, 2)},
                      noise_std=0.05)
    protos = word_prototypes(vocab, cfg)
    words = [i for i in range(vocab.size) if i and not vocab.is_punct(i)]
    data = []
    for _ in range(n):
        y = []
        for k in range(int(rng.integers(2, 4))):
            y.append(int(rng.choice(words)))
        y.append(vocab.stoi["."])
        pair = make_pair(y, vocab)
        x = synthesize(y, vocab, cfg, protos, rng)
        data.append((x, pair))
    return data


def tiny_model_cfg():
    return m.ModelConfig(layers=2, hidden=16, heads=2, ff=32, input_dim=6,
                         stride=2, max_positions=64)


class TestTrainLoop:
    def test_overfit_tiny_corpus(self, vocab):
        data = tiny_dataset(vocab, n=4)
        cfg = TrainConfig(epochs=200, batch_size=4, adam=AdamConfig(lr=3e-3),
                          warmup_steps=10, seed=0, time_masks=0, freq_masks=0,
                          patience=100, eval_every_epoch=False)
        result = train(data, data, vocab, tiny_model_cfg(), cfg)
        steps = [r for r in result.log if r["kind"] == "step"]
        first, last = steps[0]["loss"], steps[-1]["loss"]
        assert last < 0.1 * first

    def test_deterministic_given_seed(self, vocab):
        data = tiny_dataset(vocab, n=6)
        cfg = TrainConfig(epochs=3, batch_size=3, seed=7, patience=10,
                          eval_every_epoch=False)
        a = train(data, data[:2], vocab, tiny_model_cfg(), cfg)
        b = train(data, data[:2], vocab, tiny_model_cfg(), cfg)
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])
        assert a.log == b.log

    def test_resume_reproduces_uninterrupted_run(self, vocab):
        data = tiny_dataset(vocab, n=6)
        base = dict(batch_size=3, seed=3, patience=100, eval_every_epoch=False)
        full = train(data, data[:2], vocab, tiny_model_cfg(),
                     TrainConfig(epochs=4, **base))
        half = train(data, data[:2], vocab, tiny_model_cfg(),
                     TrainConfig(epochs=2, **base))
        resumed = train(data, data[:2], vocab, tiny_model_cfg(),
                        TrainConfig(epochs=4, **base),
                        init=(half.params, half.state), start_epoch=2)
        for k in full.params:
            assert np.allclose(full.params[k], resumed.params[k], atol=1e-12)

    def test_skip_accounting(self, vocab):
        data = tiny_dataset(vocab, n=6)
        # one impossibly short utterance gets skipped every epoch
        x, pair = data[0]
        data[0] = (x[:2], pair)
        cfg = TrainConfig(epochs=2, batch_size=3, seed=0, patience=10,
                          eval_every_epoch=False)
        with pytest.warns(UserWarning):
            result = train(data, data[1:3], vocab, tiny_model_cfg(), cfg)
        for rec in result.log:
            if rec["kind"] == "epoch":
                assert rec["skipped"] == 1
                assert rec["skipped"] + rec["processed"] == len(data)

    def test_zero_inter_weight_leaves_mid_head_at_init(self, vocab):
        data = tiny_dataset(vocab, n=4)
        cfg = TrainConfig(epochs=2, batch_size=4, seed=0,
                          weights=LossWeights(1.0, 0.0), patience=10,
                          eval_every_epoch=False)
        result = train(data, data, vocab, tiny_model_cfg(), cfg)
        plan = PLANS[cfg.plan]
        model_cfg = model_config_for_plan(tiny_model_cfg(), plan, vocab)
        init = m.init_params(model_cfg, cfg.seed)
        for k in result.params:
            if k.startswith("head_mid."):
                assert np.array_equal(result.params[k], init[k])
            elif k.startswith("head_final.W"):
                assert not np.array_equal(result.params[k], init[k])

    def test_invalid_plan_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(plan="nope")
