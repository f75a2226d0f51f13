import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msg import numerics as nx
from msg.corpus import PAD, SOS, UNK
from msg.generator import attend_view, decoder_step, gate_sentences, initial_state, reweight_doc_attention
from msg.numerics import Tensor

from conftest import batch_of, tiny_model


def _t(x):
    return Tensor(np.asarray(x, dtype=np.float64), dtype=np.float64)


def _view_params(rng, d_s=4, a=3):
    return dict(W_s=_t(rng.normal(size=(d_s, a))), b=_t(rng.normal(size=a)), w=_t(rng.normal(size=(a, 1))),
                w_cov=_t(rng.normal(size=a)))


class TestAttendView:
    def test_zero_coverage_reduces_to_plain_attention(self, rng):
        keys, s = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 4))
        p = _view_params(rng)
        mask = np.ones((2, 5))
        with nx.precision(np.float64):
            e, alpha = attend_view(_t(keys), _t(s), _t(np.zeros((2, 5))), mask, **p)
        pre = keys + (s @ p["W_s"].data + p["b"].data)[:, None, :]
        expect = (np.tanh(pre) @ p["w"].data)[..., 0]
        np.testing.assert_allclose(e.data, expect, rtol=1e-12)
        np.testing.assert_allclose(alpha.data.sum(-1), 1.0, atol=1e-12)

    def test_singleton(self, rng):
        mask = np.array([[0.0, 1.0, 0.0]])
        with nx.precision(np.float64):
            _, alpha = attend_view(_t(rng.normal(size=(1, 3, 3))), _t(rng.normal(size=(1, 4))),
                                   _t(np.zeros((1, 3))), mask, **_view_params(rng))
        np.testing.assert_array_equal(alpha.data, [[0.0, 1.0, 0.0]])

    def test_negative_coverage_weight_lowers_score(self, rng):
        p = _view_params(rng)
        p["w_cov"] = _t(-np.abs(p["w_cov"].data))
        p["w"] = _t(np.abs(p["w"].data))
        keys, s = _t(rng.normal(size=(1, 4, 3))), _t(rng.normal(size=(1, 4)))
        mask = np.ones((1, 4))
        with nx.precision(np.float64):
            base, _ = attend_view(keys, s, _t(np.zeros((1, 4))), mask, **p)
            more, _ = attend_view(keys, s, _t([[0.0, 0.7, 0.0, 0.0]]), mask, **p)
        assert more.data[0, 1] < base.data[0, 1]
        np.testing.assert_array_equal(np.delete(more.data, 1), np.delete(base.data, 1))


class TestGateSentences:
    def test_zero_parameters_give_half(self):
        z = np.zeros((1, 3, 4))
        with nx.precision(np.float64):
            beta = gate_sentences(_t(z), _t(np.ones((1, 5))), np.ones((1, 3)), _t(np.zeros((5, 4))),
                                  _t(np.zeros(4)), _t(np.zeros((4, 1))))
        np.testing.assert_array_equal(beta.data, [[0.5, 0.5, 0.5]])

    def test_sigmoid_gates_are_independent(self, rng):
        z = rng.normal(size=(1, 3, 4))
        args = (_t(rng.normal(size=(1, 5))), np.ones((1, 3)), _t(rng.normal(size=(5, 4))), _t(rng.normal(size=4)),
                _t(rng.normal(size=(4, 1))))
        z2 = z.copy()
        z2[0, 2] += 5.0
        with nx.precision(np.float64):
            a = gate_sentences(_t(z), *args).data
            b = gate_sentences(_t(z2), *args).data
        np.testing.assert_array_equal(a[0, :2], b[0, :2])
        assert a[0, 2] != b[0, 2]

    def test_softmax_mode_sums_to_one(self, rng):
        mask = np.array([[1.0, 1.0, 1.0, 0.0]])
        with nx.precision(np.float64):
            beta = gate_sentences(_t(rng.normal(size=(1, 4, 4))), _t(rng.normal(size=(1, 5))), mask,
                                  _t(rng.normal(size=(5, 4))), _t(rng.normal(size=4)), _t(rng.normal(size=(4, 1))),
                                  mode="softmax")
        assert beta.data.sum() == pytest.approx(1.0, abs=1e-12)
        assert beta.data[0, 3] == 0.0

    def test_unknown_mode(self, rng):
        with pytest.raises(ValueError):
            gate_sentences(_t(np.zeros((1, 2, 2))), _t(np.zeros((1, 2))), np.ones((1, 2)), _t(np.zeros((2, 2))),
                           _t(np.zeros(2)), _t(np.zeros((2, 1))), mode="tanh")


class TestReweight:
    def test_hand_example(self):
        with nx.precision(np.float64):
            out = reweight_doc_attention(_t([[0.2, 0.3, 0.5]]), _t([[0.8, 0.2]]), np.array([0, 0, 1]))
        np.testing.assert_allclose(out.data, [[0.32, 0.48, 0.20]], rtol=1e-12)

    def test_constant_gate_cancels(self, rng):
        alpha = rng.dirichlet(np.ones(6), size=2)
        with nx.precision(np.float64):
            out = reweight_doc_attention(_t(alpha), _t(np.full((2, 3), 0.37)), np.repeat(np.arange(3), 2))
        np.testing.assert_allclose(out.data, alpha, atol=1e-7)

    def test_closed_gate_moves_all_mass(self):
        with nx.precision(np.float64):
            out = reweight_doc_attention(_t([[0.1, 0.2, 0.3, 0.4]]), _t([[1.0, 0.0]]), np.array([0, 0, 1, 1]))
        np.testing.assert_allclose(out.data, [[1 / 3, 2 / 3, 0.0, 0.0]], rtol=1e-12)

    def test_underflow_falls_back_and_counts(self):
        diag = {}
        with nx.precision(np.float64):
            out = reweight_doc_attention(_t([[0.5, 0.5], [0.5, 0.5]]), _t([[0.0, 0.0], [1.0, 1.0]]),
                                         np.array([0, 1]), diag)
        np.testing.assert_array_equal(out.data, [[0.5, 0.5], [0.5, 0.5]])
        assert diag["gate_fallbacks"] == 1


def _step(model, batch, prev=None, state=None):
    encoded = model.encode(batch)
    state = state or initial_state(encoded.ctx, model.params)
    prev = np.full(batch.size, SOS) if prev is None else prev
    with nx.precision(model.dtype):
        return decoder_step(prev, state, encoded.ctx, model.params), encoded


class TestDecoderStep:
    def test_pure_generation(self, copy_examples, copy_vocab):
        m = tiny_model(copy_vocab, dtype="float64")
        m.params["ptr.W"].data[:] = 0
        m.params["ptr.b"].data[:] = [60.0, -60.0, -60.0]
        batch = batch_of(copy_examples[:2], copy_vocab)
        (out, _), _ = _step(m, batch)
        V = len(copy_vocab)
        np.testing.assert_allclose(out.p_final.data[:, :V], out.p_vocab.data, atol=1e-12)
        assert np.all(out.p_final.data[:, V:] < 1e-40)

    def test_pure_copy_of_oov(self):
        from msg import RawExample, build_vocab

        ex = RawExample("x", "what ?", ["zorp"], "zorp")
        vocab = build_vocab([RawExample("v", "what ?", ["what"], "what")])
        m = tiny_model(vocab, dtype="float64")
        m.params["ptr.W"].data[:] = 0
        m.params["ptr.b"].data[:] = [-60.0, -60.0, 60.0]
        batch = batch_of([ex], vocab)
        (out, _), _ = _step(m, batch)
        assert batch.oovs == [["zorp"]]
        assert out.p_final.data[0, len(vocab)] == pytest.approx(1.0, abs=1e-12)

    def test_repeated_document_word_sums_positions(self, copy_examples, copy_vocab):
        from msg import RawExample

        word = copy_examples[0].document[0].split()[0]
        ex = RawExample("r", "what about it ?", [f"{word} {word} ."], word)
        m = tiny_model(copy_vocab, dtype="float64")
        batch = batch_of([ex], copy_vocab)
        (out, _), _ = _step(m, batch)
        a = out.alpha_d_hat.data[0]
        assert out.p_d.data[0, copy_vocab.stoi[word]] == pytest.approx(a[0] + a[1], abs=1e-12)

    def test_pad_never_gets_probability(self, copy_examples, copy_vocab):
        m = tiny_model(copy_vocab)
        (out, _), _ = _step(m, batch_of(copy_examples[:4], copy_vocab))
        assert np.all(out.p_final.data[:, PAD] == 0)

    def test_question_pointer_off(self, copy_examples, copy_vocab):
        m = tiny_model(copy_vocab, question_pointer=False, dtype="float64")
        (out, _), _ = _step(m, batch_of(copy_examples[:3], copy_vocab))
        np.testing.assert_array_equal(out.rho.data[:, 1], 0.0)
        np.testing.assert_allclose(out.rho.data.sum(-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(out.p_final.data.sum(-1), 1.0, atol=1e-12)

    def test_coverage_accumulates_attention(self, copy_examples, copy_vocab):
        m = tiny_model(copy_vocab, dtype="float64")
        batch = batch_of(copy_examples[:3], copy_vocab)
        encoded = m.encode(batch)
        state = initial_state(encoded.ctx, m.params)
        prev = np.full(batch.size, SOS)
        for t in range(1, 5):
            out, nxt = decoder_step(prev, state, encoded.ctx, m.params)
            assert np.all(nxt.cov_d.data >= state.cov_d.data)
            np.testing.assert_allclose(nxt.cov_q.data.sum(-1), t, atol=1e-4)
            np.testing.assert_allclose(nxt.cov_d.data.sum(-1), t, atol=1e-4)
            prev, state = np.argmax(out.p_vocab.data, -1), nxt

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), gate=st.sampled_from(["sigmoid", "softmax"]))
    def test_distributions_normalise(self, seed, gate):
        from msg import build_vocab
        from msg.cli.fixtures import make_fixture

        exs = make_fixture("multihop", 3, seed=seed)
        vocab = build_vocab(exs, max_size=30)
        m = tiny_model(vocab, seed=seed, gate=gate, init_range=1.0)
        batch = batch_of(exs, vocab)
        (out, _), _ = _step(m, batch, prev=np.full(3, UNK))
        real_d = batch.d_mask.reshape(3, -1) > 0
        for name in ("alpha_q", "alpha_d", "alpha_d_hat", "rho"):
            np.testing.assert_allclose(getattr(out, name).data.sum(-1), 1.0, atol=1e-6)
        assert np.all(out.alpha_d_hat.data[~real_d] == 0)
        np.testing.assert_allclose(out.p_d.data.sum(-1), 1.0, atol=1e-5)
        assert np.all(out.p_final.data >= 0)
        np.testing.assert_allclose(out.p_final.data.sum(-1), 1.0, atol=1e-5)

    def test_three_step_unroll_gradient(self, copy_examples, copy_vocab):
        m = tiny_model(copy_vocab, dtype="float64", init_range=0.5, hops=2)
        batch = batch_of(copy_examples[:2], copy_vocab)
        steps_in = batch.dec_in[:, :3]

        def closure():
            encoded = m.encode(batch)
            state = initial_state(encoded.ctx, m.params)
            total = None
            for t in range(3):
                out, state = decoder_step(steps_in[:, t], state, encoded.ctx, m.params)
                term = nx.log(nx.gather(out.p_final, batch.target[:, t])).sum()
                total = term if total is None else total + term
            return total * -1.0

        with nx.precision(np.float64):
            err = nx.grad_check(closure, m.params, eps=1e-3, samples_per_param=3, rng=np.random.default_rng(0))
        assert float(err) < 1e-4
