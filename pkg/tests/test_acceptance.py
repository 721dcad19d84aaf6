"""Top-level acceptance suite.

Each test implements one numbered acceptance criterion end to end, at the
stated tolerances, independent of the per-module unit tests:

1. scan-mode equivalence      5. constant-memory streaming
2. gradient fidelity          6. end-to-end toy training
3. STFT round trip            7. loss bookkeeping identity
4. metric sanity              8. reproducibility and formats
"""

import itertools
import time

import numpy as np
import pytest

from aeromamba import autodiff as ad
from aeromamba import ssm
from aeromamba.dsp import (AudioBuffer, StftConfig, degrade, istft_array, lsd,
                           mann_whitney_u, stft_array)
from aeromamba.infer import (StreamSession, attention_activation_bytes,
                             enhance_array, load_model)
from aeromamba.model import (GeneratorConfig, GeneratorInference,
                             config_to_text, init_params, load_checkpoint,
                             save_checkpoint)
from aeromamba.train import (TrainConfig, fit, hf_energy_fraction,
                             paired_dataset, split_pairs, synth_dataset)

EPS = 1e-5
GRAD_TOL = 1e-4


def max_rel_err(a, b):
    return np.max(np.abs(a - b)
                  / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


# ---------------------------------------------------------------------------
# criterion 1: scan-mode equivalence
# ---------------------------------------------------------------------------

def random_scan_params(rng, d_inner, d_state):
    d_rank = int(rng.integers(1, d_inner + 1))
    return ssm.SsmParams(
        A_log=rng.normal(0.0, 0.5, size=(d_inner, d_state)),
        D=rng.normal(size=d_inner),
        W_B=rng.normal(0.0, 0.5, size=(d_state, d_inner)),
        W_C=rng.normal(0.0, 0.5, size=(d_state, d_inner)),
        W_delta_down=rng.normal(0.0, 0.5, size=(d_rank, d_inner)),
        W_delta_up=rng.normal(0.0, 0.5, size=(d_inner, d_rank)),
        b_delta=rng.normal(size=d_inner),
    )


def test_criterion_1_scan_mode_equivalence():
    started = time.monotonic()
    rng = np.random.default_rng(2024)
    for instance in range(100):
        d_inner = int(rng.integers(1, 9))
        d_state = int(rng.integers(1, 17))
        length = 4096 if instance < 5 else int(rng.integers(251, 4097))
        params = random_scan_params(rng, d_inner, d_state)
        x = rng.normal(size=(length, d_inner))

        y_seq, h_seq = ssm.scan_sequential(params, x)
        for chunk_len in (1, 3, 64, 250, length):
            y_c, h_c = ssm.scan_chunked(params, x, chunk_len=chunk_len)
            assert np.max(np.abs(y_c - y_seq)) <= 1e-10, (instance, chunk_len)
            assert np.max(np.abs(h_c.h - h_seq.h)) <= 1e-10

        state = ssm.init_state(params)
        y_step = np.empty_like(x)
        for t in range(length):
            y_step[t], state = ssm.scan_step(params, x[t], state)
        np.testing.assert_array_equal(y_step, y_seq)
        np.testing.assert_array_equal(state.h, h_seq.h)
    assert time.monotonic() - started <= 60.0


# ---------------------------------------------------------------------------
# criterion 2: gradient fidelity
# ---------------------------------------------------------------------------

def check_gradients(build, shapes, instances=20, rng_seed=0):
    rng = np.random.default_rng(rng_seed)
    for trial in range(instances):
        vals = [rng.normal(size=shape) for shape in shapes]
        tensors = [ad.parameter(v.copy()) for v in vals]
        out = build(*tensors)
        weight = rng.normal(size=out.data.shape)
        ad.backward(ad.sum_(ad.mul(out, ad.const(weight))))
        analytic = [t.grad for t in tensors]

        def scalar():
            return float(np.sum(build(*[ad.const(v) for v in vals]).data
                                * weight))

        for i, v in enumerate(vals):
            fd = np.zeros_like(v)
            it = np.nditer(v, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = v[idx]
                v[idx] = orig + EPS
                up = scalar()
                v[idx] = orig - EPS
                dn = scalar()
                v[idx] = orig
                fd[idx] = (up - dn) / (2 * EPS)
                it.iternext()
            assert analytic[i] is not None, (build, i)
            assert max_rel_err(analytic[i], fd) <= GRAD_TOL, (build, i, trial)


SMALL_STFT = StftConfig(16, 8)

GRAD_CASES = [
    ("add", ad.add, [(3, 4), (3, 4)]),
    ("add_broadcast", ad.add, [(2, 5), (5,)]),
    ("sub", ad.sub, [(6,), (6,)]),
    ("mul", ad.mul, [(2, 3), (2, 3)]),
    ("scale", lambda a: ad.scale(a, -2.5), [(4, 4)]),
    ("log", lambda a: ad.log(ad.mul(a, a), eps=1e-3), [(8,)]),
    ("sqrt", lambda a: ad.sqrt(ad.mul(a, a), eps=1e-3), [(8,)]),
    ("sigmoid", ad.sigmoid, [(10,)]),
    ("silu", ad.silu, [(10,)]),
    ("softplus", ad.softplus, [(10,)]),
    ("relu", ad.relu, [(20,)]),
    ("leaky_relu", lambda a: ad.leaky_relu(a, 0.2), [(20,)]),
    ("glu", lambda a: ad.glu(a, axis=1), [(2, 6, 3)]),
    ("rms_norm", ad.rms_norm, [(3, 7), (7,)]),
    ("reshape", lambda a: ad.reshape(a, (6, 2)), [(3, 4)]),
    ("moveaxis", lambda a: ad.moveaxis(a, 1, 2), [(2, 3, 4)]),
    ("concat", lambda a, b: ad.concat([a, b], axis=1), [(2, 3), (2, 2)]),
    ("slice", lambda a: ad.slice_(a, (slice(None), slice(1, 3))), [(2, 5)]),
    ("pad_last", lambda a: ad.pad_last(a, 2, 3), [(2, 4)]),
    ("sum", ad.sum_, [(3, 4)]),
    ("sum_axis", lambda a: ad.sum_(a, axis=1), [(3, 4)]),
    ("mean", ad.mean, [(3, 4)]),
    ("mean_axis", lambda a: ad.mean(a, axis=0), [(3, 4)]),
    ("l1", ad.l1, [(4, 5), (4, 5)]),
    ("linear", ad.linear, [(4, 5), (3, 5), (3,)]),
    ("conv1d", lambda x, w, b: ad.conv1d(x, w, b, stride=1, padding=1),
     [(2, 3, 8), (4, 3, 3), (4,)]),
    ("conv1d_grouped",
     lambda x, w: ad.conv1d(x, w, stride=2, padding=2, groups=2),
     [(2, 4, 10), (6, 2, 4)]),
    ("conv_transpose1d",
     lambda x, w, b: ad.conv_transpose1d(x, w, b, stride=2),
     [(2, 3, 5), (3, 4, 4), (4,)]),
    ("depthwise_causal_conv1d", ad.depthwise_causal_conv1d,
     [(2, 3, 6), (3, 4), (3,)]),
    ("avg_pool1d", lambda x: ad.avg_pool1d(x, kernel=4, stride=2, padding=1),
     [(2, 3, 9)]),
    ("stft", lambda x: ad.stft_op(x, SMALL_STFT), [(1, 40)]),
    ("istft",
     lambda s: ad.istft_op(s, SMALL_STFT,
                           40), [(1, 2, SMALL_STFT.num_frames(40), 9)]),
]


@pytest.mark.parametrize("name,build,shapes",
                         GRAD_CASES, ids=[c[0] for c in GRAD_CASES])
def test_criterion_2_op_gradients(name, build, shapes):
    check_gradients(build, shapes)


def test_criterion_2_scan_backward_gradients():
    rng = np.random.default_rng(7)
    for _ in range(20):
        d_inner = int(rng.integers(2, 5))
        d_state = int(rng.integers(2, 4))
        params = random_scan_params(rng, d_inner, d_state)
        length = int(rng.integers(8, 17))
        x = rng.normal(size=(length, d_inner))
        h0 = rng.normal(size=(d_inner, d_state))
        grad_y = rng.normal(size=(length, d_inner))
        _, _, saved = ssm.scan_sequential(params, x,
                                          ssm.SsmState(h=h0.copy()), save=True)
        got = ssm.scan_backward(params, grad_y, saved)

        def loss():
            y, _ = ssm.scan_sequential(params, x, ssm.SsmState(h=h0.copy()))
            return float(np.sum(grad_y * y))

        targets = {f: getattr(params, f)
                   for f in ("A_log", "D", "W_B", "W_C", "W_delta_down",
                             "W_delta_up", "b_delta")}
        targets["x"] = x
        targets["h0"] = h0
        for key, arr in targets.items():
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + EPS
                up = loss()
                arr[idx] = orig - EPS
                dn = loss()
                arr[idx] = orig
                fd[idx] = (up - dn) / (2 * EPS)
                it.iternext()
            assert max_rel_err(got[key], fd) <= GRAD_TOL, key


# ---------------------------------------------------------------------------
# criterion 3: STFT round trip
# ---------------------------------------------------------------------------

def test_criterion_3_stft_round_trip():
    config = StftConfig(512, 256)
    rng = np.random.default_rng(33)
    for _ in range(50):
        length = int(rng.integers(300, 50001))
        x = rng.normal(size=length)
        back = istft_array(stft_array(x, config), config, length)
        assert np.max(np.abs(back - x)) <= 1e-6


# ---------------------------------------------------------------------------
# criterion 4: metric sanity
# ---------------------------------------------------------------------------

def brute_force_mw(a, b):
    combined = np.concatenate([a, b])
    n, na = combined.size, len(a)
    order = np.argsort(combined, kind="stable")
    ranks = np.empty(n)
    sv = combined[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    u_obs = ranks[:na].sum() - na * (na + 1) / 2
    mean_u = na * (n - na) / 2
    devs = np.array([abs(ranks[list(idx)].sum() - na * (na + 1) / 2 - mean_u)
                     for idx in itertools.combinations(range(n), na)])
    return u_obs, float(np.mean(devs >= abs(u_obs - mean_u) - 1e-12))


class TestCriterion4MetricSanity:
    def test_lsd_identity(self):
        x = AudioBuffer(samples=np.random.default_rng(4).standard_normal(
            (1, 44100)), sample_rate=44100)
        assert lsd(x, x) == 0.0

    def test_lsd_power_ratio_fixture(self):
        x = AudioBuffer(samples=np.random.default_rng(5).standard_normal(
            (1, 44100)), sample_rate=44100)
        y = AudioBuffer(samples=x.samples * np.sqrt(10.0), sample_rate=44100)
        assert abs(lsd(x, y) - 1.0) <= 1e-6

    def test_mann_whitney_matches_enumeration(self):
        rng = np.random.default_rng(6)
        for na in range(1, 7):
            for nb in range(1, 7):
                for _ in range(3):
                    # small integer values force ties through midranks
                    a = rng.integers(0, 4, size=na).astype(float)
                    b = rng.integers(0, 4, size=nb).astype(float)
                    result = mann_whitney_u(a, b)
                    u_ref, p_ref = brute_force_mw(a, b)
                    assert result.U == u_ref
                    assert abs(result.p_two_sided - p_ref) <= 1e-12


# ---------------------------------------------------------------------------
# criterion 5: constant-memory streaming
# ---------------------------------------------------------------------------

class TestCriterion5ConstantMemory:
    def test_persistent_bytes_across_durations(self):
        cfg = GeneratorConfig()
        model = GeneratorInference(cfg, init_params(cfg, seed=0))
        rng = np.random.default_rng(8)
        sizes = set()
        for seconds in (1, 10, 100):
            session = StreamSession(model)
            x = rng.normal(0, 0.1, size=seconds * 44100)
            pos = 0
            while pos < x.size:
                session.process(x[pos:pos + session.chunk_samples])
                pos += session.chunk_samples
                sizes.add(session.persistent_bytes())
            if not session._finished:
                session.flush()
            sizes.add(session.persistent_bytes())
        assert len(sizes) == 1

    def test_attention_contrast_strictly_increases(self):
        cfg = GeneratorConfig()
        width = cfg.channels[1]
        footprints = [attention_activation_bytes(
            cfg.stft.num_frames(seconds * 44100), width)
            for seconds in (1, 2, 5, 10, 20)]
        assert all(a < b for a, b in zip(footprints, footprints[1:]))


# ---------------------------------------------------------------------------
# criteria 6 + 7: end-to-end toy training and loss bookkeeping
# ---------------------------------------------------------------------------

TOY_CFG = TrainConfig(epochs=25, batch_size=2, val_every=50, seed=0)


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    tracks = synth_dataset(seed=7, n_tracks=16, seconds=20.0)
    out_dir = tmp_path_factory.mktemp("toy_run")
    result = fit(TOY_CFG, tracks, out_dir=out_dir)
    return tracks, result


def test_criterion_6_toy_training_improves_lsd(toy_run):
    tracks, result = toy_run
    assert result.steps <= 2000
    assert result.best_val_lsd <= 0.85 * result.baseline_lsd

    # enhanced output must restore energy above 5.5 kHz
    model = load_model(result.best_checkpoint)
    _, val_pairs = split_pairs(paired_dataset(tracks, TOY_CFG.low_rate),
                               TOY_CFG.val_fraction)
    for low, _ in val_pairs:
        enhanced = enhance_array(model, low)

        def band_energy_db(x):
            fraction = hf_energy_fraction(x, tracks[0].sample_rate)
            return 10.0 * np.log10(max(fraction * np.sum(x ** 2), 1e-30))

        assert band_energy_db(enhanced) - band_energy_db(low) >= 10.0


def test_criterion_7_loss_identity_every_step(toy_run):
    _, result = toy_run
    lines = result.metrics_csv.read_text().strip().split("\n")
    assert lines[0].startswith("step,L_G,L_adv,L_rec,L_fmap")
    assert len(lines) - 1 == result.steps
    for line in lines[1:]:
        parts = line.split(",")
        l_g, l_adv, l_rec, l_fmap = (float(v) for v in parts[1:5])
        expected = l_adv + l_rec + 100.0 * l_fmap
        assert abs(l_g - expected) <= 1e-9 * max(1.0, abs(expected))


# ---------------------------------------------------------------------------
# criterion 8: reproducibility and formats
# ---------------------------------------------------------------------------

SMALL_GEN = GeneratorConfig(window_size=64, hop_size=32, depth=2,
                            base_channels=4, channel_cap=8, stride=4,
                            d_state=4)


class TestCriterion8Reproducibility:
    def test_same_seed_training_is_identical(self, tmp_path):
        cfg = TrainConfig(epochs=3, batch_size=2, segment_length=3072,
                          val_every=2, seed=5, generator=SMALL_GEN)
        tracks = synth_dataset(seed=1, n_tracks=2, seconds=0.25)
        csvs = [fit(cfg, tracks, out_dir=tmp_path / n).metrics_csv.read_text()
                for n in ("run_a", "run_b")]
        assert csvs[0] == csvs[1]

    def test_checkpoint_save_load_save_is_byte_identical(self, tmp_path):
        params = {k: v.astype(np.float32).astype(np.float64)
                  for k, v in init_params(SMALL_GEN, seed=3).items()}
        first = tmp_path / "first.ckpt"
        second = tmp_path / "second.ckpt"
        save_checkpoint(first, params, config_to_text(SMALL_GEN))
        tensors, text = load_checkpoint(first)
        save_checkpoint(second, tensors, text)
        assert first.read_bytes() == second.read_bytes()

    def test_offline_and_streaming_agree(self):
        cfg = GeneratorConfig()
        model = GeneratorInference(cfg, init_params(cfg, seed=0))
        x = np.random.default_rng(9).normal(0, 0.1, size=44100)
        offline = enhance_array(model, x)
        session = StreamSession(model)
        outs = []
        pos = 0
        while pos < x.size:
            outs.append(session.process(x[pos:pos + session.chunk_samples]))
            pos += session.chunk_samples
        if not session._finished:
            outs.append(session.flush())
        streamed = np.concatenate(outs)
        assert streamed.shape == offline.shape
        assert np.max(np.abs(streamed - offline)) <= 1e-4
