"""Acceptance criteria 1-11. Each test records a PASS/FAIL line shown in the terminal summary."""
import time

import numpy as np
import pytest

import gradcheck
from conftest import direct_dft, record
from freqstab.attack import find_minimal_noise
from freqstab.convnet import accuracy, predict_batch
from freqstab.dft import center_shift, dft2, dft3, magnitude
from freqstab.harness import SWEEP_SIGMAS, SweepConfig, run_sweep
from freqstab.reference import reference_data, reference_finetune, reference_model
from freqstab.report import attack_row, write_attack_csv, write_sweep_csv
from freqstab.spectrum import (centered_magnitude2, coverage, gaussian_kernel3, mean_spectrum,
                               noise_spectrum, reference_filter)
from freqstab.tensor import Rng, l2_norm

SWEEP_TRIALS = 20
SWEEP_SEED = 1
N_ATTACK = 10


def _timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def test_c01_dft_oracle():
    def run():
        rng = Rng(101)
        worst = 0.0
        for i in range(50):
            u = rng.uniform(4)
            if i % 2 == 0:
                h, w = 1 + int(u[0] * 16), 1 + int(u[1] * 16)
                pad = max(h, w) + int(u[2] * (17 - max(h, w)))
                f = rng.normal(h * w).reshape(h, w)
                err = np.abs(dft2(f, pad).values - direct_dft(f, (pad, pad))).max()
            else:
                d, h, w = 1 + int(u[0] * 3), 1 + int(u[1] * 8), 1 + int(u[2] * 8)
                pad = max(h, w) + int(u[3] * (9 - max(h, w)))
                f = rng.normal(d * h * w).reshape(d, h, w)
                err = np.abs(dft3(f, pad).values - direct_dft(f, (d, pad, pad))).max()
            worst = max(worst, err)
        return worst

    worst, secs = _timed(run)
    ok = worst < 1e-9 and secs < 10
    record(1, ok, f"max |dft - direct| = {worst:.2e} over 50 inputs, {secs:.2f}s")
    assert ok


def test_c02_linearity():
    def run():
        rng = Rng(202)
        worst = 0.0
        for _ in range(100):
            u = rng.uniform(3)
            h, w = 1 + int(u[0] * 16), 1 + int(u[1] * 16)
            f, r = rng.normal(h * w).reshape(h, w), rng.normal(h * w).reshape(h, w)
            a, b = 10 * rng.normal(2)
            pad = max(h, w) + int(u[2] * 8)
            lhs = dft2(a * f + b * r, pad).values
            rhs = a * dft2(f, pad).values + b * dft2(r, pad).values
            worst = max(worst, np.abs(lhs - rhs).max())
        return worst

    worst, secs = _timed(run)
    ok = worst < 1e-9 and secs < 5
    record(2, ok, f"max linearity residual = {worst:.2e}, {secs:.2f}s")
    assert ok


def test_c03_sobel_prewitt_contrast():
    def run():
        pad = 64
        s = centered_magnitude2(reference_filter("sobel_x"), pad)
        p = centered_magnitude2(reference_filter("prewitt_x"), pad)
        # centered row 0 is vertical frequency -1/2 (Nyquist); column pad/2 + pad/4 is +1/4 horizontally
        return np.abs(s[0]).max(), p[0].max(), p[0, pad // 2 + pad // 4]

    (s_max, p_max, p_quarter), secs = _timed(run)
    # separable analytic value: |1 + 2cos(pi)| * |2 sin(pi/2)| = 2
    ok = s_max <= 1e-12 and p_quarter >= 1.9 and abs(p_quarter - 2.0) < 1e-12 and secs < 1
    record(3, ok, f"sobel_x Nyquist row max = {s_max:.1e}, prewitt_x at quarter band = {p_quarter:.6f}, {secs:.3f}s")
    assert ok


def _nyquist_direct(k):
    """|sum_y sum_x k[y, x] (-1)^y| and the transposed counterpart, by explicit summation."""
    vert = sum(k[y, x] * (-1) ** y for y in range(3) for x in range(3))
    horiz = sum(k[y, x] * (-1) ** x for y in range(3) for x in range(3))
    return abs(vert), abs(horiz)


def test_c04_gaussian_response():
    def run():
        k = gaussian_kernel3(0.5)
        m = magnitude(center_shift(dft2(k, 64)))
        return k, m

    (k, m), secs = _timed(run)
    c = 32
    vert, horiz = _nyquist_direct(k)
    dc_ok = abs(m[c, c] - 1.0) < 1e-9
    nyq_ok = abs(m[0, c] - vert) < 1e-9 and abs(m[c, 0] - horiz) < 1e-9
    mono = all(np.all(np.diff(a) <= 1e-15) for a in (m[c, c:], m[c:, c], m[c, c::-1], m[c::-1, c]))
    ok = dc_ok and nyq_ok and mono and secs < 1
    record(4, ok, f"DC = {m[c, c]:.12f}, Nyquist = {m[0, c]:.9f} (direct {vert:.9f}), monotone = {mono}, {secs:.3f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="stated closed form 1-2(edge+corner)*2 equals the center weight, "
                                       "not the Nyquist magnitude 1-4*edge-8*corner")
def test_c04_stated_closed_form():
    k = gaussian_kernel3(0.5)
    m = magnitude(center_shift(dft2(k, 64)))
    edge, corner = k[0, 1], k[0, 0]
    assert abs(m[0, 32] - (1 - 2 * (edge + corner) * 2)) < 1e-9


def test_c05_gradient_checks():
    def run():
        worst, kinds, losses = 0.0, set(), set()
        for i in range(20):
            for loss_kind in ("softmax", "hinge"):
                act = ("relu", "tanh")[i % 2]
                m, x, y = gradcheck.random_model(500 + i, loss_kind, act)
                kinds.update(s.kind for s in m.layers)
                losses.add(m.loss_kind)
                worst = max(worst, gradcheck.check(m, x, y))
        return worst, kinds, losses

    (worst, kinds, losses), secs = _timed(run)
    ok = worst < 1e-4 and len(kinds) == 5 and len(losses) == 2 and secs < 60
    record(5, ok, f"worst relative error {worst:.2e} over 20 configs x 2 losses, kinds {sorted(kinds)}, {secs:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def pipeline(ref_cfg, ref_data, ref_model):
    train, test = ref_data
    cfg = SweepConfig(SWEEP_SIGMAS, SWEEP_TRIALS, seed=SWEEP_SEED)
    base, t_base = _timed(lambda: run_sweep(ref_model, test, cfg))
    smooth_cfg = SweepConfig(SWEEP_SIGMAS, SWEEP_TRIALS, smooth_first=True, seed=SWEEP_SEED)
    smoothed, t_smooth = _timed(lambda: run_sweep(ref_model, test, smooth_cfg))
    return {"train": train, "test": test, "model": ref_model, "cfg": cfg, "base": base,
            "smoothed": smoothed, "t_base": t_base, "t_smooth": t_smooth}


@pytest.fixture(scope="module")
def tuned(ref_cfg, pipeline):
    (model, noisy), secs = _timed(lambda: reference_finetune(pipeline["model"], pipeline["train"], ref_cfg))
    rep, t_sweep = _timed(lambda: run_sweep(model, pipeline["test"], pipeline["cfg"]))
    return {"model": model, "noisy": noisy, "sweep": rep, "secs": secs + t_sweep}


def test_c06_noise_sweep_trend(pipeline):
    acc = [r.accuracy for r in pipeline["base"].rows]
    clean = accuracy(pipeline["model"], pipeline["test"])
    rises = [b - a for a, b in zip(acc, acc[1:])]
    ok = (clean >= 0.9 and max(rises) <= 0.02 and acc[-1] < acc[0] and pipeline["t_base"] < 600)
    record(6, ok, f"clean test acc {clean:.4f}; sweep {' '.join(f'{a:.3f}' for a in acc)}; "
                  f"largest rise {max(rises):+.3f}; {pipeline['t_base']:.1f}s")
    assert ok


def test_c07_smoothing_at_sigma40(pipeline):
    plain = pipeline["base"].accuracy(40.0)
    smoothed = pipeline["smoothed"].accuracy(40.0)
    ok = smoothed >= plain and pipeline["t_smooth"] < 600
    record(7, ok, f"sigma=40 plain {plain:.4f} vs smoothed {smoothed:.4f}; {pipeline['t_smooth']:.1f}s")
    assert ok


def test_c08_finetune(pipeline, tuned):
    base_model, model = pipeline["model"], tuned["model"]
    fc = [k for i, k in base_model.slots.items() if base_model.layers[i].kind == "fully_connected"]
    fc_same = all(np.array_equal(base_model.params[k + j], model.params[k + j]) for k in fc for j in (0, 1))
    clean_before = accuracy(base_model, pipeline["test"])
    clean_after = accuracy(model, pipeline["test"])
    gains = {s: tuned["sweep"].accuracy(s) - pipeline["base"].accuracy(s) for s in (20.0, 40.0)}
    ok = (fc_same and abs(clean_after - clean_before) <= 0.03 and all(g > 0 for g in gains.values())
          and tuned["secs"] < 1200)
    record(8, ok, f"fc identical {fc_same}; clean {clean_before:.4f} -> {clean_after:.4f}; "
                  f"gain at 20 {gains[20.0]:+.4f}, at 40 {gains[40.0]:+.4f}; {tuned['secs']:.1f}s")
    assert ok


def test_c09_mean_spectrum_concentration(pipeline, tuned):
    def first_layer(m):
        w, _ = m.layer_params(m.conv_layer_indices()[0])
        return mean_spectrum(list(w))

    before, after = first_layer(pipeline["model"]), first_layer(tuned["model"])
    ok = after.concentration > before.concentration and after.entropy < before.entropy
    record(9, ok, f"concentration {before.concentration:.4f} -> {after.concentration:.4f}; "
                  f"entropy {before.entropy:.4f} -> {after.entropy:.4f}")
    assert ok


def _attack_rows(model, test):
    idx = np.flatnonzero(predict_batch(model, test.images) == test.labels)[:N_ATTACK]
    rows, stats = [], []
    for i in idx:
        x, c = test.images[i], int(test.labels[i])
        res = find_minimal_noise(model, x, c)
        cov = coverage(noise_spectrum(res.noise[0] if res.noise.shape[0] == 1 else res.noise))
        ratio = l2_norm(res.noise) / l2_norm(x)
        rows.append(attack_row(int(i), c, res, l2_norm(x), cov))
        stats.append((res.success, ratio, cov))
    return rows, stats


@pytest.fixture(scope="module")
def attacks(pipeline):
    return _timed(lambda: _attack_rows(pipeline["model"], pipeline["test"]))


def test_c10_minimal_noise(attacks):
    (rows, stats), secs = attacks
    good = sum(1 for s, r, c in stats if s and r < 0.1 and c >= 0.9)
    ok = len(stats) == N_ATTACK and good >= 8 and secs < 300
    ratios = " ".join(f"{r:.3f}" for _, r, _ in stats)
    record(10, ok, f"{good}/{len(stats)} pass (ratios {ratios}; min coverage "
                   f"{min(c for *_, c in stats):.3f}); {secs:.1f}s")
    assert ok


def test_c11_determinism(tmp_path, ref_cfg, pipeline, attacks):
    (rows, _), _ = attacks
    write_sweep_csv(pipeline["base"], tmp_path / "sweep_a.csv")
    write_attack_csv(rows, tmp_path / "attack_a.csv")

    # rerun from scratch: regenerate data, retrain, resweep, reattack
    train, test = reference_data(ref_cfg)
    model = reference_model(ref_cfg, train)
    write_sweep_csv(run_sweep(model, test, SweepConfig(SWEEP_SIGMAS, SWEEP_TRIALS, seed=SWEEP_SEED)),
                    tmp_path / "sweep_b.csv")
    write_attack_csv(_attack_rows(model, test)[0], tmp_path / "attack_b.csv")

    same = {name: (tmp_path / f"{name}_a.csv").read_bytes() == (tmp_path / f"{name}_b.csv").read_bytes()
            for name in ("sweep", "attack")}
    ok = all(same.values())
    record(11, ok, f"sweep CSV identical {same['sweep']}, attack CSV identical {same['attack']}")
    assert ok
