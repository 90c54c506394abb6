"""Checklist of the numeric guarantees the whole pipeline rests on.

One test per guarantee with its tolerance pinned in-line. Every statistical
check runs under a fixed seed so reruns are bit-for-bit deterministic, and
each test prints a PASS/FAIL line naming the guarantee so a `-s` run reads
as a report.
"""

import contextlib
import json
import math
import sys
import time

import numpy as np
import torch
import torch.nn.functional as F

from radsynth import cli as cli_mod
from radsynth import toydata
from radsynth.degrade import DegradationRecipe, degrade_pair, jpeg_compress, poisson_noise
from radsynth.denoiser import ToyDenoiser, finite_diff_max_rel_err, grad_check
from radsynth.diffusion import (
    SamplerConfig,
    analytic_gaussian_predictor,
    ddim_sigma,
    ddim_step,
    ddpm_step,
    forward_noise,
    noising_diagnostics,
    sample_batch,
)
from radsynth.grid import ImageGrid, Resolution, resize_lanczos, save_png
from radsynth.losses import psnr
from radsynth.metrics import (
    GaussianFit,
    ScoredLabel,
    fit_gaussian,
    frechet_distance,
    inception_score,
    roc_curve,
)
from radsynth.schedules import EmaSchedule, cosine_schedule, ema_gamma
from radsynth.sr import (
    DiscriminatorConfig,
    SRGenerator,
    SRGeneratorConfig,
    UNetDiscriminator,
    frozen_power_iteration,
    spectral_normalize,
)
from radsynth.study import (
    ALLOWED_VALUES,
    DeckItem,
    Response,
    StudyDeck,
    score_responses,
)


@contextlib.contextmanager
def check(name: str):
    try:
        yield
    except BaseException:
        print(f"FAIL {name}")
        raise
    print(f"PASS {name}")


# --------------------------------------------------------------- diffusion

def test_sampler_reproduces_analytic_gaussian_target():
    with check("DDIM sampler matches the analytic Gaussian oracle within 3 SE"):
        start = time.monotonic()
        sched = cosine_schedule(1000)
        # the target straddles [-1, 1], so x0 clipping would bias the draws
        cfg = SamplerConfig(eta=0.0, inference_steps=250, clip_denoised=False)
        n = 2000
        for s2 in (0.0, 0.25):
            pred = analytic_gaussian_predictor(np.full((1, 1), 0.3), s2, sched)
            draws = sample_batch(pred, sched, cfg, Resolution(1, 1), n,
                                 np.random.default_rng(11)).ravel()
            se_mean = math.sqrt(s2 / n)
            se_var = s2 * math.sqrt(2.0 / (n - 1))
            assert abs(float(draws.mean()) - 0.3) <= 3.0 * se_mean + 1e-9
            assert abs(float(draws.var(ddof=1)) - s2) <= 3.0 * se_var + 1e-9
        assert time.monotonic() - start < 120.0


def test_ancestral_and_eta_one_jumps_agree():
    with check("ancestral steps match eta=1 jumps within 5% at 10^4 draws"):
        sched = cosine_schedule(1000)
        cfg = SamplerConfig(eta=1.0, inference_steps=1, clip_denoised=False)
        n = 10_000
        for t in (900, 500, 100):
            x_t, _ = forward_noise(np.full((1, 1), 0.1), t, sched,
                                   np.random.default_rng(0))
            pred = analytic_gaussian_predictor(np.full((1, 1), -0.8), 0.25, sched)
            eps_hat = pred.predict(x_t, t)
            xs = np.full((n, 1, 1), float(x_t[0, 0]))
            es = np.full((n, 1, 1), float(eps_hat[0, 0]))
            a = ddpm_step(xs, t, es, sched, np.random.default_rng((0, t, 1))).ravel()
            b = ddim_step(xs, t, t - 1, es, sched, cfg,
                          np.random.default_rng((0, t, 2))).ravel()

            beta = sched.beta(t)
            ab_t, ab_p = sched.alpha_bar(t), sched.alpha_bar(t - 1)
            sigma = math.sqrt(beta * (1.0 - ab_p) / (1.0 - ab_t))
            assert abs(float(a.mean() - b.mean())) <= 0.05 * sigma
            assert abs(float(a.var(ddof=1) / b.var(ddof=1)) - 1.0) <= 0.05

            # the two updates are the same Gaussian in closed form as well
            m_ddpm = (x_t[0, 0] - beta / math.sqrt(1.0 - ab_t) * eps_hat[0, 0]) \
                / math.sqrt(1.0 - beta)
            x0_hat = (x_t[0, 0] - math.sqrt(1.0 - ab_t) * eps_hat[0, 0]) / math.sqrt(ab_t)
            m_ddim = math.sqrt(ab_p) * x0_hat \
                + math.sqrt(1.0 - ab_p - sigma**2) * eps_hat[0, 0]
            assert abs(m_ddpm - m_ddim) <= 1e-12
            assert abs(ddim_sigma(sched, t, t - 1, 1.0) - sigma) <= 1e-12


def test_cosine_schedule_and_ema_ramp_endpoints():
    with check("cosine schedule endpoints and exact EMA ramp endpoints"):
        sched = cosine_schedule(1000, s=0.008)
        assert sched.alpha_bar(1) > 0.999
        assert sched.alpha_bar(1000) < 1e-3
        assert float(sched.betas.min()) >= 0.0
        assert float(sched.betas.max()) <= 0.999
        for gamma0, K in ((0.9, 17), (0.995, 1000)):
            ramp = EmaSchedule(gamma0, K)
            assert ema_gamma(0, ramp) == gamma0
            assert ema_gamma(K, ramp) == 1.0


def test_full_noising_centers_display_mean():
    with check("display-mapped mean at t=T lands at 0.5 +/- 0.02 on 256x128"):
        sched = cosine_schedule(1000)
        x0 = toydata.make_corpus(1, 128, 256, 5)[0]
        rows = noising_diagnostics(x0, sched, [sched.T], np.random.default_rng(6))
        (_, mean, _), = rows
        assert abs(mean - 0.5) <= 0.02


# ------------------------------------------------------------- grad checks

def test_gradient_checks_across_models():
    with check("finite-difference gradient checks < 1e-3 for all three models"):
        sched = cosine_schedule(100)
        torch.manual_seed(2)
        model = ToyDenoiser(total_steps=100, widths=(4, 8))
        x0 = toydata.make_corpus(1, 8, 16, 3)[0]
        eps = np.random.default_rng(4).standard_normal((8, 16))
        assert grad_check(model, (x0, 37, eps), sched, n_weights=60) < 1e-3

        torch.manual_seed(14)
        gen = SRGenerator(SRGeneratorConfig(embed_dim=4, window=4, overlap_ratio=0.5,
                                            n_groups=1, blocks_per_group=1,
                                            heads=2, scale=2)).double()
        x = torch.randn(1, 1, 8, 8, dtype=torch.float64)
        target = torch.randn(1, 1, 16, 16, dtype=torch.float64)
        err = finite_diff_max_rel_err(gen, lambda: (gen(x) - target).pow(2).mean(),
                                      n_weights=60, seed=0)
        assert err < 1e-3

        torch.manual_seed(15)
        disc = UNetDiscriminator(DiscriminatorConfig(base_channels=4, depth=2)).double()
        xd = torch.randn(1, 1, 8, 8, dtype=torch.float64)
        # converge the persistent power-iteration state, then pin it so the
        # forward is a pure function of the weights during the FD probes
        with torch.no_grad():
            for _ in range(200):
                disc(xd)
        with frozen_power_iteration(disc):
            err = finite_diff_max_rel_err(disc, lambda: disc(xd).mean(),
                                          n_weights=60, seed=1)
        assert err < 1e-3


# ----------------------------------------------------------------- metrics

def test_frechet_distance_reference_cases():
    with check("Frechet distance: self-distance, closed forms, rotation invariance"):
        rng = np.random.default_rng(7)
        fit = fit_gaussian(rng.standard_normal((300, 12)))
        assert frechet_distance(fit, fit) <= 1e-8

        d = 8
        base = rng.standard_normal((d, d))
        cov = base @ base.T + d * np.eye(d)
        m1, m2 = rng.standard_normal(d), rng.standard_normal(d)
        shift_only = frechet_distance(GaussianFit(mean=m1, cov=cov, n=500),
                                      GaussianFit(mean=m2, cov=cov, n=500))
        assert abs(shift_only - float(((m1 - m2) ** 2).sum())) <= 1e-6

        d, a_var, b_var = 16, 1.7, 0.4
        scaled = frechet_distance(
            GaussianFit(mean=np.zeros(d), cov=a_var * np.eye(d), n=500),
            GaussianFit(mean=np.zeros(d), cov=b_var * np.eye(d), n=500))
        assert abs(scaled - d * (a_var + b_var - 2.0 * math.sqrt(a_var * b_var))) <= 1e-6

        fa = fit_gaussian(rng.standard_normal((200, 12)))
        fb = fit_gaussian(rng.standard_normal((220, 12)) * 1.3 + 0.2)
        q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        ra = GaussianFit(mean=q @ fa.mean, cov=q @ fa.cov @ q.T, n=fa.n)
        rb = GaussianFit(mean=q @ fb.mean, cov=q @ fb.cov @ q.T, n=fb.n)
        assert abs(frechet_distance(ra, rb) - frechet_distance(fa, fb)) <= 1e-6


def test_inception_score_reference_points():
    with check("inception score: uniform -> 1.0, balanced one-hot 10 classes -> 10.0"):
        mean, _ = inception_score(np.full((200, 10), 0.1), splits=10)
        assert abs(mean - 1.0) <= 1e-9
        # ten consecutive splits of ten one-hot rows, one class each: every
        # split marginal is uniform, so each row's KL is exactly log 10
        mean, _ = inception_score(np.tile(np.eye(10), (10, 1)), splits=10)
        assert abs(mean - 10.0) <= 1e-9


def test_spectral_normalization_matches_svd_oracle():
    with check("spectral normalization: top singular value 1 +/- 1e-3, 50 matrices"):
        for seed in range(50):
            g = torch.Generator().manual_seed(seed)
            w = torch.randn(64, 64, generator=g, dtype=torch.float64)
            u = F.normalize(torch.randn(64, generator=g, dtype=torch.float64), dim=0)
            v = F.normalize(torch.randn(64, generator=g, dtype=torch.float64), dim=0)
            # near-degenerate top singular pairs converge slowly; walk the
            # persistent state well past the worst draw before the final call
            for _ in range(245):
                spectral_normalize(w, 1, (u, v))
            normalized = spectral_normalize(w, 5, (u, v))
            top = float(np.linalg.svd(normalized.numpy(), compute_uv=False)[0])
            assert abs(top - 1.0) <= 1e-3


# -------------------------------------------------------- super-resolution

def test_sr_generator_overfits_one_pair_and_uses_cross_attention():
    with check("tiny SR generator hits 35 dB on one 64x32 pair; OCA branch is live"):
        start = time.monotonic()
        torch.manual_seed(3)
        hr = toydata.make_corpus(1, 64, 128, 21)[0]
        lr = resize_lanczos(hr, Resolution(64, 32))
        gen = SRGenerator(SRGeneratorConfig(embed_dim=16, window=4, overlap_ratio=0.5,
                                            n_groups=1, blocks_per_group=1,
                                            heads=2, scale=2))
        opt = torch.optim.AdamW(gen.parameters(), lr=2e-3)
        x = torch.from_numpy(lr.data.copy()).float()[None, None]
        y = torch.from_numpy(hr.data.copy()).float()[None, None]
        reached = None
        for step in range(1, 2001):
            opt.zero_grad()
            (gen(x) - y).abs().mean().backward()
            opt.step()
            if step % 25 == 0:
                with torch.no_grad():
                    quality = psnr(gen(x).squeeze().clamp(0, 1).numpy(), hr.data)
                if quality >= 35.0:
                    reached = step
                    break
        assert reached is not None
        assert time.monotonic() - start < 600.0

        # same weights with the cross-attention branch bypassed must disagree
        with torch.no_grad():
            full = gen(x)
            saved = [grp.oca for grp in gen.groups]
            for grp in gen.groups:
                grp.oca = None
            bypassed = gen(x)
            for grp, block in zip(gen.groups, saved):
                grp.oca = block
        assert not torch.allclose(full, bypassed)


def test_degradation_is_reproducible_and_bounded(tmp_path):
    with check("degrade_pair byte-stable; q100 JPEG <= 2/255; Poisson unbiased"):
        hr = toydata.make_corpus(1, 32, 64, 9)[0]
        recipe = DegradationRecipe(scale=2, poisson_scale=60.0, jpeg_quality=80,
                                   blur_sigma=0.8, gauss_sigma=0.02, seed=123)
        paths = [tmp_path / f"lr{i}.png" for i in range(2)]
        for path in paths:
            _, lr = degrade_pair(hr, recipe, np.random.default_rng(recipe.seed))
            save_png(lr, path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

        q100 = jpeg_compress(hr, 100)
        assert float(np.abs(q100.data - hr.data).max()) <= 2.0 / 255.0

        flat = ImageGrid(np.full((48, 48), 0.4))
        rng = np.random.default_rng(31)
        draws = np.stack([poisson_noise(flat, 60.0, rng).data for _ in range(25)])
        se = math.sqrt(0.4 / 60.0 / draws.size)
        assert abs(float(draws.mean()) - 0.4) <= 3.0 * se


# ---------------------------------------------------------- observer study

# Reference observer sessions (200 items each, 100 fake / 100 real):
# fractional confusion counts with their exact-0.5 tallies and the
# two-decimal precision/recall/accuracy each row must score to. Quarter-step
# response values make every count dyadic, so recomputed sums are exact.
OBSERVER_ROWS = [
    ("EC1", 75.25, 50.25, 49.75, 24.75, 49, 0.60, 0.75, 0.63),
    ("EC2", 71.75, 66.75, 33.25, 28.25, 6, 0.68, 0.72, 0.69),
    ("EC3", 80.25, 52.00, 48.00, 19.75, 44, 0.63, 0.80, 0.66),
    ("EP1", 71.25, 61.00, 39.00, 28.75, 40, 0.65, 0.71, 0.66),
    ("EP2", 80.75, 77.00, 23.00, 19.25, 0, 0.78, 0.81, 0.79),
    ("EP3", 75.25, 59.75, 40.25, 24.75, 19, 0.65, 0.75, 0.68),
]


def _side_values(n: int, target_sum: float, n_unsure: int) -> list[float] | None:
    """n response values containing exactly n_unsure 0.5s that sum to target."""
    rest = target_sum - 0.5 * n_unsure
    if rest < 0:
        return None
    whole = int(rest)
    tail = {0.0: [], 0.25: [0.25], 0.5: [0.25, 0.25], 0.75: [0.75]}[rest - whole]
    if whole + len(tail) > n - n_unsure:
        return None
    values = [0.5] * n_unsure + [1.0] * whole + tail
    return values + [0.0] * (n - len(values))


def _transcript_for_row(tp: float, fp: float, u: int):
    """A 200-item deck plus responses scoring to the given fractional counts."""
    for u_fake in range(u + 1):
        fake_vals = _side_values(100, tp, u_fake)
        real_vals = _side_values(100, fp, u - u_fake)
        if fake_vals is not None and real_vals is not None:
            break
    else:
        raise AssertionError(f"no value assignment for tp={tp} fp={fp} u={u}")
    items = [DeckItem(f"f{i:03d}", f"f{i:03d}.png", "fake") for i in range(100)]
    items += [DeckItem(f"r{i:03d}", f"r{i:03d}.png", "real") for i in range(100)]
    deck = StudyDeck(items=tuple(items), seed=0)
    responses = [Response(it.image_id, v, 1.0, False)
                 for it, v in zip(items, fake_vals + real_vals)]
    return deck, responses


def test_observer_rows_reproduce_reference_metrics():
    with check("confusion rows score to the reference P/R/A for all six observers"):
        # one accuracy (135/200 = 0.675) sits exactly on the two-decimal
        # rounding boundary, hence the epsilon on top of the half-ulp tolerance
        tol = 0.005 + 1e-9
        for name, tp, tn, fp, fn, u, p_ref, r_ref, a_ref in OBSERVER_ROWS:
            assert abs(tp / (tp + fp) - p_ref) <= tol, name
            assert abs(tp / (tp + fn) - r_ref) <= tol, name
            assert abs((tp + tn) / (tp + tn + fp + fn) - a_ref) <= tol, name

            deck, responses = _transcript_for_row(tp, fp, u)
            rep = score_responses(deck, responses)
            assert (rep.tp, rep.tn, rep.fp, rep.fn, rep.u) == (tp, tn, fp, fn, u), name
            assert abs(rep.precision - p_ref) <= tol, name
            assert abs(rep.recall - r_ref) <= tol, name
            assert abs(rep.accuracy - a_ref) <= tol, name


def test_scoring_conserves_class_totals_and_relabel_symmetry():
    with check("1000 random transcripts conserve class totals; relabeling is exact"):
        items = [DeckItem(f"f{i:02d}", f"f{i:02d}.png", "fake") for i in range(20)]
        items += [DeckItem(f"r{i:02d}", f"r{i:02d}.png", "real") for i in range(20)]
        deck = StudyDeck(items=tuple(items), seed=1)
        flipped = StudyDeck(items=tuple(
            DeckItem(it.image_id, it.file_ref,
                     "real" if it.truth == "fake" else "fake")
            for it in items), seed=1)
        rng = np.random.Generator(np.random.Philox(77))
        for _ in range(1000):
            values = rng.choice(ALLOWED_VALUES, size=len(items))
            responses = [Response(it.image_id, float(v), 1.0, False)
                         for it, v in zip(items, values)]
            rep = score_responses(deck, responses)
            assert rep.tp + rep.fn == deck.fake_count
            assert rep.tn + rep.fp == deck.real_count

            mirrored = [Response(r.image_id, 1.0 - r.value, r.elapsed, r.timed_out)
                        for r in responses]
            mrep = score_responses(flipped, mirrored)
            assert (mrep.tp, mrep.tn, mrep.fp, mrep.fn) == \
                (rep.tn, rep.tp, rep.fn, rep.fp)
            assert mrep.u == rep.u


def test_roc_auc_matches_brute_force_pair_counting():
    with check("trapezoid AUC equals pair counting exactly on 200 instances"):
        rng = np.random.Generator(np.random.Philox(13))
        grid = np.asarray(ALLOWED_VALUES)
        for case in range(200):
            n = int(rng.integers(2, 201))
            while True:
                is_fake = rng.integers(0, 2, size=n).astype(bool)
                if 0 < is_fake.sum() < n:
                    break
            # alternate tie-heavy quarter-step scores with continuous ones
            scores = rng.choice(grid, size=n) if case % 2 else rng.random(n)
            items = [ScoredLabel(score=float(s), label="fake" if f else "real")
                     for s, f in zip(scores, is_fake)]
            _, auc = roc_curve(items)

            pos, neg = scores[is_fake], scores[~is_fake]
            wins = float((pos[:, None] > neg[None, :]).sum())
            ties = float((pos[:, None] == neg[None, :]).sum())
            brute = (wins + 0.5 * ties) / (len(pos) * len(neg))
            assert abs(auc - brute) <= 1e-12


# ------------------------------------------------------------- end to end

def test_pipeline_single_command_beats_noise_baseline(tmp_path, monkeypatch):
    with check("one-command toy pipeline: synthetic FID beats the noise baseline"):
        start = time.monotonic()
        out = tmp_path / "run"
        monkeypatch.setattr(sys, "argv", ["radsynth", "pipeline", "--out", str(out)])
        assert cli_mod.main() == 0
        report = json.loads((out / "report.json").read_text())
        assert report["synth_beats_noise"] is True
        assert report["fid_synth"] < report["fid_noise"]
        assert time.monotonic() - start < 1800.0
