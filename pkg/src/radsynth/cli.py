"""Command-line orchestration of the full pipeline.

Every command is a thin flag-driven wrapper over module operations:
dataset preparation, toy diffusion training, sampling, degradation pairs,
SR training, metric evaluation, study administration, and a single-command
end-to-end toy pipeline. Runs are deterministic given config plus seeds;
each output directory gets a reproducibility record and is guarded by a
lock file while a command works in it.
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import degrade as degrade_mod
from . import diffusion, grid, losses, metrics, study, toydata, tsne
from .checkpoint import load_checkpoint, restore_module, save_checkpoint
from .config import derive_seed, load_config_file, make_rng, merge_config
from .denoiser import TorchPredictor, ToyDenoiser, TrainState, train_step
from .embedder import ToyClassifier, ToyEmbedder
from .errors import ConfigError, DataError, NumericError
from .grid import ImageGrid, Resolution, load_png, resize_lanczos, save_png
from .schedules import EmaSchedule, cosine_schedule
from .sr import DiscriminatorConfig, SRGenerator, SRGeneratorConfig, UNetDiscriminator


@contextlib.contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".radsynth.lock"
    try:
        fd = lock.open("x")
    except FileExistsError:
        raise ConfigError(
            f"output directory {out_dir} is locked by another run "
            f"(delete {lock} if that run is dead)"
        )
    try:
        with fd:
            yield
    finally:
        lock.unlink(missing_ok=True)


def content_hash(paths: list[Path]) -> str:
    digest = hashlib.sha256()
    for p in sorted(paths):
        digest.update(p.name.encode())
        digest.update(hashlib.sha256(p.read_bytes()).digest())
    return digest.hexdigest()


def write_run_record(out_dir: Path, command: str, cfg: dict, inputs: list[Path]) -> None:
    record = {
        "command": command,
        "config": {k: str(v) for k, v in sorted(cfg.items())},
        "inputs_hash": content_hash(inputs),
        "n_inputs": len(inputs),
    }
    (out_dir / "run.json").write_text(json.dumps(record, indent=1, sort_keys=True))


def resolve_config(defaults: dict[str, str], config_file: str | None,
                   flags: dict[str, object]) -> dict[str, str]:
    file_values = load_config_file(config_file) if config_file else {}
    flag_values = {k: str(v) for k, v in flags.items() if v is not None}
    return merge_config(defaults, file_values, flag_values)


def load_corpus(directory: Path) -> tuple[list[ImageGrid], list[Path]]:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise DataError(f"no PNG images in {directory}")
    return [load_png(p) for p in paths], paths


def save_corpus(images: list[ImageGrid], directory: Path, prefix: str = "") -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for i, img in enumerate(images):
        p = directory / f"{prefix}{i:05d}.png"
        save_png(img, p)
        out.append(p)
    return out


@click.group()
def cli():
    """Radiograph synthesis pipeline: diffusion, SR, metrics, observer study."""


@cli.command()
@click.option("--in-dir", "in_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--width", type=int, default=1024, show_default=True)
@click.option("--height", type=int, default=512, show_default=True)
@click.option("--lr-scale", type=int, default=4, show_default=True)
@click.option("--rects", type=click.Path(exists=True, path_type=Path), default=None,
              help="CSV of filename,x0,y0,w,h crop rectangles applied before resize.")
def prepare(in_dir: Path, out_dir: Path, width: int, height: int, lr_scale: int,
            rects: Path | None):
    """Crop, grayscale, and resize a corpus; write HR and LR copies plus a manifest."""
    if width % lr_scale or height % lr_scale:
        raise ConfigError(f"{width}x{height} not divisible by lr scale {lr_scale}")
    crops: dict[str, tuple[int, int, int, int]] = {}
    if rects is not None:
        with open(rects) as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#"):
                    continue
                crops[row[0]] = tuple(int(v) for v in row[1:5])

    sources = sorted(p for p in in_dir.iterdir() if p.is_file())
    if not sources:
        raise DataError(f"no input files in {in_dir}")
    with output_lock(out_dir):
        hr_dir = out_dir / "hr"
        lr_dir = out_dir / "lr"
        hr_dir.mkdir(exist_ok=True)
        lr_dir.mkdir(exist_ok=True)
        rows = []
        skipped = 0
        for src in sources:
            try:
                img = load_png(src).to_gray()
                if src.name in crops:
                    img = grid.crop(img, *crops[src.name])
                hr = resize_lanczos(img, Resolution(width, height))
                lr = resize_lanczos(hr, Resolution(width // lr_scale, height // lr_scale))
            except Exception as err:
                skipped += 1
                rows.append([src.stem, "skipped", "", "", str(err)[:80]])
                continue
            hr_path = hr_dir / f"{src.stem}.png"
            lr_path = lr_dir / f"{src.stem}.png"
            save_png(hr, hr_path)
            save_png(lr, lr_path)
            rows.append([src.stem, "ok", str(hr_path), str(lr_path),
                         hashlib.sha256(hr_path.read_bytes()).hexdigest()])
        if skipped == len(sources):
            raise DataError("every input file failed to decode")
        with open(out_dir / "manifest.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "status", "hr", "lr", "sha256_or_reason"])
            writer.writerows(rows)
            writer.writerow(["_summary", f"skipped={skipped}", f"ok={len(rows) - skipped}",
                             "", ""])
        write_run_record(out_dir, "prepare",
                         {"width": width, "height": height, "lr_scale": lr_scale},
                         sources)
    click.echo(f"prepared {len(rows) - skipped} images, skipped {skipped}")


_TRAIN_DIFFUSION_DEFAULTS = {
    "steps": "300", "batch": "8", "T": "400", "lr": "1e-4", "gamma0": "0.995",
    "seed": "0", "clip_norm": "1.0",
}


@cli.command("train-diffusion")
@click.option("--corpus", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--total-timesteps", "T", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--seed", type=int, default=None)
def train_diffusion(corpus: Path, out_dir: Path, config_file, steps, batch, T, lr, seed):
    """Train the toy noise predictor on a PNG corpus."""
    cfg = resolve_config(_TRAIN_DIFFUSION_DEFAULTS, config_file,
                         {"steps": steps, "batch": batch, "T": T, "lr": lr, "seed": seed})
    steps_n, batch_n, t_n = int(cfg["steps"]), int(cfg["batch"]), int(cfg["T"])
    root_seed = int(cfg["seed"])
    images, paths = load_corpus(corpus)
    h, w = images[0].height, images[0].width
    if any((g.height, g.width) != (h, w) for g in images):
        raise DataError("corpus images must share one resolution")

    with output_lock(out_dir):
        sched = cosine_schedule(t_n)
        torch.manual_seed(derive_seed(root_seed, "init") % 2**63)
        model = ToyDenoiser(total_steps=t_n)
        state = TrainState.initialize(
            model, EmaSchedule(float(cfg["gamma0"]), steps_n),
            lr=float(cfg["lr"]), clip_norm=float(cfg["clip_norm"]),
        )
        rng = make_rng(root_seed, "train")
        for _ in range(steps_n):
            idx = rng.choice(len(images), size=min(batch_n, len(images)), replace=False)
            train_step(state, [images[i] for i in idx], sched, rng)

        meta = {"T": str(t_n), "height": str(h), "width": str(w),
                "schedule": sched.dump(), "seed": str(root_seed)}
        save_checkpoint(out_dir / "denoiser.npz", "denoiser", state.model,
                        ema=state.ema.shadow, meta=meta)
        with open(out_dir / "losses.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "grad_norm", "gamma_k"])
            writer.writerows(state.history)
        (out_dir / "schedule.txt").write_text(sched.dump())
        write_run_record(out_dir, "train-diffusion", cfg, paths)
    click.echo(f"trained {steps_n} steps; final loss {state.history[-1][1]:.4f}")


def _load_denoiser(ckpt_path: Path, use_ema: bool):
    ckpt = load_checkpoint(ckpt_path)
    if ckpt.kind != "denoiser":
        raise DataError(f"{ckpt_path} holds a {ckpt.kind!r} model, need 'denoiser'")
    t_n = int(ckpt.meta["T"])
    model = ToyDenoiser(total_steps=t_n)
    weights = ckpt.ema if (use_ema and ckpt.ema) else ckpt.live
    restore_module(model, weights)
    from .schedules import NoiseSchedule

    sched = NoiseSchedule.loads(ckpt.meta["schedule"])
    return model, sched, int(ckpt.meta["height"]), int(ckpt.meta["width"])


@cli.command()
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--count", type=int, default=8, show_default=True)
@click.option("--steps", type=int, default=50, show_default=True)
@click.option("--eta", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--use-ema/--use-live", default=True, show_default=True)
def sample(ckpt_path: Path, out_dir: Path, count: int, steps: int, eta: float,
           seed: int, use_ema: bool):
    """Draw samples from a trained checkpoint; one PNG per sample seed."""
    model, sched, h, w = _load_denoiser(ckpt_path, use_ema)
    pred = TorchPredictor(model)
    cfg = diffusion.SamplerConfig(eta=eta, inference_steps=steps)
    with output_lock(out_dir):
        for i in range(count):
            sample_seed = derive_seed(seed, f"sample:{i}") % 2**32
            rng = np.random.Generator(np.random.Philox(sample_seed))
            img = diffusion.sample(pred, sched, cfg, Resolution(w, h), rng)
            save_png(img, out_dir / f"{sample_seed}_{steps}.png")
        write_run_record(out_dir, "sample",
                         {"count": count, "steps": steps, "eta": eta, "seed": seed,
                          "checkpoint": str(ckpt_path)}, [ckpt_path])
    click.echo(f"wrote {count} samples at {steps} steps")


@cli.command("degrade")
@click.option("--corpus", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--count", type=int, default=16, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scales", type=str, default="2,3,4", show_default=True)
def degrade_cmd(corpus: Path, out_dir: Path, count: int, seed: int, scales: str):
    """Draw degraded HR/LR training pairs from the recipe pool."""
    try:
        scale_list = tuple(int(s) for s in scales.split(","))
    except ValueError:
        raise ConfigError(f"bad scales list {scales!r}")
    images, paths = load_corpus(corpus)
    pool = degrade_mod.default_pool(scale_list)
    rng = make_rng(seed, "degrade")
    with output_lock(out_dir):
        for i in range(count):
            hr, lr = degrade_mod.pool_draw(pool, images, rng)
            scale = hr.width // lr.width
            save_png(hr, out_dir / f"{i:05d}_hr.png")
            save_png(lr, out_dir / f"{i:05d}_x{scale}.png")
        write_run_record(out_dir, "degrade",
                         {"count": count, "seed": seed, "scales": scales}, paths)
    click.echo(f"wrote {count} pairs")


_TRAIN_SR_DEFAULTS = {
    "steps": "200", "batch": "2", "scale": "4", "lr": "1e-4", "seed": "0",
    "lambda1": "1.0", "lambda2": "1.0", "lambda3": "0.1",
}


@cli.command("train-sr")
@click.option("--corpus", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--scale", type=int, default=None)
@click.option("--seed", type=int, default=None)
def train_sr(corpus: Path, out_dir: Path, config_file, steps, scale, seed):
    """Adversarially train the SR generator on pool-degraded pairs."""
    cfg = resolve_config(_TRAIN_SR_DEFAULTS, config_file,
                         {"steps": steps, "scale": scale, "seed": seed})
    images, paths = load_corpus(corpus)
    root_seed = int(cfg["seed"])
    scale_n = int(cfg["scale"])
    weights = losses.LossWeights(float(cfg["lambda1"]), float(cfg["lambda2"]),
                                 float(cfg["lambda3"]))
    with output_lock(out_dir):
        torch.manual_seed(derive_seed(root_seed, "sr-init") % 2**63)
        gen = SRGenerator(SRGeneratorConfig(scale=scale_n))
        disc = UNetDiscriminator(DiscriminatorConfig())
        g_opt = torch.optim.AdamW(gen.parameters(), lr=float(cfg["lr"]))
        d_opt = torch.optim.AdamW(disc.parameters(), lr=float(cfg["lr"]))
        phi = losses.ToyFeatureExtractor()
        pool = degrade_mod.default_pool((scale_n,))
        rng = make_rng(root_seed, "sr-train")
        trace = []
        for step in range(int(cfg["steps"])):
            parts = losses.adversarial_train_step(
                gen, disc, pool, images, weights, g_opt, d_opt, phi, rng,
                batch_size=int(cfg["batch"]),
            )
            trace.append([step, parts.l1, parts.lp, parts.lg, parts.total, parts.d_loss])
        save_checkpoint(out_dir / "sr_gen.npz", "sr-generator", gen,
                        meta={"scale": cfg["scale"]})
        save_checkpoint(out_dir / "sr_disc.npz", "sr-discriminator", disc)
        with open(out_dir / "losses.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "l1", "lp", "lg", "total", "d_loss"])
            writer.writerows(trace)
        write_run_record(out_dir, "train-sr", cfg, paths)
    click.echo(f"trained {cfg['steps']} adversarial steps at x{scale_n}")


@cli.group("eval")
def eval_group():
    """Generative-quality metrics."""


def _fid_between(a_dir: Path, b_dir: Path, embedder_seed: int) -> tuple[float, int, int]:
    a_imgs, _ = load_corpus(a_dir)
    b_imgs, _ = load_corpus(b_dir)
    emb = ToyEmbedder(seed=embedder_seed)
    fit_a = metrics.fit_gaussian(emb.embed(a_imgs))
    fit_b = metrics.fit_gaussian(emb.embed(b_imgs))
    return metrics.frechet_distance(fit_a, fit_b), len(a_imgs), len(b_imgs)


@eval_group.command("fid")
@click.option("--a", "a_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--b", "b_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_file", type=click.Path(path_type=Path), required=True)
@click.option("--embedder-seed", type=int, default=7, show_default=True)
def eval_fid(a_dir: Path, b_dir: Path, out_file: Path, embedder_seed: int):
    value, n_a, n_b = _fid_between(a_dir, b_dir, embedder_seed)
    report = {"metric": "fid", "value": value, "std": None, "n": [n_a, n_b],
              "embedder_id": f"toy-rp-{embedder_seed}", "seed": embedder_seed}
    out_file.write_text(json.dumps(report, indent=1))
    click.echo(f"fid={value:.4f}")


@eval_group.command("is")
@click.option("--images", "img_dir", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--out", "out_file", type=click.Path(path_type=Path), required=True)
@click.option("--splits", type=int, default=10, show_default=True)
@click.option("--head-seed", type=int, default=11, show_default=True)
def eval_is(img_dir: Path, out_file: Path, splits: int, head_seed: int):
    images, _ = load_corpus(img_dir)
    clf = ToyClassifier(seed=head_seed)
    mean, std = metrics.inception_score(clf.predict_proba(images), splits=splits)
    report = {"metric": "is", "value": mean, "std": std, "n": len(images),
              "embedder_id": f"toy-head-{head_seed}", "seed": head_seed,
              "splits": splits}
    out_file.write_text(json.dumps(report, indent=1))
    click.echo(f"is={mean:.4f} +/- {std:.4f}")


@eval_group.command("tsne")
@click.option("--a", "a_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--b", "b_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_file", type=click.Path(path_type=Path), required=True)
@click.option("--perplexity", type=float, default=15.0, show_default=True)
@click.option("--iterations", type=int, default=600, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--embedder-seed", type=int, default=7, show_default=True)
def eval_tsne(a_dir: Path, b_dir: Path, out_file: Path, perplexity: float,
              iterations: int, seed: int, embedder_seed: int):
    a_imgs, _ = load_corpus(a_dir)
    b_imgs, _ = load_corpus(b_dir)
    emb = ToyEmbedder(seed=embedder_seed)
    feats = np.concatenate([emb.embed(a_imgs), emb.embed(b_imgs)])
    layout = tsne.tsne_2d(feats, perplexity=perplexity, iterations=iterations, seed=seed)
    with open(out_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "set"])
        for i, (x, y) in enumerate(layout):
            writer.writerow([x, y, "a" if i < len(a_imgs) else "b"])
    dist = metrics.centroid_distance(layout[: len(a_imgs)], layout[len(a_imgs):])
    click.echo(f"centroid distance={dist:.4f}")


@eval_group.command("roc")
@click.option("--scores", "scores_csv", type=click.Path(exists=True, path_type=Path),
              required=True, help="CSV with header score,label (label real|fake).")
@click.option("--out-prefix", type=click.Path(path_type=Path), required=True)
def eval_roc(scores_csv: Path, out_prefix: Path):
    items = []
    with open(scores_csv) as fh:
        for row in csv.DictReader(fh):
            items.append(metrics.ScoredLabel(score=float(row["score"]),
                                             label=row["label"].strip()))
    if not items:
        raise DataError(f"no rows in {scores_csv}")
    (fpr, tpr, thr), auc = metrics.roc_curve(items)
    (prec, rec, pthr), ap = metrics.pr_curve(items)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{out_prefix}.roc.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        writer.writerows(zip(fpr, tpr, thr))
    with open(f"{out_prefix}.pr.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["precision", "recall", "threshold"])
        writer.writerows(zip(prec, rec, pthr))
    Path(f"{out_prefix}.json").write_text(json.dumps({"auc": auc, "ap": ap}, indent=1))
    click.echo(f"auc={auc:.4f} ap={ap:.4f}")


@cli.group("study")
def study_group():
    """Observer-study administration."""


@study_group.command("serve")
@click.option("--real", "real_dir", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--fake", "fake_dir", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--sessions", "session_dir", type=click.Path(path_type=Path), required=True)
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8600, show_default=True)
@click.option("--n-each", type=int, default=100, show_default=True)
@click.option("--seconds", type=float, default=12.0, show_default=True)
@click.option("--grace", type=float, default=1.0, show_default=True)
@click.option("--static-dir", type=click.Path(path_type=Path), default=None)
def study_serve(real_dir, fake_dir, session_dir, host, port, n_each, seconds, grace,
                static_dir):
    """Run the study HTTP service (blocks until interrupted)."""
    import uvicorn

    from .service import ServiceConfig, create_app

    app = create_app(ServiceConfig(
        real_dir=real_dir, fake_dir=fake_dir, session_dir=session_dir,
        n_each=n_each, per_image_seconds=seconds, grace_seconds=grace,
        static_dir=static_dir,
    ))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@study_group.command("score")
@click.option("--session-file", type=click.Path(exists=True, path_type=Path),
              required=True)
def study_score(session_file: Path):
    """Score a persisted session file and print the report JSON."""
    session = study.session_from_dict(json.loads(session_file.read_text()))
    if not session.complete:
        raise DataError(
            f"session has {len(session.responses)}/{len(session.deck.items)} responses"
        )
    report = study.score_session(session)
    _, auc = study.session_roc(session)
    click.echo(json.dumps({
        "session_id": session.session_id, "observer": session.observer,
        "tp": report.tp, "tn": report.tn, "fp": report.fp, "fn": report.fn,
        "u": report.u, "precision": report.precision, "recall": report.recall,
        "accuracy": report.accuracy, "auc": auc,
    }, indent=1))


@study_group.command("demo-deck")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--count", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=int, default=128, show_default=True)
@click.option("--height", type=int, default=64, show_default=True)
def study_demo_deck(out_dir: Path, count: int, seed: int, width: int, height: int):
    """Generate a toy real/fake image pair of directories for demo sessions."""
    with output_lock(out_dir):
        real = toydata.make_corpus(count, height, width, derive_seed(seed, "real"))
        fake_src = toydata.make_corpus(count, height, width, derive_seed(seed, "fake"))
        rng = make_rng(seed, "fake-degrade")
        recipe = degrade_mod.DegradationRecipe(scale=2, jpeg_quality=25, blur_sigma=1.0)
        fake = [degrade_mod.degrade(img, recipe, rng) for img in fake_src]
        save_corpus(real, out_dir / "real")
        save_corpus(fake, out_dir / "fake")
    click.echo(f"wrote {count} real and {count} fake demo images")


@cli.command("noise-diagnostics")
@click.option("--image", "image_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--out", "out_file", type=click.Path(path_type=Path), required=True)
@click.option("--total-timesteps", "T", type=int, default=1000, show_default=True)
@click.option("--probes", type=str, default="0,250,500,750,1000", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def noise_diagnostics_cmd(image_path: Path, out_file: Path, T: int, probes: str,
                          seed: int):
    """Display-domain pixel stats of the forward process at probe timesteps."""
    img = load_png(image_path)
    sched = cosine_schedule(T)
    probe_ts = [int(p) for p in probes.split(",")]
    rows = diffusion.noising_diagnostics(img, sched, probe_ts, make_rng(seed, "noise"))
    with open(out_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean", "std"])
        writer.writerows(rows)
    click.echo("\n".join(f"t={t}: mean={m:.4f} std={s:.4f}" for t, m, s in rows))


def run_pipeline(out_dir: Path, seed: int = 0, corpus_n: int = 48,
                 hr_size: tuple[int, int] = (64, 32), diffusion_steps: int = 250,
                 total_timesteps: int = 400, sample_count: int = 24,
                 sample_steps: int = 50, sr_steps: int = 120, scale: int = 4) -> dict:
    """End-to-end toy run: corpus -> diffusion -> sampling -> SR -> FID report.

    Returns the report dict; also writes it to out_dir/report.json.
    """
    w, h = hr_size
    out_dir.mkdir(parents=True, exist_ok=True)

    hr_corpus = toydata.make_corpus(corpus_n, h, w, derive_seed(seed, "corpus"))
    save_corpus(hr_corpus, out_dir / "real")
    lr_res = Resolution(w // scale, h // scale)
    lr_corpus = [resize_lanczos(g, lr_res) for g in hr_corpus]

    sched = cosine_schedule(total_timesteps)
    torch.manual_seed(derive_seed(seed, "init") % 2**63)
    model = ToyDenoiser(total_steps=total_timesteps)
    state = TrainState.initialize(model, EmaSchedule(0.995, diffusion_steps))
    rng = make_rng(seed, "train")
    for _ in range(diffusion_steps):
        idx = rng.choice(len(lr_corpus), size=min(8, len(lr_corpus)), replace=False)
        train_step(state, [lr_corpus[i] for i in idx], sched, rng)

    pred = TorchPredictor(state.ema.shadow)
    cfg = diffusion.SamplerConfig(eta=0.0, inference_steps=sample_steps)
    batch = diffusion.sample_batch(pred, sched, cfg, lr_res, sample_count,
                                   make_rng(seed, "sample"))
    synth_lr = [ImageGrid(diffusion.to_unit_domain(x)) for x in batch]
    save_corpus(synth_lr, out_dir / "synth_lr")

    torch.manual_seed(derive_seed(seed, "sr-init") % 2**63)
    gen = SRGenerator(SRGeneratorConfig(scale=scale))
    disc = UNetDiscriminator(DiscriminatorConfig())
    g_opt = torch.optim.AdamW(gen.parameters(), lr=1e-4)
    d_opt = torch.optim.AdamW(disc.parameters(), lr=1e-4)
    phi = losses.ToyFeatureExtractor()
    pool = degrade_mod.default_pool((scale,))
    sr_rng = make_rng(seed, "sr-train")
    weights = losses.LossWeights()
    for _ in range(sr_steps):
        losses.adversarial_train_step(gen, disc, pool, hr_corpus, weights,
                                      g_opt, d_opt, phi, sr_rng, batch_size=2)

    from .sr import sr_forward

    synth_hr = [sr_forward(gen, img) for img in synth_lr]
    save_corpus(synth_hr, out_dir / "synth")

    noise_rng = make_rng(seed, "noise-baseline")
    noise_imgs = [toydata.noise_grid(h, w, noise_rng) for _ in range(sample_count)]
    save_corpus(noise_imgs, out_dir / "noise")

    emb = ToyEmbedder()
    fit_real = metrics.fit_gaussian(emb.embed(hr_corpus))
    fid_synth = metrics.frechet_distance(fit_real, metrics.fit_gaussian(emb.embed(synth_hr)))
    fid_noise = metrics.frechet_distance(fit_real, metrics.fit_gaussian(emb.embed(noise_imgs)))
    report = {
        "fid_synth": fid_synth,
        "fid_noise": fid_noise,
        "synth_beats_noise": fid_synth < fid_noise,
        "n_real": corpus_n,
        "n_synth": sample_count,
        "seed": seed,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=1))
    return report


@cli.command("pipeline")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--corpus-n", type=int, default=48, show_default=True)
@click.option("--diffusion-steps", type=int, default=250, show_default=True)
@click.option("--sample-count", type=int, default=24, show_default=True)
@click.option("--sr-steps", type=int, default=120, show_default=True)
def pipeline(out_dir: Path, seed: int, corpus_n: int, diffusion_steps: int,
             sample_count: int, sr_steps: int):
    """Toy corpus -> diffusion -> sampling -> SR -> FID, in one command."""
    with output_lock(out_dir):
        report = run_pipeline(out_dir, seed=seed, corpus_n=corpus_n,
                              diffusion_steps=diffusion_steps,
                              sample_count=sample_count, sr_steps=sr_steps)
        write_run_record(out_dir, "pipeline",
                         {"seed": seed, "corpus_n": corpus_n,
                          "diffusion_steps": diffusion_steps,
                          "sample_count": sample_count, "sr_steps": sr_steps}, [])
    if not report["synth_beats_noise"]:
        raise NumericError(
            f"synthetic FID {report['fid_synth']:.3f} did not beat "
            f"noise FID {report['fid_noise']:.3f}"
        )
    click.echo(json.dumps(report, indent=1))


def main() -> int:
    try:
        cli.main(standalone_mode=False)
    except click.ClickException as err:
        err.show()
        return 2
    except click.Abort:
        return 2
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        return 2
    except DataError as err:
        click.echo(f"data error: {err}", err=True)
        return 3
    except NumericError as err:
        click.echo(f"numeric failure: {err}", err=True)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
