"""Acceptance gate: ten criteria, one printed PASS/FAIL line each.

Criteria 1-6 and 10 are fast and self-contained. Criteria 7-9 share one
desk-scale training run (module-scoped fixture): backbone on 3 tasks x 300
samples at 32x32, then selector training and a sparsity-target sweep on
top of it. Run with -s to see the lines as they happen:

    python3 -m pytest tests/test_acceptance.py -v -s
"""

import dataclasses
import hashlib
import time

import numpy as np
import pytest

from conftest import tiny_config, tiny_model
from widthnet.checkpoint import checkpoint_load, checkpoint_save
from widthnet.config import from_profile
from widthnet.dataset import load_pack, synth_pack
from widthnet.degrade import default_spec, synth_clean, verify_decomposition
from widthnet.errors import ChecksumError
from widthnet.evaluate import (
    evaluate_fixed,
    evaluate_routed,
    model_desc,
    sweep_targets,
)
from widthnet.metrics import ModelDesc, count_flops, count_params
from widthnet.selector import selection_loss, sparsity_loss, train_ws
from widthnet.tensor import Tensor, cross_entropy, l1_loss
from widthnet.verify import gradient_suite, zero_masked_clone
from widthnet.wab import (
    WabModel,
    WidthAdaptiveConvLayer,
    WidthCandidates,
    train_wab,
    verify_prefix_decomposition,
    wab_forward,
)

# Backbone epochs for the desk run. The dataset (900 samples) is triple the
# size the 300-epoch desk default was tuned for; 24 epochs of the cosine
# schedule land on the decay floor in ~16 minutes on one core, inside the
# 30-minute budget, and the width trends are established by then.
DESK_EPOCHS = 24
DESK_SEED = 20260818
TREND_EPS = 1e-9


def _report(n: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {n} failed: {detail}"


# ------------------------------------------------------------ 1: gradients


def test_criterion_01_gradient_suite():
    t0 = time.perf_counter()
    result = gradient_suite(seed=0, instances=20)
    elapsed = time.perf_counter() - t0
    worst = max(c.deviation for c in result.checks)
    ok = result.passed and worst < 1e-4 and elapsed < 120.0
    _report(1, ok, f"{len(result.checks)} ops x 20 instances, worst rel err "
                   f"{worst:.3e} (tol 1e-4), {elapsed:.1f}s (budget 120s)")


# ------------------------------------------- 2: prefix decomposition


def test_criterion_02_prefix_decomposition():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng([seed, 202])
        layers = [WidthAdaptiveConvLayer(16, 16, 3, rng, dtype=np.float64)
                  for _ in range(3)]
        x = rng.standard_normal((1, 12, 8, 8))
        rep = verify_prefix_decomposition(layers, x, 8, 12, tol=1e-9)
        worst = max(worst, rep.max_deviation)
    _report(2, worst < 1e-9,
            f"50 seeds, 3-layer stacks omega=16 rho 8->12, max deviation "
            f"{worst:.3e} (tol 1e-9)")


# ------------------------------------------------ 3: slicing equivalence


def test_criterion_03_slicing_equivalence():
    model = tiny_model(seed=3, omega=16, c_de=4, trunk_depth=2, dtype=np.float64)
    rng = np.random.default_rng([3, 303])
    worst = 0.0
    for rho in model.candidates.widths:
        masked = zero_masked_clone(model, rho)
        x = Tensor(rng.uniform(0.0, 1.0, size=(20, 3, 12, 12)))
        sub, _ = wab_forward(model, x, rho)
        full, _ = wab_forward(masked, x, model.candidates.omega)
        worst = max(worst, float(np.abs(sub.data - full.data).max()))
    _report(3, worst < 1e-9,
            f"5 widths x 20 inputs, sliced vs zero-masked forward, max abs "
            f"deviation {worst:.3e} (tol 1e-9)")


# ------------------------------------------- 4: degradation identities


def test_criterion_04_degradation_identities():
    size = 32
    noise = default_spec("noise25", size, size)
    rain = default_spec("rain", size, size, sigma=noise.sigma)
    haze = default_spec("haze", size, size, sigma=noise.sigma)
    worst = 0.0
    support_ok = True
    for i in range(100):
        x = synth_clean(i, size, size)
        rep = verify_decomposition(x, noise, rain, haze, seed=i, tol=1e-12)
        worst = max(worst, rep.rain_additivity, rep.haze_residual, rep.rain_to_haze)
        support_ok &= rep.rain_support_fraction < rep.residual_support_fraction
        assert rep.passed
    _report(4, worst < 1e-12 and support_ok,
            f"100 samples, all identities pre-clamp, max deviation {worst:.3e} "
            f"(tol 1e-12), rain support < residual support on every sample")


# ------------------------------------------------ 5: loss unit identities


def test_criterion_05_loss_unit_identities():
    cand = WidthCandidates((0.6, 0.7, 0.8, 0.9, 1.0), 20)
    ratios = np.array([w / 20 for w in cand.widths])

    one_hot_first = Tensor(np.eye(5)[[0]])
    at_target = sparsity_loss(one_hot_first, ratios, target=0.6).item()

    one_hot_full = Tensor(np.eye(5)[[4]])
    at_full = sparsity_loss(one_hot_full, ratios, target=0.8).item()

    l1s = np.array([[0.5, 0.4, 0.3, 0.2, 0.1]])
    sel_one_hot = selection_loss(Tensor(np.eye(5)[[2]]), l1s).item()

    a = Tensor(np.linspace(0.0, 1.0, 12).reshape(1, 3, 2, 2))
    distill = l1_loss(a, a.detach()).item()

    ce_uniform = cross_entropy(Tensor(np.zeros((1, 5))), np.array([3])).item()

    checks = [
        ("L_spars at ratio==t", at_target, 0.0, 0.0),
        ("L_spars one-hot full t=0.8", at_full, 0.04, 1e-12),
        ("L_select one-hot = L_i/n", sel_one_hot, 0.3 / 5, 1e-12),
        ("L_distill equal outputs", distill, 0.0, 0.0),
        ("CE uniform 5-way", ce_uniform, np.log(5.0), 1e-9),
    ]
    worst = max(abs(got - want) for _, got, want, _ in checks)
    ok = all(abs(got - want) <= tol for _, got, want, tol in checks)
    _report(5, ok, f"{len(checks)} closed-form values, worst abs error {worst:.3e}")


# ------------------------------------------------------ 6: FLOPs structure


def test_criterion_06_flops_structure():
    desk = dict(c_de=8, trunk_depth=4, kernel=3, n_widths=5, num_classes=5)
    d32 = ModelDesc(omega=32, **desk)
    full = count_flops(d32, 32, 32, 32).flops
    sub = count_flops(d32, 19, 32, 32).flops
    whole_ratio = sub / full

    d20 = ModelDesc(omega=20, **desk)
    trunk_ratio = (count_flops(d20, 12, 32, 32).flops_matching("trunk.")
                   / count_flops(d20, 20, 32, 32).flops_matching("trunk."))

    params = {rho: count_flops(d32, rho, 32, 32).params for rho in (19, 22, 26, 29, 32)}
    params_invariant = len(set(params.values())) == 1

    with_sel = count_params(ModelDesc(omega=32, include_selector=True, **desk))
    adds = with_sel > count_params(d32)

    ok = (0.33 <= whole_ratio <= 0.42 and trunk_ratio == 0.36
          and params_invariant and adds)
    _report(6, ok,
            f"whole-model ratio at 0.6 = {whole_ratio:.4f} (band [0.33, 0.42]), "
            f"trunk-only ratio {trunk_ratio} (== 0.36 exactly), params "
            f"width-invariant: {params_invariant}, selector adds "
            f"{with_sel - count_params(d32)} params")


# --------------------------------------- 7-9: shared desk-scale training


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    cfg = dataclasses.replace(
        from_profile("desk"),
        tasks=("noise25", "rain", "haze"),
        samples_per_task=300,
        eval_samples_per_task=24,
        seed=DESK_SEED,
        epochs_wab=DESK_EPOCHS,
    ).validate()
    synth_pack(str(root / "train"), cfg.tasks, cfg.samples_per_task,
               cfg.image_size, cfg.seed)
    synth_pack(str(root / "eval"), cfg.tasks, cfg.eval_samples_per_task,
               cfg.image_size, cfg.seed + 1)
    train_data = load_pack(str(root / "train"))
    eval_data = load_pack(str(root / "eval"))

    t0 = time.perf_counter()
    model, history = train_wab(cfg, train_data)
    train_seconds = time.perf_counter() - t0
    return {
        "cfg": cfg, "model": model, "history": history,
        "train_data": train_data, "eval_data": eval_data,
        "train_seconds": train_seconds,
    }


def _drop_one_nondecreasing(values: list[float]) -> bool:
    """True if removing at most one entry leaves the sequence nondecreasing."""
    def mono(seq):
        return all(b >= a - TREND_EPS for a, b in zip(seq, seq[1:]))
    if mono(values):
        return True
    return any(mono(values[:i] + values[i + 1:]) for i in range(len(values)))


def test_criterion_07_desk_training_trends(desk_run):
    model, eval_data = desk_run["model"], desk_run["eval_data"]
    seconds = desk_run["train_seconds"]

    mean_psnr, per_task = [], {}
    for w in model.candidates.widths:
        rep = evaluate_fixed(model, eval_data, w)
        mean_psnr.append(rep.average["psnr"])
        for t in rep.per_task:
            per_task.setdefault(t.task, []).append(t.psnr)

    within_budget = seconds <= 30 * 60
    ends_ordered = mean_psnr[-1] >= mean_psnr[0]
    trend = _drop_one_nondecreasing(mean_psnr)
    haze_drop = per_task["haze"][-1] - per_task["haze"][0]
    noise_drop = per_task["noise25"][-1] - per_task["noise25"][0]
    haze_suffers_more = haze_drop > noise_drop

    ok = within_budget and ends_ordered and trend and haze_suffers_more
    _report(7, ok,
            f"trained {DESK_EPOCHS} epochs in {seconds:.0f}s (budget 1800s); "
            f"mean PSNR by width {[round(p, 3) for p in mean_psnr]} "
            f"(1.0 >= 0.6: {ends_ordered}, nondecreasing for >=4 of 5: {trend}); "
            f"1.0->0.6 drop haze {haze_drop:.3f} vs denoise {noise_drop:.3f}")


def test_criterion_08_routing_trend(desk_run):
    model, cfg = desk_run["model"], desk_run["cfg"]
    sel, _ = train_ws(model, desk_run["train_data"], 0.8, cfg)
    rep = evaluate_routed(model, sel, desk_run["eval_data"])

    ratio = {t.task: t.mean_ratio for t in rep.per_task}
    ordered = (ratio["noise25"] <= ratio["rain"] + TREND_EPS
               and ratio["rain"] <= ratio["haze"] + TREND_EPS)
    h, w = desk_run["eval_data"].image_size
    full = count_flops(model_desc(model), model.candidates.omega, h, w).flops
    saving = 1.0 - rep.average["mean_flops"] / full

    ok = ordered and saving >= 0.10
    _report(8, ok,
            f"mean selected ratio noise {ratio['noise25']:.3f} <= rain "
            f"{ratio['rain']:.3f} <= haze {ratio['haze']:.3f}: {ordered}; "
            f"routed FLOPs {saving:.1%} below full (need >= 10%)")


def test_criterion_09_sparsity_sweep(desk_run):
    model, cfg = desk_run["model"], desk_run["cfg"]
    rows = sweep_targets(model, desk_run["train_data"], desk_run["eval_data"],
                         (0.6, 0.7, 0.8, 0.9, 1.0), cfg)
    ratios = [r.mean_ratio for r in rows]
    nondecreasing = all(b >= a - TREND_EPS for a, b in zip(ratios, ratios[1:]))
    at_full = rows[-1]
    within_2pct = abs(at_full.mean_flops - at_full.full_flops) <= 0.02 * at_full.full_flops

    ok = nondecreasing and within_2pct
    _report(9, ok,
            f"mean ratio by target {[round(r, 3) for r in ratios]} "
            f"nondecreasing: {nondecreasing}; t=1.0 mean FLOPs within "
            f"{abs(at_full.mean_flops / at_full.full_flops - 1):.2%} of full (need <= 2%)")


# --------------------------------------------------------- 10: persistence


def test_criterion_10_persistence(tmp_path):
    cfg = tiny_config(trunk_depth=2)
    model = tiny_model(seed=5, omega=16, c_de=4, trunk_depth=2, dtype=np.float32)

    blob = checkpoint_save(model, cfg)
    loaded, loaded_cfg, _ = checkpoint_load(blob, expect_kind="wab")
    round_trip = checkpoint_save(loaded, loaded_cfg) == blob

    corrupt = bytearray(blob)
    corrupt[-1] ^= 0x01
    try:
        checkpoint_load(bytes(corrupt))
        rejected = False
    except ChecksumError:
        rejected = True

    digests = []
    for run in range(2):
        d = tmp_path / f"run{run}"
        synth_pack(str(d), cfg.tasks, cfg.samples_per_task, cfg.image_size, cfg.seed)
        m, _ = train_wab(cfg, load_pack(str(d)))
        digests.append(hashlib.sha256(checkpoint_save(m, cfg)).hexdigest())
    same_seed = digests[0] == digests[1]

    ok = round_trip and rejected and same_seed
    _report(10, ok,
            f"round trip byte-identical: {round_trip}; corrupted payload "
            f"rejected with checksum error: {rejected}; same-seed training "
            f"checksums equal: {same_seed} ({digests[0][:12]})")
