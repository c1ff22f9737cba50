"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines.
"""

import filecmp
import time

import numpy as np
import pytest

from oracles import center_minimizers, compositions
from pimslice.bitslice import Slicing, enumerate_slicings
from pimslice.cli import main
from pimslice.compiler import compile_layer, compile_network, layer_error, search_slicings
from pimslice.encoder import CENTER, ZERO, offsets, solve_center, solve_centers
from pimslice.layers import CONVOLUTION, FULLY_CONNECTED, LayerSpec, QuantParams
from pimslice.metrics import converts_per_mac
from pimslice.oracle import ideal_layer, run_network
from pimslice.pipeline import InputPlan, input_sum_term, simulate_layer
from pimslice.studies import LADDER, STRICT_LADDER, column_sum_ladder
from pimslice.synthetic import calibrate_quant, fc_layer, skewed_inputs, skewed_weights
from pimslice.xbar import CrossbarConfig, adc_convert, inject_noise

PLANS = {"speculative": InputPlan(), "recovery-only": InputPlan.recovery_only()}


def report(criterion, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, detail


def test_c1_slicing_enumeration():
    t0 = time.perf_counter()
    got = enumerate_slicings(8, 4)
    ms = 1e3 * (time.perf_counter() - t0)
    ref = compositions(8, 4)
    ok = len(got) == 108 == len(ref) and [s.widths for s in got] == ref
    report(1, ok and ms < 1000, f"{len(got)} slicings (oracle {len(ref)}) in {ms:.2f} ms")


def _random_layer(rng, i):
    """Small FC or conv layer with a random weight spread and input statistics."""
    n_filters = int(rng.integers(1, 17))
    signed = bool(rng.random() < 0.2)
    zp = int(rng.integers(40, 216))
    spread = float(np.exp(rng.uniform(np.log(0.5), np.log(40))))
    if rng.random() < 0.3:
        c, k = int(rng.integers(1, 9)), int(rng.choice([1, 3]))
        hw = int(rng.integers(k, 6))
        shape = (n_filters, c, k, k)
        x_shape = (int(rng.integers(1, 3)), c, hw, hw)
        kind, pad = CONVOLUTION, int(rng.integers(0, 2)) if k == 3 else 0
    else:
        fan_in = int(rng.integers(1, 513))
        shape, x_shape, kind, pad = (n_filters, fan_in), (int(rng.integers(1, 5)), fan_in), \
            FULLY_CONNECTED, 0
    w = np.clip(np.rint(rng.normal(zp + rng.normal(0, spread, (n_filters,) + (1,) * (len(shape) - 1)),
                                   spread, shape)), 0, 255).astype(np.uint8)
    mean = float(np.exp(rng.uniform(np.log(0.3), np.log(40))))
    x = skewed_inputs(rng, x_shape, mean=mean, zero_fraction=float(rng.uniform(0, 0.9)))
    if signed:
        x = (x.astype(np.int64) * rng.choice([-1, 1], size=x.shape)).clip(-128, 127).astype(np.int8)
    quant = QuantParams(np.exp(rng.uniform(np.log(1e-3), np.log(1.0), n_filters)),
                        rng.uniform(-5, 5, n_filters),
                        activation="relu" if rng.random() < 0.7 else "identity",
                        output_signed=bool(rng.random() < 0.5))
    layer = LayerSpec(f"rand{i}", kind, w, quant, weight_zero_point=zp, padding=pad,
                      input_signed=signed)
    return layer, x


def test_c2_fidelity_equivalence():
    rng = np.random.default_rng(2024)
    slicings = enumerate_slicings()
    qualifying = {(s.widths, p): 0 for s in slicings for p in PLANS}
    runs = mismatches = 0
    for i in range(10 * len(slicings)):
        s = slicings[i % len(slicings)]
        layer, x = _random_layer(rng, i)
        centers = solve_centers(layer.weight_matrix(), s, 512)
        psums, outs = ideal_layer(layer, x)
        for name, plan in PLANS.items():
            r = simulate_layer(layer, x, s, centers, CrossbarConfig(), plan)
            runs += 1
            if r.metrics.total_saturations == 0:
                qualifying[(s.widths, name)] += 1
                if not (np.array_equal(r.outputs, outs) and np.array_equal(r.psums, psums)):
                    mismatches += 1
    n_layers = 10 * len(slicings)
    n_ok = sum(qualifying.values())
    covered = sum(v > 0 for v in qualifying.values())
    ok = mismatches == 0 and n_layers >= 1000 and covered == len(qualifying) and n_ok >= 1000
    report(2, ok, f"{n_layers} layers, {runs} runs, {n_ok} saturation-free, "
                  f"{covered}/{len(qualifying)} (slicing, plan) pairs covered, "
                  f"{mismatches} mismatches")


def test_c3_center_offset_identity():
    rng = np.random.default_rng(3)
    n, k = 100_000, 8
    w = rng.integers(0, 256, (n, k))
    x = rng.integers(0, 256, (n, k))
    phi = rng.integers(1, 256, n)
    pos, neg = offsets(w, phi[:, None])
    center_term = phi * x.sum(1)
    lhs = center_term + ((pos - neg) * x).sum(1)
    bad = int(np.count_nonzero(lhs != (w * x).sum(1)))
    # the scalar helper used by the simulator agrees with the vectorized center term
    helper_ok = all(input_sum_term(x[i], phi[i]) == center_term[i] for i in range(0, n, 97))
    report(3, bad == 0 and helper_ok, f"{n} random (W, I, center) triples, {bad} mismatches")


def test_c4_center_solver_exhaustive():
    rng = np.random.default_rng(4)
    slicings = enumerate_slicings()
    mism, ties = 0, 0
    for i in range(100):
        size = int(rng.integers(2, 513))
        kind = i % 4
        if kind == 0:
            w = rng.integers(0, 256, size)
        elif kind == 1:
            w = np.clip(np.rint(rng.normal(rng.uniform(20, 235), rng.uniform(2, 30), size)), 0, 255)
        elif kind == 2:
            # balanced two-valued chunk with an odd gap: the centers either side of the
            # midpoint mirror each other's offsets, so their costs tie
            a, gap = int(rng.integers(0, 200)), 2 * int(rng.integers(0, 28)) + 1
            w = rng.permutation(np.repeat([a, a + gap], size // 2))
        else:
            w = np.full(size, int(rng.integers(0, 256)))
            w[: int(rng.integers(0, 3))] = int(rng.integers(0, 256))
        w = [int(v) for v in w]
        s = slicings[int(rng.integers(len(slicings)))]
        best = center_minimizers(w, s.widths)
        mism += solve_center(w, s) != best[0]
        ties += len(best) > 1
    report(4, mism == 0 and ties >= 10,
           f"100 chunks (sizes 2-512), {mism} mismatches, {ties} chunks with tied minima")


def test_c5_converts_per_mac():
    # (rows, weight slices, input converts) -> exact value, published three-decimal value
    anchors = [((128, 4, 8), 0.25, 0.25), ((512, 4, 8), 0.0625, 0.063),
               ((512, 3, 8), 0.046875, 0.047)]
    exact = all(converts_per_mac(*a) == v for a, v, _ in anchors)
    rounded = all(abs(converts_per_mac(*a) - p) <= 5e-4 + 1e-12 for a, _, p in anchors)

    # workload tuned for a speculation failure rate near 2%
    rng = np.random.default_rng(5)
    x = skewed_inputs(rng, (64, 512), mean=5, zero_fraction=0.7)
    layer = fc_layer(rng, 32, 512, inputs=x)
    c = compile_layer(layer, x[:10])
    r = simulate_layer(layer, x, c.slicing, c.centers, CrossbarConfig(), InputPlan())
    m = r.metrics
    cpc = m.converts_per_column
    fail = m.saturation_rate("speculation")
    reduction = 1 - cpc / 8
    ok = exact and rounded and 3.1 <= cpc <= 3.6 and 0.55 <= reduction <= 0.65
    report(5, ok, f"anchors exact={exact}; slicing {c.slicing}, speculation failure "
                  f"{100 * fail:.2f}%, {cpc:.3f} converts/column, "
                  f"{100 * reduction:.1f}% fewer converts than 8")


def test_c6_adc_semantics():
    cfg = CrossbarConfig()
    bad = 0
    for v in range(-200, 201):
        out, sat = adc_convert(v, cfg)
        want = min(max(v, -64), 63)
        if out != want or sat != (want in (-64, 63)):
            bad += 1
    v = np.arange(-200, 201)
    arr, arr_sat = adc_convert(v, cfg)
    ok = (bad == 0 and np.array_equal(arr, np.clip(v, -64, 63))
          and np.array_equal(arr_sat, (v <= -64) | (v >= 63)))
    report(6, ok, f"401 integer sums, {bad} deviations from clamp to [-64, 63]")


@pytest.fixture(scope="module")
def ablation_network():
    rng = np.random.default_rng(7)
    x = skewed_inputs(rng, (32, 512))
    l1 = fc_layer(rng, 64, 512, name="fc1", inputs=x)
    h = ideal_layer(l1, x)[1]
    l2 = fc_layer(rng, 10, 64, name="fc2", inputs=h, is_last_layer=True)
    return [l1, l2], x


def test_c7_ablation_ladder(ablation_network):
    layers, x = ablation_network
    acts = run_network(layers, x)
    compiled = compile_network(layers, x[:10])
    ladder = column_sum_ladder(layers, acts, compiled, 512)
    rates = [ladder[k]["saturation_rate"] for k in STRICT_LADDER]
    strict = all(a > b for a, b in zip(rates, rates[1:]))
    final = ladder["recovery"]["saturation_rate"]
    detail = ", ".join(f"{k} {100 * ladder[k]['saturation_rate']:.3f}%" for k in LADDER)
    report(7, strict and final < 0.01, detail)


def test_c8_center_vs_zero():
    rng = np.random.default_rng(8)
    s = Slicing((4, 2, 2))
    wins = total = worse_error = 0
    errors = []
    for g in range(4):
        x = skewed_inputs(rng, (10, 512))
        w = skewed_weights(rng, (16, 512))
        layer = fc_layer(rng, 16, 512, weights=w, inputs=x)
        # signed identity outputs keep the mostly-negative filters from being zeroed by ReLU
        layer.quant = calibrate_quant(layer, x, activation="identity", output_signed=True)
        expected = ideal_layer(layer, x)[1]
        rates, errs = {}, {}
        for mode in (CENTER, ZERO):
            c = solve_centers(layer.weight_matrix(), s, 512, mode, layer.weight_zero_point)
            r = simulate_layer(layer, x, s, c, CrossbarConfig(), InputPlan.recovery_only(),
                               emit_traces=True)
            t = r.traces
            rates[mode] = (np.bincount(t["filter"], weights=t["saturated"], minlength=16)
                           / np.bincount(t["filter"], minlength=16))
            errs[mode] = layer_error(expected, r.outputs)
        wins += int((rates[CENTER] < rates[ZERO]).sum())
        total += 16
        worse_error += errs[CENTER] > errs[ZERO]
        errors.append((errs[CENTER], errs[ZERO]))
    frac = wins / total
    ok = total >= 50 and frac >= 0.9 and worse_error == 0
    report(8, ok, f"{wins}/{total} filters with lower saturation under Center+Offset; "
                  f"layer errors center/zero " +
                  ", ".join(f"{a:.3f}/{b:.3f}" for a, b in errors))


def test_c9a_noise_sigma():
    n = 100_000
    rng = np.random.default_rng(9)
    draws = inject_noise(np.zeros(n), np.full(n, 512 * 9), np.full(n, 512 * 9), 0.12, rng)
    rel = abs(draws.std() / (0.12 * np.sqrt(512 * 18)) - 1)

    # the same statistic measured through the simulator's own noise path
    layer = fc_layer(rng, 16, 512, inputs=skewed_inputs(rng, (8, 512)))
    x = skewed_inputs(rng, (256, 512))
    s = Slicing((4, 2, 2))
    c = solve_centers(layer.weight_matrix(), s, 512)
    r = simulate_layer(layer, x, s, c, CrossbarConfig(noise_level=0.12, rng_seed=9),
                       InputPlan(), emit_traces=True)
    t = r.traces
    tot = (t["pos_total"] + t["neg_total"]).astype(float)
    z = (t["noisy_sum"] - t["raw_sum"])[tot > 0] / np.sqrt(tot[tot > 0])
    rel_sim = abs(z.std() / 0.12 - 1)
    ok = rel < 0.02 and rel_sim < 0.02 and z.size >= n
    report("9a", ok, f"sigma relative error {100 * rel:.2f}% (direct), "
                     f"{100 * rel_sim:.2f}% over {z.size} simulator column sums")


def test_c9b_zero_noise_exact():
    rng = np.random.default_rng(10)
    layer = fc_layer(rng, 8, 300, sigma=6)
    x = skewed_inputs(rng, (6, 300), mean=4)
    s = Slicing((2, 2, 2, 2))
    c = solve_centers(layer.weight_matrix(), s, 512)
    r = simulate_layer(layer, x, s, c, CrossbarConfig(noise_level=0.0, rng_seed=1),
                       InputPlan(), emit_traces=True)
    same_sums = np.array_equal(r.traces["noisy_sum"], r.traces["raw_sum"].astype(float))
    exact = np.array_equal(r.psums, ideal_layer(layer, x)[0])
    # saturated speculative slices are redone exactly, so only committed recovery values matter
    clean = r.metrics.saturations["recovery"] == 0
    ok = same_sums and exact and clean
    report("9b", ok, f"E=0: noisy sums identical to raw sums={same_sums}, psums exact={exact}, "
                     f"saturations {r.metrics.saturation_counts}")


@pytest.mark.slow
def test_c9c_noise_aware_slicing_trend():
    levels = (0.0, 0.04, 0.08, 0.12)
    counts, fallbacks = [], []
    for i in range(20):
        rng = np.random.default_rng([9, i])
        k, f = int(rng.integers(128, 513)), int(rng.integers(4, 17))
        x = skewed_inputs(rng, (10, k))
        layer = fc_layer(rng, f, k, inputs=x)
        res = [search_slicings(layer, x, config=CrossbarConfig(noise_level=e, rng_seed=i))
               for e in levels]
        counts.append([len(r.slicing) for r in res])
        fallbacks.append([r.fallback for r in res])
    monotone = [c == sorted(c) for c in counts]
    in_budget = [not any(fb) for fb in fallbacks]
    mean = np.mean(counts, axis=0)
    detail = (f"{sum(monotone)}/20 layers non-decreasing; mean slices "
              + "/".join(f"{v:.2f}" for v in mean)
              + f" at E={'/'.join(f'{e:g}' for e in levels)}; "
              + f"{sum(in_budget)}/20 layers meet the budget at every level; "
              + "fallback counts per level "
              + "/".join(str(v) for v in np.sum(fallbacks, axis=0)))
    report("9c", all(monotone), detail)


def _cli_files(d):
    return sorted(p.name for p in d.iterdir())


def test_c10_determinism(tmp_path):
    net = tmp_path / "net"
    assert main(["synth", "-o", str(net), "--dims", "700,24,6", "--samples", "10",
                 "--seed", "5"]) == 0
    arts = []
    for run, jobs in ((0, 1), (1, 1), (2, 4)):
        a = tmp_path / f"art{run}.json"
        assert main(["compile", str(net / "manifest.json"), "-o", str(a), "--noise", "0.04",
                     "--num-test-inputs", "6", "--jobs", str(jobs)]) == 0
        arts.append(a.read_bytes())
    outs = []
    for run, jobs in ((0, 1), (1, 1), (2, 4)):
        d = tmp_path / f"sim{run}"
        assert main(["simulate", str(tmp_path / "art0.json"), str(net / "inputs.rtsr"),
                     "-o", str(d), "--noise", "0.08", "--emit-traces", "--plot",
                     "--jobs", str(jobs)]) == 0
        outs.append(d)
    names = _cli_files(outs[0])
    same_art = arts[0] == arts[1] == arts[2]
    same_sim = True
    for d in outs[1:]:
        _, differ, errors = filecmp.cmpfiles(outs[0], d, names, shallow=False)
        same_sim &= _cli_files(d) == names and not differ and not errors
    report(10, same_art and same_sim,
           f"compile artifacts identical={same_art}; simulate files {names} "
           f"identical across runs and --jobs 1/4={same_sim}")
