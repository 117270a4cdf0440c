"""Smoke test for the selfs_py extension. Build it first with
`maturin develop -m crates/python/Cargo.toml` (or pip install the wheel)."""

import json
import math

import selfs_py as s


def main():
    configs = s.enumerate_configs()
    assert len(configs) == 336, len(configs)
    assert configs[0] == "brier_nbhd_r0"

    mask, frac = s.synth_mask(48, 48, 0.02, 1, radius_px=(3.0, 3.0), elongation=(1.0, 1.0), seed=7)
    assert mask.kind == "mask" and mask.sum() == 29.0
    assert abs(frac - 29 / 48**2) < 1e-15

    same = s.synth_prob(mask)
    assert same.values() == mask.values()

    shifted = s.synth_prob(mask, offset_px=(2, 0))
    bs_pix, _ = s.pixelwise_score("brier", shifted, mask)
    assert bs_pix > 0.0

    for kind in ["brier", "fss", "iou", "dice", "csi", "xent", "heidke", "peirce", "gerrity"]:
        v, fallbacks = s.pixelwise_score(kind, same, mask)
        assert math.isfinite(v), (kind, v, fallbacks)

    noisy = s.synth_prob(mask, blur_r=2, noise_sd=0.05, seed=3)
    for spec in ["brier_nbhd_r2", "fss_nbhd_r4", "gerrity_W0.1-0.2", "csi_F0.05-inf"]:
        loss = s.loss_value(spec, noisy, mask)
        assert math.isfinite(loss), spec
        grad = s.loss_gradient(spec, noisy, mask)
        assert (grad.rows, grad.cols) == (48, 48)
        rep = s.grad_check(spec, noisy, mask)
        assert rep["max_rel_err"] <= 1e-5, (spec, rep)

    low = s.apply_filter(mask, "F0.2-inf")
    high = s.apply_filter(mask, "F0-0.2")
    assert low.kind == "real" and high.kind == "real"

    dilated = s.apply_filter(mask, "nbhd_max_r1")
    assert dilated.sum() > mask.sum()

    ranks = s.rank_models(["a", "b", "c"], ["brier_nbhd_r0", "fss_nbhd_r0"], [[0.1, 0.9], [0.1, 0.5], [0.3, 0.7]])
    assert ranks == [[1.5, 1.0], [1.5, 3.0], [3.0, 2.0]]
    winners = s.best_per_filter(["a", "b"], ["brier_nbhd_r1", "brier_W0-0.1"], [[0.1, 0.2], [0.2, 0.1]])
    assert [(w[0], w[1]) for w in winners] == [("nbhd_r1", "a"), ("W0-0.1", "b")]

    report = json.loads(s.eval_report_json([same, same], [mask, mask], n_boot=50))
    stats = {row["name"]: row["value"] for row in report["summary"]}
    assert stats["bss"] == 1.0 and stats["aupd"] == 1.0

    try:
        s.loss_value("nope_nbhd_r1", same, mask)
    except ValueError:
        pass
    else:
        raise AssertionError("bad spec accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
