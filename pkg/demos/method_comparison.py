"""Compare explanation methods against occlusion maps.

Occlusion sensitivity (re-scoring the image with patches blanked out) is
the slow-but-faithful reference: a method whose map ranks pixels like the
occlusion map is telling the truth about what the model uses.  This demo
computes the Spearman rank correlation of several methods against it.

    python3 demos/method_comparison.py
"""

import numpy as np

import camlab
from camlab import evaluation, explain, occlusion

N_IMAGES = 15


def main():
    train = camlab.make_shapes_dataset(400, 48, rng_seed=1)
    test = camlab.make_shapes_dataset(200, 48, rng_seed=2)
    spec = camlab.fix_gap_spec()
    print("training FIX-GAP...")
    weights = camlab.train_fixture(spec, train, epochs=30,
                                   learning_rate=0.05, rng_seed=0)

    occ_cfg = occlusion.OcclusionConfig(patch=9, stride=2)
    rhos = {"gradcam": [], "guided-gradcam": [], "guided-backprop": [],
            "backprop": []}
    print(f"scoring {N_IMAGES} images against occlusion maps...")
    for ex in test[:N_IMAGES]:
        _, tape = camlab.forward(spec, weights, ex.image)
        occ = occlusion.occlusion_map(spec, weights, ex.image, ex.label,
                                      occ_cfg)
        heat = explain.gradcam(tape, ex.label, "r2")
        guided = explain.pixel_saliency(tape, ex.label, "guided")
        std = explain.pixel_saliency(tape, ex.label, "standard")
        maps = {
            "gradcam": heat,
            "guided-gradcam": explain.saliency_to_heatmap(
                explain.guided_gradcam(guided, heat)),
            "guided-backprop": explain.saliency_to_heatmap(guided),
            "backprop": explain.saliency_to_heatmap(std),
        }
        for name, m in maps.items():
            rho = evaluation.rank_correlation(m, occ)
            if not np.isnan(rho):
                rhos[name].append(rho)

    print("\nmean Spearman rank correlation vs occlusion:")
    for name, values in sorted(rhos.items(), key=lambda kv: -np.mean(kv[1])):
        print(f"  {name:16s} {np.mean(values):+.3f}")


if __name__ == "__main__":
    main()
