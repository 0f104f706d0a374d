"""Time one forward pass at full dimensions and report the output shapes."""

import argparse
import time

from sensorattn.config import MODES, profile
from sensorattn.pipeline import forward, init_model
from sensorattn.scene import generate_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mode", choices=MODES, default="all")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = profile("paper").with_overrides(modality_mode=args.mode, seed=args.seed)
    t0 = time.perf_counter()
    scene = generate_scene(cfg)
    params = init_model(cfg)
    t1 = time.perf_counter()
    res = forward(params, scene, cfg)
    t2 = time.perf_counter()
    print(f"scene+init {t1 - t0:.1f}s, forward {t2 - t1:.1f}s")
    print(f"queries {res.queries.shape}, boxes {res.preds.regression.shape}, logits {res.preds.logits.shape}")
    for name, t in sorted(res.dumps.items()):
        print(f"  {name}: {t.shape}")


if __name__ == "__main__":
    main()
