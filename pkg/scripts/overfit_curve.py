"""Print the per-step loss of the one-scene descent check for several seeds.

    python scripts/overfit_curve.py --mode radar_camera --seeds 0 1 2 --steps 50
"""

import argparse

from sensorattn.config import MODES, profile
from sensorattn.pipeline import overfit
from sensorattn.scene import generate_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=MODES, default="lidar_camera")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--every", type=int, default=10, help="print every n-th step")
    args = ap.parse_args()

    for seed in args.seeds:
        cfg = profile("desk").with_overrides(seed=seed, modality_mode=args.mode)
        rep = overfit(cfg, generate_scene(cfg), args.steps, args.lr)
        curve = " ".join(f"{i}:{v:.4f}" for i, v in enumerate(rep.losses) if i % args.every == 0 or i == len(rep.losses) - 1)
        print(f"seed {seed} {args.mode} reduction {rep.reduction:.1%}  {curve}")


if __name__ == "__main__":
    main()
