"""Map the compensator's stiffness contribution over angle and free length.

The spring adds Kc*a*L*eta(q2; s0) to the joint-2 stiffness; eta depends
only on the linkage geometry and the free length s0.  This script tabulates
eta over the working range for several s0 choices, flags any sign changes
(a negative eta means the compensator *softens* the joint there), and
optionally saves a PNG when matplotlib is importable.

Usage: python scripts/eta_landscape.py [--s0 420,458,500] [--png out.png]
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from stiffcal import eta_curve, load_model


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--s0", default="420,458,500")
    ap.add_argument("--png", default=None)
    args = ap.parse_args(argv)

    model_path = Path(__file__).resolve().parents[1] / "configs" / "kr270_like.yaml"
    model = load_model(model_path)
    geom = model.compensator.geometry
    s0_vals = [float(t) for t in args.s0.split(",")]
    q2 = np.radians(np.linspace(-140.0, 0.0, 57))
    table = eta_curve(geom, s0_vals, q2)

    print(f"linkage: L={geom.L_mm:.1f} mm, a={geom.a_mm:.1f} mm, "
          f"alpha={np.degrees(geom.alpha_rad):.2f} deg")
    for s0 in s0_vals:
        rows = table[np.isclose(table[:, 1], s0)]
        lo, hi = rows[:, 2].min(), rows[:, 2].max()
        n_neg = int(np.sum(rows[:, 2] <= 0))
        note = f", NEGATIVE at {n_neg} angles" if n_neg else ""
        print(f"  s0={s0:6.1f} mm: eta in [{lo:+.3f}, {hi:+.3f}]{note}")

    if args.png:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not available; skipping plot", file=sys.stderr)
            return 0
        fig, ax = plt.subplots(figsize=(6, 4))
        for s0 in s0_vals:
            rows = table[np.isclose(table[:, 1], s0)]
            ax.plot(np.degrees(rows[:, 0]), rows[:, 2], label=f"s0={s0:g} mm")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_xlabel("joint-2 angle [deg]")
        ax.set_ylabel("eta")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.png, dpi=150)
        print(f"saved {args.png}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
