"""Plot fingertip error and clearances from a trace directory written by
`vfgrasp run --out DIR`.

    python scripts/plot_trace.py DIR [--out error.png]
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("trace_dir", type=Path)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    steps = pd.read_csv(args.trace_dir / "steps.csv")
    events = json.loads((args.trace_dir / "events.json").read_text())

    fig, (ax_err, ax_clr) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    ax_err.plot(steps["t"], steps["error"] * 100, label="max fingertip error")
    ax_err.plot(steps["t"], steps["center_error"] * 100, label="center error", alpha=0.7)
    ax_err.axhline(1.0, color="k", ls="--", lw=0.8, label="1 cm band")
    ax_err.set_ylabel("error (cm)")
    ax_err.legend(loc="upper right")

    ax_clr.plot(steps["t"], steps["min_gamma"] * 100, label="min robot clearance")
    ax_clr.plot(steps["t"], steps["min_object"] * 100, label="min object clearance")
    ax_clr.axhline(0.0, color="k", lw=0.8)
    ax_clr.set_ylabel("clearance (cm)")
    ax_clr.set_xlabel("t (s)")
    ax_clr.legend(loc="upper right")

    for e in events:
        if e["kind"] == "disturbance":
            for ax in (ax_err, ax_clr):
                ax.axvline(e["t"], color="tab:pink", alpha=0.6)

    fig.tight_layout()
    out = args.out or args.trace_dir / "error.png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
