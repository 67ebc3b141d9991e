"""Convergence study for every model problem on shared CVT meshes.

Writes one CSV and one SVG chart per (problem, backend) into the output
directory and prints the least-squares slopes. Lightning bases are fitted
once per mesh and reused across problems.

    python3 scripts/convergence_study.py --cells 16,64,256,1024 --out results/
"""

import argparse
from pathlib import Path

from lightning_vem.analysis import StudyConfig, fitted_slope, records_to_csv, run_convergence
from lightning_vem.plotting import convergence_svg
from lightning_vem.problems import PROBLEM_IDS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", default="16,64,256,1024")
    ap.add_argument("--backends", default="lightning,vanilla")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cells = [int(c) for c in args.cells.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache: dict = {}
    for backend in args.backends.split(","):
        cfg = StudyConfig(backend=backend, rng_seed=args.seed)
        for pid in PROBLEM_IDS:
            recs = run_convergence(pid, cells, cfg, basis_cache=cache)
            stem = out / f"{pid}_{backend}"
            stem.with_suffix(".csv").write_text(records_to_csv(recs))
            stem.with_suffix(".svg").write_text(convergence_svg(recs, f"{pid}, {backend}"))
            h = [r.h_max for r in recs]
            s0 = fitted_slope(h, [r.e_L2 for r in recs])
            s1 = fitted_slope(h, [r.e_H1 for r in recs])
            print(f"{pid:>18} {backend:>9}: L2 slope {s0:.3f}, H1 slope {s1:.3f}  -> {stem}.csv")


if __name__ == "__main__":
    main()
