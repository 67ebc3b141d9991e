"""Average per-element assembly time of both backends, as a CSV table.

Lightning times include fitting the element basis. Absolute numbers depend
on the machine; only the trend across meshes is meaningful.

    python3 scripts/timing_table.py --cells 4,16,64,256,1024 -o timings.csv
"""

import argparse
import sys

from lightning_vem.analysis import StudyConfig, timing_compare, timings_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cells", default="4,16,64,256,1024")
    ap.add_argument("--problem", default="adr")
    ap.add_argument("-o", "--output")
    args = ap.parse_args()

    rows = timing_compare([int(c) for c in args.cells.split(",")], StudyConfig(), args.problem)
    text = timings_to_csv(rows)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


if __name__ == "__main__":
    main()
