import argparse

import numpy as np


def parser(description, replications):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--replications", type=int, default=replications)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    return ap


def row(*cells, width=10):
    out = []
    for c in cells:
        out.append(f"{c:>{width}.4f}" if isinstance(c, (float, np.floating)) else f"{c!s:>{width}}")
    print(" ".join(out))
