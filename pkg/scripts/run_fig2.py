"""Cases 1-3: Bayes oracle, RLDA on a lambda grid and tuned SEDA."""

import numpy as np
from _common import parser, row

from seda.simulate import ClassifierSpec, CovarianceSpec, ExperimentConfig, MeanSpec, run_experiment

LAMS = tuple(np.logspace(-2, 1, 7))


def main():
    ap = parser(__doc__, 100)
    ap.add_argument("--p", type=int, default=100)
    ap.add_argument("--n1", type=int, default=100)
    ap.add_argument("--n2", type=int, default=100)
    args = ap.parse_args()
    roster = (ClassifierSpec("bayes", "bayes"), ClassifierSpec("tuned", "seda_tuned"),
              ClassifierSpec("tuned_c", "seda_tuned_corrected"),
              *(ClassifierSpec(f"rlda@{lam:.3g}", "rlda", lam=float(lam)) for lam in LAMS))
    row("case", "classifier", "mean", "sd", "theory", width=12)
    for case in ("case1", "case2", "case3"):
        cfg = ExperimentConfig(covariance=CovarianceSpec(case, args.p), mean=MeanSpec("random-normal"),
                               n1=args.n1, n2=args.n2, roster=roster, replications=args.replications,
                               base_seed=args.seed)
        for name, s in run_experiment(cfg, threads=args.threads).summary().items():
            row(case, name, s["mean"], s["sd"], s["theory"], width=12)


if __name__ == "__main__":
    main()
