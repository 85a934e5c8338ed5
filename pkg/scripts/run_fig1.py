"""Case 1 with p/n1 = p/n2 = 1: empirical RLDA and SEDA errors against their limits as p grows."""

from _common import parser, row

from seda.simulate import ClassifierSpec, CovarianceSpec, ExperimentConfig, MeanSpec, run_experiment

ROSTER = (ClassifierSpec("rlda", "rlda", lam=0.1),
          ClassifierSpec("seda", "seda", lam=0.1, large_level=-1.0, small_level=0.5))


def main():
    ap = parser(__doc__, 100)
    ap.add_argument("--dims", type=int, nargs="+", default=[20, 50, 80, 100, 140, 200])
    args = ap.parse_args()
    row("p", "classifier", "mean", "sd", "theory", "gap")
    for p in args.dims:
        cfg = ExperimentConfig(covariance=CovarianceSpec("case1", p),
                               mean=MeanSpec("random-normal", fixed={0: 0.1, 1: 0.1, p - 1: 0.1}),
                               n1=p, n2=p, roster=ROSTER, replications=args.replications, base_seed=args.seed)
        for name, s in run_experiment(cfg, threads=args.threads).summary().items():
            row(p, name, s["mean"], s["sd"], s["theory"], s["mean"] - s["theory"])


if __name__ == "__main__":
    main()
