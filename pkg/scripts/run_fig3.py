"""Unequal class sizes: SEDA, bias-corrected SEDA and the oracle intercept."""

from _common import parser, row

from seda.simulate import ClassifierSpec, CovarianceSpec, ExperimentConfig, MeanSpec, run_experiment

ROSTER = tuple(ClassifierSpec(name, kind, lam=0.1, large_level=-1.0, small_level=0.5)
               for name, kind in (("seda", "seda"), ("corrected", "seda_corrected"), ("oracle", "seda_oracle")))


def main():
    ap = parser(__doc__, 100)
    ap.add_argument("--dims", type=int, nargs="+", default=[100, 200])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--n1", type=int, nargs="+", default=[40, 60, 80, 100, 120, 140, 160])
    args = ap.parse_args()
    row("p", "n1", "seda", "corrected", "oracle", "theory", "theory_c")
    for p in args.dims:
        for n1 in args.n1:
            cfg = ExperimentConfig(covariance=CovarianceSpec("case1", p),
                                   mean=MeanSpec("random-normal", fixed={0: 0.1, 1: 0.1, p - 1: 0.1}),
                                   n1=n1, n2=args.n - n1, roster=ROSTER, replications=args.replications,
                                   base_seed=args.seed)
            s = run_experiment(cfg, threads=args.threads).summary()
            row(p, n1, s["seda"]["mean"], s["corrected"]["mean"], s["oracle"]["mean"],
                s["seda"]["theory"], s["corrected"]["theory"])


if __name__ == "__main__":
    main()
