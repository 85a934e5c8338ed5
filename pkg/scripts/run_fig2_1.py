"""AR(1) covariance: RLDA error when mu1 lies along the k-th eigenvector, before and after amplifying s_p."""

from _common import parser, row

from seda.simulate import ClassifierSpec, CovarianceSpec, ExperimentConfig, MeanSpec, run_experiment


def main():
    ap = parser(__doc__, 100)
    ap.add_argument("--rho", type=float, default=0.5)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--amplify", type=float, default=20.0)
    ap.add_argument("--ks", type=int, nargs="+", default=[1, 10, 25, 50, 75, 90, 100])
    args = ap.parse_args()
    p = 100
    row("k", "plain", "theory", "amplified", "theory")
    for k in args.ks:
        cells = [k]
        for scale in ({}, {p: args.amplify}):
            cfg = ExperimentConfig(covariance=CovarianceSpec("ar1", p, rho=args.rho, eigen_scale=scale),
                                   mean=MeanSpec("eigvec", k=k), n1=100, n2=100,
                                   roster=(ClassifierSpec("rlda", "rlda", lam=args.lam),),
                                   replications=args.replications, base_seed=args.seed)
            s = run_experiment(cfg, threads=args.threads).summary()["rlda"]
            cells += [s["mean"], s["theory"]]
        row(*cells)


if __name__ == "__main__":
    main()
