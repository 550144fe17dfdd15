"""Gap to OPT of PRED and LIN as the spread of realised cost coefficients grows."""

from _common import base_config, out_dir, parser

from drcap.experiment import collect_rows, emit_results, run_experiment

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--rsd", default="0,0.05,0.1,0.15,0.2,0.25,0.3")
    args = p.parse_args()
    rsds = tuple(float(v) for v in args.rsd.split(","))
    cfg = base_config(args, cost_rsd=rsds, policies=("opt", "pred", "lin"))
    rows = collect_rows(run_experiment(cfg))
    emit_results(rows, out_dir(args) / "rsd.csv")
    cost = {(r.policy, r.rsd): r.social_cost_usd_yr for r in rows}
    print("rsd     pred-opt      lin-opt")
    for s in rsds:
        print(f"{s:4.2f} {cost['pred', s] - cost['opt', s]:12.2f} {cost['lin', s] - cost['opt', s]:12.2f}")
