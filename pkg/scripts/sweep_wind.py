"""Social cost and capacity as installed wind grows."""

from _common import base_config, out_dir, parser

from drcap.experiment import collect_rows, emit_results, run_experiment, write_compare

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--wind", default="0,50,100,200", help="wind capacities in kW")
    args = p.parse_args()
    wind = tuple(float(v) for v in args.wind.split(","))
    cfg = base_config(args, wind_capacity_kw=wind, policies=("opt", "seq", "pred", "lin"))
    rows = collect_rows(run_experiment(cfg))
    out = out_dir(args)
    emit_results(rows, out / "wind.csv")
    write_compare(rows, out / "wind_compare.csv")
    for r in rows:
        print(f"{r.policy:5s} wind={r.wind_kw:6g} cost={r.social_cost_usd_yr:12.2f} kappa={r.kappa_kw:8.3f}")
