"""Social cost of every policy across capacity prices (USD per kW-month)."""

from _common import base_config, out_dir, parser

from drcap.experiment import collect_rows, emit_results, run_experiment, write_compare

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--prices", default="0.01,0.1,1,10,50")
    args = p.parse_args()
    prices = tuple(float(v) for v in args.prices.split(","))
    cfg = base_config(args, capacity_price_usd_per_kw_mo=prices, policies=("opt", "seq", "pred", "lin"))
    rows = collect_rows(run_experiment(cfg))
    out = out_dir(args)
    emit_results(rows, out / "capacity_price.csv")
    write_compare(rows, out / "capacity_price_compare.csv")
    print(f"wrote {len(rows)} rows to {out}")
