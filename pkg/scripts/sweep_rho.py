"""Flexible-commitment sweep: cost and leftover of the linear contract when
customers may skip a share of slots."""

from _common import base_config, out_dir, parser

from drcap.experiment import build_scenarios, capacity_price_per_slot
from drcap.flex import sweep_rho, write_rho_sweep_csv
from drcap.lin import solve_lin_centralized
from drcap.model import LseCost

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--mode", choices=("clairvoyant", "quantile"), default="clairvoyant")
    args = p.parse_args()
    cfg = base_config(args)
    out = out_dir(args)
    for c_mo in cfg.capacity_price_usd_per_kw_mo:
        train, test = build_scenarios(cfg, cfg.wind_capacity_kw[0], cfg.cost_rsd[0])
        cost = LseCost(cfg.lse_penalty_usd_per_kw2, capacity_price_per_slot(c_mo, cfg))
        contract = solve_lin_centralized(train, cost).contract
        sweep = sweep_rho(contract, test, cost, cfg.rho_grid, args.mode, cfg.audit_tolerance, train.a)
        write_rho_sweep_csv(sweep, out / f"rho_c{c_mo:g}_{args.mode}.csv")
        print(f"c={c_mo:g}: rho*={sweep.rho_star:.2f} cost ratio to rho=1 {sweep.social_cost[sweep.best] / sweep.cost_at(1.0):.4f}")
