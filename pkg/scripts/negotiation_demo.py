"""Price negotiation on a small customer set, compared with the central design."""

from _common import base_config, out_dir, parser

from drcap.experiment import build_scenarios, capacity_price_per_slot
from drcap.lin import LinProblem, lin_objective, negotiate, solve_lin_centralized, write_contract_csv
from drcap.model import LseCost

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--customers-per-base", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--zeta", type=float, default=1.0)
    args = p.parse_args()
    cfg = base_config(args, synthetic_homes=2, customers_per_base=args.customers_per_base)
    train, _ = build_scenarios(cfg, cfg.wind_capacity_kw[0], cfg.cost_rsd[0])
    cost = LseCost(cfg.lse_penalty_usd_per_kw2, capacity_price_per_slot(cfg.capacity_price_usd_per_kw_mo[0], cfg))
    res = negotiate(train, cost, zeta=args.zeta, eps=args.eps)
    for e in res.log[:: max(1, len(res.log) // 10)]:
        print(f"iter {e['iteration']:5d} residual {e['residual']:.3e} kappa {e['kappa']:.3f}")
    problem = LinProblem.from_scenarios(train)
    central = solve_lin_centralized(problem, cost).objective
    dist = lin_objective(problem, res.contract, cost)
    print(f"converged={res.converged} after {res.iterations} rounds")
    print(f"objective central={central:.8g} negotiated={dist:.8g} rel gap={abs(dist - central) / central:.2e}")
    write_contract_csv(res, out_dir(args) / "contract.csv")
