"""Command-line experiment runner: CSV tables plus a replayable manifest."""

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .backend import NAME as BACKEND_NAME
from .dcf_sim import simulate, simulate_tft
from .mac_game import algorithm1_run, refined_equilibrium
from .markov import SolverError
from .oracle import price_of_anarchy, social_optimum
from .rate_game import (CertificationError, ConvergenceError, certify_unique_ne,
                        profile_throughputs, stationary_at)
from .scenario import ConfigError, Scenario, asymmetric, symmetric, two_class
from .throughput import slot_duration, user_throughput
from .channel import goodput

FLOAT_FMT = "%.9g"


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _manifest(out_dir, args, config_text, extra=None):
    record = {
        "subcommand": args.subcommand,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seed": args.seed,
        "step": getattr(args, "step", None),
        "slots": getattr(args, "slots", None),
        "mode": getattr(args, "mode", None),
        "version": __version__,
        "backend": BACKEND_NAME,
        "numpy": np.__version__,
    }
    if extra:
        record.update(extra)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(args):
    with open(args.config) as fh:
        text = fh.read()
    scenario = Scenario.from_dict(json.loads(text))
    if args.seed is not None:
        scenario.seed = args.seed
    else:
        args.seed = scenario.seed
    if args.step is not None:
        scenario.step = args.step
    else:
        args.step = scenario.step
    os.makedirs(args.out, exist_ok=True)
    return scenario, text


def _labels(scenario):
    return [u.label or str(i) for i, u in enumerate(scenario.users)]


def cmd_stationary(args):
    scenario, text = _load(args)
    ctx = scenario.context()
    rates = scenario.resolved_rates()
    state, pers = stationary_at(ctx, rates)
    rows = [
        [i, _labels(scenario)[i], rates[i], state.tau[i], state.p[i],
         state.q[i], state.rho[i], pers[i]]
        for i in range(ctx.n)
    ]
    _write_csv(os.path.join(args.out, "stationary.csv"),
               ["user", "label", "rate_bps", "tau", "p", "q", "rho", "per"],
               rows)
    _manifest(args.out, args, text,
              {"residual": state.residual, "idle_probability": state.c})
    return 0


def cmd_rate_ne(args):
    scenario, text = _load(args)
    ctx = scenario.context()
    ne = certify_unique_ne(ctx)
    thr = profile_throughputs(ctx, ne.rates)
    rows = [[i, _labels(scenario)[i], ne.rates[i], thr[i]] for i in range(ctx.n)]
    _write_csv(os.path.join(args.out, "rate_ne.csv"),
               ["user", "label", "rate_bps", "throughput_bps"], rows)
    _manifest(args.out, args, text,
              {"certified_gap": ne.gap, "rounds": ne.iterations,
               "welfare": float(np.sum(thr))})
    return 0


def cmd_mac_ne(args):
    scenario, text = _load(args)
    ctx = scenario.context()
    report = refined_equilibrium(ctx, step=scenario.step,
                                 scan_cap=scenario.scan_cap)
    ws = sorted(report.w_hats[0].curve)
    rows = []
    for w in ws:
        rows.append([w] + [report.w_hats[i].curve[w] for i in range(ctx.n)])
    _write_csv(os.path.join(args.out, "utility_curve.csv"),
               ["w"] + [f"s_{i}" for i in range(ctx.n)], rows)
    ne_rows = [
        [i, _labels(scenario)[i],
         report.rates[i] if report.rates is not None else "",
         report.throughputs[i]]
        for i in range(ctx.n)
    ]
    _write_csv(os.path.join(args.out, "mac_ne.csv"),
               ["user", "label", "rate_bps", "throughput_bps"], ne_rows)
    _manifest(args.out, args, text,
              {"w_star": report.w_star, "equilibria": report.equilibria,
               "stop_w": report.stop_w})
    return 0


def cmd_algo1(args):
    scenario, text = _load(args)
    ctx = scenario.context()
    measurement = "analytic"
    if args.mode == "simulated":
        measurement = _simulated_measurement(scenario, args.slots or 200000)
    result = algorithm1_run(ctx, step=scenario.step, eps=scenario.epsilon,
                            measurement=measurement,
                            scan_cap=scenario.scan_cap)
    _write_csv(os.path.join(args.out, "algo1_trace.csv"),
               ["round", "sender", "kind", "payload"],
               [[m.round, m.sender, m.kind,
                 "" if np.isnan(m.payload) else m.payload] for m in result.trace])
    _write_csv(os.path.join(args.out, "algo1.csv"),
               ["agent", "final_w", "w_star", "s_max", "w_max"],
               [[a.index, result.final_ws[a.index], a.w_star, a.s_max,
                 a.w_max if np.isfinite(a.w_max) else ""] for a in result.agents])
    _manifest(args.out, args, text,
              {"w_star": result.w_star, "search_rounds": result.search_rounds,
               "settle_rounds": result.settle_rounds})
    return 0


def _simulated_measurement(scenario, slots):
    ctx = scenario.context()

    def measure(w):
        sub = scenario.context().with_cw(w)
        if w > 3:
            ne = certify_unique_ne(sub)
            rates = ne.rates
        else:
            rates = scenario.resolved_rates()
        sim_scenario = Scenario(users=sub.users, timing=scenario.timing,
                                max_stage=scenario.max_stage,
                                seed=scenario.seed)
        cfg = sim_scenario.sim_config(slots, seed=scenario.seed + w,
                                      rates=rates)
        if w <= 3:
            for node in cfg.nodes:
                node.cw = max(w, 1)
        stats = simulate(cfg)
        return stats.s_hat

    _ = ctx
    return measure


def cmd_optimum(args):
    scenario, text = _load(args)
    ctx = scenario.context()
    report = social_optimum(ctx, seed=scenario.seed)
    rows = [[i, _labels(scenario)[i], report.rates_opt[i]] for i in range(ctx.n)]
    _write_csv(os.path.join(args.out, "optimum.csv"),
               ["user", "label", "rate_bps"], rows)
    _manifest(args.out, args, text,
              {"w_opt": report.w_opt, "welfare_opt": report.welfare_opt,
               "trace": {k: v for k, v in report.trace.items()}})
    return 0


def cmd_poa(args):
    scenario, text = _load(args)
    ctx = scenario.context()
    rate_rep = price_of_anarchy(ctx, level="rate", seed=scenario.seed)
    sys_rep = price_of_anarchy(ctx, level="system", step=scenario.step,
                               seed=scenario.seed)
    _write_csv(os.path.join(args.out, "poa.csv"),
               ["level", "poa", "welfare_opt_bps", "welfare_eq_bps"],
               [["rate", rate_rep.poa, rate_rep.welfare_opt, rate_rep.welfare_eq],
                ["system", sys_rep.poa, sys_rep.welfare_opt, sys_rep.welfare_eq]])
    _manifest(args.out, args, text, {"rate_poa": rate_rep.poa,
                                     "system_poa": sys_rep.poa})
    return 0


def _sweep_point(family, n, draw, base_seed, step):
    if family == "symmetric":
        scenario = symmetric(n)
    elif family == "two-class":
        scenario = two_class(n)
    else:
        rng = np.random.default_rng(base_seed + 1000 * n + draw)
        scenario = asymmetric(rng.uniform(5.0, 25.0, n))
    ctx = scenario.context()
    if family == "asymmetric":
        rep = price_of_anarchy(ctx, level="rate", seed=base_seed, multi_starts=3)
        return [family, n, draw, ctx.users[0].mac.cw, ctx.users[0].mac.cw,
                rep.poa, rep.welfare_eq, rep.welfare_opt]
    eq = refined_equilibrium(ctx, step=step)
    opt = social_optimum(ctx, seed=base_seed,
                         hints=[eq.rates] if eq.rates is not None else [])
    welfare_eq = float(np.sum(eq.throughputs))
    poa = opt.welfare_opt / welfare_eq if welfare_eq > 0 else float("inf")
    return [family, n, draw, eq.w_star, opt.w_opt, poa, welfare_eq,
            opt.welfare_opt]


def cmd_sweep(args):
    ns = [int(x) for x in args.n_list.split(",") if x.strip()]
    if not ns:
        raise ConfigError("sweep: --n-list is empty")
    draws = args.draws if args.family == "asymmetric" else 1
    points = [(args.family, n, d) for n in ns for d in range(draws)]
    seed = args.seed if args.seed is not None else 1
    step = args.step if args.step is not None else 5
    workers = int(os.environ.get("WLAN_GAME_THREADS", "1"))
    os.makedirs(args.out, exist_ok=True)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda p: _sweep_point(p[0], p[1], p[2], seed, step), points))
    else:
        rows = [_sweep_point(f, n, d, seed, step) for f, n, d in points]
    _write_csv(os.path.join(args.out, "sweep.csv"),
               ["family", "n", "draw", "w_ne", "w_opt", "poa",
                "welfare_ne_bps", "welfare_opt_bps"], rows)
    args.subcommand = "sweep"
    _manifest(args.out, args, f"{args.family}:{args.n_list}:{draws}",
              {"family": args.family, "n_list": ns, "draws": draws})
    return 0


def cmd_simulate(args):
    scenario, text = _load(args)
    slots = args.slots or 1000000
    tft = args.tft
    cfg = scenario.sim_config(slots, seed=scenario.seed, tft=tft)
    if tft != "off":
        trace = simulate_tft(cfg)
        trace.to_csv(os.path.join(args.out, "tft_trace.csv"))
        stats = trace.stats
    else:
        stats = simulate(cfg)
    rows = [
        [i, _labels(scenario)[i], cfg.nodes[i].cw, cfg.nodes[i].rate,
         stats.attempts[i], stats.successes[i], stats.collisions[i],
         stats.channel_errors[i], stats.tau_hat[i], stats.p_hat[i],
         stats.s_hat[i]]
        for i in range(scenario.n)
    ]
    _write_csv(os.path.join(args.out, "sim.csv"),
               ["node", "label", "cw", "rate_bps", "attempts", "successes",
                "collisions", "channel_errors", "tau_hat", "p_hat", "s_hat_bps"],
               rows)
    _manifest(args.out, args, text,
              {"slots": slots, "elapsed_s": stats.elapsed_s, "tft": tft})
    return 0


def cmd_validate(args):
    scenario, text = _load(args)
    ctx = scenario.context()
    slots = args.slots or 1000000
    rates = scenario.resolved_rates()
    state, pers = stationary_at(ctx, rates)
    stats = simulate(scenario.sim_config(slots, seed=scenario.seed, rates=rates))
    rows = []
    worst_tau = 0.0
    worst_s = 0.0
    for i, u in enumerate(ctx.users):
        g = goodput(u.link, rates[i], u.window.airtime)
        s_ana = user_throughput(state, i, g, ctx.timing, pers, "exact")
        d_tau = abs(stats.tau_hat[i] - state.tau[i]) / state.tau[i]
        d_s = abs(stats.s_hat[i] - s_ana) / s_ana
        worst_tau = max(worst_tau, d_tau)
        worst_s = max(worst_s, d_s)
        rows.append([i, state.tau[i], stats.tau_hat[i], d_tau, s_ana,
                     stats.s_hat[i], d_s])
    _write_csv(os.path.join(args.out, "validate.csv"),
               ["node", "tau_analytic", "tau_sim", "tau_rel_delta",
                "s_analytic_bps", "s_sim_bps", "s_rel_delta"], rows)
    _manifest(args.out, args, text,
              {"slots": slots, "max_tau_rel_delta": worst_tau,
               "max_s_rel_delta": worst_s,
               "slot_duration_exact_s": slot_duration(state, ctx.timing, pers, "exact")})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wlangame",
        description="Equilibria, optima and slot-level simulation of "
                    "multi-rate 802.11 WLANs with selfish users.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--step", type=int, default=None)
        p.add_argument("--slots", type=int, default=None)
        p.add_argument("--mode", choices=["analytic", "simulated"],
                       default="analytic")

    for name, fn in [("stationary", cmd_stationary), ("rate-ne", cmd_rate_ne),
                     ("mac-ne", cmd_mac_ne), ("algo1", cmd_algo1),
                     ("optimum", cmd_optimum), ("poa", cmd_poa),
                     ("validate", cmd_validate)]:
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("simulate")
    common(p)
    p.add_argument("--tft", choices=["off", "mac", "mac+rate"], default="off")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep")
    common(p, config=False)
    p.add_argument("--family", choices=["symmetric", "two-class", "asymmetric"],
                   required=True)
    p.add_argument("--n-list", required=True,
                   help="comma-separated user counts, e.g. 2,7,12")
    p.add_argument("--draws", type=int, default=100,
                   help="random draws per point (asymmetric family)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ConvergenceError, CertificationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
