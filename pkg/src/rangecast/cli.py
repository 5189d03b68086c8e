"""Command-line entry point: ``rangecast <subcommand> ...``.

Every subcommand writes its outputs under the config's ``output_dir`` (or
``--out``) and exits 0. Failures print one JSON error record to stderr and
exit 1 (2 for usage errors, via argparse).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import backtest, randomwalk, recurrent
from .numeric import SeededRng
from .windows import load_csv, make_windows, split

log = logging.getLogger("rangecast")


def _emit(doc) -> None:
    print(json.dumps(doc, indent=2))


def _out_dir(args, cfg=None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg is not None:
        return cfg.out_path
    return Path("results")


def _select(cfg, args):
    assets = [args.asset] if getattr(args, "asset", None) else list(cfg.data)
    window = args.window if getattr(args, "window", None) else cfg.window_lengths[0]
    seed = args.seed if getattr(args, "seed", None) is not None else cfg.seeds[0]
    return assets, window, seed


def _load_split(cfg, asset):
    if asset not in cfg.data:
        raise KeyError(f"asset {asset!r} not in config")
    return split(load_csv(cfg.resolve(cfg.data[asset]), asset), cfg.train_fraction)


def cmd_ingest(args):
    s = load_csv(args.csv, args.asset)
    close = s.column("close") if len(s) else np.array([])
    summary = {
        "asset": s.asset,
        "records": len(s),
        "first_date": s.records[0].date.isoformat() if len(s) else None,
        "last_date": s.records[-1].date.isoformat() if len(s) else None,
        "close_min": float(close.min()) if close.size else None,
        "close_max": float(close.max()) if close.size else None,
        "has_market_cap": bool(len(s)) and all(r.market_cap is not None for r in s.records),
    }
    if args.out:
        backtest._write(Path(args.out), json.dumps(summary, indent=2) + "\n")
    _emit(summary)


def cmd_train(args):
    cfg = backtest.ExperimentConfig.load(args.config)
    assets, window, seed = _select(cfg, args)
    out = _out_dir(args, cfg)
    written = []
    for asset in assets:
        train_s, _ = _load_split(cfg, asset)
        params, logs = backtest.fit_lstm(train_s, window, tuple(cfg.features), cfg.train, seed)
        stem = f"{asset}_w{window}_s{seed}"
        meta = {"asset": asset, "window_len": window, "seed": seed, "features": list(cfg.features), "train": asdict(replace(cfg.train, seed=seed))}
        out.mkdir(parents=True, exist_ok=True)
        written.append(recurrent.save_checkpoint(out / f"{stem}.ckpt.json", params, meta))
        rows = [[e.epoch, e.loss, e.mae, "" if e.val_loss is None else e.val_loss, "" if e.val_mae is None else e.val_mae] for e in logs]
        written.append(backtest._write(out / f"{stem}_epochs.csv", backtest._csv_text(["epoch", "loss", "mae", "val_loss", "val_mae"], rows)))
    _emit({"written": [str(p) for p in written]})


def cmd_backtest(args):
    cfg = backtest.ExperimentConfig.load(args.config)
    assets, window, seed = _select(cfg, args)
    out = _out_dir(args, cfg)
    summary = []
    for asset in assets:
        train_s, test_s = _load_split(cfg, asset)
        if args.checkpoint:
            if cfg.model != "lstm":
                raise ValueError("--checkpoint only applies to model 'lstm'")
            params, _ = recurrent.load_checkpoint(args.checkpoint)
            predictor = backtest.LstmPredictor(params)
        else:
            predictor, _ = backtest.build_predictor(cfg, train_s, window, seed)
        if args.mode == "point":
            ws = make_windows(test_s, window, 1, cfg.features)
            rep = backtest.run_point_to_point(predictor, ws, asset, seed)
        else:
            rep = backtest.run_multi_point(predictor, test_s, window, args.range, cfg.features, seed=seed)
        prefix = f"{asset}_{args.mode}_w{window}_r{rep.range}_s{seed}"
        files = backtest.export_report(rep, out, prefix)
        summary.append({"asset": asset, "overall_mae": rep.overall_mae, "files": [str(f) for f in files]})
    _emit(summary)


def cmd_randomwalk(args):
    cfg = backtest.ExperimentConfig.load(args.config)
    assets, window, seed = _select(cfg, args)
    out = _out_dir(args, cfg)
    summary = []
    for asset in assets:
        train_s, test_s = _load_split(cfg, asset)
        model = randomwalk.fit(train_s.column("close"), cfg.drift_mode)
        truth = test_s.column("close")
        rng = SeededRng(seed)
        if args.mode == "single":
            pred = randomwalk.predict_single_point(model, truth, args.stochastic, rng)
            idx = np.arange(1, truth.size)
            seg = np.arange(truth.size - 1)
            tgt = truth[1:]
        else:
            k = args.range or truth.size - 1
            starts = list(range(0, truth.size - k, k))
            pred = np.concatenate([randomwalk.predict_multi_point(model, truth[s], k, rng, args.stochastic) for s in starts])
            idx = np.concatenate([np.arange(s + 1, s + 1 + k) for s in starts])
            seg = np.repeat(np.arange(len(starts)), k)
            tgt = truth[idx]
        err = np.abs(pred - tgt)
        prefix = f"{asset}_randomwalk_{args.mode}{'_stochastic' if args.stochastic else ''}_s{seed}"
        rows = zip(idx.tolist(), seg.tolist(), tgt.tolist(), pred.tolist(), err.tolist())
        f1 = backtest._write(out / f"{prefix}_points.csv", backtest._csv_text(["index", "segment", "truth", "prediction", "abs_error"], rows))
        doc = {
            "asset": asset,
            "mode": args.mode,
            "stochastic": args.stochastic,
            "mu_hat": model.mu_hat,
            "sigma_hat": model.sigma_hat,
            "drift_mode": model.drift_mode,
            "mae_price": float(err.mean()),
            "mae_relative": float(np.mean(err / np.abs(tgt))),
            "seed": seed,
        }
        f2 = backtest._write(out / f"{prefix}.json", backtest._json_text(doc))
        summary.append({**doc, "files": [str(f1), str(f2)]})
    _emit(summary)


def cmd_grid(args):
    cfg = backtest.ExperimentConfig.load(args.config)
    result = backtest.grid_run(cfg)
    files = backtest.export_grid(result, _out_dir(args, cfg))
    _emit(
        {
            "fixed_window": {f"{a}/w{w}": row for (a, w), row in result.fixed_window_matrix().items()},
            "failures": {"/".join(map(str, k)): v for k, v in result.failures.items()},
            "files": [str(f) for f in files],
        }
    )


def cmd_diagnose(args):
    out = Path(args.out) if args.out else None
    if args.what == "gradflow":
        rnn = recurrent.RnnParams.scalar(w_s=args.ws, activation=args.activation)
        flow = recurrent.rnn_gradient_flow(rnn, args.seq_len)
        lstm = recurrent.LstmParams.zeros(1, 1)
        lstm.b_f[...] = args.forget_bias
        trace = recurrent.lstm_forward(lstm, np.zeros((args.seq_len, 1)))
        doc = {
            "rnn": {"w_s": args.ws, "activation": args.activation, "seq_len": args.seq_len, "cumulative": [float(c[0, 0]) for c in flow.cumulative]},
            "lstm": {"forget_bias": args.forget_bias, "dc_T_dc_1": float(recurrent.memory_retention(trace)[0])},
        }
    elif args.what == "autocorr":
        model = randomwalk.RandomWalkModel(0.0, args.sigma)
        emp = randomwalk.autocorr_empirical(model, args.t, args.k, args.n_paths, SeededRng(args.seed))
        doc = {"t": args.t, "k": args.k, "n_paths": args.n_paths, "seed": args.seed, "analytic": randomwalk.autocorr_analytic(args.t, args.k), "empirical": emp}
    else:
        if not args.points:
            raise ValueError("diagnose hysteresis needs --points (a *_points.csv export)")
        data = np.genfromtxt(args.points, delimiter=",", names=True)
        rep = backtest.hysteresis_diagnostic(data["prediction"], data["truth"], args.max_lag, args.ar_order)
        doc = asdict(rep)
    if out:
        backtest._write(out, backtest._json_text(doc))
    _emit(doc)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rangecast", description="LSTM / random-walk forecasting backtests")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and summarise an OHLCV CSV")
    p.add_argument("csv")
    p.add_argument("--asset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--asset")
        p.add_argument("--window", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("train", help="train an LSTM; write checkpoint and epoch log")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("backtest", help="one point-to-point or multi-point backtest")
    common(p)
    p.add_argument("--mode", choices=["point", "multi"], required=True)
    p.add_argument("--range", type=int, default=1)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("randomwalk", help="random-walk single/multi-point forecasts")
    common(p)
    p.add_argument("--mode", choices=["single", "multi"], required=True)
    p.add_argument("--range", type=int, help="multi-point horizon (default: whole test span)")
    p.add_argument("--stochastic", action="store_true")
    p.set_defaults(func=cmd_randomwalk)

    p = sub.add_parser("grid", help="window-length x prediction-range sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("diagnose", help="hysteresis, gradient-flow or autocorrelation diagnostics")
    p.add_argument("what", choices=["hysteresis", "gradflow", "autocorr"])
    p.add_argument("--out")
    p.add_argument("--points", help="points CSV for hysteresis")
    p.add_argument("--max-lag", type=int, default=5)
    p.add_argument("--ar-order", type=int, default=2)
    p.add_argument("--ws", type=float, default=0.5)
    p.add_argument("--activation", choices=["linear", "tanh"], default="linear")
    p.add_argument("--seq-len", type=int, default=100)
    p.add_argument("--forget-bias", type=float, default=50.0)
    p.add_argument("--t", type=int, default=200)
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--n-paths", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - converted to an error record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
