"""Experiment driver: JSON config in, JSON report plus CSV series out.

Each run loads one config, dispatches on its kind, writes report.json
and series.csv into the output directory, and prints a fixed-width
summary. Reports contain only outputs of named package operations; the
driver itself formats, never computes. Identical config and seed give
byte-identical reports.

Exit codes: 0 on success, 2 on a typed domain outcome (no minimizer,
envelope violation), 1 on usage or IO problems.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cost_minimizer as cm
from . import covariance as cov
from . import envelope as env
from . import measure_ensemble as me
from . import representation as rp
from . import stationary as st
from .errors import BadConfig, EnvmmError

KINDS = (
    "envelope_check",
    "minimize",
    "verify_extremal",
    "wss_envelope",
    "wss_filter",
    "elliptic_demo",
)

_REQUIRED = {
    "envelope_check": ("source", "candidate"),
    "minimize": ("source", "target_map", "input_map"),
    "verify_extremal": (
        "source",
        "sigma_xi",
        "target_map",
        "input_map",
        "seed",
        "n_samples",
        "n_operators",
    ),
    "wss_envelope": ("seq_a", "seq_b", "n_freq"),
    "wss_filter": ("seq", "target_kernel", "observation_kernel", "n_freq", "seed"),
    "elliptic_demo": ("n_x", "bump_centers", "alphas", "basis_dim", "seed", "n_atoms"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description: a kind plus its parameters."""

    kind: str
    params: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise BadConfig(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise BadConfig("config must be a JSON object")
        kind = raw.get("kind")
        if kind not in KINDS:
            raise BadConfig(
                f"config field 'kind' must be one of {', '.join(KINDS)}; got {kind!r}"
            )
        missing = [f for f in _REQUIRED[kind] if f not in raw]
        if missing:
            raise BadConfig(
                f"config for kind '{kind}' is missing field(s): {', '.join(missing)}"
            )
        params = {k: v for k, v in raw.items() if k != "kind"}
        return cls(kind=kind, params=params, base_dir=path.parent)


def _load_ensemble(obj, base_dir: Path, field: str) -> me.SourceEnsemble:
    if isinstance(obj, dict) and "csv" in obj:
        return me.ensemble_from_csv(base_dir / obj["csv"])
    try:
        weights = np.asarray(obj["weights"], dtype=float)
        values = np.asarray(obj["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadConfig(f"field '{field}' must give weights and (m,d,p) values") from exc
    if values.ndim != 3:
        raise BadConfig(f"field '{field}' values must be nested (m, d, p)")
    return me.SourceEnsemble(space=me.MeasureSpace(weights=weights), values=values)


def _load_matrix(obj, field: str) -> np.ndarray:
    try:
        mat = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise BadConfig(f"field '{field}' must be a numeric matrix") from exc
    if mat.ndim != 2:
        raise BadConfig(f"field '{field}' must be two-dimensional")
    return mat


def _load_sequence(obj, field: str) -> st.CovarianceSequence:
    try:
        lags = np.asarray(obj["lags"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise BadConfig(f"field '{field}' must give nonnegative lags") from exc
    if lags.ndim != 3:
        raise BadConfig(f"field '{field}' lags must be nested (L+1, d, d)")
    return st.CovarianceSequence.from_nonneg_lags(lags)


def _representation(params: dict, d: int, p: int) -> rp.RepresentationOperator:
    return rp.RepresentationOperator(
        target_map=_load_matrix(params["target_map"], "target_map"),
        input_map=_load_matrix(params["input_map"], "input_map"),
        d=d,
        p=p,
        mixing_norm=float(params.get("mixing_norm", 1.0)),
    )


# ---------------------------------------------------------------------------
# pipelines


def _run_envelope_check(params: dict, base_dir: Path):
    tol = float(params.get("tol", 1e-9))
    source = _load_ensemble(params["source"], base_dir, "source")
    candidate = _load_ensemble(params["candidate"], base_dir, "candidate")
    member, margin = env.is_member(candidate, source, tol=tol)
    spectrum = cov.order_spectrum(
        me.second_moment(source), me.second_moment(candidate)
    )
    report = {
        "kind": "envelope_check",
        "member": bool(member),
        "lambda_min_margin": float(margin),
        "tol": tol,
    }
    series = [["eig_index", "order_eigenvalue"]] + [
        [i, float(v)] for i, v in enumerate(spectrum)
    ]
    return report, series, 0 if member else 2


def _run_minimize(params: dict, base_dir: Path):
    source = _load_ensemble(params["source"], base_dir, "source")
    rep = _representation(params, source.d, source.p)
    obs = rp.apply(rep, source)
    system = cm.assemble_normal_equations(obs)
    rank_tol = float(params.get("rank_tol", cm.DEFAULT_RANK_RTOL))
    report = {
        "kind": "minimize",
        "coercivity_margin": cm.coercivity_margin(system),
        "target_energy": system.target_energy,
    }
    if "c_min" in params:
        est = cm.solve_coercive(system, float(params["c_min"]))
        kernel_dim, unique = 0, True
    else:
        outcome = cm.solution_set(system, rank_tol=rank_tol)
        if isinstance(outcome, cm.NoMinimizer):
            report.update(
                {
                    "no_minimizer": True,
                    "range_violation": outcome.range_violation,
                }
            )
            series = [["eig_index", "gram_eigenvalue"]] + [
                [i, float(v)] for i, v in enumerate(cm.gram_spectrum(system))
            ]
            return report, series, 2
        est = outcome.t0
        kernel_dim = outcome.kernel_basis.shape[0]
        unique = outcome.unique
    report.update(
        {
            "no_minimizer": False,
            "residual": cm.residual_norm(system, est),
            "hs_norm": est.hs_norm,
            "kernel_dim": int(kernel_dim),
            "unique": bool(unique),
            "cost": cm.system_cost(system, est),
        }
    )
    series = [["eig_index", "gram_eigenvalue"]] + [
        [i, float(v)] for i, v in enumerate(cm.gram_spectrum(system))
    ]
    return report, series, 0


def _run_verify_extremal(params: dict, base_dir: Path):
    source = _load_ensemble(params["source"], base_dir, "source")
    rep = _representation(params, source.d, source.p)
    spec = me.BaselineSpec(sigma_xi=_load_matrix(params["sigma_xi"], "sigma_xi"))
    seed = int(params["seed"])
    tol = float(params.get("tol", 1e-9))
    rng = np.random.default_rng(seed)
    estimators = [
        cm.HSOperator(coeffs=rng.standard_normal((rep.p_out, rep.q)))
        for _ in range(int(params["n_operators"]))
    ]
    rep_report = env.verify_extremal(
        source,
        spec,
        rep,
        estimators,
        seed=seed,
        n_samples=int(params["n_samples"]),
        tol=tol,
        shrink_floor=float(params.get("shrink_floor", 0.0)),
    )
    report = {"kind": "verify_extremal", "seed": seed, "tol": tol, **rep_report.as_dict()}
    del report["cost_samples"]
    series = [["sample", "cost"]] + [
        [int(i), float(c)] for i, c in rep_report.cost_samples
    ]
    return report, series, 0 if rep_report.member else 2


def _run_wss_envelope(params: dict, base_dir: Path):
    tol = float(params.get("tol", 1e-9))
    seq_a = _load_sequence(params["seq_a"], "seq_a")
    seq_b = _load_sequence(params["seq_b"], "seq_b")
    n_freq = int(params["n_freq"])
    sa = st.spectral_density(seq_a, n_freq)
    sb = st.spectral_density(seq_b, n_freq)
    ok, (worst_freq, worst_margin) = st.wss_envelope_test(sa, sb, tol=tol)
    margins = st.spectral_margins(sa, sb)
    report = {
        "kind": "wss_envelope",
        "member": bool(ok),
        "worst_frequency": worst_freq,
        "worst_margin": worst_margin,
        "n_freq": n_freq,
        "tol": tol,
    }
    series = [["freq_index", "margin"]] + [
        [r, float(v)] for r, v in enumerate(margins)
    ]
    return report, series, 0 if ok else 2


def _run_wss_filter(params: dict, base_dir: Path):
    seq = _load_sequence(params["seq"], "seq")
    n = int(params["n_freq"])
    seed = int(params["seed"])
    rank_tol = float(params.get("rank_tol", cm.DEFAULT_RANK_RTOL))
    model = st.LTIModel.from_impulse_response(
        np.asarray(params["target_kernel"], dtype=float),
        np.asarray(params["observation_kernel"], dtype=float),
        n,
    )
    oracle = st.circulant_oracle(seq, model, n, seed=seed, rank_tol=rank_tol)
    report = {
        "kind": "wss_filter",
        "seed": seed,
        "max_symbol_gap": oracle.max_symbol_gap,
        "flagged_count": oracle.flagged_count,
        "embedding_lambda_min": oracle.embedding_lambda_min,
        "no_minimizer": oracle.no_minimizer,
        "off_diagonal_leakage": oracle.off_diagonal_leakage,
        "target_energy_time": oracle.target_energy_time,
        "target_energy_freq": oracle.target_energy_freq,
    }
    series = [["freq_index", "tau_re", "tau_im", "gap"]] + [
        [r, float(t.real), float(t.imag), float(g)]
        for r, (t, g) in enumerate(zip(oracle.tau, oracle.gaps))
    ]
    return report, series, 2 if oracle.no_minimizer else 0


def _run_elliptic_demo(params: dict, base_dir: Path):
    cfg = rp.EllipticConfig(
        n_x=int(params["n_x"]),
        potential=float(params.get("potential", 0.0)),
        bump_width=(
            None if params.get("bump_width") is None else float(params["bump_width"])
        ),
        bump_centers=tuple(float(c) for c in params["bump_centers"]),
        alphas=tuple(float(a) for a in params["alphas"]),
        basis_dim=int(params["basis_dim"]),
        ell=None if params.get("ell") is None else tuple(params["ell"]),
    )
    rep, meta = rp.build_elliptic_representation(cfg)
    seed = int(params["seed"])
    rng = np.random.default_rng(seed)
    m = int(params["n_atoms"])
    source = me.SourceEnsemble(
        space=me.MeasureSpace(weights=rng.uniform(0.5, 1.5, size=m)),
        values=rng.standard_normal((m, cfg.d, cfg.basis_dim)),
    )
    candidate = env.sample_dominated(source, seed + 1, 1)[0]
    pushed_src = cov.push_forward(rep.target_map, me.second_moment(source))
    pushed_cand = cov.push_forward(rep.target_map, me.second_moment(candidate))
    transfer_ok, transfer_margin = cov.loewner_dominates(
        pushed_src, pushed_cand, tol=float(params.get("tol", 1e-9))
    )
    obs = rp.apply(rep, source)
    system = cm.assemble_normal_equations(obs)
    outcome = cm.solution_set(system)
    report = {
        "kind": "elliptic_demo",
        "seed": seed,
        "component_gains": meta["component_gains"],
        "grid_step": meta["grid_step"],
        "transfer_ok": bool(transfer_ok),
        "transfer_margin": float(transfer_margin),
    }
    if isinstance(outcome, cm.NoMinimizer):
        report.update({"no_minimizer": True, "range_violation": outcome.range_violation})
        code = 2
    else:
        report.update(
            {
                "no_minimizer": False,
                "residual": cm.residual_norm(system, outcome.t0),
                "kernel_dim": int(outcome.kernel_basis.shape[0]),
                "unique": bool(outcome.unique),
                "hs_norm": outcome.t0.hs_norm,
            }
        )
        code = 0 if transfer_ok else 2
    series = [["n_in", "truncation_residual"]]
    for n_in in range(1, cfg.basis_dim + 1):
        trunc = rp.truncate(rep, n_in, min(rep.p_out, rep.q))
        _, aggregate = rp.truncation_residual(rep, trunc, source)
        series.append([n_in, float(aggregate)])
    return report, series, code


_PIPELINES = {
    "envelope_check": _run_envelope_check,
    "minimize": _run_minimize,
    "verify_extremal": _run_verify_extremal,
    "wss_envelope": _run_wss_envelope,
    "wss_filter": _run_wss_filter,
    "elliptic_demo": _run_elliptic_demo,
}

_TOL_FIELD = {
    "envelope_check": "tol",
    "minimize": "rank_tol",
    "verify_extremal": "tol",
    "wss_envelope": "tol",
    "wss_filter": "rank_tol",
    "elliptic_demo": "tol",
}

_SUMMARY_FIELDS = {
    "envelope_check": ("member", "lambda_min_margin", "tol"),
    "minimize": (
        "no_minimizer",
        "residual",
        "kernel_dim",
        "unique",
        "hs_norm",
        "coercivity_margin",
        "cost",
        "range_violation",
    ),
    "verify_extremal": (
        "member",
        "max_violation",
        "cost_reference",
        "lambda_min_margin",
    ),
    "wss_envelope": ("member", "worst_frequency", "worst_margin"),
    "wss_filter": (
        "max_symbol_gap",
        "flagged_count",
        "no_minimizer",
        "embedding_lambda_min",
        "off_diagonal_leakage",
    ),
    "elliptic_demo": (
        "transfer_ok",
        "transfer_margin",
        "residual",
        "kernel_dim",
        "unique",
        "no_minimizer",
    ),
}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


def emit_summary(report: dict) -> str:
    """Fixed-width field table for one report, deterministic ordering."""
    kind = report.get("kind", "")
    fields = _SUMMARY_FIELDS.get(kind, tuple(sorted(report)))
    lines = [f"{'kind':<24} {kind}"]
    for name in fields:
        if name in report:
            lines.append(f"{name:<24} {_format_value(report[name])}")
    return "\n".join(lines)


def _jsonify(value):
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    return value


def run(
    config_path: str | Path,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    tol: float | None = None,
) -> int:
    """Execute one experiment config; returns the process exit code."""
    try:
        config = ExperimentConfig.load(config_path)
        params = dict(config.params)
        if seed is not None:
            params["seed"] = int(seed)
        if tol is not None:
            params[_TOL_FIELD[config.kind]] = float(tol)
        out = Path(out_dir) if out_dir is not None else Path.cwd()
        out.mkdir(parents=True, exist_ok=True)
        report, series, code = _PIPELINES[config.kind](params, config.base_dir)
    except (EnvmmError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = json.dumps(_jsonify(report), sort_keys=True, indent=2) + "\n"
    (out / "report.json").write_bytes(payload.encode())
    with open(out / "series.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in series:
            writer.writerow(row)
    print(emit_summary(report))
    return code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="envmm",
        description="Worst-case projection experiments over covariance envelopes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} config")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--tol", type=float, default=None, help="override the kind's tolerance"
        )
    args = parser.parse_args(argv)
    try:
        config = ExperimentConfig.load(args.config)
    except EnvmmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    if config.kind != args.command:
        print(
            f"error: config kind '{config.kind}' does not match subcommand "
            f"'{args.command}'",
            file=sys.stderr,
        )
        return 1
    return run(args.config, out_dir=args.out, seed=args.seed, tol=args.tol)


if __name__ == "__main__":
    sys.exit(main())
