"""Command-line entry point.

Subcommands::

    simulate    network.csv, truth.json
    fit         chain.csv, trace.csv, manifest.json
    diagnose    summary.csv, dic.json
    predict     predictive_draws.csv, strength_band.csv, metrics.json
    properties  strength_law.csv, sensitivity.csv, concentration.csv
    dispersion  dispersion.csv

Options come from flags and an optional flat ``key = value`` config file
(``--config``); flags win.  Every output starts with the seed and a digest
of the resolved configuration, and nothing is written unless the whole
command succeeds.  Failures print a JSON error record to stderr and exit
with status 2 (invalid input) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as gio
from .diagnostics import dic, geweke, summarize
from .errors import ConfigError, GPNetError
from .forecast import impute_missing, posterior_predictive_strength, predictive_metrics
from .network import ModelSpec, TemporalNetwork, m2_regressors
from .sampler import ChainOutput, SamplerConfig, apply_identification, run_chain
from .simgen import SimDesign, generate
from .theory import (
    concentration_experiment,
    concentration_pattern,
    dispersion_diagnostics,
    theta_for_dispersion,
    theta_for_strength,
    total_strength_law,
)

__all__ = ["RunConfig", "build_parser", "resolve_config", "run", "main"]

COMMANDS = ("simulate", "fit", "diagnose", "predict", "properties", "dispersion")


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one command."""

    command: str
    model: str = "m1"
    likelihood: str = "gp"
    iters: int = 2000
    burnin: int = 800
    thin: int = 4
    seed: int = 0
    lags: int = 2
    dim: int = 2
    mask_count: int = 0
    nodes: int = 20
    times: int = 8
    reps: int = 200
    split: Optional[int] = None
    data: Optional[str] = None
    chain: Optional[str] = None
    truth: Optional[str] = None
    out: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.model.lower() not in ("m1", "m2", "m3"):
            raise ConfigError("model must be one of m1, m2, m3")
        object.__setattr__(self, "model", self.model.lower())
        if self.likelihood not in ("gp", "poisson"):
            raise ConfigError("likelihood must be gp or poisson")
        for name in ("iters", "thin", "lags", "dim", "nodes", "times", "reps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.burnin < 0 or self.mask_count < 0 or self.seed < 0:
            raise ConfigError("burnin, mask-count and seed must be nonnegative")
        if self.out is None:
            raise ConfigError("--out is required")
        need = {
            "fit": ("data",),
            "diagnose": ("chain",),
            "predict": ("data", "chain"),
            "dispersion": ("data",),
        }.get(self.command, ())
        for name in need:
            if getattr(self, name) is None:
                raise ConfigError(f"{self.command} requires --{name}")
        if self.command == "fit" and self.burnin >= self.iters:
            raise ConfigError("burnin must be smaller than iters")

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(iterations=self.iters, burn_in=self.burnin, thin=self.thin, seed=self.seed,
                             likelihood=self.likelihood)

    def model_spec(self) -> ModelSpec:
        kind = self.model.upper()
        if kind == "M2":
            return ModelSpec.m2(k=self.lags)
        if kind == "M3":
            return ModelSpec.m3(d=self.dim)
        return ModelSpec.m1()

    def digest_fields(self) -> dict:
        """Options that determine the outputs (paths excluded)."""
        keep = {
            "simulate": ("model", "seed", "lags", "dim", "mask_count", "nodes", "times"),
            "fit": ("model", "likelihood", "iters", "burnin", "thin", "seed", "lags", "dim"),
            "diagnose": ("seed",),
            "predict": ("seed",),
            "properties": ("seed", "nodes", "reps"),
            "dispersion": ("seed", "split"),
        }[self.command]
        return {"command": self.command, **{k: getattr(self, k) for k in keep}}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gpnet", description="Generalized Poisson dynamic network models")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--model", choices=("m1", "m2", "m3"))
    p.add_argument("--likelihood", choices=("gp", "poisson"))
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lags", type=int, help="autoregressive order of M2")
    p.add_argument("--dim", type=int, help="latent dimension of M3")
    p.add_argument("--mask-count", type=int, help="entries of the last slice to hide (simulate)")
    p.add_argument("--nodes", type=int, help="network size (simulate, properties)")
    p.add_argument("--times", type=int, help="number of time points (simulate)")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates (properties)")
    p.add_argument("--split", type=int, help="1-based first time of the second period (dispersion)")
    p.add_argument("--data", help="edge list t,i,j,count")
    p.add_argument("--chain", help="output directory of a fit")
    p.add_argument("--truth", help="truth.json written by simulate")
    p.add_argument("--out", help="output directory")
    return p


_INT_KEYS = {"iters", "burnin", "thin", "seed", "lags", "dim", "mask_count", "nodes", "times", "reps", "split"}
_STR_KEYS = {"model", "likelihood", "data", "chain", "truth", "out"}


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}, line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key in _INT_KEYS:
            try:
                out[key] = int(value)
            except ValueError:
                raise ConfigError(f"{path}, line {lineno}: {key} must be an integer") from None
        elif key in _STR_KEYS:
            out[key] = value
        else:
            raise ConfigError(f"{path}, line {lineno}: unknown key {key!r}")
    return out


def resolve_config(argv) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    cfg_path = args.pop("config")
    values = read_config_file(cfg_path) if cfg_path else {}
    values.update({k: v for k, v in args.items() if v is not None})
    return RunConfig(command=command, **values)


# ---------------------------------------------------------------------------
# commands


def _digest(cfg: RunConfig, extra: Optional[dict] = None) -> str:
    return gio.config_digest({**cfg.digest_fields(), **(extra or {})})


def _regressors(spec, network):
    return m2_regressors(spec, network) if spec.kind == "M2" else None


def _simulate(cfg: RunConfig, stage: gio.OutputStage) -> None:
    kind = cfg.model.upper()
    design = SimDesign.reference(kind, seed=cfg.seed, n_nodes=cfg.nodes, n_times=cfg.times)
    if kind == "M2" and cfg.lags != len(design.delta):
        raise ConfigError(f"the M2 simulation design has {len(design.delta)} lags")
    if kind == "M3":
        design = replace(design, d=cfg.dim)
    network, truth = generate(design)
    masked = []
    if cfg.mask_count:
        from .forecast import mask_random_entries

        network, targets, truths = mask_random_entries(network, cfg.mask_count, np.random.default_rng([cfg.seed, 1]))
        masked = [{"t": t + 1, "i": network.labels[i], "j": network.labels[j], "count": int(c)}
                  for (i, j, t), c in zip(targets, truths)]
    digest = _digest(cfg)
    spec = design.model_spec()
    record = {
        "seed": cfg.seed,
        "config_digest": digest,
        "config": cfg.digest_fields(),
        "design": asdict(design),
        "truth": truth.as_dict(),
        "identified": apply_identification(truth, spec).as_dict(),
        "theta": truth.theta,
        "masked": masked,
    }
    stage.add("network.csv", gio.format_edges(network, cfg.seed, digest))
    stage.add("truth.json", gio.dumps_json(record))


def _fit(cfg: RunConfig, stage: gio.OutputStage) -> None:
    network = gio.ingest_edges(cfg.data)
    spec = cfg.model_spec()
    sampler = cfg.sampler_config()
    data_digest = gio.file_digest(cfg.data)
    digest = _digest(cfg, {"data": data_digest})
    chain = run_chain(spec, network, sampler, regressors=_regressors(spec, network))
    names, mat = _flatten(chain.draws)
    rows = [[s + 1, chain.loglik[s], *mat[s]] for s in range(len(chain.draws))]
    stage.add("chain.csv", gio.format_table(["draw", "loglik", *names], rows, cfg.seed, digest))
    tr = chain.trace
    trace_rows = zip(range(1, len(tr["theta"]) + 1), tr["zeta"], tr["theta"], tr["loglik"], np.mean(tr["alpha"], axis=1))
    stage.add("trace.csv", gio.format_table(["iteration", "zeta", "theta", "loglik", "alpha_mean"], trace_rows,
                                            cfg.seed, digest))
    manifest = {
        "seed": cfg.seed,
        "config_digest": digest,
        "config": cfg.digest_fields(),
        "data": {"path": str(cfg.data), "digest": data_digest, "n_nodes": network.n_nodes,
                 "n_times": network.n_times},
        "labels": {lab: k + 1 for k, lab in enumerate(network.labels)},
        "spec": spec.as_dict(),
        "sampler": asdict(sampler),
        "acceptance": chain.acceptance,
        "n_draws": len(chain.draws),
        "columns": ["draw", "loglik", *names],
    }
    stage.add("manifest.json", gio.dumps_json(manifest))


def _flatten(draws):
    from .diagnostics import flatten_draws

    return flatten_draws(draws)


def load_chain(chain_dir) -> tuple[ChainOutput, dict]:
    """Rebuild a :class:`ChainOutput` from a fit output directory."""
    chain_dir = Path(chain_dir)
    try:
        manifest = json.loads((chain_dir / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest in {chain_dir}: {exc}") from exc
    spec = ModelSpec(**manifest["spec"])
    sampler = SamplerConfig(**manifest["sampler"])
    header, rows = gio.read_table(chain_dir / "chain.csv")
    if not rows:
        raise ConfigError("the chain has no retained draws")
    data = manifest["data"]
    draws, ll = gio.chain_columns_to_states(spec, data["n_nodes"], data["n_times"], header, rows)
    return ChainOutput(spec, sampler, draws, ll, manifest["acceptance"]), manifest


def _load_data_for_chain(cfg: RunConfig, manifest: dict) -> TemporalNetwork:
    path = cfg.data or manifest["data"]["path"]
    network = gio.ingest_edges(path)
    if (network.n_nodes, network.n_times) != (manifest["data"]["n_nodes"], manifest["data"]["n_times"]):
        raise ConfigError("data dimensions do not match the chain")
    return network


def _diagnose(cfg: RunConfig, stage: gio.OutputStage) -> None:
    chain, manifest = load_chain(cfg.chain)
    network = _load_data_for_chain(cfg, manifest)
    digest = _digest(cfg, {"chain": manifest["config_digest"]})
    summary = summarize(chain)
    header, body = summary.as_table()
    stage.add("summary.csv", gio.format_table(header, body, cfg.seed, digest))
    d, p = dic(chain, chain.spec, network, _regressors(chain.spec, network))
    theta = chain.stack("theta")
    alpha_mean = chain.stack("alpha").mean(axis=1)
    report = {
        "seed": cfg.seed,
        "config_digest": digest,
        "chain_digest": manifest["config_digest"],
        "likelihood": chain.config.likelihood,
        "dic": d,
        "p_dic": p,
        "n_draws": len(chain.draws),
        "theta_mean": float(theta.mean()),
        "geweke_theta_p": _safe_geweke(theta),
        "geweke_alpha_mean_p": _safe_geweke(alpha_mean),
        "acceptance": chain.acceptance,
    }
    stage.add("dic.json", gio.dumps_json(report))


def _safe_geweke(x) -> float:
    try:
        return geweke(x)[1]
    except GPNetError:
        return math.nan


def _predict(cfg: RunConfig, stage: gio.OutputStage) -> None:
    chain, manifest = load_chain(cfg.chain)
    network = _load_data_for_chain(cfg, manifest)
    digest = _digest(cfg, {"chain": manifest["config_digest"], "data": gio.file_digest(cfg.data)})
    rng = np.random.default_rng([cfg.seed, 2])
    spec = chain.spec
    reg = _regressors(spec, network)
    pred = impute_missing(chain, spec, network, rng, reg)
    labels = network.labels
    n_draws = pred.values.shape[1]
    rows = [[t + 1, labels[i], labels[j], *pred.values[k]] for k, (i, j, t) in enumerate(pred.targets)]
    header = ["t", "i", "j", *[f"draw_{s + 1}" for s in range(n_draws)]]
    stage.add("predictive_draws.csv", gio.format_table(header, rows, cfg.seed, digest))

    report = {"seed": cfg.seed, "config_digest": digest, "n_targets": len(pred.targets), "metrics": None}
    if cfg.truth:
        truth = json.loads(Path(cfg.truth).read_text())
        lookup = {(m["t"], m["i"], m["j"]): m["count"] for m in truth.get("masked", [])}
        lookup.update({(m["t"], m["j"], m["i"]): m["count"] for m in truth.get("masked", [])})
        keys = [(t + 1, labels[i], labels[j]) for (i, j, t) in pred.targets]
        missing = [k for k in keys if k not in lookup]
        if missing:
            raise ConfigError(f"truth file has no value for target {missing[0]}")
        truths = np.array([lookup[k] for k in keys])
        report["metrics"] = asdict(predictive_metrics(truths, pred, rng))
    stage.add("metrics.json", gio.dumps_json(report))

    band = posterior_predictive_strength(chain, spec, network, rng)
    band_rows = [[t + 1, band.mean[t], band.lower[t], band.upper[t]] for t in range(network.n_times)]
    stage.add("strength_band.csv", gio.format_table(["t", "mean", "lower95", "upper95"], band_rows,
                                                    cfg.seed, digest))


SENS_SIGMA = (0.0, 0.01, 0.05, 0.1, 0.25, 0.5)
SENS_DISPERSION = (2.0, 5.0, 10.0, 50.0)
SENS_STRENGTH = (2.0, 5.0, 10.0, 20.0)
LAW_THETA = (-0.3, 0.0, 0.3, 0.6, 0.78)
CONC_NODES = (10, 20, 40)
CONC_THETA = (0.0, 0.6)


def _properties(cfg: RunConfig, stage: gio.OutputStage) -> None:
    digest = _digest(cfg)
    n = cfg.nodes
    law_rows = []
    for theta in LAW_THETA:
        lams = np.full(n - 1, 1.0)
        law, mom = total_strength_law(lams, theta)
        law_rows.append([theta, n - 1, 1.0, law.lam, mom.expected, mom.variance, mom.dispersion_index])
    stage.add("strength_law.csv", gio.format_table(
        ["theta", "n_edges", "lambda_edge", "lambda_total", "mean", "variance", "dispersion_index"],
        law_rows, cfg.seed, digest))

    sens_rows = []
    for s2 in SENS_SIGMA:
        for target in SENS_DISPERSION:
            th = theta_for_dispersion(s2, target, n, 0.0)
            sens_rows.append(["dispersion", s2, target, "" if th is None else th])
        for target in SENS_STRENGTH:
            th = theta_for_strength(s2, target, 0.0)
            sens_rows.append(["strength", s2, target, "" if th is None else th])
    stage.add("sensitivity.csv", gio.format_table(["target_kind", "sigma_alpha2", "target", "theta"],
                                                  sens_rows, cfg.seed, digest))

    conc_rows = []
    for k, theta in enumerate(CONC_THETA):
        for m, size in enumerate(CONC_NODES):
            rep = concentration_experiment(concentration_pattern(size), theta, cfg.reps,
                                           seed=cfg.seed * 1000 + 10 * k + m)
            conc_rows.append([size, theta, rep.quantile95, rep.bound_shape, rep.ratio, rep.v2, rep.k_const,
                              rep.rho_mean])
    stage.add("concentration.csv", gio.format_table(
        ["n", "theta", "quantile95", "bound_shape", "ratio", "v2", "k_const", "rho_mean"],
        conc_rows, cfg.seed, digest))


def _dispersion(cfg: RunConfig, stage: gio.OutputStage) -> None:
    network = gio.ingest_edges(cfg.data)
    digest = _digest(cfg, {"data": gio.file_digest(cfg.data)})
    split = None if cfg.split is None else cfg.split - 1
    rows = dispersion_diagnostics(network, split)
    names = [f.name for f in fields(rows[0])] if rows else []
    labels = network.labels
    body = []
    for r in rows:
        rec = asdict(r)
        rec["period"] += 1
        rec["i"], rec["j"] = labels[r.i], labels[r.j]
        body.append([rec[k] for k in names])
    stage.add("dispersion.csv", gio.format_table(names, body, cfg.seed, digest))


_HANDLERS = {
    "simulate": _simulate,
    "fit": _fit,
    "diagnose": _diagnose,
    "predict": _predict,
    "properties": _properties,
    "dispersion": _dispersion,
}


def run(cfg: RunConfig) -> list:
    """Execute one command and return the written paths."""
    stage = gio.OutputStage(cfg.out)
    _HANDLERS[cfg.command](cfg, stage)
    return stage.commit()


def _error_record(exc: BaseException, command) -> str:
    return json.dumps({"status": "error", "command": command, "error": type(exc).__name__,
                       "message": str(exc)}, sort_keys=True)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    try:
        cfg = resolve_config(argv)
        paths = run(cfg)
    except (GPNetError, ValueError, OSError) as exc:
        print(_error_record(exc, command), file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - unexpected failure
        print(_error_record(exc, command), file=sys.stderr)
        return 1
    print(json.dumps({"status": "ok", "command": cfg.command, "outputs": paths}, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
