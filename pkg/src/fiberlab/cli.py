"""Experiment driver: ``fiberlab <subcommand> [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Configs are flat ``key = value`` text (``#`` comments, lists comma-separated)
or the equivalent JSON object. Every run writes ``manifest.json`` and one or
more CSV tables; nothing is written unless the whole computation succeeds.
Exit status: 0 success, 2 precondition rejection, 3 numerical failure.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import NumericalFailure, PreconditionError

SUBCOMMANDS = ("fermi", "decay", "toy", "chaos", "spectrum", "mourre", "oracle")


def _floats(v) -> tuple:
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    if isinstance(v, (int, float)):
        return (float(v),)
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _linspace(v) -> tuple:
    """``a:b:n`` expands to ``n`` equispaced values; anything else is a list."""
    if isinstance(v, str) and ":" in v:
        a, b, n = v.split(":")
        return tuple(float(x) for x in np.linspace(float(a), float(b), int(n)))
    return _floats(v)


# key -> (parser, default)
SCHEMA = {
    "family": (str, "gaussian"),
    "d": (int, 1),
    "ell": (float, 1.0),
    "sigma2": (float, 1.0),
    "lam": (float, 0.3),
    "k": (float, 1.0),
    "k_values": (_linspace, "0.5:2.0:7"),
    "s_list": (_floats, "0.2,0.4,0.6,0.8"),
    "t_values": (_linspace, "5:15:11"),
    "E_values": (_linspace, "-0.9:4:50"),
    "k_lo": (float, 0.8),
    "k_hi": (float, 1.6),
    "M": (int, 200),
    "P": (int, 2),
    "seed": (int, 0),
    "L": (float, 2 * math.pi * 21),
    "n": (int, 1024),
    "dt": (float, 0.0),
    "xi_max": (float, 9.0),
    "dxi": (float, 0.05),
    "left_points": (_floats, ""),
    "right_points": (_floats, ""),
    "n_samples": (int, 10000),
    "n_states": (int, 200),
    "instances": (int, 50),
}


@dataclass
class ExperimentConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise PreconditionError(f"unknown subcommand {self.subcommand!r}")
        unknown = set(self.values) - set(SCHEMA)
        if unknown:
            raise PreconditionError(f"unknown config keys: {sorted(unknown)}")
        full = {}
        for key, (parse, default) in SCHEMA.items():
            raw = self.values.get(key, default)
            try:
                full[key] = parse(raw)
            except (TypeError, ValueError) as exc:
                raise PreconditionError(f"bad value for {key}: {raw!r}") from exc
        self.values = full

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, **{k: list(v) if isinstance(v, tuple) else v
                                                  for k, v in self.values.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        return cls(data.pop("subcommand"), data)

    def validate(self) -> None:
        v = self.values
        if v["lam"] < 0:
            raise PreconditionError("lam must be nonnegative")
        for key in ("M", "n", "n_samples", "n_states", "instances"):
            if v[key] < 1:
                raise PreconditionError(f"{key} must be positive")
        if v["seed"] < 0 or v["seed"] >= 2 ** 64:
            raise PreconditionError("seed must be an unsigned 64-bit integer")
        if v["dt"] < 0:
            raise PreconditionError("dt must be nonnegative (0 selects the default)")


def parse_config_text(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PreconditionError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def _model(cfg: ExperimentConfig):
    from .covariance import make_model
    return make_model(cfg["family"], cfg["d"], cfg["ell"], cfg["sigma2"])


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(x, ".17g") if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _complex_cols(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


# Each runner returns {filename: csv text}.

def run_fermi(cfg):
    from .fermi import alpha_k, beta_k, fermi_condition
    model = _model(cfg)
    rows = []
    for k in cfg["k_values"]:
        fc = fermi_condition(model, k)
        rows.append([k, alpha_k(model, k), beta_k(model, k), fc.margin, int(fc.holds)])
    return {"rates.csv": _table(["k", "alpha", "beta", "sphere_margin", "fermi_holds"], rows)}


def run_decay(cfg, threads):
    from .fermi import alpha_k, beta_k
    from .fieldgen import GridSpec
    from .flow import DecayExperimentConfig, decay_fit, ensemble_average
    model = _model(cfg)
    dc = DecayExperimentConfig(model, GridSpec(1, cfg["L"], cfg["n"]), cfg["lam"], cfg["s_list"],
                               cfg["k_lo"], cfg["k_hi"], cfg["M"], cfg["seed"],
                               dt=cfg["dt"] or None, workers=threads)
    dc.validate()
    ea = ensemble_average(dc)
    m = ea.normalized()
    rows, fits = [], []
    for i, k in enumerate(ea.modes):
        a, b = alpha_k(model, k), beta_k(model, k)
        for j, s in enumerate(ea.s):
            err = ea.stderr[i, j] / abs(ea.u0_hat[i])
            rows.append([float(k), float(s), *_complex_cols(m[i, j]), float(err),
                         float(np.log(abs(m[i, j]))), -float(s) * a])
        variable = "s" if cfg["lam"] > 0 else "t"
        try:
            f = decay_fit(ea, float(k), variable)
            fits.append([float(k), a, b, f.alpha, f.beta, f.alpha_err, f.beta_err])
        except NumericalFailure:
            fits.append([float(k), a, b, math.nan, math.nan, math.nan, math.nan])
    return {
        "modes.csv": _table(["k", "s", "m_re", "m_im", "stderr", "log_abs_m", "predicted_log_abs_m"], rows),
        "fits.csv": _table(["k", "alpha_k", "beta_k", "alpha_fit", "beta_fit", "alpha_err", "beta_err"], fits),
    }


def run_toy(cfg):
    from .toy import (correlation, fit_log_rate, mc_correlation, mc_rate, resonant_pairing,
                      toy_resonance)
    model = _model(cfg)
    lam, ts = cfg["lam"], np.asarray(cfg["t_values"])
    left, right = cfg["left_points"], cfg["right_points"]
    exact = np.array([correlation(model, left, right, lam, t) for t in ts])
    mc = mc_correlation(model, lam, ts, cfg["M"], cfg["seed"], left, right)
    mean, err = mc.mean, mc.stderr
    series = [[float(t), *_complex_cols(e), *_complex_cols(m), float(s)]
              for t, e, m, s in zip(ts, exact, mean, err)]
    res = toy_resonance(model, lam)
    closed = fit_log_rate(ts, exact)
    mcr = mc_rate(mc, n_blocks=min(20, cfg["M"])) if cfg["M"] >= 2 else None
    rates = [["closed_form_fit", closed.rate, 0.0], ["lam2_alpha_circ", lam * lam * res.alpha_circ, 0.0]]
    if mcr is not None:
        rates.append(["monte_carlo_fit", mcr.rate, mcr.stderr])
    pairs = []
    for pts in dict.fromkeys([(), (0.0,), tuple(left), tuple(right)]):
        for sign in (1, -1):
            pairs.append([sign, " ".join(format(x, ".17g") for x in pts),
                          *_complex_cols(resonant_pairing(model, lam, sign, pts))])
    return {
        "correlation.csv": _table(["t", "exact_re", "exact_im", "mc_re", "mc_im", "mc_stderr"], series),
        "rates.csv": _table(["estimate", "rate", "stderr"], rates),
        "pairings.csv": _table(["sign", "points", "value_re", "value_im"], pairs),
    }


def run_chaos(cfg):
    from .chaos import ChaosGrid, FockSpace, evolve_truncated, first_order_coefficient
    model = _model(cfg)
    lam, k = cfg["lam"], cfg["k"]
    if lam <= 0:
        raise PreconditionError("the chaos run needs lam > 0")
    space = FockSpace(model, ChaosGrid(cfg["xi_max"], cfg["dxi"]))
    s = np.asarray(cfg["s_list"])
    ev = evolve_truncated(space, k, lam, s / lam ** 2, cfg["P"], cfg["dt"] or 0.02)
    rows = [[float(si), float(t), *_complex_cols(u), float(nm)]
            for si, t, u, nm in zip(s, ev.times, ev.vacuum, ev.norms)]
    nu1 = first_order_coefficient(model, k)
    return {
        "vacuum.csv": _table(["s", "t", "u0_re", "u0_im", "norm"], rows),
        "nu1.csv": _table(["k", "nu1_re", "nu1_im"], [[k, *_complex_cols(nu1)]]),
    }


def run_spectrum(cfg):
    from .spectral import ac_density, nu_k
    model = _model(cfg)
    d, k = cfg["d"], cfg["k"]
    kv = np.array([k] + [0.0] * (d - 1))
    rows = [[E, ac_density(model.spectral_density, kv, E, d)] for E in cfg["E_values"] if E > -k * k]
    mass = nu_k(model.spectral_density, kv, math.inf, d) if d == 1 else math.nan
    return {"density.csv": _table(["E", "density"], rows),
            "mass.csv": _table(["k", "total_mass", "C0_at_0"], [[k, mass, model.variance]])}


def run_mourre(cfg):
    from .fieldgen import GridSpec
    from .mourre import (chi_constraints, commutator_form, grad_sum_samples, lipschitz_insertion_check,
                         random_smooth_kernel)
    rng = np.random.default_rng(cfg["seed"])
    cons = chi_constraints()
    lip = lipschitz_insertion_check(rng, n_samples=cfg["n_samples"] * 10)
    gs = grad_sum_samples(rng, n_samples=cfg["n_samples"])
    grid = GridSpec(1, 60.0, 256)
    margins = []
    for i in range(cfg["n_states"]):
        p = 1 + i % 2
        phi = random_smooth_kernel(rng, grid, p)
        f = commutator_form(p, cfg["k"], grid, phi)
        margins.append(f.margin / f.h1_norm2)
    rows = [[name, float(val)] for name, val in cons.__dict__.items()]
    rows += [["lipschitz_max_ratio", lip], ["grad_sum_min", float(gs.min())],
             ["grad_sum_max", float(gs.max())], ["commutator_min_margin_over_h1", float(min(margins))]]
    return {"summary.csv": _table(["quantity", "value"], rows)}


def run_oracle(cfg):
    from .covariance import verify_consistency
    from .finomega import (big_torus_datum, check_fibration, compare_atoms, exact_spectral_measure,
                           pushforward_spectral_measure, random_model)
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    for i in range(cfg["instances"]):
        N = int(rng.integers(4, 33))
        model = random_model(rng, N, float(rng.uniform(0.2, 1.0)))
        lam, t = float(rng.uniform(0, 1)), float(rng.uniform(0, 5))
        chk = check_fibration(model, big_torus_datum(model, 2, rng), lam, t)
        k = float(rng.uniform(-math.pi / model.L, math.pi / model.L))
        phi = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        atoms = compare_atoms(exact_spectral_measure(model, phi, k), pushforward_spectral_measure(model, phi, k))
        rows.append([i, N, lam, t, chk.residual, atoms])
    out = {"fibration.csv": _table(["instance", "N", "lam", "t", "residual", "atom_discrepancy"], rows)}
    if cfg["d"] == 1:
        rep = verify_consistency(_model(cfg), 0.05, 40.0 * cfg["ell"])
        out["covariance.csv"] = _table(["check", "value"], [[k, float(v)] for k, v in rep.as_dict().items()])
    return out


def run(config: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    """Compute every table, then write them and the manifest atomically."""
    config.validate()
    t0 = time.perf_counter()
    name = config.subcommand
    tables = run_decay(config, threads) if name == "decay" else globals()[f"run_{name}"](config)
    manifest = {
        "config": config.to_dict(),
        "seed": config["seed"],
        "library": "fiberlab",
        "version": __version__,
        "numpy": np.__version__,
        "wall_time_s": time.perf_counter() - t0,
        "files": sorted(tables),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    files = dict(tables)
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    for fname, text in files.items():
        _atomic_write(out_dir / fname, text)
    return manifest


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _limit_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


@click.group()
@click.version_option(__version__)
def main():
    """Numerical experiments for random Schroedinger operators fibered over quasi-momentum."""


def _make_command(name: str):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True)
    @click.option("--seed", type=int, default=None, help="Overrides the config seed.")
    @click.option("--threads", type=int, default=1, show_default=True, help="Affects speed only.")
    def cmd(config_path, out_dir, seed, threads):
        try:
            values = parse_config_text(Path(config_path).read_text()) if config_path else {}
            if seed is not None:
                values["seed"] = seed
            if threads < 1:
                raise PreconditionError("--threads must be positive")
            _limit_threads(threads)
            run(ExperimentConfig(name, values), Path(out_dir), threads)
        except (PreconditionError, json.JSONDecodeError) as exc:
            click.echo(f"precondition rejected: {exc}", err=True)
            sys.exit(2)
        except NumericalFailure as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)
        click.echo(f"wrote {out_dir}")

    cmd.__doc__ = f"Run the {name} experiment."
    return main.command(name)(cmd)


for _name in SUBCOMMANDS:
    _make_command(_name)


if __name__ == "__main__":
    main()
