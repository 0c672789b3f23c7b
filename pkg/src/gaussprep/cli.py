"""Batch front end: build circuits, count gates, simulate, emit tables.

Four subcommands cover the reporting pipelines:

  gaussprep prep1d --k 4 --b 2..8 --sigma 2 --out rows.csv
  gaussprep shear --n-dims 2,3,4 --k 4 --mass 1.0 --out rows.json --format json
  gaussprep export --kind prep1d --k 3 --b 4 --sigma 1 --out circuit.txt
  gaussprep counts --k 2 --n-dims 2..9 --out crossover.csv

Integer flags accept single values, comma lists, and ``lo..hi`` ranges;
every invocation writes the same bytes for the same inputs.  A key=value
config file can pin the regime thresholds, the simulation qubit cap
(default 24, overridable with ``GAUSSPREP_QUBIT_CAP``), and the
simulator's pruning floor.  ``--plot`` drops a PNG next to the table.
Exit codes: 0 on success, 2 on bad arguments, 3 when ``--strict`` refuses
a parameter point that exceeds the qubit cap.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from typing import Any, Callable, Sequence

import click
import numpy as np

from . import simulate as simulate_mod
from .angles import SIGMA_HI, SIGMA_LO
from .baseline import baseline_cnot_formulas
from .circuit import export_circuit
from .prep1d import Kw1dConfig, build_kw1d
from .reference import (
    CovarianceSpec,
    GaussianSpec1D,
    exact_xi_state,
    fidelity as state_fidelity,
    ldlt,
    optimal_state_nd,
    scalar_field_covariance,
)
from .shear import ShearPlan, build_shear, frac_bits, shear_cnot_bound, shear_state
from .simulate import simulate

DEFAULT_QUBIT_CAP = 24
_CONFIG_KEYS = ("sigma_lo", "sigma_hi", "qubit_cap", "prune_floor")


def _parse_int_values(text: str, name: str) -> list[int]:
    """Accept '4', '2,4,6', and '2..8' (inclusive)."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if ".." in part:
                lo_s, hi_s = part.split("..", 1)
                lo, hi = int(lo_s), int(hi_s)
                if hi < lo:
                    raise ValueError
                values.extend(range(lo, hi + 1))
            else:
                values.append(int(part))
        except ValueError:
            raise click.UsageError(f"cannot parse --{name} value {part!r}")
    return values


def _parse_float_values(text: str, name: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",")]
    except ValueError:
        raise click.UsageError(f"cannot parse --{name} value {text!r}")


def _load_config(path: str | None) -> dict[str, float]:
    if path is None:
        return {}
    out: dict[str, float] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.UsageError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise click.UsageError(
                    f"{path}:{lineno}: unknown key {key!r} (known: "
                    f"{', '.join(_CONFIG_KEYS)})"
                )
            try:
                out[key] = float(value.strip())
            except ValueError:
                raise click.UsageError(f"{path}:{lineno}: bad number {value!r}")
    return out


def _apply_config(config: dict[str, float]) -> tuple[tuple[float, float], int]:
    """Resolve thresholds and qubit cap; set the pruning floor globally."""
    thresholds = (
        config.get("sigma_lo", SIGMA_LO),
        config.get("sigma_hi", SIGMA_HI),
    )
    cap = int(config.get("qubit_cap", DEFAULT_QUBIT_CAP))
    env_cap = os.environ.get("GAUSSPREP_QUBIT_CAP")
    if env_cap is not None:
        try:
            cap = int(env_cap)
        except ValueError:
            raise click.UsageError(
                f"GAUSSPREP_QUBIT_CAP must be an integer, got {env_cap!r}"
            )
    if "prune_floor" in config:
        simulate_mod.PRUNE_FLOOR = config["prune_floor"]
    return thresholds, cap


def _write_rows(
    rows: list[dict[str, Any]],
    fields: Sequence[str],
    fmt: str,
    out: str,
    command: str,
) -> None:
    if fmt == "json":
        payload = {"command": command, "rows": [
            {name: row[name] for name in fields} for row in rows
        ]}
        text = json.dumps(payload, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({name: row[name] for name in fields})
        text = buf.getvalue()
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)


def _figure_path(out: str) -> str:
    if out == "-":
        raise click.UsageError("--plot needs --out pointing at a file")
    root, _ = os.path.splitext(out)
    return root + ".png"


def _cap_or_skip(needed: int, cap: int, strict: bool, what: str) -> bool:
    """True when simulation may proceed; warns (or exits 3) otherwise."""
    if needed <= cap:
        return True
    message = (
        f"{what} needs {needed} qubits, above the cap of {cap}; "
        "emitting counts only"
    )
    if strict:
        click.echo(f"error: {message}", err=True)
        sys.exit(3)
    click.echo(f"warning: {message}", err=True)
    return False


_COMMON = [
    click.option("--out", default="-", show_default=True,
                 help="Output path, or - for stdout."),
    click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
                 default="csv", show_default=True),
    click.option("--count-only", is_flag=True,
                 help="Skip all simulation; emit gate counts only."),
    click.option("--plot", is_flag=True,
                 help="Also render a PNG figure next to --out."),
    click.option("--config", "config_path", default=None,
                 help="key=value file: sigma_lo, sigma_hi, qubit_cap, prune_floor."),
    click.option("--strict", is_flag=True,
                 help="Exit 3 instead of degrading when the qubit cap is hit."),
]


def _common(fn: Callable) -> Callable:
    for option in reversed(_COMMON):
        fn = option(fn)
    return fn


@click.group()
def main() -> None:
    """Gaussian-state circuit synthesis and resource reporting."""


@main.command("prep1d")
@click.option("--k", "k_text", default="4", show_default=True,
              help="State qubits; accepts lists and lo..hi ranges.")
@click.option("--b", "b_text", default="6", show_default=True,
              help="Angle-register bits; accepts lists and ranges.")
@click.option("--sigma", "sigma_text", default=None,
              help="Width(s) in lattice units; comma list.")
@click.option("--mu", type=float, default=-0.5, show_default=True)
@click.option("--physical-scaling", is_flag=True,
              help="Set sigma = scale * 2^(k/2) per point instead of --sigma.")
@click.option("--scale", type=float, default=1.0, show_default=True,
              help="Width prefactor for --physical-scaling.")
@_common
def cmd_prep1d(
    k_text: str,
    b_text: str,
    sigma_text: str | None,
    mu: float,
    physical_scaling: bool,
    scale: float,
    out: str,
    fmt: str,
    count_only: bool,
    plot: bool,
    config_path: str | None,
    strict: bool,
) -> None:
    """Recursive 1D preparation: per-level regimes, counts, fidelity."""
    if physical_scaling and sigma_text is not None:
        raise click.UsageError("--sigma and --physical-scaling are exclusive")
    thresholds, cap = _apply_config(_load_config(config_path))
    k_values = _parse_int_values(k_text, "k")
    b_values = _parse_int_values(b_text, "b")
    sigmas = None if sigma_text is None else _parse_float_values(sigma_text, "sigma")
    rows: list[dict[str, Any]] = []
    for k in k_values:
        sigma_list = [scale * 2 ** (k / 2)] if physical_scaling else (sigmas or [1.0])
        for b in b_values:
            for sigma in sigma_list:
                try:
                    config = Kw1dConfig(
                        spec=GaussianSpec1D(mu=mu, sigma=sigma),
                        k=k,
                        b=b,
                        thresholds=thresholds,
                    )
                    circ, traces = build_kw1d(config)
                except ValueError as exc:
                    raise click.UsageError(str(exc))
                fidelity = None
                if not count_only and _cap_or_skip(
                    circ.n_qubits, cap, strict, f"prep1d k={k} b={b}"
                ):
                    target = exact_xi_state(config.spec, k)
                    final = simulate(circ)
                    overlap = 0.0
                    for key, amp in final.amplitudes.items():
                        if key >> k == 0:
                            overlap += (amp * target[key]).real
                    fidelity = float(overlap**2)
                rows.append({
                    "k": k,
                    "b": b,
                    "sigma": sigma,
                    "mu": mu,
                    "regimes": "/".join(t.regime for t in traces),
                    "cnot_kw": circ.cnot_count(),
                    "cnot_exponential_formula": baseline_cnot_formulas(
                        k, "generic_real"
                    ),
                    "total_qubits": circ.n_qubits,
                    "fidelity": fidelity,
                })
    fields = ("k", "b", "sigma", "mu", "regimes", "cnot_kw",
              "cnot_exponential_formula", "total_qubits", "fidelity")
    _write_rows(rows, fields, fmt, out, "prep1d")
    if plot:
        from .plotting import render_prep1d_figure

        render_prep1d_figure(rows, _figure_path(out))


def _covariance_points(
    covariance_path: str | None,
    n_text: str,
    mass: float,
    scale: float,
) -> list[CovarianceSpec]:
    if covariance_path is not None:
        with open(covariance_path, encoding="utf-8") as handle:
            payload = json.load(handle)
        try:
            return [CovarianceSpec(
                mu_vec=np.asarray(payload["mu_vec"], dtype=float),
                sigma_mat=np.asarray(payload["sigma_mat"], dtype=float),
            )]
        except (KeyError, ValueError) as exc:
            raise click.UsageError(f"bad covariance file: {exc}")
    points = []
    for n in _parse_int_values(n_text, "n-dims"):
        if n < 2:
            raise click.UsageError("--n-dims values must be at least 2")
        points.append(scalar_field_covariance(n, mass, scale))
    return points


def _plan_for(cov: CovarianceSpec, k: int) -> ShearPlan:
    factors = ldlt(cov)
    offsets = np.mod(cov.mu_vec + 0.5, 1.0)
    r = max(1, frac_bits(cov.n_dims, k))
    offsets = np.mod(np.floor(offsets * (1 << r) + 0.5) / (1 << r), 1.0)
    return ShearPlan(m_mat=factors.m_mat, k=k, mean_offsets=offsets)


@main.command("shear")
@click.option("--n-dims", "n_text", default="3", show_default=True,
              help="Scalar-field sites; accepts lists and ranges.")
@click.option("--k", "k_text", default="3", show_default=True)
@click.option("--mass", type=float, default=1.0, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True,
              help="Width scale of the scalar-field covariance.")
@click.option("--covariance", "covariance_path", default=None,
              help="JSON file with mu_vec and sigma_mat (overrides --n-dims).")
@_common
def cmd_shear(
    n_text: str,
    k_text: str,
    mass: float,
    scale: float,
    covariance_path: str | None,
    out: str,
    fmt: str,
    count_only: bool,
    plot: bool,
    config_path: str | None,
    strict: bool,
) -> None:
    """Shearing transform: counts, bound, fidelity against the optimum."""
    _, cap = _apply_config(_load_config(config_path))
    rows: list[dict[str, Any]] = []
    for cov in _covariance_points(covariance_path, n_text, mass, scale):
        for k in _parse_int_values(k_text, "k"):
            try:
                plan = _plan_for(cov, k)
            except ValueError as exc:
                raise click.UsageError(str(exc))
            circ, report = build_shear(plan)
            fidelity = None
            n = cov.n_dims
            if not count_only and _cap_or_skip(
                n * k, cap, strict, f"shear N={n} k={k}"
            ):
                factors = ldlt(cov)
                product = np.ones(1)
                for i in range(n - 1, -1, -1):
                    xi = exact_xi_state(
                        GaussianSpec1D(mu=-0.5, sigma=float(np.sqrt(factors.sigma_sq[i]))),
                        k,
                    )
                    product = np.kron(product, xi)
                sheared = shear_state(product, plan)
                target = optimal_state_nd(cov, k, qubit_cap=cap)
                fidelity = state_fidelity(target, sheared)
            rows.append({
                "n_dims": n,
                "k": k,
                "r": plan.r,
                "cnot_measured": report.cnot_count,
                "cnot_bound": shear_cnot_bound(n, k, plan.r),
                "fidelity_vs_optimal": fidelity,
                "scale": scale,
                "fit_c": None,
            })
    fitted = [(r["n_dims"] / r["scale"], 1.0 - r["fidelity_vs_optimal"])
              for r in rows if r["fidelity_vs_optimal"] is not None]
    if len(fitted) >= 2:
        xs = np.array([p[0] for p in fitted])
        ys = np.array([p[1] for p in fitted])
        fit_c = float(xs @ ys / (xs @ xs))
        for row in rows:
            row["fit_c"] = fit_c
    fields = ("n_dims", "k", "r", "cnot_measured", "cnot_bound",
              "fidelity_vs_optimal", "scale", "fit_c")
    _write_rows(rows, fields, fmt, out, "shear")
    if plot:
        from .plotting import render_shear_figure

        render_shear_figure(rows, _figure_path(out))


@main.command("export")
@click.option("--kind", type=click.Choice(["prep1d", "shear"]), required=True)
@click.option("--k", type=int, default=4, show_default=True)
@click.option("--b", type=int, default=6, show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--mu", type=float, default=-0.5, show_default=True)
@click.option("--n-dims", type=int, default=3, show_default=True)
@click.option("--mass", type=float, default=1.0, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True)
@click.option("--out", default="-", show_default=True)
@click.option("--config", "config_path", default=None)
def cmd_export(
    kind: str,
    k: int,
    b: int,
    sigma: float,
    mu: float,
    n_dims: int,
    mass: float,
    scale: float,
    out: str,
    config_path: str | None,
) -> None:
    """Write one circuit in the line-based text format."""
    thresholds, _ = _apply_config(_load_config(config_path))
    try:
        if kind == "prep1d":
            circ, _ = build_kw1d(Kw1dConfig(
                spec=GaussianSpec1D(mu=mu, sigma=sigma),
                k=k,
                b=b,
                thresholds=thresholds,
            ))
        else:
            if n_dims < 2:
                raise ValueError("--n-dims must be at least 2")
            circ, _ = build_shear(_plan_for(
                scalar_field_covariance(n_dims, mass, scale), k
            ))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    text = export_circuit(circ)
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)


@main.command("counts")
@click.option("--n-dims", "n_text", default="2..9", show_default=True,
              help="Dimension sweep; accepts lists and ranges.")
@click.option("--k", "k_text", default="2", show_default=True)
@click.option("--mass", type=float, default=1.0, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True)
@_common
def cmd_counts(
    n_text: str,
    k_text: str,
    mass: float,
    scale: float,
    out: str,
    fmt: str,
    count_only: bool,
    plot: bool,
    config_path: str | None,
    strict: bool,
) -> None:
    """Crossover table: sheared pipeline vs generic real preparation."""
    _apply_config(_load_config(config_path))
    del count_only, strict  # counts never simulate
    rows: list[dict[str, Any]] = []
    for n in _parse_int_values(n_text, "n-dims"):
        if n < 2:
            raise click.UsageError("--n-dims values must be at least 2")
        cov = scalar_field_covariance(n, mass, scale)
        for k in _parse_int_values(k_text, "k"):
            plan = _plan_for(cov, k)
            _, report = build_shear(plan)
            inputs = n * baseline_cnot_formulas(k, "generic_real")
            total = report.cnot_count + inputs
            generic = 2 ** (n * k) - 2
            rows.append({
                "n_dims": n,
                "k": k,
                "r": plan.r,
                "cnot_shear": report.cnot_count,
                "cnot_inputs": inputs,
                "cnot_total": total,
                "cnot_generic": generic,
                "shear_wins": total < generic,
            })
    fields = ("n_dims", "k", "r", "cnot_shear", "cnot_inputs", "cnot_total",
              "cnot_generic", "shear_wins")
    _write_rows(rows, fields, fmt, out, "counts")
    if plot:
        from .plotting import render_counts_figure

        render_counts_figure(rows, _figure_path(out))


if __name__ == "__main__":
    main()
