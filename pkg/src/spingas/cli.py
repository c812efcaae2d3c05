"""Scenario runner: parse a TOML scenario, dispatch, write CSV + JSON.

Scenario files are sectioned TOML with explicit unit suffixes in key
names (CGS).  Output files are deterministic: identical inputs and seed
give byte-identical CSV bodies (floats printed with 17 significant
digits, JSON keys sorted).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import bosonic, diffmodes, kinetics, manybody, meanfield
from .errors import ConfigError, SpinGasError
from .params import FieldSchedule, PhysicalConfig, derive_rates

KINDS = ("rates", "meanfield", "twomode", "multimode",
         "manybody-single", "manybody-double", "kinetics")

_PHYSICAL_KEYS = {
    "nuclear_spin": "nuclear_spin",
    "n_a_per_cm3": "n_a",
    "n_b_per_cm3": "n_b",
    "p_a": "p_a",
    "p_b": "p_b",
    "sigma_cm2": "sigma",
    "v_T_cm_per_s": "v_T",
    "phi_mean_rad": "phi_mean",
    "phi_sq_rad2": "phi_sq",
    "phi_std_rad": "phi_std",
    "g_a_rad_per_s_G": "g_a",
    "g_b_rad_per_s_G": "g_b",
    "sigma_sr_cm2": "sigma_sr",
    "sigma_sd_cm2": "sigma_sd",
    "v_a_cm_per_s": "v_a",
    "D_a_cm2_per_s": "D_a",
    "D_b_cm2_per_s": "D_b",
    "R_cm": "R",
    "T_b_inverse_per_s": "T_b_inverse",
    "B_G": "B",
    "v_sigma_phi_cm3_per_s": "v_sigma_phi",
    "k_se_cm3_per_s": "k_se",
    "gamma_per_s": "gamma",
    "n_bar_a": "n_bar_a",
}

_SOLVER_KEYS = {"dt_s", "t_end_s", "n_max", "n_modes", "n_noble_modes",
                "record_every", "seed", "seeds"}
_INITIAL_KEYS = {"kind", "excitations", "squeeze_db"}
_MANYBODY_KEYS = {"n_alkali", "n_noble", "phi_mean_rad", "phi_std_rad", "steps",
                  "b_z_phase", "matrix", "clamp", "initial", "record_every"}
_KINETICS_KEYS = {"n_samples", "n_alkali", "n_noble", "L_cm", "sigma_cm2",
                  "v_T_cm_per_s", "tau_window_s", "coarse_length_cm", "n_bins"}
_SCHEDULE_KEYS = {"t_start_s", "B_G"}
_TOP_KEYS = {"kind", "description", "physical", "solver", "initial", "manybody",
             "kinetics", "schedule"}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _reject_unknown(section: dict, allowed, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'")


def load_scenario(path: Path, overrides=()) -> dict:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    for item in overrides:
        key, _, raw = item.partition("=")
        if not raw:
            raise ConfigError(f"--set needs key=value, got '{item}'")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"--set {key}: cannot parse value '{raw}'") from exc
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    _reject_unknown(doc, _TOP_KEYS, path.name)
    if doc.get("kind") not in KINDS:
        raise ConfigError(f"scenario 'kind' must be one of {KINDS}")
    return doc


def physical_from_scenario(doc: dict) -> PhysicalConfig:
    section = doc.get("physical")
    if section is None:
        raise ConfigError("scenario needs a [physical] section")
    _reject_unknown(section, _PHYSICAL_KEYS, "physical")
    return PhysicalConfig(**{_PHYSICAL_KEYS[k]: v for k, v in section.items()})


def _resolve_field(value, rates):
    """Numeric B, or 'comp' / 'comp+<x>J' magic values."""
    if isinstance(value, str):
        if value == "comp":
            return rates.B_comp
        if value.startswith("comp+") and value.endswith("J"):
            mult = float(value[5:-1])
            return rates.B_comp + mult * rates.J / (rates.g_a / rates.q - rates.g_b)
        raise ConfigError(f"cannot parse field value '{value}'")
    return float(value)


def schedule_from_scenario(doc: dict, rates) -> FieldSchedule:
    entries = doc.get("schedule")
    if not entries:
        B = doc.get("physical", {}).get("B_G", 0.0)
        return FieldSchedule(((0.0, _resolve_field(B, rates)),))
    segs = []
    for i, entry in enumerate(entries):
        _reject_unknown(entry, _SCHEDULE_KEYS, f"schedule[{i}]")
        t = entry["t_start_s"]
        if isinstance(t, str):
            if t != "swap":
                raise ConfigError(f"cannot parse t_start_s '{t}'")
            t = math.pi / (2.0 * rates.J)
        segs.append((float(t), _resolve_field(entry["B_G"], rates)))
    return FieldSchedule(tuple(segs))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_summary(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def rates_dict(rates) -> dict:
    keys = ("q", "zeta", "k_se", "J", "Delta_c", "omega_a", "omega_b", "Delta",
            "gamma_a", "gamma", "gamma_b", "gamma_ex", "B_comp", "eta",
            "n_bar_a", "n_bar_b", "tau", "shift_a", "shift_b")
    return {k: getattr(rates, k) for k in keys}


# ---------------------------------------------------------------------------
# scenario runners
# ---------------------------------------------------------------------------

def run_rates(doc, out, args):
    cfg = physical_from_scenario(doc)
    rates = derive_rates(cfg)
    write_summary(out / "summary.json", {"kind": "rates", "rates": rates_dict(rates)})


def run_meanfield(doc, out, args):
    cfg = physical_from_scenario(doc)
    rates = derive_rates(cfg)
    solver = doc.get("solver", {})
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    initial = doc.get("initial", {})
    _reject_unknown(initial, _INITIAL_KEYS, "initial")
    schedule = schedule_from_scenario(doc, rates)
    volume = 4.0 * math.pi * cfg.R**3 / 3.0
    state = meanfield.tilted_state(rates, initial.get("excitations", 1.0), volume)
    traj = meanfield.integrate(state, rates, schedule, solver["t_end_s"],
                               solver.get("dt_s", 0.001 / rates.J),
                               record_every=solver.get("record_every", 1))
    n_a_exc, n_b_exc = meanfield.mode_populations(traj, rates, volume)
    rows = [(t, *f, *k, fp, kp, na, nb) for t, f, k, fp, kp, na, nb in zip(
        traj.t, traj.f, traj.k, traj.f_perp_sq, traj.k_perp_sq, n_a_exc, n_b_exc)]
    write_csv(out / "timeseries.csv",
              ["t_s", "f_x", "f_y", "f_z", "k_x", "k_y", "k_z",
               "f_perp_sq", "k_perp_sq", "n_exc_a", "n_exc_b"], rows)
    write_summary(out / "summary.json", {
        "kind": "meanfield", "rates": rates_dict(rates),
        "max_noble_excitation": float(np.max(n_b_exc)),
    })


def run_twomode(doc, out, args):
    cfg = physical_from_scenario(doc)
    rates = derive_rates(cfg)
    solver = doc.get("solver", {})
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    initial = doc.get("initial", {})
    _reject_unknown(initial, _INITIAL_KEYS, "initial")
    schedule = schedule_from_scenario(doc, rates)
    t_end = solver["t_end_s"]
    dt = solver.get("dt_s", 0.01 / rates.J)
    builder = lambda B: bosonic.build_two_mode(rates, B, rates.p_a, rates.p_b)

    kind = initial.get("kind", "coherent")
    summary = {"kind": "twomode", "rates": rates_dict(rates)}
    if kind == "fock":
        n0 = int(initial.get("excitations", 1))
        n_max = int(solver.get("n_max", 6))
        state = bosonic.FockDensityState.from_fock([n0, 0], n_max)
        series = bosonic.propagate_fock(state, builder, schedule, t_end, dt,
                                        record_every=solver.get("record_every", 1))
        header = ["t_s", "pop_a", "pop_b"] + [f"p_nb_{k}" for k in range(n_max + 1)]
        rows = []
        for s in series:
            pb = s.populations(1)
            rows.append((s.t, s.mean_occupation(0), s.mean_occupation(1), *pb))
        summary["final_p_nb"] = series[-1].populations(1).tolist()
    else:
        state = bosonic.GaussianModeState.vacuum(2)
        if kind == "coherent":
            state = state.displace(0, math.sqrt(initial.get("excitations", 1.0)))
        elif kind == "squeezed":
            state = state.squeeze(0, initial.get("squeeze_db", 7.0))
        elif kind != "vacuum":
            raise ConfigError(f"unknown initial kind '{kind}'")
        series = bosonic.propagate_gaussian(state, builder, schedule, t_end, dt)
        header = ["t_s", "pop_a", "pop_b", "var_x_a", "var_p_a", "var_x_b", "var_p_b",
                  "squeeze_db_x_a", "squeeze_db_p_b"]
        rows = [(s.t, s.population(0), s.population(1),
                 s.quad_variance(0, "x"), s.quad_variance(0, "p"),
                 s.quad_variance(1, "x"), s.quad_variance(1, "p"),
                 bosonic.squeezing_db(s, 0, "x"), bosonic.squeezing_db(s, 1, "p"))
                for s in series]
        summary["max_pop_b"] = float(max(r[2] for r in rows))
        summary["final_pop_b"] = float(rows[-1][2])
    write_csv(out / "timeseries.csv", header, rows)
    write_summary(out / "summary.json", summary)


def run_multimode(doc, out, args):
    cfg = physical_from_scenario(doc)
    rates = derive_rates(cfg)
    solver = doc.get("solver", {})
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    initial = doc.get("initial", {})
    _reject_unknown(initial, _INITIAL_KEYS, "initial")
    schedule = schedule_from_scenario(doc, rates)
    n_modes = int(solver.get("n_modes", 100))
    n_noble = int(solver.get("n_noble_modes", n_modes))
    basis = diffmodes.mode_basis_from_rates(rates, cfg.D_a, cfg.D_b, cfg.R,
                                            n_modes, n_noble_modes=n_noble)
    builder = lambda B: diffmodes.build_multimode_system(basis, rates, B,
                                                         rates.p_a, rates.p_b)
    kind = initial.get("kind", "vacuum")
    squeeze = initial.get("squeeze_db", 0.0) if kind == "squeezed" else 0.0
    displace = math.sqrt(initial.get("excitations", 1.0)) if kind == "coherent" else 0.0
    state = diffmodes.initial_multimode_state(basis, rates, squeeze_db_a=squeeze,
                                              displace_a=displace)
    t_end = solver["t_end_s"]
    dt = solver.get("dt_s", 0.02 / rates.J)
    series = bosonic.propagate_gaussian(state, builder, schedule, t_end, dt,
                                        validate=False)
    na = basis.n_alkali
    rows = [(s.t, s.population(na), s.quad_variance(na, "x"), s.quad_variance(na, "p"),
             bosonic.squeezing_db(s, na, "p")) for s in series]
    write_csv(out / "timeseries.csv",
              ["t_s", "pop_b0", "var_x_b0", "var_p_b0", "squeeze_db_p_b0"], rows)

    summary = {"kind": "multimode", "rates": rates_dict(rates),
               "isometry_residual": basis.isometry_residual()}
    if kind == "fock":
        # Fock transfer through the equivalent thermal-loss channel
        n0 = int(initial.get("excitations", 2))
        t_swap = math.pi / (2.0 * rates.J)
        dd0 = builder(schedule.field_at(0.0))
        u = diffmodes.uniform_alkali_vector(basis)
        from scipy.linalg import expm
        T = expm(dd0.A * t_swap)
        eta = float(abs(T[na, :na] @ u) ** 2)
        bg = diffmodes.initial_multimode_state(basis, rates)
        bg_series = bosonic.propagate_gaussian(bg, builder, schedule, t_swap,
                                               t_swap / 4, validate=False)
        n_add = max(bg_series[-1].population(na) - eta * rates.n_bar_a, 0.0)
        probs = diffmodes.fock_transfer_probabilities(eta, n_add, n0)
        summary["swap_transmissivity"] = eta
        summary["swap_added_occupation"] = n_add
        summary["p_nb0_at_swap"] = probs.tolist()
    write_summary(out / "summary.json", summary)
    (out / "basis.json").write_text(basis.to_json(indent=2, sort_keys=True) + "\n")


def run_manybody(doc, out, args, sector):
    section = doc.get("manybody")
    if section is None:
        raise ConfigError("scenario needs a [manybody] section")
    _reject_unknown(section, _MANYBODY_KEYS, "manybody")
    n_a = int(section["n_alkali"])
    n_b = int(section["n_noble"])
    phi_mean = float(section["phi_mean_rad"])
    phi_std = float(section.get("phi_std_rad", phi_mean))
    steps = int(section["steps"])
    matrix = section.get("matrix", "exact")
    clamp = bool(section.get("clamp", True))
    record_every = section.get("record_every")
    bz = section.get("b_z_phase", "si")
    if bz == "si":
        bz = phi_mean / 2.0
    elif bz == "compensated":
        bz = phi_mean / 2.0 * (1.0 - n_a / n_b)
    else:
        bz = float(bz)

    solver = doc.get("solver", {})
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    seed0 = int(args.seed if args.seed is not None else solver.get("seed", 0))
    n_seeds = int(args.seeds if args.seeds is not None else solver.get("seeds", 1))

    summary = {"kind": doc["kind"], "n_alkali": n_a, "n_noble": n_b,
               "phi_mean_rad": phi_mean, "phi_std_rad": phi_std,
               "steps": steps, "matrix": matrix, "b_z_phase_rad": bz,
               "two_j_theory_per_tau": 2.0 * manybody.exchange_rate(n_a, n_b, phi_mean),
               "seeds": list(range(seed0, seed0 + n_seeds))}
    fits = []
    for seed in summary["seeds"]:
        if sector == 1:
            series = manybody.run_single_excitation(
                n_a, n_b, phi_mean, phi_std, steps, seed,
                initial=section.get("initial", "symmetric"),
                b_z_phase=bz, matrix=matrix, clamp=clamp, record_every=record_every)
            rows = zip(series.steps, series.steps.astype(float),
                       series.f10, series.f01)
            write_csv(out / f"trajectory_seed{seed}.csv",
                      ["step", "t_over_tau", "F_10", "F_01"], rows)
            phi_sq = phi_mean**2 + phi_std**2
            try:
                two_j, contrast = manybody.fit_exchange_frequency(
                    series.steps, series.f01, summary["two_j_theory_per_tau"])
                gam = manybody.fit_envelope_decay(series.steps[1:],
                                                  (series.f10 + series.f01)[1:])
                fits.append({"seed": seed, "two_j_per_tau": two_j,
                             "contrast": contrast, "gamma_per_tau": gam,
                             "alpha": 4.0 * gam / phi_sq})
            except Exception:
                fits.append({"seed": seed, "two_j_per_tau": math.nan,
                             "contrast": math.nan, "gamma_per_tau": math.nan,
                             "alpha": math.nan})
        else:
            series = manybody.run_two_excitation(
                n_a, n_b, phi_mean, phi_std, steps, seed,
                b_z_phase=bz, matrix=matrix, clamp=clamp, record_every=record_every)
            rows = zip(series.steps, series.steps.astype(float), series.p_coincidence,
                       series.p_bunch_a, series.p_bunch_b)
            write_csv(out / f"trajectory_seed{seed}.csv",
                      ["step", "t_over_tau", "P_coincidence", "P_bunch_a", "P_bunch_b"],
                      rows)
            fits.append({"seed": seed,
                         "min_coincidence": float(series.p_coincidence.min()),
                         "max_coincidence_revival": float(
                             series.p_coincidence[len(series.p_coincidence) // 2:].max())})
    summary["fits"] = fits
    write_summary(out / "summary.json", summary)


def run_kinetics(doc, out, args):
    section = doc.get("kinetics")
    if section is None:
        raise ConfigError("scenario needs a [kinetics] section")
    _reject_unknown(section, _KINETICS_KEYS, "kinetics")
    solver = doc.get("solver", {})
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    seed = int(args.seed if args.seed is not None else solver.get("seed", 0))
    rng = np.random.default_rng(seed)
    report = kinetics.estimate_kappa_moments(
        rng,
        n_samples=int(section["n_samples"]),
        n_alkali=int(section["n_alkali"]),
        n_noble=int(section["n_noble"]),
        L=float(section["L_cm"]),
        sigma=float(section["sigma_cm2"]),
        v_T=float(section["v_T_cm_per_s"]),
        tau_window=float(section["tau_window_s"]),
        coarse_length=float(section["coarse_length_cm"]),
        n_bins=int(section.get("n_bins", 12)),
    )
    write_csv(out / "histogram.csv",
              ["r_cm", "kappa_hat", "kappa_se", "kappa_exact", "kappa_heaviside"],
              zip(report.bin_centers, report.bin_kappa_hat, report.bin_kappa_se,
                  report.bin_kappa_exact, report.bin_kappa_heaviside))
    write_summary(out / "summary.json", {"kind": "kinetics", "seed": seed,
                                         "report": report.to_dict()})


_RUNNERS = {
    "rates": run_rates,
    "meanfield": run_meanfield,
    "twomode": run_twomode,
    "multimode": run_multimode,
    "manybody-single": lambda doc, out, args: run_manybody(doc, out, args, 1),
    "manybody-double": lambda doc, out, args: run_manybody(doc, out, args, 2),
    "kinetics": run_kinetics,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spingas",
        description="Alkali / noble-gas spin-interface scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a '{kind}' scenario")
        p.add_argument("--scenario", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--seeds", type=int, default=None)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario key (dotted path, TOML value)")
    args = parser.parse_args(argv)

    try:
        doc = load_scenario(args.scenario, args.set)
        if doc["kind"] != args.command:
            raise ConfigError(
                f"scenario kind '{doc['kind']}' does not match subcommand '{args.command}'")
        out = args.out if args.out is not None else Path(f"out-{args.command}")
        out.mkdir(parents=True, exist_ok=True)
        _RUNNERS[args.command](doc, out, args)
    except SpinGasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
